"""Failure-resilient inference for vertically partitioned feed-forward networks.

Build a partitioned dense network over a chain of physical nodes, train it
with failout (per-batch node drops), route activations over simple and skip
hyperconnections under one of four schemes, evaluate expected accuracy over
enumerated failure scenarios, and simulate crash/repair dynamics with
heartbeat detection and bandwidth accounting.
"""

from .errors import (
    ArtifactError, CapacityError, ConfigError, DetourNetError, DimensionError,
    NumericError, UsageError, ValidationError,
)
from .evaluation import (
    AblationGrid, EvaluationReport, FailureScenario, enumerate_scenarios,
    evaluate_exact, evaluate_mc, evaluate_scenario, expected_accuracy,
    monte_carlo_accuracy, sweep,
)
from .netsim import SimConfig, SimReport, TrafficLedger, bandwidth_per_inference, run_sim
from .routing import (
    FailoutConfig, HyperWeightScheme, Scheme, assign_hyperconnection_weights,
    combine_inputs, gated_forward, sample_failout_mask, set_inference_scaling,
)
from .topology import (
    INPUT, AliveMask, DistributedModel, FailureSetting, Hyperconnection,
    PartitionPlan, PhysicalNode, SkipSpec, all_alive, build_model,
    canonical_plans, failure_setting, get_plan, mask_with_failed, reachability,
)
from .training import TrainingHistory, accuracy, train

__version__ = "0.1.0"

__all__ = [
    "AblationGrid", "AliveMask", "ArtifactError", "CapacityError", "ConfigError",
    "DetourNetError", "DimensionError", "DistributedModel", "EvaluationReport",
    "FailoutConfig", "FailureScenario", "FailureSetting", "Hyperconnection",
    "HyperWeightScheme", "INPUT", "NumericError", "PartitionPlan", "PhysicalNode",
    "Scheme", "SimConfig", "SimReport", "SkipSpec", "TrafficLedger",
    "TrainingHistory", "UsageError", "ValidationError", "accuracy", "all_alive",
    "assign_hyperconnection_weights", "bandwidth_per_inference", "build_model",
    "canonical_plans", "combine_inputs", "enumerate_scenarios", "evaluate_exact",
    "evaluate_mc", "evaluate_scenario", "expected_accuracy", "failure_setting",
    "gated_forward", "get_plan", "mask_with_failed", "monte_carlo_accuracy",
    "reachability", "run_sim", "sample_failout_mask", "set_inference_scaling",
    "sweep", "train",
]
