"""Command-line harness: train, evaluate, sweep, simulate, bandwidth, gen-data.

Every command writes a JSON report plus CSV tables into --out, and renders
the matching figure(s) next to them unless --no-plot is given. Exit codes:
0 success, 2 configuration/user error, 3 corrupt artifact or data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import artifacts, figures, nn
from .config import (
    SIM_PRESETS, echo_setting, echo_sim_config, load_config_file, resolve_dataset,
    resolve_failout, resolve_plan, resolve_setting, resolve_sim_config,
    resolve_train_config, resolve_weight_scheme,
)
from .datasets import blob_arrays, write_csv
from .errors import ArtifactError, ConfigError, DetourNetError
from .evaluation import (
    AXIS_FAILOUT_RATE, AXIS_SKIP_CONFIG, AXIS_WEIGHTS, evaluate_exact, evaluate_mc,
    sweep, weight_scheme_spread,
)
from .netsim import bandwidth_per_inference, run_sim
from .routing import (
    Scheme, assign_hyperconnection_weights, parse_scheme, set_inference_scaling,
)
from .topology import all_alive, build_model
from .training import accuracy, train


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_base_config(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _check_dims(plan, data) -> None:
    if data.features != plan.input_dim:
        raise ConfigError(
            f"dataset: {data.features} features but plan expects {plan.input_dim}")
    if data.classes != plan.classes:
        raise ConfigError(
            f"dataset: {data.classes} classes but plan expects {plan.classes}")


def cmd_train(args) -> int:
    raw = _load_base_config(args)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.precision is not None:
        raw["precision"] = args.precision
    cfg = resolve_train_config(raw)
    out = _out_dir(args)

    dtype = np.float64 if cfg["precision"] == 64 else np.float32
    plan = resolve_plan(cfg["plan"])
    scheme = parse_scheme(cfg["scheme"])
    setting = resolve_setting(cfg["failure_setting"], plan.node_count)
    failout = resolve_failout(cfg["failout"], plan.node_count)
    data = resolve_dataset(cfg["dataset"], cfg["seed"])
    _check_dims(plan, data)

    model = build_model(plan, dtype=dtype, seed=cfg["seed"])
    assign_hyperconnection_weights(
        model, resolve_weight_scheme(cfg["hyper_weights"]), setting=setting,
        rng=nn.stream_rng(cfg["seed"], "weights"))
    history = train(
        model, data.x_train, data.y_train, scheme, failout,
        epochs=cfg["epochs"], seed=cfg["seed"], batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"], optimizer=cfg["optimizer"],
        momentum=cfg["momentum"], val=(data.x_val, data.y_val))

    model_path = out / "model.json"
    artifacts.save_model(model, model_path, scheme=scheme.value,
                         extra={"config": cfg})
    results = {
        "history": history.to_dict(),
        "model": model_path.name,
        "train_accuracy": accuracy(model, data.x_train, data.y_train, scheme),
        "test_accuracy": accuracy(model, data.x_test, data.y_test, scheme),
    }
    artifacts.write_report(out / "train_report.json", "train", cfg, results,
                           seed=cfg["seed"])
    _write_rows(out / "history.csv",
                ["epoch", "loss", "train_accuracy", "val_accuracy"],
                [[row["epoch"], row["loss"], row["train_accuracy"],
                  row.get("val_accuracy", "")] for row in history.epochs])
    if not args.no_plot and history.epochs:
        figures.training_history(history.epochs,
                                 f"{plan.name} / {scheme.value}",
                                 out / "training.png")
    print(f"trained {plan.name} [{scheme.value}] -> {model_path}")
    print(f"test accuracy (all alive): {results['test_accuracy']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg_in = _load_base_config(args)
    model_path = args.model or cfg_in.get("model")
    if not model_path:
        raise ConfigError("model: required (flag --model or config key)")
    model, meta = artifacts.load_model(model_path)
    train_cfg = meta["extra"].get("config", {})

    seed = args.seed if args.seed is not None else cfg_in.get("seed", train_cfg.get("seed", 0))
    mode = args.mode or cfg_in.get("mode", "exact")
    if mode not in ("exact", "mc"):
        raise ConfigError(f"mode: {mode!r} must be 'exact' or 'mc'")
    draws = args.draws or cfg_in.get("draws", 10000)
    setting_spec = args.setting or cfg_in.get("failure_setting", "normal")
    dataset_spec = cfg_in.get("dataset") or train_cfg.get("dataset")
    if dataset_spec is None:
        raise ConfigError("dataset: not in config and the model artifact has none")
    scheme = parse_scheme(cfg_in.get("scheme", meta["scheme"]))
    scaling = bool(cfg_in.get("inference_scaling", False))

    setting = resolve_setting(setting_spec, model.n_nodes)
    data = resolve_dataset(dataset_spec, seed)
    _check_dims(model.plan, data)
    set_inference_scaling(model, setting, scaling)

    echo = {
        "model": str(model_path),
        "failure_setting": echo_setting(setting_spec),
        "mode": mode,
        "draws": int(draws),
        "seed": int(seed),
        "scheme": scheme.value,
        "inference_scaling": scaling,
        "dataset": dataset_spec,
    }
    out = _out_dir(args)
    if mode == "exact":
        report = evaluate_exact(model, setting, scheme, data.x_test, data.y_test,
                                seed=seed, workers=args.workers)
    else:
        report = evaluate_mc(model, setting, scheme, data.x_test, data.y_test,
                             draws=int(draws), seed=seed)
    artifacts.write_report(out / "evaluation.json", "evaluate", echo,
                           report.results_dict(), seed=seed,
                           timing_s=report.timing_s)
    if report.scenarios:
        _write_rows(out / "scenarios.csv",
                    ["label", "probability", "accuracy"],
                    [[r["label"], repr(r["probability"]), repr(r["accuracy"])]
                     for r in report.scenarios])
        if not args.no_plot:
            figures.scenario_accuracy(
                report.scenarios, report.chance,
                f"{setting.name} / {scheme.value}: expected "
                f"{100 * report.expected_accuracy:.2f}%",
                out / "scenarios.png")
    print(f"expected accuracy [{mode}]: {report.expected_accuracy:.4f}"
          + (f" +/- {report.stderr:.4f}" if report.stderr is not None else ""))
    return 0


def cmd_sweep(args) -> int:
    raw = _load_base_config(args)
    if args.seed is not None:
        raw["seed"] = args.seed
    axis = args.axis or raw.get("axis")
    if axis not in (AXIS_FAILOUT_RATE, AXIS_WEIGHTS, AXIS_SKIP_CONFIG):
        raise ConfigError(
            f"axis: {axis!r} must be one of failout-rate, weights, skip-config")
    raw.pop("axis", None)
    setting_names = raw.pop("eval_settings", ["normal"])
    repeats = raw.pop("repeats", 1)
    cfg = resolve_train_config(raw)
    out = _out_dir(args)

    plan = resolve_plan(cfg["plan"])
    scheme = parse_scheme(cfg["scheme"])
    data = resolve_dataset(cfg["dataset"], cfg["seed"])
    _check_dims(plan, data)
    failout = resolve_failout(cfg["failout"], plan.node_count)

    grid = sweep(
        plan, data, axis, seed=cfg["seed"], scheme=scheme,
        setting_names=list(setting_names), repeats=int(repeats),
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"], failout_rate=failout.rate,
        dtype=np.float64 if cfg["precision"] == 64 else np.float32,
        workers=args.workers)

    echo = dict(cfg)
    echo["axis"] = axis
    echo["eval_settings"] = list(setting_names)
    echo["repeats"] = int(repeats)
    artifacts.write_report(out / "sweep_report.json", "sweep", echo,
                           grid.results_dict(), seed=cfg["seed"])

    scenario_labels = []
    if grid.cells and grid.cells[0].get("scenarios"):
        first = grid.cells[0]["scenarios"][setting_names[0]]
        scenario_labels = [r["label"] for r in first]
    header = (["axis_level", "repeat", "setting", "expected_accuracy",
               "clean_accuracy"] + [f"acc[{l}]" for l in scenario_labels])
    rows = []
    for cell in grid.cells:
        for setting_name in setting_names:
            row = [cell["level"], cell["repeat"], setting_name,
                   repr(cell["expected_accuracy"][setting_name]),
                   repr(cell["clean_accuracy"])]
            per = {r["label"]: r["accuracy"]
                   for r in cell.get("scenarios", {}).get(setting_name, [])}
            row += [repr(per[l]) if l in per else "" for l in scenario_labels]
            rows.append(row)
    if axis == AXIS_WEIGHTS:
        for setting_name in setting_names:
            rows.append(["stddev", "", setting_name,
                         repr(weight_scheme_spread(grid, setting_name)), ""]
                        + [""] * len(scenario_labels))
    _write_rows(out / "sweep.csv", header, rows)

    if not args.no_plot:
        by_setting = {
            name: [c["expected_accuracy"][name] for c in grid.cells
                   if c["repeat"] == 0]
            for name in setting_names}
        figures.sweep_bars(grid.levels, by_setting,
                           f"{plan.name}: {axis} sweep", out / "sweep.png")
    print(f"sweep [{axis}] wrote {len(grid.cells)} cells -> {out / 'sweep.csv'}")
    return 0


def cmd_simulate(args) -> int:
    cfg_in = _load_base_config(args)
    model_path = args.model or cfg_in.get("model")
    if not model_path:
        raise ConfigError("model: required (flag --model or config key)")
    model, meta = artifacts.load_model(model_path)
    train_cfg = meta["extra"].get("config", {})

    sim_spec = args.sim or cfg_in.get("sim")
    if sim_spec is None:
        raise ConfigError("sim: required (preset name, path, or config object)")
    if isinstance(sim_spec, str) and sim_spec not in SIM_PRESETS \
            and sim_spec.removesuffix(".sim") not in SIM_PRESETS:
        sim_spec = load_config_file(sim_spec)
    seed = args.seed if args.seed is not None else cfg_in.get("seed", 0)
    sim = resolve_sim_config(sim_spec, model, seed)
    if args.seed is not None and sim.seed != args.seed:
        # --seed wins over a seed baked into the sim config
        sim = dataclasses.replace(sim, seed=args.seed)

    dataset_spec = cfg_in.get("dataset") or train_cfg.get("dataset")
    if dataset_spec is None:
        raise ConfigError("dataset: not in config and the model artifact has none")
    data = resolve_dataset(dataset_spec, sim.seed)
    scheme = parse_scheme(cfg_in.get("scheme", meta["scheme"]))

    out = _out_dir(args)
    trace_fh = open(out / "events.csv", "w") if args.trace else None
    try:
        if trace_fh:
            trace_fh.write("time,kind,node\n")
        report = run_sim(sim, model, scheme, data.x_test, data.y_test,
                         trace=trace_fh)
    finally:
        if trace_fh:
            trace_fh.close()

    echo = {"model": str(model_path), "sim": echo_sim_config(sim),
            "scheme": scheme.value, "dataset": dataset_spec}
    artifacts.write_report(out / "sim_report.json", "simulate", echo,
                           report.results_dict(), seed=sim.seed)
    _write_rows(out / "windows.csv",
                ["start_hours", "end_hours", "requests", "accuracy"],
                [[w["start_hours"], w["end_hours"], w["requests"],
                  "" if w["accuracy"] is None else repr(w["accuracy"])]
                 for w in report.windows])
    if not args.no_plot and report.windows:
        figures.sim_timeline(report.windows, report.availability,
                             f"{scheme.value} over {sim.horizon_hours:g} h",
                             out / "simulation.png")
    avail = ", ".join(f"{k}={v:.4f}" for k, v in sorted(report.availability.items()))
    print(f"simulated {sim.horizon_hours:g} h: availability {avail}")
    if report.requests:
        print(f"stream accuracy: {report.stream_accuracy:.4f} over "
              f"{report.requests} requests "
              f"({report.requests_lost_undetected} lost undetected)")
    return 0


def cmd_bandwidth(args) -> int:
    cfg_in = _load_base_config(args)
    plan_spec = args.plan or cfg_in.get("plan")
    if not plan_spec:
        raise ConfigError("plan: required (flag --plan or config key)")
    if isinstance(plan_spec, str) and Path(plan_spec).suffix == ".json":
        plan_spec = load_config_file(plan_spec)
    plan = resolve_plan(plan_spec)
    model = build_model(plan, seed=0)
    mask = all_alive(model.n_nodes)

    per_scheme = {s: bandwidth_per_inference(model, s, mask) for s in Scheme}
    static = per_scheme[Scheme.STATIC_SKIP]
    rows = []
    for s in Scheme:
        scalars = per_scheme[s]
        savings = (static - scalars) / static if static else 0.0
        rows.append({"scheme": s.value, "scalars": scalars,
                     "savings_vs_static": savings})
    gated_savings = next(r["savings_vs_static"] for r in rows
                         if r["scheme"] == Scheme.GATED_SKIP.value)

    out = _out_dir(args)
    echo = {"plan": plan.name if isinstance(plan_spec, str) else plan.to_dict()}
    results = {"all_alive": rows,
               "savings_percent": round(100.0 * gated_savings, 2)}
    artifacts.write_report(out / "bandwidth_report.json", "bandwidth", echo,
                           results, seed=0)
    _write_rows(out / "bandwidth.csv",
                ["scheme", "scalars", "savings_vs_static"],
                [[r["scheme"], r["scalars"], repr(r["savings_vs_static"])]
                 for r in rows])
    if not args.no_plot:
        figures.bandwidth_bars(rows, f"{plan.name}: per-inference traffic",
                               out / "bandwidth.png")
    for r in rows:
        print(f"{r['scheme']:>14}: {r['scalars']:5d} scalars "
              f"({100 * r['savings_vs_static']:6.2f}% vs static-skip)")
    return 0


def cmd_gen_data(args) -> int:
    cfg_in = _load_base_config(args)
    spec = cfg_in.get("dataset", {"kind": "blobs"})
    if spec.get("kind", "blobs") != "blobs":
        raise ConfigError("dataset.kind: gen-data only generates blobs")
    seed = args.seed if args.seed is not None else spec.get("seed", 0)
    rng = nn.stream_rng(int(seed), "data")
    x, y = blob_arrays(
        features=int(spec.get("features", 23)),
        classes=int(spec.get("classes", 12)),
        samples_per_class=int(spec.get("samples_per_class", 200)),
        spread=float(spec.get("spread", 1.0)),
        rng=rng,
        center_scale=float(spec.get("center_scale", 3.0)))
    out = _out_dir(args)
    path = out / "data.csv"
    write_csv(x, y, path)
    print(f"wrote {len(x)} rows ({x.shape[1]} features, "
          f"{int(y.max()) + 1} classes) -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detournet",
        description="Failure-resilient inference for partitioned dense networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel scenario evaluations (default 1, reproducible)")
        p.add_argument("--precision", type=int, choices=(32, 64), default=None)
        p.add_argument("--no-plot", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("train", help="train a model from a config")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="exact or Monte Carlo expected accuracy")
    common(p)
    p.add_argument("--model", help="model artifact path")
    p.add_argument("--setting", help="failure setting preset name")
    p.add_argument("--mode", choices=("exact", "mc"))
    p.add_argument("--draws", type=int, default=None, help="MC draws")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="ablation sweep over one axis")
    common(p)
    p.add_argument("--axis", choices=(AXIS_FAILOUT_RATE, AXIS_WEIGHTS,
                                      AXIS_SKIP_CONFIG))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="discrete-event crash/repair simulation")
    common(p)
    p.add_argument("--model", help="model artifact path")
    p.add_argument("--sim", help="sim preset name or JSON path")
    p.add_argument("--trace", action="store_true",
                   help="dump the event trace as time,kind,node lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bandwidth", help="per-scheme traffic table for a plan")
    common(p)
    p.add_argument("--plan", help="plan preset name or JSON path")
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("gen-data", help="emit a synthetic blobs CSV")
    common(p)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 3
    except DetourNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
