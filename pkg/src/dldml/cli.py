"""Command-line entry point: ``dldml <command> [flags]``.

Each command writes its artifacts plus ``summary.json`` into an output
directory (``--out``, else ``<root>/<command>`` where the root comes from
the config file, then ``$DLDML_OUTPUT_ROOT``, then ``./dldml-runs``).
Timestamps appear only in ``summary.json``.

Exit codes: 0 success, 2 configuration or usage, 3 solver or tracer,
4 data, 5 model.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, default_output_root
from .dataset import (flatten_for_regression, generate_sweep, load_dataset, load_split,
                      save_dataset, save_split, stratified_split, uniform_sizes,
                      write_trajectories_csv)
from .errors import ConfigurationError, DldError
from .flowfield import solve_steady_flow, speed_magnitude, write_field_csv, read_field_csv
from .geometry import (build_post_array, critical_diameter_davis, critical_diameter_inglis,
                       design_summary)
from .ml import (KINDS, evaluate, load_model, predict_mode, predict_y, save_model,
                 train_and_evaluate, write_confusion_csv, write_report)
from .ml.pipeline import partition_tables
from .plotting import confusion_heatmap, dc_comparison, speed_heatmap, trajectory_overlay
from .tracer import trace
from .validation import VALIDATION_CELLS_PER_GAP, validate_davis

log = logging.getLogger("dldml")


# --------------------------------------------------------------------------
# argument helpers


def int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def size_list(text: str) -> list:
    """Either ``lo:hi:count`` (inclusive, evenly spaced) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return list(uniform_sizes(float(lo), float(hi), int(count)))
        return [float(v) for v in text.split(",") if v.strip()]
    except (ValueError, ConfigurationError):
        raise argparse.ArgumentTypeError(f"expected lo:hi:count or a list of sizes, got {text!r}")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, command: str, args, cfg: RunConfig):
        if args.out:
            self.out = Path(args.out)
        elif cfg.output_dir:
            self.out = Path(cfg.output_dir) / command
        else:
            self.out = default_output_root() / command
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.artifacts = []
        self.results = {}
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(str(p.relative_to(self.out)))
        return p

    def finish(self, status="ok", error=None):
        summary = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "started_utc": self.started.isoformat(timespec="seconds"),
            "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "seconds": round(time.perf_counter() - self.t0, 3),
            "artifacts": sorted(set(self.artifacts)),
            "results": self.results,
        }
        if error is not None:
            summary["error"] = error
        _write_json(self.out / "summary.json", summary)


# --------------------------------------------------------------------------
# commands


def cmd_dc(args, cfg, run):
    g = args.g if args.g is not None else float(cfg.design.get("g_um", 45.0))
    n = args.n if args.n is not None else cfg.design.get("n")
    if n is None:
        raise ConfigurationError("dc needs --n (or design.n in the config)")
    if n < 1:
        raise ConfigurationError(f"period number must be at least 1, got {n}")
    values = {}
    if args.method in ("davis", "both"):
        values["davis"] = critical_diameter_davis(g, 1.0 / n)
    if args.method in ("inglis", "both"):
        values["inglis"] = critical_diameter_inglis(g, n)
    for name, v in values.items():
        print(f"{v:.3f} μm" if len(values) == 1 else f"{name}: {v:.3f} μm")
    run.results = {"g_um": g, "n": n, "dc_um": values}


def _design(args, cfg):
    return cfg.design_for(n=args.n, g_um=args.g, d_p_um=args.dp, m_columns=args.columns,
                          lateral=args.lateral)


def _solve(args, cfg, design, default_cpg=None):
    cpg = args.cells_per_gap
    if cpg is None and "cells_per_gap" not in cfg.solver:
        cpg = default_cpg
    solver = cfg.solver_config(cells_per_gap=cpg, reynolds=args.reynolds)
    array = build_post_array(design)
    return array, solve_steady_flow(array, cfg.fluid_properties(), solver)


def cmd_flow(args, cfg, run):
    design = _design(args, cfg)
    array, flow = _solve(args, cfg, design)
    write_field_csv(flow, run.path("flow.csv"))
    speed_heatmap(speed_magnitude(flow), flow.h_um,
                  f"speed, N={design.period}").save(run.path("flow.svg"))
    run.results = {"design": design_summary(design), "solver": flow.report,
                   "inlet_velocity_mps": flow.inlet_velocity,
                   "lateral_accel_mps2": flow.lateral_accel}
    print(f"solved {flow.nx}x{flow.ny} grid in {flow.report['iterations']} iterations, "
          f"divergence {flow.report['divergence_norm']:.2e}")


def cmd_render(args, cfg, run):
    h, speed, _ = read_field_csv(args.flow_csv)
    speed_heatmap(speed, h, Path(args.flow_csv).stem).save(run.path("flow.svg"))
    run.results = {"source": str(args.flow_csv), "cells": list(speed.shape)}


def cmd_trace(args, cfg, run):
    design = _design(args, cfg)
    array, flow = _solve(args, cfg, design)
    tcfg = cfg.tracer_config(dt=args.dt, lift_coefficient=args.lift,
                             release_y_um=args.release_y)
    tr = trace(design, flow, args.size, config=tcfg, array=array)
    write_trajectories_csv(run.path("trajectory.csv"), [tr])
    trajectory_overlay([(f"d = {tr.size_um:g} um ({tr.mode.value})", tr.x, tr.y)],
                       array.centers, array.radius_um,
                       bounds=(0.0, design.length_um, float(tr.y.min()) - design.pitch_um,
                               float(tr.y.max()) + design.pitch_um),
                       periodic_height=design.height_um if array.periodic_y else None,
                       title=f"N={design.period}").save(run.path("trajectory.svg"))
    run.results = {"case_id": tr.case_id, "mode": tr.mode.value,
                   "migration_ratio": tr.migration_ratio, "complete": tr.complete,
                   "samples": len(tr), "min_clearance_um": tr.min_clearance_um}
    print(f"{tr.case_id}: {tr.mode.value} (migration ratio {tr.migration_ratio:.3f})")


def cmd_sweep(args, cfg, run):
    scfg = cfg.sweep_config(n_values=args.n, sizes_um=args.sizes,
                            cells_per_gap=args.cells_per_gap)
    jobs = args.jobs or cfg.jobs

    def progress(n, results):
        ok = sum(r.included for r in results)
        print(f"N={n}: {ok}/{len(results)} cases labelled", flush=True)

    ds = generate_sweep(scfg, jobs=jobs, progress=progress)
    save_dataset(ds, run.out)
    run.artifacts += ["trajectories.csv", "modes.csv", "regression.csv", "classification.csv",
                      "sweep_report.json"]
    run.results = ds.summary()
    print(json.dumps(ds.summary()))


def cmd_split(args, cfg, run):
    ds = load_dataset(args.dataset)
    ratio = args.ratio if args.ratio is not None else cfg.split_ratio
    seed = args.seed if args.seed is not None else cfg.seed
    sp = stratified_split(ds.cases, ratio, seed)
    save_split(sp, run.path("split.json"))
    run.results = {"train": len(sp.train), "test": len(sp.test), "ratio": ratio, "seed": seed}
    print(f"train {len(sp.train)} cases, test {len(sp.test)} cases")


def _training(args, cfg):
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.training_config(folds=args.folds)


def _split_for(args, ds, cfg):
    if args.split:
        return load_split(args.split)
    return stratified_split(ds.cases, cfg.split_ratio, cfg.seed)


def _fit(kind, args, cfg, run):
    ds = load_dataset(args.dataset)
    tcfg = _training(args, cfg)
    sp = _split_for(args, ds, cfg)
    params = json.loads(args.params) if getattr(args, "params", None) else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, report = train_and_evaluate(kind, ds, sp, tcfg, params)
    if caught:
        run.results["warnings"] = sorted({str(w.message) for w in caught})
    return ds, sp, model, report


def cmd_train(args, cfg, run):
    _, _, model, report = _fit(args.model, args, cfg, run)
    save_model(model, run.path("model.json"))
    if report.cv is not None:
        _write_json(run.path("cv.json"), report.cv.to_dict())
    run.results.update(hyperparameters=model.hyperparameters, metrics=report.metrics)
    print(json.dumps({"model": model.kind, "hyperparameters": model.hyperparameters,
                      "metrics": report.metrics}, default=_jsonable))


def _emit_report(model, report, ds, sp, run):
    write_report(report, run.path("report.json"))
    if report.confusion:
        write_confusion_csv(report, run.path("confusion.csv"))
        for name, c in report.confusion.items():
            confusion_heatmap(c.matrix(), f"{model.kind}: {name}").save(
                run.path(f"confusion_{name}.svg"))
    else:
        table = flatten_for_regression(ds.cases).select_cases(sp.test)
        pred = model.predict(table.features)
        with open(run.path("test_predictions.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case_id", "x_um", "y_true_um", "y_pred_um"])
            for row in zip(table.case_ids, table.x_um, table.y_um, pred):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2])),
                            repr(float(row[3]))])
        curves = []
        for cid in list(sp.test)[:4]:
            sel = table.case_ids == cid
            curves.append((f"{cid} simulated", table.x_um[sel], table.y_um[sel]))
            curves.append((f"{cid} predicted", table.x_um[sel], pred[sel], True))
        trajectory_overlay(curves, title=f"{model.kind}: test trajectories").save(
            run.path("test_trajectories.svg"))


def cmd_evaluate(args, cfg, run):
    if args.model_file:
        ds = load_dataset(args.dataset)
        sp = _split_for(args, ds, cfg)
        model = load_model(args.model_file)
        tcfg = _training(args, cfg)
        _, train_eval, test = partition_tables(model.kind, ds, sp, tcfg)
        report = evaluate(model, {"train": train_eval, "test": test})
    else:
        if not args.model:
            raise ConfigurationError("evaluate needs --model KIND or --model-file PATH")
        ds, sp, model, report = _fit(args.model, args, cfg, run)
        save_model(model, run.path("model.json"))
    _emit_report(model, report, ds, sp, run)
    run.results.update(model=model.kind, metrics=report.metrics)
    for split_name, m in report.metrics.items():
        print(split_name, " ".join(f"{k}={v:.4f}" for k, v in m.items()))


def cmd_predict(args, cfg, run):
    model = load_model(args.model_file)
    rows = []
    if model.is_regressor:
        if args.x is None:
            raise ConfigurationError("trajectory models need --x lo:hi:count")
        xs = np.asarray(args.x)
        for s in args.size:
            y = predict_y(model, xs, s, args.n)
            rows += [(args.n, s, float(x), float(v)) for x, v in zip(xs, y)]
        header = ["n", "size_um", "x_um", "y_um"]
    else:
        labels = predict_mode(model, np.asarray(args.size), args.n)
        rows = [(args.n, s, lab.value) for s, lab in zip(args.size, labels)]
        header = ["n", "size_um", "mode"]
    with open(run.path("predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    for r in rows:
        print(",".join(str(v) for v in r))
    run.results = {"model": model.kind, "predictions": len(rows)}


def cmd_validate(args, cfg, run):
    cpg = args.cells_per_gap or cfg.solver.get("cells_per_gap", VALIDATION_CELLS_PER_GAP)
    solver = cfg.solver_config(cells_per_gap=cpg)
    g = args.g if args.g is not None else float(cfg.design.get("g_um", 45.0))
    dp = args.dp if args.dp is not None else float(cfg.design.get("d_p_um", 45.0))
    rows = validate_davis(args.n, g, dp, args.resolution, solver, cfg.tracer_config(),
                          args.tolerance / 100.0, jobs=args.jobs or cfg.jobs)
    cols = ["n", "lower_um", "upper_um", "midpoint_um", "davis_um", "inglis_um", "error_pct",
            "within_tolerance"]
    with open(run.path("dc_validation.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (bool, int)) else f"{r[c]:.6g}" for c in cols])
    ns = np.arange(min(3, min(args.n)), max(48, max(args.n)) + 1)
    dc_comparison(rows, ns, [critical_diameter_davis(g, 1 / n) for n in ns],
                  [critical_diameter_inglis(g, n) for n in ns]).save(run.path("dc_validation.svg"))
    print(f"{'N':>4} {'interval (um)':>18} {'mid':>7} {'davis':>7} {'error %':>8}")
    for r in rows:
        print(f"{r['n']:>4} [{r['lower_um']:7.3f}, {r['upper_um']:7.3f}] {r['midpoint_um']:7.3f} "
              f"{r['davis_um']:7.3f} {r['error_pct']:+8.2f}")
    run.results = {"rows": [{k: r[k] for k in cols} for r in rows],
                   "all_within_tolerance": all(r["within_tolerance"] for r in rows),
                   "tolerance_pct": args.tolerance, "cells_per_gap": cpg}


def cmd_run(args, cfg, run):
    """Sweep, split and every model, each into its own subdirectory of the output."""
    scfg = cfg.sweep_config(n_values=args.n, sizes_um=args.sizes,
                            cells_per_gap=args.cells_per_gap)
    if args.seed is not None:
        cfg.seed = args.seed
    ds = generate_sweep(scfg, jobs=args.jobs or cfg.jobs)
    save_dataset(ds, run.out / "dataset")
    sp = stratified_split(ds.cases, cfg.split_ratio, cfg.seed)
    save_split(sp, run.path("split.json"))
    tcfg = cfg.training_config(folds=args.folds)
    kinds = args.models or list(KINDS)
    run.results = {"dataset": ds.summary(), "models": {}}
    for kind in kinds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model, report = train_and_evaluate(kind, ds, sp, tcfg)
        save_model(model, run.path(f"models/{kind}.json"))
        write_report(report, run.path(f"reports/{kind}.json"))
        if report.confusion:
            write_confusion_csv(report, run.path(f"reports/{kind}_confusion.csv"))
        run.results["models"][kind] = report.metrics
        print(kind, json.dumps(report.metrics))


# --------------------------------------------------------------------------
# parser


def _design_flags(p, n_required=False):
    p.add_argument("--n", type=int, required=n_required, help="period number N (rows per period)")
    p.add_argument("--g", type=float, help="gap G between posts, um (default 45)")
    p.add_argument("--dp", type=float, help="post diameter D_p, um (default 45)")
    p.add_argument("--columns", type=int, help="posts per row across the channel (default 1)")
    p.add_argument("--lateral", choices=["periodic", "wall"], help="lateral boundary type")


def _solver_flags(p):
    p.add_argument("--cells-per-gap", type=int, help="grid cells across one gap (>= 8)")
    p.add_argument("--reynolds", type=float, help="Reynolds number on the gap (default 1)")


def _data_flags(p, split=True):
    p.add_argument("--dataset", required=True, help="dataset directory written by `sweep`")
    if split:
        p.add_argument("--split", help="split.json from `split` (default: fresh split)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration; flags override it")
    common.add_argument("--out", help="output directory for this command")
    common.add_argument("--seed", type=int, help="seed for splits and training")
    common.add_argument("--jobs", type=int, help="worker processes (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="dldml", description=(
        "DLD particle-transport simulation, datasets and surrogate models."))
    parser.add_argument("--version", action="version", version=f"dldml {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("dc", parents=[common], help="critical diameter from the correlations")
    p.add_argument("--n", type=int, help="period number N")
    p.add_argument("--g", type=float, help="gap, um (default 45)")
    p.add_argument("--method", choices=["davis", "inglis", "both"], default="davis",
                   help="correlation to evaluate (default davis)")
    p.set_defaults(func=cmd_dc)

    p = sub.add_parser("flow", parents=[common], help="solve the flow and render its speed")
    _design_flags(p)
    _solver_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("render", parents=[common], help="speed heatmap from a flow CSV")
    p.add_argument("--flow-csv", required=True, help="flow.csv written by `flow`")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("trace", parents=[common], help="trace one particle and label its mode")
    _design_flags(p)
    _solver_flags(p)
    p.add_argument("--size", type=float, required=True, help="particle diameter, um")
    p.add_argument("--release-y", type=float, help="lateral release position, um")
    p.add_argument("--dt", type=float, help="time step, s (default 1e-6)")
    p.add_argument("--lift", type=float, help="lift coefficient C_L (default 0.5)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("sweep", parents=[common], help="generate a labelled dataset")
    p.add_argument("--n", type=int_list, help="period numbers, e.g. 6,12,24,48")
    p.add_argument("--sizes", type=size_list, help="sizes, lo:hi:count or a list (um)")
    p.add_argument("--cells-per-gap", type=int, help="grid cells across one gap")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("split", parents=[common], help="stratified train/test split")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--ratio", type=float, help="test fraction (default 0.2)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="grid-search and fit one model")
    p.add_argument("--model", choices=KINDS, required=True, help="model kind to train")
    _data_flags(p)
    p.add_argument("--params", help="JSON hyperparameters; skips the grid search")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="metrics, confusion matrices, plots")
    p.add_argument("--model", choices=KINDS, help="train this kind, then evaluate it")
    p.add_argument("--model-file", help="evaluate a saved model instead")
    _data_flags(p)
    p.add_argument("--params", help="JSON hyperparameters; skips the grid search")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    p.add_argument("--model-file", required=True, help="model.json written by `train`")
    p.add_argument("--n", type=int, required=True, help="period number N")
    p.add_argument("--size", type=size_list, required=True, help="size(s), um")
    p.add_argument("--x", type=size_list, help="x positions lo:hi:count (trajectory models)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate-davis", parents=[common],
                       help="simulated critical diameters against the empirical correlation")
    p.add_argument("--n", type=int_list, default=[10, 20, 40], help="period numbers")
    p.add_argument("--resolution", type=float, default=0.25, help="size resolution, um")
    p.add_argument("--cells-per-gap", type=int, help=f"default {VALIDATION_CELLS_PER_GAP}")
    p.add_argument("--tolerance", type=float, default=10.0, help="allowed error, percent")
    p.add_argument("--g", type=float, help="gap, um (default 45)")
    p.add_argument("--dp", type=float, help="post diameter, um (default 45)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", parents=[common], help="sweep, split and train every model")
    p.add_argument("--n", type=int_list, help="period numbers")
    p.add_argument("--sizes", type=size_list, help="sizes, lo:hi:count or a list (um)")
    p.add_argument("--cells-per-gap", type=int, help="grid cells across one gap")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--models", type=lambda s: [k for k in s.split(",") if k],
                   help=f"comma-separated subset of {','.join(KINDS)}")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if getattr(args, "models", None):
            bad = set(args.models) - set(KINDS)
            if bad:
                raise ConfigurationError(f"unknown model kind(s): {sorted(bad)}")
        run = Run(args.command, args, cfg)
        args.func(args, cfg, run)
    except DldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if run is not None:
            run.finish("error", str(exc))
        return exc.exit_code
    run.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
