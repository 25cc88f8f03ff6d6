"""Acceptance criteria 1 to 10, each checked at its stated tolerance.

Every test records a PASS or FAIL line (shown in the terminal summary and
printed with ``-s``) before asserting, so a failing criterion still reports
the measured value next to its threshold.
"""

import math
import time
import warnings
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from conftest import CRITERIA
from dldml.cli import main
from dldml.errors import DataError
from dldml.flowfield import (FlowField, FluidProperties, SolverConfig, divergence_norm,
                             sample_velocity, solve_steady_flow)
from dldml.geometry import (DldDesign, build_post_array, critical_diameter_davis,
                            critical_diameter_inglis, empty_channel)
from dldml.ml import (Confusion, TrainingConfig, classification_metrics, r2_score,
                      train_and_evaluate, write_confusion_csv)
from dldml.tracer import (ModeLabel, ParticleState, advance, particle_relaxation_time,
                          steric_clearance)

G = 45.0
POSITION_TOL_UM = 1e-9


def record(num: int, ok: bool, detail: str):
    CRITERIA[num] = (bool(ok), detail)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


# --------------------------------------------------------------------------


def test_criterion_01_geometry_formulas():
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(3, 49):
        eps = float(Fraction(1, n))
        inglis = 2.0 * (n / 3.0) ** 0.5 * G * eps
        davis = 1.4 * G * math.exp(0.48 * math.log(eps))
        worst = max(worst, abs(critical_diameter_inglis(G, n) - inglis) / inglis,
                    abs(critical_diameter_davis(G, eps) - davis) / davis)
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-9 and seconds < 1.0
    record(1, ok, f"max relative error {worst:.2e} (<= 1e-9), {seconds * 1e3:.1f} ms (< 1 s)")
    assert ok


def test_criterion_02_poiseuille_channel():
    t0 = time.perf_counter()
    H = G
    flow = solve_steady_flow(empty_channel(12 * H, H), FluidProperties(),
                             SolverConfig(cells_per_gap=32), length_scale_um=H)
    x = 0.75 * flow.nx * flow.h_um
    i = int(round(x / flow.h_um))
    mean = float(np.mean(flow.u[i]))  # cells have equal width
    centre = float(sample_velocity(flow, (x, H / 2))[0])
    ratio = centre / mean
    div = divergence_norm(flow)
    seconds = time.perf_counter() - t0
    ok = abs(ratio - 1.5) <= 0.02 * 1.5 and div <= 1e-6 and seconds < 60
    record(2, ok, f"centre/mean {ratio:.4f} (1.5 +- 2%), divergence {div:.1e} (<= 1e-6), "
                  f"{seconds:.1f} s (< 60 s)")
    assert ok


def test_criterion_03_tracer_relaxation():
    u, d, dt, rho_p, mu = 1e-4, 10.0, 1e-6, 1050.0, 1e-3
    flow = FlowField.from_functions(400, 40, 1.0, lambda x, y: u + 0 * x, lambda x, y: 0 * x,
                                    periodic_y=True, inlet_velocity=u)
    # the first call compiles the kernel (once per install, cached on disk); keep that
    # one-off cost out of the integration budget but report it
    t0 = time.perf_counter()
    advance(ParticleState((20.0, 20.0), (0.0, 0.0), d, rho_p), flow, dt)
    compile_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    tau = particle_relaxation_time(d, rho_p, mu)
    steps = int(math.ceil(5 * tau / dt))
    state = ParticleState((20.0, 20.0), (0.0, 0.0), d, rho_p)
    worst = 0.0
    for k in range(1, steps + 1):
        state = advance(state, flow, dt)
        exact = u * (1 - math.exp(-k * dt / tau))
        worst = max(worst, abs(state.velocity[0] - exact) / exact)
    seconds = time.perf_counter() - t0
    ok = worst <= 0.01 and seconds < 1.0
    record(3, ok, f"max relative deviation {worst:.2e} over 5 tau_p (<= 1%), "
                  f"{seconds * 1e3:.0f} ms (< 1 s), kernel warm-up {compile_seconds:.2f} s")
    assert ok


@pytest.mark.slow
def test_criterion_04_critical_diameter_validation(davis_validation):
    rows, seconds = davis_validation
    parts = [f"N={r['n']}: [{r['lower_um']:.2f}, {r['upper_um']:.2f}] mid {r['midpoint_um']:.2f} "
             f"vs {r['davis_um']:.2f} ({r['error_pct']:+.1f}%)" for r in rows]
    ok = all(abs(r["error_pct"]) <= 10.0 for r in rows) and seconds <= 900
    record(4, ok, "; ".join(parts) + f"; {seconds:.0f} s (<= 900 s)")
    assert seconds <= 900
    for r in rows:
        assert abs(r["error_pct"]) <= 10.0, r


@pytest.mark.slow
def test_criterion_05_desk_dataset(desk_run):
    ds, seconds = desk_run
    modes = Counter(c.mode for c in ds.included())
    ok = (len(ds.cases) == 56 and seconds <= 1800 and len(ds.included()) >= 45
          and modes[ModeLabel.ZIGZAG] > 0 and modes[ModeLabel.BUMPED] > 0)
    record(5, ok, f"{len(ds.included())}/{len(ds.cases)} conclusive (>= 45), "
                  f"zigzag {modes[ModeLabel.ZIGZAG]}, bumped {modes[ModeLabel.BUMPED]}, "
                  f"{seconds:.0f} s (<= 1800 s)")
    assert ok


@pytest.mark.slow
def test_criterion_06_knn_regression_anchor(desk_dataset, desk_split):
    _, report = train_and_evaluate("knn_reg", desk_dataset, desk_split, TrainingConfig())
    r2 = report.metrics["test"]["r2"]
    ok = r2 >= 0.90
    record(6, ok, f"kNN test R2 {r2:.4f} (anchor 0.95, floor 0.90), train R2 "
                  f"{report.metrics['train']['r2']:.4f}, grid choice {report.hyperparameters}")
    assert ok


@pytest.mark.slow
def test_criterion_07_classification_anchor(desk_dataset, desk_split, tmp_path):
    reports = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for kind in ("mlp_clf", "knn_clf"):
            reports[kind] = train_and_evaluate(kind, desk_dataset, desk_split, TrainingConfig())[1]
    emitted = True
    for kind, rep in reports.items():
        rows = write_confusion_csv(rep, tmp_path / f"{kind}.csv").read_text().splitlines()[1:]
        emitted &= {r.split(",")[0] for r in rows} == {"train", "test"} and len(rows) == 8
        emitted &= set(rep.confusion) == {"train", "test"}
    acc = reports["mlp_clf"].metrics["test"]["accuracy"]
    knn = reports["knn_clf"].metrics["test"]["accuracy"]
    ok = acc >= 0.95 and emitted
    record(7, ok, f"MLP test accuracy {acc:.4f} (>= 0.95), kNN test accuracy {knn:.4f}, "
                  f"train/test confusion matrices emitted: {emitted}")
    assert ok


def test_criterion_08_metric_examples():
    checks = [
        r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0,
        r2_score([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0,
        r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == 0.5,
        classification_metrics(Confusion(tp=3, fp=1, fn=1, tn=5))
        == {"precision": 0.75, "recall": 0.75, "f1": 0.75, "accuracy": 0.8},
        set(classification_metrics(Confusion(5, 0, 0, 5)).values()) == {1.0},
    ]
    try:
        r2_score([2.0, 2.0], [1.0, 3.0])
        checks.append(False)
    except DataError:
        checks.append(True)
    ok = all(checks)
    record(8, ok, f"{sum(checks)}/{len(checks)} metric examples exact")
    assert ok


def _artifacts(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in ("summary.json", "sweep_report.json")}


@pytest.mark.slow
def test_criterion_09_reproducibility(tmp_path):
    argv = ["run", "--n", "20,40", "--sizes", "2,4,16,18", "--cells-per-gap", "8",
            "--folds", "2", "--seed", "3"]
    outs = [tmp_path / "first", tmp_path / "second"]
    for out in outs:
        assert main([*argv, "--out", str(out)]) == 0
    a, b = _artifacts(outs[0]), _artifacts(outs[1])
    kinds = {"dataset", "split.json", "models", "reports"}
    covered = {k.split("/")[0] for k in a}
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = not differing and kinds <= covered and len(a) >= 17
    record(9, ok, f"{len(a)} files compared across two runs, differing: {differing or 'none'}")
    assert ok


@pytest.mark.slow
def test_criterion_10_property_suites(desk_dataset, desk_split, davis_validation):
    failures = []
    # stratification bounds and disjointness of the desk split
    labels = desk_dataset.labels()
    train, test = set(desk_split.train), set(desk_split.test)
    if train & test or train | test != set(labels):
        failures.append("split not a partition of the conclusive cases")
    for mode in set(labels.values()):
        ids = [c for c, m in labels.items() if m == mode]
        k = sum(c in test for c in ids)
        if abs(k / len(ids) - desk_split.ratio) > 1.0 / len(ids):
            failures.append(f"{mode.value}: {k}/{len(ids)} in test")
    # steric guarantee over every stored desk trajectory point
    arrays, worst, points = {}, math.inf, 0
    for c in desk_dataset.cases:
        tr = c.trajectory
        if tr is None:
            continue
        if c.n not in arrays:
            arrays[c.n] = build_post_array(DldDesign(post_diameter_um=tr.dp_um, gap_um=tr.g_um,
                                                     period=c.n))
        clear = steric_clearance(arrays[c.n], tr.x, tr.y, tr.size_um)
        worst, points = min(worst, float(clear.min())), points + len(clear)
    if worst < -POSITION_TOL_UM:
        failures.append(f"steric overlap {worst:.2e} um")
    # D_c midpoints strictly decrease with N
    mids = [r["midpoint_um"] for r in sorted(davis_validation[0], key=lambda r: r["n"])]
    if not all(b < a for a, b in zip(mids, mids[1:])):
        failures.append(f"D_c midpoints not decreasing: {mids}")
    ok = not failures
    record(10, ok, f"split ok, {points} trajectory points with minimum clearance {worst:.2e} um, "
                   f"D_c midpoints {[round(m, 2) for m in mids]}"
                   + (f"; failures: {failures}" if failures else ""))
    assert ok
