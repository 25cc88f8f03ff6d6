"""Simulated critical diameters against the empirical correlation over N."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor

from .flowfield import SolverConfig, solve_steady_flow
from .geometry import DldDesign, build_post_array, critical_diameter_davis, critical_diameter_inglis
from .tracer import TracerConfig, estimate_critical_diameter

VALIDATION_CELLS_PER_GAP = 32
DEFAULT_TOLERANCE = 0.10


def _one(n, gap_um, post_diameter_um, resolution, solver, tracer, tolerance, flow=None):
    t0 = time.perf_counter()
    design = DldDesign(post_diameter_um=post_diameter_um, gap_um=gap_um, period=n)
    array = build_post_array(design)
    if flow is None:
        flow = solve_steady_flow(array, tracer.fluid, solver)
    est = estimate_critical_diameter(design, flow, resolution, config=tracer, array=array)
    davis = critical_diameter_davis(gap_um, design.epsilon)
    err = (est.midpoint_um - davis) / davis
    return {
        "n": n,
        "lower_um": est.lower_um,
        "upper_um": est.upper_um,
        "midpoint_um": est.midpoint_um,
        "davis_um": davis,
        "inglis_um": critical_diameter_inglis(gap_um, n),
        "error_pct": 100.0 * err,
        "within_tolerance": abs(err) <= tolerance,
        "traces": len(est.evaluations),
        "seconds": time.perf_counter() - t0,
    }


def validate_davis(n_values=(10, 20, 40), gap_um: float = 45.0, post_diameter_um: float = 45.0,
                   resolution: float = 0.25, solver: SolverConfig | None = None,
                   tracer: TracerConfig | None = None, tolerance: float = DEFAULT_TOLERANCE,
                   jobs: int = 1, flows: dict | None = None) -> list:
    """One row per N: simulated interval, both correlations and the relative error.

    ``flows`` may map N to an already solved field for that design, which
    is then used instead of a fresh solve.
    """
    solver = solver or SolverConfig(cells_per_gap=VALIDATION_CELLS_PER_GAP)
    tracer = tracer or TracerConfig()
    flows = flows or {}
    args = [(int(n), gap_um, post_diameter_um, resolution, solver, tracer, tolerance,
             flows.get(int(n))) for n in n_values]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
            rows = list(pool.map(_one, *zip(*args)))
    else:
        rows = [_one(*a) for a in args]
    return sorted(rows, key=lambda r: r["n"])
