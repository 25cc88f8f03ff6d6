"""Shared fixtures. Expensive artefacts (flow solves, the desk sweep) are built
once per session and handed out read-only."""

from __future__ import annotations

import time
import warnings

import pytest

from dldml.dataset import desk_sweep_config, generate_sweep, stratified_split
from dldml.flowfield import FluidProperties, SolverConfig, solve_steady_flow
from dldml.geometry import DldDesign, build_post_array
from dldml.validation import validate_davis


@pytest.fixture(scope="session")
def n6_design():
    return DldDesign(period=6)


@pytest.fixture(scope="session")
def n6_array(n6_design):
    return build_post_array(n6_design)


@pytest.fixture(scope="session")
def n6_flow(n6_array):
    """Coarse N = 6 solve; cheap enough for the tracer unit tests."""
    return solve_steady_flow(n6_array, FluidProperties(), SolverConfig(cells_per_gap=12))


@pytest.fixture(scope="session")
def desk_run():
    """The desk sweep (4 period numbers x 14 sizes) and its wall-clock time."""
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = generate_sweep(desk_sweep_config(), jobs=1)
    return ds, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_dataset(desk_run):
    return desk_run[0]


@pytest.fixture(scope="session")
def desk_split(desk_dataset):
    return stratified_split(desk_dataset.cases, ratio=0.2, seed=0)


VALIDATION_NS = (10, 20, 40)
_EXPENSIVE = {"desk_run", "desk_dataset", "desk_split", "validation_flows", "davis_validation"}


def pytest_collection_modifyitems(items):
    # anything that needs the desk sweep or the validation solves is slow
    for item in items:
        if _EXPENSIVE & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)


@pytest.fixture(scope="session")
def validation_flows():
    """cells_per_gap = 32 solves for N = 10, 20, 40 with G = D_p = 45 um, Re = 1."""
    out = {}
    for n in VALIDATION_NS:
        t0 = time.perf_counter()
        design = DldDesign(period=n)
        array = build_post_array(design)
        flow = solve_steady_flow(array, FluidProperties(), SolverConfig(cells_per_gap=32))
        out[n] = (design, array, flow, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def davis_validation(validation_flows):
    """The validation table at 0.25 um resolution and its total wall-clock time."""
    t0 = time.perf_counter()
    rows = validate_davis(VALIDATION_NS, resolution=0.25,
                          flows={n: v[2] for n, v in validation_flows.items()})
    solve_seconds = sum(v[3] for v in validation_flows.values())
    return rows, solve_seconds + time.perf_counter() - t0


# --------------------------------------------------------------------------
# acceptance criteria ledger: one PASS/FAIL line per criterion in the terminal summary

CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
