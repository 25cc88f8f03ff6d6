"""Parametric sweeps, labelled datasets, stratified splits and their files.

A sweep solves the flow once per period number and traces every particle
size through it. Cases that do not end with a clear zigzag or bumped
label are kept in the report but excluded from the learning views.

On disk a dataset is a directory::

    trajectories.csv     every stored sample of every traced case
    modes.csv            one row per case with its label and migration ratio
    sweep_report.json    configuration, per-case status, exclusion reasons, timing
    regression.csv       x_um,size_um,n,y_um for the included cases
    classification.csv   size_um,n,mode for the included cases

``split.json`` is written next to it by :func:`save_split`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, DataError, DldError, ParseError, StratificationError
from .flowfield import FluidProperties, SolverConfig, solve_steady_flow
from .geometry import DldDesign, build_post_array
from .tracer import ModeLabel, TracerConfig, Trajectory, case_id, trace

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRAJECTORY_HEADER = ["case_id", "n", "g_um", "dp_um", "size_um", "t_s", "x_um", "y_um"]
MODES_HEADER = ["case_id", "n", "size_um", "mode", "migration_ratio"]
REGRESSION_HEADER = ["x_um", "size_um", "n", "y_um"]
CLASSIFICATION_HEADER = ["size_um", "n", "mode"]

STATUS_OK = "ok"
STATUS_INCONCLUSIVE = "inconclusive"
STATUS_INCOMPLETE = "incomplete"
STATUS_FAILED = "failed"


def uniform_sizes(lo: float, hi: float, count: int) -> tuple:
    """``count`` evenly spaced sizes from ``lo`` to ``hi`` inclusive."""
    if count < 1:
        raise ConfigurationError("need at least one particle size")
    return tuple(float(s) for s in np.linspace(lo, hi, count))


@dataclass(frozen=True)
class SweepConfig:
    n_values: tuple = (6, 12, 24, 48)
    sizes_um: tuple = uniform_sizes(1.0, 14.0, 14)
    gap_um: float = 45.0
    post_diameter_um: float = 45.0
    n_columns: int = 1
    lateral: str = "periodic"
    solver: SolverConfig = field(default_factory=SolverConfig)
    tracer: TracerConfig = field(default_factory=TracerConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "sizes_um", tuple(float(s) for s in self.sizes_um))
        if not self.n_values or not self.sizes_um:
            raise ConfigurationError("sweep needs at least one N and one size")
        if len(set(self.n_values)) != len(self.n_values):
            raise ConfigurationError("duplicate N values in sweep")
        if any(n < 2 for n in self.n_values):
            raise ConfigurationError("every N must be >= 2")
        bad = [s for s in self.sizes_um if not 0 < s < self.gap_um]
        if bad:
            raise ConfigurationError(f"particle sizes must lie in (0, G): {bad}")

    @property
    def n_cases(self) -> int:
        return len(self.n_values) * len(self.sizes_um)

    def design(self, n: int) -> DldDesign:
        return DldDesign(post_diameter_um=self.post_diameter_um,
                         gap_um=self.gap_um, period=n, n_columns=self.n_columns,
                         lateral=self.lateral)

    def to_dict(self) -> dict:
        tr = asdict(self.tracer)
        tr["fluid"] = asdict(self.tracer.fluid)
        tr["fluid"]["body_force"] = list(tr["fluid"]["body_force"])
        return {
            "n_values": list(self.n_values),
            "sizes_um": list(self.sizes_um),
            "gap_um": self.gap_um,
            "post_diameter_um": self.post_diameter_um,
            "n_columns": self.n_columns,
            "lateral": self.lateral,
            "solver": asdict(self.solver),
            "tracer": tr,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        tracer = dict(data.pop("tracer", {}))
        fluid = tracer.pop("fluid", None)
        if fluid is not None:
            fluid = dict(fluid)
            fluid["body_force"] = tuple(fluid.get("body_force", (0.0, 0.0)))
            tracer["fluid"] = FluidProperties(**fluid)
        try:
            return cls(solver=SolverConfig(**data.pop("solver", {})),
                       tracer=TracerConfig(**tracer), **data)
        except TypeError as exc:
            raise ConfigurationError(f"bad sweep configuration: {exc}") from None


def desk_sweep_config(**overrides) -> SweepConfig:
    """Four period numbers by fourteen sizes, coarse grid: minutes on a laptop."""
    return SweepConfig(**overrides)


def full_sweep_config(**overrides) -> SweepConfig:
    """Every N from 3 to 48 with 28 sizes over 1 to 14 um (1288 cases)."""
    base = dict(n_values=tuple(range(3, 49)), sizes_um=uniform_sizes(1.0, 14.0, 28))
    base.update(overrides)
    return SweepConfig(**base)


@dataclass
class CaseResult:
    case_id: str
    n: int
    size_um: float
    status: str
    mode: ModeLabel = ModeLabel.INCONCLUSIVE
    migration_ratio: float = float("nan")
    seconds: float = 0.0
    reason: str = ""
    trajectory: Trajectory | None = None

    @property
    def included(self) -> bool:
        return self.status == STATUS_OK

    @property
    def n_samples(self) -> int:
        return 0 if self.trajectory is None else len(self.trajectory)


@dataclass
class Dataset:
    config: dict
    cases: list
    flow_reports: dict = field(default_factory=dict)

    def included(self) -> list:
        return [c for c in self.cases if c.included]

    def case(self, cid: str) -> CaseResult:
        for c in self.cases:
            if c.case_id == cid:
                return c
        raise KeyError(cid)

    def labels(self) -> dict:
        """case id -> mode for the included cases."""
        return {c.case_id: c.mode for c in self.included()}

    def summary(self) -> dict:
        counts = {}
        for c in self.cases:
            counts[c.status] = counts.get(c.status, 0) + 1
        modes = {}
        for c in self.included():
            modes[c.mode.value] = modes.get(c.mode.value, 0) + 1
        return {"cases": len(self.cases), "status": counts, "modes": modes,
                "samples": sum(c.n_samples for c in self.included())}


# --------------------------------------------------------------------------
# sweep


def _label_case(traj: Trajectory, seconds: float) -> CaseResult:
    if not traj.complete:
        status, reason = STATUS_INCOMPLETE, "max_time exhausted before the outlet"
    elif traj.mode is ModeLabel.INCONCLUSIVE:
        status = STATUS_INCONCLUSIVE
        reason = f"migration ratio {traj.migration_ratio:.3f} between thresholds"
    else:
        status, reason = STATUS_OK, ""
    return CaseResult(case_id=traj.case_id, n=traj.n, size_um=traj.size_um, status=status,
                      mode=traj.mode, migration_ratio=traj.migration_ratio,
                      seconds=seconds, reason=reason, trajectory=traj)


def _run_period(config: SweepConfig, n: int):
    """Solve one design and trace all sizes through it; never raises for a single case."""
    results = []
    try:
        design = config.design(n)
        array = build_post_array(design)
        flow = solve_steady_flow(array, config.tracer.fluid, config.solver)
        flow_report = {k: flow.report[k] for k in ("iterations", "residual", "grid",
                                                   "divergence_norm", "seconds")}
        flow_report["lateral_accel"] = flow.lateral_accel
    except DldError as exc:
        log.warning("flow solve for N=%d failed: %s", n, exc)
        for s in config.sizes_um:
            results.append(CaseResult(case_id=case_id(n, s), n=n, size_um=s,
                                      status=STATUS_FAILED, reason=f"flow: {exc}"))
        return n, {"error": str(exc)}, results

    for s in config.sizes_um:
        t0 = time.perf_counter()
        try:
            traj = trace(design, flow, s, config=config.tracer, array=array)
        except DldError as exc:
            log.warning("trace N=%d d=%g failed: %s", n, s, exc)
            results.append(CaseResult(case_id=case_id(n, s), n=n, size_um=s,
                                      status=STATUS_FAILED, reason=f"trace: {exc}",
                                      seconds=time.perf_counter() - t0))
            continue
        results.append(_label_case(traj, time.perf_counter() - t0))
    return n, flow_report, results


def generate_sweep(config: SweepConfig, jobs: int = 1, progress=None) -> Dataset:
    """Run every (N, size) case of ``config``.

    ``jobs > 1`` farms whole period numbers out to worker processes (the
    flow solve dominates and is shared by all sizes of one N). Results are
    ordered by (N, size) whatever the completion order.
    """
    if jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    cases, flow_reports = [], {}
    ns = sorted(config.n_values)
    if jobs == 1 or len(ns) == 1:
        outputs = (_run_period(config, n) for n in ns)
    else:
        pool = ProcessPoolExecutor(max_workers=min(jobs, len(ns)))
        outputs = pool.map(_run_period, [config] * len(ns), ns)
    try:
        for n, report, results in outputs:
            flow_reports[str(n)] = report
            cases.extend(results)
            if progress is not None:
                progress(n, results)
    finally:
        if jobs > 1 and len(ns) > 1:
            pool.shutdown()
    cases.sort(key=lambda c: (c.n, c.size_um))
    return Dataset(config=config.to_dict(), cases=cases, flow_reports=flow_reports)


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitDataset:
    train: tuple
    test: tuple
    ratio: float
    seed: int
    stratify: str = "mode"

    def partition_of(self, cid: str) -> str:
        if cid in self.test:
            return "test"
        if cid in self.train:
            return "train"
        raise KeyError(cid)

    def to_dict(self) -> dict:
        part = {cid: "train" for cid in self.train}
        part.update({cid: "test" for cid in self.test})
        return {"format_version": FORMAT_VERSION, "seed": self.seed, "ratio": self.ratio,
                "stratify": self.stratify, "partition": dict(sorted(part.items()))}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitDataset":
        try:
            part = data["partition"]
            train = tuple(sorted(k for k, v in part.items() if v == "train"))
            test = tuple(sorted(k for k, v in part.items() if v == "test"))
            if len(train) + len(test) != len(part):
                raise DataError("partition values must be 'train' or 'test'")
            return cls(train=train, test=test, ratio=float(data["ratio"]),
                       seed=int(data["seed"]), stratify=data.get("stratify", "mode"))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed split: {exc}") from None


def _label_map(cases) -> dict:
    if isinstance(cases, Mapping):
        return {str(k): ModeLabel(v) for k, v in cases.items()}
    out = {}
    for c in cases:
        if not c.included:
            continue
        out[c.case_id] = c.mode
    return out


def stratified_split(cases, ratio: float = 0.2, seed: int = 0) -> SplitDataset:
    """Case-level split keeping each mode's test share within one case of ``ratio``.

    ``cases`` is a sequence of :class:`CaseResult` (only included cases
    take part) or a mapping from case id to label.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError("split ratio must lie in (0, 1)")
    labels = _label_map(cases)
    classes = sorted(set(labels.values()), key=lambda m: m.index)
    if len(classes) < 2:
        raise StratificationError("stratified split needs at least two classes")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in classes:
        ids = sorted(k for k, v in labels.items() if v == cls)
        if len(ids) < 2:
            raise StratificationError(f"class {cls.value} has fewer than two cases")
        order = rng.permutation(len(ids))
        n_test = int(math.floor(ratio * len(ids) + 0.5))
        n_test = min(max(n_test, 1), len(ids) - 1)
        test.extend(ids[i] for i in order[:n_test])
        train.extend(ids[i] for i in order[n_test:])
    return SplitDataset(train=tuple(sorted(train)), test=tuple(sorted(test)),
                        ratio=float(ratio), seed=int(seed))


# --------------------------------------------------------------------------
# learning views


@dataclass
class RegressionTable:
    """Column view of regression records, ordered by (N, size, t)."""

    x_um: np.ndarray
    size_um: np.ndarray
    n: np.ndarray
    y_um: np.ndarray
    case_ids: np.ndarray
    case_modes: np.ndarray  # mode index of the source case, the CV stratification key

    def __len__(self):
        return len(self.y_um)

    @property
    def features(self) -> np.ndarray:
        return np.column_stack([self.x_um, self.size_um, self.n.astype(float)])

    def subset(self, mask) -> "RegressionTable":
        return RegressionTable(*(getattr(self, f)[mask] for f in
                                 ("x_um", "size_um", "n", "y_um", "case_ids", "case_modes")))

    def select_cases(self, ids: Iterable[str]) -> "RegressionTable":
        return self.subset(np.isin(self.case_ids, list(ids)))


@dataclass
class ClassificationTable:
    size_um: np.ndarray
    n: np.ndarray
    mode: np.ndarray  # ModeLabel.index: 0 zigzag, 1 bumped
    case_ids: np.ndarray

    def __len__(self):
        return len(self.mode)

    @property
    def features(self) -> np.ndarray:
        return np.column_stack([self.size_um, self.n.astype(float)])

    def subset(self, mask) -> "ClassificationTable":
        return ClassificationTable(*(getattr(self, f)[mask] for f in
                                     ("size_um", "n", "mode", "case_ids")))

    def select_cases(self, ids: Iterable[str]) -> "ClassificationTable":
        return self.subset(np.isin(self.case_ids, list(ids)))


def _ordered_included(cases) -> list:
    return sorted((c for c in cases if c.included and c.trajectory is not None),
                  key=lambda c: (c.n, c.size_um))


def thin_indices(count: int, max_samples: int | None) -> np.ndarray:
    """Evenly spread indices keeping both ends, at most ``max_samples`` of them."""
    if max_samples is None or count <= max_samples:
        return np.arange(count)
    if max_samples < 2:
        raise ConfigurationError("max_samples must be >= 2")
    return np.unique(np.round(np.linspace(0, count - 1, max_samples)).astype(int))


def flatten_for_regression(cases, max_samples_per_case: int | None = None) -> RegressionTable:
    """One record per stored sample of every included case.

    ``max_samples_per_case`` thins each trajectory evenly in time, which
    keeps tree ensembles tractable without dropping any case.
    """
    cols = {k: [] for k in ("x", "s", "n", "y", "id", "m")}
    for c in _ordered_included(cases):
        tr = c.trajectory
        idx = thin_indices(len(tr), max_samples_per_case)
        k = len(idx)
        cols["x"].append(tr.x[idx])
        cols["y"].append(tr.y[idx])
        cols["s"].append(np.full(k, c.size_um))
        cols["n"].append(np.full(k, c.n, dtype=int))
        cols["id"].append(np.full(k, c.case_id, dtype=object))
        cols["m"].append(np.full(k, c.mode.index, dtype=int))
    if not cols["x"]:
        e = np.zeros(0)
        return RegressionTable(e, e.copy(), np.zeros(0, dtype=int), e.copy(),
                               np.zeros(0, dtype=object), np.zeros(0, dtype=int))
    return RegressionTable(np.concatenate(cols["x"]), np.concatenate(cols["s"]),
                           np.concatenate(cols["n"]), np.concatenate(cols["y"]),
                           np.concatenate(cols["id"]), np.concatenate(cols["m"]))


def flatten_for_classification(cases) -> ClassificationTable:
    inc = _ordered_included(cases)
    return ClassificationTable(
        size_um=np.array([c.size_um for c in inc], dtype=float),
        n=np.array([c.n for c in inc], dtype=int),
        mode=np.array([c.mode.index for c in inc], dtype=int),
        case_ids=np.array([c.case_id for c in inc], dtype=object),
    )


# --------------------------------------------------------------------------
# persistence

def _f(x: float) -> str:
    # repr is the shortest string that parses back to the same double
    return repr(float(x))


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def trajectory_rows(traj: Trajectory):
    head = [traj.case_id, str(traj.n), _f(traj.g_um), _f(traj.dp_um), _f(traj.size_um)]
    for t, x, y in zip(traj.t, traj.x, traj.y):
        yield head + [_f(t), _f(x), _f(y)]


def write_trajectories_csv(path, trajectories) -> None:
    rows = (r for tr in trajectories for r in trajectory_rows(tr))
    _atomic_write(Path(path), _csv_text(TRAJECTORY_HEADER, rows))


def save_dataset(dataset: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    traced = [c for c in dataset.cases if c.trajectory is not None]
    write_trajectories_csv(d / "trajectories.csv", [c.trajectory for c in traced])
    _atomic_write(d / "modes.csv", _csv_text(MODES_HEADER, (
        [c.case_id, str(c.n), _f(c.size_um), c.mode.value, _f(c.migration_ratio)]
        for c in dataset.cases)))
    reg = flatten_for_regression(dataset.cases)
    _atomic_write(d / "regression.csv", _csv_text(REGRESSION_HEADER, (
        [_f(x), _f(s), str(n), _f(y)]
        for x, s, n, y in zip(reg.x_um, reg.size_um, reg.n, reg.y_um))))
    cls = flatten_for_classification(dataset.cases)
    _atomic_write(d / "classification.csv", _csv_text(CLASSIFICATION_HEADER, (
        [_f(s), str(n), ModeLabel.ZIGZAG.value if m == 0 else ModeLabel.BUMPED.value]
        for s, n, m in zip(cls.size_um, cls.n, cls.mode))))
    report = {
        "format_version": FORMAT_VERSION,
        "config": dataset.config,
        "summary": dataset.summary(),
        "flows": dataset.flow_reports,
        "cases": [{
            "case_id": c.case_id, "n": c.n, "size_um": c.size_um, "status": c.status,
            "reason": c.reason, "seconds": c.seconds, "n_samples": c.n_samples,
            "complete": None if c.trajectory is None else bool(c.trajectory.complete),
            "min_clearance_um": None if c.trajectory is None
            else float(c.trajectory.min_clearance_um),
        } for c in dataset.cases],
    }
    _atomic_write(d / "sweep_report.json", _json_text(report))
    return d


def _read_csv(path: Path, header: list):
    """Yield (line_number, fields) after checking the header; every row must be complete."""
    if not path.exists():
        raise DataError(f"missing file {path}")
    with open(path, newline="") as fh:
        text = fh.read()
    if text and not text.endswith("\n"):
        # a writer always ends with a newline; anything else was cut short
        last = text.count("\n") + 1
        raise ParseError(f"{path.name}: file ends mid-record", line=last)
    reader = csv.reader(text.splitlines())
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError(f"{path.name}: empty file, expected header", line=1) from None
    if first != header:
        raise ParseError(f"{path.name}: expected header {','.join(header)}", line=1)
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path.name}: expected {len(header)} fields, got {len(row)}",
                             line=lineno)
        yield lineno, row


def _num(text: str, kind, path: Path, lineno: int):
    try:
        return kind(text)
    except ValueError:
        raise ParseError(f"{path.name}: bad number {text!r}", line=lineno) from None


def read_regression_csv(path) -> np.ndarray:
    """Rows of (x_um, size_um, n, y_um) as a float array."""
    path = Path(path)
    rows = [[_num(v, float, path, ln) for v in r] for ln, r in _read_csv(path, REGRESSION_HEADER)]
    return np.array(rows, dtype=float).reshape(-1, 4)


def read_classification_csv(path) -> list:
    path = Path(path)
    out = []
    for ln, (s, n, m) in _read_csv(path, CLASSIFICATION_HEADER):
        try:
            mode = ModeLabel(m)
        except ValueError:
            raise ParseError(f"{path.name}: unknown mode {m!r}", line=ln) from None
        out.append((_num(s, float, path, ln), _num(n, int, path, ln), mode))
    return out


def load_dataset(directory) -> Dataset:
    """Inverse of :func:`save_dataset`; raises instead of returning partial data."""
    d = Path(directory)
    rp = d / "sweep_report.json"
    if not rp.exists():
        raise DataError(f"missing file {rp}")
    try:
        report = json.loads(rp.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"sweep_report.json: {exc.msg}", line=exc.lineno) from None
    if report.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format {report.get('format_version')!r}")

    mp = d / "modes.csv"
    modes = {}
    for ln, (cid, n, size, mode, ratio) in _read_csv(mp, MODES_HEADER):
        try:
            label = ModeLabel(mode)
        except ValueError:
            raise ParseError(f"modes.csv: unknown mode {mode!r}", line=ln) from None
        modes[cid] = (_num(n, int, mp, ln), _num(size, float, mp, ln), label,
                      _num(ratio, float, mp, ln))

    tp = d / "trajectories.csv"
    samples, heads = {}, {}
    for ln, row in _read_csv(tp, TRAJECTORY_HEADER):
        cid = row[0]
        if cid not in heads:
            heads[cid] = (_num(row[1], int, tp, ln), _num(row[2], float, tp, ln),
                          _num(row[3], float, tp, ln), _num(row[4], float, tp, ln))
            samples[cid] = []
        samples[cid].append((_num(row[5], float, tp, ln), _num(row[6], float, tp, ln),
                             _num(row[7], float, tp, ln)))
    n_lines = 1 + sum(len(v) for v in samples.values())

    cases = []
    for entry in report["cases"]:
        cid = entry["case_id"]
        if cid not in modes:
            raise DataError(f"case {cid} missing from modes.csv")
        n, size, label, ratio = modes[cid]
        traj = None
        if entry["n_samples"]:
            got = samples.get(cid, [])
            if len(got) != entry["n_samples"]:
                raise ParseError(f"trajectories.csv: case {cid} has {len(got)} samples, "
                                 f"expected {entry['n_samples']} (truncated file?)",
                                 line=n_lines + 1)
            arr = np.array(got, dtype=float)
            _, g, dp, _ = heads[cid]
            traj = Trajectory(case_id=cid, n=n, g_um=g, dp_um=dp, size_um=size,
                              t=arr[:, 0], x=arr[:, 1], y=arr[:, 2], mode=label,
                              migration_ratio=ratio, complete=bool(entry["complete"]),
                              min_clearance_um=float(entry["min_clearance_um"]))
        cases.append(CaseResult(case_id=cid, n=n, size_um=size, status=entry["status"],
                                mode=label, migration_ratio=ratio,
                                seconds=float(entry["seconds"]), reason=entry["reason"],
                                trajectory=traj))
    extra = set(samples) - {c.case_id for c in cases}
    if extra:
        raise DataError(f"trajectories.csv has cases not in the report: {sorted(extra)[:3]}")
    return Dataset(config=report["config"], cases=cases, flow_reports=report.get("flows", {}))


def save_split(split: SplitDataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, _json_text(split.to_dict()))
    return path


def load_split(path) -> SplitDataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: {exc.msg}", line=exc.lineno) from None
    return SplitDataset.from_dict(data)
