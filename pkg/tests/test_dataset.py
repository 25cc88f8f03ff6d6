import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dldml.dataset import (STATUS_FAILED, STATUS_INCONCLUSIVE, STATUS_OK, CaseResult, Dataset,
                           SweepConfig, desk_sweep_config, flatten_for_classification,
                           flatten_for_regression, generate_sweep, load_dataset, load_split,
                           full_sweep_config, read_classification_csv, read_regression_csv,
                           save_dataset, save_split, stratified_split, thin_indices,
                           uniform_sizes)
from dldml.errors import ConfigurationError, DataError, ParseError, StratificationError
from dldml.flowfield import SolverConfig
from dldml.tracer import ModeLabel, Trajectory, case_id


def _case(n, size, mode, samples=5, status=STATUS_OK, seed=0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(1e-6, 2e-6, samples))
    x = np.sort(rng.uniform(0, 900, samples))
    y = rng.normal(30, 10, samples)
    cid = case_id(n, size)
    tr = Trajectory(cid, n, 45.0, 45.0, size, t, x, y, mode=mode, migration_ratio=0.1,
                    complete=True, min_clearance_um=0.25)
    return CaseResult(cid, n, size, status, mode, 0.1, 0.5, "", tr)


def _labels(n_zig, n_bump):
    out = {f"z{i:03d}": ModeLabel.ZIGZAG for i in range(n_zig)}
    out.update({f"b{i:03d}": ModeLabel.BUMPED for i in range(n_bump)})
    return out


# --------------------------------------------------------------------------
# configuration


def test_uniform_sizes_spacing():
    s = uniform_sizes(1, 14, 28)
    assert len(s) == 28 and s[0] == 1.0 and s[-1] == 14.0
    assert np.diff(s) == pytest.approx(np.full(27, 13 / 27))


def test_desk_and_full_cardinality():
    assert desk_sweep_config().n_cases == 56
    assert full_sweep_config().n_cases == 46 * 28 == 1288


@pytest.mark.parametrize("kwargs", [dict(sizes_um=(1.0, 45.0)), dict(n_values=(1,)),
                                    dict(n_values=(6, 6)), dict(sizes_um=())])
def test_sweep_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SweepConfig(**kwargs)


def test_sweep_config_dict_round_trip():
    cfg = SweepConfig(n_values=(5, 9), sizes_um=(2.0, 3.5), solver=SolverConfig(cells_per_gap=10))
    again = SweepConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


# --------------------------------------------------------------------------
# splitting


def test_split_exact_proportions():
    sp = stratified_split(_labels(60, 40), ratio=0.2, seed=4)
    test = Counter(cid[0] for cid in sp.test)
    assert test == {"z": 12, "b": 8}
    assert len(sp.train) == 80


def test_split_is_deterministic_and_seed_dependent():
    lab = _labels(30, 20)
    assert stratified_split(lab, seed=1) == stratified_split(lab, seed=1)
    assert stratified_split(lab, seed=1).test != stratified_split(lab, seed=2).test


def test_split_partition_law():
    lab = _labels(17, 9)
    sp = stratified_split(lab, 0.3, seed=0)
    assert set(sp.train).isdisjoint(sp.test)
    assert set(sp.train) | set(sp.test) == set(lab)


@settings(max_examples=60, deadline=None)
@given(n_zig=st.integers(2, 80), n_bump=st.integers(2, 80),
       ratio=st.floats(0.05, 0.5), seed=st.integers(0, 10_000))
def test_split_stratification_bound(n_zig, n_bump, ratio, seed):
    sp = stratified_split(_labels(n_zig, n_bump), ratio, seed)
    for prefix, count in (("z", n_zig), ("b", n_bump)):
        k = sum(1 for c in sp.test if c[0] == prefix)
        assert abs(k / count - ratio) <= 1.0 / count
        assert 1 <= k <= count - 1


def test_split_errors():
    with pytest.raises(StratificationError):
        stratified_split(_labels(10, 0))
    with pytest.raises(StratificationError):
        stratified_split(_labels(10, 1))
    with pytest.raises(ConfigurationError):
        stratified_split(_labels(10, 10), ratio=1.0)


def test_split_uses_only_included_cases():
    cases = [_case(6, 1.0, ModeLabel.ZIGZAG), _case(6, 2.0, ModeLabel.ZIGZAG),
             _case(6, 3.0, ModeLabel.INCONCLUSIVE, status=STATUS_INCONCLUSIVE),
             _case(6, 4.0, ModeLabel.BUMPED), _case(6, 5.0, ModeLabel.BUMPED)]
    sp = stratified_split(cases, 0.5, 0)
    assert cases[2].case_id not in sp.train + sp.test
    assert len(sp.train) + len(sp.test) == 4


def test_split_file_round_trip(tmp_path):
    sp = stratified_split(_labels(9, 6), 0.2, 7)
    p = save_split(sp, tmp_path / "split.json")
    assert load_split(p) == sp
    p.write_text('{"seed": 0, "ratio": 0.2, "partition": {"a": "validation"}}')
    with pytest.raises(DataError):
        load_split(p)
    p.write_text('{"seed": 0,\n "ratio": }')
    with pytest.raises(ParseError, match="line 2"):
        load_split(p)


# --------------------------------------------------------------------------
# flattening


def test_flatten_single_case():
    c = _case(12, 3.0, ModeLabel.BUMPED, samples=10_000)
    reg = flatten_for_regression([c])
    assert len(reg) == 10_000
    assert len(flatten_for_classification([c])) == 1


def test_flatten_excludes_inconclusive():
    c = _case(12, 3.0, ModeLabel.INCONCLUSIVE, status=STATUS_INCONCLUSIVE)
    assert len(flatten_for_regression([c])) == 0
    assert len(flatten_for_classification([c])) == 0


def test_flatten_conservation_and_order():
    cases = [_case(24, 2.0, ModeLabel.ZIGZAG, 7, seed=1), _case(6, 9.0, ModeLabel.BUMPED, 11),
             _case(6, 1.0, ModeLabel.ZIGZAG, 4, seed=2)]
    reg = flatten_for_regression(cases)
    assert len(reg) == 7 + 11 + 4
    keys = list(zip(reg.n, reg.size_um))
    assert keys == sorted(keys)
    # time order inside each case: x is the stored sample sequence
    first = reg.select_cases([cases[2].case_id])
    np.testing.assert_array_equal(first.x_um, cases[2].trajectory.x)
    cls = flatten_for_classification(cases)
    assert list(cls.mode) == [0, 1, 0]
    assert list(cls.n) == [6, 6, 24]


def test_thinning():
    np.testing.assert_array_equal(thin_indices(5, None), np.arange(5))
    idx = thin_indices(10_000, 250)
    assert len(idx) == 250 and idx[0] == 0 and idx[-1] == 9_999
    assert np.all(np.diff(idx) > 0)
    with pytest.raises(ConfigurationError):
        thin_indices(10, 1)


# --------------------------------------------------------------------------
# persistence


def _small_dataset():
    cases = [_case(6, 1.0, ModeLabel.ZIGZAG, 9), _case(6, 7.5, ModeLabel.BUMPED, 13, seed=3),
             _case(12, 4.0, ModeLabel.INCONCLUSIVE, 6, status=STATUS_INCONCLUSIVE, seed=5),
             CaseResult(case_id(12, 9.0), 12, 9.0, STATUS_FAILED, reason="trace: boom")]
    return Dataset(config={"note": "synthetic"}, cases=cases, flow_reports={"6": {"grid": [1, 2]}})


def _assert_same(a: Dataset, b: Dataset):
    assert a.config == b.config
    assert len(a.cases) == len(b.cases)
    for x, y in zip(a.cases, b.cases):
        assert (x.case_id, x.n, x.size_um, x.status, x.mode, x.reason, x.seconds) == \
            (y.case_id, y.n, y.size_um, y.status, y.mode, y.reason, y.seconds)
        assert (np.isnan(x.migration_ratio) and np.isnan(y.migration_ratio)) or \
            x.migration_ratio == y.migration_ratio
        assert (x.trajectory is None) == (y.trajectory is None)
        if x.trajectory is not None:
            for f in ("t", "x", "y"):
                assert getattr(x.trajectory, f).tobytes() == getattr(y.trajectory, f).tobytes()
            assert x.trajectory.min_clearance_um == y.trajectory.min_clearance_um


def test_round_trip_is_exact(tmp_path):
    ds = _small_dataset()
    save_dataset(ds, tmp_path)
    _assert_same(ds, load_dataset(tmp_path))
    reg = read_regression_csv(tmp_path / "regression.csv")
    assert reg.shape == (9 + 13, 4)
    cls = read_classification_csv(tmp_path / "classification.csv")
    assert cls == [(1.0, 6, ModeLabel.ZIGZAG), (7.5, 6, ModeLabel.BUMPED)]


def test_empty_dataset_round_trips(tmp_path):
    ds = Dataset(config={}, cases=[])
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.cases == [] and back.config == {}


def test_saving_twice_gives_identical_bytes(tmp_path):
    ds = _small_dataset()
    a, b = save_dataset(ds, tmp_path / "a"), save_dataset(ds, tmp_path / "b")
    for name in ("trajectories.csv", "modes.csv", "regression.csv", "classification.csv",
                 "sweep_report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_truncated_mid_line_is_a_parse_error(tmp_path):
    save_dataset(_small_dataset(), tmp_path)
    p = tmp_path / "trajectories.csv"
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(ParseError) as info:
        load_dataset(tmp_path)
    assert info.value.line is not None and str(info.value).startswith("line ")


def test_truncated_at_a_line_boundary_is_a_parse_error(tmp_path):
    save_dataset(_small_dataset(), tmp_path)
    p = tmp_path / "trajectories.csv"
    lines = p.read_text().splitlines(keepends=True)
    p.write_text("".join(lines[:-3]))
    with pytest.raises(ParseError, match="truncated"):
        load_dataset(tmp_path)


def test_bad_field_reports_its_line(tmp_path):
    save_dataset(_small_dataset(), tmp_path)
    p = tmp_path / "modes.csv"
    lines = p.read_text().splitlines(keepends=True)
    lines[2] = lines[2].replace("bumped", "sideways")
    p.write_text("".join(lines))
    with pytest.raises(ParseError, match="line 3"):
        load_dataset(tmp_path)
    q = tmp_path / "regression.csv"
    lines = q.read_text().splitlines(keepends=True)
    lines[4] = "1.0,2.0,6\n"
    q.write_text("".join(lines))
    with pytest.raises(ParseError, match="line 5"):
        read_regression_csv(q)


def test_missing_files_are_data_errors(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)


# --------------------------------------------------------------------------
# sweeps


def test_tiny_sweep_is_reproducible():
    cfg = SweepConfig(n_values=(6,), sizes_um=(3.0, 30.0), solver=SolverConfig(cells_per_gap=8))
    a, b = generate_sweep(cfg), generate_sweep(cfg)
    assert [c.case_id for c in a.cases] == ["N06_d03.0000", "N06_d30.0000"]
    for x, y in zip(a.cases, b.cases):
        assert x.mode == y.mode
        assert x.trajectory.y.tobytes() == y.trajectory.y.tobytes()


def test_sweep_records_failures_instead_of_aborting():
    cfg = SweepConfig(n_values=(6,), sizes_um=(3.0, 5.0),
                      solver=SolverConfig(cells_per_gap=8, max_iterations=2))
    ds = generate_sweep(cfg)
    assert [c.status for c in ds.cases] == [STATUS_FAILED, STATUS_FAILED]
    assert all(c.reason.startswith("flow:") for c in ds.cases)
    assert "error" in ds.flow_reports["6"]


def test_desk_dataset_shape(desk_dataset):
    assert len(desk_dataset.cases) == 56
    ids = [c.case_id for c in desk_dataset.cases]
    assert ids == sorted(ids, key=lambda c: (int(c[1:3]), float(c[5:])))
    for c in desk_dataset.included():
        assert c.trajectory.complete
        assert 5_000 <= c.n_samples <= 10_000


def test_desk_split_has_no_leakage(desk_dataset, desk_split):
    from dldml.ml.pipeline import TrainingConfig, partition_tables

    assert set(desk_split.train).isdisjoint(desk_split.test)
    assert set(desk_split.train) | set(desk_split.test) == set(desk_dataset.labels())
    cfg = TrainingConfig()
    for kind in ("knn_reg", "knn_clf"):
        train, _, test = partition_tables(kind, desk_dataset, desk_split, cfg)
        assert set(train.case_ids) <= set(desk_split.train)
        assert set(test.case_ids) <= set(desk_split.test)


def test_desk_dataset_round_trips_bit_exactly(desk_dataset, tmp_path):
    save_dataset(desk_dataset, tmp_path)
    _assert_same(desk_dataset, load_dataset(tmp_path))
