import json
import math
import warnings

import numpy as np
import pytest

from dldml.errors import ConfigurationError
from dldml.geometry import (DldDesign, build_post_array, critical_diameter_davis,
                            critical_diameter_inglis, design_summary, empty_channel,
                            row_shift_fraction)

G = 45.0


@pytest.mark.parametrize("n, expected, places", [(3, 1 / 3, 15), (15, 0.066667, 6),
                                                 (48, 0.0208333, 7)])
def test_row_shift_fraction(n, expected, places):
    # quoted values are rounded; compare to half a unit in the last digit
    assert row_shift_fraction(n) == pytest.approx(expected, abs=0.5 * 10.0**-places)


def test_row_shift_fraction_rejects_zero():
    with pytest.raises(ConfigurationError):
        row_shift_fraction(0)


@pytest.mark.parametrize("n, expected", [(3, 30.0), (12, 15.0), (48, 7.5)])
def test_inglis_examples(n, expected):
    # alpha = sqrt(N/3) is 1, 2 and 4 here, so D_c = 2 alpha G / N exactly
    assert critical_diameter_inglis(G, n) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("eps, expected, tol", [(1.0, 63.0, 1e-12), (0.1, 20.86, 5e-4),
                                                (1 / 48, 9.82, 1e-3)])
def test_davis_examples(eps, expected, tol):
    assert critical_diameter_davis(G, eps) == pytest.approx(expected, rel=tol)


def test_davis_oracle_through_logarithms():
    # independent route: exp(log 1.4 + log G + 0.48 log eps)
    for n in range(3, 49):
        oracle = math.exp(math.log(1.4) + math.log(G) - 0.48 * math.log(n))
        assert critical_diameter_davis(G, 1 / n) == pytest.approx(oracle, rel=1e-12)


def test_davis_rejects_bad_epsilon():
    for eps in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigurationError):
            critical_diameter_davis(G, eps)


def test_davis_strictly_decreasing_in_n():
    values = [critical_diameter_davis(G, 1 / n) for n in range(2, 200)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_correlations_inside_sanity_envelope():
    for n in range(3, 49):
        for dc in (critical_diameter_inglis(G, n), critical_diameter_davis(G, 1 / n)):
            assert 0 < dc < G + 45.0


def test_pitch_and_angle():
    d = DldDesign(post_diameter_um=45, gap_um=45, period=10)
    assert d.pitch_um == 90.0
    assert d.epsilon == 0.1
    assert d.bump_angle == pytest.approx(math.atan(0.1))
    assert d.n_rows == 10


def test_out_of_regime_n_warns_but_builds():
    with pytest.warns(UserWarning):
        d = DldDesign(period=2)
    assert not d.valid
    assert build_post_array(d).n_posts == 2


@pytest.mark.parametrize("kwargs", [dict(period=1), dict(gap_um=0), dict(post_diameter_um=-1),
                                    dict(n_columns=0), dict(lateral="open")])
def test_invalid_designs(kwargs):
    with pytest.raises(ConfigurationError):
        DldDesign(**kwargs)


def test_three_by_four_array():
    d = DldDesign(period=3, n_columns=4, n_rows=3, lateral="wall")
    arr = build_post_array(d)
    assert arr.n_posts == 12
    lam = d.pitch_um
    np.testing.assert_allclose(arr.row_offsets(), [0, lam / 3, 2 * lam / 3])
    for r in range(3):
        ys = np.sort(arr.centers[arr.rows == r, 1])
        np.testing.assert_allclose(ys - ys[0], np.arange(4) * lam)
        assert ys[0] - lam / 2 == pytest.approx(r * lam / 3)


def test_posts_stay_clear_of_margins():
    d = DldDesign(period=5, n_columns=2)
    arr = build_post_array(d)
    r = arr.radius_um
    assert arr.centers[:, 0].min() - r >= d.inlet_margin_um - 1e-9
    assert arr.centers[:, 0].max() + r <= d.array_end_um + 1e-9
    assert arr.bounds == (0.0, d.length_um, 0.0, d.height_um)


def test_offsets_wrap_after_one_period():
    for n in (3, 7, 10, 48):
        d = DldDesign(period=n, n_rows=n + 1)
        assert n * d.row_shift_um == pytest.approx(d.pitch_um, rel=1e-12)
        arr = build_post_array(d)
        first = arr.centers[arr.rows == 0, 1]
        last = arr.centers[arr.rows == n, 1]
        diff = np.mod(last - first + 1e-9, d.pitch_um) - 1e-9
        np.testing.assert_allclose(diff, 0.0, atol=1e-9)


def test_posts_in_a_row_are_one_pitch_apart():
    arr = build_post_array(DldDesign(period=10, n_columns=5))
    H = arr.height_um
    for r in range(10):
        ys = arr.centers[arr.rows == r, 1]
        dy = np.abs(ys[:, None] - ys[None, :])
        dy = np.minimum(dy, H - dy)  # periodic distance
        np.fill_diagonal(dy, np.inf)
        assert dy.min() >= 90.0 - 1e-9


def test_build_is_deterministic():
    d = DldDesign(period=12, n_columns=3)
    a, b = build_post_array(d), build_post_array(d)
    np.testing.assert_array_equal(a.centers, b.centers)
    np.testing.assert_array_equal(a.rows, b.rows)


def test_margins_below_one_pitch_rejected():
    with pytest.raises(ConfigurationError):
        build_post_array(DldDesign(period=5, inlet_margin_um=50.0))


def test_design_json_round_trip():
    d = DldDesign(post_diameter_um=30, gap_um=40, period=15, n_columns=2, n_rows=4,
                  lateral="wall")
    text = json.dumps(d.to_dict())
    assert DldDesign.from_dict(json.loads(text)) == d


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        DldDesign.from_dict({"n": 5, "gapp": 3})


def test_design_summary_contents():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = design_summary(DldDesign(period=48))
    assert s["dc_inglis_um"] == pytest.approx(7.5)
    assert s["pitch_um"] == 90.0


def test_empty_channel():
    ch = empty_channel(300, 60)
    assert ch.n_posts == 0 and not ch.periodic_y
    with pytest.raises(ConfigurationError):
        empty_channel(0, 60)
