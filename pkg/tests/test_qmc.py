import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutocp import qmc
from cutocp.qmc import (EMBEDDED_Z, Evaluator, LatticeRule, Sampler, convergence_study, estimate,
                        lattice_points, loglog_slope, map_to_box, mc_points, product_integrand,
                        shift_and_wrap, shifted_statistics, write_rows)

UNIT = [(0.0, 1.0), (0.0, 1.0)]


def test_lattice_small_example():
    pts = lattice_points(4, (1, 3))
    assert np.array_equal(pts, [[0, 0], [0.25, 0.75], [0.5, 0.5], [0.75, 0.25]])
    assert LatticeRule(4, (1, 3)).s == 2
    with pytest.raises(ValueError):
        LatticeRule(0, (1,))


@given(m=st.integers(0, 12), z2=st.integers(1, 10**6))
def test_lattice_points_in_unit_cube_and_nested(m, z2):
    N = 2**m
    pts = lattice_points(N, (1, z2))
    assert pts.min() >= 0.0 and pts.max() < 1.0
    # first coordinate is the regular grid k/N
    assert np.array_equal(pts[:, 0], np.arange(N) / N)
    if m > 0:
        coarse = {tuple(p) for p in lattice_points(N // 2, (1, z2))}
        assert coarse <= {tuple(p) for p in pts}


def test_odd_generator_gives_full_projection():
    pts = lattice_points(64, EMBEDDED_Z)
    assert np.array_equal(np.sort(pts[:, 1]), np.arange(64) / 64)


@given(d1=st.floats(0, 1, exclude_max=True), d2=st.floats(0, 1, exclude_max=True))
def test_shift_wrap_range_and_group(d1, d2):
    pts = lattice_points(16, (1, 5))
    a = shift_and_wrap(pts, [d1, d2])
    assert a.min() >= 0.0 and a.max() < 1.0
    back = shift_and_wrap(a, [1 - d1, 1 - d2])
    diff = np.abs(back - pts)
    assert np.all(np.minimum(diff, 1 - diff) < 1e-12)


def test_shift_wrap_example():
    assert np.allclose(shift_and_wrap([[0.75, 0.5]], [0.5, 0.25]), [[0.25, 0.75]])


def test_map_to_box():
    out = map_to_box([[0.0, 0.0], [1.0, 0.5]], [(9, 12), (2, 3)])
    assert np.allclose(out, [[9, 2], [12, 2.5]])
    with pytest.raises(ValueError):
        map_to_box([[0.5, 0.5]], [(1, 1), (0, 1)])


def test_mc_points_reproducible_and_prefix():
    a = mc_points(10, 3)
    assert np.array_equal(a, mc_points(10, 3))
    assert np.array_equal(mc_points(20, 3)[:10], a)
    assert not np.array_equal(a, mc_points(10, 4))


def test_mc_mean_within_statistical_bound():
    est = estimate(product_integrand, "mc", 4096, UNIT, seed=11)
    # Var(t1 t2) = 1/9 - 1/16
    sd = np.sqrt((1 / 9 - 1 / 16) / 4096)
    assert abs(est.mean[0] - 0.25) < 4 * sd
    assert est.variance[0] == pytest.approx(1 / 9 - 1 / 16, rel=0.1)


def test_constant_qoi_has_zero_spread():
    est = estimate(lambda w: 3.0, "shifted_lattice", 8, UNIT, q=4)
    assert est.mean[0] == 3.0 and est.variance[0] == 0.0 and est.rms[0] == 0.0


def test_single_lattice_point_is_box_corner():
    seen = []
    est = estimate(lambda w: seen.append(tuple(w)) or w[0] + w[1], "lattice", 1, [(9, 12), (2, 3)])
    assert seen == [(9.0, 2.0)] and est.mean[0] == 11.0 and est.variance[0] == 0.0


def test_rms_formula_and_equal_shifts():
    grand, rms = shifted_statistics([[1.0], [2.0], [3.0]])
    assert grand[0] == 2.0 and rms[0] == pytest.approx(1.0)
    assert shifted_statistics([[0.3, 1.0]] * 5)[1].tolist() == [0.0, 0.0]
    assert shifted_statistics([[0.3]])[1][0] == 0.0


def test_forced_equal_shifts_give_zero_rms(monkeypatch):
    monkeypatch.setattr(qmc, "random_shifts", lambda q, seed, s=2: np.tile([0.3, 0.7], (q, 1)))
    est = estimate(product_integrand, "shifted_lattice", 32, UNIT, z=EMBEDDED_Z, q=16)
    assert est.rms[0] == 0.0


def test_shifted_lattice_is_unbiased():
    means = [estimate(product_integrand, "shifted_lattice", 8, UNIT, z=EMBEDDED_Z, q=1,
                      seed=s).mean[0] for s in range(400)]
    sem = np.std(means, ddof=1) / np.sqrt(len(means))
    assert abs(np.mean(means) - 0.25) < 4 * sem


def test_shifted_lattice_rms_positive_and_decreasing():
    rms = [estimate(product_integrand, "shifted_lattice", N, UNIT, z=EMBEDDED_Z, q=16).rms[0]
           for N in (32, 128, 512)]
    assert min(rms) > 0 and rms[0] > rms[1] > rms[2]


def test_evaluator_caches_nested_points():
    calls = []

    def fn(w):
        calls.append(1)
        return float(w.sum())

    ev = Evaluator(fn)
    for m in range(1, 6):
        estimate(fn, "lattice", 2**m, UNIT, z=EMBEDDED_Z, evaluator=ev)
    assert len(calls) == 32


def test_failures_are_excluded_with_warning():
    def fn(w):
        if w[0] >= 0.5:
            raise RuntimeError("solver failed")
        return float(w[0])

    with pytest.warns(RuntimeWarning, match="2 of 4"):
        est = estimate(fn, "lattice", 4, UNIT, z=(1, 3))
    assert est.n_failed == 2 and est.mean[0] == pytest.approx(0.125)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate(lambda w: np.nan, "mc", 3, UNIT)
    assert est.n_failed == 3 and np.isnan(est.mean[0])


def test_parallel_evaluator_matches_serial():
    a = estimate(product_integrand, "lattice", 16, UNIT, z=EMBEDDED_Z, jobs=2)
    b = estimate(product_integrand, "lattice", 16, UNIT, z=EMBEDDED_Z)
    assert np.array_equal(a.mean, b.mean)


def test_vector_qoi_names_and_dict():
    est = estimate(lambda w: [w[0], 2 * w[1]], "lattice", 8, UNIT, names=["a", "b"])
    d = est.as_dict()
    assert set(d) == {"a", "b"} and d["b"]["mean"] == pytest.approx(2 * d["a"]["mean"])


def test_convergence_study_rows(tmp_path):
    rows, ests = convergence_study(product_integrand, "lattice", [8, 2, 4], UNIT, z=EMBEDDED_Z)
    assert [r.N for r in rows] == [2, 4, 8]
    assert rows[-1].abs_error == 0.0 and rows[-1].var_abs_error == 0.0
    assert np.isnan(rows[0].rms)
    path = tmp_path / "rows.csv"
    write_rows(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == qmc.CSV_COLUMNS and len(lines) == 4


def test_loglog_slope():
    N = np.array([2, 4, 8, 16])
    assert loglog_slope(N, 3.0 / N) == pytest.approx(-1.0)
    assert np.isnan(loglog_slope([2, 4], [0.0, 1.0]))


def test_sampler_enum():
    assert Sampler("mc") is Sampler.MC
    with pytest.raises(ValueError):
        estimate(product_integrand, "sobol", 4, UNIT)
