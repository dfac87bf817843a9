import math

import numpy as np
import pytest
from scipy import stats

from lyaplab.anderson import (PotentialSpec, coeff_lde, drawn_potentials, energy_grid, energy_pushforward_distance,
                              lifted_measure, lyap_vs_energy, transfer_matrix, transfer_product)
from lyaplab.errors import InvalidMeasure
from lyaplab.estimators import lde_curve
from lyaplab.linalg import ProjPoint
from lyaplab.measures import GaugeSpec
from lyaplab.transport import ScalarMeasure

BERN = PotentialSpec("bernoulli", (1.0,))


def test_single_factor():
    assert np.array_equal(transfer_matrix([0.0], 0.0).entries, [[0.0, -1.0], [1.0, 0.0]])


def test_factor_ordering():
    t1 = np.array([[0.5 - 1.0, -1.0], [1.0, 0.0]])
    t2 = np.array([[0.5 - 3.0, -1.0], [1.0, 0.0]])
    assert np.allclose(transfer_matrix([1.0, 3.0], 0.5).entries, t2 @ t1)


def test_engine_matches_explicit_product():
    for spec in (BERN, PotentialSpec("uniform", (-2, 2)), PotentialSpec("gaussian", (0, 1))):
        for trial_seed in range(5):
            rec = transfer_product(spec, 0.7, 25, seed=trial_seed)
            a = transfer_matrix(drawn_potentials(spec, 25, trial_seed), 0.7).entries
            assert rec.log_norm == pytest.approx(math.log(np.linalg.norm(a, 2)), abs=1e-9)
            assert rec.log_vec_norm == pytest.approx(math.log(np.linalg.norm(a[:, 0])), abs=1e-9)


def test_determinant_conservation(gen):
    for _ in range(1000):
        v = gen.uniform(-3, 3, size=12)
        a = transfer_matrix(v, float(gen.uniform(-2, 2))).entries
        assert abs(np.linalg.det(a) - 1) <= 1e-9 * max(1.0, np.linalg.norm(a, 2) ** 2)


def test_energy_symmetry():
    grid = energy_grid(-2.0, 2.0, 9)
    rows = lyap_vs_energy(BERN, grid, 200, 2000, seed=3)
    for (e1, l1, s1), (e2, l2, s2) in zip(rows, rows[::-1]):
        assert e1 == pytest.approx(-e2)
        assert abs(l1 - l2) < 3 * math.hypot(s1, s2) + 1e-12


def test_furstenberg_positivity():
    (_, lam, se), = lyap_vs_energy(BERN, [0.0], 1000, 2000, seed=4)
    assert lam - 3 * se > 0


def test_single_point_rejected():
    with pytest.raises(InvalidMeasure):
        PotentialSpec("bernoulli", (0.0,))
    with pytest.raises(InvalidMeasure):
        PotentialSpec("uniform", (1.0, 1.0))
    with pytest.raises(InvalidMeasure):
        PotentialSpec.parse("cauchy(1)")


def test_parse_and_describe():
    spec = PotentialSpec.parse("uniform(-1, 2)")
    assert spec.params == (-1.0, 2.0) and spec.describe() == "uniform(-1,2)"
    assert not spec.symmetric and PotentialSpec.parse("log_pareto(3)").symmetric


def test_coeff_lde_large_eps_zero():
    c = coeff_lde(BERN, 0.3, [1.0, 0.0], [1.0, 0.0], 50.0, [2, 4, 8], 200, lam=0.5)
    assert np.all(c.p_hat == 0)


def test_coeff_curve_above_vec_norm_curve():
    m = lifted_measure(BERN, 0.3)
    lam = lyap_vs_energy(BERN, [0.3], 800, 2000, seed=5)[0][1]
    eps = 0.25 * lam
    grid = [25, 50, 100, 200]
    coef = lde_curve(m, "coeff", eps, grid, 4000, seed=6, x0=[1.0, 0.0], f=[0.0, 1.0], lam=lam)
    vec = lde_curve(m, "vec_norm", eps, grid, 4000, seed=6, x0=[1.0, 0.0], lam=lam)
    for rc, rv in zip(coef.rows, vec.rows):
        assert rc.p_hat >= rv.p_hat - (rv.ci[1] - rv.ci[0])


def test_coeff_curve_decreases_beyond_50():
    lam = lyap_vs_energy(BERN, [0.3], 800, 2000, seed=7)[0][1]
    c = coeff_lde(BERN, 0.3, [1.0, 0.0], [1.0, 0.0], 0.25 * lam, [50, 100, 200, 400], 4000, seed=8, lam=lam)
    p = c.p_hat
    assert np.all(np.diff(p) <= 0)


def test_pushforward_examples():
    w, bound = energy_pushforward_distance(BERN, 0.4, 0.4, GaugeSpec("log", 1))
    assert w == 0 and bound == 0
    w, bound = energy_pushforward_distance(ScalarMeasure.dirac(0.0), 0.0, 1.0, GaugeSpec("log", 2))
    assert w == pytest.approx(bound, rel=1e-14)
    w, bound = energy_pushforward_distance(BERN, 0.0, 0.5, GaugeSpec("log", 1))
    assert w <= bound + 1e-9


def test_pushforward_bound_grid():
    grid = np.linspace(-2, 2, 10)
    for spec in (BERN, PotentialSpec("uniform", (-1, 1))):
        for g in (GaugeSpec("log", 1), GaugeSpec("slog", 0.5), GaugeSpec("frac", 0.5)):
            for e1 in grid:
                for e2 in grid:
                    w, bound = energy_pushforward_distance(spec, e1, e2, g, atom_cap=16)
                    assert w <= bound + 1e-9


def test_log_pareto_tail_law():
    p = 2.5
    spec = PotentialSpec("log_pareto", (p,))
    v = spec.sample(11, 100_000)
    t = np.log1p(np.abs(v))
    # P[T <= t] = 1 - t^-p on t >= 1
    ks = stats.kstest(t, lambda x: 1 - np.minimum(1.0, np.maximum(x, 1e-300) ** -p))
    assert ks.statistic < 0.02
    assert abs(np.mean(v > 0) - 0.5) < 0.01
    assert spec.tail(2.0) == pytest.approx(2.0 ** -p)


def test_log_pareto_log_abs_is_accurate():
    spec = PotentialSpec("log_pareto", (0.5,))
    u = np.array([[1e-12, 0.2], [0.3, 0.7], [0.999, 0.1]])
    v, logv = spec.sample_with_log(u)
    finite = np.isfinite(v)
    assert np.allclose(logv[finite], np.log(np.abs(v[finite])), rtol=1e-12)
    assert np.isfinite(logv).all()


def test_heavy_tailed_products_stay_finite():
    rows = lyap_vs_energy(PotentialSpec("log_pareto", (1.5,)), [0.0], 200, 500, seed=9)
    assert math.isfinite(rows[0][1]) and rows[0][1] > 0


def test_energy_grid_validation():
    assert len(energy_grid(-1, 1, 5)) == 5
    with pytest.raises(ValueError):
        energy_grid(1, 1, 3)


def test_start_vector_default():
    rec = transfer_product(BERN, 0.0, 3, seed=2)
    assert rec.endpoint is not None and isinstance(rec.endpoint, ProjPoint)


def test_log_pareto_moment_boundary():
    # T = log(1 + |V|) is Pareto with index p: E[T^q] = p / (p - q) for q < p, infinite for q >= p
    p = 3.0
    t = np.log1p(np.abs(PotentialSpec("log_pareto", (p,)).sample(12, 200_000)))
    for q in (0.5, 1.0):
        assert np.mean(t ** q) == pytest.approx(p / (p - q), rel=0.02)
    # at q = p the running mean keeps growing with the sample size (log divergence)
    running = [np.mean(t[:k] ** p) for k in (2_000, 20_000, 200_000)]
    assert running[0] < running[2]
