import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyaplab.errors import Degenerate
from lyaplab.linalg import Matrix, ProjPoint, diag
from lyaplab.measures import GaugeSpec, MatrixMeasure
from lyaplab.estimators import (LyapLabWarning, alignment_fraction, birkhoff_lde, coboundary_psi,
                                contraction_check, decomposed_increments, family_sweep, fit_decay, gap,
                                gaussian_abs_moment, invariant_subspace_check, lde_curve, lipschitz_envelope,
                                lyap_spectrum_top2, lyap_sum2, lyap_top, martingale_diagnostics, regularity_report,
                                sigma_coboundary, sigma_direct, wilson)
from lyaplab.walk import projective_chain

DIAG = MatrixMeasure.dirac(diag(2.0, 0.5))


# Lyapunov exponents -------------------------------------------------------------

def test_lyap_top_deterministic():
    for method in ("norm_mean", "furstenberg_integral"):
        est = lyap_top(DIAG, 50, 40, method=method)
        assert est.point == pytest.approx(math.log(2), abs=1e-12)


def test_lyap_top_rotation():
    est = lyap_top(MatrixMeasure.rotation(), 100, 200)
    assert abs(est.point) <= max(est.stderr, 1e-12)


def test_lyap_top_padic_half_log5():
    m = MatrixMeasure.padic_diagonal(5, [0, 1])
    est = lyap_top(m, 400, 400, seed=1)
    assert abs(est.point - math.log(5) / 2) < 4 * est.stderr


def test_lyap_methods_agree(sic):
    a = lyap_top(sic, 200, 2000, seed=1)
    b = lyap_top(sic, 200, 2000, method="furstenberg_integral", seed=2)
    assert abs(a.point - b.point) < 3 * math.hypot(a.stderr, b.stderr)


def test_sl2_sum_and_gap(sic):
    assert lyap_sum2(sic, 50, 100).point == 0
    top, s2, g = lyap_spectrum_top2(sic, 50, 200, seed=4)
    assert s2.point == 0
    assert g.point == pytest.approx(2 * top.point, rel=1e-12)
    assert g.stderr == pytest.approx(2 * top.stderr, rel=1e-9)


def test_gap_d3_diagonal():
    m = MatrixMeasure.dirac(diag(4.0, 1.0, 0.25))
    assert lyap_sum2(m, 30, 40).point == pytest.approx(math.log(4), abs=1e-12)
    assert gap(m, 30, 40).point == pytest.approx(math.log(4), abs=1e-12)


# CLT variance ---------------------------------------------------------------------

def test_sigma_direct_lognormal():
    m = MatrixMeasure.diag_lognormal(0.3, 0.7)
    est = sigma_direct(m, [1.0, 0.0], 200, 4000, seed=3).sigma
    assert abs(est.point - 0.7) < 4 * est.stderr + 0.01


def test_sigma_direct_deterministic():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LyapLabWarning)
        assert sigma_direct(DIAG, [1.0, 0.0], 20, 60).sigma.point == pytest.approx(0.0, abs=1e-9)


def test_sigma_direct_warns_on_short_products(sic):
    with pytest.warns(LyapLabWarning):
        sigma_direct(sic, None, 10, 50)


def test_sigma_coboundary_deterministic():
    est = sigma_coboundary(DIAG, n_inner=4, chain_samples=50, dual_count=64, burn_in=50)
    assert est.sigma.point == pytest.approx(0.0, abs=1e-9)
    assert est.lam.point == pytest.approx(math.log(2), abs=1e-9)


def test_variance_routes_agree(sic):
    d = sigma_direct(sic, None, 400, 4000, seed=11).sigma.point
    c = sigma_coboundary(sic, seed=12).sigma.point
    assert c >= 0
    assert abs(d - c) <= 0.1 * d


def test_psi_point_mass_and_sign(sic):
    x = ProjPoint([1.0, 0.0])
    psi = coboundary_psi(sic, x, ys=np.array([[1.0, 0.0]] * 5))
    assert psi.estimate.point == 0
    vals = coboundary_psi(sic, ProjPoint([0.6, 0.8]), chain_samples=2000, seed=1)
    assert vals.estimate.point <= 0


def test_psi_truncation_stable(sic):
    psi = coboundary_psi(sic, ProjPoint([1.0, -1.0]), chain_samples=20_000, floor=1e-6, seed=2)
    assert psi.sensitivity < 0.01


# deviation curves -----------------------------------------------------------------

def test_wilson_interval():
    lo, hi = wilson(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    assert wilson(100, 100)[1] == 1
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)


@given(st.integers(0, 500), st.integers(1, 500))
def test_wilson_contains_estimate(k, n):
    k = min(k, n)
    lo, hi = wilson(k, n)
    assert 0 <= lo <= k / n + 1e-12 and k / n - 1e-12 <= hi <= 1


def test_lde_deterministic_is_zero():
    for stat in ("norm", "vec_norm", "coeff"):
        c = lde_curve(DIAG, stat, 0.01, [5, 10, 20], 50, f=[1.0, 0.0])
        assert np.all(c.p_hat == 0)


def test_lde_eps_zero_counts_everything(sic):
    c = lde_curve(sic, "norm", 0.0, [10, 20], 500)
    assert np.all(c.p_hat > 0.95)


def test_lde_sic_small_at_200(sic):
    lam = lyap_top(sic, 400, 2000, seed=21)
    c = lde_curve(sic, "vec_norm", 0.2 * lam.point, [200], 10_000, seed=22, lam=lam)
    assert c.p_hat[0] < 0.01


def test_lde_sic_monotone(sic):
    lam = lyap_top(sic, 400, 2000, seed=23)
    c = lde_curve(sic, "vec_norm", 0.1 * lam.point, [5, 10, 20, 40, 80], 5000, seed=24, lam=lam)
    assert c.is_nonincreasing(slack_widths=2.0)
    assert c.to_csv().startswith("n,eps,p_hat")


def test_alignment_fraction_decays(sic):
    c = alignment_fraction(sic, 0.05, [2, 8, 32], 4000, f=[1.0, -1.0])
    assert c.p_hat[-1] <= c.p_hat[0]


def test_birkhoff_constant_and_rotation():
    rot = MatrixMeasure.rotation()
    c = birkhoff_lde(rot, "const", [1.0, 0.0], 0.01, [5, 10], 100, target_chains=100, target_burn=10)
    assert np.all(c.p_hat == 0)
    c = birkhoff_lde(rot, "first_coord_sq", [1.0, 0.0], 0.05, [10, 100, 1000], 500, target=0.5)
    assert c.p_hat[-1] < c.p_hat[0]
    assert c.p_hat[-1] < 0.01


def test_birkhoff_contracting_chain():
    m = MatrixMeasure.dirac(diag(4.0, 0.25))
    c = birkhoff_lde(m, "first_coord_sq", [1.0, 1.0], 0.05, [10, 100], 20, target_chains=20, target_burn=100)
    assert c.lam.point == pytest.approx(1.0)
    assert c.p_hat[-1] == 0


# decay fits -----------------------------------------------------------------------

def test_fit_exp_synthetic():
    ns = np.arange(5, 60, 5)
    f = fit_decay((ns, np.exp(-0.3 * ns)), "exp")
    assert f.c == pytest.approx(0.3, abs=0.01) and f.residual < 1e-6 and f.converged


def test_fit_poly_synthetic():
    ns = np.array([4, 8, 16, 32, 64, 128])
    f = fit_decay((ns, ns ** -2.0), "poly")
    assert f.q == pytest.approx(2.0, abs=0.01) and f.residual < 1e-6


def test_fit_stretched_synthetic():
    ns = np.array([4, 8, 16, 32, 64, 128, 256], dtype=float)
    f = fit_decay((ns, 0.8 * np.exp(-0.5 * ns ** 0.6)), "stretched")
    assert f.rho == pytest.approx(0.6, abs=1e-3) and f.c == pytest.approx(0.5, rel=1e-3)


def test_fit_drops_zero_cells_and_degenerates():
    ns = np.arange(1, 8)
    ps = np.exp(-ns.astype(float))
    ps[-2:] = 0
    f = fit_decay((ns, ps), "exp")
    assert f.dropped == (6, 7)
    with pytest.raises(Degenerate):
        fit_decay((ns, np.zeros(7)), "exp")
    with pytest.raises(ValueError):
        fit_decay((ns, ps), "gaussian")


# regularity -----------------------------------------------------------------------

def test_regularity_uniform_holder_one():
    ch = projective_chain(MatrixMeasure.rotation(), [1.0, 0.0], 100_000, seed=5, burn_in=10)
    rep = regularity_report(ch.flat(), np.geomspace(0.01, 0.2, 8))
    assert not rep.degenerate
    assert rep.holder.params["alpha"] == pytest.approx(1.0, abs=0.1)
    assert np.all(np.diff(rep.max_mass) >= 0)
    assert set(rep.to_dict()) >= {"radii", "max_mass", "holder", "weak_holder", "log_holder"}


def test_regularity_point_mass_degenerate():
    ch = projective_chain(MatrixMeasure.dirac(diag(4.0, 0.25)), [1.0, 1.0], 10_000, burn_in=100)
    rep = regularity_report(ch.flat(), np.geomspace(0.001, 0.5, 6))
    assert rep.degenerate and rep.holder is None
    assert np.allclose(rep.max_mass, 1.0)


def test_regularity_masses_monotone(sic):
    ch = projective_chain(sic, [1.0, 0.0], 2000, chains=4, seed=1, burn_in=50)
    with pytest.warns(LyapLabWarning):
        rep = regularity_report(ch.flat(), np.geomspace(1e-4, 0.9, 12))
    assert np.all(np.diff(rep.max_mass) >= 0)


# martingale diagnostics -------------------------------------------------------------

def test_martingale_bounded_and_zero(gen):
    phi = gen.uniform(-1.5, 1.5, size=(100, 30))
    d = martingale_diagnostics(phi, 3, 0.1)
    assert d.N1_hat <= 1.5 ** 3 and d.N2_hat <= 1.5
    z = martingale_diagnostics(np.zeros((10, 5)), 2, 0.1)
    assert z.N1_hat == 0 and z.N2_hat == 0


def test_martingale_tail_threshold_brute(gen):
    phi = gen.standard_t(3, size=(20, 25))
    eps = 0.3
    d = martingale_diagnostics(phi, 2, eps)
    a = np.abs(phi).ravel()
    cands = np.concatenate([[0.0], np.sort(a)])
    brute = min(t for t in cands if np.mean(a * (a > t)) < eps / 3)
    assert d.N2_hat == brute


def test_martingale_lognormal_gaussian_moment():
    s = 0.6
    dec = decomposed_increments(MatrixMeasure.diag_lognormal(0.2, s), [1.0, 0.0], 20, 5000, seed=7)
    d = martingale_diagnostics(dec, 2, 0.1)
    # with x on an axis the increment is exactly X - E X, Gaussian with sd s
    assert d.N1_hat == pytest.approx(gaussian_abs_moment(s, 2), rel=0.1)


def test_gaussian_abs_moment_values():
    assert gaussian_abs_moment(1.0, 2) == pytest.approx(1.0)
    assert gaussian_abs_moment(2.0, 1) == pytest.approx(2 * math.sqrt(2 / math.pi))


# family sweeps ---------------------------------------------------------------------

def test_family_sweep_diagonals():
    fam = [MatrixMeasure.dirac(diag(2.0, 0.5)), MatrixMeasure.dirac(diag(4.0, 0.25))]
    res = family_sweep(fam, n=10, trials=30)
    assert [e.point for e in res.estimates] == pytest.approx([math.log(2), math.log(4)], abs=1e-12)
    assert res.inf.point == pytest.approx(math.log(2)) and res.argmin == 0 and res.argmax == 1


def test_family_sweep_singleton(sic):
    res = family_sweep([sic], n=20, trials=100)
    assert res.inf == res.sup == res.estimates[0]


def test_family_sweep_perturbation_regression():
    def member(t):
        a = np.array([[2.0 + t, 1.0], [1.0, 1.0]])
        b = np.array([[1.0, 1.0], [1.0, 2.0 + t]])
        return MatrixMeasure.from_atoms([Matrix(a / math.sqrt(np.linalg.det(a))),
                                         Matrix(b / math.sqrt(np.linalg.det(b)))])
    ts = [0.0, 0.01, 0.02, 0.05]
    res = family_sweep([member(t) for t in ts], n=100, trials=2000, seed=3, gauge=GaugeSpec("log", 1))
    pts = [e.point for e in res.estimates]
    steps = np.diff(pts)
    assert np.all(steps < 0) or np.all(steps > 0)
    assert res.distances[0] == 0 and all(d > 0 for d in res.distances[1:])
    C = lipschitz_envelope(res.distances[1:], np.array(pts[1:]) - pts[0])
    assert 0 < C < 10


def test_family_mismatch_rejected(sic):
    with pytest.raises(ValueError):
        family_sweep([sic, MatrixMeasure.dirac(diag(2.0, 1.0, 0.5))])


# heuristics ------------------------------------------------------------------------

def test_heuristic_warnings(sic):
    with warnings.catch_warnings():
        warnings.simplefilter("error", LyapLabWarning)
        contraction_check(sic, n=16, trials=64)
        assert invariant_subspace_check(sic) == []
    with pytest.warns(LyapLabWarning):
        hits = invariant_subspace_check(MatrixMeasure.from_atoms([diag(2.0, 0.5), diag(3.0, 1 / 3)]))
    assert len(hits) == 2
    with pytest.warns(LyapLabWarning):
        contraction_check(MatrixMeasure.rotation(), n=8, trials=16)
