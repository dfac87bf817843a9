"""Lyapunov exponents, CLT variance, deviation curves, decay fits and regularity reports."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma as gamma_fn

from . import rng
from .errors import Degenerate
from .linalg import ProjPoint, bmv, vnorm
from .measures import Estimate, GaugeSpec, MatrixMeasure
from .walk import WalkConfig, cocycle_decompose, log_cocycle, projective_chain, run_products

Z95 = 1.959963984540054
# per-step relative rounding of a renormalized float64 product; its accumulated
# effect on log|A_n| / n is a bias of this order that no amount of sampling removes
ROUNDOFF_PER_STEP = 8 * np.finfo(np.float64).eps
DEFAULT_FLOOR = 1e-6


class LyapLabWarning(UserWarning):
    """Heuristic diagnostics (irreducibility, contraction, budget) that do not stop a run."""


def _e1(d):
    v = np.zeros(d)
    v[0] = 1.0
    return ProjPoint(v)


def _coerce_point(x, d, dual=False):
    if x is None:
        return None
    if isinstance(x, ProjPoint):
        return x
    return ProjPoint(np.asarray(x, dtype=np.float64), dual=dual)


# ---------------------------------------------------------------------------
# Lyapunov exponents


def lyap_top(m: MatrixMeasure, n, trials, method="norm_mean", seed=0, workers=None, x0=None,
             samples_per_chain=1) -> Estimate:
    """Top Lyapunov exponent.

    ``norm_mean`` averages ``log|A_n| / n`` over independent products; for real
    fields the standard error includes a floating-point floor of
    ``ROUNDOFF_PER_STEP`` (combined in quadrature with the sampling error).

    ``furstenberg_integral`` averages ``Phi(g, x) = log(|g x| / |x|)`` over
    ``x`` from ``trials`` independent projective chains run for ``n`` steps
    and fresh draws ``g``; ``samples_per_chain`` consecutive chain points
    may be used per chain (they are correlated, so the default is one).
    """
    if trials < 30:
        warnings.warn("fewer than 30 trials: confidence intervals are unreliable", LyapLabWarning)
    if method == "norm_mean":
        b = run_products(WalkConfig(m, n, trials, seed, workers=workers))
        est = Estimate.from_samples(b.log_norm / n, seed)
        if not m.is_real:
            return est
        se = math.hypot(est.stderr, ROUNDOFF_PER_STEP)
        return Estimate.from_mean(est.point, se, est.n_samples, seed)
    if method == "furstenberg_integral":
        if not m.is_real:
            raise NotImplementedError("the stationary-measure route is provided over R")
        start = x0 if x0 is not None else _e1(m.d)
        ch = projective_chain(m, start, samples_per_chain, trials, rng.derive_seed(seed, "chain"), burn_in=n)
        x = ch.points.reshape(-1, m.d)
        keys = rng.trial_keys(rng.derive_seed(seed, "fresh"), 0, len(x))
        g = m.draw(keys, 0)
        phi = log_cocycle(g, x)
        if samples_per_chain == 1:
            return Estimate.from_samples(phi, seed)
        per_chain = phi.reshape(trials, samples_per_chain).mean(axis=1)
        e = Estimate.from_samples(per_chain, seed)
        return Estimate.from_mean(e.point, e.stderr, len(phi), seed)
    raise ValueError(f"unknown method {method!r}")


def _wedge_batch(m, n, trials, seed, workers):
    return run_products(WalkConfig(m, n, trials, seed, record_wedge=True, workers=workers))


def lyap_sum2(m: MatrixMeasure, n, trials, seed=0, workers=None) -> Estimate:
    """``lambda_1 + lambda_2`` as the mean of ``log|wedge^2 A_n| / n`` (exactly 0 on SL_2)."""
    b = _wedge_batch(m, n, trials, seed, workers)
    return Estimate.from_samples(b.log_wedge_norm / n, seed)


def gap(m: MatrixMeasure, n, trials, seed=0, workers=None) -> Estimate:
    """``lambda_1 - lambda_2 = 2 lambda_1 - (lambda_1 + lambda_2)``.

    Both terms come from the same products, so the per-trial difference
    ``(2 log|A_n| - log|wedge^2 A_n|) / n`` carries the propagated error
    including their correlation.
    """
    b = _wedge_batch(m, n, trials, seed, workers)
    return Estimate.from_samples((2 * b.log_norm - b.log_wedge_norm) / n, seed)


def lyap_spectrum_top2(m: MatrixMeasure, n, trials, seed=0, workers=None):
    """``(lambda_1, lambda_1 + lambda_2, gap)`` from one shared run."""
    b = _wedge_batch(m, n, trials, seed, workers)
    return (Estimate.from_samples(b.log_norm / n, seed), Estimate.from_samples(b.log_wedge_norm / n, seed),
            Estimate.from_samples((2 * b.log_norm - b.log_wedge_norm) / n, seed))


# ---------------------------------------------------------------------------
# CLT variance


def _jackknife_std(z, groups=50):
    """Sample standard deviation with a grouped delete-one jackknife standard error."""
    z = np.asarray(z, dtype=np.float64)
    s = float(np.std(z, ddof=1))
    g = min(groups, len(z))
    if g < 2:
        return s, 0.0
    parts = np.array_split(np.arange(len(z)), g)
    loo = np.array([np.std(np.delete(z, idx), ddof=1) for idx in parts])
    se = math.sqrt((g - 1) / g * float(np.sum((loo - loo.mean()) ** 2)))
    return s, se


@dataclass(frozen=True)
class SigmaEstimate:
    sigma: Estimate
    lam: Estimate


def sigma_direct(m: MatrixMeasure, x0, n, trials, seed=0, workers=None) -> SigmaEstimate:
    """CLT standard deviation from ``(log|A_n x0| - n lambda_hat) / sqrt(n)``.

    ``lambda_hat`` comes from an independent seed (reported alongside); the
    spread is the sample standard deviation with a grouped jackknife error.
    """
    if n < 100:
        warnings.warn("n < 100: the CLT normalization is far from its limit", LyapLabWarning)
    x0 = _coerce_point(x0, m.d) or _e1(m.d)
    lam_b = run_products(WalkConfig(m, n, trials, rng.derive_seed(seed, "lambda"), x0=x0, workers=workers))
    lam = Estimate.from_samples(lam_b.log_vec_norm / n, rng.derive_seed(seed, "lambda"))
    b = run_products(WalkConfig(m, n, trials, seed, x0=x0, workers=workers))
    z = (b.log_vec_norm - n * lam.point) / math.sqrt(n)
    s, se = _jackknife_std(z)
    return SigmaEstimate(Estimate.from_mean(s, se, trials, seed), lam)


def psi_values(xs, ys, floor=DEFAULT_FLOOR, chunk=2048):
    """``psi(x) = mean_j max(log delta(x, y_j), log floor)`` with ``delta(x, y) = |<x, y>| / (|x| |y|)``.

    ``delta(x, y)`` is the distance from the direction ``x`` to the hyperplane
    ``ker y``.  Vectorized over rows of ``xs``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xs = xs / vnorm(xs)[:, None]
    ys = ys / vnorm(ys)[:, None]
    lf = math.log(floor)
    out = np.empty(len(xs))
    for s in range(0, len(xs), chunk):
        c = np.abs(xs[s:s + chunk] @ ys.T)
        with np.errstate(divide="ignore"):
            out[s:s + chunk] = np.maximum(np.log(np.minimum(c, 1.0)), lf).mean(axis=1)
    return out


def dual_samples(m: MatrixMeasure, count, seed=0, burn_in=1000, chains=None):
    """Samples of the stationary measure of the transpose action ``y -> g^T y``.

    ``chains`` independent chains contribute ``count / chains`` consecutive points each.
    """
    chains = chains or min(count, 256)
    per = -(-count // chains)
    start = np.ones(m.d) / math.sqrt(m.d)
    ch = projective_chain(m, start, per, chains, rng.derive_seed(seed, "dual"), burn_in, direction="transpose")
    return ch.flat()[:count]


@dataclass(frozen=True)
class PsiEstimate:
    """``psi(x)`` at the floor, at floor / 10, and their difference."""

    estimate: Estimate
    at_tenth_floor: float
    sensitivity: float
    floor: float


def coboundary_psi(m: MatrixMeasure, x, chain_samples=4096, floor=DEFAULT_FLOOR, seed=0, ys=None) -> PsiEstimate:
    """Coboundary ``psi(x) = E log delta(x, y)`` over the dual stationary measure.

    ``ys`` may supply the dual samples directly; otherwise ``chain_samples``
    points of the transpose chain are drawn.  ``psi <= 0`` always.
    """
    if not m.is_real:
        raise NotImplementedError("coboundaries are provided over R")
    xv = np.asarray(x.vector if isinstance(x, ProjPoint) else x, dtype=np.float64)[None, :]
    ys = dual_samples(m, chain_samples, seed) if ys is None else np.asarray(ys, dtype=np.float64)
    xn = xv / vnorm(xv)[:, None]
    yn = ys / vnorm(ys)[:, None]
    with np.errstate(divide="ignore"):
        raw = np.log(np.minimum(np.abs(yn @ xn[0]), 1.0))
    at = np.maximum(raw, math.log(floor))
    at10 = float(np.maximum(raw, math.log(floor / 10)).mean())
    est = Estimate.from_samples(at, seed)
    return PsiEstimate(est, at10, abs(est.point - at10), floor)


def sigma_coboundary(m: MatrixMeasure, n_inner=16, chain_samples=2000, seed=0, floor=DEFAULT_FLOOR,
                     dual_count=4096, burn_in=1000) -> SigmaEstimate:
    """CLT standard deviation from the martingale increments of the log-norm cocycle.

    ``D = Phi(g, x) - psi(x) + psi(g x)`` along ``chain_samples`` forward
    chains of ``n_inner`` steps each; returns ``sqrt(Var D)``, i.e. the square
    root of the integral of the squared centered increment.  ``lam`` is the
    mean of ``D`` (a stationary-measure estimate of ``lambda_1``).
    """
    if not m.is_real:
        raise NotImplementedError("coboundaries are provided over R")
    ys = dual_samples(m, dual_count, seed)
    start = np.ones(m.d) / math.sqrt(m.d)
    ch = projective_chain(m, start, n_inner, chain_samples, rng.derive_seed(seed, "forward"), burn_in)
    prev = ch.prev_points
    C, L, d = prev.shape
    phi = np.empty((C, L))
    for k in range(L):
        phi[:, k] = log_cocycle(ch.factors(k), prev[:, k])
    pts = np.concatenate([ch.start[:, None, :], ch.points], axis=1).reshape(-1, d)
    psi = psi_values(pts, ys, floor).reshape(C, L + 1)
    D = phi - psi[:, :-1] + psi[:, 1:]
    lam = Estimate.from_samples(D.ravel(), seed)
    # increments are martingale differences: use per-chain sums of squares as iid units
    dev2 = ((D - lam.point) ** 2).mean(axis=1)
    var = float(dev2.mean())
    var_se = float(np.std(dev2, ddof=1) / math.sqrt(C))
    s = math.sqrt(max(var, 0.0))
    se = var_se / (2 * s) if s > 0 else 0.0
    return SigmaEstimate(Estimate.from_mean(s, se, D.size, seed), lam)


# ---------------------------------------------------------------------------
# deviation curves


def wilson(k, n, z=Z95):
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # the endpoints at k = 0 and k = n are exactly 0 and 1
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return (lo, hi)


@dataclass(frozen=True)
class LdeRow:
    n: int
    eps: float
    p_hat: float
    ci: tuple
    trials: int
    count: int


@dataclass
class LdeCurve:
    rows: list
    measure: object
    statistic: str
    lam: Estimate | None = None

    @property
    def ns(self):
        return np.array([r.n for r in self.rows])

    @property
    def p_hat(self):
        return np.array([r.p_hat for r in self.rows])

    def is_nonincreasing(self, slack_widths=0.0):
        """No increase larger than ``slack_widths`` times the larger CI width (0 = CI overlap)."""
        for a, b in zip(self.rows, self.rows[1:]):
            width = max(a.ci[1] - a.ci[0], b.ci[1] - b.ci[0])
            if b.p_hat > a.p_hat and b.ci[0] > a.ci[1] + slack_widths * width:
                return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n", "eps", "p_hat", "ci_low", "ci_high", "trials", "count"))
        for r in self.rows:
            w.writerow((r.n, repr(r.eps), repr(r.p_hat), repr(r.ci[0]), repr(r.ci[1]), r.trials, r.count))
        return buf.getvalue()


STATISTICS = ("norm", "vec_norm", "coeff")


def _stat(b, statistic):
    return {"norm": b.log_norm, "vec_norm": b.log_vec_norm, "coeff": b.log_coeff}[statistic]


def _stat_config(m, statistic, x0, f):
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}")
    if statistic == "norm":
        return None, None
    x0 = _coerce_point(x0, m.d) or _e1(m.d)
    if statistic == "coeff":
        f = _coerce_point(f, m.d, dual=True) or ProjPoint(_e1(m.d).vector, dual=True)
        return x0, f
    return x0, None


def statistic_lambda(m: MatrixMeasure, statistic, n, trials, seed, x0=None, f=None, workers=None) -> Estimate:
    """``mean(stat_n) / n`` for one of :data:`STATISTICS` (used as ``lambda_hat`` in deviation counts)."""
    x0, f = _stat_config(m, statistic, x0, f)
    b = run_products(WalkConfig(m, n, trials, seed, x0=x0, f=f, workers=workers))
    return Estimate.from_samples(_stat(b, statistic) / n, seed)


def lde_curve(m: MatrixMeasure, statistic, eps, n_grid, trials, seed=0, x0=None, f=None, workers=None,
              lam=None) -> LdeCurve:
    """Fractions ``p_n`` of trials with ``|stat_n / n - lambda_hat| > eps`` and Wilson 95% intervals.

    ``lambda_hat`` is estimated (unless given) from the same statistic at the
    largest ``n`` on an independent seed.
    """
    x0, f = _stat_config(m, statistic, x0, f)
    n_grid = [int(n) for n in n_grid]
    if lam is None:
        lam = statistic_lambda(m, statistic, max(n_grid), trials, rng.derive_seed(seed, "lambda"), x0, f, workers)
        if eps > 0 and lam.stderr >= eps / 10:
            warnings.warn("lambda_hat stderr is not below eps / 10", LyapLabWarning)
    elif not isinstance(lam, Estimate):
        lam = Estimate.exact(lam)
    rows = []
    for n in n_grid:
        b = run_products(WalkConfig(m, n, trials, rng.derive_seed(seed, "lde", n), x0=x0, f=f, workers=workers))
        with np.errstate(invalid="ignore"):
            dev = np.abs(_stat(b, statistic) / n - lam.point) > eps
        k = int(np.count_nonzero(dev))
        rows.append(LdeRow(n, float(eps), k / trials, wilson(k, trials), trials, k))
    return LdeCurve(rows, m.describe() if hasattr(m, "describe") else m, statistic, lam)


def alignment_fraction(m: MatrixMeasure, eps, n_grid, trials, seed=0, x0=None, f=None, workers=None) -> LdeCurve:
    """Fractions of trials with ``|f(A_n x)| <= e^{-eps n} |A_n|`` (unit ``x``, ``f``)."""
    x0, f = _stat_config(m, "coeff", x0, f)
    rows = []
    for n in n_grid:
        b = run_products(WalkConfig(m, int(n), trials, rng.derive_seed(seed, "align", n), x0=x0, f=f,
                                    workers=workers))
        k = int(np.count_nonzero(b.log_coeff - b.log_norm <= -eps * n))
        rows.append(LdeRow(int(n), float(eps), k / trials, wilson(k, trials), trials, k))
    return LdeCurve(rows, m.describe(), "alignment")


# Birkhoff averages ------------------------------------------------------------

FUNCTIONALS = {
    "const": lambda x: np.ones(len(x)),
    "first_coord_sq": lambda x: x[:, 0] ** 2,
    "pair_corr": lambda x: x[:, 0] * x[:, 1],
    "abs_pair_corr": lambda x: np.abs(x[:, 0] * x[:, 1]),
}


def birkhoff_lde(m: MatrixMeasure, f, x0, eps, n_grid, trials, seed=0, target=None, target_chains=2000,
                 target_burn=1000) -> LdeCurve:
    """Deviation fractions of ``(1/n) sum_{k=1..n} f(x_k)`` from ``int f d nu`` along the projective chain.

    ``f`` is a name from :data:`FUNCTIONALS` or a callable on unit row
    vectors (it must be even in ``x`` to be a function on projective space).
    ``target`` defaults to an estimate from independent stationary chains.
    """
    fn = FUNCTIONALS[f] if isinstance(f, str) else f
    x0 = np.asarray(x0.vector if isinstance(x0, ProjPoint) else x0, dtype=np.float64)
    if target is None:
        ch = projective_chain(m, x0, 16, target_chains, rng.derive_seed(seed, "target"), target_burn)
        target = float(np.mean(fn(ch.flat())))
    n_grid = [int(n) for n in n_grid]
    ch = projective_chain(m, x0, max(n_grid), trials, rng.derive_seed(seed, "birkhoff"), burn_in=0)
    vals = np.stack([fn(ch.points[:, k]) for k in range(max(n_grid))], axis=1)
    csum = np.cumsum(vals, axis=1)
    rows = []
    for n in n_grid:
        k = int(np.count_nonzero(np.abs(csum[:, n - 1] / n - target) > eps))
        rows.append(LdeRow(n, float(eps), k / trials, wilson(k, trials), trials, k))
    name = f if isinstance(f, str) else getattr(f, "__name__", "f")
    return LdeCurve(rows, m.describe(), f"birkhoff:{name}", Estimate.exact(target))


# ---------------------------------------------------------------------------
# decay fits

MODELS = ("exp", "poly", "stretched")
RHO_RANGE = (0.05, 1.5)


@dataclass(frozen=True)
class DecayFit:
    """``exp``: ``C e^{-c n}``; ``poly``: ``C n^{-q}``; ``stretched``: ``C e^{-c n^rho}``.

    ``residual`` is the RMS error in ``log p`` over the cells used.
    """

    model: str
    C: float
    c: float
    q: float
    rho: float
    residual: float
    n_range: tuple
    dropped: tuple
    converged: bool


def _lsq(t, y):
    A = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return coef, math.sqrt(float(np.mean(r * r)))


def fit_decay(curve, model) -> DecayFit:
    """Least-squares fit of a decay model in ``(transformed n, log p)`` space.

    ``curve`` is an :class:`LdeCurve` or a pair ``(ns, ps)``.  Cells with
    ``p = 0`` are dropped and reported; fewer than four remaining cells
    raise :class:`Degenerate`.  The stretched model scans ``rho`` over
    ``[0.05, 1.5]`` and refines with a bounded 1-D search.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if isinstance(curve, LdeCurve):
        ns, ps = curve.ns.astype(np.float64), curve.p_hat
    else:
        ns, ps = (np.asarray(a, dtype=np.float64) for a in curve)
    keep = ps > 0
    dropped = tuple(int(n) for n in ns[~keep])
    ns, ps = ns[keep], ps[keep]
    if len(ns) < 4:
        raise Degenerate(f"only {len(ns)} cells with p > 0 (need 4); raise the number of trials")
    y = np.log(ps)
    rng_n = (int(ns.min()), int(ns.max()))
    if model == "exp":
        (a, b), res = _lsq(ns, y)
        return DecayFit(model, math.exp(a), -b, math.nan, 1.0, res, rng_n, dropped, -b > 0)
    if model == "poly":
        (a, b), res = _lsq(np.log(ns), y)
        return DecayFit(model, math.exp(a), math.nan, -b, math.nan, res, rng_n, dropped, -b > 0)
    scale = ns.max()

    def resid(rho):
        return _lsq((ns / scale) ** rho, y)[1]

    grid = np.linspace(*RHO_RANGE, 59)
    r = np.array([resid(x) for x in grid])
    i = int(np.argmin(r))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    opt = minimize_scalar(resid, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    rho = float(opt.x) if opt.fun <= r[i] else float(grid[i])
    (a, b), res = _lsq((ns / scale) ** rho, y)
    c = -b / scale ** rho
    return DecayFit(model, math.exp(a), c, math.nan, rho, res, rng_n, dropped, c > 0)


# ---------------------------------------------------------------------------
# stationary-measure regularity


@dataclass(frozen=True)
class ModulusFit:
    params: dict
    residual: float


@dataclass
class RegularityReport:
    radii: np.ndarray
    max_mass: np.ndarray
    holder: ModulusFit | None
    weak_holder: ModulusFit | None
    log_holder: ModulusFit | None
    degenerate: bool = False
    n_points: int = 0
    n_centers: int = 0

    def to_dict(self):
        def fd(f):
            return None if f is None else {"params": f.params, "residual": f.residual}
        return {"radii": [float(r) for r in self.radii], "max_mass": [float(x) for x in self.max_mass],
                "holder": fd(self.holder), "weak_holder": fd(self.weak_holder), "log_holder": fd(self.log_holder),
                "degenerate": self.degenerate, "n_points": self.n_points, "n_centers": self.n_centers}


def _centers(X, n_centers, seed):
    N, d = X.shape
    key = rng.split(rng.derive_seed(seed, "centers"), 0)
    u = rng.uniform(key, np.arange(n_centers, dtype=np.uint64))
    idx = np.minimum((u * N).astype(np.int64), N - 1)
    C = X[idx]
    if d == 2:
        probe = np.stack([-C[:, 1], C[:, 0]], axis=1)
    else:
        g = rng.normal(key, np.arange(n_centers * d, dtype=np.uint64) + np.uint64(n_centers)).reshape(-1, d)
        probe = g / vnorm(g)[:, None]
    return np.concatenate([C, probe])


def ball_masses(points, radii, centers, chunk=256):
    """``max_c nu_hat(B_eps(c))`` under the sine distance, for each radius."""
    X = np.asarray(points, dtype=np.float64)
    X = X / vnorm(X)[:, None]
    radii = np.asarray(radii, dtype=np.float64)
    best = np.zeros(len(radii))
    for s in range(0, len(centers), chunk):
        c = np.clip(np.abs(centers[s:s + chunk] @ X.T), 0.0, 1.0)
        sines = np.sort(np.sqrt(np.maximum(0.0, 1.0 - c * c)), axis=1)
        counts = np.stack([np.searchsorted(row, radii, side="right") for row in sines])
        best = np.maximum(best, counts.max(axis=0) / X.shape[0])
    return best


def regularity_report(points, radii, centers=None, n_centers=256, seed=0) -> RegularityReport:
    """Largest ball masses of an empirical measure and fits under three moduli.

    Hölder ``C eps^a``, weak-Hölder ``exp(-c (log 1/eps)^rho)`` and
    log-Hölder ``C |log eps|^-a``.  Centers are sampled atoms plus
    orthogonal probes unless given.  Fits need at least three radii with
    mass strictly between 0 and 1; otherwise the report is flagged
    ``degenerate`` and the fits are ``None``.
    """
    X = np.asarray(points, dtype=np.float64)
    if len(X) < 10_000:
        warnings.warn("fewer than 10^4 points: small-radius masses are unresolved", LyapLabWarning)
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    C = _centers(X / vnorm(X)[:, None], n_centers, seed) if centers is None else np.asarray(centers, dtype=np.float64)
    C = C / vnorm(C)[:, None]
    mass = ball_masses(X, radii, C)
    ok = (mass > 0) & (mass < 1) & (radii < 1)
    rep = RegularityReport(radii, mass, None, None, None, True, len(X), len(C))
    if np.count_nonzero(ok) < 3:
        return rep
    r, mm = radii[ok], mass[ok]
    y = np.log(mm)
    (a, b), res = _lsq(np.log(r), y)
    rep.holder = ModulusFit({"C": math.exp(a), "alpha": b}, res)
    L = np.log(1 / r)
    (a2, b2), _ = _lsq(np.log(L), np.log(-y))
    pred = -math.exp(a2) * L ** b2
    rep.weak_holder = ModulusFit({"c": math.exp(a2), "rho": b2}, math.sqrt(float(np.mean((y - pred) ** 2))))
    (a3, b3), res3 = _lsq(np.log(L), y)
    rep.log_holder = ModulusFit({"C": math.exp(a3), "alpha": -b3}, res3)
    rep.degenerate = False
    return rep


# ---------------------------------------------------------------------------
# martingale diagnostics


@dataclass(frozen=True)
class MartingaleDiagnostics:
    p: float
    N1_hat: float
    N2_hat: float


def martingale_diagnostics(increments, p, eps) -> MartingaleDiagnostics:
    """Moment and tail controls of martingale increments.

    ``increments`` is ``(chains, n)`` (or a :class:`Decomposition`); ``N1_hat``
    is the largest over steps ``k`` of the mean of ``|phi_k|^p`` across
    chains, and ``N2_hat`` the smallest threshold ``t`` among ``0`` and the
    observed ``|phi|`` with ``mean(|phi| 1{|phi| > t}) < eps / 3``.
    """
    phi = getattr(increments, "increments", increments)
    a = np.abs(np.asarray(phi, dtype=np.float64))
    if a.ndim == 1:
        a = a[:, None]
    n1 = float((a ** p).mean(axis=0).max())
    flat = np.sort(a.ravel())
    cum = np.concatenate([[0.0], np.cumsum(flat)])
    cand = np.unique(np.concatenate([[0.0], flat]))
    tail = (cum[-1] - cum[np.searchsorted(flat, cand, side="right")]) / flat.size
    hit = np.nonzero(tail < eps / 3)[0]
    n2 = float(cand[hit[0]]) if len(hit) else float(flat[-1])
    return MartingaleDiagnostics(float(p), n1, n2)


def gaussian_abs_moment(s, p):
    """``E|Z|^p`` for ``Z ~ Normal(0, s^2)``."""
    return s ** p * 2 ** (p / 2) * gamma_fn((p + 1) / 2) / math.sqrt(math.pi)


def decomposed_increments(m: MatrixMeasure, x0, n, chains, seed=0, inner_samples=64, burn_in=0):
    """Martingale increments of the log-norm cocycle along ``chains`` projective chains."""
    ch = projective_chain(m, x0, n, chains, seed, burn_in)
    return cocycle_decompose(ch, inner_samples, rng.derive_seed(seed, "inner"))


# ---------------------------------------------------------------------------
# family sweeps


@dataclass
class SweepResult:
    estimates: list
    inf: Estimate
    sup: Estimate
    argmin: int
    argmax: int
    distances: list | None = None

    def rows(self):
        out = []
        for i, e in enumerate(self.estimates):
            dist = None if self.distances is None else self.distances[i]
            out.append((i, e.point, e.stderr, dist))
        return out


ESTIMATORS = {
    "lyap_top": lambda m, n, t, s, w: lyap_top(m, n, t, seed=s, workers=w),
    "gap": lambda m, n, t, s, w: gap(m, n, t, seed=s, workers=w),
    "lyap_sum2": lambda m, n, t, s, w: lyap_sum2(m, n, t, seed=s, workers=w),
    "sigma_direct": lambda m, n, t, s, w: sigma_direct(m, None, n, t, seed=s, workers=w).sigma,
}


def family_sweep(measures, estimator="lyap_top", n=100, trials=1000, seed=0, workers=None,
                 gauge: GaugeSpec | None = None, reference=0) -> SweepResult:
    """Evaluate one estimator over a family with common random numbers (shared ``seed``).

    With ``gauge`` set, exact concave-Wasserstein distances from
    ``measures[reference]`` are added so estimates can be plotted against
    distance.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("empty family")
    f0 = measures[0]
    for m in measures:
        if m.field != f0.field or m.d != f0.d:
            raise ValueError("family members must share field and dimension")
    fn = ESTIMATORS[estimator] if isinstance(estimator, str) else estimator
    ests = [fn(m, n, trials, seed, workers) for m in measures]
    pts = np.array([e.point for e in ests])
    lo, hi = int(np.argmin(pts)), int(np.argmax(pts))
    dists = None
    if gauge is not None:
        from .transport import w_concave_exact
        dists = [w_concave_exact(measures[reference], m, gauge).primal_cost for m in measures]
    return SweepResult(ests, ests[lo], ests[hi], lo, hi, dists)


def lipschitz_envelope(distances, deltas):
    """Smallest ``C`` with ``|delta_i| <= C d_i`` over points with ``d_i > 0``."""
    d = np.asarray(distances, dtype=np.float64)
    x = np.abs(np.asarray(deltas, dtype=np.float64))
    ok = d > 0
    return float(np.max(x[ok] / d[ok])) if ok.any() else 0.0


# ---------------------------------------------------------------------------
# heuristic warnings


def contraction_check(m: MatrixMeasure, n=64, trials=256, seed=0):
    """Mean ``log gamma(A_n)`` at ``n`` and ``2n``; warns when it does not decrease."""
    g1 = run_products(WalkConfig(m, n, trials, seed, record_kak=True)).gamma_n
    g2 = run_products(WalkConfig(m, 2 * n, trials, seed, record_kak=True)).gamma_n
    with np.errstate(divide="ignore"):
        a, b = float(np.mean(np.log(g1))), float(np.mean(np.log(g2)))
    if not b < a - 1e-9:
        warnings.warn("gamma(A_n) does not decrease with n: the measure may not be contracting", LyapLabWarning)
    return a, b


def invariant_subspace_check(m: MatrixMeasure, tol=1e-9):
    """For atomic real measures: eigenlines of one atom invariant under all atoms trigger a warning."""
    if not (m.is_atomic and m.is_real):
        return []
    mats = m.atom_arrays()
    hits = []
    for a in mats:
        w, v = np.linalg.eig(a)
        for j in range(len(w)):
            if abs(w[j].imag) > tol:
                continue
            x = np.real(v[:, j])
            x = x / np.linalg.norm(x)
            if any(abs(abs(float(x @ h)) - 1.0) <= tol for h in hits):
                continue
            if all(np.linalg.norm(b @ x - (x @ b @ x) * x) <= tol * max(1.0, np.linalg.norm(b)) for b in mats):
                hits.append(x)
    if hits:
        warnings.warn("a line invariant under every atom was found: the measure is not strongly irreducible",
                      LyapLabWarning)
    return hits
