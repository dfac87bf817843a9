"""Length statistics of random words in surface-group representations into SL_2(R)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, InvalidRep, NotHyperbolic
from .estimators import _jackknife_std, lipschitz_envelope
from .linalg import Matrix, group_distance
from .measures import Estimate, MatrixMeasure
from .transport import w_infinity
from .walk import WalkConfig, run_products

RELATOR_TOL = 1e-9
DET_TOL = 1e-12
TRACE_TOL = 1e-12
LENGTH_MODES = ("norm", "translation")


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class SurfaceRep:
    """Generators ``g_0..g_{k-1}`` and the symmetric alphabet ``(g_0..g_{k-1}, g_0^-1..g_{k-1}^-1)``.

    ``relator`` indexes the alphabet (``i < k`` is ``g_i``, ``k + i`` is
    ``g_i^-1``); closed representations must send it to ``+-I``.
    """

    generators: tuple
    relator: tuple | None = None
    kind: str = "finite"
    name: str = "custom"

    def __post_init__(self):
        gens = tuple(g if isinstance(g, Matrix) else Matrix(np.asarray(g, dtype=np.float64), check=False)
                     for g in self.generators)
        object.__setattr__(self, "generators", gens)
        if self.kind not in ("closed", "finite"):
            raise InvalidRep("kind must be 'closed' or 'finite'")
        for g in gens:
            if g.d != 2 or not g.is_real:
                raise InvalidRep("generators must be real 2x2 matrices")
            if abs(float(np.linalg.det(g.entries)) - 1.0) > DET_TOL:
                raise InvalidRep("generator determinant differs from 1 by more than 1e-12")
        if self.kind == "closed":
            if self.relator is None:
                raise InvalidRep("closed representations need a relator")
            if self.relator_residual() >= RELATOR_TOL:
                raise InvalidRep(f"relator residual {self.relator_residual():.3e} is not below {RELATOR_TOL}")

    @property
    def alphabet(self):
        return self.generators + tuple(g.inverse() for g in self.generators)

    def evaluate(self, word):
        a = self.alphabet
        p = np.eye(2)
        for i in word:
            p = p @ a[i].entries
        return p

    def relator_residual(self):
        """``min(|R - I|, |R + I|)`` (max-entry norm) for the relator ``R``; sign ambiguity is PSL_2."""
        if self.relator is None:
            return math.nan
        p = self.evaluate(self.relator)
        return float(min(np.abs(p - np.eye(2)).max(), np.abs(p + np.eye(2)).max()))

    def measure(self) -> MatrixMeasure:
        """Uniform measure on the symmetric alphabet (uniform non-reduced words)."""
        return MatrixMeasure.from_atoms(self.alphabet)

    def generator_measure(self) -> MatrixMeasure:
        return MatrixMeasure.from_atoms(self.generators)

    def deformed(self, t, index=1) -> "SurfaceRep":
        """``g_index -> diag(e^t, e^-t) g_index``; relator not enforced (formal deformation)."""
        gens = list(self.generators)
        gens[index] = Matrix(np.diag([math.exp(t), math.exp(-t)]) @ gens[index].entries, check=False)
        return SurfaceRep(tuple(gens), self.relator, "finite", f"{self.name}+t{t:g}")


def octagon_rep() -> SurfaceRep:
    """Genus-2 surface group from the regular hyperbolic octagon (angles 2 pi / 8).

    ``T = diag(e^{l/2}, e^{-l/2})`` with ``cosh(l/2) = 1 + sqrt(2)`` pairs
    opposite sides; ``g_k = R(k pi/8) T R(k pi/8)^-1`` where the matrix
    rotation ``R(k pi/8)`` turns the plane by ``k pi/4`` about ``i``.  The
    relator is ``g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3``.
    """
    half = math.acosh(1 + math.sqrt(2))
    T = np.diag([math.exp(half), math.exp(-half)])
    gens = []
    for k in range(4):
        r = rotation(k * math.pi / 8)
        g = r @ T @ r.T
        # exact symmetric form keeps det = 1 to rounding
        gens.append(Matrix(g, check=False))
    relator = (0, 5, 2, 7, 4, 1, 6, 3)
    rep = SurfaceRep(tuple(gens), relator, "finite", "octagon")
    res = rep.relator_residual()
    if not res < RELATOR_TOL:
        raise ConstructionError(f"octagon relator residual {res:.3e}")
    return SurfaceRep(rep.generators, relator, "closed", "octagon")


HYPERBOLIC_LOG_MARGIN = math.log1p(TRACE_TOL / 2)


def translation_from_log_trace(log_tr):
    """``2 arccosh(|tr| / 2)`` from ``log|tr|``, stable for huge traces.

    NaN when ``|tr| <= 2 + 1e-12``, the same cut as :func:`trace_length`, so
    rounding noise on identity words does not count as hyperbolic.
    """
    x = np.asarray(log_tr, dtype=np.float64) - math.log(2.0)
    with np.errstate(invalid="ignore", over="ignore"):
        inner = -np.expm1(-2 * x)
        out = 2 * (x + np.log1p(np.sqrt(inner)))
    return np.where(x > HYPERBOLIC_LOG_MARGIN, out, np.nan)


def trace_length(m) -> float:
    """Translation length ``2 arccosh(|tr M| / 2)``; raises :class:`NotHyperbolic` if ``|tr| <= 2``."""
    a = m.entries if isinstance(m, Matrix) else np.asarray(m, dtype=np.float64)
    tr = abs(float(a[0, 0] + a[1, 1]))
    if not tr > 2 + TRACE_TOL:
        raise NotHyperbolic(f"|trace| = {tr!r} is not above 2")
    return 2 * math.acosh(tr / 2)


@dataclass(frozen=True)
class GeodesicStats:
    L_hat: Estimate
    sigma_hat: Estimate
    hyperbolic_fraction: float
    n: int
    trials: int
    seed: int
    length_mode: str = "norm"

    def to_dict(self):
        return {"L_hat": self.L_hat.to_dict(), "sigma_hat": self.sigma_hat.to_dict(),
                "hyperbolic_fraction": self.hyperbolic_fraction, "n": self.n, "trials": self.trials,
                "seed": self.seed, "length_mode": self.length_mode}


def word_lengths(rep, n, trials, seed=0, length_mode="norm", workers=None):
    """Per-trial lengths of uniform random words; NaN marks non-hyperbolic words in translation mode."""
    if length_mode not in LENGTH_MODES:
        raise ValueError(f"length_mode must be one of {LENGTH_MODES}")
    m = rep.measure() if isinstance(rep, SurfaceRep) else rep
    b = run_products(WalkConfig(m, n, trials, seed, record_trace=length_mode == "translation", workers=workers))
    if length_mode == "norm":
        return b.log_norm
    return translation_from_log_trace(b.log_trace)


def _stats(lengths, n, trials, seed, mode):
    ok = np.isfinite(lengths)
    x = lengths[ok]
    frac = float(np.count_nonzero(ok) / trials)
    L = Estimate.from_samples(x / n, seed)
    s, se = _jackknife_std((x - n * L.point) / math.sqrt(n)) if len(x) > 1 else (0.0, 0.0)
    return GeodesicStats(L, Estimate.from_mean(s, se, len(x), seed), frac, n, trials, seed, mode)


def word_length_stats(rep, n, trials, length_mode="norm", seed=0, workers=None) -> GeodesicStats:
    """Growth rate ``L_hat = mean(length) / n`` and CLT spread of word lengths.

    ``norm`` uses ``log|A|``; ``translation`` uses ``2 arccosh(|tr A| / 2)``
    and skips non-hyperbolic words (``hyperbolic_fraction`` reports the rest).
    """
    return _stats(word_lengths(rep, n, trials, seed, length_mode, workers), n, trials, seed, length_mode)


def w_infinity_rep_distance(rep1: SurfaceRep, rep2: SurfaceRep, over="generators") -> float:
    """``max_h |rho_2(h) - rho_1(h)|`` over index-aligned generators (or the full alphabet)."""
    if over not in ("generators", "alphabet"):
        raise ValueError("over must be 'generators' or 'alphabet'")
    a = rep1.generators if over == "generators" else rep1.alphabet
    b = rep2.generators if over == "generators" else rep2.alphabet
    if len(a) != len(b):
        raise InvalidRep("representations have different alphabets")
    return max(group_distance(x, y) for x, y in zip(a, b))


def w_infinity_measures(rep1: SurfaceRep, rep2: SurfaceRep) -> float:
    """General-purpose bottleneck distance between the uniform generator measures."""
    return w_infinity(rep1.generator_measure(), rep2.generator_measure())


@dataclass(frozen=True)
class SweepRow:
    t: float
    w_inf: float
    stats: GeodesicStats
    delta_L: Estimate
    relator_residual: float


def deformation_sweep(rep: SurfaceRep, t_grid, n, trials, seed=0, length_mode="norm", index=1, workers=None):
    """Statistics along ``g_index -> diag(e^t, e^-t) g_index`` with common random numbers.

    ``delta_L`` is the paired difference ``L_hat(t) - L_hat(0)`` (same word
    draws), whose standard error is far below that of either estimate.
    """
    base = word_lengths(rep, n, trials, seed, length_mode, workers)
    rows = []
    for t in t_grid:
        t = float(t)
        r = rep.deformed(t, index) if t != 0 else rep
        x = base if t == 0 else word_lengths(r, n, trials, seed, length_mode, workers)
        st = _stats(x, n, trials, seed, length_mode)
        both = np.isfinite(x) & np.isfinite(base)
        dl = Estimate.from_samples((x[both] - base[both]) / n, seed)
        rows.append(SweepRow(t, w_infinity_rep_distance(rep, r), st, dl, r.relator_residual()))
    return rows


def linear_envelope(rows, min_abs_t=0.0):
    """Smallest ``C`` with ``|delta_L| <= C W_inf`` over rows with ``|t| >= min_abs_t`` and ``W_inf > 0``.

    Fitting on the coarse part of a grid and checking the fine part gives an
    out-of-sample continuity check.
    """
    use = [r for r in rows if abs(r.t) >= min_abs_t]
    return lipschitz_envelope([r.w_inf for r in use], [r.delta_L.point for r in use])
