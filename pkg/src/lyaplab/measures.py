"""Probability measures on matrix groups, concave gauges and moment functionals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import rng
from .errors import InvalidGauge, InvalidMeasure
from .field import REAL, PAdicField, PAdicScalar
from .linalg import (Matrix, group_distance, identity, log_operator_norm, opnorm_batch)

ATOM_WEIGHT_TOL = 1e-12
# uniforms reserved per step; families use counters 4*step .. 4*step+3
DRAWS_PER_STEP = 4


# ---------------------------------------------------------------------------
# gauges


@dataclass(frozen=True)
class GaugeSpec:
    """Concave gauge applied to a distance: ``log(p)``, ``slog(delta)``, ``frac(alpha)`` or ``identity``."""

    kind: str
    param: float = 1.0

    def __post_init__(self):
        k, a = self.kind, self.param
        if k == "log" and not a >= 1:
            raise InvalidGauge(f"log gauge needs p >= 1, got {a}")
        if k == "slog" and not 0 < a < 1:
            raise InvalidGauge(f"slog gauge needs 0 < delta < 1, got {a}")
        if k == "frac" and not 0 < a <= 1:
            raise InvalidGauge(f"frac gauge needs 0 < alpha <= 1, got {a}")
        if k not in ("log", "slog", "frac", "identity"):
            raise InvalidGauge(f"unknown gauge kind {k!r}")

    @property
    def knee(self) -> float:
        """Splice point between the linear piece and the original function."""
        if self.kind == "log":
            return math.exp(self.param)
        if self.kind == "slog":
            d = self.param
            return math.exp(d ** (1.0 / (1.0 - d)))
        return 0.0

    def __call__(self, t):
        return gauge_eval(self, t)

    def __str__(self):
        return self.kind if self.kind == "identity" else f"{self.kind}({self.param:g})"

    @classmethod
    def parse(cls, text: str) -> "GaugeSpec":
        text = text.strip()
        if text == "identity":
            return cls("identity")
        name, _, rest = text.partition("(")
        if not rest.endswith(")"):
            raise InvalidGauge(f"cannot parse gauge {text!r}")
        return cls(name.strip(), float(rest[:-1]))


def gauge_eval(g: GaugeSpec, t):
    """Evaluate the gauge; vectorizes over ``t`` (returns a float for scalar input)."""
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("gauge argument must be nonnegative")
    if g.kind == "identity":
        out = t.copy()
    elif g.kind == "frac":
        out = t ** g.param
    elif g.kind == "log":
        p = g.param
        x0 = math.exp(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t < x0, (p / math.e) ** p * t, np.log(np.maximum(t, x0)) ** p)
    else:
        d = g.param
        x0 = g.knee
        slope = math.exp(math.log(x0) ** d) / x0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t <= x0, slope * t, np.exp(np.log(np.maximum(t, x0)) ** d))
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class Estimate:
    point: float
    stderr: float
    ci95: tuple
    n_samples: int
    seed: int = 0

    @classmethod
    def exact(cls, value, n_samples=0, seed=0):
        value = float(value)
        return cls(value, 0.0, (value, value), int(n_samples), int(seed))

    @classmethod
    def from_mean(cls, point, stderr, n_samples, seed=0):
        point, stderr = float(point), float(stderr)
        return cls(point, stderr, (point - 1.96 * stderr, point + 1.96 * stderr), int(n_samples), int(seed))

    @classmethod
    def from_samples(cls, x, seed=0):
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls.from_mean(float(np.mean(x)), se, n, seed)

    def to_dict(self):
        return {"estimate": self.point, "stderr": self.stderr, "ci": list(self.ci95),
                "n_samples": self.n_samples, "seed": self.seed}


# ---------------------------------------------------------------------------
# measures


FAMILIES = ("atoms", "diag_lognormal", "rotation", "anderson", "padic_diagonal", "pushforward")


@dataclass(frozen=True, eq=False)
class MatrixMeasure:
    """A finite atomic measure or a seedable parametric sampler on SL_d / GL_d.

    Atomic measures keep ``atoms`` and ``weights``; parametric families keep
    their ``params``.  ``moment_class`` records which gauge classes the user
    asserts to be finite (informational only).
    """

    family: str
    params: dict = dc_field(default_factory=dict)
    atoms: tuple = ()
    weights: tuple = ()
    field: object = REAL
    d: int = 2
    mode: str = "SL"
    moment_class: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidMeasure(f"unknown family {self.family!r}")
        if self.family == "atoms":
            if not self.atoms:
                raise InvalidMeasure("atomic measure needs at least one atom")
            w = np.asarray(self.weights, dtype=np.float64)
            if len(w) != len(self.atoms) or np.any(w <= 0):
                raise InvalidMeasure("weights must be positive, one per atom")
            if abs(w.sum() - 1.0) > ATOM_WEIGHT_TOL:
                raise InvalidMeasure(f"weights sum to {w.sum()!r}, not 1")
            a0 = self.atoms[0]
            for a in self.atoms:
                if a.field != a0.field or a.d != a0.d or a.mode != a0.mode:
                    raise InvalidMeasure("atoms must share field, dimension and mode")
            object.__setattr__(self, "field", a0.field)
            object.__setattr__(self, "d", a0.d)
            object.__setattr__(self, "mode", a0.mode)
            object.__setattr__(self, "weights", tuple(float(x) for x in w))

    # constructors -------------------------------------------------------
    @classmethod
    def from_atoms(cls, atoms, weights=None, moment_class=()):
        atoms = tuple(atoms)
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms)
        return cls("atoms", atoms=atoms, weights=tuple(weights), moment_class=moment_class)

    @classmethod
    def dirac(cls, m: Matrix):
        return cls.from_atoms([m], [1.0])

    @classmethod
    def diag_lognormal(cls, mean, sd):
        """``diag(e^X, e^-X)`` with ``X ~ Normal(mean, sd^2)``."""
        return cls("diag_lognormal", {"mean": float(mean), "sd": float(sd)})

    @classmethod
    def rotation(cls):
        """Haar measure on SO(2)."""
        return cls("rotation")

    @classmethod
    def padic_diagonal(cls, p, ks, weights=None, prec=32):
        """``diag(p^-k, p^k)`` with ``k`` drawn from a finite law."""
        ks = tuple(int(k) for k in ks)
        if weights is None:
            weights = [1.0 / len(ks)] * len(ks)
        w = tuple(float(x) for x in weights)
        if abs(sum(w) - 1) > ATOM_WEIGHT_TOL:
            raise InvalidMeasure("k-law weights must sum to 1")
        return cls("padic_diagonal", {"p": int(p), "ks": ks, "weights": w}, field=PAdicField(int(p), prec))

    # properties ---------------------------------------------------------
    @property
    def is_atomic(self):
        return self.family == "atoms"

    @property
    def is_real(self):
        return self.field is REAL

    @property
    def is_monomial(self):
        """True when every matrix in the support has one nonzero entry per row and column."""
        if self.family == "padic_diagonal":
            return True
        if self.family == "atoms" and not self.is_real:
            return all(_monomial_form(a) is not None for a in self.atoms)
        return False

    def atom_arrays(self):
        return np.stack([a.entries for a in self.atoms])

    def cum_weights(self):
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def describe(self):
        if self.is_atomic:
            return {"atoms": [[a.to_rows(), w] for a, w in zip(self.atoms, self.weights)],
                    "field": str(self.field), "mode": self.mode}
        params = {k: (v.describe() if hasattr(v, "describe") else v) for k, v in self.params.items()}
        return {"family": self.family, "params": params}

    # sampling -----------------------------------------------------------
    def draw_index(self, u):
        return np.searchsorted(self.cum_weights(), u, side="right").clip(0, len(self.weights) - 1)

    def from_uniforms(self, u):
        """Map per-step uniform blocks ``u[..., 0:4]`` to real matrices ``(..., d, d)``."""
        fam = self.family
        shape = u.shape[:-1]
        if fam == "atoms":
            if not self.is_real:
                raise InvalidMeasure("p-adic atoms have no array form")
            return self.atom_arrays()[self.draw_index(u[..., 0])]
        if fam == "diag_lognormal":
            from scipy.special import ndtri
            x = self.params["mean"] + self.params["sd"] * ndtri(u[..., 0])
            out = np.zeros(shape + (2, 2))
            out[..., 0, 0] = np.exp(x)
            out[..., 1, 1] = np.exp(-x)
            return out
        if fam == "rotation":
            th = 2.0 * math.pi * u[..., 0]
            c, s = np.cos(th), np.sin(th)
            out = np.empty(shape + (2, 2))
            out[..., 0, 0] = c
            out[..., 0, 1] = -s
            out[..., 1, 0] = s
            out[..., 1, 1] = c
            return out
        if fam == "anderson":
            v = self.params["potential"].from_uniforms(u)
            e = self.params["energy"]
            out = np.empty(shape + (2, 2))
            out[..., 0, 0] = e - v
            out[..., 0, 1] = -1.0
            out[..., 1, 0] = 1.0
            out[..., 1, 1] = 0.0
            return out
        if fam == "pushforward":
            from .transport import apply_array_map
            return apply_array_map(self.params["map"], self.params["base"].from_uniforms(u))
        raise InvalidMeasure(f"family {fam!r} has no real sampler")

    def uniforms(self, keys, step):
        keys = np.asarray(keys, dtype=np.uint64)
        base = DRAWS_PER_STEP * np.asarray(step, dtype=np.uint64)
        return np.stack([rng.uniform(keys, base + np.uint64(j)) for j in range(DRAWS_PER_STEP)], axis=-1)

    def draw(self, keys, step):
        """Real matrices for each stream key at position ``step``: shape ``(len(keys), d, d)``."""
        return self.from_uniforms(self.uniforms(keys, step))

    def draw_monomial(self, keys, step):
        """Exact monomial draws ``(perm, valuations)`` for p-adic monomial measures.

        ``perm[t, i]`` is the column of the nonzero entry of row ``i`` and
        ``vals[t, i]`` its valuation; unit parts are tracked only through the
        valuation (norms are all the estimators consume).
        """
        u = self.uniforms(keys, step)[..., 0]
        if self.family == "padic_diagonal":
            ks = np.asarray(self.params["ks"], dtype=np.int64)
            c = np.cumsum(self.params["weights"])
            c[-1] = 1.0
            k = ks[np.searchsorted(c, u, side="right").clip(0, len(ks) - 1)]
            perm = np.broadcast_to(np.arange(2), k.shape + (2,))
            return perm, np.stack([-k, k], axis=-1)
        forms = [_monomial_form(a) for a in self.atoms]
        perms = np.array([f[0] for f in forms])
        vals = np.array([f[1] for f in forms])
        idx = self.draw_index(u)
        return perms[idx], vals[idx]

    def draw_scaled(self, keys, step):
        """Anderson factors divided by ``s = max(1, |E - V|)``, with ``log s``.

        Keeps heavy-tailed potentials (``|V|`` beyond the float range) usable.
        """
        if self.family != "anderson":
            return self.draw(keys, step), None
        u = self.uniforms(keys, step)
        v, logv = self.params["potential"].sample_with_log(u)
        a = self.params["energy"] - v
        finite = np.isfinite(a)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            log_s = np.where(finite, np.log(np.maximum(np.abs(np.where(finite, a, 1.0)), 1.0)), logv)
            inv_s = np.exp(-log_s)
            lead = np.where(finite, a * inv_s, -np.sign(v))
        out = np.empty(a.shape + (2, 2))
        out[..., 0, 0] = lead
        out[..., 0, 1] = -inv_s
        out[..., 1, 0] = inv_s
        out[..., 1, 1] = 0.0
        return out, log_s

    def draw_matrices(self, key, count):
        """``count`` consecutive draws from one stream, as Matrix objects."""
        keys = np.full(count, key, dtype=np.uint64)
        steps = np.arange(count, dtype=np.uint64)
        if self.is_real:
            arrs = self.from_uniforms(self.uniforms(keys, steps))
            return [Matrix(a, REAL, self.mode, check=False) for a in arrs]
        if self.family == "atoms":
            idx = self.draw_index(self.uniforms(keys, steps)[..., 0])
            return [self.atoms[i] for i in idx]
        perm, vals = self.draw_monomial(keys, steps)
        return [_monomial_matrix(pm, vl, self.field, self.mode) for pm, vl in zip(perm, vals)]


def _monomial_form(m: Matrix):
    if m.is_real:
        return None
    perm, vals = [], []
    for row in m.entries:
        nz = [j for j, x in enumerate(row) if not x.is_zero]
        if len(nz) != 1:
            return None
        perm.append(nz[0])
        vals.append(row[nz[0]].v)
    if sorted(perm) != list(range(m.d)):
        return None
    return perm, vals


def _monomial_matrix(perm, vals, fld, mode):
    d = len(perm)
    rows = [[fld.zero() for _ in range(d)] for _ in range(d)]
    for i, (j, v) in enumerate(zip(perm, vals)):
        rows[i][j] = PAdicScalar(fld.p, int(v), 1, fld.prec)
    return Matrix(rows, fld, mode, check=False)


def sample(m: MatrixMeasure, seed, count):
    """``count`` i.i.d. draws, deterministic in ``(seed, count)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return m.draw_matrices(int(rng.split(seed, 0)), count)


# ---------------------------------------------------------------------------
# moments


def _proxy_log(m: MatrixMeasure, mats):
    """log of ||M|| (SL) or max(||M||, ||M^-1||) (GL) for each matrix."""
    out = []
    for a in mats:
        ln = log_operator_norm(a)
        if m.mode == "GL":
            ln = max(ln, log_operator_norm(a.inverse()))
        out.append(ln)
    return np.asarray(out)


def _proxy_log_batch(m, arr, log_scale=None):
    ln = np.log(opnorm_batch(arr))
    if log_scale is not None:
        ln = ln + log_scale
    if m.mode == "GL":
        ln = np.maximum(ln, np.log(opnorm_batch(np.linalg.inv(arr))))
    return ln


def membership_value(g: GaugeSpec, logr):
    """Integrand of the membership moment given ``log`` of the norm proxy."""
    logr = np.asarray(logr, dtype=np.float64)
    pos = np.maximum(logr, 0.0)
    if g.kind == "log":
        return pos ** g.param
    if g.kind == "slog":
        return np.exp(pos ** g.param)
    if g.kind == "frac":
        return np.exp(g.param * logr)
    return np.exp(logr)


def _integrand(m, g, variant, mats=None, arr=None, log_scale=None):
    if variant == "membership":
        logr = _proxy_log(m, mats) if mats is not None else _proxy_log_batch(m, arr, log_scale)
        return membership_value(g, logr)
    if variant == "metric":
        if mats is None:
            if log_scale is not None:
                arr = arr * np.exp(log_scale)[:, None, None]
            mats = [Matrix(a, REAL, m.mode, check=False) for a in arr]
        one = identity(m.d, m.field, m.mode)
        return gauge_eval(g, np.array([float(group_distance(a, one)) for a in mats]))
    raise ValueError(f"unknown moment variant {variant!r}")


def _draws(m, n_samples, seed):
    key = rng.split(seed, 1)
    keys = np.full(n_samples, key, dtype=np.uint64)
    steps = np.arange(n_samples, dtype=np.uint64)
    if m.family == "anderson":
        # scaled draws keep log-norms finite for heavy-tailed potentials
        return (None,) + m.draw_scaled(keys, steps)
    if m.is_real:
        return None, m.from_uniforms(m.uniforms(keys, steps)), None
    return m.draw_matrices(int(key), n_samples), None, None


def moment(m: MatrixMeasure, g: GaugeSpec, variant="membership", n_samples=10_000, seed=0) -> Estimate:
    """Gauge moment of ``m``; exact weighted sum when ``m`` is atomic."""
    if m.is_atomic:
        vals = _integrand(m, g, variant, mats=list(m.atoms))
        return Estimate.exact(float(np.dot(m.weights, vals)), len(m.atoms), seed)
    mats, arr, log_s = _draws(m, n_samples, seed)
    return Estimate.from_samples(_integrand(m, g, variant, mats=mats, arr=arr, log_scale=log_s), seed)


def tail_mass(m: MatrixMeasure, g: GaugeSpec, threshold, variant="membership", n_samples=10_000, seed=0) -> Estimate:
    """``E[G 1{G > T}]`` for the gauge integrand ``G`` of the chosen variant."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if m.is_atomic:
        vals = _integrand(m, g, variant, mats=list(m.atoms))
        vals = np.where(vals > threshold, vals, 0.0)
        return Estimate.exact(float(np.dot(m.weights, vals)), len(m.atoms), seed)
    mats, arr, log_s = _draws(m, n_samples, seed)
    vals = _integrand(m, g, variant, mats=mats, arr=arr, log_scale=log_s)
    return Estimate.from_samples(np.where(vals > threshold, vals, 0.0), seed)


def empirical(m: MatrixMeasure, n_atoms, seed) -> MatrixMeasure:
    """Uniform atomic measure on ``n_atoms`` draws (atomic input is returned unchanged)."""
    if m.is_atomic:
        return m
    return MatrixMeasure.from_atoms(sample(m, seed, n_atoms))
