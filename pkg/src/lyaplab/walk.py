"""Random matrix products, projective chains and the martingale decomposition.

Trials are simulated in vectorized blocks.  Every random draw depends only on
``(trial key, step)`` through :mod:`lyaplab.rng` and every arithmetic kernel
acts row-by-row, so a trial's record is bit-identical whatever block or worker
processes it.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import rng
from .errors import NumericalFailure, TooLarge
from .field import PAdicScalar, log_abs
from .linalg import (Matrix, ProjPoint, bmm, bmv, opnorm_batch, vnorm, wedge2_batch, _padd, _pdot,
                     wedge2 as wedge2_matrix)
from .measures import MatrixMeasure
from .transport import apply_array_map, solve_exact

BLOCK = 8192
CSV_COLUMNS = ("trial", "n", "log_norm", "log_vec_norm", "log_coeff", "log_wedge", "gamma_n")


def default_workers():
    return int(os.environ.get("LYAPLAB_WORKERS", "1"))


@dataclass(frozen=True)
class WalkConfig:
    measure: MatrixMeasure
    n: int
    trials: int
    master_seed: int = 0
    x0: ProjPoint | None = None
    f: ProjPoint | None = None
    renorm_period: int = 8
    record_wedge: bool = False
    record_kak: bool = False
    record_trace: bool = False
    workers: int | None = None
    map: str | None = None  # optional array map applied to each factor (e.g. "inverse_transpose")

    def __post_init__(self):
        if self.n < 1 or self.trials < 1 or self.renorm_period < 1:
            raise ValueError("n, trials and renorm_period must be >= 1")
        if self.f is not None and self.x0 is None:
            raise ValueError("a functional f needs a start vector x0")
        if self.f is not None and not self.f.dual:
            raise ValueError("f must be a dual projective point")


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    log_norm: float
    log_vec_norm: float = math.nan
    log_coeff: float = math.nan
    log_wedge_norm: float = math.nan
    gamma_n: float = math.nan
    endpoint: object = None
    trial_seed: int = 0


@dataclass
class TrialBatch:
    """Column-oriented trial records; iterating yields :class:`TrialRecord`."""

    n: int
    trial: np.ndarray
    seeds: np.ndarray
    log_norm: np.ndarray
    log_vec_norm: np.ndarray
    log_coeff: np.ndarray
    log_wedge_norm: np.ndarray
    gamma_n: np.ndarray
    log_trace: np.ndarray
    endpoint: np.ndarray | None = None

    def __len__(self):
        return len(self.trial)

    def __iter__(self):
        for i in range(len(self)):
            ep = None if self.endpoint is None else ProjPoint(self.endpoint[i])
            yield TrialRecord(int(self.trial[i]), float(self.log_norm[i]), float(self.log_vec_norm[i]),
                              float(self.log_coeff[i]), float(self.log_wedge_norm[i]), float(self.gamma_n[i]),
                              ep, int(self.seeds[i]))

    @classmethod
    def concat(cls, parts):
        def cat(name):
            vals = [getattr(p, name) for p in parts]
            return None if any(v is None for v in vals) else np.concatenate(vals)
        return cls(parts[0].n, *(cat(k) for k in ("trial", "seeds", "log_norm", "log_vec_norm", "log_coeff",
                                                 "log_wedge_norm", "gamma_n", "log_trace", "endpoint")))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(self)):
            w.writerow([int(self.trial[i]), self.n] + [repr(float(x[i])) for x in
                       (self.log_norm, self.log_vec_norm, self.log_coeff, self.log_wedge_norm, self.gamma_n)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# products


class _Kahan:
    def __init__(self, size):
        self.sum = np.zeros(size)
        self.c = np.zeros(size)

    def add(self, x):
        y = x - self.c
        t = self.sum + y
        self.c = (t - self.sum) - y
        self.sum = t


def _factor(measure, keys, step, mapping):
    """Factor draws, possibly pre-scaled: returns ``(M / s, log s)`` with ``log s`` or ``None``."""
    if mapping is None and hasattr(measure, "draw_scaled") and measure.family == "anderson":
        return measure.draw_scaled(keys, step)
    m = measure.draw(keys, step)
    return (m if mapping is None else apply_array_map(mapping, m)), None


def _real_block(cfg: WalkConfig, start, stop):
    keys = rng.trial_keys(cfg.master_seed, start, stop)
    T = stop - start
    mu = cfg.measure
    d = mu.d
    A = np.broadcast_to(np.eye(d), (T, d, d)).copy()
    acc = _Kahan(T)
    track_vec = cfg.x0 is not None
    if track_vec:
        v = np.broadcast_to(np.asarray(cfg.x0.vector), (T, d)).copy()
        vacc = _Kahan(T)
    # on SL_2 the second exterior power is det = 1 identically
    sl2 = d == 2 and mu.mode == "SL"
    if cfg.record_wedge:
        m2 = d * (d - 1) // 2
        W = np.broadcast_to(np.eye(m2), (T, m2, m2)).copy()
        wacc = _Kahan(T)
    for k in range(cfg.n):
        M, log_scale = _factor(mu, keys, k, cfg.map)
        A = bmm(M, A)
        if log_scale is not None:
            acc.add(log_scale)
        if track_vec:
            v = bmv(M, v)
            if log_scale is not None:
                vacc.add(log_scale)
        if cfg.record_wedge and not sl2:
            W = bmm(wedge2_batch(M), W)
            if log_scale is not None:
                wacc.add(2 * log_scale)
        if (k + 1) % cfg.renorm_period == 0 or k == cfg.n - 1:
            nrm = opnorm_batch(A)
            bad = ~(np.isfinite(nrm) & (nrm > 0))
            if bad.any():
                i = int(np.argmax(bad))
                raise NumericalFailure(f"overflow in trial {start + i} at step {k + 1}",
                                       trial=start + i, seed=int(keys[i]))
            A = A / nrm[:, None, None]
            acc.add(np.log(nrm))
            if track_vec:
                vn = vnorm(v)
                v = v / vn[:, None]
                vacc.add(np.log(vn))
            if cfg.record_wedge and not sl2:
                wn = opnorm_batch(W)
                W = W / wn[:, None, None]
                wacc.add(np.log(wn))
    nan = np.full(T, np.nan)
    out = dict(log_norm=acc.sum, log_vec_norm=nan, log_coeff=nan, log_wedge_norm=nan, gamma_n=nan,
               log_trace=nan, endpoint=None)
    if track_vec:
        out["log_vec_norm"] = vacc.sum
        out["endpoint"] = v
        if cfg.f is not None:
            with np.errstate(divide="ignore"):
                out["log_coeff"] = vacc.sum + np.log(np.abs(v @ np.asarray(cfg.f.vector)))
    if cfg.record_wedge:
        out["log_wedge_norm"] = wacc.sum
    if cfg.record_kak:
        out["gamma_n"] = opnorm_batch(wedge2_batch(A)) if d > 1 else nan
    if cfg.record_trace:
        tr = A[:, 0, 0].copy()
        for i in range(1, d):
            tr = tr + A[:, i, i]
        with np.errstate(divide="ignore"):
            out["log_trace"] = acc.sum + np.log(np.abs(tr))
    return TrialBatch(cfg.n, np.arange(start, stop), keys, **out)


def _padic_monomial_block(cfg: WalkConfig, start, stop):
    keys = rng.trial_keys(cfg.master_seed, start, stop)
    T = stop - start
    mu = cfg.measure
    d = mu.d
    logp = math.log(mu.field.p)
    perm = np.broadcast_to(np.arange(d), (T, d)).copy()
    val = np.zeros((T, d), dtype=np.int64)
    for k in range(cfg.n):
        mp, mv = mu.draw_monomial(keys, k)
        # (M A)[i, :] = M[i, mp(i)] * A[mp(i), :]
        perm = np.take_along_axis(perm, mp, axis=1)
        val = mv + np.take_along_axis(val, mp, axis=1)
    nan = np.full(T, np.nan)
    log_norm = -val.min(axis=1) * logp
    out = dict(log_norm=log_norm, log_vec_norm=nan, log_coeff=nan, log_wedge_norm=nan, gamma_n=nan,
               log_trace=nan, endpoint=None)
    if cfg.x0 is not None:
        xv = np.array([c.valuation if not c.is_zero else np.iinfo(np.int64).max // 4 for c in cfg.x0.vector],
                      dtype=np.int64)
        out["log_vec_norm"] = -(val + xv[perm]).min(axis=1) * logp
    if cfg.record_wedge and d > 1:
        two = np.sort(val, axis=1)[:, :2].sum(axis=1)
        out["log_wedge_norm"] = -two * logp
        out["gamma_n"] = np.exp(out["log_wedge_norm"] - 2 * log_norm) if cfg.record_kak else nan
    return TrialBatch(cfg.n, np.arange(start, stop), keys, **out)


def _shift_matrix(m: Matrix, k: int) -> Matrix:
    return Matrix(tuple(tuple(x.shift(k) for x in row) for row in m.entries), m.field, m.mode, check=False)


def _min_val(rows):
    return min(x.valuation for x in rows)


def _padic_generic_block(cfg: WalkConfig, start, stop):
    keys = rng.trial_keys(cfg.master_seed, start, stop)
    mu = cfg.measure
    p = mu.field.p
    logp = math.log(p)
    cols = {k: [] for k in ("log_norm", "log_vec_norm", "log_coeff", "log_wedge_norm", "gamma_n")}
    for key in keys:
        mats = mu.draw_matrices(int(key), cfg.n)
        A = None
        shift = 0
        v = tuple(cfg.x0.vector) if cfg.x0 is not None else None
        vshift = 0
        W = None
        wshift = 0
        for k, M in enumerate(mats):
            A = M if A is None else M @ A
            if v is not None:
                v = M.apply(v)
            if cfg.record_wedge:
                M2 = wedge2_matrix(M)
                W = M2 if W is None else M2 @ W
            if (k + 1) % cfg.renorm_period == 0 or k == cfg.n - 1:
                s = _min_val(x for r in A.entries for x in r)
                A = _shift_matrix(A, -s)
                shift += s
                if v is not None:
                    s = _min_val(v)
                    v = tuple(x.shift(-s) for x in v)
                    vshift += s
                if cfg.record_wedge:
                    s = _min_val(x for r in W.entries for x in r)
                    W = _shift_matrix(W, -s)
                    wshift += s
        cols["log_norm"].append(-shift * logp)
        cols["log_vec_norm"].append(-vshift * logp if v is not None else math.nan)
        if cfg.f is not None:
            cols["log_coeff"].append(-vshift * logp + log_abs(_pdot(cfg.f.vector, v)))
        else:
            cols["log_coeff"].append(math.nan)
        cols["log_wedge_norm"].append(-wshift * logp if cfg.record_wedge else math.nan)
        cols["gamma_n"].append(math.exp(-(wshift - 2 * shift) * logp) if cfg.record_wedge and cfg.record_kak
                               else math.nan)
    arr = {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()}
    return TrialBatch(cfg.n, np.arange(start, stop), keys, log_trace=np.full(len(keys), np.nan),
                      endpoint=None, **arr)


def _block_fn(cfg):
    if cfg.measure.is_real:
        return _real_block
    if cfg.measure.is_monomial and cfg.f is None and cfg.map is None:
        return _padic_monomial_block
    return _padic_generic_block


def run_products(cfg: WalkConfig, block=BLOCK) -> TrialBatch:
    """Simulate ``cfg.trials`` independent products of length ``cfg.n``.

    Trial ``i`` uses stream key ``split(master_seed, i)``; blocks are spread
    over ``cfg.workers`` threads and merged in trial order.
    """
    fn = _block_fn(cfg)
    bounds = [(s, min(s + block, cfg.trials)) for s in range(0, cfg.trials, block)]
    workers = cfg.workers or default_workers()
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(cfg, s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda se: fn(cfg, *se), bounds))
    return TrialBatch.concat(parts)


# ---------------------------------------------------------------------------
# projective chains

DIRECTIONS = ("forward", "inverse_transpose", "transpose", "inverse")


@dataclass
class ChainResult:
    """Samples ``points[c, k]`` of chain ``c`` after burn-in.

    ``points[c, k]`` is the image of ``prev_points[c, k]`` under the factor drawn
    at step ``burn_in + k`` of chain ``c``'s stream.
    """

    measure: MatrixMeasure
    direction: str
    keys: np.ndarray
    burn_in: int
    points: np.ndarray
    start: np.ndarray

    @property
    def prev_points(self):
        return np.concatenate([self.start[:, None, :], self.points[:, :-1, :]], axis=1)

    def factors(self, k):
        """Factors (already mapped by the chain direction) used at post-burn-in step ``k``."""
        return _chain_factor(self.measure, self.keys, self.burn_in + k, self.direction)

    def flat(self):
        return self.points.reshape(-1, self.points.shape[-1])

    def proj_points(self):
        return [ProjPoint(x) for x in self.flat()]


def _chain_factor(measure, keys, step, direction):
    m = measure.draw(keys, step)
    return m if direction == "forward" else apply_array_map(direction, m)


def projective_chain(measure: MatrixMeasure, x0, n, chains=1, seed=0, burn_in=1000,
                     direction="forward") -> ChainResult:
    """Run ``chains`` independent projective chains and keep ``n`` points each after burn-in.

    ``forward`` acts by ``g``, ``inverse_transpose`` by ``(g^-1)^T``,
    ``transpose`` by ``g^T`` and ``inverse`` by ``g^-1`` for ``g ~ measure``.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if not measure.is_real:
        raise NotImplementedError("projective chains are provided over R")
    keys = rng.trial_keys(seed, 0, chains)
    x = np.broadcast_to(np.asarray(x0.vector if isinstance(x0, ProjPoint) else x0, dtype=np.float64),
                        (chains, measure.d)).copy()
    x = x / vnorm(x)[:, None]
    out = np.empty((chains, n, measure.d))
    start = None
    for s in range(burn_in + n):
        if s == burn_in:
            start = x.copy()
        g = _chain_factor(measure, keys, s, direction)
        x = bmv(g, x)
        x = x / vnorm(x)[:, None]
        if s >= burn_in:
            out[:, s - burn_in] = x
    if start is None:
        start = x.copy()
    return ChainResult(measure, direction, keys, burn_in, out, start)


def log_cocycle(g, x):
    """``Phi(g, x) = log(|g x| / |x|)`` for stacks of factors and unit vectors."""
    return np.log(vnorm(bmv(g, x)))


def markov_term(measure: MatrixMeasure, x, inner_samples=64, seed=0, direction="forward"):
    """``P Phi(x) = E_g Phi(g, x)``: exact for atomic measures, Monte Carlo otherwise."""
    if measure.is_atomic:
        atoms = measure.atom_arrays()
        if direction != "forward":
            atoms = apply_array_map(direction, atoms)
        vals = np.stack([log_cocycle(np.broadcast_to(a, x.shape[:-1] + a.shape), x) for a in atoms], axis=-1)
        return vals @ np.asarray(measure.weights)
    key = rng.split(seed, 7)
    acc = np.zeros(x.shape[:-1])
    for j in range(inner_samples):
        g = _chain_factor(measure, np.full(x.shape[:-1], key, dtype=np.uint64).ravel(), j, direction)
        acc = acc + log_cocycle(g.reshape(x.shape[:-1] + g.shape[-2:]), x)
    return acc / inner_samples


@dataclass
class Decomposition:
    increments: np.ndarray  # phi_k = Phi(g_k, x_{k-1}) - P Phi(x_{k-1})
    markov: np.ndarray      # P Phi(x_{k-1})
    cocycle: np.ndarray     # Phi(g_k, x_{k-1})


def cocycle_decompose(chain: ChainResult, inner_samples=64, seed=0) -> Decomposition:
    """Martingale/Markov split of the log-norm cocycle along a chain."""
    prev = chain.prev_points
    C, n, d = prev.shape
    phi = np.empty((C, n))
    for k in range(n):
        phi[:, k] = log_cocycle(chain.factors(k), prev[:, k])
    pphi = markov_term(chain.measure, prev.reshape(-1, d), inner_samples, seed, chain.direction).reshape(C, n)
    return Decomposition(phi - pphi, pphi, phi)


# ---------------------------------------------------------------------------
# stationarity defect


def _proj_cost(X, Y):
    """Sine distances between rows of ``X`` and ``Y`` (unit vectors)."""
    g = np.clip(np.abs(X @ Y.T), 0.0, 1.0)
    return np.sqrt(np.maximum(0.0, 1.0 - g * g))


def _angle_bins(X, w, bins):
    th = np.mod(np.arctan2(X[:, 1], X[:, 0]), math.pi)
    idx = np.minimum((th / math.pi * bins).astype(np.int64), bins - 1)
    mass = np.bincount(idx, weights=w, minlength=bins)
    centers = (np.arange(bins) + 0.5) * math.pi / bins
    keep = mass > 0
    return np.stack([np.cos(centers), np.sin(centers)], axis=1)[keep], mass[keep]


@dataclass(frozen=True)
class DefectResult:
    value: float
    quantization_radius: float
    n_atoms: int


def stationarity_defect(points, measure: MatrixMeasure, weights=None, seed=0, max_atoms=512,
                        direction="forward", detail=False):
    """``W^1(nu, mu * nu)`` under the sine distance on projective space.

    ``mu * nu`` is exact when ``measure`` is atomic and otherwise uses one fresh
    factor per atom of ``nu``.  Over P(R^2) large measures are binned into
    ``max_atoms`` angular cells (bias at most ``2 sin(pi / (2 max_atoms))``,
    reported as ``quantization_radius``); in higher dimension they are
    subsampled with a stream derived from ``seed``, and if that is impossible
    :class:`TooLarge` is raised.
    """
    X = np.asarray(points, dtype=np.float64).reshape(-1, measure.d)
    X = X / vnorm(X)[:, None]
    w = np.full(len(X), 1.0 / len(X)) if weights is None else np.asarray(weights, dtype=np.float64)
    if measure.is_atomic:
        atoms = measure.atom_arrays()
        if direction != "forward":
            atoms = apply_array_map(direction, atoms)
        Y = np.concatenate([bmv(np.broadcast_to(a, (len(X),) + a.shape), X) for a in atoms])
        wy = np.concatenate([w * pa for pa in measure.weights])
    else:
        keys = np.full(len(X), rng.split(seed, 11), dtype=np.uint64)
        keys = rng.split(int(keys[0]), np.arange(len(X)))
        Y = bmv(_chain_factor(measure, keys, 0, direction), X)
        wy = w
    Y = Y / vnorm(Y)[:, None]
    radius = 0.0
    if len(X) > max_atoms or len(Y) > max_atoms:
        if measure.d == 2:
            X, w = _angle_bins(X, w, max_atoms)
            Y, wy = _angle_bins(Y, wy, max_atoms)
            radius = 2 * math.sin(math.pi / (2 * max_atoms))
        else:
            sub = np.argsort(rng.uniform(rng.split(seed, 13), np.arange(len(X), dtype=np.uint64)))[:max_atoms]
            if measure.is_atomic and len(measure.atoms) > max_atoms:
                raise TooLarge("convolution exceeds the atom cap")
            X, w = X[sub], w[sub] / w[sub].sum()
            return stationarity_defect(X, measure, w, seed, max_atoms, direction, detail)
    w = w / w.sum()
    wy = wy / wy.sum()
    plan = solve_exact(w, wy, _proj_cost(X, Y))
    res = DefectResult(max(plan.primal_cost, 0.0), radius, len(X))
    return res if detail else res.value
