"""Concave Wasserstein distances between atomic matrix measures.

``w_concave_exact`` solves the discrete transport problem with a transportation
(network) simplex and certifies the result with c-transformed dual potentials.
``w_concave_entropic`` is a log-domain Sinkhorn solver that returns a certified
bracket around the exact value.  ``w_infinity`` computes the bottleneck
distance by binary search over candidate radii with a max-flow feasibility test.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.special import logsumexp

from .errors import InvalidMeasure, NumericalFailure, TooLarge
from .field import REAL
from .linalg import Matrix, group_distance, opnorm_batch, wedge2, wedge2_batch
from .measures import GaugeSpec, MatrixMeasure, gauge_eval

ATOM_CAP = 512
W_INF_GRID = 1024
# consecutive degenerate pivots before switching to Bland's rule
DEGENERATE_SWITCH = 20


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray
    primal_cost: float
    dual_potentials: tuple
    duality_gap: float
    solver: str
    lower: float = math.nan
    upper: float = math.nan
    iterations: int = 0

    @property
    def bracket(self):
        return (self.lower, self.upper)

    def to_csv(self, cost=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "mass", "cost"])
        for i, j in zip(*np.nonzero(self.coupling > 0)):
            c = "" if cost is None else repr(float(cost[i, j]))
            w.writerow([int(i), int(j), repr(float(self.coupling[i, j])), c])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# ground costs


def distance_matrix(a: MatrixMeasure, b: MatrixMeasure) -> np.ndarray:
    """Pairwise group distances between the atoms of two measures."""
    for m in (a, b):
        if not m.is_atomic:
            raise InvalidMeasure("transport needs atomic measures (see measures.empirical)")
    if a.field != b.field or a.d != b.d or a.mode != b.mode:
        raise InvalidMeasure("measures must share field, dimension and mode")
    if a.is_real:
        A, B = a.atom_arrays(), b.atom_arrays()
        dist = opnorm_batch(A[:, None] - B[None, :])
        if a.mode == "GL":
            Ai, Bi = np.linalg.inv(A), np.linalg.inv(B)
            dist = np.maximum(dist, opnorm_batch(Ai[:, None] - Bi[None, :]))
        return dist
    return np.array([[float(group_distance(x, y)) for y in b.atoms] for x in a.atoms])


def cost_matrix(a, b, g: GaugeSpec) -> np.ndarray:
    return gauge_eval(g, distance_matrix(a, b))


# ---------------------------------------------------------------------------
# exact solver


def _northwest(a, b):
    n1, n2 = len(a), len(b)
    ra, rb = a.copy(), b.copy()
    flow = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == n1 - 1 and j == n2 - 1:
            break
        if i == n1 - 1:
            j += 1
        elif j == n2 - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flow


def _greedy_start(a, b, C):
    """Cheapest-cell-first basic feasible solution, completed to a spanning tree."""
    n1, n2 = C.shape
    ra, rb = a.copy(), b.copy()
    parent = list(range(n1 + n2))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    flow = {}
    for k in np.argsort(C, axis=None, kind="stable"):
        if len(flow) == n1 + n2 - 1:
            break
        i, j = divmod(int(k), n2)
        if ra[i] <= 0 or rb[j] <= 0:
            continue
        x = min(ra[i], rb[j])
        ra[i] -= x
        rb[j] -= x
        if ra[i] <= rb[j]:
            ra[i] = 0.0
        else:
            rb[j] = 0.0
        flow[(i, j)] = x
        parent[find(i)] = find(n1 + j)
    # zero-flow cells join the remaining components into one tree
    for k in np.argsort(C, axis=None, kind="stable"):
        if len(flow) == n1 + n2 - 1:
            break
        i, j = divmod(int(k), n2)
        ri, rj = find(i), find(n1 + j)
        if ri != rj:
            parent[ri] = rj
            flow[(i, j)] = 0.0
    return flow


def _potentials(n1, n2, basis, C):
    adj = [[] for _ in range(n1 + n2)]
    for (i, j) in basis:
        adj[i].append(n1 + j)
        adj[n1 + j].append(i)
    u = np.zeros(n1)
    v = np.zeros(n2)
    seen = [False] * (n1 + n2)
    seen[0] = True
    q = deque([0])
    while q:
        node = q.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < n1:
                v[nb - n1] = C[node, nb - n1] - u[node]
            else:
                u[nb] = C[nb, node - n1] - v[node - n1]
            q.append(nb)
    return u, v, adj


def _tree_path(adj, start, goal):
    prev = {start: None}
    q = deque([start])
    while q:
        node = q.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in prev:
                prev[nb] = node
                q.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def transport_simplex(a, b, C, max_iter=None):
    """Solve ``min <P, C>`` over couplings of weight vectors ``a`` and ``b``.

    Returns ``(P, u, v, iterations)`` where ``u, v`` are c-transform-feasible
    dual potentials (``u_i + v_j <= C_ij``).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n1, n2 = C.shape
    flow = _greedy_start(a, b, C)
    tol = 1e-12 * max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    if max_iter is None:
        max_iter = 50 * n1 * n2 + 1000
    degenerate_run = 0
    it = 0
    while True:
        u, v, adj = _potentials(n1, n2, flow, C)
        red = C - u[:, None] - v[None, :]
        bland = degenerate_run >= DEGENERATE_SWITCH
        if bland:
            cand = np.flatnonzero(red.ravel() < -tol)
            if cand.size == 0:
                break
            k = int(cand[0])
        else:
            k = int(np.argmin(red))
            if red.flat[k] >= -tol:
                break
        ei, ej = divmod(k, n2)
        it += 1
        if it > max_iter:
            raise NumericalFailure("transport simplex exceeded its iteration cap")
        path = _tree_path(adj, n1 + ej, ei)  # col ej -> ... -> row ei
        # cycle: (ei, ej) +, then edges along path alternate -, +, -, ...
        edges = []
        for s in range(len(path) - 1):
            x, y = path[s], path[s + 1]
            edges.append((y, x - n1) if x >= n1 else (x, y - n1))
        minus = edges[0::2]
        plus = edges[1::2]
        theta = min(flow[e] for e in minus)
        ties = [e for e in minus if flow[e] <= theta]
        leave = min(ties) if bland else ties[0]
        for e in minus:
            flow[e] -= theta
        for e in plus:
            flow[e] += theta
        del flow[leave]
        flow[(ei, ej)] = theta
        degenerate_run = degenerate_run + 1 if theta <= 0 else 0
    P = np.zeros((n1, n2))
    for (i, j), x in flow.items():
        P[i, j] = max(x, 0.0)
    # c-transform so the dual pair is feasible, which makes the gap a certificate
    v = np.min(C - u[:, None], axis=0)
    return P, u, v, it


def solve_exact(a_w, b_w, C, solver="exact") -> TransportPlan:
    P, u, v, it = transport_simplex(a_w, b_w, C)
    primal = float(np.sum(P * C))
    dual = float(np.dot(a_w, u) + np.dot(b_w, v))
    return TransportPlan(P, primal, (u, v), primal - dual, solver, lower=dual, upper=primal, iterations=it)


def w_concave_exact(a: MatrixMeasure, b: MatrixMeasure, g: GaugeSpec) -> TransportPlan:
    """Exact concave Wasserstein distance between atomic measures (<= 512 atoms each)."""
    if len(a.atoms) > ATOM_CAP or len(b.atoms) > ATOM_CAP:
        raise TooLarge(f"exact solver is capped at {ATOM_CAP} atoms; use w_concave_entropic")
    return solve_exact(np.asarray(a.weights), np.asarray(b.weights), cost_matrix(a, b, g))


# ---------------------------------------------------------------------------
# entropic solver


def _round_plan(P, a, b):
    """Project a positive plan onto the exact transport polytope (Altschuler et al.)."""
    r = P.sum(axis=1)
    P = P * np.minimum(1.0, a / np.where(r > 0, r, 1.0))[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(1.0, b / np.where(c > 0, c, 1.0))[None, :]
    ea = a - P.sum(axis=1)
    eb = b - P.sum(axis=0)
    s = ea.sum()
    if s > 0:
        P = P + np.outer(ea, eb) / s
    return P


def sinkhorn(a_w, b_w, C, reg, tol=1e-9, max_iter=10_000) -> TransportPlan:
    a_w = np.asarray(a_w, dtype=np.float64)
    b_w = np.asarray(b_w, dtype=np.float64)
    if not reg > 0:
        raise ValueError("entropic regularization must be positive")
    la, lb = np.log(a_w), np.log(b_w)
    f = np.zeros(len(a_w))
    g = np.zeros(len(b_w))
    err = math.inf
    best = None
    for it in range(1, max_iter + 1):
        f = reg * (la - logsumexp((g[None, :] - C) / reg, axis=1))
        g = reg * (lb - logsumexp((f[:, None] - C) / reg, axis=0))
        if it % 10 == 0 or it == 1:
            P = np.exp((f[:, None] + g[None, :] - C) / reg)
            err = float(np.abs(P.sum(axis=1) - a_w).sum())
            if err < tol:
                break
    else:
        best = _bracket(a_w, b_w, C, f, g, reg)
        raise NumericalFailure(f"Sinkhorn did not reach tol={tol} (marginal error {err:.3g})",
                               bracket=best[1:])
    (P, upper, pots, gap), lower, _ = _bracket(a_w, b_w, C, f, g, reg)
    return TransportPlan(P, upper, pots, gap, f"entropic({reg:g})", lower=lower, upper=upper, iterations=it)


def _bracket(a_w, b_w, C, f, g, reg):
    P = _round_plan(np.exp((f[:, None] + g[None, :] - C) / reg), a_w, b_w)
    upper = float(np.sum(P * C))
    g_feas = np.min(C - f[:, None], axis=0)
    lower = float(np.dot(a_w, f) + np.dot(b_w, g_feas))
    return (P, upper, (f, g_feas), upper - lower), lower, upper


def w_concave_entropic(a: MatrixMeasure, b: MatrixMeasure, g: GaugeSpec, reg=1e-2, tol=1e-9, max_iter=10_000):
    """Sinkhorn approximation with a certified ``[lower, upper]`` bracket of the exact value."""
    return sinkhorn(np.asarray(a.weights), np.asarray(b.weights), cost_matrix(a, b, g), reg, tol, max_iter)


# ---------------------------------------------------------------------------
# bottleneck distance


def grid_weights(w, grid=W_INF_GRID):
    """Largest-remainder rounding of weights to integer multiples of ``1/grid``."""
    w = np.asarray(w, dtype=np.float64)
    raw = w * grid
    base = np.floor(raw).astype(np.int64)
    short = grid - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def bottleneck(D, ia, ib):
    """Smallest entry ``r`` of ``D`` such that edges ``D <= r`` carry the integer marginals ``ia``, ``ib``."""
    n1, n2 = D.shape
    total = int(ia.sum())
    if total != int(ib.sum()):
        raise ValueError("integer marginals must have equal totals")
    cand = np.unique(D)
    src, snk = n1 + n2, n1 + n2 + 1
    big = total

    def feasible(r):
        rows, cols = np.nonzero(D <= r)
        heads = np.concatenate([np.full(n1, src), rows, n1 + np.arange(n2)])
        tails = np.concatenate([np.arange(n1), n1 + cols, np.full(n2, snk)])
        caps = np.concatenate([ia, np.full(rows.size, big), ib]).astype(np.int32)
        graph = csr_matrix((caps, (heads, tails)), shape=(n1 + n2 + 2,) * 2)
        return maximum_flow(graph, src, snk).flow_value == total

    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def w_infinity_detail(a: MatrixMeasure, b: MatrixMeasure, grid=W_INF_GRID):
    """``(W_inf, rounding_radius)``; weights are first rounded to the ``1/grid`` lattice."""
    ia, ib = grid_weights(a.weights, grid), grid_weights(b.weights, grid)
    radius = max(np.abs(ia / grid - np.asarray(a.weights)).max(), np.abs(ib / grid - np.asarray(b.weights)).max())
    return bottleneck(distance_matrix(a, b), ia, ib), float(radius)


def w_infinity(a: MatrixMeasure, b: MatrixMeasure, grid=W_INF_GRID) -> float:
    return w_infinity_detail(a, b, grid)[0]


# ---------------------------------------------------------------------------
# pushforwards


@dataclass(frozen=True)
class ScalarMeasure:
    """Finite atomic law on the real line (used for potentials)."""

    values: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(w) != len(self.values) or not len(w) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise InvalidMeasure("scalar measure needs positive weights summing to 1")

    @classmethod
    def dirac(cls, x):
        return cls((float(x),), (1.0,))


def energy_matrix(x, energy):
    """``f_E(x) = [[x - E, -1], [1, 0]]``."""
    return Matrix([[x - energy, -1.0], [1.0, 0.0]])


_ARRAY_MAPS = {
    "wedge2": wedge2_batch,
    "inverse": lambda a: np.linalg.inv(a),
    "transpose": lambda a: np.swapaxes(a, -1, -2),
    "inverse_transpose": lambda a: np.swapaxes(np.linalg.inv(a), -1, -2),
}


def map_matrix(m: Matrix, name: str) -> Matrix:
    if name == "wedge2":
        return wedge2(m)
    if name == "inverse":
        return m.inverse()
    if name == "transpose":
        return m.transpose()
    if name == "inverse_transpose":
        return m.inverse().transpose()
    raise InvalidMeasure(f"unknown map {name!r}")


def pushforward(m, mapping, energy=None):
    """Image measure under ``wedge2``, ``inverse``, ``transpose``, ``inverse_transpose``
    or ``energy_shift`` (the latter only for :class:`ScalarMeasure`, needs ``energy``).

    ``mapping`` may also be the tuple ``("energy_shift", E)``.
    """
    if isinstance(mapping, tuple):
        mapping, energy = mapping
    if mapping == "energy_shift":
        if not isinstance(m, ScalarMeasure):
            raise InvalidMeasure("energy_shift applies to scalar potential measures only")
        return MatrixMeasure.from_atoms([energy_matrix(x, energy) for x in m.values], m.weights)
    if isinstance(m, ScalarMeasure):
        raise InvalidMeasure(f"{mapping} needs a matrix measure")
    if mapping not in _ARRAY_MAPS:
        raise InvalidMeasure(f"unknown map {mapping!r}")
    if m.is_atomic:
        return MatrixMeasure.from_atoms([map_matrix(x, mapping) for x in m.atoms], m.weights)
    if not m.is_real:
        raise InvalidMeasure("parametric p-adic pushforwards are not provided")
    d = m.d * (m.d - 1) // 2 if mapping == "wedge2" else m.d
    return MatrixMeasure("pushforward", {"base": m, "map": mapping}, d=d, mode=m.mode)


def apply_array_map(name, arr):
    return _ARRAY_MAPS[name](arr)
