"""One-dimensional Anderson model: transfer matrices over an energy grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import rng
from .errors import InvalidMeasure
from .linalg import Matrix, ProjPoint
from .measures import Estimate, GaugeSpec, MatrixMeasure, gauge_eval
from .transport import ScalarMeasure, pushforward, w_concave_exact
from .walk import WalkConfig, run_products

POTENTIALS = ("bernoulli", "uniform", "gaussian", "log_pareto")


@dataclass(frozen=True)
class PotentialSpec:
    """Law of the i.i.d. potential ``V_n``.

    * ``bernoulli``: ``+-v`` with probability 1/2 each (``params = (v,)``)
    * ``uniform``: uniform on ``[a, b]``
    * ``gaussian``: ``Normal(m, s^2)``
    * ``log_pareto``: symmetric sign, ``P[log(1 + |V|) > t] = min(1, t^-p)``
      (sampled by inverse CDF; moments ``E[log(1+|V|)^q]`` are finite exactly for ``q < p``)
    """

    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in POTENTIALS:
            raise InvalidMeasure(f"unknown potential family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        f, pr = self.family, self.params
        if f == "bernoulli" and (len(pr) != 1 or pr[0] == 0):
            raise InvalidMeasure("bernoulli potential needs one nonzero amplitude (two support points)")
        if f == "uniform" and (len(pr) != 2 or not pr[0] < pr[1]):
            raise InvalidMeasure("uniform potential needs a < b")
        if f == "gaussian" and (len(pr) != 2 or not pr[1] > 0):
            raise InvalidMeasure("gaussian potential needs s > 0")
        if f == "log_pareto" and (len(pr) != 1 or not pr[0] > 0):
            raise InvalidMeasure("log_pareto potential needs p > 0")

    @classmethod
    def parse(cls, text: str) -> "PotentialSpec":
        """``"bernoulli(1)"``, ``"uniform(-1,1)"``, ``"gaussian(0,1)"``, ``"log_pareto(2)"``."""
        name, _, rest = text.strip().partition("(")
        if not rest.endswith(")"):
            raise InvalidMeasure(f"cannot parse potential {text!r}")
        args = tuple(float(x) for x in rest[:-1].split(",") if x.strip())
        return cls(name.strip(), args)

    def describe(self):
        return f"{self.family}({','.join(format(x, 'g') for x in self.params)})"

    @property
    def symmetric(self):
        f, pr = self.family, self.params
        return f in ("bernoulli", "log_pareto") or (f == "uniform" and pr[0] == -pr[1]) or (
            f == "gaussian" and pr[0] == 0)

    def sample_with_log(self, u):
        """Potential values and ``log|V|`` from uniform blocks ``u[..., 0:2]``."""
        f, pr = self.family, self.params
        u0, u1 = u[..., 0], u[..., 1]
        if f == "bernoulli":
            v = np.where(u0 < 0.5, pr[0], -pr[0])
        elif f == "uniform":
            v = pr[0] + (pr[1] - pr[0]) * u0
        elif f == "gaussian":
            v = pr[0] + pr[1] * ndtri(u0)
        else:
            t = u0 ** (-1.0 / pr[0])
            sign = np.where(u1 < 0.5, 1.0, -1.0)
            with np.errstate(over="ignore"):
                v = sign * np.expm1(t)
            logv = t + np.log(-np.expm1(-t))
            return v, logv
        with np.errstate(divide="ignore"):
            return v, np.log(np.abs(v))

    def from_uniforms(self, u):
        return self.sample_with_log(u)[0]

    def sample(self, seed, count):
        key = rng.split(seed, 0)
        steps = np.arange(count, dtype=np.uint64) * np.uint64(4)
        u = np.stack([rng.uniform(key, steps), rng.uniform(key, steps + np.uint64(1))], axis=-1)
        return self.from_uniforms(u)

    def tail(self, t):
        """Exact ``P[log(1 + |V|) > t]`` for ``log_pareto``."""
        if self.family != "log_pareto":
            raise NotImplementedError("closed-form tail only for log_pareto")
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, np.where(t > 0, t, 1e-300) ** -self.params[0])

    def atomic(self, atom_cap=64) -> ScalarMeasure:
        """Exact atoms for Bernoulli, otherwise midpoint quantiles ``(i + 1/2) / cap``."""
        if self.family == "bernoulli":
            return ScalarMeasure((self.params[0], -self.params[0]), (0.5, 0.5))
        q = (np.arange(atom_cap) + 0.5) / atom_cap
        u = np.stack([q, np.full(atom_cap, 0.25)], axis=-1)
        if self.family == "log_pareto":
            # quantiles of |V| with alternating signs keep the law symmetric
            u[:, 1] = np.where(np.arange(atom_cap) % 2 == 0, 0.25, 0.75)
        vals = self.from_uniforms(u)
        return ScalarMeasure(tuple(float(x) for x in vals), tuple([1.0 / atom_cap] * atom_cap))


def lifted_measure(spec: PotentialSpec, energy: float) -> MatrixMeasure:
    """Law of the transfer factor ``[[E - V, -1], [1, 0]]``."""
    return MatrixMeasure("anderson", {"potential": spec, "energy": float(energy)})


def transfer_matrix(potentials, energy) -> Matrix:
    """Exact ordered product ``T(V_n) ... T(V_1)`` for explicit potential values."""
    a = np.eye(2)
    for v in potentials:
        a = np.array([[energy - v, -1.0], [1.0, 0.0]]) @ a
    return Matrix(a, check=False)


def drawn_potentials(spec: PotentialSpec, n, seed, trial=0):
    """Potentials the walk engine uses for ``trial`` of master seed ``seed``."""
    m = lifted_measure(spec, 0.0)
    key = rng.trial_keys(seed, trial, trial + 1)
    return np.array([spec.from_uniforms(m.uniforms(key, k))[0] for k in range(n)])


def transfer_product(spec: PotentialSpec, energy, n, seed=0, x0=(1.0, 0.0)):
    """One transfer-matrix product; returns the walk engine's record for trial 0."""
    cfg = WalkConfig(lifted_measure(spec, energy), n, 1, seed, x0=ProjPoint(x0))
    return next(iter(run_products(cfg)))


def lyap_vs_energy(spec: PotentialSpec, energies, n, trials, seed=0, workers=None, x0=(1.0, 0.0)):
    """Rows ``(E, lambda_hat, stderr)``; each energy uses its own seed derived from ``seed``.

    The statistic is ``log|A_n^E x0| / n`` with ``x0 = e_1`` by default.
    """
    energies = list(energies)
    rows = []
    for i, e in enumerate(energies):
        s = rng.derive_seed(seed, "energy", i)
        cfg = WalkConfig(lifted_measure(spec, e), n, trials, s, x0=ProjPoint(x0), workers=workers)
        b = run_products(cfg)
        est = Estimate.from_samples(b.log_vec_norm / n, s)
        rows.append((float(e), est.point, est.stderr))
    return rows


def energy_grid(emin, emax, count):
    g = np.linspace(emin, emax, int(count))
    if count > 1 and not np.all(np.diff(g) > 0):
        raise ValueError("energy grid must be strictly increasing")
    return g


def coeff_lde(spec: PotentialSpec, energy, x, y, eps, n_grid, trials, seed=0, workers=None, lam=None):
    """Deviation curve of ``log|<y, A_n^E x>|``; see :func:`lyaplab.estimators.lde_curve`."""
    from .estimators import lde_curve
    return lde_curve(lifted_measure(spec, energy), "coeff", eps, n_grid, trials, seed=seed,
                     x0=ProjPoint(x), f=ProjPoint(y, dual=True), workers=workers, lam=lam)


def energy_pushforward_distance(spec: PotentialSpec, e1, e2, gauge: GaugeSpec, atom_cap=64):
    """Exact ``W_g((f_E1)_* mu, (f_E2)_* mu)`` and the diagonal-coupling bound ``g(|E1 - E2|)``."""
    atoms = spec.atomic(atom_cap) if isinstance(spec, PotentialSpec) else spec
    a = pushforward(atoms, ("energy_shift", e1))
    b = pushforward(atoms, ("energy_shift", e2))
    w = w_concave_exact(a, b, gauge).primal_cost
    bound = gauge_eval(gauge, abs(e2 - e1))
    if w > bound + 1e-9:
        raise AssertionError(f"pushforward distance {w} exceeds the coupling bound {bound}")
    return w, bound
