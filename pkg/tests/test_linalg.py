import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lyaplab.errors import SingularMatrix
from lyaplab.field import PAdicField
from lyaplab.linalg import (Matrix, ProjPoint, alignment_violations, diag, group_distance, identity, jacobi_svd,
                            kak, multiplicative_gap, operator_norm, opnorm_batch, projective_distance, wedge2,
                            wedge2_batch)

from conftest import random_sl

Q5 = PAdicField(5, 16)


def test_operator_norm_examples():
    assert operator_norm(identity(3)) == pytest.approx(1.0, abs=1e-15)
    assert operator_norm(identity(2, Q5)) == 1
    assert operator_norm(diag(3, 1 / 3)) == pytest.approx(3.0, rel=1e-15)
    assert operator_norm(Matrix([[5, 1], [0, 1]], Q5, "GL")) == 1


def test_group_distance_examples():
    a = diag(2, 0.5)
    assert group_distance(a, a) == 0
    assert group_distance(a, identity(2)) == pytest.approx(1.0, rel=1e-15)
    assert group_distance(diag(2, 1, mode="GL"), identity(2, mode="GL")) == pytest.approx(1.0, rel=1e-15)


def test_gl_inverse_failure():
    with pytest.raises(SingularMatrix):
        Matrix([[1.0, 2.0], [2.0, 4.0]], mode="GL")


def test_wedge2_examples():
    m = Matrix([[2.0, 3.0], [1.0, 2.0]])
    assert wedge2(m).entries.shape == (1, 1)
    assert wedge2(m).entries[0, 0] == pytest.approx(1.0)
    w = wedge2(diag(2.0, 3.0, 1 / 6))
    assert np.allclose(w.entries, np.diag([6.0, 1 / 3, 0.5]))
    assert np.array_equal(wedge2(identity(3)).entries, np.eye(3))


def test_kak_examples():
    k = kak(diag(4, 0.25))
    assert k.gamma == pytest.approx(1 / 16, abs=1e-15)
    assert np.allclose(k.omega.vector, [1, 0]) and np.allclose(k.iota.vector, [1, 0])
    assert k.unique
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    r = kak(Matrix([[c, -s], [s, c]]))
    assert r.gamma == pytest.approx(1.0) and not r.unique
    assert kak(diag(2, 2, 0.25)).gamma == pytest.approx(1.0)


def test_projective_distance_examples():
    e1, e2 = ProjPoint([1.0, 0.0]), ProjPoint([0.0, 1.0])
    assert projective_distance(e1, e1) == 0
    assert projective_distance(e1, e2) == 1
    assert projective_distance(e1, ProjPoint([1.0, 1.0])) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert ProjPoint([2.0, -2.0]) == ProjPoint([-1.0, 1.0])


def test_padic_projective_distance_is_ultrametric_scale():
    x = ProjPoint([Q5(1), Q5(0)])
    y = ProjPoint([Q5(1), Q5(5)])
    assert projective_distance(x, y) == pytest.approx(0.2)


def test_jacobi_matches_lapack(gen):
    a = gen.normal(size=(500, 5, 5))
    u, s, v = jacobi_svd(a)
    assert np.allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-12, atol=1e-13)
    assert np.allclose(u @ (s[..., None] * np.swapaxes(v, -1, -2)), a, atol=1e-12)


@given(arrays(np.float64, (2, 2), elements=st.floats(-1e3, 1e3)))
def test_closed_form_2x2_norm(a):
    assert opnorm_batch(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-12, abs=1e-12)


def test_kak_invariants(gen):
    for a in random_sl(gen, 4, 200):
        k = kak(Matrix(a))
        s = np.array(k.singular_values)
        assert k.gamma == pytest.approx(s[1] / s[0], rel=1e-12)
        assert np.prod(s) == pytest.approx(1.0, rel=1e-9)


def test_wedge_norm_bound_and_functoriality(gen):
    a = gen.normal(size=(10_000, 3, 3))
    b = gen.normal(size=(10_000, 3, 3))
    assert np.all(opnorm_batch(wedge2_batch(a)) <= opnorm_batch(a) ** 2 * (1 + 1e-12) + 1e-9)
    lhs = wedge2_batch(a @ b)
    rhs = wedge2_batch(a) @ wedge2_batch(b)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.abs(rhs).max())


def test_wedge_norm_bound_padic():
    import random
    r = random.Random(5)
    for _ in range(200):
        rows = [[Q5(r.randint(-30, 30) * 5 ** r.randint(-2, 2)) for _ in range(3)] for _ in range(3)]
        try:
            m = Matrix(rows, Q5, "GL")
        except Exception:
            continue
        assert operator_norm(wedge2(m)) <= operator_norm(m) ** 2


def test_submultiplicative(gen):
    a = gen.normal(size=(2000, 3, 3))
    b = gen.normal(size=(2000, 3, 3))
    assert np.all(opnorm_batch(a @ b) <= opnorm_batch(a) * opnorm_batch(b) * (1 + 1e-12))


def test_padic_submultiplicative_exact():
    a = Matrix([[Q5(5), Q5(3)], [Q5(1), Q5(1) / Q5(25)]], Q5, "GL")
    b = Matrix([[Q5(2), Q5(1) / Q5(5)], [Q5(7), Q5(10)]], Q5, "GL")
    assert operator_norm(a @ b) <= operator_norm(a) * operator_norm(b)


def test_alignment_inequalities_hold(gen):
    a = random_sl(gen, 3, 2000, scale=2.0)
    v = alignment_violations(a, gen.normal(size=(2000, 3)), gen.normal(size=(2000, 3)))
    assert v.max() <= 1e-9


def test_multiplicative_gap_padic():
    m = Matrix([[Q5(25), Q5(0)], [Q5(0), Q5(1) / Q5(25)]], Q5)
    assert multiplicative_gap(m) == pytest.approx(5.0 ** -4)


def test_json_round_trip():
    m = Matrix([[2.0, 1.0], [1.0, 1.0]])
    assert np.array_equal(Matrix.from_json(m.to_json()).entries, m.entries)
    p = Matrix([[Q5(5), Q5(0)], [Q5(0), Q5(1) / Q5(5)]], Q5)
    assert Matrix.from_json(p.to_json(), Q5).entries == p.entries
