import numpy as np
import pytest

from conftest import random_coeffs
from oracles import field_from_coeffs, gauss_grid, naive_tensor_ops
from thirdgrade.basis import BasisSpec, GridField, ResolutionError, build_basis, synthesize
from thirdgrade.fields import inner, inner_V_strain, kinematics, norms, tensor_ops


def _const_tensor(M, n=6):
    return np.broadcast_to(np.asarray(M, dtype=float)[:, :, None, None], (2, 2, n, n)).copy()


def test_tensor_ops_trivial():
    z = tensor_ops(GridField(np.zeros((2, 2, 5, 5))))
    assert all(np.all(v.data == 0) for v in z.values())
    ops = tensor_ops(_const_tensor(np.eye(2)))
    assert np.allclose(ops["A_sq"].data, _const_tensor(np.eye(2)))
    assert np.allclose(ops["abs_sq"].data, 2.0)
    assert np.allclose(ops["cubic"].data, 2.0 * _const_tensor(np.eye(2)))


def test_tensor_ops_traceless_diagonal():
    a = 1.7
    ops = tensor_ops(_const_tensor(np.diag([a, -a])))
    assert np.allclose(ops["abs_sq"].data, 2 * a * a)
    assert np.allclose(ops["A_sq"].data, a * a * _const_tensor(np.eye(2)))


def test_tensor_ops_matches_naive(basis4, rng):
    A = 2.0 * kinematics(random_coeffs(rng, basis4), basis4).strain
    ops = tensor_ops(A)
    ref = naive_tensor_ops(A)
    for key, r in zip(("A_sq", "abs_sq", "cubic"), ref):
        assert np.allclose(ops[key].data, r, rtol=1e-13, atol=1e-15)


def test_tensor_ops_rejects_asymmetry():
    with pytest.raises(ValueError):
        tensor_ops(_const_tensor([[0.0, 1.0], [0.0, 0.0]]))


def test_inner_examples(basis4, rng):
    e = np.eye(len(basis4))
    assert inner(e[0], e[0], "V", basis4) == pytest.approx(1.0, abs=1e-12)
    assert inner(e[0], e[1], "W", basis4) == pytest.approx(0.0, abs=1e-12)
    assert inner(e[0], e[0], "W", basis4) == pytest.approx(basis4.lam[0], rel=1e-12)
    u = synthesize(random_coeffs(rng, basis4), basis4)
    assert inner(u, u, basis=basis4) > 0
    assert inner(u.data * 0, u.data * 0, basis=basis4) == 0


def test_inner_errors(basis4):
    with pytest.raises(ValueError):
        inner(np.zeros((2, 4, 4)), np.zeros((2, 5, 5)))
    with pytest.raises(ValueError):
        inner(np.zeros(16), np.zeros(16), "V")
    with pytest.raises(ValueError):
        inner(np.zeros(16), np.zeros(16), "H", basis4)


def test_inner_symmetric_bilinear(basis4, rng):
    u, v, w = (random_coeffs(rng, basis4) for _ in range(3))
    for prod in ("V", "W"):
        assert inner(u, v, prod, basis4) == pytest.approx(inner(v, u, prod, basis4), rel=1e-12)
        lhs = inner(2 * u + w, v, prod, basis4)
        assert lhs == pytest.approx(2 * inner(u, v, prod, basis4) + inner(w, v, prod, basis4), rel=1e-12)


def test_v_product_forms_agree(basis4, rng):
    for _ in range(20):
        u, v = random_coeffs(rng, basis4), random_coeffs(rng, basis4)
        assert inner(u, v, "V", basis4) == pytest.approx(inner_V_strain(u, v, basis4), abs=1e-9)


def test_norms_of_zero_and_unit(basis4):
    z = norms(np.zeros(len(basis4)), basis4)
    assert all(v == 0 for v in z.as_dict().values())
    e = norms(np.eye(len(basis4))[0], basis4)
    assert e.v_sq == pytest.approx(1.0, rel=1e-12)
    assert e.w_sq == pytest.approx(basis4.lam[0], rel=1e-12)


def test_norms_match_gauss_oracle(basis4, rng):
    c = random_coeffs(rng, basis4)
    X, Y, W = gauss_grid(60)
    y = field_from_coeffs(c, basis4, X, Y)
    g = field_from_coeffs(c, basis4, X, Y, "gradient")
    d = 0.5 * (g + g.transpose(1, 0, 2, 3))
    nr = norms(c, basis4)
    y2 = np.sum(y * y, axis=0)
    g2 = np.einsum("ijxy,ijxy->xy", g, g)
    d2 = np.einsum("ijxy,ijxy->xy", d, d)
    assert nr.l2_sq == pytest.approx(np.sum(y2 * W), rel=1e-10)
    assert nr.l4_4 == pytest.approx(np.sum(y2 * y2 * W), rel=1e-10)
    assert nr.d_sq == pytest.approx(np.sum(d2 * W), rel=1e-10)
    assert nr.a4_4 == pytest.approx(np.sum(16 * d2 * d2 * W), rel=1e-10)
    w14 = (np.sum(y2 * y2 * W) + np.sum(g2 * g2 * W)) ** 0.25
    assert nr.w14 == pytest.approx(w14, rel=1e-10)


def test_strain_relations(basis4, rng):
    c = random_coeffs(rng, basis4)
    nr = norms(c, basis4)
    assert nr.a_sq == pytest.approx(4 * nr.d_sq, rel=1e-14)
    # in 2D for divergence-free fields ||A||^2 = 2 ||grad y||^2
    assert nr.a_sq == pytest.approx(2 * nr.grad_sq, rel=1e-12)
    kin = kinematics(c, basis4)
    assert np.abs(kin.strain[0, 0] + kin.strain[1, 1]).max() < 1e-10


def test_norms_need_quartic_grid():
    b = build_basis(BasisSpec(4, 4, 1.0, grid_n=10))
    with pytest.raises(ResolutionError):
        norms(np.zeros(len(b)), b)


def test_poincare_attained_by_lowest_mode(basis4):
    i = basis4.index[min(basis4.modes, key=lambda m: m.mu)]
    nr = norms(np.eye(len(basis4))[i], basis4)
    assert np.sqrt(nr.l2_sq / nr.grad_sq) == pytest.approx(1 / np.sqrt(2), rel=1e-12)
