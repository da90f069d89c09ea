import numpy as np
import pytest

from conftest import random_coeffs
from oracles import gauss_grid, mode_velocity, v_normalizer
from thirdgrade.basis import (
    BasisSpec,
    ModeIndex,
    ResolutionError,
    SpectralState,
    boundary_residual,
    build_basis,
    embed,
    modified_stokes,
    project_V,
    restrict,
    synthesize,
)
from thirdgrade.fields import inner, inner_V_strain


def test_single_mode_eigenvalue_and_normalizer():
    b = build_basis(BasisSpec(1, 1, 1.0))
    assert len(b) == 1
    f = b[0]
    assert f.mode == ModeIndex(1, 1)
    assert f.mu == 2
    assert f.lam == 4
    assert f.v_normalizer == pytest.approx(1.0 / np.sqrt(3.0 * 2.0 * np.pi**2 / 4.0), rel=1e-15)


def test_normalizer_matches_gauss_quadrature():
    """Unnormalized curl of sin x sin y has squared L2 norm 2 pi^2 / 4."""
    X, Y, W = gauss_grid()
    u = mode_velocity(1, 1, X, Y)
    l2 = np.sum(np.sum(u * u, axis=0) * W)
    assert l2 == pytest.approx(2 * np.pi**2 / 4, rel=1e-12)
    # V-norm^2 = (1 + alpha1 mu) L2-norm^2 for a Laplacian eigenfunction
    assert 1.0 / np.sqrt(3.0 * l2) == pytest.approx(v_normalizer(1, 1, 1.0), rel=1e-12)


def test_degenerate_eigenvalues_ordered_by_mode():
    b = build_basis(BasisSpec(2, 2, 0.0))
    assert [f.lam for f in b] == [2.0] * 4
    assert b.modes == [ModeIndex(1, 1), ModeIndex(1, 2), ModeIndex(2, 1), ModeIndex(2, 2)]


def test_ordering_by_lambda():
    b = build_basis(BasisSpec(4, 4, 1.0))
    lam = [f.lam for f in b]
    assert lam == sorted(lam)
    assert all(f.lam == 2 + f.mode.mu for f in b)


def test_resolution_error():
    with pytest.raises(ResolutionError):
        BasisSpec(4, 4, 1.0, grid_n=9)
    spec = BasisSpec(4, 4, 1.0, grid_n=10)
    assert not spec.resolves_quartics
    with pytest.raises(ResolutionError):
        spec.require_quartics()
    assert BasisSpec(4, 3).grid_n == 18


def test_invalid_spec():
    with pytest.raises(ValueError):
        BasisSpec(0, 2)
    with pytest.raises(ValueError):
        BasisSpec(2, 2, -1.0)
    with pytest.raises(ValueError):
        ModeIndex(0, 1)


def test_spectral_state_checks():
    with pytest.raises(ValueError):
        SpectralState(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        SpectralState(np.array([1.0]), time=-1.0)
    assert len(SpectralState(np.zeros(3))) == 3


def test_v_orthonormal_and_eigenrelation(basis4):
    n = len(basis4)
    eye = np.eye(n)
    gv = np.array([[inner_V_strain(eye[i], eye[j], basis4) for j in range(n)] for i in range(n)])
    gw = np.array([[inner(eye[i], eye[j], "W", basis4) for j in range(n)] for i in range(n)])
    assert np.abs(gv - eye).max() < 1e-10
    assert np.all(np.abs(gw - np.diag(basis4.lam)) < 1e-8 * basis4.lam[:, None])


def test_values_match_closed_form(basis4):
    X, Y = np.meshgrid(basis4.nodes, basis4.nodes, indexing="ij")
    for i, f in enumerate(basis4):
        ref = mode_velocity(f.mode.k, f.mode.l, X, Y, f.v_normalizer)
        assert np.abs(basis4.values[i] - ref).max() < 1e-14


def test_divergence_free_and_boundary(basis4, rng):
    g = basis4.gradients
    assert np.abs(g[:, 0, 0] + g[:, 1, 1]).max() < 1e-10
    for i in range(len(basis4)):
        r = boundary_residual((basis4.values[i], basis4.gradients[i]))
        assert r["normal"] < 1e-10 and r["tangential_stress"] < 1e-10
    c = random_coeffs(rng, basis4)
    r = boundary_residual((synthesize(c, basis4), synthesize(c, basis4, "gradient")))
    assert r["normal"] < 1e-10 and r["tangential_stress"] < 1e-10


def test_boundary_residual_of_constant_field(basis4):
    n = basis4.grid_n
    const = np.stack([np.ones((n, n)), np.zeros((n, n))])
    assert boundary_residual(const)["normal"] == 1.0


def test_synthesize_examples(basis4, rng):
    assert np.all(synthesize(np.zeros(len(basis4)), basis4).data == 0)
    i = basis4.index[ModeIndex(1, 1)]
    e = np.eye(len(basis4))[i]
    lap = synthesize(e, basis4, "laplacian").data
    assert np.abs(lap + 2.0 * synthesize(e, basis4).data).max() < 1e-13
    grad = synthesize(random_coeffs(rng, basis4), basis4, "gradient").data
    assert np.abs(grad[0, 0] + grad[1, 1]).max() < 1e-10
    with pytest.raises(ValueError):
        synthesize(np.zeros(3), basis4)


def test_project_v_examples(basis4, rng):
    n = len(basis4)
    e3 = np.eye(n)[2]
    assert np.allclose(project_V(synthesize(e3, basis4), basis4), e3, atol=1e-12)
    assert np.all(project_V(synthesize(np.zeros(n), basis4), basis4) == 0)
    c = np.zeros(n)
    c[:2] = [2.0, 3.0]
    assert np.allclose(project_V(synthesize(c, basis4), basis4), c, atol=1e-12)
    for _ in range(10):
        c = rng.standard_normal(n)
        assert np.abs(project_V(synthesize(c, basis4), basis4) - c).max() < 1e-10
    with pytest.raises(ValueError):
        project_V(np.zeros((2, 5, 5)), basis4)


def test_modified_stokes_examples(basis4, rng):
    i = basis4.index[ModeIndex(1, 1)]
    e = np.eye(len(basis4))[i]
    ft = modified_stokes(synthesize(e, basis4), basis4)
    assert ft[i] == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert np.abs(np.delete(ft, i)).max() < 1e-14
    x = basis4.nodes
    grad = np.stack([-np.outer(np.sin(x), np.cos(x)), -np.outer(np.cos(x), np.sin(x))])
    assert np.abs(modified_stokes(grad, basis4)).max() < 1e-14
    assert np.all(modified_stokes(np.zeros_like(grad), basis4) == 0)


def test_modified_stokes_property(basis4, rng):
    """(f~, e_i)_V = (f, e_i) for a smooth non-solenoidal f."""
    x = basis4.nodes
    f = np.stack([np.outer(np.sin(3 * x), np.cos(2 * x)), 0.7 * np.outer(np.cos(x), np.sin(5 * x))])
    ft = modified_stokes(f, basis4)
    eye = np.eye(len(basis4))
    for i in range(len(basis4)):
        lhs = inner_V_strain(ft, eye[i], basis4)
        rhs = basis4.integrate(np.sum(f * basis4.values[i], axis=0))
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_embed_and_restrict():
    coarse = build_basis(BasisSpec(2, 2, 1.0))
    fine = build_basis(BasisSpec(3, 3, 1.0))
    c = np.arange(1.0, 5.0)
    up = embed(c, coarse, fine)
    assert np.linalg.norm(up) == pytest.approx(np.linalg.norm(c))
    assert np.array_equal(restrict(up, fine, coarse), c)
    with pytest.raises(ValueError):
        embed(np.ones(len(fine)), fine, coarse)
