"""Nonlinear operators of the third-grade model and their tested (weak) forms.

Divergence terms never appear in strong form here: ``<div T, phi>`` is always
evaluated as ``-(T, grad phi)``.  Under the slip conditions the boundary terms of
that integration by parts vanish for every field of the basis span.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np

from .basis import Basis, GridField, coeffs_of, synthesize
from .fields import Kinematics, frobenius_sq, kinematics

__all__ = [
    "Params",
    "WeakFormTerms",
    "strain_convention",
    "strain_tensor",
    "trilinear_b",
    "S_op",
    "N_op",
    "weak_pairing",
    "weak_form_terms",
    "galerkin_drift",
    "drift_with_diagnostics",
]

_STRAIN_SCALE = contextvars.ContextVar("strain_scale", default=2.0)


@contextlib.contextmanager
def strain_convention(scale: float):
    """Debug hook: build the operators from ``A = scale * D`` instead of ``2 D``.

    Only the operator side changes; norms in :mod:`thirdgrade.fields` keep
    ``A = 2 D``.  Used to prove the verification suite detects a wrong convention.
    """
    token = _STRAIN_SCALE.set(float(scale))
    try:
        yield
    finally:
        _STRAIN_SCALE.reset(token)


@dataclass(frozen=True)
class Params:
    nu: float
    alpha1: float
    alpha2: float
    beta: float
    linear_test_mode: bool = False

    @property
    def alpha_sum(self) -> float:
        return self.alpha1 + self.alpha2


@dataclass
class WeakFormTerms:
    viscous: np.ndarray
    convection: np.ndarray
    alpha_term: np.ndarray
    beta_term: np.ndarray
    forcing: np.ndarray

    def total(self) -> np.ndarray:
        return self.viscous + self.convection + self.alpha_term + self.beta_term + self.forcing


def strain_tensor(kin: Kinematics) -> np.ndarray:
    return _STRAIN_SCALE.get() * kin.strain


def _as_vector(x, basis: Basis) -> np.ndarray:
    if isinstance(x, GridField):
        return x.data
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return synthesize(arr, basis).data
    return arr


def trilinear_b(phi, z, y, basis: Basis) -> float:
    """``b(phi, z, y) = ((phi . grad) z, y)`` by quadrature.

    ``phi`` and ``y`` are states or sampled vectors.  ``z`` is a state, whose
    gradient is taken analytically, or a sampled 2-tensor taken as ``grad z``.
    """
    p = _as_vector(phi, basis)
    w = _as_vector(y, basis)
    if isinstance(z, GridField) and z.rank == "tensor":
        gz = z.data
    else:
        gz = synthesize(coeffs_of(z), basis, "gradient").data
    return basis.integrate(np.einsum("jxy,ijxy,ixy->xy", p, gz, w))


def S_op(Y, basis: Basis, beta: float = 1.0) -> GridField:
    """``S(y) = beta |A|^2 A``."""
    a = strain_tensor(kinematics(Y, basis))
    return GridField(beta * frobenius_sq(a) * a)


def N_op(Y, basis: Basis, alpha1: float | None = None, alpha2: float = 0.0) -> GridField:
    """``N(y) = alpha1 (y . grad A + (grad y)^T A + A grad y) - alpha2 A^2``."""
    if alpha1 is None:
        alpha1 = basis.alpha1
    c = coeffs_of(Y)
    kin = kinematics(c, basis)
    scale = _STRAIN_SCALE.get()
    a = scale * kin.strain
    hess = synthesize(c, basis, "hessian")
    # d_m A_ij = scale/2 (d_m d_j y_i + d_m d_i y_j)
    grad_a = 0.5 * scale * (hess + hess.transpose(1, 0, 2, 3, 4))
    transport = np.einsum("mxy,ijmxy->ijxy", kin.y, grad_a)
    g = kin.grad
    gt_a = np.einsum("kixy,kjxy->ijxy", g, a)
    a_g = np.einsum("ikxy,kjxy->ijxy", a, g)
    a_sq = np.einsum("ikxy,kjxy->ijxy", a, a)
    return GridField(alpha1 * (transport + gt_a + a_g) - alpha2 * a_sq)


def weak_pairing(T, phi, basis: Basis) -> float:
    """``<div T, phi> = -(T, grad phi)`` with ``(div T)_i = d_j T_ij``."""
    t = T.data if isinstance(T, GridField) else np.asarray(T, dtype=float)
    gphi = synthesize(coeffs_of(phi), basis, "gradient").data
    return -basis.integrate(np.einsum("ijxy,ijxy->xy", t, gphi))


def _convection_field(kin: Kinematics) -> np.ndarray:
    # (Y . grad) ups + sum_j ups_j grad Y_j, the second read component-wise
    adv = np.einsum("jxy,mjxy->mxy", kin.y, kin.ups_grad)
    twist = np.einsum("jxy,jmxy->mxy", kin.ups, kin.grad)
    return adv + twist


def _forcing_coeffs(U, basis: Basis) -> np.ndarray:
    if U is None:
        return np.zeros(len(basis))
    return basis.test_vector(_as_vector(U, basis))


def weak_form_terms(Y, U, params: Params, basis: Basis) -> WeakFormTerms:
    """Each contribution to ``F_i = (f(Y), e_i)`` separately."""
    kin = kinematics(Y, basis)
    a = strain_tensor(kin)
    abs_sq = frobenius_sq(a)
    a_sq = np.einsum("ikxy,kjxy->ijxy", a, a)
    viscous = -2.0 * params.nu * basis.test_tensor(kin.strain)
    if params.linear_test_mode:
        convection = np.zeros(len(basis))
    else:
        convection = -basis.test_vector(_convection_field(kin))
    return WeakFormTerms(
        viscous=viscous,
        convection=convection,
        alpha_term=-params.alpha_sum * basis.test_tensor(a_sq),
        beta_term=-params.beta * basis.test_tensor(abs_sq * a),
        forcing=_forcing_coeffs(U, basis),
    )


def galerkin_drift(Y, U, params: Params, basis: Basis) -> np.ndarray:
    """Drift vector ``F_i = (f(Y), e_i)`` of the Galerkin system."""
    return weak_form_terms(Y, U, params, basis).total()


def drift_with_diagnostics(c: np.ndarray, forcing: np.ndarray, params: Params, basis: Basis):
    """Fast drift for time stepping, plus the functionals the energy ledger needs.

    ``forcing`` holds precomputed pairings ``(U, e_i)``.  All tensor terms are
    collapsed into one Frobenius pairing.
    """
    kin = kinematics(c, basis)
    a = strain_tensor(kin)
    abs_sq = frobenius_sq(a)
    tensor = 2.0 * params.nu * kin.strain + params.beta * abs_sq * a
    if params.alpha_sum != 0.0:
        tensor = tensor + params.alpha_sum * np.einsum("ikxy,kjxy->ijxy", a, a)
    F = forcing - basis.test_tensor(tensor)
    if not params.linear_test_mode:
        F = F - basis.test_vector(_convection_field(kin))
    d_abs = frobenius_sq(kin.strain)
    true_a = 4.0 * d_abs
    y_sq = np.sum(kin.y * kin.y, axis=0)
    grad_sq = frobenius_sq(kin.grad)
    w = basis.weights
    diag = {
        "d_sq": float(np.sum(d_abs * w)),
        "a_sq": float(np.sum(true_a * w)),
        "a4_4": float(np.sum(true_a * true_a * w)),
        "l2_sq": float(np.sum(y_sq * w)),
        "w14_4": float(np.sum((y_sq * y_sq + grad_sq * grad_sq) * w)),
    }
    return F, diag
