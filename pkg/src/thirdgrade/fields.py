"""Pointwise tensor algebra, inner products and norms on the quadrature grid."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .basis import Basis, GridField, coeffs_of, synthesize

__all__ = [
    "NormReport",
    "Kinematics",
    "kinematics",
    "tensor_ops",
    "inner",
    "inner_V_strain",
    "norms",
]

SYMMETRY_TOL = 1e-10


class Kinematics(NamedTuple):
    """Everything the nonlinear terms need from one state, sampled once."""

    y: np.ndarray        # (2, N, N)
    grad: np.ndarray     # (2, 2, N, N), grad[i, j] = d_j y_i
    strain: np.ndarray   # D(y)
    ups: np.ndarray      # y - alpha1 Lap y
    ups_grad: np.ndarray


def kinematics(state, basis: Basis) -> Kinematics:
    c = coeffs_of(state)
    y = np.tensordot(c, basis.values, axes=1)
    grad = np.tensordot(c, basis.gradients, axes=1)
    strain = 0.5 * (grad + grad.transpose(1, 0, 2, 3))
    cu = c * basis.upsilon_factor
    ups = np.tensordot(cu, basis.values, axes=1)
    ups_grad = np.tensordot(cu, basis.gradients, axes=1)
    return Kinematics(y, grad, strain, ups, ups_grad)


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ikxy,kjxy->ijxy", a, b)


def frobenius_sq(a: np.ndarray) -> np.ndarray:
    return np.einsum("ijxy,ijxy->xy", a, a)


def tensor_ops(A) -> dict:
    """``A @ A``, ``|A|^2`` and ``|A|^2 A`` at every node.

    Raises ``ValueError`` if ``A`` is not symmetric, since every tensor passed
    here is a symmetric gradient.
    """
    a = A.data if isinstance(A, GridField) else np.asarray(A, dtype=float)
    if a.shape[:2] != (2, 2):
        raise ValueError(f"expected a 2-tensor field, got shape {a.shape}")
    asym = np.abs(a[0, 1] - a[1, 0]).max(initial=0.0)
    scale = max(1.0, np.abs(a).max(initial=0.0))
    if asym > SYMMETRY_TOL * scale:
        raise ValueError(f"tensor is not symmetric (max asymmetry {asym:.3e})")
    abs_sq = frobenius_sq(a)
    return {
        "A_sq": GridField(_matmul(a, a)),
        "abs_sq": GridField(abs_sq),
        "cubic": GridField(abs_sq * a),
    }


def inner(u, v, product: str = "L2", basis: Basis | None = None) -> float:
    """``(u, v)`` in L2, V or W.

    L2 takes two sampled fields of equal rank.  V and W take spectral states and
    evaluate ``(upsilon(u), v)`` and ``(u, v)_V + (upsilon(u), upsilon(v))`` by
    quadrature, with ``upsilon(u) = u - alpha1 Lap u`` built from analytic
    Laplacians.
    """
    if product == "L2":
        a = u.data if isinstance(u, GridField) else np.asarray(u, dtype=float)
        b = v.data if isinstance(v, GridField) else np.asarray(v, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"rank/grid mismatch: {a.shape} vs {b.shape}")
        lead = tuple(range(a.ndim - 2))
        pointwise = np.sum(a * b, axis=lead) if lead else a * b
        if basis is not None:
            return basis.integrate(pointwise)
        return _trapezoid(pointwise)
    if basis is None:
        raise ValueError(f"{product} inner product needs the basis")
    if product not in ("V", "W"):
        raise ValueError(f"unknown product {product!r}")
    uu = synthesize(u, basis).data
    vv = synthesize(v, basis).data
    ups_u = uu - basis.alpha1 * synthesize(u, basis, "laplacian").data
    val = basis.integrate(np.sum(ups_u * vv, axis=0))
    if product == "W":
        ups_v = vv - basis.alpha1 * synthesize(v, basis, "laplacian").data
        val += basis.integrate(np.sum(ups_u * ups_v, axis=0))
    return val


def inner_V_strain(u, v, basis: Basis) -> float:
    """The other form of the V product, ``(u, v) + 2 alpha1 (D u, D v)``."""
    uu, vv = synthesize(u, basis).data, synthesize(v, basis).data
    gu, gv = synthesize(u, basis, "gradient").data, synthesize(v, basis, "gradient").data
    du = 0.5 * (gu + gu.transpose(1, 0, 2, 3))
    dv = 0.5 * (gv + gv.transpose(1, 0, 2, 3))
    return basis.integrate(np.sum(uu * vv, axis=0)) + 2.0 * basis.alpha1 * basis.integrate(
        np.einsum("ijxy,ijxy->xy", du, dv)
    )


def _trapezoid(f: np.ndarray) -> float:
    n = f.shape[-1]
    h = np.pi / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return float(w @ f @ w)


@dataclass(frozen=True)
class NormReport:
    l2_sq: float
    l4_4: float
    v_sq: float
    w_sq: float
    w14: float
    d_sq: float
    a_sq: float
    a4_4: float
    grad_sq: float

    @property
    def w14_4(self) -> float:
        return self.w14**4

    def as_dict(self) -> dict:
        return asdict(self)


def norms(state, basis: Basis) -> NormReport:
    """All functionals used in the energy estimates, by quadrature.

    ``w14 = (||y||_4^4 + ||grad y||_4^4)^(1/4)`` with the Frobenius norm of the
    gradient; ``a_sq`` and ``a4_4`` are ``||A||_2^2`` and ``||A||_4^4`` for
    ``A = 2 D(y)``.
    """
    basis.spec.require_quartics()
    kin = kinematics(state, basis)
    return norms_from_kinematics(kin, basis)


def norms_from_kinematics(kin: Kinematics, basis: Basis) -> NormReport:
    y_sq = np.sum(kin.y * kin.y, axis=0)
    grad_sq = frobenius_sq(kin.grad)
    d_sq = frobenius_sq(kin.strain)
    a_abs = 4.0 * d_sq
    l2_sq = basis.integrate(y_sq)
    v_sq = basis.integrate(np.sum(kin.ups * kin.y, axis=0))
    w_sq = v_sq + basis.integrate(np.sum(kin.ups * kin.ups, axis=0))
    l4_4 = basis.integrate(y_sq * y_sq)
    g4_4 = basis.integrate(grad_sq * grad_sq)
    return NormReport(
        l2_sq=l2_sq,
        l4_4=l4_4,
        v_sq=v_sq,
        w_sq=w_sq,
        w14=float((l4_4 + g4_4) ** 0.25),
        d_sq=basis.integrate(d_sq),
        a_sq=basis.integrate(a_abs),
        a4_4=basis.integrate(a_abs * a_abs),
        grad_sq=basis.integrate(grad_sq),
    )
