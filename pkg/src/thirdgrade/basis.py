"""Analytic divergence-free eigenbasis on the square [0, pi]^2.

Each mode comes from the stream function ``psi = sin(kx) sin(ly)``.  Its velocity
``(d_y psi, -d_x psi)`` is tangent to every wall and has zero tangential stress
there, and it is an eigenfunction of the Laplacian with ``mu = k^2 + l^2``.  In the
V inner product ``(u, z)_V = (u - alpha1 * Lap u, z)`` the modes are orthogonal,
so after scaling them to unit V-norm they are also orthogonal in W with
eigenvalue ``2 + alpha1 * mu``.

Fields live on a uniform grid that includes the boundary nodes and are integrated
with the composite trapezoidal rule.  On [0, pi] that rule is exact for
``cos(m x)`` whenever ``0 < m < 2 (grid_n - 1)``, and every integrand built here
is a cosine series in each variable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ResolutionError",
    "ModeIndex",
    "BasisSpec",
    "BasisFunction",
    "SpectralState",
    "GridField",
    "Basis",
    "build_basis",
    "project_V",
    "synthesize",
    "modified_stokes",
    "boundary_residual",
    "coeffs_of",
    "embed",
    "restrict",
]


class ResolutionError(ValueError):
    """The quadrature grid cannot resolve the requested products exactly."""


@dataclass(frozen=True, order=True)
class ModeIndex:
    k: int
    l: int

    def __post_init__(self):
        if self.k < 1 or self.l < 1:
            raise ValueError(f"mode wavenumbers must be >= 1, got ({self.k}, {self.l})")

    @property
    def mu(self) -> int:
        return self.k * self.k + self.l * self.l


@dataclass(frozen=True)
class BasisSpec:
    """Truncation ``1 <= k <= kmax, 1 <= l <= lmax`` and its quadrature grid.

    ``grid_n`` defaults to the quartic rule ``4 * max(kmax, lmax) + 2``, which is
    enough for every quartic functional and for the cubic drift terms.
    """

    kmax: int
    lmax: int
    alpha1: float = 0.0
    grid_n: int | None = None

    def __post_init__(self):
        if self.kmax < 1 or self.lmax < 1:
            raise ValueError("kmax and lmax must be >= 1")
        if self.alpha1 < 0:
            raise ValueError(f"alpha1 must be >= 0, got {self.alpha1}")
        if self.grid_n is None:
            object.__setattr__(self, "grid_n", self.quartic_grid)
        if self.grid_n < self.minimal_grid:
            raise ResolutionError(
                f"grid_n={self.grid_n} under-resolves modes up to wavenumber "
                f"{self.max_wavenumber}; need grid_n >= {self.minimal_grid}"
            )

    @property
    def max_wavenumber(self) -> int:
        return max(self.kmax, self.lmax)

    @property
    def minimal_grid(self) -> int:
        return 2 * self.max_wavenumber + 2

    @property
    def quartic_grid(self) -> int:
        return 4 * self.max_wavenumber + 2

    @property
    def resolves_quartics(self) -> bool:
        return self.grid_n >= self.quartic_grid

    @property
    def size(self) -> int:
        return self.kmax * self.lmax

    def require_quartics(self) -> None:
        if not self.resolves_quartics:
            raise ResolutionError(
                f"quartic quantities need grid_n >= {self.quartic_grid}, have {self.grid_n}"
            )

    def with_grid(self, grid_n: int) -> "BasisSpec":
        return BasisSpec(self.kmax, self.lmax, self.alpha1, grid_n)


@dataclass(frozen=True)
class BasisFunction:
    mode: ModeIndex
    mu: float
    lam: float
    v_normalizer: float


@dataclass
class SpectralState:
    """Coefficients of ``Y = sum_j c_j e_j`` in the V-orthonormal basis."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1:
            raise ValueError("coefficient vector must be one-dimensional")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficient vector contains non-finite entries")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    def __len__(self) -> int:
        return self.coeffs.size


_RANKS = {2: "scalar", 3: "vector", 4: "tensor"}


@dataclass
class GridField:
    """Sampled field: shape ``(N, N)``, ``(2, N, N)`` or ``(2, 2, N, N)``.

    Vector component ``i`` is ``data[i]``; tensor entry ``(i, j)`` is ``data[i, j]``
    and for gradients means ``d_j u_i``.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim not in _RANKS:
            raise ValueError(f"unsupported field shape {self.data.shape}")
        if self.data.shape[:-2] not in ((), (2,), (2, 2)):
            raise ValueError(f"component count does not match a 2D rank: {self.data.shape}")
        if self.data.shape[-1] != self.data.shape[-2]:
            raise ValueError("grid must be square")

    @property
    def rank(self) -> str:
        return _RANKS[self.data.ndim]

    @property
    def grid_n(self) -> int:
        return self.data.shape[-1]


def coeffs_of(state) -> np.ndarray:
    if isinstance(state, SpectralState):
        return state.coeffs
    return np.asarray(state, dtype=float)


class Basis(Sequence):
    """Ordered V-orthonormal modes plus their samples on the quadrature grid.

    Arrays are indexed ``[mode, component(s), ix, iy]`` with ``x`` along the first
    grid axis.
    """

    def __init__(self, spec: BasisSpec, functions: list[BasisFunction]):
        self.spec = spec
        self.functions = tuple(functions)
        n = spec.grid_n
        self.nodes = np.linspace(0.0, np.pi, n)
        h = np.pi / (n - 1)
        w1 = np.full(n, h)
        w1[0] = w1[-1] = 0.5 * h
        self.weights = np.outer(w1, w1)
        self.k = np.array([f.mode.k for f in functions], dtype=float)
        self.l = np.array([f.mode.l for f in functions], dtype=float)
        self.mu = np.array([f.mu for f in functions])
        self.lam = np.array([f.lam for f in functions])
        self.norm = np.array([f.v_normalizer for f in functions])
        self.index = {f.mode: i for i, f in enumerate(functions)}
        # (1 + alpha1 mu): the factor relating L2 and V pairings with a mode
        self.upsilon_factor = 1.0 + spec.alpha1 * self.mu
        x = self.nodes
        self._sk = np.sin(np.outer(self.k, x))
        self._ck = np.cos(np.outer(self.k, x))
        self._sl = np.sin(np.outer(self.l, x))
        self._cl = np.cos(np.outer(self.l, x))

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, i):
        return self.functions[i]

    def __iter__(self) -> Iterator[BasisFunction]:
        return iter(self.functions)

    @property
    def alpha1(self) -> float:
        return self.spec.alpha1

    @property
    def grid_n(self) -> int:
        return self.spec.grid_n

    @property
    def modes(self) -> list[ModeIndex]:
        return [f.mode for f in self.functions]

    def _outer(self, a, b):
        return a[:, :, None] * b[:, None, :]

    @cached_property
    def values(self) -> np.ndarray:
        a, k, l = self.norm[:, None, None], self.k[:, None, None], self.l[:, None, None]
        ux = a * l * self._outer(self._sk, self._cl)
        uy = -a * k * self._outer(self._ck, self._sl)
        return np.stack([ux, uy], axis=1)

    @cached_property
    def gradients(self) -> np.ndarray:
        a, k, l = self.norm[:, None, None], self.k[:, None, None], self.l[:, None, None]
        cc = self._outer(self._ck, self._cl)
        ss = self._outer(self._sk, self._sl)
        g = np.empty((len(self), 2, 2, self.grid_n, self.grid_n))
        g[:, 0, 0] = a * k * l * cc
        g[:, 0, 1] = -a * l * l * ss
        g[:, 1, 0] = a * k * k * ss
        g[:, 1, 1] = -a * k * l * cc
        return g

    @cached_property
    def strains(self) -> np.ndarray:
        g = self.gradients
        return 0.5 * (g + g.transpose(0, 2, 1, 3, 4))

    @cached_property
    def hessians(self) -> np.ndarray:
        """``H[n, i, j, m] = d_j d_m (e_n)_i``."""
        a, k, l = self.norm[:, None, None], self.k[:, None, None], self.l[:, None, None]
        sc = self._outer(self._sk, self._cl)
        cs = self._outer(self._ck, self._sl)
        h = np.empty((len(self), 2, 2, 2, self.grid_n, self.grid_n))
        h[:, 0, 0, 0] = -a * l * k * k * sc
        h[:, 0, 0, 1] = h[:, 0, 1, 0] = -a * l * l * k * cs
        h[:, 0, 1, 1] = -a * l**3 * sc
        h[:, 1, 0, 0] = a * k**3 * cs
        h[:, 1, 0, 1] = h[:, 1, 1, 0] = a * k * k * l * sc
        h[:, 1, 1, 1] = a * k * l * l * cs
        return h

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f * self.weights, axis=(-2, -1)))

    def integrate_many(self, f: np.ndarray) -> np.ndarray:
        return np.sum(f * self.weights, axis=(-2, -1))

    def test_vector(self, v: np.ndarray) -> np.ndarray:
        """L2 pairings ``(v, e_i)`` for a sampled vector field ``v``."""
        return np.einsum("nixy,ixy,xy->n", self.values, v, self.weights, optimize=True)

    def test_tensor(self, t: np.ndarray) -> np.ndarray:
        """Frobenius pairings ``(T, grad e_i)`` for a sampled 2-tensor ``T``."""
        return np.einsum("nijxy,ijxy,xy->n", self.gradients, t, self.weights, optimize=True)


@lru_cache(maxsize=64)
def build_basis(spec: BasisSpec) -> Basis:
    """Modes ``e = v_normalizer * (d_y psi, -d_x psi)`` sorted by ``(lambda, k, l)``.

    ``v_normalizer = 1 / sqrt((1 + alpha1 mu) * mu * pi^2 / 4)`` because the curl of
    ``sin(kx) sin(ly)`` has squared L2 norm ``mu * pi^2 / 4`` and the V-norm of a
    mode is ``(1 + alpha1 mu)`` times its squared L2 norm.
    """
    funcs = []
    for k in range(1, spec.kmax + 1):
        for l in range(1, spec.lmax + 1):
            mode = ModeIndex(k, l)
            mu = float(mode.mu)
            lam = 2.0 + spec.alpha1 * mu
            norm = 1.0 / np.sqrt((1.0 + spec.alpha1 * mu) * mu * np.pi**2 / 4.0)
            funcs.append(BasisFunction(mode, mu, lam, float(norm)))
    funcs.sort(key=lambda f: (f.lam, f.mode.k, f.mode.l))
    return Basis(spec, funcs)


def _check_state(c: np.ndarray, basis: Basis) -> np.ndarray:
    if c.shape != (len(basis),):
        raise ValueError(f"state has length {c.shape}, basis has {len(basis)} modes")
    return c


def synthesize(state, basis: Basis, derivative_order: str = "value") -> GridField:
    """Sample ``sum_j c_j d^order e_j`` on the basis grid.

    ``derivative_order`` is one of ``value``, ``gradient``, ``laplacian`` or
    ``hessian``; all derivatives are analytic.
    """
    c = _check_state(coeffs_of(state), basis)
    if derivative_order == "value":
        arr = np.tensordot(c, basis.values, axes=1)
    elif derivative_order == "gradient":
        arr = np.tensordot(c, basis.gradients, axes=1)
    elif derivative_order == "laplacian":
        arr = np.tensordot(-basis.mu * c, basis.values, axes=1)
    elif derivative_order == "hessian":
        # rank-3; returned raw because GridField stops at 2-tensors
        return np.tensordot(c, basis.hessians, axes=1)
    else:
        raise ValueError(f"unknown derivative order {derivative_order!r}")
    return GridField(arr)


def _field_array(field, basis: Basis, rank: str = "vector") -> np.ndarray:
    arr = field.data if isinstance(field, GridField) else np.asarray(field, dtype=float)
    expected = {"vector": (2, basis.grid_n, basis.grid_n)}[rank]
    if arr.shape != expected:
        raise ValueError(f"field shape {arr.shape} does not match grid {expected}")
    return arr


def project_V(field, basis: Basis) -> np.ndarray:
    """V-coefficients ``c_j = (field, e_j)_V`` of a sampled vector field.

    Uses the symmetric form ``(u, e_j)_V = (u, e_j - alpha1 Lap e_j)``, valid for
    fields in V; for band-limited fields in the span this is an exact inverse of
    :func:`synthesize`.
    """
    v = _field_array(field, basis)
    return basis.upsilon_factor * basis.test_vector(v)


def modified_stokes(f, basis: Basis) -> np.ndarray:
    """Coefficients of the lift ``f~`` solving ``f~ - alpha1 Lap f~ = f - grad p``.

    Testing against divergence-free tangent modes removes the pressure, so
    ``(f~, e_j)_V = (f, e_j)`` and the coefficients are plain L2 pairings.
    """
    v = _field_array(f, basis)
    return basis.test_vector(v)


def boundary_residual(field) -> dict:
    """Largest ``|u . n|`` and ``|(n . D(u)) . tau|`` over the four walls.

    Accepts a vector field, or a ``(value, gradient)`` pair.  Without the gradient
    only the normal trace is reported (tangential stress as ``nan``).
    """
    if isinstance(field, tuple):
        value, grad = field
        u = value.data if isinstance(value, GridField) else np.asarray(value)
        g = grad.data if isinstance(grad, GridField) else np.asarray(grad)
    else:
        u = field.data if isinstance(field, GridField) else np.asarray(field)
        g = None
    normal = max(
        np.abs(u[0][0, :]).max(),
        np.abs(u[0][-1, :]).max(),
        np.abs(u[1][:, 0]).max(),
        np.abs(u[1][:, -1]).max(),
    )
    if g is None:
        return {"normal": float(normal), "tangential_stress": float("nan")}
    d_xy = 0.5 * (g[0, 1] + g[1, 0])
    # on every wall of the square (n . D) . tau is +-D_xy
    stress = max(
        np.abs(d_xy[0, :]).max(),
        np.abs(d_xy[-1, :]).max(),
        np.abs(d_xy[:, 0]).max(),
        np.abs(d_xy[:, -1]).max(),
    )
    return {"normal": float(normal), "tangential_stress": float(stress)}


def embed(c, coarse: Basis, fine: Basis) -> np.ndarray:
    """Zero-pad coarse coefficients into the fine basis by matching modes."""
    c = coeffs_of(c)
    out = np.zeros(len(fine))
    for i, mode in enumerate(coarse.modes):
        try:
            out[fine.index[mode]] = c[i]
        except KeyError:
            raise ValueError(f"mode {mode} of the coarse basis is missing from the fine one")
    return out


def restrict(c, fine: Basis, coarse: Basis) -> np.ndarray:
    """Keep the fine coefficients of modes that exist in ``coarse``."""
    c = coeffs_of(c)
    return np.array([c[fine.index[m]] if m in fine.index else 0.0 for m in coarse.modes])
