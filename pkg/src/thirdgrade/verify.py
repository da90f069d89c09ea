"""Verification suite: every testable identity and inequality as a pass/fail check.

Identities among band-limited fields are quadrature-exact, so they are checked at
``1e-8`` relative.  Inequalities are checked sample by sample; where the constant
is attained in the basis span (Poincare, both Korn forms) a ``1e-9`` relative
slack absorbs round-off at equality.

The strong-form oracle differentiates sampled tensors spectrally on a refined
grid, independently of the analytic mode derivatives used in production.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .basis import Basis, BasisSpec, build_basis, modified_stokes, restrict, synthesize
from .fields import frobenius_sq, inner, inner_V_strain, kinematics, norms_from_kinematics
from .noise import NoiseModel, ScalarMask, VectorShape, check_hypotheses
from .operators import N_op, Params, S_op, _convection_field, strain_convention, trilinear_b, weak_pairing

IDENTITY_TOL = 1e-8
ATTAINED_SLACK = 1e-9
# K2 and P are exact on this domain: ||A||_2^2 = 2 ||grad y||_2^2, and mode (1,1) minimises mu
KORN_L2 = 1.0 / np.sqrt(2.0)
POINCARE = 1.0 / np.sqrt(2.0)
DEFAULT_SPEC = BasisSpec(4, 4, 1.0, 34)
DEFAULT_PARAMS = Params(nu=1.0, alpha1=1.0, alpha2=0.5, beta=0.5)


@dataclass
class CheckResult:
    name: str
    anchor: str
    trials: int
    max_residual: float
    tolerance: float
    kind: str = "identity"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "kind": self.kind,
            "trials": self.trials,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "details": self.details,
        }


def _rel(a: float, b: float, scale: float) -> float:
    diff = abs(a - b)
    if diff == 0.0:
        return 0.0
    return diff / scale if scale > 0 else float("inf")


def _excess(lhs: float, rhs: float) -> float:
    """Relative amount by which ``lhs <= rhs`` fails (0 when it holds)."""
    if lhs <= rhs:
        return 0.0
    return (lhs - rhs) / rhs if rhs > 0 else float("inf")


class _Context:
    def __init__(self, basis: Basis, params: Params, trials: int, seed: int, zero: bool):
        self.basis = basis
        self.params = params
        self.trials = trials
        self.rng = np.random.default_rng(seed)
        self.zero = zero

    def state(self, basis: Basis | None = None) -> np.ndarray:
        b = basis or self.basis
        if self.zero:
            return np.zeros(len(b))
        return random_state(self.rng, b)


def random_state(rng: np.random.Generator, basis: Basis) -> np.ndarray:
    """Coefficients i.i.d. standard normal scaled by ``1 / lambda_j``."""
    return rng.standard_normal(len(basis)) / basis.lam


# ---------------------------------------------------------------- strong-form oracle


@lru_cache(maxsize=8)
def _diff_matrices(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Node-to-node derivative matrices for cosine and sine series on ``M`` nodes.

    ``Dc`` differentiates ``sum_{m<M} a_m cos(m x)`` sampled on all nodes; ``Ds``
    differentiates ``sum_{0<m<M-1} b_m sin(m x)`` sampled on interior nodes and
    returns values on all nodes.
    """
    x = np.linspace(0.0, np.pi, M)
    m = np.arange(M)
    C = np.cos(np.outer(x, m))
    Dc = (-m * np.sin(np.outer(x, m))) @ np.linalg.inv(C)
    mi = np.arange(1, M - 1)
    S = np.sin(np.outer(x[1:-1], mi))
    Ds = (mi * np.cos(np.outer(x, mi))) @ np.linalg.inv(S)
    return Dc, Ds


def strong_divergence(T: np.ndarray) -> np.ndarray:
    """``(div T)_i = d_j T_ij`` for a sampled tensor with the basis parity.

    Diagonal entries are cosine series in both variables, off-diagonal entries
    sine series in both.
    """
    M = T.shape[-1]
    Dc, Ds = _diff_matrices(M)
    dx_txx = Dc @ T[0, 0]
    dy_txy = T[0, 1][:, 1:-1] @ Ds.T
    dx_tyx = Ds @ T[1, 0][1:-1, :]
    dy_tyy = T[1, 1] @ Dc.T
    return np.stack([dx_txx + dy_txy, dx_tyx + dy_tyy])


def refined_spec(spec: BasisSpec) -> BasisSpec:
    return spec.with_grid(2 * (spec.grid_n - 1) + 1)


def strong_pairing(tensor_fn, phi: np.ndarray, spec: BasisSpec) -> float:
    """``(div T, phi)`` with ``T = tensor_fn(basis)`` differentiated on the refined grid."""
    fine = build_basis(refined_spec(spec))
    div = strong_divergence(tensor_fn(fine))
    return fine.integrate(np.sum(div * synthesize(phi, fine).data, axis=0))


# ------------------------------------------------------------------------- checks


def _check_eigenrelation(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    lam_closed = 2.0 + b.alpha1 * np.array([m.mu for m in b.modes], dtype=float)
    worst = float(np.max(np.abs(lam_closed - b.lam)))
    for _ in range(ctx.trials):
        v = ctx.state()
        for i in range(len(b)):
            ei = np.eye(len(b))[i]
            w = inner(v, ei, "W", b)
            vv = inner_V_strain(v, ei, b)
            worst = max(worst, _rel(w, b.lam[i] * vv, b.lam[i] * max(abs(vv), np.abs(v).max(initial=0.0))))
    return worst, {}


def _check_v_forms(ctx: _Context) -> tuple[float, dict]:
    worst = 0.0
    for _ in range(ctx.trials):
        u, v = ctx.state(), ctx.state()
        a, c = inner(u, v, "V", ctx.basis), inner_V_strain(u, v, ctx.basis)
        worst = max(worst, _rel(a, c, np.linalg.norm(u) * np.linalg.norm(v)))
    return worst, {}


def _abs_b(p, gz, w, basis) -> float:
    return basis.integrate(np.einsum("jxy,ijxy,ixy->xy", np.abs(p), np.abs(gz), np.abs(w)))


def _check_antisymmetry(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    worst = 0.0
    for _ in range(ctx.trials):
        phi, z, y = ctx.state(), ctx.state(), ctx.state()
        b1, b2 = trilinear_b(phi, z, y, b), trilinear_b(phi, y, z, b)
        pf = synthesize(phi, b).data
        scale = _abs_b(pf, synthesize(z, b, "gradient").data, synthesize(y, b).data, b)
        worst = max(worst, _rel(b1, -b2, scale))
    return worst, {}


def _check_convection(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    worst = 0.0
    for _ in range(ctx.trials):
        kin = kinematics(ctx.state(), b)
        conv = _convection_field(kin)
        val = b.integrate(np.sum(conv * kin.y, axis=0))
        scale = b.integrate(np.sum(np.abs(conv) * np.abs(kin.y), axis=0))
        worst = max(worst, _rel(val, 0.0, scale))
    return worst, {}


def _check_cubic(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    beta = ctx.params.beta or 1.0
    worst, ratio = 0.0, 1.0
    for _ in range(ctx.trials):
        y = ctx.state()
        lhs = weak_pairing(S_op(y, b, beta), y, b)
        rhs = -0.5 * beta * norms_from_kinematics(kinematics(y, b), b).a4_4
        worst = max(worst, _rel(lhs, rhs, abs(rhs)))
        if lhs != 0.0:
            ratio = rhs / lhs
    return worst, {"rhs_over_lhs": ratio}


def _check_s_monotone(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    beta = ctx.params.beta or 1.0
    worst = 0.0
    for _ in range(ctx.trials):
        y, yh = ctx.state(), ctx.state()
        lhs = weak_pairing(S_op(yh, b, beta).data - S_op(y, b, beta).data, yh - y, b)
        a = 2.0 * kinematics(y, b).strain
        ah = 2.0 * kinematics(yh, b).strain
        sa, sah = frobenius_sq(a), frobenius_sq(ah)
        i1 = b.integrate((sah - sa) ** 2)
        i2 = b.integrate((sah + sa) * frobenius_sq(ah - a))
        if i1 < 0 or i2 < 0:
            return float("inf"), {"negative_integral": True}
        rhs = -0.25 * beta * (i1 + i2)
        worst = max(worst, _rel(lhs, rhs, abs(rhs)))
    return worst, {}


def _random_shape(rng: np.random.Generator, kmax: int) -> VectorShape:
    a, bb, c, d = (int(v) for v in rng.integers(0, kmax + 1, size=4))
    return VectorShape(a, bb, c, d, float(rng.standard_normal()), float(rng.standard_normal()))


def _check_stokes(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    K = b.spec.max_wavenumber
    x = b.nodes
    worst = 0.0
    for _ in range(ctx.trials):
        if ctx.zero:
            f = np.zeros((2, b.grid_n, b.grid_n))
        else:
            f = sum(_random_shape(ctx.rng, K + 2).sample(x) for _ in range(3))
        ft = modified_stokes(f, b)
        for i in range(len(b)):
            ei = np.eye(len(b))[i]
            lhs = inner_V_strain(ft, ei, b)
            rhs = b.integrate(np.sum(f * b.values[i], axis=0))
            worst = max(worst, _rel(lhs, rhs, np.sqrt(b.integrate(np.sum(f * f, axis=0)))))
        # pure gradients are annihilated
        p, q = (0, 0) if ctx.zero else (int(v) for v in ctx.rng.integers(1, K + 1, size=2))
        grad = np.stack([-p * np.outer(np.sin(p * x), np.cos(q * x)), -q * np.outer(np.cos(p * x), np.sin(q * x))])
        g_norm = np.sqrt(b.integrate(np.sum(grad * grad, axis=0)))
        worst = max(worst, _rel(float(np.abs(modified_stokes(grad, b)).max()), 0.0, g_norm))
    return worst, {}


def _a_sq_fn(y):
    def fn(basis):
        a = 2.0 * kinematics(y, basis).strain
        return np.einsum("ikxy,kjxy->ijxy", a, a)

    return fn


def _n_diff_fn(y, yh, params):
    def fn(basis):
        return N_op(yh, basis, params.alpha1, params.alpha2).data - N_op(y, basis, params.alpha1, params.alpha2).data

    return fn


def _check_weak_strong(ctx: _Context) -> tuple[float, dict]:
    b, p = ctx.basis, ctx.params
    spec = b.spec
    fine = build_basis(refined_spec(spec))
    worst = {"A_sq": 0.0, "N_difference": 0.0}
    for _ in range(ctx.trials):
        y, yh, phi = ctx.state(), ctx.state(), ctx.state()
        for name, fn, test in (("A_sq", _a_sq_fn(y), phi), ("N_difference", _n_diff_fn(y, yh, p), yh - y)):
            weak = weak_pairing(fn(b), test, b)
            strong = strong_pairing(fn, test, spec)
            t = fn(fine)
            scale = fine.integrate(
                np.einsum("ijxy,ijxy->xy", np.abs(t), np.abs(synthesize(test, fine, "gradient").data))
            )
            worst[name] = max(worst[name], _rel(strong, weak, scale))
    return max(worst.values()), worst


def _check_projection(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    spec = b.spec
    big = build_basis(BasisSpec(spec.kmax + 2, spec.lmax + 2, spec.alpha1))
    worst = 0.0
    for _ in range(ctx.trials):
        y = ctx.state(big)
        worst = max(worst, _excess(float(np.linalg.norm(restrict(y, big, b))), float(np.linalg.norm(y))))
    return worst, {}


def _check_young(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    s = ctx.params.alpha_sum
    worst = 0.0
    for _ in range(ctx.trials):
        y = ctx.state()
        a = 2.0 * kinematics(y, b).strain
        a2 = np.einsum("ikxy,kjxy->ijxy", a, a)
        lhs = abs(s * weak_pairing(a2, y, b))
        a2_sq = b.integrate(frobenius_sq(a2))
        a_sq = b.integrate(frobenius_sq(a))
        for eps in (0.1, 1.0, 10.0):
            rhs = eps * a2_sq + s * s / (16.0 * eps) * a_sq
            worst = max(worst, _excess(lhs, rhs) if lhs > 0 else 0.0)
    return worst, {}


def _check_korn_w14(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    K = korn_w14_sup(b.spec)
    worst = 0.0
    for _ in range(ctx.trials):
        n = norms_from_kinematics(kinematics(ctx.state(), b), b)
        if n.w14 > 0:
            worst = max(worst, _excess(n.w14, K * n.a4_4**0.25))
    return worst, {"K_star": K}


def _check_korn_l2(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    worst = 0.0
    for _ in range(ctx.trials):
        n = norms_from_kinematics(kinematics(ctx.state(), b), b)
        if n.grad_sq > 0:
            worst = max(worst, _excess(np.sqrt(n.grad_sq), KORN_L2 * np.sqrt(n.a_sq)))
    return worst, {"K2": KORN_L2}


def _check_poincare(ctx: _Context) -> tuple[float, dict]:
    b = ctx.basis
    worst = 0.0
    for _ in range(ctx.trials):
        n = norms_from_kinematics(kinematics(ctx.state(), b), b)
        if n.l2_sq > 0:
            worst = max(worst, _excess(np.sqrt(n.l2_sq), POINCARE * np.sqrt(n.grad_sq)))
    return worst, {"P": POINCARE}


# (name, anchor, kind, tolerance, check)
REGISTRY = (
    ("eigenrelation", "(v, e_i)_W = lambda_i (v, e_i)_V with lambda_i = 2 + alpha1 mu_i", "identity", IDENTITY_TOL, _check_eigenrelation),
    ("v_product_forms", "(upsilon(u), z) = (u, z) + 2 alpha1 (Du, Dz)", "identity", IDENTITY_TOL, _check_v_forms),
    ("antisymmetry", "b(phi, z, y) = -b(phi, y, z)", "identity", IDENTITY_TOL, _check_antisymmetry),
    ("convection_cancellation", "((Y.grad) upsilon + sum_j upsilon_j grad Y_j, Y) = 0", "identity", IDENTITY_TOL, _check_convection),
    ("cubic_dissipation", "<div S(Y), Y> = -(beta/2) ||A||_4^4", "identity", IDENTITY_TOL, _check_cubic),
    ("s_monotonicity", "<div(S(y^) - S(y)), y^ - y> = -(beta/4)(int(|A^|^2 - |A|^2)^2 + int(|A^|^2 + |A|^2)|A^ - A|^2)", "identity", IDENTITY_TOL, _check_s_monotone),
    ("stokes_lift", "(f~, h)_V = (f, h), gradients annihilated", "identity", IDENTITY_TOL, _check_stokes),
    ("weak_strong_pairing", "(div T, phi) = -(T, grad phi) for T = A^2 and N(y^) - N(y)", "identity", IDENTITY_TOL, _check_weak_strong),
    ("projection_contraction", "||P_n y||_V <= ||y||_V", "inequality", 0.0, _check_projection),
    ("alpha_young", "|(a1+a2) <div A^2, y>| <= eps ||A^2||^2 + (a1+a2)^2/(16 eps) ||A||^2, eps in {0.1, 1, 10}", "inequality", 0.0, _check_young),
    ("korn_w14", "||y||_W14 <= K_* ||A(y)||_4", "inequality", ATTAINED_SLACK, _check_korn_w14),
    ("korn_l2", "||grad y||_2 <= K2 ||A(y)||_2", "inequality", ATTAINED_SLACK, _check_korn_l2),
    ("poincare", "||y||_2 <= P ||grad y||_2", "inequality", ATTAINED_SLACK, _check_poincare),
)

CHECK_NAMES = tuple(r[0] for r in REGISTRY)


def run_suite(
    spec: BasisSpec = DEFAULT_SPEC,
    params: Params | None = None,
    trials: int = 100,
    seed: int = 0,
    zero_state: bool = False,
    strain_scale: float | None = None,
    only: tuple[str, ...] | None = None,
) -> list[CheckResult]:
    """Run the registered checks in order.

    ``zero_state`` puts the zero field in every random slot.  ``strain_scale``
    rebuilds the operators with ``A = scale * D`` (debug hook for self-testing).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = params or Params(DEFAULT_PARAMS.nu, spec.alpha1, DEFAULT_PARAMS.alpha2, DEFAULT_PARAMS.beta)
    if params.alpha1 != spec.alpha1:
        raise ValueError(f"params alpha1={params.alpha1} differs from basis alpha1={spec.alpha1}")
    spec.require_quartics()
    basis = build_basis(spec)
    hook = strain_convention(strain_scale) if strain_scale is not None else contextlib.nullcontext()
    results = []
    with hook:
        for i, (name, anchor, kind, tol, fn) in enumerate(REGISTRY):
            if only and name not in only:
                continue
            # each check draws from its own stream so the registry order does not matter
            ctx = _Context(basis, params, trials, seed * 1000 + i, zero_state)
            residual, details = fn(ctx)
            results.append(CheckResult(name, anchor, trials, float(residual), tol, kind, details))
    return results


# ---------------------------------------------------------------- constants


def _korn_ratio(c: np.ndarray, basis: Basis) -> float:
    n = norms_from_kinematics(kinematics(c, basis), basis)
    return n.w14 / n.a4_4**0.25 if n.a4_4 > 0 else 0.0


@lru_cache(maxsize=16)
def korn_w14_sup(spec: BasisSpec, starts: int = 8) -> float:
    """Sup of ``||y||_W14 / ||A(y)||_4`` over the span, by multi-start BFGS.

    The ratio is scale invariant, so this is a sup over the unit sphere.
    """
    basis = build_basis(spec if spec.resolves_quartics else spec.with_grid(spec.quartic_grid))
    rng = np.random.default_rng(12345)
    best = max(_korn_ratio(np.eye(len(basis))[i], basis) for i in range(len(basis)))
    for _ in range(starts):
        x0 = random_state(rng, basis)
        res = minimize(lambda c: -_korn_ratio(c, basis), x0, method="BFGS")
        best = max(best, -float(res.fun))
    return best


def default_noise() -> NoiseModel:
    return NoiseModel(
        "truncated_multiplicative",
        masks=(ScalarMask(1, 0, 0.5, 1.0), ScalarMask(0, 1, 0.5, 0.5)),
        rho=0.5,
        R=1.0,
    )


def convection_constant(basis: Basis, trials: int, rng: np.random.Generator) -> float:
    """Max of ``|b(w, upsilon(y), w)| / (||y||_W ||w||_V^2)`` over random pairs."""
    best = 0.0
    for _ in range(trials):
        y, w = random_state(rng, basis), random_state(rng, basis)
        ups_grad = np.tensordot(y * basis.upsilon_factor, basis.gradients, axes=1)
        wf = synthesize(w, basis).data
        val = abs(basis.integrate(np.einsum("jxy,ijxy,ixy->xy", wf, ups_grad, wf)))
        best = max(best, val / (np.sqrt(basis.lam @ (y * y)) * float(w @ w)))
    return best


def s_continuity_constant(basis: Basis, trials: int, rng: np.random.Generator, beta: float = 1.0) -> float:
    """Max of the S continuity ratio over random triples ``(y, y^, phi)``."""
    best = 0.0
    for _ in range(trials):
        y, yh, phi = (random_state(rng, basis) for _ in range(3))
        num = abs(weak_pairing(S_op(y, basis, beta).data - S_op(yh, basis, beta).data, phi, basis))
        ky, kh = kinematics(y, basis), kinematics(yh, basis)
        diff_abs = frobenius_sq(2.0 * ky.strain) - frobenius_sq(2.0 * kh.strain)
        w = lambda c: np.sqrt(basis.lam @ (c * c))  # noqa: E731
        den = w(y) ** 2 * np.linalg.norm(y - yh) * w(phi) + w(yh) * np.sqrt(basis.integrate(diff_abs**2)) * w(phi)
        best = max(best, num / den)
    return best


def estimate_constants(spec: BasisSpec = DEFAULT_SPEC, trials: int = 200, seed: int = 0, noise: NoiseModel | None = None) -> dict:
    """Empirical constants as maxima of ratios over random samples."""
    if trials < 10:
        raise ValueError("trials must be >= 10")
    spec.require_quartics()
    basis = build_basis(spec)
    rng = np.random.default_rng(seed)
    k_star = k2 = poinc = 0.0
    for _ in range(trials):
        n = norms_from_kinematics(kinematics(random_state(rng, basis), basis), basis)
        k_star = max(k_star, n.w14 / n.a4_4**0.25)
        k2 = max(k2, np.sqrt(n.grad_sq / n.a_sq))
        poinc = max(poinc, np.sqrt(n.l2_sq / n.grad_sq))
    noise = noise or default_noise()
    hyp = check_hypotheses(noise, basis, sample_count=max(10, trials // 4), seed=seed)
    return {
        "K_star": float(k_star),
        "K_star_sup": korn_w14_sup(spec),
        "K2": float(k2),
        "P": float(poinc),
        "K_hat": hyp.K_hat,
        "L_hat": hyp.L_hat,
        "gamma_hat": hyp.gamma_hat,
        "C_convection": float(convection_constant(basis, trials, rng)),
        "C_S": float(s_continuity_constant(basis, trials, rng)),
        "sample": {"kmax": spec.kmax, "lmax": spec.lmax, "alpha1": spec.alpha1, "grid_n": spec.grid_n, "trials": trials, "seed": seed},
    }
