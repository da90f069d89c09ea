"""Time integration of the Galerkin SDE system with per-step energy accounting.

The state is the coefficient vector ``c`` in the V-orthonormal basis, so the
V-mass matrix is the identity and each scheme is an explicit update of ``c``:

* Euler-Maruyama: ``c' = c + F(c) dt + G(c) dW``
* semi-implicit: the linear viscous part ``-rho_i c_i`` with
  ``rho_i = nu mu_i / (1 + alpha1 mu_i)`` is taken at the new time level.

``G[i, k] = (sigma_k, e_i)`` are the coefficients of the modified-Stokes lift of
each noise channel.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Basis, BasisSpec, ModeIndex, build_basis, coeffs_of
from .noise import BoundNoise, NoiseModel, VectorShape, WienerPath
from .operators import Params, drift_with_diagnostics

SCHEMES = ("euler_maruyama", "semi_implicit")
IC_FAMILIES = ("single_mode", "random_band", "taylor_green_like", "modes")
# explicit stepping is flagged when dt * max viscous rate exceeds this
STIFFNESS_LIMIT = 0.5


class ConfigError(ValueError):
    """A run configuration violates a model or numerical constraint."""


class StiffnessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InitialCondition:
    """A named initial-condition family, defined mode by mode so that every
    Galerkin level sees the projection of the same field.

    * ``single_mode``: ``k``, ``l``, ``amplitude``
    * ``random_band``: ``kmax``, ``v_norm``, ``seed``; Gaussian coefficients decaying
      like ``1 / mu^2`` on ``1 <= k, l <= kmax``, scaled to the given V-norm
    * ``taylor_green_like``: ``amplitude``; a fixed four-mode cellular flow
    * ``modes``: ``coeffs``, a list of ``[k, l, value]``
    """

    family: str = "single_mode"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in IC_FAMILIES:
            raise ConfigError(f"unknown initial condition family {self.family!r}; expected one of {IC_FAMILIES}")

    def __hash__(self):
        return hash((self.family, repr(sorted(self.params.items()))))

    def mode_map(self) -> dict[ModeIndex, float]:
        p = self.params
        if self.family == "single_mode":
            return {ModeIndex(int(p.get("k", 1)), int(p.get("l", 1))): float(p.get("amplitude", 1.0))}
        if self.family == "taylor_green_like":
            a = float(p.get("amplitude", 1.0))
            return {
                ModeIndex(1, 1): a,
                ModeIndex(1, 2): 0.25 * a,
                ModeIndex(2, 1): -0.25 * a,
                ModeIndex(2, 2): 0.125 * a,
            }
        if self.family == "modes":
            return {ModeIndex(int(k), int(l)): float(v) for k, l, v in p.get("coeffs", [])}
        kmax = int(p.get("kmax", 3))
        v_norm = float(p.get("v_norm", 1.0))
        rng = np.random.default_rng(int(p.get("seed", 0)))
        out = {}
        for k in range(1, kmax + 1):
            for l in range(1, kmax + 1):
                out[ModeIndex(k, l)] = rng.standard_normal() / float(k * k + l * l) ** 2
        scale = v_norm / np.sqrt(sum(v * v for v in out.values()))
        return {m: v * scale for m, v in out.items()}

    def coeffs(self, basis: Basis, strict: bool = False) -> np.ndarray:
        """V-projection onto ``basis``: modes outside the truncation are dropped."""
        c = np.zeros(len(basis))
        for mode, v in self.mode_map().items():
            if mode in basis.index:
                c[basis.index[mode]] = v
            elif strict:
                raise ConfigError(f"initial mode {mode} is outside the basis")
        return c

    def tail_energy(self, basis: Basis) -> float:
        """``||Y0 - P_n Y0||_V^2`` for the truncation ``basis``."""
        return float(sum(v * v for m, v in self.mode_map().items() if m not in basis.index))


@dataclass(frozen=True)
class SimConfig:
    nu: float
    alpha1: float
    alpha2: float
    beta: float
    T: float = 0.1
    dt: float = 1e-3
    basis: BasisSpec | None = None
    noise: NoiseModel = field(default_factory=NoiseModel.none)
    forcing: tuple[VectorShape, ...] = ()
    ic: InitialCondition = field(default_factory=InitialCondition)
    seed: int = 0
    M_stop: float | None = None
    p_moment: int = 6
    linear_test_mode: bool = False
    allow_unsafe_noise: bool = False
    scheme: str = "euler_maruyama"
    wiener_refine: int = 0
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.basis is None:
            object.__setattr__(self, "basis", BasisSpec(4, 4, self.alpha1))
        object.__setattr__(self, "forcing", tuple(self.forcing))
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))

    @property
    def params(self) -> Params:
        return Params(self.nu, self.alpha1, self.alpha2, self.beta, self.linear_test_mode)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_level(self, n_modes: int) -> "SimConfig":
        """Same run on the ``sqrt(n) x sqrt(n)`` truncation with its quartic grid."""
        K = int(round(np.sqrt(n_modes)))
        if K * K != n_modes:
            raise ConfigError(f"Galerkin level {n_modes} is not a square mode count")
        return replace(self, basis=BasisSpec(K, K, self.alpha1))


def thermodynamic_bound(nu: float, beta: float) -> float:
    return float(np.sqrt(24.0 * nu * beta))


def viscous_rates(basis: Basis, nu: float) -> np.ndarray:
    return nu * basis.mu / basis.upsilon_factor


def validate(config: SimConfig) -> SimConfig:
    """Check every model and numerical constraint; raise ``ConfigError`` naming the first violated."""
    c = config
    if c.nu < 0:
        raise ConfigError(f"viscosity nu must be >= 0, got {c.nu}")
    if c.alpha1 < 0:
        raise ConfigError(f"alpha1 must be >= 0, got {c.alpha1}")
    if c.beta < 0:
        raise ConfigError(f"beta must be >= 0, got {c.beta}")
    if c.basis.alpha1 != c.alpha1:
        raise ConfigError(f"basis alpha1={c.basis.alpha1} differs from model alpha1={c.alpha1}")
    s = c.alpha1 + c.alpha2
    if c.linear_test_mode:
        if c.beta != 0.0 or s != 0.0:
            raise ConfigError(
                f"linear test mode requires beta = 0 and alpha1 + alpha2 = 0, got beta={c.beta}, "
                f"alpha1 + alpha2={s}"
            )
    elif c.beta == 0.0:
        raise ConfigError("beta = 0 is only admitted in linear test mode (with alpha1 + alpha2 = 0)")
    else:
        bound = thermodynamic_bound(c.nu, c.beta)
        if abs(s) > bound:
            raise ConfigError(
                f"thermodynamic compatibility requires |alpha1 + alpha2| <= sqrt(24 nu beta): "
                f"|{s:g}| > sqrt(24*{c.nu:g}*{c.beta:g}) = {bound:.4g}"
            )
    if not c.dt > 0:
        raise ConfigError(f"dt must be > 0, got {c.dt}")
    if c.T < c.dt:
        raise ConfigError(f"horizon T={c.T} must be >= dt={c.dt}")
    if abs(c.n_steps * c.dt - c.T) > 1e-9 * c.T:
        raise ConfigError(f"T={c.T} is not a whole number of steps dt={c.dt}")
    if c.p_moment < 2:
        raise ConfigError(f"p_moment must be >= 2, got {c.p_moment}")
    if c.M_stop is not None and not c.M_stop > 0:
        raise ConfigError(f"M_stop must be > 0, got {c.M_stop}")
    if c.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {c.scheme!r}; expected one of {SCHEMES}")
    if c.wiener_refine < 0:
        raise ConfigError("wiener_refine must be >= 0")
    if c.noise.kind == "linear_unsafe" and not c.allow_unsafe_noise:
        raise ConfigError(
            "linear_unsafe noise violates the growth condition (gamma = 2 >= 2); "
            "pass --allow-unsafe-noise to run it anyway"
        )
    if not c.basis.resolves_quartics:
        raise ConfigError(f"grid_n={c.basis.grid_n} does not resolve quartic terms; need >= {c.basis.quartic_grid}")
    basis = build_basis(c.basis)
    try:
        c.noise.check_resolution(basis)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    for g in c.forcing:
        if g.max_wavenumber + c.basis.max_wavenumber >= 2 * (basis.grid_n - 1):
            raise ConfigError(f"forcing wavenumber {g.max_wavenumber} is not resolved on grid {basis.grid_n}")
    if c.scheme == "euler_maruyama":
        stiff = c.dt * float(viscous_rates(basis, c.nu).max())
        if stiff > STIFFNESS_LIMIT:
            warnings.warn(
                f"dt * max viscous rate = {stiff:.3g} > {STIFFNESS_LIMIT}; explicit stepping may be unstable",
                StiffnessWarning,
                stacklevel=2,
            )
    return c


def path_seed(master: int, index: int) -> int:
    """Independent 64-bit key for path ``index`` of an ensemble."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


class GalerkinSystem:
    """Drift and diffusion of one configuration on its basis, precomputed once."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.basis = build_basis(config.basis)
        self.params = config.params
        self.noise = BoundNoise(config.noise, self.basis)
        self.rates = viscous_rates(self.basis, config.nu)
        x = self.basis.nodes
        if config.forcing:
            u = sum(g.sample(x) for g in config.forcing)
            self.forcing = self.basis.test_vector(u)
            self.forcing_sq = self.basis.integrate(np.sum(u * u, axis=0))
        else:
            self.forcing = np.zeros(len(self.basis))
            self.forcing_sq = 0.0

    def drift(self, c: np.ndarray):
        return drift_with_diagnostics(c, self.forcing, self.params, self.basis)

    def diffusion(self, c: np.ndarray) -> np.ndarray:
        return self.noise.coeffs(c)


def step_euler_maruyama(c, t, dt, dW, system: GalerkinSystem, F=None, G=None) -> np.ndarray:
    c = coeffs_of(c)
    if F is None:
        F = system.drift(c)[0]
    if G is None:
        G = system.diffusion(c)
    return c + dt * F + G @ dW


def step_semi_implicit(c, t, dt, dW, system: GalerkinSystem, F=None, G=None) -> np.ndarray:
    c = coeffs_of(c)
    if F is None:
        F = system.drift(c)[0]
    if G is None:
        G = system.diffusion(c)
    rho = system.rates
    return (c + dt * (F + rho * c) + G @ dW) / (1.0 + dt * rho)


_STEPPERS = {"euler_maruyama": step_euler_maruyama, "semi_implicit": step_semi_implicit}

LEDGER_COLUMNS = (
    "t", "v_sq", "w_sq", "d_sq", "a_sq", "a4_4", "w14_4", "residual", "stopped",
    "l2_sq", "int_d_sq", "int_a4_4", "int_a_sq", "int_w14_4", "int_w",
    "weighted_energy", "defect",
)


@dataclass
class EnergyLedger:
    """One row per recorded state; step quantities sit on the row the step ends at.

    ``int_*`` are left-point integrals up to ``t``.  ``weighted_energy`` is
    ``||Y||_V^2 + int(4 nu ||DY||^2 + beta/2 ||A||_4^4 - kappa ||A||_2^2)`` with
    ``kappa = (alpha1 + alpha2)^2 / (2 beta)``.  ``defect`` is the step's departure
    from the Ito formula, ``d||c||^2 - 2 F.c dt - 2 c.G dW - |G|^2 dt``; ``residual``
    is the energy inequality residual, which the estimates bound above by 0 in
    expectation.
    """

    columns: dict[str, np.ndarray]
    tau_M: float | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"])

    def rows(self):
        cols = [self.columns[k] for k in LEDGER_COLUMNS]
        return zip(*cols)


@dataclass
class PathResult:
    ledger: EnergyLedger
    final: np.ndarray
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    blowup: int | None = None
    stopped: bool = False
    wall_time: float = 0.0

    @property
    def tau_M(self) -> float | None:
        return self.ledger.tau_M


def simulate_path(
    config: SimConfig,
    scheme: str | None = None,
    seed: int | None = None,
    system: GalerkinSystem | None = None,
    record_states: bool = False,
) -> PathResult:
    """Integrate one path to ``T``, the stopping time or a blow-up.

    ``seed`` is the Wiener key; by default ``path_seed(config.seed, 0)``, so a
    single simulated path coincides with path 0 of an ensemble.  With
    ``record_states`` every state is kept in ``snapshots`` keyed by step index.
    """
    start = time.perf_counter()
    scheme = scheme or config.scheme
    if scheme not in _STEPPERS:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    step = _STEPPERS[scheme]
    system = system or GalerkinSystem(config)
    basis = system.basis
    p = config.params
    dt, n_steps = config.dt, config.n_steps
    kappa = p.alpha_sum**2 / (2.0 * p.beta) if p.beta > 0 else 0.0
    key = path_seed(config.seed, 0) if seed is None else int(seed)
    dW = WienerPath(key, config.noise.m, dt, config.wiener_refine).increments(n_steps)
    snap_steps = {int(round(s / dt)): s for s in config.snapshot_times}

    c = config.ic.coeffs(basis)
    rows = {k: [] for k in LEDGER_COLUMNS}
    cum = dict(int_d_sq=0.0, int_a4_4=0.0, int_a_sq=0.0, int_w14_4=0.0, int_w=0.0)
    snapshots: dict = {}
    blowup, stopped, tau = None, False, None
    residual = defect = 0.0
    lam = basis.lam

    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        F, diag = system.drift(c)
        while True:
            v_sq = float(c @ c)
            w_sq = float(lam @ (c * c))
            dissip = 4.0 * p.nu * diag["d_sq"] + 0.5 * p.beta * diag["a4_4"] - kappa * diag["a_sq"]
            hit = config.M_stop is not None and np.sqrt(w_sq) >= config.M_stop
            _append(rows, k * dt, v_sq, w_sq, diag, cum, v_sq + _weighted(cum, p, kappa), residual, defect, hit)
            if record_states:
                snapshots[k] = c.copy()
            elif k in snap_steps:
                snapshots[snap_steps[k]] = c.copy()
            if hit:
                stopped, tau = True, k * dt
                break
            if k == n_steps:
                break
            G = system.diffusion(c)
            dw = dW[k]
            c_new = step(c, k * dt, dt, dw, system, F=F, G=G)
            if not np.all(np.isfinite(c_new)):
                blowup = k + 1
                break
            F_new, diag_new = system.drift(c_new)
            if not (np.all(np.isfinite(F_new)) and all(np.isfinite(v) for v in diag_new.values())):
                blowup = k + 1
                break
            v_new = float(c_new @ c_new)
            mart = 2.0 * float(c @ (G @ dw))
            ito = float(np.sum(G * G)) * dt
            defect = v_new - v_sq - 2.0 * float(F @ c) * dt - mart - ito
            residual = (
                v_new - v_sq
                + (dissip - system.forcing_sq - diag["l2_sq"]) * dt
                - mart - ito
            )
            cum["int_d_sq"] += diag["d_sq"] * dt
            cum["int_a4_4"] += diag["a4_4"] * dt
            cum["int_a_sq"] += diag["a_sq"] * dt
            cum["int_w14_4"] += diag["w14_4"] * dt
            cum["int_w"] += np.sqrt(w_sq) * dt
            c, F, diag = c_new, F_new, diag_new
            k += 1

    columns = {name: np.asarray(vals, dtype=bool if name == "stopped" else float) for name, vals in rows.items()}
    return PathResult(
        ledger=EnergyLedger(columns, tau_M=tau),
        final=c,
        snapshots=snapshots,
        blowup=blowup,
        stopped=stopped,
        wall_time=time.perf_counter() - start,
    )


def _weighted(cum: dict, p: Params, kappa: float) -> float:
    return 4.0 * p.nu * cum["int_d_sq"] + 0.5 * p.beta * cum["int_a4_4"] - kappa * cum["int_a_sq"]


def _append(rows, t, v_sq, w_sq, diag, cum, weighted, residual, defect, stopped):
    rows["t"].append(t)
    rows["v_sq"].append(v_sq)
    rows["w_sq"].append(w_sq)
    for name in ("d_sq", "a_sq", "a4_4", "w14_4", "l2_sq"):
        rows[name].append(diag[name])
    for name, val in cum.items():
        rows[name].append(val)
    rows["weighted_energy"].append(weighted)
    rows["residual"].append(residual)
    rows["defect"].append(defect)
    rows["stopped"].append(bool(stopped))
