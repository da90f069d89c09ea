"""Ensembles, moment estimators and coupled-path experiments.

Every path is keyed by ``path_seed(master, index)``, and per-path summaries are
reduced in index order, so a report depends only on ``(config, master seed)``,
never on how paths were distributed over workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import build_basis, embed
from .noise import check_hypotheses
from .sde import ConfigError, GalerkinSystem, SimConfig, path_seed, simulate_path, validate
from .verify import convection_constant, korn_w14_sup

ESTIMATORS = ("sup_v_sq", "int_d_sq", "int_a4_4", "sup_w_p", "exp_moment")


def exponential_constant(config: SimConfig, lam: float, K_star: float | None = None) -> tuple[float, float]:
    """``c = lam * beta / (16 K_*^4)`` with ``K_*`` estimated on the run's basis."""
    K = korn_w14_sup(config.basis) if K_star is None else K_star
    return lam * config.beta / (16.0 * K**4), K


def path_summary(config: SimConfig, index: int, exp_c: float) -> dict:
    res = simulate_path(config, seed=path_seed(config.seed, index))
    L = res.ledger
    with np.errstate(over="ignore"):
        exp_m = float(np.exp(exp_c * L["int_w14_4"][-1]))
    return {
        "path": index,
        "seed": path_seed(config.seed, index),
        "blowup": res.blowup,
        "stopped": res.stopped,
        "tau_M": res.tau_M,
        "sup_v_sq": float(np.max(L["v_sq"])),
        "int_d_sq": float(L["int_d_sq"][-1]),
        "int_a4_4": float(L["int_a4_4"][-1]),
        "sup_w_p": float(np.max(L["w_sq"]) ** (config.p_moment / 2.0)),
        "exp_moment": exp_m,
        "final_v_sq": float(L["v_sq"][-1]),
        "sup_v_sq_path": L["v_sq"],
    }


def _chunk(args):
    config, indices, exp_c = args
    return [path_summary(config, i, exp_c) for i in indices]


def map_paths(config: SimConfig, n_paths: int, parallelism: int, exp_c: float) -> list[dict]:
    indices = list(range(n_paths))
    if parallelism <= 1 or n_paths == 1:
        return _chunk((config, indices, exp_c))
    chunks = [indices[i::parallelism] for i in range(parallelism)]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        parts = list(pool.map(_chunk, [(config, ch, exp_c) for ch in chunks if ch]))
    out = [s for part in parts for s in part]
    return sorted(out, key=lambda s: s["path"])


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    if np.ptp(values) == 0.0:
        return float(values[0]), 0.0
    mean = float(np.sum(values) / values.size)
    return mean, float(np.std(values, ddof=1) / np.sqrt(values.size))


@dataclass
class EnsembleReport:
    paths: int
    estimators: dict
    std_errors: dict
    blowup_count: int
    seeds: list
    exp_constant: float
    K_star: float
    per_path: list = field(default_factory=list)
    sup_v_sq_curve: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "paths": self.paths,
            "estimators": self.estimators,
            "std_errors": self.std_errors,
            "blowup_count": self.blowup_count,
            "blowups_excluded": self.blowup_count > 0,
            "exp_constant": self.exp_constant,
            "K_star": self.K_star,
            "seeds": self.seeds,
        }


def run_ensemble(
    config: SimConfig,
    n_paths: int,
    parallelism: int = 1,
    exp_lambda: float = 1.0,
    K_star: float | None = None,
) -> EnsembleReport:
    """Moment estimators over ``n_paths`` independent paths.

    Blown-up paths are counted and excluded from the estimators.
    ``sup_v_sq_curve`` is ``E sup_{s <= t} ||Y(s)||_V^2`` as a function of ``t``.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    validate(config)
    exp_c, K = exponential_constant(config, exp_lambda, K_star)
    summaries = map_paths(config, n_paths, parallelism, exp_c)
    ok = [s for s in summaries if s["blowup"] is None]
    est, se = {}, {}
    for name in ESTIMATORS:
        est[name], se[name] = _mean_se(np.array([s[name] for s in ok], dtype=float))
    curve = None
    if ok and all(len(s["sup_v_sq_path"]) == len(ok[0]["sup_v_sq_path"]) for s in ok):
        running = np.array([np.maximum.accumulate(s["sup_v_sq_path"]) for s in ok])
        curve = running.sum(axis=0) / len(ok)
    per_path = [{k: v for k, v in s.items() if k != "sup_v_sq_path"} for s in summaries]
    return EnsembleReport(
        paths=n_paths,
        estimators=est,
        std_errors=se,
        blowup_count=len(summaries) - len(ok),
        seeds=[s["seed"] for s in summaries],
        exp_constant=exp_c,
        K_star=K,
        per_path=per_path,
        sup_v_sq_curve=curve,
    )


# ------------------------------------------------------------ Galerkin levels


@dataclass
class LevelRow:
    coarse: int
    fine: int
    sup_dist_sq: float
    int_dist_sq: float
    ratio: float | None = None
    predicted_tail: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _trajectory(config: SimConfig, seed: int, system=None) -> np.ndarray | None:
    res = simulate_path(config, seed=seed, system=system, record_states=True)
    if res.blowup is not None or res.stopped:
        return None
    return np.array([res.snapshots[k] for k in range(len(res.ledger))])


def galerkin_convergence(config: SimConfig, levels: list[int], n_paths: int = 4) -> list[LevelRow]:
    """Distances between consecutive Galerkin levels on common Wiener paths.

    Coarse trajectories are embedded in the fine basis by matching ``(k, l)``.
    ``ratio`` compares each row's ``E sup ||Y_n' - Y_n||_V^2`` with the previous
    row.  In deterministic linear test mode every mode evolves on its own, so
    the distance is the initial energy of the modes the coarse level lacks.
    """
    levels = [int(n) for n in levels]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"levels must be non-decreasing, got {levels}")
    cfgs = [config.with_level(n) for n in levels]
    for c in cfgs:
        validate(c)
    if len(levels) < 2:
        return []
    seeds = [path_seed(config.seed, p) for p in range(n_paths)]
    systems = [GalerkinSystem(c) for c in cfgs]
    trajs = [[_trajectory(c, s, sys) for s in seeds] for c, sys in zip(cfgs, systems)]
    deterministic = config.noise.is_zero and not config.forcing and config.linear_test_mode
    rows = []
    prev = None
    for j in range(1, len(levels)):
        coarse, fine = systems[j - 1].basis, systems[j].basis
        sups, ints = [], []
        for p in range(n_paths):
            a, b = trajs[j - 1][p], trajs[j][p]
            if a is None or b is None:
                continue
            up = np.array([embed(row, coarse, fine) for row in a])
            d = np.sum((b - up) ** 2, axis=1)
            sups.append(float(d.max()))
            ints.append(float(np.sum(d[:-1]) * config.dt))
        sup = float(np.mean(sups)) if sups else float("nan")
        row = LevelRow(levels[j - 1], levels[j], sup, float(np.mean(ints)) if ints else float("nan"))
        if prev is not None and prev > 0:
            row.ratio = sup / prev
        if deterministic:
            row.predicted_tail = config.ic.tail_energy(coarse) - config.ic.tail_energy(fine)
        rows.append(row)
        prev = sup
    return rows


# ------------------------------------------------------------ time-step refinement


@dataclass
class DtStudy:
    dts: list
    errors: list
    orders: list
    fitted_order: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dt_convergence(config: SimConfig, dts: list[float], n_paths: int = 50) -> DtStudy:
    """Strong self-convergence at ``T`` under increment coupling.

    Every ``dt`` must be ``2^r`` times the finest; the run at that ``dt`` sums
    ``2^r`` atoms of the finest path.  ``errors[j] = E ||Y_dt_j(T) - Y_dt_{j+1}(T)||_V``.
    """
    dts = sorted((float(d) for d in dts), reverse=True)
    if len(dts) < 2:
        raise ConfigError("need at least two time steps")
    finest = dts[-1]
    refines = []
    for d in dts:
        r = np.log2(d / finest)
        if abs(r - round(r)) > 1e-9:
            raise ConfigError(f"dt={d} is not a power-of-two multiple of the finest dt={finest}")
        refines.append(int(round(r)))
    cfgs = [replace(config, dt=d, wiener_refine=r) for d, r in zip(dts, refines)]
    for c in cfgs:
        validate(c)
    systems = [GalerkinSystem(c) for c in cfgs]
    errs = np.zeros(len(dts) - 1)
    for p in range(n_paths):
        seed = path_seed(config.seed, p)
        finals = [simulate_path(c, seed=seed, system=s).final for c, s in zip(cfgs, systems)]
        for j in range(len(dts) - 1):
            errs[j] += np.linalg.norm(finals[j] - finals[j + 1])
    errs /= n_paths
    orders = [float(np.log2(errs[j] / errs[j + 1])) for j in range(len(errs) - 1)]
    fitted = float(np.polyfit(np.log(dts[:-1]), np.log(errs), 1)[0]) if len(errs) >= 2 else float("nan")
    return DtStudy(dts, [float(e) for e in errs], orders, fitted)


# ------------------------------------------------------------ twin paths


@dataclass
class TwinReport:
    delta: float
    t: np.ndarray
    dist_sq: np.ndarray
    weighted_dist_sq: np.ndarray
    stability_factor: float
    rate_noise: float
    rate_convection: float
    bit_identical: bool

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "sup_dist_sq": float(self.dist_sq.max()),
            "sup_weighted_dist_sq": float(self.weighted_dist_sq.max()),
            "stability_factor": self.stability_factor,
            "rate_noise": self.rate_noise,
            "rate_convection": self.rate_convection,
            "bit_identical": self.bit_identical,
        }


def perturbation_direction(config: SimConfig) -> np.ndarray:
    basis = build_basis(config.basis)
    d = np.random.default_rng(config.seed).standard_normal(len(basis)) / basis.lam
    return d / np.linalg.norm(d)


def twin_path_stability(config: SimConfig, delta: float, direction: np.ndarray | None = None) -> TwinReport:
    """Run the IC and the IC shifted by ``delta * direction`` on one Wiener path.

    The weight is ``exp(-rate_noise t / 2 - rate_convection int ||Y_1||_W ds)`` with
    both rates estimated: twice the noise Lipschitz constant and twice the
    convection continuity constant.
    """
    validate(config)
    system = GalerkinSystem(config)
    basis = system.basis
    direction = perturbation_direction(config) if direction is None else np.asarray(direction, dtype=float)
    seed = path_seed(config.seed, 0)
    r1 = simulate_path(config, seed=seed, system=system, record_states=True)
    shifted = _ShiftedIC(config.ic, basis, delta * direction)
    r2 = simulate_path(replace(config, ic=shifted), seed=seed, system=system, record_states=True)
    n = min(len(r1.ledger), len(r2.ledger))
    a = np.array([r1.snapshots[k] for k in range(n)])
    b = np.array([r2.snapshots[k] for k in range(n)])
    dist = np.sum((a - b) ** 2, axis=1)
    hyp = check_hypotheses(config.noise, basis, sample_count=20, seed=config.seed)
    rate_noise = 2.0 * hyp.K_hat
    rate_conv = 2.0 * convection_constant(basis, 50, np.random.default_rng(config.seed))
    t = r1.ledger["t"][:n]
    weight = np.exp(-0.5 * rate_noise * t - rate_conv * r1.ledger["int_w"][:n])
    identical = delta == 0 and np.array_equal(a, b) and all(
        np.array_equal(r1.ledger[k], r2.ledger[k]) for k in r1.ledger.columns
    )
    factor = float(np.sqrt(dist.max()) / delta) if delta > 0 else 0.0
    return TwinReport(delta, t, dist, weight * dist, factor, rate_noise, rate_conv, bool(identical))


class _ShiftedIC:
    """An initial condition plus a fixed coefficient perturbation on one basis."""

    def __init__(self, base, basis, shift):
        self.base, self.basis, self.shift = base, basis, shift

    def coeffs(self, basis, strict: bool = False):
        if basis is not self.basis:
            raise ValueError("shifted initial condition is bound to its basis")
        return self.base.coeffs(basis) + self.shift
