"""JSON run configuration: pydantic models, loading and conversion to ``SimConfig``."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .basis import BasisSpec, ResolutionError
from .noise import NoiseModel, ScalarMask, VectorShape
from .sde import ConfigError, InitialCondition, SimConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelParams(_Strict):
    nu: float = Field(1.0, description="kinematic viscosity, >= 0")
    alpha1: float = Field(1.0, description="first normal stress modulus, >= 0")
    alpha2: float = Field(0.5, description="second normal stress modulus")
    beta: float = Field(0.5, description="cubic (shear-thickening) modulus; 0 only in linear test mode")
    linear_test_mode: bool = Field(False, description="drop convection; requires beta = 0 and alpha1 + alpha2 = 0")


class BasisParams(_Strict):
    kmax: int = Field(4, ge=1)
    lmax: int = Field(4, ge=1)
    grid_n: int | None = Field(None, description="nodes per axis; default 4 * max(kmax, lmax) + 2")


class ShapeParams(_Strict):
    """Either ``mode = [k, l]`` with ``amplitude`` or the explicit sine/cosine wavenumbers."""

    mode: tuple[int, int] | None = None
    amplitude: float = 1.0
    ax: int = 0
    by: int = 0
    cx: int = 0
    dy: int = 0
    amp_x: float = 0.0
    amp_y: float = 0.0

    def build(self) -> VectorShape:
        if self.mode is not None:
            return VectorShape.mode(self.mode[0], self.mode[1], self.amplitude)
        return VectorShape(self.ax, self.by, self.cx, self.dy, self.amp_x, self.amp_y)


class MaskParams(_Strict):
    a: int = 0
    b: int = 0
    amp: float = 1.0
    offset: float = 0.0


class NoiseParams(_Strict):
    kind: Literal["additive", "truncated_multiplicative", "linear_unsafe"] = "additive"
    shapes: list[ShapeParams] = Field(default_factory=list, description="additive channels")
    masks: list[MaskParams] = Field(default_factory=list, description="multiplicative channels")
    rho: float = 1.0
    R: float = Field(1.0, gt=0)
    allow_unsafe: bool = False

    def build(self) -> NoiseModel:
        return NoiseModel(
            self.kind,
            shapes=tuple(s.build() for s in self.shapes),
            masks=tuple(ScalarMask(m.a, m.b, m.amp, m.offset) for m in self.masks),
            rho=self.rho,
            R=self.R,
        )


class InitialParams(_Strict):
    family: Literal["single_mode", "random_band", "taylor_green_like", "modes"] = "taylor_green_like"
    k: int = 1
    l: int = 1
    amplitude: float = 1.0
    kmax: int = 3
    v_norm: float = 1.0
    seed: int = 0
    coeffs: list[tuple[int, int, float]] = Field(default_factory=list)

    def build(self) -> InitialCondition:
        keys = {
            "single_mode": ("k", "l", "amplitude"),
            "random_band": ("kmax", "v_norm", "seed"),
            "taylor_green_like": ("amplitude",),
            "modes": ("coeffs",),
        }[self.family]
        return InitialCondition(self.family, {k: getattr(self, k) for k in keys})


class RunParams(_Strict):
    T: float = 0.1
    dt: float = 1e-3
    seed: int = 0
    scheme: Literal["euler_maruyama", "semi_implicit"] = "euler_maruyama"
    M_stop: float | None = None
    p_moment: int = 6
    wiener_refine: int = 0
    snapshot_times: list[float] = Field(default_factory=list)
    exp_lambda: float = Field(1.0, description="lambda in the exponential-moment constant lambda beta / (16 K_*^4)")


class RunConfig(_Strict):
    model: ModelParams = Field(default_factory=ModelParams)
    basis: BasisParams = Field(default_factory=BasisParams)
    noise: NoiseParams = Field(default_factory=NoiseParams)
    forcing: list[ShapeParams] = Field(default_factory=list)
    initial_condition: InitialParams = Field(default_factory=InitialParams)
    run: RunParams = Field(default_factory=RunParams)

    def to_sim(self) -> SimConfig:
        m, b, r = self.model, self.basis, self.run
        try:
            spec = BasisSpec(b.kmax, b.lmax, m.alpha1, b.grid_n)
            return SimConfig(
                nu=m.nu,
                alpha1=m.alpha1,
                alpha2=m.alpha2,
                beta=m.beta,
                T=r.T,
                dt=r.dt,
                basis=spec,
                noise=self.noise.build(),
                forcing=tuple(f.build() for f in self.forcing),
                ic=self.initial_condition.build(),
                seed=r.seed,
                M_stop=r.M_stop,
                p_moment=r.p_moment,
                linear_test_mode=m.linear_test_mode,
                allow_unsafe_noise=self.noise.allow_unsafe,
                scheme=r.scheme,
                wiener_refine=r.wiener_refine,
                snapshot_times=tuple(r.snapshot_times),
            )
        except (ResolutionError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err)) from None

    def with_overrides(self, seed=None, linear_test_mode=None, allow_unsafe=None, scheme=None) -> "RunConfig":
        cfg = self.model_copy(deep=True)
        if seed is not None:
            cfg.run.seed = seed
        if linear_test_mode:
            cfg.model.linear_test_mode = True
        if allow_unsafe:
            cfg.noise.allow_unsafe = True
        if scheme is not None:
            cfg.run.scheme = scheme
        return cfg


def load_config(path) -> RunConfig:
    """Parse and schema-check a JSON config; raise ``ConfigError`` on any problem."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(f"config does not match the schema:\n{err}") from None


def json_schema() -> dict:
    return RunConfig.model_json_schema()
