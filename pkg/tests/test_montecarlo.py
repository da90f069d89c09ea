from dataclasses import replace

import numpy as np
import pytest

from thirdgrade.basis import BasisSpec
from thirdgrade.montecarlo import (
    dt_convergence,
    exponential_constant,
    galerkin_convergence,
    run_ensemble,
    twin_path_stability,
)
from thirdgrade.noise import NoiseModel, VectorShape
from thirdgrade.sde import ConfigError, InitialCondition, SimConfig

ADDITIVE = NoiseModel("additive", shapes=(VectorShape.mode(1, 1, 0.5), VectorShape(2, 1, 1, 2, 0.3, 0.2)))
SMALL = SimConfig(
    nu=1.0, alpha1=1.0, alpha2=0.5, beta=0.5, basis=BasisSpec(2, 2, 1.0), T=0.02, dt=1e-3,
    noise=ADDITIVE, ic=InitialCondition("taylor_green_like"),
)


def test_zero_ensemble():
    cfg = replace(SMALL, noise=NoiseModel.none(), ic=InitialCondition("single_mode", {"amplitude": 0.0}))
    rep = run_ensemble(cfg, 3, K_star=1.0)
    assert rep.blowup_count == 0
    for name in ("sup_v_sq", "int_d_sq", "int_a4_4", "sup_w_p"):
        assert rep.estimators[name] == 0 and rep.std_errors[name] == 0
    assert rep.estimators["exp_moment"] == 1.0


def test_deterministic_ensemble_has_no_spread():
    rep = run_ensemble(replace(SMALL, noise=NoiseModel.none()), 4, K_star=1.0)
    assert all(v == 0 for v in rep.std_errors.values())


def test_invalid_path_count():
    with pytest.raises(ConfigError):
        run_ensemble(SMALL, 0)


def test_parallel_matches_serial():
    a = run_ensemble(SMALL, 5, parallelism=1, K_star=1.0)
    b = run_ensemble(SMALL, 5, parallelism=2, K_star=1.0)
    assert a.as_dict() == b.as_dict()
    assert a.per_path == b.per_path


def test_sup_curve_monotone():
    rep = run_ensemble(SMALL, 4, K_star=1.0)
    assert np.all(np.diff(rep.sup_v_sq_curve) >= 0)
    assert rep.sup_v_sq_curve[-1] == pytest.approx(rep.estimators["sup_v_sq"], rel=1e-12)


def test_standard_error_shrinks():
    cfg = replace(SMALL, T=0.05)
    a = run_ensemble(cfg, 80, K_star=1.0).std_errors["int_d_sq"]
    b = run_ensemble(cfg, 320, K_star=1.0).std_errors["int_d_sq"]
    # quadrupling the paths should roughly halve the standard error
    assert 0.35 < b / a < 0.7


def test_exponential_constant():
    c, K = exponential_constant(SMALL, 2.0, K_star=0.5)
    assert K == 0.5 and c == pytest.approx(2.0 * 0.5 / (16 * 0.0625))


def test_identical_levels_have_zero_distance():
    rows = galerkin_convergence(SMALL, [4, 4], n_paths=2)
    assert rows[0].sup_dist_sq == 0 and rows[0].int_dist_sq == 0


def test_single_level_and_bad_levels():
    assert galerkin_convergence(SMALL, [4], n_paths=1) == []
    with pytest.raises(ConfigError):
        galerkin_convergence(SMALL, [9, 4])
    with pytest.raises(ConfigError):
        galerkin_convergence(SMALL, [4, 6])


def test_linear_mode_tail_prediction():
    cfg = SimConfig(
        nu=1.0, alpha1=1.0, alpha2=-1.0, beta=0.0, linear_test_mode=True, basis=BasisSpec(1, 1, 1.0),
        T=0.05, dt=1e-3, ic=InitialCondition("random_band", {"kmax": 4, "v_norm": 1.0}),
    )
    rows = galerkin_convergence(cfg, [1, 4, 9], n_paths=1)
    for r in rows:
        assert r.sup_dist_sq == pytest.approx(r.predicted_tail, abs=1e-12)


def test_dt_convergence_requires_dyadic_steps():
    with pytest.raises(ConfigError):
        dt_convergence(SMALL, [1e-3, 3e-4])
    with pytest.raises(ConfigError):
        dt_convergence(SMALL, [1e-3])


def test_dt_convergence_shape():
    study = dt_convergence(SMALL, [2e-3, 1e-3, 5e-4], n_paths=3)
    assert study.dts == [2e-3, 1e-3, 5e-4]
    assert len(study.errors) == 2 and len(study.orders) == 1
    assert all(e > 0 for e in study.errors)


def test_twin_paths():
    zero = twin_path_stability(SMALL, 0.0)
    assert zero.bit_identical and zero.dist_sq.max() == 0
    small = twin_path_stability(SMALL, 1e-5)
    assert not small.bit_identical
    assert np.all(small.weighted_dist_sq <= small.dist_sq)
    assert small.stability_factor > 0
