import numpy as np
import pytest

from conftest import random_coeffs
from thirdgrade.noise import (
    BoundNoise,
    NoiseModel,
    ScalarMask,
    UnsafeNoiseError,
    VectorShape,
    WienerPath,
    check_hypotheses,
    multiplier_lipschitz,
    sigma_eval,
    wiener_increments,
)

MASKS = (ScalarMask(1, 0, 0.5, 1.0), ScalarMask(0, 1, 0.5, 0.5))


def truncated(rho=0.5, R=1.0):
    return NoiseModel("truncated_multiplicative", masks=MASKS, rho=rho, R=R)


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("cylindrical")
    with pytest.raises(ValueError):
        NoiseModel("additive", R=0.0)
    with pytest.raises(ValueError):
        NoiseModel("additive", masks=MASKS)
    assert NoiseModel.none().m == 0 and NoiseModel.none().is_zero


def test_additive_is_state_independent(basis4, rng):
    m = NoiseModel("additive", shapes=(VectorShape.mode(1, 1), VectorShape(2, 1, 1, 2, 0.3, 0.2)))
    a = sigma_eval(m, 0.0, random_coeffs(rng, basis4), basis4)
    b = sigma_eval(m, 1.0, 100 * random_coeffs(rng, basis4), basis4)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


def test_truncation_inactive_inside_ball(basis4, rng):
    c = random_coeffs(rng, basis4)
    c *= 0.5 / np.linalg.norm(c)
    m = truncated()
    y = np.tensordot(c, basis4.values, axes=1)
    for f, mask in zip(sigma_eval(m, 0.0, c, basis4), MASKS):
        assert np.array_equal(f.data, 0.5 * mask.sample(basis4.nodes) * y)


def test_truncation_saturates(basis4, rng):
    m = truncated()
    c = random_coeffs(rng, basis4)
    c *= 10.0 / np.linalg.norm(c)

    def size(v):
        return [basis4.integrate(np.sum(f.data**2, axis=0)) for f in sigma_eval(m, 0.0, v, basis4)]

    assert np.allclose(size(c), size(7.0 * c), rtol=1e-12)


def test_truncated_bound(basis4, rng):
    m = truncated()
    L = m.bound_L()
    for _ in range(50):
        c = rng.uniform(0.01, 100) * random_coeffs(rng, basis4)
        total = sum(basis4.integrate(np.sum(f.data**2, axis=0)) for f in sigma_eval(m, 0.0, c, basis4))
        assert total <= L
    with pytest.raises(ValueError):
        NoiseModel("additive").bound_L()


def test_unsafe_needs_override(basis4):
    m = NoiseModel("linear_unsafe", masks=MASKS[:1])
    with pytest.raises(UnsafeNoiseError):
        sigma_eval(m, 0.0, np.zeros(len(basis4)), basis4)
    assert len(sigma_eval(m, 0.0, np.zeros(len(basis4)), basis4, allow_unsafe=True)) == 1


def test_bound_noise_matches_projection(basis4, rng):
    for m in (truncated(), NoiseModel("additive", shapes=(VectorShape(3, 1, 1, 2, 0.4, -0.1),))):
        bound = BoundNoise(m, basis4)
        for scale in (0.2, 5.0):
            c = scale * random_coeffs(rng, basis4) / 0.3
            G = bound.coeffs(c)
            ref = np.stack([basis4.test_vector(f.data) for f in sigma_eval(m, 0.0, c, basis4)], axis=1)
            assert np.allclose(G, ref, rtol=1e-12, atol=1e-15)


def test_hypotheses_additive(basis4):
    rep = check_hypotheses(NoiseModel("additive", shapes=(VectorShape.mode(1, 1),)), basis4, 20)
    assert rep.gamma_hat == 0 and rep.K_hat == 0 and not rep.violation


def test_hypotheses_truncated_stable(basis4):
    reps = [check_hypotheses(truncated(), basis4, 30, seed=s) for s in range(3)]
    Ks = np.array([r.K_hat for r in reps])
    assert np.all(np.isfinite(Ks))
    assert np.all(np.abs(Ks / Ks.mean() - 1) <= 0.2)
    assert all(r.gamma_hat < 2 and not r.violation for r in reps)


def test_hypotheses_unsafe_flagged(basis4):
    m = NoiseModel("linear_unsafe", masks=MASKS, rho=0.5)
    for s in range(3):
        rep = check_hypotheses(m, basis4, 50, seed=s)
        assert 1.8 <= rep.gamma_hat <= 2.2
        assert rep.violation


def test_sample_count_minimum(basis4):
    with pytest.raises(ValueError):
        check_hypotheses(truncated(), basis4, 5)


def test_multiplier_lipschitz_bounds_samples(basis4, rng):
    m = truncated()
    K = multiplier_lipschitz(m, basis4)
    for _ in range(30):
        y = rng.uniform(0.1, 5) * random_coeffs(rng, basis4)
        z = y + rng.uniform(0.01, 3) * random_coeffs(rng, basis4)
        fy, fz = sigma_eval(m, 0, y, basis4), sigma_eval(m, 0, z, basis4)
        num = sum(basis4.integrate(np.sum((a.data - b.data) ** 2, axis=0)) for a, b in zip(fy, fz))
        assert num <= K * np.sum((y - z) ** 2) * (1 + 1e-12)


def test_wiener_increments_examples():
    assert wiener_increments(1, 0, 0, 0.1).shape == (0,)
    a = wiener_increments(123, 7, 3, 0.01)
    assert np.array_equal(a, wiener_increments(123, 7, 3, 0.01))
    assert not np.array_equal(a, wiener_increments(123, 8, 3, 0.01))
    with pytest.raises(ValueError):
        wiener_increments(1, 0, 1, 0.0)


def test_wiener_channel_prefix_stable():
    """Channel k depends only on (seed, step, k), not on how many channels follow."""
    a = wiener_increments(5, 3, 2, 0.1)
    b = wiener_increments(5, 3, 4, 0.1)
    assert np.array_equal(a, b[:2])


def test_wiener_mean_clt():
    dt = 0.01
    n = 100_000
    draws = np.concatenate([wiener_increments(99, s, 10, dt) for s in range(n // 10)])
    assert abs(draws.mean()) < 4 * np.sqrt(dt / n)
    assert draws.var() == pytest.approx(dt, rel=0.02)


def test_wiener_coupling():
    fine = WienerPath(7, 2, 0.005, refine=0).increments(8)
    coarse = WienerPath(7, 2, 0.01, refine=1).increments(4)
    assert np.array_equal(coarse, fine[0::2] + fine[1::2])
    assert np.array_equal(WienerPath(7, 0, 0.01).increments(3), np.zeros((3, 0)))
