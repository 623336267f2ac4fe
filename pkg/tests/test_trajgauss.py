"""Trajectory-Gaussian algebra: hand cases, Kalman oracles, L-scan contracts."""

import numpy as np
import pytest

import oracles
from trajphd import (
    GmTrajectoryPhd,
    InvalidComponentError,
    LinearModels,
    SingularInnovationError,
    TrajectoryComponent,
    expected_count,
    expected_count_in,
    gaussian_logpdf,
    lscan_truncate,
    predict_component,
    update_component,
)


def scalar_models(p_S=1.0, p_D=0.9, F=1.0, Q=1.0, H=1.0, R=1.0):
    return LinearModels(
        F=np.array([[F]]),
        Q=np.array([[Q]]),
        H=np.array([[H]]),
        R=np.array([[R]]),
        p_S=p_S,
        p_D=p_D,
    )


def component(mean, cov, weight=1.0, birth_time=1, state_dim=1):
    return TrajectoryComponent(
        weight=weight,
        birth_time=birth_time,
        mean=np.asarray(mean, dtype=float),
        cov=np.asarray(cov, dtype=float),
        state_dim=state_dim,
    )


def random_models(rng, n_x, n_z):
    return LinearModels(
        F=rng.standard_normal((n_x, n_x)),
        Q=oracles.random_spd(rng, n_x),
        H=rng.standard_normal((n_z, n_x)),
        R=oracles.random_spd(rng, n_z),
        p_S=float(rng.uniform(0.5, 1.0)),
        p_D=float(rng.uniform(0.5, 1.0)),
    )


def random_component(rng, n_x, duration):
    return component(
        rng.standard_normal(duration * n_x),
        oracles.random_spd(rng, duration * n_x),
        weight=float(rng.uniform(0.1, 2.0)),
        state_dim=n_x,
    )


# ---------------------------------------------------------------------------
# predict_component


def test_predict_scalar_hand_case():
    c = component([10.0], [[1.0]])
    out = predict_component(c, scalar_models())
    assert out.weight == 1.0
    assert out.birth_time == 1
    np.testing.assert_allclose(out.mean, [10.0, 10.0])
    np.testing.assert_allclose(out.cov, [[1.0, 1.0], [1.0, 2.0]])


def test_predict_zero_survival_annihilates_weight():
    c = component([10.0], [[1.0]])
    out = predict_component(c, scalar_models(p_S=0.0))
    assert out.weight == 0.0
    assert out.mean.size == 2
    assert out.cov.shape == (2, 2)


def test_predict_preserves_leading_block_and_psd():
    rng = np.random.default_rng(7)
    n_x = 2
    for _ in range(200):
        duration = int(rng.integers(1, 4))
        c = random_component(rng, n_x, duration)
        models = random_models(rng, n_x, 1)
        out = predict_component(c, models)
        lead = duration * n_x
        np.testing.assert_array_equal(out.cov[:lead, :lead], c.cov)
        np.testing.assert_array_equal(out.mean[:lead], c.mean)
        assert np.allclose(out.cov, out.cov.T)
        assert np.linalg.eigvalsh(out.cov).min() > -1e-9 * np.trace(out.cov)


def test_predict_rejects_misaligned_mean():
    with pytest.raises(InvalidComponentError):
        component([1.0, 2.0, 3.0], np.eye(3), state_dim=2)


def test_predict_trailing_marginal_matches_plain_kalman():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n_x = int(rng.integers(1, 4))
        duration = int(rng.integers(1, 4))
        c = random_component(rng, n_x, duration)
        models = random_models(rng, n_x, n_x)
        out = predict_component(c, models)
        m_ref, p_ref = oracles.kalman_predict(
            c.mean[-n_x:], c.cov[-n_x:, -n_x:], models.F, models.Q
        )
        np.testing.assert_allclose(out.mean[-n_x:], m_ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(
            out.cov[-n_x:, -n_x:], p_ref, rtol=1e-10, atol=1e-12
        )


# ---------------------------------------------------------------------------
# update_component


def test_update_scalar_hand_case():
    c = component([0.0, 0.0], [[1.0, 1.0], [1.0, 2.0]])
    out, lik = update_component(c, np.array([1.0]), scalar_models())
    np.testing.assert_allclose(out.mean, [1.0 / 3.0, 2.0 / 3.0])
    np.testing.assert_allclose(
        out.cov, [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]]
    )
    np.testing.assert_allclose(lik, oracles.gaussian_pdf([1.0], [0.0], [[3.0]]))
    assert lik == pytest.approx(0.194970, abs=5e-6)


def test_update_uninformative_measurement_keeps_mean():
    c = component([0.0, 0.0], [[1.0, 1.0], [1.0, 2.0]])
    out, _ = update_component(c, np.array([5.0]), scalar_models(R=1e12))
    np.testing.assert_allclose(out.mean, c.mean, rtol=1e-5, atol=1e-5)


def test_update_zero_innovation_contracts_covariance():
    c = component([0.0, 2.0], [[1.0, 1.0], [1.0, 2.0]])
    out, _ = update_component(c, np.array([2.0]), scalar_models())
    np.testing.assert_allclose(out.mean, c.mean, atol=1e-14)
    assert np.trace(out.cov) < np.trace(c.cov)


def test_update_singular_innovation_raises():
    c = component([0.0], [[0.0]])
    with pytest.raises(SingularInnovationError):
        update_component(c, np.array([0.0]), scalar_models(R=0.0))


def test_update_trailing_marginal_matches_plain_kalman():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n_x = int(rng.integers(1, 4))
        n_z = int(rng.integers(1, n_x + 1))
        duration = int(rng.integers(1, 4))
        c = random_component(rng, n_x, duration)
        models = random_models(rng, n_x, n_z)
        z = rng.standard_normal(n_z)
        out, lik = update_component(c, z, models)
        m_ref, p_ref, s_ref = oracles.kalman_update(
            c.mean[-n_x:], c.cov[-n_x:, -n_x:], models.H, models.R, z
        )
        np.testing.assert_allclose(out.mean[-n_x:], m_ref, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(
            out.cov[-n_x:, -n_x:], p_ref, rtol=1e-10, atol=1e-10
        )
        lik_ref = oracles.gaussian_pdf(z, models.H @ c.mean[-n_x:], s_ref)
        np.testing.assert_allclose(lik, lik_ref, rtol=1e-9)


def test_gaussian_logpdf_matches_oracle():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        mean = rng.standard_normal(n)
        cov = oracles.random_spd(rng, n)
        x = rng.standard_normal(n)
        np.testing.assert_allclose(
            np.exp(gaussian_logpdf(x, mean, cov)),
            oracles.gaussian_pdf(x, mean, cov),
            rtol=1e-9,
        )


# ---------------------------------------------------------------------------
# lscan_truncate


def test_lscan_one_scalar_hand_case():
    c = component([0.0, 0.0], [[1.0, 1.0], [1.0, 2.0]])
    out = lscan_truncate(c, 1)
    np.testing.assert_array_equal(out.cov, [[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_array_equal(out.mean, c.mean)


def test_lscan_window_covering_duration_is_identity():
    rng = np.random.default_rng(19)
    c = random_component(rng, 2, 3)
    out = lscan_truncate(c, 3)
    assert out.cov is c.cov or np.array_equal(out.cov, c.cov)
    out = lscan_truncate(c, 10)
    assert np.array_equal(out.cov, c.cov)


def test_lscan_two_on_three_step_trajectory():
    rng = np.random.default_rng(23)
    c = random_component(rng, 1, 3)
    out = lscan_truncate(c, 2)
    np.testing.assert_array_equal(out.cov[0, 1:], [0.0, 0.0])
    np.testing.assert_array_equal(out.cov[1:, 0], [0.0, 0.0])
    np.testing.assert_array_equal(out.cov[1:, 1:], c.cov[1:, 1:])
    np.testing.assert_array_equal(out.cov[0, 0], c.cov[0, 0])


def test_lscan_idempotent_and_preserves_trailing_block():
    rng = np.random.default_rng(29)
    for _ in range(50):
        n_x = int(rng.integers(1, 3))
        duration = int(rng.integers(1, 6))
        L = int(rng.integers(1, 7))
        c = random_component(rng, n_x, duration)
        once = lscan_truncate(c, L)
        twice = lscan_truncate(once, L)
        np.testing.assert_array_equal(once.cov, twice.cov)
        w = min(L, duration) * n_x
        np.testing.assert_array_equal(once.cov[-w:, -w:], c.cov[-w:, -w:])


# ---------------------------------------------------------------------------
# expected counts


def example_mixture():
    """Two unit-weight single-step components and one two-step, all born at 1."""
    c1 = component([0.0], [[1.0]])
    c2 = component([5.0], [[1.0]])
    c3 = component([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    return GmTrajectoryPhd(components=(c1, c2, c3), time=2)


def test_expected_count_example_mixture():
    phd = example_mixture()
    assert expected_count(phd) == 3.0
    assert expected_count_in(phd, lambda t, i: t == 1 and i == 1) == 2.0
    assert expected_count(GmTrajectoryPhd()) == 0.0
