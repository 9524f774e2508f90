import numpy as np
import pytest

from marketgym.errors import SingularCovariance
from marketgym.trading_env import compute_turbulence, regularized_covariance


def oracle(history, current, ridge=None):
    """Dense Mahalanobis distance via explicit inverse."""
    history = np.asarray(history, dtype=np.float64)
    n = history.shape[1]
    cov = np.cov(history, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    if ridge is None:
        ridge = 1e-8 * np.trace(cov) / n
    cov = cov + ridge * np.eye(n)
    dev = current - history.mean(axis=0)
    return float(dev @ np.linalg.inv(cov) @ dev)


def test_matches_dense_oracle_on_random_fixtures(rng):
    for _ in range(100):
        n = int(rng.integers(1, 11))
        rows = int(rng.integers(n + 2, n + 40))
        history = rng.normal(0.0, 0.05, size=(rows, n))
        current = rng.normal(0.0, 0.05, size=n)
        got = compute_turbulence(history, current)
        want = oracle(history, current)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_mean_return_scores_exactly_zero(rng):
    for _ in range(10):
        n = int(rng.integers(1, 6))
        history = rng.normal(0.0, 0.05, size=(n + 10, n))
        assert compute_turbulence(history, history.mean(axis=0)) == 0.0


def test_turbulence_never_negative(rng):
    for _ in range(50):
        n = int(rng.integers(1, 6))
        history = rng.normal(0.0, 0.05, size=(n + 5, n))
        current = rng.normal(0.0, 0.05, size=n)
        assert compute_turbulence(history, current) >= 0.0


def test_explicit_ridge_is_respected(rng):
    history = rng.normal(0.0, 0.05, size=(30, 3))
    current = rng.normal(0.0, 0.05, size=3)
    got = compute_turbulence(history, current, ridge=0.5)
    assert got == pytest.approx(oracle(history, current, ridge=0.5), rel=1e-12)


def test_default_ridge_value(rng):
    history = rng.normal(0.0, 0.05, size=(40, 4))
    cov, ridge = regularized_covariance(history)
    raw = np.cov(history, rowvar=False, ddof=1)
    assert ridge == pytest.approx(1e-8 * np.trace(raw) / 4, rel=1e-15)
    np.testing.assert_allclose(cov, raw + ridge * np.eye(4), atol=0)
    cov0, ridge0 = regularized_covariance(history, ridge=0.0)
    assert ridge0 == 0.0
    np.testing.assert_allclose(cov0, raw, atol=0)


def test_zero_ridge_singular_covariance(rng):
    # second column duplicates the first: rank-deficient covariance
    col = rng.normal(0.0, 0.05, size=20)
    history = np.column_stack((col, col))
    current = np.array([0.01, 0.02])
    with pytest.raises(SingularCovariance):
        compute_turbulence(history, current, ridge=0.0)
    # the default ridge makes it solvable again
    assert np.isfinite(compute_turbulence(history, current))


def test_input_validation(rng):
    history = rng.normal(size=(4, 3))   # needs n + 2 = 5 rows
    with pytest.raises(ValueError):
        compute_turbulence(history, np.zeros(3))
    with pytest.raises(ValueError):
        compute_turbulence(rng.normal(size=(10, 3)), np.zeros(2))
    bad = rng.normal(size=(10, 3))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        compute_turbulence(bad, np.zeros(3))


def test_one_dimensional_reduces_to_z_squared(rng):
    history = rng.normal(0.0, 0.05, size=(50, 1))
    current = np.array([0.1])
    var = history.var(ddof=1) + 1e-8 * history.var(ddof=1)
    z2 = float((current[0] - history.mean()) ** 2 / var)
    assert compute_turbulence(history, current) == pytest.approx(z2, rel=1e-9)
