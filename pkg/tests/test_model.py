"""Covariance models, validation, and deterministic Gaussian sampling."""

import numpy as np
import pytest

from surecov.errors import DataError, NumericalError, ParameterError
from surecov.model import (
    ArDecay,
    BandedUniform,
    Dataset,
    Explicit,
    PolyDecay,
    build_sigma,
    cholesky_factor,
    model_bandwidth,
    sample_dataset,
)


def test_poly_decay_entries():
    sigma = build_sigma(PolyDecay(rho=0.6, alpha=0.5, p=4))
    assert sigma[0, 0] == 1.0
    assert sigma[0, 1] == 0.6
    # 0.6 * d**-(alpha+1)
    assert sigma[0, 2] == pytest.approx(0.21213203435596423, abs=1e-15)
    assert sigma[0, 3] == pytest.approx(0.11547005383792514, abs=1e-15)
    assert np.allclose(sigma, sigma.T)


def test_ar_decay_entries():
    sigma = build_sigma(ArDecay(rho=0.5, p=4))
    assert list(sigma[0]) == [1.0, 0.5, 0.25, 0.125]


def test_banded_uniform_diagonal_convention():
    # band covers |i-j| <= k0-1 and the increment hits the diagonal too
    sigma = build_sigma(BandedUniform(k0=2, offdiag=0.3, p=4))
    assert sigma[0, 0] == pytest.approx(1.3)
    assert sigma[0, 1] == pytest.approx(0.3)
    assert sigma[0, 2] == 0.0

    unit = build_sigma(BandedUniform(k0=2, offdiag=0.3, p=4, unit_diagonal=True))
    assert unit[0, 0] == 1.0
    assert unit[0, 1] == pytest.approx(0.3)


def test_model_bandwidth():
    assert model_bandwidth(BandedUniform(k0=5, offdiag=0.25, p=20)) == 5
    assert model_bandwidth(PolyDecay(rho=0.6, alpha=0.5, p=20)) is None
    assert model_bandwidth(ArDecay(rho=0.5, p=20)) is None
    diag_only = Explicit(matrix=np.eye(4))
    assert model_bandwidth(diag_only) == 1
    tri = Explicit(matrix=np.eye(4) + 0.1 * np.eye(4, k=1) + 0.1 * np.eye(4, k=-1))
    assert model_bandwidth(tri) == 2


def test_explicit_validation():
    with pytest.raises(ParameterError):
        Explicit(matrix=np.ones((2, 3)))
    with pytest.raises(ParameterError):
        Explicit(matrix=np.array([[1.0, 0.5], [0.4, 1.0]]))  # asymmetric
    with pytest.raises(ParameterError):
        Explicit(matrix=np.array([[-1.0, 0.0], [0.0, 1.0]]))  # bad diagonal


def test_parameter_validation():
    with pytest.raises(ParameterError):
        PolyDecay(rho=0.6, alpha=0.5, p=0)
    with pytest.raises(ParameterError):
        BandedUniform(k0=0, offdiag=0.25, p=10)
    with pytest.raises(ParameterError):
        ArDecay(rho=0.5, p=-3)


def test_cholesky_identity_and_jitter():
    assert np.allclose(cholesky_factor(np.eye(3)), np.eye(3))
    # exactly singular PSD: the one-shot jitter retry must succeed
    singular = np.ones((2, 2))
    chol = cholesky_factor(singular)
    assert np.allclose(chol @ chol.T, singular, atol=1e-4)
    # indefinite: jitter cannot rescue it
    with pytest.raises(NumericalError):
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sampling_deterministic_in_seed():
    sigma = build_sigma(ArDecay(rho=0.5, p=6))
    a = sample_dataset(sigma, 10, seed=123)
    b = sample_dataset(sigma, 10, seed=123)
    c = sample_dataset(sigma, 10, seed=124)
    assert np.array_equal(a.rows, b.rows)
    assert not np.array_equal(a.rows, c.rows)
    assert a.rows.shape == (10, 6)
    assert a.seed == 123


def test_sampling_matches_target_covariance():
    """Coordinate means vanish at the 1/sqrt(n) rate and the sample
    covariance approaches sigma."""
    sigma = build_sigma(BandedUniform(k0=2, offdiag=0.4, p=5))
    n = 100_000
    ds = sample_dataset(sigma, n, seed=7)
    se = np.sqrt(np.diagonal(sigma) / n)
    assert np.all(np.abs(ds.rows.mean(axis=0)) < 5 * se)
    emp = ds.rows.T @ ds.rows / n
    assert np.max(np.abs(emp - sigma)) < 0.03


def test_dataset_validation_and_immutability():
    with pytest.raises(DataError):
        Dataset(rows=np.zeros((2, 4)))
    with pytest.raises(DataError):
        sample_dataset(np.eye(3), 2, seed=0)
    ds = Dataset(rows=np.zeros((5, 2)))
    with pytest.raises(AttributeError):
        ds.seed = 1
