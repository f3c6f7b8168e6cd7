import pytest
import numpy as np
import scipy.linalg
from fhtw_lite.config import McmcConfig
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.models import (GlSpec, OuSpec, gl_potential_and_gradient, ou_precision, ring_laplacian, sample_mcmc,
                              sample_gl_mcmc, sample_ou)


def test_ring_laplacian():
    assert np.allclose(ring_laplacian(2).toarray(), [[1, -1], [-1, 1]])
    lap = ring_laplacian(5).toarray()
    assert np.allclose(lap.sum(axis=1), 0.0)
    assert np.allclose(np.diag(lap), 2.0)
    with pytest.raises(RejectedInputError):
        ring_laplacian(1)


def test_ou_precision():
    assert np.allclose(ou_precision(OuSpec.line(2, 3.0)), [[4, -3], [-3, 4]])
    assert np.allclose(ou_precision(OuSpec.line(8, 0.0)), np.eye(8))
    assert np.allclose(np.sort(np.linalg.eigvalsh(ou_precision(OuSpec.line(4, 1.0)))), [1, 3, 3, 5])

    # 2x2 torus: one neighbour pair per direction
    q = ou_precision(OuSpec.grid(2, 2.0, 5.0))
    assert np.isclose(q[0, 1], -2.0) and np.isclose(q[0, 2], -5.0) and np.isclose(q[0, 3], 0.0)
    assert np.allclose(q, q.T)

    corr = OuSpec.line(8, 10.0).correlation()
    assert np.allclose(np.diag(corr), 1.0)
    assert np.isclose(corr[0, 1], corr[3, 4])

    with pytest.raises(RejectedInputError):
        OuSpec.line(4, -1.0)


def test_sample_ou_whitens():
    spec = OuSpec.line(4, 5.0)
    x = sample_ou(spec, 20000, seed=1)
    z = x @ scipy.linalg.cholesky(ou_precision(spec), lower=True)
    assert np.max(np.abs(np.cov(z.T) - np.eye(4))) < 10 / np.sqrt(x.shape[0])

    assert np.array_equal(sample_ou(spec, 10, seed=3), sample_ou(spec, 10, seed=3))
    with pytest.raises(RejectedInputError):
        sample_ou(spec, 0)


def test_gl_potential():
    spec = GlSpec.line(8, 2.0, 1.5)
    value, grad = gl_potential_and_gradient(spec, np.ones(8))
    assert np.isclose(value, 0.0) and np.allclose(grad, 0.0)
    value, grad = gl_potential_and_gradient(spec, np.zeros(8))
    assert np.isclose(value, 0.5 * 1.5 * 8) and np.allclose(grad, 0.0)

    x = np.random.default_rng(4).standard_normal(8)
    _, grad = gl_potential_and_gradient(spec, x)
    h = 1e-6
    fd = [(gl_potential_and_gradient(spec, x + h * e)[0] - gl_potential_and_gradient(spec, x - h * e)[0]) / (2 * h)
          for e in np.eye(8)]
    assert np.allclose(grad, fd, atol=1e-5)

    batch = np.stack([x, -x])
    values, _ = gl_potential_and_gradient(spec, batch)
    assert np.isclose(values[0], values[1])
    assert np.isclose(values[0], gl_potential_and_gradient(spec, np.roll(x, 3))[0])

    with pytest.raises(RejectedInputError):
        gl_potential_and_gradient(spec, np.ones(4))
    with pytest.raises(RejectedInputError):
        GlSpec.line(8, 1.0, 0.0)


def test_gl_potential_2d_symmetries():
    m = 4
    spec = GlSpec.grid(m, 3.0, 0.5, 1.0)
    field = np.random.default_rng(6).standard_normal((m, m))  # field[j, i] sits at i + m * j
    value = gl_potential_and_gradient(spec, field.ravel())[0]
    for shifted in (np.roll(field, 1, axis=0), np.roll(field, 1, axis=1), -field):
        assert np.isclose(gl_potential_and_gradient(spec, shifted.ravel())[0], value)
    # the couplings are not interchangeable
    assert not np.isclose(gl_potential_and_gradient(spec, field.T.ravel())[0], value)


def _gaussian(x):
    return 0.5 * np.sum(x ** 2, axis=-1), x


def test_mala_on_gaussian():
    config = McmcConfig(burn_in=500, thinning=5, chains=4, seed=2)
    samples, report = sample_mcmc(_gaussian, 2, 4000, config)
    assert samples.shape == (4000, 2)
    assert np.all(np.abs(samples.mean(axis=0)) < 0.15)
    assert np.allclose(samples.var(axis=0), 1.0, atol=0.2)
    assert len(report.chain_acceptance) == 4 and len(report.step_sizes) == 4
    assert not report.warnings
    assert 0.4 <= report.acceptance <= 0.8

    again, _ = sample_mcmc(_gaussian, 2, 4000, config)
    assert np.array_equal(samples, again)


def test_mala_reports_bad_acceptance():
    config = McmcConfig(step_size=50.0, adapt=False, burn_in=10, thinning=1, chains=2)
    samples, report = sample_mcmc(_gaussian, 2, 100, config)
    assert samples.shape == (100, 2)
    assert report.acceptance < 0.2
    assert report.warnings
    assert set(report.to_dict()) == {"acceptance", "chain_acceptance", "step_sizes", "mode_occupancy", "warnings"}

    with pytest.raises(RejectedInputError):
        McmcConfig(thinning=0)
    with pytest.raises(RejectedInputError):
        sample_mcmc(_gaussian, 2, 0, config)


def test_gl_sampler_is_deterministic():
    spec = GlSpec.line(4, 1.0, 1.0)
    config = McmcConfig(burn_in=200, thinning=2, chains=2, seed=9)
    a, report = sample_gl_mcmc(spec, 50, config)
    b, _ = sample_gl_mcmc(spec, 50, config)
    assert a.shape == (50, 4) and np.array_equal(a, b)
    assert len(report.mode_occupancy) == 2


def test_deep_wells_keep_the_mean_at_zero():
    spec = GlSpec.line(4, 0.0, 20.0)
    samples, report = sample_gl_mcmc(spec, 4000, McmcConfig(burn_in=1000, thinning=5, chains=8, seed=3))
    assert abs(samples.mean()) < 0.05
    assert np.mean(np.abs(samples) > 0.5) > 0.9
    assert 0.4 <= report.acceptance <= 0.8
