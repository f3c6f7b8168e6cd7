import pytest
import numpy as np
from fhtw_lite import FtnModel, Interval, build_legendre_basis, WaveletPlan
from fhtw_lite.basis import eval_basis
from fhtw_lite.errors import DegenerateModelError, RejectedInputError
from fhtw_lite.ftn import (TensorComponent, eval_density, integrate, mean_and_second_moments, correlation_original,
                           covariance_to_correlation, marginal_2d, marginal_grid, empirical_correlation,
                           two_point_function)
from fhtw_lite.wavelet import transform_matrix


def _dense_density(model, points):
    D = model.to_dense()
    psi = [b.eval_many(points[:, j]) for j, b in enumerate(model.bases)]
    return np.einsum("abcd,za,zb,zc,zd->z", D, *psi)


def test_separable_density(tree4):
    bases = [build_legendre_basis(Interval(-1, 1), 2) for _ in range(4)]
    factors = [np.array([1.0, 0.5]), np.array([2.0, -0.3]), np.array([0.7, 0.0]), np.array([1.0, 1.0])]
    model = FtnModel.separable(tree4, bases, factors)
    point = np.array([0.3, -0.2, 0.9, -0.5])
    expected = np.prod([eval_basis(b, x) @ f for b, x, f in zip(bases, point, factors)])
    assert np.isclose(eval_density(model, point), expected)
    assert np.isclose(model.mass(), np.prod([np.sqrt(2) * f[0] for f in factors]))
    assert model.max_rank == 1


def test_density_matches_dense_contraction(planted4, rng):
    points = rng.uniform(-1, 1, (100, 4))
    assert np.allclose(planted4.density(points), _dense_density(planted4, points), rtol=1e-12)

    point = points[0]
    weights = [eval_basis(b, x) for b, x in zip(planted4.bases, point)]
    assert np.isclose(integrate(planted4, weights), eval_density(planted4, point))
    assert np.isclose(integrate(planted4, planted4.moments(0)), planted4.mass())


def test_zero_model(planted4):
    zero = {n: TensorComponent(c.node, c.bonds, c.physical, np.zeros_like(c.data))
            for n, c in planted4.components.items()}
    model = FtnModel(planted4.tree, zero, planted4.bases)
    assert np.allclose(model.density(np.zeros((3, 4))), 0.0)
    with pytest.raises(DegenerateModelError):
        mean_and_second_moments(model)


def test_moments_match_dense_quadrature(planted4):
    x, w = planted4.bases[0].quadrature(20)
    D = planted4.to_dense()
    psi = planted4.bases[0].eval_many(x)
    P = np.einsum("abcd,ia,jb,kc,ld->ijkl", D, psi, psi, psi, psi)
    grid = np.meshgrid(x, x, x, x, indexing="ij")
    weight = np.einsum("i,j,k,l->ijkl", w, w, w, w) * P
    z = weight.sum()

    mean, second = mean_and_second_moments(planted4, threads=2)
    assert np.allclose(mean, [np.sum(weight * g) / z for g in grid], rtol=1e-6, atol=1e-12)
    expected = np.array([[np.sum(weight * a * b) / z for b in grid] for a in grid])
    assert np.allclose(second, expected, rtol=1e-6, atol=1e-12)
    assert np.allclose(second, second.T)


def test_gaussian_product_moments(tree4):
    bases = [build_legendre_basis(Interval(-5, 5), 30) for _ in range(4)]
    factors = [b.project(lambda x: np.exp(-0.5 * x ** 2)) for b in bases]
    model = FtnModel.separable(tree4, bases, factors)
    mean, second = mean_and_second_moments(model)
    assert np.all(np.abs(mean) < 1e-2)
    assert np.allclose(np.diag(second), 1.0, atol=2e-2)


def test_correlation_of_independent_wavelet_coordinates(tree4):
    variances = np.array([0.5, 1.0, 1.5, 2.0])
    bases = [build_legendre_basis(Interval(-7, 7), 60) for _ in range(4)]
    factors = [b.project(lambda x, v=v: np.exp(-0.5 * x ** 2 / v)) for b, v in zip(bases, variances)]
    model = FtnModel.separable(tree4, bases, factors)

    mean, second = mean_and_second_moments(model)
    cov_c = second - np.outer(mean, mean)
    assert np.allclose(np.diag(cov_c), variances, rtol=1e-3)

    plan = WaveletPlan.create("haar", "line1d", 2)
    w = transform_matrix(plan)
    expected = covariance_to_correlation(w.T @ np.diag(np.diag(cov_c)) @ w)
    assert np.allclose(correlation_original(model, plan), expected, atol=1e-8)

    corr_c = correlation_original(model, None)
    assert np.allclose(correlation_original(model, WaveletPlan.identity(4)), corr_c)
    assert np.allclose(corr_c, np.eye(4), atol=1e-8)


def test_marginals(planted4, tree4):
    grid = np.random.default_rng(5).uniform(-1, 1, (50, 2))
    D = planted4.to_dense()
    m0 = planted4.moments(0)
    psi = planted4.bases[0]
    dense = np.einsum("abcd,za,b,zc,d->z", D, psi.eval_many(grid[:, 0]), m0[1], psi.eval_many(grid[:, 1]), m0[3])
    assert np.allclose(marginal_2d(planted4, (0, 2), grid), dense / planted4.mass(), rtol=1e-6)

    bases = [build_legendre_basis(Interval(-1, 1), 3) for _ in range(4)]
    factors = [np.array([1.0, 0.2, 0.1]), np.array([1.0, -0.4, 0.0]), np.array([0.9, 0.0, 0.3]),
               np.array([1.0, 0.1, -0.2])]
    model = FtnModel.separable(tree4, bases, factors)
    f = [lambda x, j=j: bases[j].eval_many(x) @ factors[j] for j in range(4)]
    expected = f[1](grid[:, 0]) * f[3](grid[:, 1]) / (np.sqrt(2) * factors[1][0] * np.sqrt(2) * factors[3][0])
    assert np.allclose(marginal_2d(model, (1, 3), grid), expected)

    xx, yy, values = marginal_grid(model, (1, 3), bins=20, scaled=True)
    assert xx.shape == yy.shape == values.shape == (20, 20)
    assert np.isclose(values.sum() * (2 / 20) ** 2, 1.0, atol=1e-2)

    with pytest.raises(RejectedInputError):
        marginal_2d(model, (1, 1), grid)


def test_two_point_function():
    m = 4
    corr = empirical_correlation(np.random.default_rng(2).standard_normal((500, m * m)))
    f = two_point_function(corr, m, site=(2, 3))
    ref = (2 - 1) + m * (3 - 1)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            assert f[j - 1, i - 1] == corr[(i - 1) + m * (j - 1), ref]
    assert f[2, 1] == 1.0

    with pytest.raises(RejectedInputError):
        two_point_function(corr, m, site=(5, 1))


def test_persistence(planted4, tmp_path):
    planted4.metadata["wavelet"] = {"filter": "haar", "kind": "line1d", "L": 2}
    path = planted4.to_json(tmp_path / "model.json")
    back = FtnModel.from_json(path)
    points = np.random.default_rng(1).uniform(-1, 1, (10, 4))
    assert np.allclose(back.density(points), planted4.density(points), rtol=1e-14)
    assert back.ranks() == planted4.ranks()
    assert back.metadata == planted4.metadata


def test_rejected_inputs(planted4):
    with pytest.raises(RejectedInputError):
        eval_density(planted4, [0.0, 0.0])
    with pytest.raises(RejectedInputError):
        integrate(planted4, [np.ones(3)] * 3)
    with pytest.raises(RejectedInputError):
        FtnModel.from_dict({"format": "something-else"})


def test_gauge_invariance(planted4, rng):
    child, parent = "v(1,1)", "w(1,0)"
    M = np.array([[2.0, 1.0], [0.5, 1.5]])
    components = dict(planted4.components)
    for node, neighbour, matrix in ((child, parent, M), (parent, child, np.linalg.inv(M).T)):
        c = components[node]
        axis = c.bonds.index(neighbour) + (c.physical is not None)
        data = np.moveaxis(np.tensordot(c.data, matrix, axes=([axis], [0])), -1, axis)
        components[node] = TensorComponent(node, c.bonds, c.physical, data)
    gauged = FtnModel(planted4.tree, components, planted4.bases)

    points = rng.uniform(-1, 1, (50, 4))
    assert np.allclose(gauged.density(points), planted4.density(points), rtol=1e-8)
    assert np.isclose(eval_density(gauged, points[0]), eval_density(planted4, points[0]), rtol=1e-8)
    assert not np.allclose(gauged.components[child].data, planted4.components[child].data)
