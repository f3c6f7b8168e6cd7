import json
import pytest
import numpy as np
from fhtw_lite import Interval, WaveletPlan, build_legendre_basis
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.rankstudy import (Bipartition, build_Z_IJ, case_parameters, case_study, coeff_matrix_2d,
                                 bivariate_ou_density, feature_family, numerical_rank, wavelet_bipartition,
                                 write_case_report)


def test_numerical_rank():
    rank, normalized = numerical_rank(np.diag([1.0, 0.5, 0.005]), 0.01)
    assert rank == 2
    assert np.isclose(normalized.sum(), 1.0)
    assert numerical_rank(np.eye(3), 0.5)[0] == 3
    assert numerical_rank(np.zeros((3, 4)), 0.1)[0] == 0
    with pytest.raises(RejectedInputError):
        numerical_rank(np.eye(2), 0.0)


def test_numerical_rank_monotone_and_invariant(rng):
    M = rng.standard_normal((8, 5)) * np.logspace(0, -4, 5)
    ranks = [numerical_rank(M, eps)[0] for eps in (1e-5, 1e-3, 1e-2, 1e-1, 0.5)]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))

    q1, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    q2, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    for eps in (1e-3, 1e-1):
        assert numerical_rank(q1 @ M @ q2, eps)[0] == numerical_rank(M, eps)[0]


def test_feature_family_and_swap(rng):
    bases = [build_legendre_basis(Interval(-3, 3), 4) for _ in range(5)]
    family = feature_family(bases, [0, 2], [1, 3, 4], 3)
    assert family.shape == (7, 10)
    assert family.left[:2] == [(0, 1), (2, 1)]

    samples = rng.standard_normal((500, 5))
    Z = build_Z_IJ(samples, family)
    assert np.isclose(Z[0, 0], 1.0)
    assert np.allclose(build_Z_IJ(samples, family.swapped()), Z.T)
    assert np.allclose(build_Z_IJ(samples, family, chunk_size=64, threads=3), Z)

    capped = feature_family(bases, [0, 1, 2], [3], 2, cap=5)
    assert capped.capped
    assert capped.left == [(0, 1), (1, 1), (2, 1), (0, 2)]

    with pytest.raises(RejectedInputError):
        feature_family(bases, [0], [1], 4)
    with pytest.raises(RejectedInputError):
        build_Z_IJ(samples[:, :3], family)
    with pytest.raises(RejectedInputError):
        Bipartition((0, 1), (1, 2))


def test_wavelet_bipartition_covers_every_coefficient():
    for plan in (WaveletPlan.create("d4", "line1d", 4), WaveletPlan.create("haar", "grid2d", 2)):
        part = wavelet_bipartition(plan)
        assert sorted(part.I + part.J) == list(range(plan.d))


def test_separable_density_has_rank_one():
    basis = build_legendre_basis(Interval(-3, 3), 20)
    D = coeff_matrix_2d(bivariate_ou_density(0.0), (basis, basis), nodes=100)
    assert numerical_rank(D, 1e-6)[0] == 1
    assert numerical_rank(coeff_matrix_2d(bivariate_ou_density(10.0), (basis, basis), nodes=100), 0.01)[0] > 1


def test_bivariate_case():
    report = case_study(1, "desk", eps=0.01)
    ranks = report.ranks()
    alphas = (1, 10, 100)
    assert all(ranks[f"c_alpha{a}"] == 1 for a in alphas)
    x_ranks = [ranks[f"x_alpha{a}"] for a in alphas]
    assert 1 < x_ranks[0] <= x_ranks[1] <= x_ranks[2]
    assert x_ranks[0] < x_ranks[2]
    assert report.mcmc is None


def test_case_parameters():
    params = case_parameters(2, "desk", n_samples=None, seed=4)
    assert params["n_samples"] == 200_000 and params["seed"] == 4 and params["wavelet"] == "d4"
    assert case_parameters(2, "full")["n_samples"] == 1_000_000
    assert case_parameters(1)["seed"] == 0

    with pytest.raises(RejectedInputError):
        case_parameters(6)
    with pytest.raises(RejectedInputError):
        case_parameters(2, "huge")
    with pytest.raises(RejectedInputError):
        case_parameters(2, "desk", bogus=1)


def test_small_sampled_case(tmp_path):
    overrides = dict(n_samples=2000, d=16, q_x=4, q_c=4, seed=5)
    report = case_study(2, "desk", eps=0.01, **overrides)
    assert set(report.sides) == {"x", "c"}
    assert report.sides["x"].shape == (9, 9)
    assert report.sides["c"].shape == (1 + 4 * 5, 1 + 4 * 7)
    assert all(r >= 1 for r in report.ranks().values())
    assert report.ranks() == case_study(2, "desk", eps=0.01, **overrides).ranks()

    written = write_case_report(report, tmp_path, {"version": "test"})
    assert {p.name for p in written} == {"spectrum_x.csv", "spectrum_c.csv", "report.json"}
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["version"] == "test"
    assert payload["sides"]["c"]["rank"] == report.sides["c"].rank


def test_lattice_support_box():
    small = dict(n_samples=500, d=16, q_x=3, q_c=3, seed=1)
    assert case_study(2, "desk", x_box=5.0, **small).parameters["x_support"] == "fixed [-5, 5]"
    assert case_study(2, "desk", x_box=0.01, **small).parameters["x_support"] == "inferred"
    assert case_parameters(2)["x_box"] == 0.8


@pytest.mark.slow
@pytest.mark.parametrize("case, ratio", [(2, 2.5), (3, 2.0), (4, 2.0), (5, 2.0)])
def test_wavelet_coordinates_lower_the_rank(case, ratio):
    ranks = case_study(case, "desk", eps=0.01, threads=4).ranks()
    assert ranks["x"] >= ratio * ranks["c"]


@pytest.mark.slow
@pytest.mark.parametrize("case, x_band, c_band", [(2, (22, 34), (5, 9)), (3, (32, 58), (10, 18)),
                                                (4, (52, 94), (12, 22)), (5, (59, 109), (12, 22))])
def test_full_scale_ranks(case, x_band, c_band):
    ranks = case_study(case, "full", eps=0.01, threads=8).ranks()
    assert x_band[0] <= ranks["x"] <= x_band[1]
    assert c_band[0] <= ranks["c"] <= c_band[1]
