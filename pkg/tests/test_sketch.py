import pytest
import numpy as np
from fhtw_lite import FtnModel, Interval, build_legendre_basis
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.sketch import (DensityMoments, SampleMoments, build_sketch_plan, eval_sketch, estimate_Z_edge,
                              estimate_B_node)
from fhtw_lite.topology import DirectedEdge, RankBudget

LEAF = DirectedEdge("v(1,1)", "w(1,0)")
CORE = DirectedEdge("w(1,0)", "v(1,0)")


def test_plan_layout(tree4, bases4):
    plan = build_sketch_plan(tree4, bases4, q_s=2, interface_count=1, r_sketch=3, identity=True)
    assert len(plan.sketches) == 2 * len(tree4.edges)
    for sketch in plan.sketches.values():
        assert sketch.raw_size == 3
        assert sketch.size == 3
    assert plan[CORE].variables == (2,)

    # degrees are capped by the basis size
    capped = build_sketch_plan(tree4, bases4, q_s=7, interface_count=1, r_sketch=2)
    assert capped[LEAF].degrees == (2,)


def test_plan_determinism(tree4, bases4):
    a = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=11)
    b = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=11)
    c = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=12)
    assert all(np.array_equal(a[e].mixing, b[e].mixing) for e in a.sketches)
    assert any(not np.allclose(a[e].mixing, c[e].mixing) for e in a.sketches)
    for e in a.sketches:
        m = a[e].mixing
        assert np.allclose(m @ m.T, np.eye(m.shape[0]))


def test_sketch_size_rejected_or_clipped(tree4, bases4):
    with pytest.raises(RejectedInputError):
        build_sketch_plan(tree4, bases4, q_s=2, interface_count=4, r_sketch=4)

    budget = RankBudget.uniform(tree4, 2, r_sketch=10)
    plan = build_sketch_plan(tree4, bases4, q_s=2, interface_count=4, r_sketch=budget, clip=True)
    assert plan.size(LEAF) == plan.size(LEAF.reversed()) == 3
    assert plan.size(CORE) == plan.size(CORE.reversed()) == 5


def test_eval_sketch(tree4, bases4):
    plan = build_sketch_plan(tree4, bases4, q_s=1, interface_count=1, r_sketch=2, identity=True)
    row = np.array([0.1, -0.4, 0.6, 0.2])
    assert np.allclose(eval_sketch(plan, LEAF, row), [1.0, bases4[2].eval_many(0.6)[1]])

    plan = build_sketch_plan(tree4, bases4, q_s=2, interface_count=1, r_sketch=3, identity=True)
    values = eval_sketch(plan, LEAF, np.zeros(4))
    assert np.allclose(values, [1.0, 0.0, bases4[2].eval_many(0.0)[2]])

    mixed = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=4)
    e = DirectedEdge("v(1,0)", "v(1,-1)")
    assert np.linalg.norm(eval_sketch(mixed, e, row)) <= np.linalg.norm(mixed[e].raw(row[None], bases4)) + 1e-12

    with pytest.raises(RejectedInputError):
        eval_sketch(plan, LEAF, np.zeros(3))


def test_sample_moments_small_cases(tree4, bases4, rng):
    plan = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=1)
    row = rng.uniform(-1, 1, (1, 4))
    Z = estimate_Z_edge(row, plan, (CORE.source, CORE.target))
    assert np.allclose(Z, np.outer(eval_sketch(plan, CORE, row[0]), eval_sketch(plan, CORE.reversed(), row[0])))

    constant = build_sketch_plan(tree4, bases4, q_s=0, interface_count=1, r_sketch=1, identity=True)
    samples = rng.uniform(-1, 1, (50, 4))
    assert np.allclose(estimate_Z_edge(samples, constant, CORE), [[1.0]])
    assert np.allclose(estimate_B_node(samples, constant, tree4, "w(1,0)"), np.ones((1, 1, 1)))

    with pytest.raises(RejectedInputError):
        SampleMoments(np.empty((0, 4)))
    with pytest.raises(RejectedInputError):
        estimate_B_node(samples, constant, tree4, "v(1,1)")


def test_chunking_and_threads_do_not_change_moments(tree4, bases4, rng):
    plan = build_sketch_plan(tree4, bases4, q_s=2, interface_count=2, r_sketch=3, seed=1)
    samples = rng.uniform(-1, 1, (5000, 4))
    serial = SampleMoments(samples, chunk_size=256).node(plan, "w(1,0)")
    threaded = SampleMoments(samples, chunk_size=256, threads=4).node(plan, "w(1,0)")
    assert np.array_equal(serial, threaded)
    assert np.allclose(SampleMoments(samples, chunk_size=5000).node(plan, "w(1,0)"), serial, atol=1e-13)


def test_sample_moments_converge_to_exact(tree4, rng):
    # separable density prod (1 + x_j / 2) / 2 on [-1, 1]^4, drawn by inverting its CDF
    bases = [build_legendre_basis(Interval(-1, 1), 3) for _ in range(4)]
    coef = bases[0].project(lambda x: 0.5 * (1 + 0.5 * x))
    model = FtnModel.separable(tree4, bases, [coef] * 4)
    samples = -2.0 + np.sqrt(1.0 + 8.0 * rng.uniform(size=(40000, 4)))

    plan = build_sketch_plan(tree4, bases, q_s=2, interface_count=2, r_sketch=3, identity=True)
    exact = DensityMoments(model)
    bound = 10 / np.sqrt(samples.shape[0])
    for e in (LEAF, CORE):
        Z = exact.edge(plan, e)
        assert np.isclose(Z[0, 0], 1.0)
        assert np.linalg.norm(estimate_Z_edge(samples, plan, e) - Z) <= bound * max(1.0, np.linalg.norm(Z))


def test_density_moments_match_dense_contraction(planted4):
    plan = build_sketch_plan(planted4.tree, planted4.bases, q_s=2, interface_count=2, r_sketch=3, seed=3)
    block = DensityMoments(planted4).node(plan, "w(1,0)")
    assert block.shape == (3, 3, 3)

    # brute force: D contracted with the sketch tensors of the three incoming edges
    x, w = planted4.bases[0].quadrature(12)
    grid = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), axis=-1).reshape(-1, 4)
    weights = np.prod(np.stack(np.meshgrid(w, w, w, w, indexing="ij"), axis=-1).reshape(-1, 4), axis=1)
    p = planted4.density(grid) * weights / planted4.mass()
    s = [plan[DirectedEdge(v, "w(1,0)")].evaluate(grid, planted4.bases) for v in planted4.tree.bonds("w(1,0)")]
    expected = np.einsum("z,za,zb,zc->abc", p, *s)
    assert np.allclose(block, expected, atol=1e-8)


def test_standard_error_shrinks_with_samples(tree4):
    bases = [build_legendre_basis(Interval(-1, 1), 3) for _ in range(4)]
    plan = build_sketch_plan(tree4, bases, q_s=2, interface_count=2, r_sketch=3, identity=True)

    def spread(n: int) -> float:
        # same separable density as above, 20 independent replicates
        draws = [-2.0 + np.sqrt(1.0 + 8.0 * np.random.default_rng(seed).uniform(size=(n, 4))) for seed in range(20)]
        return float(np.mean(np.std([estimate_Z_edge(x, plan, CORE) for x in draws], axis=0)))

    ratio = spread(4000) / spread(2000)
    assert 1 / (1.5 * np.sqrt(2)) < ratio < 1.5 / np.sqrt(2)
