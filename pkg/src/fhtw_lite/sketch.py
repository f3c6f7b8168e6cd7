"""
Sketch functions and the moment estimators of the density-estimation pass.

For every directed edge ``v -> k`` a sketch ``s_{v->k}`` is a handful of functions of the variables on
``v``'s side of the edge: a constant, plus low-degree basis functions of the variables closest to the
cut, mixed down to ``r~`` outputs by a seeded row-orthonormal matrix. The estimator only ever needs
expectations of products of sketches, provided by a :class:`MomentSource`.
"""
from __future__ import annotations

import itertools
import string
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from loguru import logger

from fhtw_lite.basis import BasisSpec
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.ftn import FtnModel
from fhtw_lite.topology import DirectedEdge, RankBudget, TreeTopology, interface_variables
from fhtw_lite.utils import CHUNK_SIZE, chunked_mean

DEFAULT_INTERFACE_COUNT = 4
DEFAULT_DEGREE = 5


@dataclass(frozen=True)
class EdgeSketch:
    """
    Sketch of one directed edge.

    Attributes:
        edge (DirectedEdge): ``source -> target``; features read variables on the source side.
        variables (tuple[int, ...]): Interface variables, closest to the cut first.
        degrees (tuple[int, ...]): Highest basis index used for each interface variable.
        mixing (np.ndarray): ``r~ x F`` row-orthonormal (or identity) mixing matrix.
        stream (int | None): Index of the spawned seed stream that drew ``mixing``.
    """
    edge: DirectedEdge
    variables: tuple
    degrees: tuple
    mixing: np.ndarray = field(repr=False)
    stream: int | None = None

    @property
    def size(self) -> int:
        return self.mixing.shape[0]

    @property
    def raw_size(self) -> int:
        return 1 + sum(self.degrees)

    def features(self) -> list[tuple[int, int] | None]:
        """Raw features in column order; ``None`` is the constant, ``(v, i)`` is ``psi_i(x_v)``."""
        out = [None]
        for v, q in zip(self.variables, self.degrees):
            out.extend((v, i) for i in range(1, q + 1))
        return out

    def raw(self, samples: np.ndarray, bases: Sequence[BasisSpec]) -> np.ndarray:
        cols = [np.ones((samples.shape[0], 1))]
        for v, q in zip(self.variables, self.degrees):
            if q:
                cols.append(bases[v].eval_many(samples[:, v])[:, 1:q + 1])
        return np.hstack(cols)

    def evaluate(self, samples: np.ndarray, bases: Sequence[BasisSpec]) -> np.ndarray:
        """Sketch values at each sample row, shape ``(N, r~)``."""
        return self.raw(samples, bases) @ self.mixing.T

    def summary(self) -> dict:
        return {"edge": str(self.edge), "interface": list(self.variables), "degrees": list(self.degrees),
                "sketch_size": self.size, "raw_features": self.raw_size, "stream": self.stream}


@dataclass
class SketchPlan:
    """All directed-edge sketches of a tree together with the parameters that produced them."""
    tree: TreeTopology
    bases: list
    degree: int
    interface_count: int
    seed: int
    identity: bool
    sketches: dict = field(default_factory=dict)

    def __getitem__(self, e: DirectedEdge) -> EdgeSketch:
        return self.sketches[e]

    def size(self, e: DirectedEdge) -> int:
        return self.sketches[e].size

    def summary(self) -> dict:
        return {"degree": self.degree, "interface_count": self.interface_count, "seed": self.seed,
                "mixing": "identity" if self.identity else "orthonormal",
                "edges": [s.summary() for s in self.sketches.values()]}


def _edge_key(e: DirectedEdge, tree: TreeTopology) -> tuple[str, str]:
    return (e.source, e.target) if tree.parent[e.source] == e.target else (e.target, e.source)


def build_sketch_plan(tree: TreeTopology, bases: Sequence[BasisSpec], q_s: int = DEFAULT_DEGREE,
                      interface_count: int = DEFAULT_INTERFACE_COUNT, r_sketch: int | RankBudget = 2,
                      seed: int = 0, identity: bool = False, clip: bool = False) -> SketchPlan:
    """Sketch functions for every directed edge of ``tree``.

    Args:
        tree: The tree.
        bases: Basis of each variable.
        q_s: Degree cap per interface variable (capped again by the basis size).
        interface_count: Number of interface variables per directed edge.
        r_sketch: Sketch size ``r~`` for every edge, or a :class:`RankBudget` with per-edge sizes.
        seed: Entropy for the mixing matrices; each directed edge draws from its own spawned stream.
        identity: Use the first ``r~`` raw features instead of a random orthonormal mixing.
        clip: Shrink ``r~`` to the raw-feature count on edges where it does not fit, instead of failing.

    Returns:
        SketchPlan: One :class:`EdgeSketch` per directed edge; both directions of an edge share ``r~``.
    """
    if q_s < 0:
        raise RejectedInputError(f"Degree cap must be >= 0, got {q_s}")
    if len(bases) != tree.d:
        raise RejectedInputError(f"{len(bases)} bases for {tree.d} variables")

    directed = list(tree.directed_edges())
    streams = np.random.SeedSequence(seed).spawn(len(directed))
    layout = {}
    for e in directed:
        variables = tuple(interface_variables(tree, e, interface_count))
        degrees = tuple(min(q_s, bases[v].size - 1) for v in variables)
        layout[e] = (variables, degrees, 1 + sum(degrees))

    plan = SketchPlan(tree, list(bases), q_s, interface_count, seed, identity)
    for index, (e, stream) in enumerate(zip(directed, streams)):
        key = _edge_key(e, tree)
        wanted = r_sketch.sketch_sizes[key] if isinstance(r_sketch, RankBudget) else int(r_sketch)
        available = min(layout[e][2], layout[e.reversed()][2])
        size = wanted
        if wanted > available:
            if not clip:
                raise RejectedInputError(f"Sketch size {wanted} exceeds the {available} raw features on edge {key}")
            size = available
            if e.source == key[0]:
                logger.warning(f"Sketch size on edge {key} clipped from {wanted} to {available}")
        if size < 1:
            raise RejectedInputError(f"Sketch size must be >= 1 on edge {key}")

        variables, degrees, raw = layout[e]
        if identity:
            mixing = np.eye(size, raw)
        else:
            gauss = np.random.default_rng(stream).standard_normal((raw, size))
            q, _ = scipy.linalg.qr(gauss, mode="economic")
            mixing = q.T
            assert np.linalg.matrix_rank(mixing) == size, f"Mixing on {e} lost rank"
        plan.sketches[e] = EdgeSketch(e, variables, degrees, mixing, None if identity else index)
        logger.debug(f"Sketch {e}: interface {variables}, {raw} raw features -> {size}")
    return plan


def eval_sketch(plan: SketchPlan, e: DirectedEdge, sample_row: Sequence[float]) -> np.ndarray:
    """Sketch values ``s_e(x)`` at one sample row."""
    row = np.asarray(sample_row, dtype=float)
    if row.shape != (plan.tree.d,):
        raise RejectedInputError(f"Sample row of shape {row.shape}, tree has {plan.tree.d} variables")
    return eval_sketch_many(plan, e, row[None])[0]


def eval_sketch_many(plan: SketchPlan, e: DirectedEdge, samples: np.ndarray) -> np.ndarray:
    plan.tree.check_edge(e)
    return plan[e].evaluate(samples, plan.bases)


def _node_inputs(plan: SketchPlan, node: str) -> tuple[int | None, list[DirectedEdge]]:
    tree = plan.tree
    var = tree.variable(node) if tree.is_external(node) else None
    return var, [DirectedEdge(v, node) for v in tree.bonds(node)]


def _outer_subscripts(count: int, batch: bool) -> str:
    # "za,zb,zc->abc" (batch) or "a,b,c->abc"
    letters = string.ascii_lowercase[:count]
    z = "z" if batch else ""
    return ",".join(z + ch for ch in letters) + "->" + letters


class MomentSource(ABC):
    """Expectations of products of sketch functions under some density."""
    num_samples: int | None = None

    @abstractmethod
    def edge(self, plan: SketchPlan, e: DirectedEdge) -> np.ndarray:
        """``Z(b, g) = E[s_{e}(b) s_{reversed e}(g)]``."""

    @abstractmethod
    def node(self, plan: SketchPlan, node: str) -> np.ndarray:
        """``B`` block of ``node`` with axes ``[physical] + bonds``."""


class SampleMoments(MomentSource):
    """
    Empirical moments over a sample matrix.

    Rows are split into fixed chunks whose partial sums are reduced pairwise, so results depend on
    the chunk size but not on the number of worker threads.
    """
    def __init__(self, samples: np.ndarray, chunk_size: int = CHUNK_SIZE, threads: int | None = None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2:
            raise RejectedInputError(f"Samples must be an N x d matrix, got shape {samples.shape}")
        if samples.shape[0] == 0:
            raise RejectedInputError("Empty sample set")
        if not np.all(np.isfinite(samples)):
            raise RejectedInputError("Samples contain non-finite entries")
        self.samples = samples
        self.chunk_size = chunk_size
        self.threads = threads
        self.num_samples = samples.shape[0]

    def __repr__(self):
        return f"{self.__class__.__name__}(N={self.num_samples}, d={self.samples.shape[1]})"

    def _check(self, plan: SketchPlan):
        if self.samples.shape[1] != plan.tree.d:
            raise RejectedInputError(f"Samples have {self.samples.shape[1]} columns, tree has {plan.tree.d} variables")

    def edge(self, plan: SketchPlan, e: DirectedEdge) -> np.ndarray:
        self._check(plan)
        plan.tree.check_edge(e)
        left, right = plan[e], plan[e.reversed()]

        def chunk(rows: np.ndarray) -> np.ndarray:
            return left.evaluate(rows, plan.bases).T @ right.evaluate(rows, plan.bases)

        return chunked_mean(chunk, self.samples, self.chunk_size, self.threads)

    def node(self, plan: SketchPlan, node: str) -> np.ndarray:
        self._check(plan)
        var, incoming = _node_inputs(plan, node)
        subscripts = _outer_subscripts(len(incoming) + (var is not None), batch=True)

        def chunk(rows: np.ndarray) -> np.ndarray:
            factors = [plan.bases[var].eval_many(rows[:, var])] if var is not None else []
            factors += [plan[e].evaluate(rows, plan.bases) for e in incoming]
            return np.einsum(subscripts, *factors, optimize=True)

        return chunked_mean(chunk, self.samples, self.chunk_size, self.threads)


class DensityMoments(MomentSource):
    """
    Exact moments of an FTN density, computed by contraction.

    Each raw feature ``psi_i(x_v)`` becomes the unit weight ``e_i`` on variable ``v``; constant features
    and untouched variables integrate against the zeroth basis moments. Sketch and model must share
    their variable intervals.
    """
    def __init__(self, model: FtnModel):
        self.model = model
        self.mass = model.mass()
        self.m0 = model.moments(0)

    def __repr__(self):
        return f"{self.__class__.__name__}({self.model!r})"

    def _check(self, plan: SketchPlan):
        if plan.tree.d != self.model.d:
            raise RejectedInputError(f"Plan has {plan.tree.d} variables, model has {self.model.d}")
        for j, (a, b) in enumerate(zip(plan.bases, self.model.bases)):
            if a.interval != b.interval:
                raise RejectedInputError(f"Variable {j}: sketch interval {a.interval} differs from the model's")

    def _unit(self, v: int, i: int) -> np.ndarray:
        w = np.zeros(self.model.bases[v].size)
        if i < w.size:
            w[i] = 1.0
        return w

    def _raw_moments(self, groups: list[list[tuple[int, int] | None]]) -> np.ndarray:
        """``E[prod_g f_g]`` over every combination of one feature per group (variables disjoint)."""
        combos = list(itertools.product(*groups))
        weights = [np.broadcast_to(w, (len(combos), w.size)).copy() for w in self.m0]
        for b, combo in enumerate(combos):
            for feat in combo:
                if feat is not None:
                    weights[feat[0]][b] = self._unit(*feat)
        values = self.model.contract(weights) / self.mass
        return values.reshape([len(g) for g in groups])

    def edge(self, plan: SketchPlan, e: DirectedEdge) -> np.ndarray:
        self._check(plan)
        plan.tree.check_edge(e)
        left, right = plan[e], plan[e.reversed()]
        raw = self._raw_moments([left.features(), right.features()])
        return left.mixing @ raw @ right.mixing.T

    def node(self, plan: SketchPlan, node: str) -> np.ndarray:
        self._check(plan)
        var, incoming = _node_inputs(plan, node)
        groups = [[(var, i) for i in range(plan.bases[var].size)]] if var is not None else []
        groups += [plan[e].features() for e in incoming]
        block = self._raw_moments(groups)
        offset = var is not None
        for axis, e in enumerate(incoming, start=offset):
            block = np.moveaxis(np.tensordot(plan[e].mixing, block, axes=([1], [axis])), 0, axis)
        return block


def estimate_Z_edge(samples: np.ndarray, plan: SketchPlan, edge: DirectedEdge | tuple[str, str],
                    threads: int | None = None) -> np.ndarray:
    """Empirical ``Z_(k,v)(b, g) = mean of s_{k->v}(b) s_{v->k}(g)`` for the edge ``(k, v)``."""
    if not isinstance(edge, DirectedEdge):
        edge = DirectedEdge(*edge)
    return SampleMoments(samples, threads=threads).edge(plan, edge)


def estimate_B_node(samples: np.ndarray, plan: SketchPlan, tree: TreeTopology, node: str,
                    basis: BasisSpec | None = None, threads: int | None = None) -> np.ndarray:
    """Empirical node block of ``node``: the mean outer product of its incoming sketches (and ``psi(x_k)``)."""
    if node not in tree.graph:
        raise RejectedInputError(f"{node} is not a node of the tree")
    if (basis is not None) != tree.is_external(node):
        raise RejectedInputError(f"{node}: a basis must be given exactly for external nodes")
    if basis is not None and basis != plan.bases[tree.variable(node)]:
        raise RejectedInputError(f"{node}: basis differs from the plan's basis for variable {tree.variable(node)}")
    return SampleMoments(samples, threads=threads).node(plan, node)
