"""
Sketched density estimation on a tree.

The pass runs in four phases: edge moments ``Z_e``, their truncated SVD factors, node moments ``B_k``,
and one small least-squares solve per node. Every step only touches ``r~``-sized objects.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from loguru import logger

from fhtw_lite.basis import BasisSpec
from fhtw_lite.config import FitConfig
from fhtw_lite.errors import DegenerateEdgeError, RejectedInputError
from fhtw_lite.ftn import FtnModel, TensorComponent
from fhtw_lite.sketch import MomentSource, SampleMoments, build_sketch_plan
from fhtw_lite.topology import DirectedEdge, RankBudget, TreeTopology
from fhtw_lite.utils import parallel_map

__all__ = ["EdgeFactors", "FitConfig", "FitReport", "factor_edge", "solve_core", "fit"]


@dataclass
class EdgeFactors:
    """
    Truncated factorization ``Z_e ~ A_toward_parent @ A_toward_child.T`` of one edge moment.

    Attributes:
        edge (tuple[str, str]): ``(child, parent)``.
        toward_parent (np.ndarray): ``r~ x r`` orthonormal factor of the child-side sketch.
        toward_child (np.ndarray): ``r~ x r`` parent-side factor carrying the singular values.
        singular_values (np.ndarray): The ``r`` kept singular values.
        spectrum (np.ndarray): Every singular value of ``Z_e``.
    """
    edge: tuple | None
    toward_parent: np.ndarray
    toward_child: np.ndarray
    singular_values: np.ndarray
    spectrum: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.size

    def reconstruct(self) -> np.ndarray:
        return self.toward_parent @ self.toward_child.T


def factor_edge(Z: np.ndarray, r: int, edge: tuple[str, str] | None = None,
                eps_trunc: float = 1e-10) -> EdgeFactors:
    """Truncated SVD of an edge moment with the orthogonal factor on the child side.

    Args:
        Z: ``r~ x r~`` moment; rows index the child-to-parent sketch.
        r: Target rank.
        edge: ``(child, parent)``, used in error messages.
        eps_trunc: Singular values at or below ``eps_trunc * sigma_1`` are dropped.

    Returns:
        EdgeFactors: With ``r' = min(r, #{sigma > eps_trunc * sigma_1})`` columns.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise RejectedInputError(f"Edge moment must be a matrix, got shape {Z.shape}")
    if not 1 <= r <= min(Z.shape):
        raise RejectedInputError(f"Rank {r} must lie in 1..{min(Z.shape)} for a {Z.shape} moment")
    if not np.all(np.isfinite(Z)):
        raise DegenerateEdgeError("Edge moment has non-finite entries", edge=edge)

    u, s, vt = scipy.linalg.svd(Z, full_matrices=False)
    if s[0] <= 0.0:
        raise DegenerateEdgeError("Edge moment is identically zero", edge=edge)
    keep = min(r, int(np.count_nonzero(s > eps_trunc * s[0])))
    if keep < r:
        logger.debug(f"Edge {edge}: effective rank {keep} below target {r}")
    return EdgeFactors(edge, u[:, :keep], vt[:keep].T * s[:keep], s[:keep].copy(), s)


def solve_core(factors: Sequence[np.ndarray], B: np.ndarray, eps_ls: float = 1e-10, node: str = "",
               bonds: Sequence[str] | None = None) -> TensorComponent:
    """Solve ``(A_1 x ... x A_m) G = B`` axis by axis with regularized pseudo-inverses.

    Args:
        factors: One ``r~_j x r_j`` matrix per bond axis of ``B``, in bond order.
        B: Node moment with axes ``[physical] + bonds``.
        eps_ls: Relative singular-value cutoff of each pseudo-inverse.
        node: Node id of the component.
        bonds: Neighbour of each bond axis.

    Returns:
        TensorComponent: Axes ``[physical] + bonds`` with bond sizes ``r_j``.
    """
    B = np.asarray(B, dtype=float)
    physical = B.ndim - len(factors)
    if physical not in (0, 1):
        raise RejectedInputError(f"{node}: block with {B.ndim} axes for {len(factors)} factors")
    bonds = tuple(bonds) if bonds is not None else tuple(f"bond{j}" for j in range(len(factors)))

    g = B
    for j, a in enumerate(factors):
        axis = j + physical
        if a.shape[0] != g.shape[axis]:
            raise RejectedInputError(f"{node}: factor {j} has {a.shape[0]} rows, block axis has {g.shape[axis]}")
        if not np.linalg.norm(a, 2) > 0.0:
            raise DegenerateEdgeError(f"Factor facing {node} vanishes", edge=(bonds[j], node))
        pinv = scipy.linalg.pinv(a, atol=0.0, rtol=eps_ls)
        g = np.moveaxis(np.tensordot(pinv, g, axes=([1], [axis])), 0, axis)
    return TensorComponent(node, bonds, B.shape[0] if physical else None, g)


@dataclass
class FitReport:
    """Diagnostics of one :func:`fit` call, serialized next to the model."""
    num_samples: int | None
    edges: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    sketch: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def warn(self, message: str):
        logger.warning(message)
        self.warnings.append(message)

    def effective_ranks(self) -> dict[str, int]:
        return {f"{e['child']}|{e['parent']}": e["rank"] for e in self.edges}

    def to_dict(self) -> dict:
        return {"num_samples": self.num_samples, "edges": self.edges, "timing": self.timing,
                "warnings": self.warnings, "sketch": self.sketch, "config": self.config}


def _root_tree(tree: TreeTopology, root: str | None) -> TreeTopology:
    if root is None or root == tree.root:
        return tree
    if root not in tree.graph:
        raise RejectedInputError(f"Root {root} is not a node of the tree")
    return TreeTopology(tree.graph, root, tree.kind)


def fit(data: np.ndarray | MomentSource, tree: TreeTopology, bases: Sequence[BasisSpec],
        config: FitConfig | None = None, threads: int | None = None) -> FtnModel:
    """Estimate a tree-based FTN density from samples (or from exact moments).

    Args:
        data: ``N x d`` samples in the tree's variable order, or a :class:`MomentSource`.
        tree: The tree; re-rooted when ``config.root`` names another node.
        bases: Basis of each variable.
        config: Estimator settings.
        threads: Worker threads for the moment passes.

    Returns:
        FtnModel: Unnormalized model with cached mass and the :class:`FitReport` as ``model.report``.
    """
    config = config or FitConfig()
    tree = _root_tree(tree, config.root)
    source = data if isinstance(data, MomentSource) else SampleMoments(data, threads=threads)
    report = FitReport(source.num_samples, config=asdict(config))
    clock = time.perf_counter()

    budget = RankBudget.uniform(tree, config.rank, config.sketch.sketch_size, config.overrides())
    plan = build_sketch_plan(tree, bases, config.sketch.degree, config.sketch.interface_count, budget,
                             seed=config.sketch.seed, identity=config.sketch.identity, clip=True)
    report.sketch = plan.summary()

    largest = max(plan.size(DirectedEdge(c, p)) for c, p in tree.edges)
    if source.num_samples is not None and source.num_samples < largest ** 2:
        report.warn(f"Only {source.num_samples} samples for sketch size {largest}; moments may be noisy")

    logger.info(f"Estimating {len(tree.edges)} edge moments")
    moments = parallel_map(lambda e: source.edge(plan, DirectedEdge(*e)), tree.edges, threads)
    report.timing["edge_moments"] = time.perf_counter() - clock

    factors = {}
    for e, Z in zip(tree.edges, moments):
        r = min(budget.ranks[e], plan.size(DirectedEdge(*e)))
        factors[e] = factor_edge(Z, r, edge=e, eps_trunc=config.eps_trunc)
        report.edges.append(_edge_summary(factors[e], budget.ranks[e]))
    report.timing["factor"] = time.perf_counter() - clock

    logger.info(f"Estimating {len(tree)} node moments")
    nodes = tree.postorder()
    blocks = parallel_map(lambda k: source.node(plan, k), nodes, threads)
    report.timing["node_moments"] = time.perf_counter() - clock

    components = {}
    for k, B in zip(nodes, blocks):
        sides = [factors[(k, v)].toward_child if v == tree.parent[k] else factors[(v, k)].toward_parent
                 for v in tree.bonds(k)]
        components[k] = solve_core(sides, B, config.eps_ls, node=k, bonds=tree.bonds(k))
    report.timing["solve"] = time.perf_counter() - clock

    model = FtnModel(tree, components, bases, report=report)
    z = model.mass()
    if not z > 0:
        report.warn(f"Fitted model has non-positive mass {z}")
    logger.info(f"Fitted {model!r} with mass {z:.6g} in {report.timing['solve']:.2f}s")
    return model


def _edge_summary(f: EdgeFactors, target: int) -> dict:
    child, parent = f.edge
    return {"child": child, "parent": parent, "target_rank": target, "rank": f.rank,
            "spectrum": f.spectrum.tolist(), "cond_toward_child": float(np.linalg.cond(f.toward_child)),
            "cond_toward_parent": float(np.linalg.cond(f.toward_parent))}
