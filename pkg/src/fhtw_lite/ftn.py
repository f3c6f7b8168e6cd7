"""
Functional tensor networks on trees.

A model represents ``p(x) = <D, Psi_1(x_1) x ... x Psi_d(x_d)>`` where the coefficient tensor ``D``
is the contraction of one component per tree node. ``D`` itself is never materialized except by
:meth:`FtnModel.to_dense` for tiny test problems.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger

from fhtw_lite.basis import BasisSpec, basis_moments
from fhtw_lite.errors import DegenerateModelError, RejectedInputError
from fhtw_lite.topology import TreeTopology
from fhtw_lite.utils import write_json
from fhtw_lite.wavelet import WaveletPlan, transform_matrix

MODEL_FORMAT = "fhtw-model/1"
GAUGE = "orthogonal factor on the child-to-parent sketch, singular values on the parent-to-child side"
MIN_MASS = 1e-300


@dataclass
class TensorComponent:
    """
    Dense tensor of one node.

    Attributes:
        node (str): Node id.
        bonds (tuple[str, ...]): Neighbour of each bond axis, in the tree's canonical leg order.
        physical (int | None): Size of the physical leg (external nodes) or None.
        data (np.ndarray): Axes ``[physical] + bonds``.
    """
    node: str
    bonds: tuple
    physical: int | None
    data: np.ndarray

    def __post_init__(self):
        expected = len(self.bonds) + (self.physical is not None)
        assert self.data.ndim == expected, f"{self.node}: {self.data.ndim} axes, expected {expected}"
        if self.physical is not None:
            assert self.data.shape[0] == self.physical, f"{self.node}: physical leg size mismatch"

    def bond_size(self, neighbour: str) -> int:
        return self.data.shape[self.bonds.index(neighbour) + (self.physical is not None)]


class FtnModel:
    """
    A tree-based functional tensor network.

    Attributes:
        tree (TreeTopology): The tree.
        components (dict[str, TensorComponent]): One component per node.
        bases (list[BasisSpec]): Basis of each variable (canonical order).
        normalization (float | None): Cached ``Z = integral of p``.
        report: Fit report attached by the estimator, if any.
        metadata (dict): Free-form provenance stored with the model (e.g. the wavelet used).
    """
    def __init__(self, tree: TreeTopology, components: dict[str, TensorComponent], bases: Sequence[BasisSpec],
                 normalization: float | None = None, report=None, metadata: dict | None = None):
        if len(bases) != tree.d:
            raise RejectedInputError(f"{len(bases)} bases for {tree.d} variables")
        for n in tree.nodes:
            comp = components[n]
            assert tuple(comp.bonds) == tuple(tree.bonds(n)), f"{n}: bonds do not follow the tree"
            if tree.is_external(n):
                assert comp.physical == bases[tree.variable(n)].size, f"{n}: physical size != basis size"
            else:
                assert comp.physical is None, f"Internal node {n} cannot carry a physical leg"
        for c, p in tree.edges:
            assert components[c].bond_size(p) == components[p].bond_size(c), f"Bond {c}-{p} sizes differ"

        self.tree = tree
        self.components = components
        self.bases = list(bases)
        self.normalization = normalization
        self.report = report
        self.metadata = dict(metadata or {})

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(d={self.d}, nodes={len(self.tree)}, max_rank={self.max_rank})"

    @property
    def d(self) -> int:
        return self.tree.d

    @property
    def max_rank(self) -> int:
        return max((self.components[c].bond_size(p) for c, p in self.tree.edges), default=0)

    def ranks(self) -> dict[tuple[str, str], int]:
        return {(c, p): self.components[c].bond_size(p) for c, p in self.tree.edges}

    def num_parameters(self) -> int:
        return int(sum(c.data.size for c in self.components.values()))

    @classmethod
    def random(cls, tree: TreeTopology, bases: Sequence[BasisSpec], rank: int, rng: np.random.Generator,
               nonnegative: bool = False) -> FtnModel:
        """Model with i.i.d. random components and uniform bond size ``rank``."""
        comps = {}
        for n in tree.nodes:
            bonds = tuple(tree.bonds(n))
            phys = bases[tree.variable(n)].size if tree.is_external(n) else None
            shape = ((phys,) if phys else ()) + (rank,) * len(bonds)
            data = rng.uniform(0.0, 1.0, shape) if nonnegative else rng.standard_normal(shape)
            comps[n] = TensorComponent(n, bonds, phys, data)
        return cls(tree, comps, bases)

    @classmethod
    def separable(cls, tree: TreeTopology, bases: Sequence[BasisSpec], factors: Sequence[np.ndarray]) -> FtnModel:
        """Rank-one model ``p(x) = prod_j f_j(x_j)`` from per-variable basis coefficients."""
        comps = {}
        for n in tree.nodes:
            bonds = tuple(tree.bonds(n))
            if tree.is_external(n):
                coef = np.asarray(factors[tree.variable(n)], dtype=float)
                data = coef.reshape((-1,) + (1,) * len(bonds))
                comps[n] = TensorComponent(n, bonds, coef.size, data)
            else:
                comps[n] = TensorComponent(n, bonds, None, np.ones((1,) * len(bonds)))
        return cls(tree, comps, bases)

    def contract(self, weights: Sequence[np.ndarray]) -> np.ndarray:
        """Batched ``<D, w_1 x ... x w_d>``.

        Args:
            weights: Per variable, an array of shape ``(B_j, n_j)`` or ``(n_j,)``; every ``B_j`` is
                either 1 or a common batch size ``B``.

        Returns:
            np.ndarray: Shape ``(B,)``.
        """
        if len(weights) != self.d:
            raise RejectedInputError(f"{len(weights)} weight vectors for {self.d} variables")
        weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in weights]
        for j, w in enumerate(weights):
            if w.shape[1] != self.bases[j].size:
                raise RejectedInputError(f"Weight {j} has length {w.shape[1]}, basis has {self.bases[j].size}")

        messages = {}
        for n in self.tree.postorder():
            comp = self.components[n]
            t = comp.data
            if comp.physical is not None:
                w = weights[self.tree.variable(n)]
                t = (w @ t.reshape(comp.physical, -1)).reshape((w.shape[0],) + t.shape[1:])
            else:
                t = t[None]
            # child bonds are the trailing axes
            bond_shape = list(t.shape[1:])
            for c in reversed(self.tree.children[n]):
                rc = bond_shape.pop()
                t = (t.reshape(t.shape[0], -1, rc) @ messages.pop(c)[:, :, None])[..., 0]
                t = t.reshape([t.shape[0]] + bond_shape)
            messages[n] = t.reshape(t.shape[0], -1) if self.tree.parent[n] is not None else t.reshape(-1)
        return messages[self.tree.root]

    def density(self, points: np.ndarray) -> np.ndarray:
        """Unnormalized model values at each row of ``points`` (N x d)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.d:
            raise RejectedInputError(f"Points have {points.shape[1]} coordinates, model has {self.d}")
        return self.contract([b.eval_many(points[:, j]) for j, b in enumerate(self.bases)])

    def moments(self, power: int) -> list[np.ndarray]:
        return [basis_moments(b, power) for b in self.bases]

    def mass(self) -> float:
        """``Z = integral of p`` over the support box (cached)."""
        if self.normalization is None:
            self.normalization = float(self.contract(self.moments(0))[0])
        return self.normalization

    def to_dense(self) -> np.ndarray:
        """Full coefficient tensor ``D`` (tiny problems only)."""
        total = int(np.prod([b.size for b in self.bases]))
        assert total <= 10 ** 7, f"Refusing to materialize {total} coefficients"
        letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
        bond_letter = {frozenset(e): next(letters) for e in self.tree.edges}
        phys_letter = [next(letters) for _ in range(self.d)]
        arrays, subs = [], []
        for n in self.tree.nodes:
            comp = self.components[n]
            sub = "".join(bond_letter[frozenset((n, b))] for b in comp.bonds)
            if comp.physical is not None:
                sub = phys_letter[self.tree.variable(n)] + sub
            arrays.append(comp.data)
            subs.append(sub)
        return np.einsum(f"{','.join(subs)}->{''.join(phys_letter)}", *arrays, optimize=True)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "gauge": GAUGE,
            "tree": self.tree.to_dict(),
            "bases": [b.to_dict() for b in self.bases],
            "normalization": self.normalization,
            "metadata": self.metadata,
            "components": {n: {"bonds": list(c.bonds), "physical": c.physical, "shape": list(c.data.shape),
                               "data": c.data.tolist()} for n, c in self.components.items()},
        }

    def to_json(self, path: Path | str) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> FtnModel:
        if d.get("format") != MODEL_FORMAT:
            raise RejectedInputError(f"Unsupported model format {d.get('format')!r}, expected {MODEL_FORMAT}")
        tree = TreeTopology.from_dict(d["tree"])
        comps = {n: TensorComponent(n, tuple(c["bonds"]), c["physical"],
                                    np.asarray(c["data"], dtype=float).reshape(c["shape"]))
                 for n, c in d["components"].items()}
        return cls(tree, comps, [BasisSpec.from_dict(b) for b in d["bases"]], d.get("normalization"),
                   metadata=d.get("metadata"))

    @classmethod
    def from_json(cls, path: Path | str) -> FtnModel:
        logger.debug(f"Loading model from {path}")
        return cls.from_dict(json.loads(Path(path).read_text()))


def eval_density(model: FtnModel, point: Sequence[float]) -> float:
    """Model value ``p(x)`` at one point."""
    point = np.asarray(point, dtype=float)
    if point.shape != (model.d,):
        raise RejectedInputError(f"Point of shape {point.shape}, model has {model.d} variables")
    return float(model.density(point[None])[0])


def integrate(model: FtnModel, weights: Sequence[np.ndarray]) -> float:
    """``<D, w_1 x ... x w_d>`` for one vector per variable."""
    for j, w in enumerate(weights):
        if np.ndim(w) != 1:
            raise RejectedInputError(f"Weight {j} must be a vector")
    return float(model.contract(weights)[0])


def _checked_mass(model: FtnModel) -> float:
    z = model.mass()
    if not np.isfinite(z) or abs(z) < MIN_MASS:
        raise DegenerateModelError(f"Model mass Z = {z} cannot be normalised")
    return z


def mean_and_second_moments(model: FtnModel, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """First and second moments of every variable under the normalized model.

    Returns:
        tuple: ``(mean, second)`` with ``second[j, k] = E[X_j X_k]``.
    """
    z = _checked_mass(model)
    d = model.d
    m0, m1, m2 = model.moments(0), model.moments(1), model.moments(2)
    eye = np.eye(d, dtype=bool)

    def batch(on: np.ndarray, square: np.ndarray | None = None) -> list[np.ndarray]:
        # row b of variable v uses m1 where on[b, v], m2 where square[b, v], m0 elsewhere
        out = []
        for v in range(d):
            w = np.where(on[:, v:v + 1], m1[v], m0[v])
            if square is not None:
                w = np.where(square[:, v:v + 1], m2[v], w)
            out.append(w)
        return out

    mean = model.contract(batch(eye)) / z

    def row(j: int) -> np.ndarray:
        on = eye | eye[j][None, :]
        square = np.zeros_like(eye)
        square[j, j] = True
        return model.contract(batch(on, square)) / z

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(d)))
    else:
        rows = [row(j) for j in range(d)]
    second = np.vstack(rows)
    return mean, 0.5 * (second + second.T)


def covariance_to_correlation(cov: np.ndarray) -> np.ndarray:
    var = np.diag(cov)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        bad = np.flatnonzero(~(var > 0))
        raise DegenerateModelError(f"Non-positive variance on coordinates {bad.tolist()}")
    scale = 1.0 / np.sqrt(var)
    corr = cov * scale[:, None] * scale[None, :]
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_original(model: FtnModel, plan: WaveletPlan | None, threads: int | None = None) -> np.ndarray:
    """Correlation matrix of the lattice variables ``x = W^T c`` implied by a model over ``c``.

    Args:
        model: Model fitted over canonically ordered wavelet coordinates.
        plan: The wavelet plan; ``None`` means the model is already over lattice variables.
        threads: Worker threads for the second-moment rows.
    """
    mean, second = mean_and_second_moments(model, threads=threads)
    cov_c = second - np.outer(mean, mean)
    if plan is None:
        return covariance_to_correlation(cov_c)
    if plan.d != model.d:
        raise RejectedInputError(f"Plan has {plan.d} variables, model has {model.d}")
    w = transform_matrix(plan)
    return covariance_to_correlation(w.T @ cov_c @ w)


def marginal_2d(model: FtnModel, variables: tuple[int, int], grid: np.ndarray) -> np.ndarray:
    """Two-variable marginal of the normalized model at each ``(a, b)`` row of ``grid``."""
    a, b = variables
    if a == b:
        raise RejectedInputError("Marginal variables must be distinct")
    for v in (a, b):
        if not 0 <= v < model.d:
            raise RejectedInputError(f"Variable {v} outside 0..{model.d - 1}")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    z = _checked_mass(model)

    weights = model.moments(0)
    weights[a] = model.bases[a].eval_many(grid[:, 0])
    weights[b] = model.bases[b].eval_many(grid[:, 1])
    return model.contract(weights) / z


def marginal_grid(model: FtnModel, variables: tuple[int, int], bins: int = 50,
                  scaled: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Marginal on a ``bins x bins`` cell-centred grid over the support rectangle.

    Returns:
        tuple: ``(xs, ys, values)``; with ``scaled`` the axes are mapped onto ``[-1, 1]``.
    """
    axes = []
    for v in variables:
        iv = model.bases[v].interval
        edges = np.linspace(iv.lo, iv.hi, bins + 1)
        axes.append(0.5 * (edges[1:] + edges[:-1]))
    xx, yy = np.meshgrid(*axes, indexing="ij")
    values = marginal_2d(model, variables, np.column_stack([xx.ravel(), yy.ravel()])).reshape(bins, bins)
    if scaled:
        halves = [model.bases[v].interval.half_width for v in variables]
        mids = [model.bases[v].interval.mid for v in variables]
        xx, yy = (xx - mids[0]) / halves[0], (yy - mids[1]) / halves[1]
        values = values * halves[0] * halves[1]
    return xx, yy, values


def empirical_correlation(samples: np.ndarray) -> np.ndarray:
    """Sample correlation matrix of the columns of ``samples``."""
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 2:
        raise RejectedInputError("Need at least two samples for a correlation")
    return covariance_to_correlation(np.cov(samples, rowvar=False))


def two_point_function(corr: np.ndarray, m: int, site: tuple[int, int] = (4, 4)) -> np.ndarray:
    """``f(i, j) = Corr(X_(i,j), X_site)`` on an ``m x m`` lattice, returned as ``f[j-1, i-1]``.

    Sites are 1-based ``(i, j)``; the lattice flattening runs with ``i`` fastest.
    """
    i, j = site
    if not (1 <= i <= m and 1 <= j <= m):
        raise RejectedInputError(f"Reference site {site} outside the {m} x {m} lattice")
    if corr.shape != (m * m, m * m):
        raise RejectedInputError(f"Correlation of shape {corr.shape} does not fit an {m} x {m} lattice")
    return corr[(i - 1) + m * (j - 1)].reshape(m, m)
