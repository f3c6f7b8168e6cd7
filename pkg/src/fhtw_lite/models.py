"""
Lattice Gibbs measures used as ground truth.

* Ornstein–Uhlenbeck (OU): ``p(x) ~ exp(-x^T (I + K) x / 2)``, sampled exactly.
* Ginzburg–Landau (GL): ``p(x) ~ exp(-x^T K x / 2 - lam/2 sum (1 - x_i^2)^2)``, sampled with MALA.

``K`` is the weighted graph Laplacian of the periodic nearest-neighbour lattice. 2D sites ``(i, j)``
flatten to ``i + m * j`` (``i`` fastest), the same order as :func:`fhtw_lite.wavelet.multires_2d`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from loguru import logger

from fhtw_lite.config import McmcConfig
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.ftn import covariance_to_correlation
from fhtw_lite.wavelet import DimensionKind

ACCEPTANCE_RANGE = (0.2, 0.95)
Potential = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def ring_laplacian(n: int) -> sp.csr_matrix:
    """Laplacian of the ``n``-cycle over unordered neighbour pairs (one pair when ``n = 2``)."""
    if n < 2:
        raise RejectedInputError(f"A periodic lattice needs at least 2 sites, got {n}")
    pairs = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
    rows, cols = np.array(sorted(pairs)).T
    adjacency = sp.coo_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n))
    adjacency = (adjacency + adjacency.T).tocsr()
    return (sp.diags(np.asarray(adjacency.sum(axis=1)).ravel()) - adjacency).tocsr()


def lattice_laplacian(kind: DimensionKind, size: int, alpha: float = 0.0, alpha1: float = 0.0,
                      alpha2: float = 0.0) -> sp.csr_matrix:
    """Coupling matrix ``K`` with ``x^T K x = sum over neighbour pairs of alpha (x_a - x_b)^2``.

    Args:
        kind: 1D ring of ``size`` sites or 2D torus of ``size x size`` sites.
        size: ``d`` (1D) or ``m`` (2D).
        alpha: 1D coupling.
        alpha1: 2D coupling between ``(i, j)`` and ``(i + 1, j)``.
        alpha2: 2D coupling between ``(i, j)`` and ``(i, j + 1)``.
    """
    lap = ring_laplacian(size)
    if kind == DimensionKind.LINE_1D:
        return (alpha * lap).tocsr()
    eye = sp.identity(size, format="csr")
    return (alpha1 * sp.kron(eye, lap) + alpha2 * sp.kron(lap, eye)).tocsr()


@dataclass(frozen=True)
class OuSpec:
    """
    Ornstein–Uhlenbeck lattice with unit on-site term.

    Attributes:
        kind (DimensionKind): 1D ring or 2D torus.
        size (int): ``d`` for 1D, ``m`` for 2D.
        alpha (float): 1D coupling.
        alpha1 (float): 2D coupling along ``i``.
        alpha2 (float): 2D coupling along ``j``.
    """
    kind: DimensionKind
    size: int
    alpha: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if min(self.alpha, self.alpha1, self.alpha2) < 0:
            raise RejectedInputError("Couplings must be nonnegative")
        if self.size < 2:
            raise RejectedInputError(f"Lattice size must be >= 2, got {self.size}")

    @classmethod
    def line(cls, d: int, alpha: float) -> OuSpec:
        return cls(DimensionKind.LINE_1D, d, alpha=alpha)

    @classmethod
    def grid(cls, m: int, alpha1: float, alpha2: float) -> OuSpec:
        return cls(DimensionKind.GRID_2D, m, alpha1=alpha1, alpha2=alpha2)

    @property
    def d(self) -> int:
        return self.size if self.kind == DimensionKind.LINE_1D else self.size ** 2

    def coupling(self) -> sp.csr_matrix:
        return lattice_laplacian(self.kind, self.size, self.alpha, self.alpha1, self.alpha2)

    def correlation(self) -> np.ndarray:
        """Analytic correlation matrix (normalized inverse precision)."""
        return covariance_to_correlation(np.linalg.inv(ou_precision(self)))


@dataclass(frozen=True)
class GlSpec:
    """
    Ginzburg–Landau lattice.

    Attributes:
        kind (DimensionKind): 1D ring or 2D torus.
        size (int): ``d`` for 1D, ``m`` for 2D.
        lam (float): Double-well strength.
        alpha (float): 1D coupling.
        alpha1 (float): 2D coupling along ``i``.
        alpha2 (float): 2D coupling along ``j``.
    """
    kind: DimensionKind
    size: int
    lam: float
    alpha: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    _coupling: sp.csr_matrix = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise RejectedInputError(f"Double-well strength must be positive, got {self.lam}")
        if min(self.alpha, self.alpha1, self.alpha2) < 0:
            raise RejectedInputError("Couplings must be nonnegative")
        object.__setattr__(self, "_coupling",
                           lattice_laplacian(self.kind, self.size, self.alpha, self.alpha1, self.alpha2))

    @classmethod
    def line(cls, d: int, alpha: float, lam: float) -> GlSpec:
        return cls(DimensionKind.LINE_1D, d, lam, alpha=alpha)

    @classmethod
    def grid(cls, m: int, alpha1: float, alpha2: float, lam: float) -> GlSpec:
        return cls(DimensionKind.GRID_2D, m, lam, alpha1=alpha1, alpha2=alpha2)

    @property
    def d(self) -> int:
        return self.size if self.kind == DimensionKind.LINE_1D else self.size ** 2

    def coupling(self) -> sp.csr_matrix:
        return self._coupling


def ou_precision(spec: OuSpec) -> np.ndarray:
    """Dense precision ``I + K`` (the Hessian of the OU exponent)."""
    return np.eye(spec.d) + spec.coupling().toarray()


def sample_ou(spec: OuSpec, N: int, seed: int = 0) -> np.ndarray:
    """Exact draws: with ``Q = L L^T``, ``x`` solves ``L^T x = z`` for standard normal ``z``."""
    if N < 1:
        raise RejectedInputError(f"Need N >= 1 samples, got {N}")
    chol = scipy.linalg.cholesky(ou_precision(spec), lower=True)
    z = np.random.default_rng(seed).standard_normal((N, spec.d))
    logger.debug(f"Drawing {N} exact OU samples in d={spec.d}")
    return scipy.linalg.solve_triangular(chol, z.T, trans="T", lower=True).T


def gl_potential_and_gradient(spec: GlSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``V(x)`` and its gradient for one point ``(d,)`` or a batch ``(C, d)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise RejectedInputError(f"State of length {x.shape[-1]}, lattice has {spec.d} sites")
    kx = (spec.coupling() @ x.T).T
    well = 1.0 - x ** 2
    value = 0.5 * np.sum(x * kx, axis=-1) + 0.5 * spec.lam * np.sum(well ** 2, axis=-1)
    return value, kx - 2.0 * spec.lam * x * well


@dataclass
class McmcReport:
    """Acceptance and mixing diagnostics of one sampling run."""
    acceptance: float
    chain_acceptance: list
    step_sizes: list
    mode_occupancy: list
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"acceptance": self.acceptance, "chain_acceptance": self.chain_acceptance,
                "step_sizes": self.step_sizes, "mode_occupancy": self.mode_occupancy, "warnings": self.warnings}


def sample_mcmc(potential: Potential, d: int, N: int, config: McmcConfig | None = None,
                init: np.ndarray | None = None) -> tuple[np.ndarray, McmcReport]:
    """Metropolis-adjusted Langevin chains targeting ``exp(-V)``.

    Proposal ``y = x - tau grad V(x) + sqrt(2 tau) xi``. All chains advance together; each draws its
    noise from its own spawned generator. During burn-in ``log tau`` follows a Robbins–Monro update
    towards ``config.target_acceptance``; afterwards it is frozen.

    Args:
        potential: Maps a ``(C, d)`` batch to ``(V, grad V)``.
        d: Dimension.
        N: Number of returned samples.
        config: Sampler settings.
        init: ``(chains, d)`` starting states; by default half the chains start at ``+1`` and half at ``-1``.

    Returns:
        tuple: ``(samples, report)``; samples are chain-major, ``N x d``.
    """
    config = config or McmcConfig()
    if N < 1:
        raise RejectedInputError(f"Need N >= 1 samples, got {N}")
    chains = config.chains
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(chains)]

    if init is None:
        signs = np.where(np.arange(chains) < (chains + 1) // 2, 1.0, -1.0)
        init = signs[:, None] * np.ones((chains, d))
    x = np.array(init, dtype=float)
    assert x.shape == (chains, d), f"Initial states of shape {x.shape}, expected {(chains, d)}"

    log_tau = np.full(chains, np.log(config.step_size))
    v, g = potential(x)
    per_chain = -(-N // chains)
    kept = np.empty((chains, per_chain, d))
    accepted = np.zeros(chains)
    total = config.burn_in + per_chain * config.thinning

    for step in range(total):
        tau = np.exp(log_tau)[:, None]
        noise = np.stack([r.standard_normal(d) for r in rngs])
        y = x - tau * g + np.sqrt(2.0 * tau) * noise
        vy, gy = potential(y)
        forward = np.sum((y - x + tau * g) ** 2, axis=1)
        backward = np.sum((x - y + tau * gy) ** 2, axis=1)
        log_ratio = v - vy + (forward - backward) / (4.0 * tau[:, 0])
        u = np.log(np.stack([r.uniform() for r in rngs]))
        accept = u < log_ratio
        x[accept], v[accept], g[accept] = y[accept], vy[accept], gy[accept]

        if step < config.burn_in:
            if config.adapt:
                prob = np.exp(np.minimum(0.0, np.nan_to_num(log_ratio, nan=-np.inf)))
                log_tau = np.clip(log_tau + (prob - config.target_acceptance) / (step + 1) ** 0.6, -25.0, 5.0)
            continue
        accepted += accept
        t = step - config.burn_in
        if (t + 1) % config.thinning == 0:
            kept[:, t // config.thinning] = x

    chain_acceptance = accepted / (per_chain * config.thinning)
    occupancy = np.mean(np.mean(kept, axis=2) > 0, axis=1)
    report = McmcReport(float(np.mean(chain_acceptance)), chain_acceptance.tolist(),
                        np.exp(log_tau).tolist(), occupancy.tolist())
    lo, hi = ACCEPTANCE_RANGE
    if not lo <= report.acceptance <= hi:
        message = f"MALA acceptance {report.acceptance:.3f} outside [{lo}, {hi}]; consider another step size"
        logger.warning(message)
        report.warnings.append(message)
    logger.info(f"MALA: {chains} chains, acceptance {report.acceptance:.3f}")
    return kept.reshape(-1, d)[:N], report


def sample_gl_mcmc(spec: GlSpec, N: int, config: McmcConfig | None = None) -> tuple[np.ndarray, McmcReport]:
    """GL samples from :func:`sample_mcmc`."""
    return sample_mcmc(lambda x: gl_potential_and_gradient(spec, x), spec.d, N, config)
