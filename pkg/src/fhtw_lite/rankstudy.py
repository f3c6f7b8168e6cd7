"""
Numerical-rank diagnostics of lattice densities before and after the wavelet transform.

The rank of a density across a variable bipartition ``I | J`` is estimated from a sketched unfolding
``Z_IJ(b, g) = E[s_I,b(x_I) s_J,g(x_J)]`` whose features are univariate Legendre functions.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from loguru import logger

from fhtw_lite.basis import BasisSpec, Interval, build_legendre_basis, infer_bases
from fhtw_lite.config import McmcConfig
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.models import GlSpec, OuSpec, sample_gl_mcmc, sample_ou
from fhtw_lite.utils import CHUNK_SIZE, chunked_mean, write_frame, write_json
from fhtw_lite.wavelet import DimensionKind, WaveletPlan, label_index, transform_matrix, transform_samples

FEATURE_CAP = 4000
NOISE_FACTOR = 10.0


@dataclass(frozen=True)
class Bipartition:
    """Disjoint variable sets ``I`` and ``J``."""
    I: tuple
    J: tuple

    def __post_init__(self):
        if set(self.I) & set(self.J):
            raise RejectedInputError(f"Bipartition sides overlap on {sorted(set(self.I) & set(self.J))}")
        if not self.I or not self.J:
            raise RejectedInputError("Both sides of a bipartition must be nonempty")


@dataclass
class SketchFamily:
    """
    Univariate features of both sides of an unfolding.

    Attributes:
        bases (list[BasisSpec]): Basis of every variable.
        left (list[tuple[int, int]]): ``(variable, degree)`` features of ``I``; the constant is implicit.
        right (list[tuple[int, int]]): Features of ``J``.
        capped (bool): The feature cap removed some features.
    """
    bases: list
    left: list
    right: list
    capped: bool = False

    def __post_init__(self):
        for v, i in self.left + self.right:
            if not 0 <= v < len(self.bases):
                raise RejectedInputError(f"Feature variable {v} outside 0..{len(self.bases) - 1}")
            if not 1 <= i < self.bases[v].size:
                raise RejectedInputError(f"Feature degree {i} outside the basis of variable {v}")

    @property
    def shape(self) -> tuple[int, int]:
        return 1 + len(self.left), 1 + len(self.right)

    def swapped(self) -> SketchFamily:
        return SketchFamily(self.bases, self.right, self.left, self.capped)

    def evaluate(self, features: list[tuple[int, int]], rows: np.ndarray) -> np.ndarray:
        """Constant column followed by one column per feature."""
        out = np.empty((rows.shape[0], 1 + len(features)))
        out[:, 0] = 1.0
        cache = {}
        for col, (v, i) in enumerate(features, start=1):
            if v not in cache:
                cache[v] = self.bases[v].eval_many(rows[:, v])
            out[:, col] = cache[v][:, i]
        return out


def _features(variables: Sequence[int], q: int, cap: int | None = None) -> tuple[list[tuple[int, int]], bool]:
    # degree-major order so a binding cap trims the highest degrees first
    feats = [(v, i) for i in range(1, q + 1) for v in variables]
    if cap is not None and len(feats) + 1 > cap:
        logger.warning(f"Feature cap {cap} binds: keeping {cap - 1} of {len(feats)} features")
        return feats[:cap - 1], True
    return feats, False


def feature_family(bases: Sequence[BasisSpec], I: Sequence[int], J: Sequence[int], q: int,
                   cap: int | None = None) -> SketchFamily:
    """Family with ``psi_i(x_v)``, ``1 <= i <= q``, for every ``v`` in ``I`` (left) and ``J`` (right)."""
    left, cap_left = _features(sorted(set(I)), q, cap)
    right, cap_right = _features(sorted(set(J)), q, cap)
    return SketchFamily(list(bases), left, right, cap_left or cap_right)


def boundary_family_x_1d(bases: Sequence[BasisSpec], q: int) -> SketchFamily:
    """Sites ``{1, d/2}`` against ``{d/2 + 1, d}`` of a 1D ring (1-based)."""
    d = len(bases)
    return feature_family(bases, [0, d // 2 - 1], [d // 2, d - 1], q)


def boundary_family_c(bases: Sequence[BasisSpec], plan: WaveletPlan, q: int) -> SketchFamily:
    """Per level ``l >= 1``: ``c[k,l]`` for ``k in {1, 2**(l-1)}`` against ``k in {2**(l-1) + 1, 2**l}``.

    The coarsest coefficients ``c[1,0]`` and ``c[1,-1]`` join the right side.
    """
    I, J = [], [label_index(1, 0), label_index(1, -1)]
    for l in range(1, plan.levels):
        half = 2 ** (l - 1)
        I += [label_index(1, l), label_index(half, l)]
        J += [label_index(half + 1, l), label_index(2 ** l, l)]
    return feature_family(bases, I, J, q)


def grid_family_x_2d(bases: Sequence[BasisSpec], m: int, q: int) -> SketchFamily:
    """Columns ``i in {1, m/2}`` against ``i in {m/2 + 1, m}`` of an ``m x m`` grid, all rows ``j``."""
    site = lambda i, j: (i - 1) + m * (j - 1)
    I = [site(i, j) for j in range(1, m + 1) for i in (1, m // 2)]
    J = [site(i, j) for j in range(1, m + 1) for i in (m // 2 + 1, m)]
    return feature_family(bases, I, J, q)


def full_family_c(bases: Sequence[BasisSpec], plan: WaveletPlan, q: int, cap: int = FEATURE_CAP) -> SketchFamily:
    """All ``c[k,l]`` with ``k <= 2**(l-1)`` against the rest (including ``c[1,0]``, ``c[1,-1]``)."""
    part = wavelet_bipartition(plan)
    return feature_family(bases, part.I, part.J, q, cap)


def wavelet_bipartition(plan: WaveletPlan) -> Bipartition:
    I, J = [], [label_index(1, 0), label_index(1, -1)]
    for l in range(1, plan.levels):
        half = 2 ** (l - 1)
        I += [label_index(k, l) for k in range(1, half + 1)]
        J += [label_index(k, l) for k in range(half + 1, 2 ** l + 1)]
    return Bipartition(tuple(I), tuple(J))


def build_Z_IJ(samples: np.ndarray, family: SketchFamily, chunk_size: int = CHUNK_SIZE,
               threads: int | None = None) -> np.ndarray:
    """Empirical ``Z_IJ``: mean outer product of the two sides' feature vectors."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise RejectedInputError("Empty sample set")
    if samples.shape[1] != len(family.bases):
        raise RejectedInputError(f"Samples have {samples.shape[1]} columns, family has {len(family.bases)} bases")

    def chunk(rows: np.ndarray) -> np.ndarray:
        return family.evaluate(family.left, rows).T @ family.evaluate(family.right, rows)

    return chunked_mean(chunk, samples, chunk_size, threads)


def numerical_rank(M: np.ndarray, eps: float) -> tuple[int, np.ndarray]:
    """Number of singular values above ``eps * sigma_1``, and the spectrum scaled to sum to one."""
    return _rank(scipy.linalg.svdvals(np.atleast_2d(M)), eps)


def _rank(sigma: np.ndarray, eps: float) -> tuple[int, np.ndarray]:
    if not 0 < eps < 1:
        raise RejectedInputError(f"eps must be in (0, 1), got {eps}")
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0, np.zeros_like(sigma)
    return int(np.count_nonzero(sigma > eps * sigma[0])), sigma / sigma.sum()


def coeff_matrix_2d(density: Callable[[np.ndarray, np.ndarray], np.ndarray], bases: tuple[BasisSpec, BasisSpec],
                    nodes: int = 400) -> np.ndarray:
    """``D(i1, i2) = integral of p psi_i1 psi_i2`` by tensor-product Gauss–Legendre quadrature."""
    (x1, w1), (x2, w2) = bases[0].quadrature(nodes), bases[1].quadrature(nodes)
    values = density(*np.meshgrid(x1, x2, indexing="ij"))
    if not np.all(np.isfinite(values)):
        raise RejectedInputError("Density is not finite on the quadrature grid")
    return (bases[0].eval_many(x1) * w1[:, None]).T @ values @ (bases[1].eval_many(x2) * w2[:, None])


def bivariate_ou_density(alpha: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """``p(x1, x2) = exp(-x1^2/2 - x2^2/2 - alpha/2 (x1 - x2)^2)``."""
    return lambda x1, x2: np.exp(-0.5 * x1 ** 2 - 0.5 * x2 ** 2 - 0.5 * alpha * (x1 - x2) ** 2)


@dataclass
class SideResult:
    """Rank diagnostics of one coordinate system."""
    rank: int
    sigma: np.ndarray
    sigma_normalized: np.ndarray
    shape: tuple
    noise_dominated: int = 0
    capped: bool = False

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"index": np.arange(1, self.sigma.size + 1), "sigma": self.sigma,
                             "sigma_normalized": self.sigma_normalized})

    def summary(self) -> dict:
        return {"rank": self.rank, "shape": list(self.shape), "noise_dominated": self.noise_dominated,
                "capped": self.capped}


@dataclass
class CaseReport:
    case: int
    scale: str
    eps: float
    parameters: dict
    sides: dict = field(default_factory=dict)
    runtime: float = 0.0
    mcmc: dict | None = None

    def ranks(self) -> dict[str, int]:
        return {name: side.rank for name, side in self.sides.items()}

    def to_dict(self) -> dict:
        return {"case": self.case, "scale": self.scale, "eps": self.eps, "parameters": self.parameters,
                "sides": {name: side.summary() for name, side in self.sides.items()},
                "runtime": self.runtime, "mcmc": self.mcmc}


CASE_PRESETS = {
    1: {"full": {"alphas": (1.0, 10.0, 100.0), "box": 3.0, "size": 60, "nodes": 400}},
    2: {"full": {"model": "ou1d", "d": 128, "alpha": 1000.0, "n_samples": 1_000_000, "q_x": 50, "q_c": 30,
                  "wavelet": "d4", "x_box": 0.8},
        "desk": {"n_samples": 200_000}},
    3: {"full": {"model": "gl1d", "d": 128, "alpha": 250.0, "lam": 5.0, "n_samples": 500_000, "q_x": 50,
                  "q_c": 30, "wavelet": "d4"},
        "desk": {"n_samples": 100_000}},
    4: {"full": {"model": "ou2d", "m": 8, "alpha1": 200.0, "alpha2": 10.0, "n_samples": 500_000, "q_x": 50,
                  "q_c": 20, "wavelet": "d4"},
        "desk": {"n_samples": 100_000}},
    5: {"full": {"model": "gl2d", "m": 8, "alpha1": 20.0, "alpha2": 0.6, "lam": 1.0, "n_samples": 500_000,
                  "q_x": 50, "q_c": 20, "wavelet": "d4"},
        "desk": {"n_samples": 100_000}},
}


def case_parameters(case: int, scale: str = "full", **overrides) -> dict:
    """Preset parameters of a case study at ``full`` or ``desk`` scale, with overrides on top."""
    if case not in CASE_PRESETS:
        raise RejectedInputError(f"Unknown case study {case}, expected 1..5")
    if scale not in ("full", "desk"):
        raise RejectedInputError(f"Unknown scale {scale!r}, expected 'full' or 'desk'")
    params = dict(CASE_PRESETS[case]["full"])
    if scale == "desk":
        params.update(CASE_PRESETS[case].get("desk", {}))
    unknown = set(overrides) - set(params) - {"seed", "mcmc"}
    if unknown:
        raise RejectedInputError(f"Case {case} has no parameters {sorted(unknown)}")
    params.update({k: v for k, v in overrides.items() if v is not None})
    params.setdefault("seed", 0)
    return params


def _side(M: np.ndarray, eps: float, n_samples: int | None = None, capped: bool = False) -> SideResult:
    sigma = scipy.linalg.svdvals(M)
    rank, normalized = _rank(sigma, eps)
    noisy = int(np.count_nonzero(sigma < NOISE_FACTOR / np.sqrt(n_samples))) if n_samples else 0
    return SideResult(rank, sigma, normalized, M.shape, noisy, capped)


def _draw(params: dict, threads: int | None) -> tuple[np.ndarray, dict | None]:
    model = params["model"]
    n, seed = int(params["n_samples"]), int(params["seed"])
    if model == "ou1d":
        return sample_ou(OuSpec.line(params["d"], params["alpha"]), n, seed), None
    if model == "ou2d":
        return sample_ou(OuSpec.grid(params["m"], params["alpha1"], params["alpha2"]), n, seed), None
    mcmc = params.get("mcmc") or McmcConfig(seed=seed)
    spec = (GlSpec.line(params["d"], params["alpha"], params["lam"]) if model == "gl1d"
            else GlSpec.grid(params["m"], params["alpha1"], params["alpha2"], params["lam"]))
    samples, report = sample_gl_mcmc(spec, n, mcmc)
    return samples, report.to_dict()


def _lattice_bases(x: np.ndarray, params: dict) -> tuple[list[BasisSpec], str]:
    """Lattice-coordinate bases on the preset box ``[-x_box, x_box]`` when it holds every sample, else inferred."""
    size = params["q_x"] + 1
    box = params.get("x_box")
    if box is not None and np.max(np.abs(x)) <= box:
        return [build_legendre_basis(Interval(-box, box), size)] * x.shape[1], f"fixed [-{box:g}, {box:g}]"
    if box is not None:
        logger.warning(f"Samples leave [-{box:g}, {box:g}]; inferring the lattice-coordinate supports instead")
    return infer_bases(x, size), "inferred"


def _bivariate_case(params: dict, eps: float) -> dict[str, SideResult]:
    box = params["box"]
    basis = build_legendre_basis(Interval(-box, box), params["size"])
    haar = transform_matrix(WaveletPlan.create("haar", DimensionKind.LINE_1D, 1))
    sides = {}
    for alpha in params["alphas"]:
        p = bivariate_ou_density(alpha)

        def p_c(c0, c1, p=p):
            # x = W^T c
            return p(haar[0, 0] * c0 + haar[1, 0] * c1, haar[0, 1] * c0 + haar[1, 1] * c1)

        sides[f"x_alpha{alpha:g}"] = _side(coeff_matrix_2d(p, (basis, basis), params["nodes"]), eps)
        sides[f"c_alpha{alpha:g}"] = _side(coeff_matrix_2d(p_c, (basis, basis), params["nodes"]), eps)
    return sides


def case_study(case: int, scale: str = "full", eps: float = 0.01, threads: int | None = None,
               **overrides) -> CaseReport:
    """Rank study of one preset case for both lattice (``x``) and wavelet (``c``) coordinates.

    Args:
        case: 1 (bivariate quadrature), 2/3 (1D OU/GL), 4/5 (2D OU/GL).
        scale: ``full`` or ``desk`` presets.
        eps: Relative threshold of the numerical rank.
        threads: Worker threads for the moment estimates.
        **overrides: Any preset parameter (``n_samples``, ``alpha``, ``q_x``, ``wavelet``, ``seed``, ...).
    """
    params = case_parameters(case, scale, **overrides)
    clock = time.perf_counter()
    report = CaseReport(case, scale, eps, {k: v for k, v in params.items() if k != "mcmc"})
    logger.info(f"Case study {case} at {scale} scale")

    if case == 1:
        report.sides = _bivariate_case(params, eps)
        report.runtime = time.perf_counter() - clock
        return report

    x, report.mcmc = _draw(params, threads)
    is_2d = params["model"].endswith("2d")
    kind = DimensionKind.GRID_2D if is_2d else DimensionKind.LINE_1D
    plan = WaveletPlan.for_dimension(params["wavelet"], kind, x.shape[1])
    c = transform_samples(plan, x)
    n = x.shape[0]

    bases_x, report.parameters["x_support"] = _lattice_bases(x, params)
    bases_c = infer_bases(c, params["q_c"] + 1)
    if is_2d:
        family_x = grid_family_x_2d(bases_x, params["m"], params["q_x"])
        family_c = full_family_c(bases_c, plan, params["q_c"])
    else:
        family_x = boundary_family_x_1d(bases_x, params["q_x"])
        family_c = boundary_family_c(bases_c, plan, params["q_c"])

    report.sides["x"] = _side(build_Z_IJ(x, family_x, threads=threads), eps, n, family_x.capped)
    report.sides["c"] = _side(build_Z_IJ(c, family_c, threads=threads), eps, n, family_c.capped)
    report.runtime = time.perf_counter() - clock
    logger.info(f"Case {case}: rank(x) = {report.sides['x'].rank}, rank(c) = {report.sides['c'].rank}")
    return report


def write_case_report(report: CaseReport, output: Path | str, provenance: dict | None = None) -> list[Path]:
    """``spectrum_<side>.csv`` per coordinate system plus ``report.json`` (with ``provenance`` merged in)."""
    output = Path(output)
    written = [write_frame(output / f"spectrum_{name}.csv", side.frame()) for name, side in report.sides.items()]
    payload = report.to_dict()
    payload.update(provenance or {})
    written.append(write_json(output / "report.json", payload))
    return written
