"""
Discrete wavelet multiresolution transforms with periodic extension.

Coordinates produced here are always laid out in the canonical flattening: ``c[1,-1]`` first, then
level ``l = 0, 1, ...`` with ``k`` ascending inside each level. The flat position of ``c[k,l]`` is
``0`` for ``l = -1`` and ``2**l + k - 1`` otherwise. 2D fields are indexed ``field[j, i]`` so that the
row-major flattening of a lattice runs with ``i`` fastest.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from functools import cached_property, lru_cache

import numpy as np
import pywt

from fhtw_lite.errors import RejectedInputError

MAX_DENSE_DIM = 4096

# pywt names of the supported filter banks
_PYWT_NAMES = {"haar": "haar", "d4": "db2"}


class DimensionKind(str, Enum):
    LINE_1D = "line1d"
    GRID_2D = "grid2d"


@dataclass(frozen=True)
class WaveletFilter:
    """Orthonormal two-channel filter bank.

    Attributes:
        name (str): ``"haar"`` or ``"d4"``.
        lowpass (tuple[float, ...]): Scaling taps ``h``.
        highpass (tuple[float, ...]): Wavelet taps ``g_t = (-1)**t h_{T-1-t}``.
    """
    name: str
    lowpass: tuple
    highpass: tuple

    def __post_init__(self):
        for taps in (self.lowpass, self.highpass):
            assert abs(np.sum(np.square(taps)) - 1.0) < 1e-12, f"{self.name} taps are not unit norm"

    @classmethod
    def from_name(cls, name: str) -> WaveletFilter:
        key = name.lower()
        if key not in _PYWT_NAMES:
            raise RejectedInputError(f"Unknown wavelet filter '{name}', choose from {sorted(_PYWT_NAMES)}")
        # pywt reconstruction filters are h itself and its alternating-sign reversal
        w = pywt.Wavelet(_PYWT_NAMES[key])
        return cls(key, tuple(float(v) for v in w.rec_lo), tuple(float(v) for v in w.rec_hi))

    def __len__(self):
        return len(self.lowpass)


@lru_cache(maxsize=64)
def _step_matrix(n: int, filt: WaveletFilter) -> np.ndarray:
    # rows [0, n/2) are lowpass outputs, rows [n/2, n) highpass; tap t hits index (2j + t) mod n
    half = n // 2
    step = np.zeros((n, n))
    cols = (2 * np.arange(half)[:, None] + np.arange(len(filt))[None, :]) % n
    rows = np.repeat(np.arange(half), len(filt))
    np.add.at(step, (rows, cols.ravel()), np.tile(filt.lowpass, half))
    np.add.at(step, (rows + half, cols.ravel()), np.tile(filt.highpass, half))
    step.setflags(write=False)
    return step


def step_matrix(n: int, filt: WaveletFilter) -> np.ndarray:
    """Orthogonal ``n x n`` matrix of one analysis step (approx rows on top)."""
    if n < 2 or n % 2:
        raise RejectedInputError(f"A wavelet step needs an even length >= 2, got {n}")
    return _step_matrix(n, filt)


def dwt_step(signal: np.ndarray, filt: WaveletFilter) -> tuple[np.ndarray, np.ndarray]:
    """One periodic analysis step along the last axis.

    Args:
        signal: Array whose last axis has even length.
        filt: Filter bank.

    Returns:
        tuple: ``(approx, detail)``, each with half the length of the last axis.
    """
    signal = np.asarray(signal, dtype=float)
    n = signal.shape[-1]
    out = signal @ step_matrix(n, filt).T
    return out[..., :n // 2], out[..., n // 2:]


def interleave_bits(i0: int, j0: int, q: int) -> int:
    """Interleave the ``q``-bit expansions of ``i0`` and ``j0`` as ``a1 b1 a2 b2 ... aq bq``."""
    k = 0
    for b in range(q):
        k |= ((i0 >> b) & 1) << (2 * b + 1)
        k |= ((j0 >> b) & 1) << (2 * b)
    return k


def label_index(k: int, l: int) -> int:
    """Flat canonical position of ``c[k,l]`` (``k`` is 1-based)."""
    return 0 if l == -1 else 2 ** l + k - 1


@dataclass(frozen=True)
class WaveletPlan:
    """
    A multiresolution transform of a dyadic 1D signal or 2D field.

    Attributes:
        filter (WaveletFilter): The filter bank.
        kind (DimensionKind): 1D line or 2D grid.
        L (int): Number of coarse-graining stages; ``d = 2**L`` (1D) or ``4**L`` (2D).
    """
    filter: WaveletFilter
    kind: DimensionKind
    L: int
    _identity: bool = dc_field(default=False, repr=False)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise RejectedInputError(f"Wavelet plan needs L >= 1, got {self.L}")
        object.__setattr__(self, "kind", DimensionKind(self.kind))

    @classmethod
    def create(cls, filter_name: str, kind: str | DimensionKind, L: int) -> WaveletPlan:
        return cls(WaveletFilter.from_name(filter_name), DimensionKind(kind), L)

    @classmethod
    def for_dimension(cls, filter_name: str, kind: str | DimensionKind, d: int) -> WaveletPlan:
        """Plan for ``d`` lattice variables; rejects non-dyadic sizes."""
        kind = DimensionKind(kind)
        levels = int(round(np.log2(d))) if d > 0 else -1
        if d < 2 or 2 ** levels != d or (kind is DimensionKind.GRID_2D and levels % 2):
            raise RejectedInputError(f"{d} variables is not a valid {kind.value} dyadic size")
        return cls.create(filter_name, kind, levels if kind is DimensionKind.LINE_1D else levels // 2)

    @classmethod
    def identity(cls, d: int) -> WaveletPlan:
        """Test hook: a plan whose transform is the identity on ``d = 2**L`` variables."""
        return cls(WaveletFilter.from_name("haar"), DimensionKind.LINE_1D, int(np.log2(d)), _identity=True)

    @property
    def levels(self) -> int:
        """Number of detail levels ``Lambda`` (``L`` in 1D, ``2L`` in 2D)."""
        return self.L if self.kind is DimensionKind.LINE_1D else 2 * self.L

    @property
    def m(self) -> int:
        """Grid side (2D) or signal length (1D)."""
        return 2 ** self.L

    @property
    def d(self) -> int:
        return 2 ** self.levels

    @cached_property
    def labels(self) -> list[tuple[int, int]]:
        """Multiscale labels ``(k, l)`` in canonical flattening order."""
        return [(1, -1)] + [(k, l) for l in range(self.levels) for k in range(1, 2 ** l + 1)]

    @cached_property
    def label_to_index(self) -> dict[tuple[int, int], int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def column_names(self) -> list[str]:
        return [f"c[{k},{l}]" for k, l in self.labels]

    def lattice_names(self) -> list[str]:
        return [f"x_{i + 1}" for i in range(self.d)]

    def describe(self) -> dict:
        return {"filter": self.filter.name, "kind": self.kind.value, "L": self.L, "d": self.d,
                "flattening": "level-major, k ascending, c[1,-1] first"}

    @cached_property
    def _subband_slots(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        # per stage s: flat positions of lh, hl, hh for subband entries in row-major [j0, i0] order
        slots = []
        for s in range(self.L):
            side = 2 ** s
            k0 = np.array([interleave_bits(i0, j0, s) for j0 in range(side) for i0 in range(side)])
            slots.append((2 ** (2 * s) + k0, 2 ** (2 * s + 1) + 2 * k0, 2 ** (2 * s + 1) + 2 * k0 + 1))
        return slots


def _check_plan(plan: WaveletPlan, kind: DimensionKind):
    if plan.kind is not kind:
        raise RejectedInputError(f"Plan is {plan.kind.value}, expected {kind.value}")


def multires_1d(plan: WaveletPlan, signal: np.ndarray) -> np.ndarray:
    """Full 1D multiresolution transform along the last axis (batched)."""
    _check_plan(plan, DimensionKind.LINE_1D)
    x = np.asarray(signal, dtype=float)
    if x.shape[-1] != plan.d:
        raise RejectedInputError(f"Signal length {x.shape[-1]} does not match 2**L = {plan.d}")
    if plan._identity:
        return x.copy()

    coords = np.empty_like(x)
    cur = x
    for q in range(plan.L, 0, -1):
        cur, detail = dwt_step(cur, plan.filter)
        coords[..., 2 ** (q - 1):2 ** q] = detail
    coords[..., 0] = cur[..., 0]
    return coords


def inverse_multires_1d(plan: WaveletPlan, coords: np.ndarray) -> np.ndarray:
    """Inverse of :func:`multires_1d` (transpose of the orthogonal map)."""
    _check_plan(plan, DimensionKind.LINE_1D)
    c = np.asarray(coords, dtype=float)
    if c.shape[-1] != plan.d:
        raise RejectedInputError(f"Coordinate length {c.shape[-1]} does not match {plan.d}")
    if plan._identity:
        return c.copy()

    cur = c[..., :1]
    for q in range(1, plan.L + 1):
        stacked = np.concatenate([cur, c[..., 2 ** (q - 1):2 ** q]], axis=-1)
        cur = stacked @ step_matrix(2 ** q, plan.filter)
    return cur


def multires_2d(plan: WaveletPlan, field: np.ndarray) -> np.ndarray:
    """Separable 2D multiresolution transform of ``m x m`` fields (batched on leading axes).

    Each stage filters along ``i`` (last axis) then along ``j`` and relabels the ``lh``, ``hl``,
    ``hh`` subbands onto levels ``2s`` and ``2s + 1`` by bit interleaving.
    """
    _check_plan(plan, DimensionKind.GRID_2D)
    f = np.asarray(field, dtype=float)
    if f.ndim < 2 or f.shape[-1] != f.shape[-2]:
        raise RejectedInputError(f"2D transform needs square fields, got shape {f.shape}")
    if f.shape[-1] != plan.m:
        raise RejectedInputError(f"Field side {f.shape[-1]} does not match 2**L = {plan.m}")

    batch = f.shape[:-2]
    coords = np.empty(batch + (plan.d,))
    cur = f
    for q in range(plan.L, 0, -1):
        n, h = 2 ** q, 2 ** (q - 1)
        t = step_matrix(n, plan.filter)
        r = t @ cur @ t.T
        lh_at, hl_at, hh_at = plan._subband_slots[q - 1]
        coords[..., lh_at] = r[..., h:, :h].reshape(batch + (-1,))
        coords[..., hl_at] = r[..., :h, h:].reshape(batch + (-1,))
        coords[..., hh_at] = r[..., h:, h:].reshape(batch + (-1,))
        cur = r[..., :h, :h]
    coords[..., 0] = cur[..., 0, 0]
    return coords


def inverse_multires_2d(plan: WaveletPlan, coords: np.ndarray) -> np.ndarray:
    """Inverse of :func:`multires_2d`, returning ``m x m`` fields."""
    _check_plan(plan, DimensionKind.GRID_2D)
    c = np.asarray(coords, dtype=float)
    if c.shape[-1] != plan.d:
        raise RejectedInputError(f"Coordinate length {c.shape[-1]} does not match {plan.d}")

    batch = c.shape[:-1]
    cur = c[..., :1].reshape(batch + (1, 1))
    for s in range(plan.L):
        h = 2 ** s
        lh_at, hl_at, hh_at = plan._subband_slots[s]
        r = np.empty(batch + (2 * h, 2 * h))
        r[..., :h, :h] = cur
        r[..., h:, :h] = c[..., lh_at].reshape(batch + (h, h))
        r[..., :h, h:] = c[..., hl_at].reshape(batch + (h, h))
        r[..., h:, h:] = c[..., hh_at].reshape(batch + (h, h))
        t = step_matrix(2 * h, plan.filter)
        cur = t.T @ r @ t
    return cur


def transform_samples(plan: WaveletPlan, samples: np.ndarray) -> np.ndarray:
    """Row-wise forward transform of an ``N x d`` matrix (2D rows are row-major lattices)."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[1] != plan.d:
        raise RejectedInputError(f"Samples have {x.shape[1]} columns, plan expects {plan.d}")
    if plan.kind is DimensionKind.LINE_1D:
        return multires_1d(plan, x)
    return multires_2d(plan, x.reshape(-1, plan.m, plan.m))


def inverse_transform_samples(plan: WaveletPlan, coords: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(coords, dtype=float))
    if c.shape[1] != plan.d:
        raise RejectedInputError(f"Coordinates have {c.shape[1]} columns, plan expects {plan.d}")
    if plan.kind is DimensionKind.LINE_1D:
        return inverse_multires_1d(plan, c)
    return inverse_multires_2d(plan, c).reshape(-1, plan.d)


def transform_matrix(plan: WaveletPlan) -> np.ndarray:
    """Dense orthogonal ``W`` with ``coords = W @ x`` for flattened lattices ``x``."""
    if plan.d > MAX_DENSE_DIM:
        raise RejectedInputError(f"Dense transform limited to d <= {MAX_DENSE_DIM}, got {plan.d}")
    # row i of transform_samples(I) is W e_i
    return transform_samples(plan, np.eye(plan.d)).T
