from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import legendre

from fhtw_lite.errors import RejectedInputError

DEFAULT_MARGIN = 0.1


@dataclass(frozen=True)
class Interval:
    """A bounded interval ``[lo, hi]`` supporting one variable."""
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise RejectedInputError(f"Interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise RejectedInputError(f"Interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


@dataclass(frozen=True)
class BasisSpec:
    """
    Orthonormal Legendre basis on an interval.

    Function ``i`` is the degree-``i`` Legendre polynomial mapped affinely onto ``interval`` and
    scaled to unit L2 norm, so for ``t = (x - mid) / h``::

        psi_i(x) = sqrt((2i + 1) / (2h)) * P_i(t)

    Attributes:
        interval (Interval): Support of the variable.
        size (int): Number of functions (maximal degree + 1).
    """
    interval: Interval
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise RejectedInputError(f"Basis size must be a positive integer, got {self.size}")

    @property
    def scales(self) -> np.ndarray:
        i = np.arange(self.size)
        return np.sqrt((2 * i + 1) / (2 * self.interval.half_width))

    def eval_many(self, x: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions at many points.

        Args:
            x: Array of finite evaluation points, any shape.

        Returns:
            np.ndarray: Array of shape ``x.shape + (size,)``.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise RejectedInputError("Basis evaluation needs finite points")
        t = (x - self.interval.mid) / self.interval.half_width
        # legvander runs the Bonnet three-term recurrence
        return legendre.legvander(t, self.size - 1) * self.scales

    def quadrature(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Gauss–Legendre nodes and weights on the interval (default ``2 * size`` nodes)."""
        t, w = legendre.leggauss(2 * self.size if nodes is None else nodes)
        h = self.interval.half_width
        return self.interval.mid + h * t, h * w

    def project(self, f: Callable[[np.ndarray], np.ndarray], nodes: int | None = None) -> np.ndarray:
        """Coefficients ``<f, psi_i>`` of a univariate function by quadrature."""
        x, w = self.quadrature(nodes if nodes is not None else max(2 * self.size, 200))
        return (w * f(x)) @ self.eval_many(x)

    def to_dict(self) -> dict:
        return {"lo": self.interval.lo, "hi": self.interval.hi, "size": self.size}

    @classmethod
    def from_dict(cls, d: dict) -> BasisSpec:
        return cls(Interval(float(d["lo"]), float(d["hi"])), int(d["size"]))


def build_legendre_basis(interval: Interval, size: int) -> BasisSpec:
    """Orthonormal Legendre basis of ``size`` functions on ``interval``."""
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    return BasisSpec(interval, size)


def eval_basis(spec: BasisSpec, x: float) -> np.ndarray:
    """Evaluation vector ``(psi_0(x), ..., psi_{size-1}(x))``."""
    if np.ndim(x) != 0:
        raise RejectedInputError("eval_basis takes a scalar point; use BasisSpec.eval_many for arrays")
    return spec.eval_many(np.asarray([x], dtype=float))[0]


def basis_moments(spec: BasisSpec, power: int) -> np.ndarray:
    """Integrals ``int x**power psi_i(x) dx`` over the interval for ``power`` in {0, 1, 2}."""
    if power not in (0, 1, 2):
        raise RejectedInputError(f"Only powers 0, 1, 2 are supported, got {power}")
    x, w = spec.quadrature(2 * spec.size + 2)
    return (w * x ** power) @ spec.eval_many(x)


def infer_support(column: np.ndarray, margin: float = DEFAULT_MARGIN) -> Interval:
    """Symmetric support ``[-a, a]`` with ``a = (1 + margin) * max|column|``."""
    column = np.asarray(column, dtype=float).ravel()
    if column.size == 0:
        raise RejectedInputError("Cannot infer a support from an empty column")
    if not np.all(np.isfinite(column)):
        raise RejectedInputError("Cannot infer a support from non-finite values")
    if margin < 0:
        raise RejectedInputError(f"Support margin must be nonnegative, got {margin}")
    a = (1.0 + margin) * np.max(np.abs(column))
    if a == 0.0:
        # a constant-zero column still needs a proper interval
        a = 1.0
    return Interval(-a, a)


def infer_bases(samples: np.ndarray, size: int, margin: float = DEFAULT_MARGIN) -> list[BasisSpec]:
    """One Legendre basis per column of ``samples`` on its inferred support."""
    return [build_legendre_basis(infer_support(samples[:, j], margin), size) for j in range(samples.shape[1])]
