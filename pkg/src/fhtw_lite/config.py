"""
Typed configuration records.

Every record is a frozen dataclass that round-trips through plain dicts, so a whole experiment can be
described by one JSON file and partially overridden from the command line.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from loguru import logger

from fhtw_lite.basis import DEFAULT_MARGIN
from fhtw_lite.errors import RejectedInputError

MODEL_KINDS = ("ou1d", "ou2d", "gl1d", "gl2d")


def _from_dict(cls, d: dict | None):
    if d is None:
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise RejectedInputError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def override(record, **values):
    """Copy of ``record`` with every non-None value replaced."""
    given = {k: v for k, v in values.items() if v is not None}
    return dataclasses.replace(record, **given) if given else record


@dataclass(frozen=True)
class McmcConfig:
    """
    Settings of the Metropolis-adjusted Langevin sampler.

    Attributes:
        step_size (float): Initial step size ``tau``; tuned during burn-in when ``adapt`` is set.
        burn_in (int): Discarded steps per chain.
        thinning (int): Keep every ``thinning``-th state after burn-in.
        chains (int): Independent chains, started half in the ``+1`` well and half in the ``-1`` well.
        seed (int): Entropy for the per-chain generators.
        target_acceptance (float): Burn-in tuning target.
        adapt (bool): Tune the step size during burn-in.
    """
    step_size: float = 0.1
    burn_in: int = 10_000
    thinning: int = 10
    chains: int = 8
    seed: int = 0
    target_acceptance: float = 0.57
    adapt: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise RejectedInputError(f"MCMC step size must be positive, got {self.step_size}")
        if self.burn_in < 0 or self.thinning < 1:
            raise RejectedInputError(f"Need burn_in >= 0 and thinning >= 1, got {self.burn_in}, {self.thinning}")
        if self.chains < 1:
            raise RejectedInputError(f"Need at least one chain, got {self.chains}")
        if not 0 < self.target_acceptance < 1:
            raise RejectedInputError(f"Target acceptance must be in (0, 1), got {self.target_acceptance}")


@dataclass(frozen=True)
class SketchConfig:
    """
    Sketch-function parameters.

    Attributes:
        degree (int): Degree cap ``q_s`` per interface variable.
        interface_count (int): Interface variables per directed edge.
        sketch_size (int | None): ``r~``; ``None`` means twice the edge rank.
        seed (int): Entropy for the mixing matrices.
        identity (bool): Plain-basis sketches (no random mixing).
    """
    degree: int = 5
    interface_count: int = 4
    sketch_size: int | None = None
    seed: int = 0
    identity: bool = False


@dataclass(frozen=True)
class FitConfig:
    """
    Density-estimation parameters.

    Attributes:
        rank (int): Target bond size on every edge.
        rank_overrides (dict): ``{"child|parent": rank}`` exceptions to ``rank``.
        sketch (SketchConfig): Sketch parameters.
        eps_trunc (float): Relative singular-value cutoff when factoring edge moments.
        eps_ls (float): Relative pseudo-inverse cutoff when solving for components.
        root (str | None): Root node id; ``None`` keeps the tree's root.
    """
    rank: int = 3
    rank_overrides: dict = field(default_factory=dict)
    sketch: SketchConfig = field(default_factory=SketchConfig)
    eps_trunc: float = 1e-10
    eps_ls: float = 1e-10
    root: str | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise RejectedInputError(f"Rank must be >= 1, got {self.rank}")
        for name in ("eps_trunc", "eps_ls"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise RejectedInputError(f"{name} must be in (0, 1), got {value}")

    def overrides(self) -> dict[tuple[str, str], int]:
        return {tuple(k.split("|")): int(v) for k, v in self.rank_overrides.items()}

    @classmethod
    def from_dict(cls, d: dict | None) -> FitConfig:
        d = dict(d or {})
        d["sketch"] = _from_dict(SketchConfig, d.get("sketch"))
        return _from_dict(cls, d)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: lattice model, wavelet transform, basis, fit and output settings.

    Attributes:
        model (str): One of ``ou1d``, ``ou2d``, ``gl1d``, ``gl2d``.
        d (int): Sites of a 1D lattice (power of two).
        m (int): Side of a 2D lattice (power of two).
        alpha (float): 1D coupling.
        alpha1 (float): 2D coupling along ``i``.
        alpha2 (float): 2D coupling along ``j``.
        lam (float): Double-well strength of the GL models.
        n_samples (int): Number of samples ``N``.
        seed (int): Sampler seed.
        wavelet (str): ``haar`` or ``d4``.
        basis_size (int): Legendre functions per variable (maximal degree + 1).
        margin (float): Relative margin added to the inferred supports.
        fit (FitConfig): Estimator settings.
        mcmc (McmcConfig): Sampler settings for the GL models.
        output (str): Output directory.
    """
    model: str = "ou1d"
    d: int = 16
    m: int = 8
    alpha: float = 100.0
    alpha1: float = 20.0
    alpha2: float = 0.6
    lam: float = 1.0
    n_samples: int = 20_000
    seed: int = 0
    wavelet: str = "haar"
    basis_size: int = 12
    margin: float = DEFAULT_MARGIN
    fit: FitConfig = field(default_factory=FitConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    output: str = "."

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise RejectedInputError(f"Unknown model {self.model!r}, expected one of {MODEL_KINDS}")
        if self.n_samples < 1:
            raise RejectedInputError(f"Need at least one sample, got {self.n_samples}")
        side = self.m if self.is_2d else self.d
        if side < 2 or side & (side - 1):
            raise RejectedInputError(f"Lattice size {side} must be a power of two >= 2")

    @property
    def is_2d(self) -> bool:
        return self.model.endswith("2d")

    @property
    def dimension(self) -> int:
        return self.m * self.m if self.is_2d else self.d

    def with_overrides(self, **values) -> ExperimentConfig:
        return override(self, **values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        d["fit"] = FitConfig.from_dict(d.get("fit"))
        d["mcmc"] = _from_dict(McmcConfig, d.get("mcmc"))
        return _from_dict(cls, d)

    @classmethod
    def from_json(cls, path: Path | str) -> ExperimentConfig:
        logger.debug(f"Reading experiment config {path}")
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise RejectedInputError(f"{path} is not valid JSON: {e}") from e
        return cls.from_dict(payload)

    @classmethod
    def load(cls, path: Path | str | None, **overrides) -> ExperimentConfig:
        """Config from ``path`` (or defaults) with non-None ``overrides`` applied on top."""
        base = cls() if path is None else cls.from_json(path)
        return base.with_overrides(**overrides)
