"""Shared pieces of the command-line sub-applications."""
import functools
from pathlib import Path

import typer
from loguru import logger

from fhtw_lite import __version__
from fhtw_lite.errors import DegenerateModelError, RejectedInputError
from fhtw_lite.topology import TreeTopology, build_tree_1d, build_tree_2d
from fhtw_lite.wavelet import DimensionKind, WaveletPlan

EXIT_DATA = 3
EXIT_DEGENERATE = 4

KIND_NAMES = {"1d": DimensionKind.LINE_1D, "2d": DimensionKind.GRID_2D}

ThreadsOption = typer.Option(None, "--threads", envvar="FHTW_THREADS", min=1, help="Cap on worker threads.")
ConfigOption = typer.Option(None, "--config", "-c", exists=True, file_okay=True, dir_okay=False,
                            help="Experiment config JSON; flags override its values.")


def guarded(command):
    """Map package errors onto exit codes: data errors 3, numerical degeneracy 4."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DegenerateModelError as e:
            logger.error(f"Numerical degeneracy: {e}")
            raise typer.Exit(EXIT_DEGENERATE)
        except (RejectedInputError, OSError) as e:
            logger.error(f"Data error: {e}")
            raise typer.Exit(EXIT_DATA)
    return wrapper


def parse_kind(kind: str) -> DimensionKind:
    if kind not in KIND_NAMES:
        raise typer.BadParameter(f"kind must be one of {sorted(KIND_NAMES)}, got {kind!r}")
    return KIND_NAMES[kind]


def plan_for(wavelet: str, kind: DimensionKind, d: int) -> WaveletPlan:
    """Wavelet plan for ``d`` columns; a size mismatch is a usage error."""
    try:
        return WaveletPlan.for_dimension(wavelet, kind, d)
    except RejectedInputError as e:
        raise typer.BadParameter(str(e))


def tree_for(plan: WaveletPlan) -> TreeTopology:
    return build_tree_1d(plan.L) if plan.kind is DimensionKind.LINE_1D else build_tree_2d(plan.L)


def provenance(config: dict) -> dict:
    return {"version": __version__, "config": config}


def parse_pair(text: str) -> tuple[tuple[int, int], tuple[int, int]]:
    """``"15,5:8,4"`` -> ``((15, 5), (8, 4))``."""
    try:
        a, b = (tuple(int(v) for v in side.split(",")) for side in text.split(":"))
        if len(a) != 2 or len(b) != 2:
            raise ValueError(text)
        return a, b
    except ValueError:
        raise typer.BadParameter(f"Marginal pair {text!r} must look like 'k1,l1:k2,l2'")


def output_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path
