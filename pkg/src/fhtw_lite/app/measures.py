import typer
from loguru import logger
from pathlib import Path
import rich
import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde
from typing import List, Tuple

from fhtw_lite.app.common import ConfigOption, ThreadsOption, guarded, output_dir, parse_pair, provenance
from fhtw_lite.config import ExperimentConfig
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.ftn import (FtnModel, correlation_original, empirical_correlation, marginal_grid,
                           two_point_function)
from fhtw_lite.utils import read_matrix, write_frame, write_json
from fhtw_lite.wavelet import DimensionKind, WaveletPlan, transform_samples

app = typer.Typer(add_completion=False)

DEFAULT_PAIRS = {
    DimensionKind.LINE_1D: ["15,5:8,4", "15,5:9,4"],
    DimensionKind.GRID_2D: ["15,5:8,4", "2,2:1,1", "1,0:1,-1"],
}


def model_plan(model: FtnModel) -> WaveletPlan | None:
    """The wavelet plan a model was fitted under, from its metadata."""
    meta = model.metadata.get("wavelet")
    if not meta:
        return None
    return WaveletPlan.create(meta["filter"], meta["kind"], meta["L"])


def correlation_frame(model_corr: np.ndarray, empirical: np.ndarray | None) -> pd.DataFrame:
    """Long-form ``(i, j, model, empirical, difference)`` with 1-based sites."""
    d = model_corr.shape[0]
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    emp = empirical if empirical is not None else np.full_like(model_corr, np.nan)
    return pd.DataFrame({"i": ii.ravel() + 1, "j": jj.ravel() + 1, "model": model_corr.ravel(),
                         "empirical": emp.ravel(), "difference": (model_corr - emp).ravel()})


def two_point_frame(model_corr: np.ndarray, empirical: np.ndarray | None, m: int,
                    site: tuple[int, int]) -> pd.DataFrame:
    f_model = two_point_function(model_corr, m, site)
    f_emp = two_point_function(empirical, m, site) if empirical is not None else np.full_like(f_model, np.nan)
    jj, ii = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1), indexing="ij")
    return pd.DataFrame({"i": ii.ravel(), "j": jj.ravel(), "model": f_model.ravel(), "empirical": f_emp.ravel(),
                         "difference": (f_model - f_emp).ravel()})


def _normalized(values: np.ndarray, cell: float) -> np.ndarray:
    total = np.sum(values) * cell
    return values / total if total > 0 else values


def marginal_frame(model: FtnModel, variables: tuple[int, int], coords: np.ndarray | None,
                   bins: int) -> tuple[pd.DataFrame, float | None]:
    """Model marginal next to a kernel-density estimate, both normalized on the plotted rectangle.

    Returns:
        tuple: The frame and the grid L1 distance (``None`` without samples).
    """
    xx, yy, values = marginal_grid(model, variables, bins)
    cell = (xx[1, 0] - xx[0, 0]) * (yy[0, 1] - yy[0, 0])
    frame = pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "model": _normalized(values, cell).ravel()})
    if coords is None:
        return frame, None
    try:
        kde = gaussian_kde(coords[:, list(variables)].T)
    except np.linalg.LinAlgError:
        logger.warning(f"Samples of variables {variables} are degenerate; no kernel-density estimate")
        return frame, None
    frame["empirical"] = _normalized(kde(np.vstack([xx.ravel(), yy.ravel()])), cell)
    frame["difference"] = frame["model"] - frame["empirical"]
    return frame, float(np.sum(np.abs(frame["difference"])) * cell)


@app.command(name="eval")
@guarded
def cmd_eval(
        input_model: Path = typer.Argument(..., exists=True, file_okay=True, dir_okay=False,
                                           help="Model JSON written by 'fit'."),
        samples: Path = typer.Option(None, "--samples", "-s", exists=True, file_okay=True, dir_okay=False,
                                     help="Lattice sample CSV used as the ground truth."),
        config: Path = ConfigOption,
        pairs: List[str] = typer.Option(None, "--pair", "-p",
                                        help="Marginal pair 'k1,l1:k2,l2' (repeatable)."),
        site: Tuple[int, int] = typer.Option((4, 4), "--site", help="Two-point reference site (2D only)."),
        bins: int = typer.Option(50, "--bins", min=2, help="Marginal grid size per axis."),
        threads: int = ThreadsOption,
        output: Path = typer.Option(None, "--output", "-o", file_okay=False,
                                    help="Output directory (default: <config output>/eval)."),
):
    """
    Evaluate model observables (correlations, two-point function, marginals) next to the sample ground truth.
    """
    cfg = ExperimentConfig.load(config)
    logger.info(f"Evaluating {input_model}")
    model = FtnModel.from_json(input_model)
    plan = model_plan(model)
    output = output_dir(output or Path(cfg.output) / "eval")

    x = None
    if samples is not None:
        x, _ = read_matrix(samples)
        if x.shape[1] != model.d:
            raise typer.BadParameter(f"{samples} has {x.shape[1]} columns, the model has {model.d} variables")

    model_corr = correlation_original(model, plan, threads=threads)
    empirical = empirical_correlation(x) if x is not None else None
    written = [write_frame(output / "correlation.csv", correlation_frame(model_corr, empirical))]
    summary = {"max_abs_difference": None if empirical is None else float(np.max(np.abs(model_corr - empirical)))}

    if plan is not None and plan.kind is DimensionKind.GRID_2D:
        written.append(write_frame(output / "two_point.csv", two_point_frame(model_corr, empirical, plan.m, site)))

    if plan is not None:
        coords = transform_samples(plan, x) if x is not None else None
        summary["marginal_l1"] = {}
        for text in pairs or DEFAULT_PAIRS[plan.kind]:
            a, b = parse_pair(text)
            if a not in plan.label_to_index or b not in plan.label_to_index:
                logger.warning(f"Skipping marginal {text}: not a coordinate of this {plan.d}-variable model")
                continue
            variables = (plan.label_to_index[a], plan.label_to_index[b])
            frame, l1 = marginal_frame(model, variables, coords, bins)
            name = f"marginal_c{a[0]}_{a[1]}_c{b[0]}_{b[1]}.csv"
            written.append(write_frame(output / name, frame))
            summary["marginal_l1"][text] = l1
    elif pairs:
        raise RejectedInputError("Marginal pairs need a model fitted over wavelet coordinates")

    write_json(output / "eval_report.json", {**provenance({**cfg.to_dict(), "model": str(input_model),
                                                          "samples": str(samples), "site": list(site),
                                                          "bins": bins}),
                                             "outputs": [str(p) for p in written], "summary": summary})
    rich.print(summary)
