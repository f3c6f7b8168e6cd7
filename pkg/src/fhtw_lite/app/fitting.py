import typer
from loguru import logger
from pathlib import Path
import rich

from fhtw_lite.app.common import (ConfigOption, ThreadsOption, guarded, output_dir, parse_kind, plan_for,
                                  provenance, tree_for)
from fhtw_lite.basis import infer_bases
from fhtw_lite.config import ExperimentConfig, override
from fhtw_lite.estimator import fit
from fhtw_lite.utils import read_matrix, write_json

app = typer.Typer(add_completion=False)


@app.command(name="fit")
@guarded
def cmd_fit(
        input_csv: Path = typer.Argument(..., exists=True, file_okay=True, dir_okay=False,
                                         help="Wavelet-coordinate CSV written by 'transform'."),
        config: Path = ConfigOption,
        kind: str = typer.Option(None, "--kind", help="Lattice kind: 1d or 2d (default: from the config model)."),
        wavelet: str = typer.Option(None, "--wavelet", "-w", help="Wavelet the coordinates were made with."),
        rank: int = typer.Option(None, "--rank", "-r", min=1, help="Target bond size on every edge."),
        sketch_size: int = typer.Option(None, "--sketch-size", min=1, help="Sketch size (default: twice the rank)."),
        degree: int = typer.Option(None, "--degree", min=1, help="Degree cap of the sketch features."),
        interface_count: int = typer.Option(None, "--interface-count", min=1, help="Interface variables per edge."),
        basis_size: int = typer.Option(None, "--basis-size", "-q", min=1, help="Legendre functions per variable."),
        margin: float = typer.Option(None, "--margin", min=0.0, help="Relative support margin."),
        seed: int = typer.Option(None, "--seed", help="Seed of the sketch mixing matrices."),
        identity_sketch: bool = typer.Option(None, "--identity-sketch/--mixed-sketch",
                                             help="Use unmixed basis sketches."),
        threads: int = ThreadsOption,
        output: Path = typer.Option(None, "--output", "-o", file_okay=False,
                                    help="Output directory (default: <config output>/fit)."),
):
    """
    Fit an FHT-W density to wavelet coordinates; writes model.json and fit_report.json.
    """
    cfg = ExperimentConfig.load(config, wavelet=wavelet, basis_size=basis_size, margin=margin)
    sketch = override(cfg.fit.sketch, degree=degree, interface_count=interface_count, sketch_size=sketch_size,
                      seed=seed, identity=identity_sketch)
    cfg = cfg.with_overrides(fit=override(cfg.fit, rank=rank, sketch=sketch))
    kind = kind or ("2d" if cfg.is_2d else "1d")

    coords, columns = read_matrix(input_csv)
    plan = plan_for(cfg.wavelet, parse_kind(kind), coords.shape[1])
    if columns != plan.column_names():
        logger.warning(f"{input_csv} headers do not look like wavelet coordinates; using column order as is")
    tree = tree_for(plan)
    logger.info(f"Fitting {coords.shape[0]} samples on {tree!r}")

    bases = infer_bases(coords, cfg.basis_size, cfg.margin)
    model = fit(coords, tree, bases, cfg.fit, threads=threads)
    model.metadata.update({"wavelet": plan.describe(), "source": str(input_csv)})

    output = output_dir(output or Path(cfg.output) / "fit")
    model.to_json(output / "model.json")
    payload = {**model.report.to_dict(), **provenance({**cfg.to_dict(), "kind": kind})}
    write_json(output / "fit_report.json", payload)

    rich.print({"model": str(output / "model.json"), "mass": model.normalization,
                "effective_ranks": model.report.effective_ranks(), "warnings": model.report.warnings})
