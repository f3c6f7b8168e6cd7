import typer
from loguru import logger
from pathlib import Path
import rich
import numpy as np

from fhtw_lite.app.common import ConfigOption, guarded, parse_kind, plan_for, provenance
from fhtw_lite.config import ExperimentConfig, MODEL_KINDS, override
from fhtw_lite.models import GlSpec, OuSpec, sample_gl_mcmc, sample_ou
from fhtw_lite.utils import read_matrix, write_json, write_matrix
from fhtw_lite.wavelet import inverse_transform_samples, transform_samples

app = typer.Typer(add_completion=False)


def draw_samples(cfg: ExperimentConfig) -> tuple[np.ndarray, dict | None]:
    """Lattice samples for the configured model, plus the MCMC report for the GL models."""
    if cfg.model == "ou1d":
        return sample_ou(OuSpec.line(cfg.d, cfg.alpha), cfg.n_samples, cfg.seed), None
    if cfg.model == "ou2d":
        return sample_ou(OuSpec.grid(cfg.m, cfg.alpha1, cfg.alpha2), cfg.n_samples, cfg.seed), None
    spec = GlSpec.line(cfg.d, cfg.alpha, cfg.lam) if cfg.model == "gl1d" else \
        GlSpec.grid(cfg.m, cfg.alpha1, cfg.alpha2, cfg.lam)
    samples, report = sample_gl_mcmc(spec, cfg.n_samples, override(cfg.mcmc, seed=cfg.seed))
    return samples, report.to_dict()


@app.command(name="sample")
@guarded
def cmd_sample(
        config: Path = ConfigOption,
        model: str = typer.Option(None, "--model", help=f"One of {', '.join(MODEL_KINDS)}."),
        d: int = typer.Option(None, "--d", min=2, help="Sites of a 1D lattice."),
        m: int = typer.Option(None, "--m", min=2, help="Side of a 2D lattice."),
        alpha: float = typer.Option(None, "--alpha", min=0.0, help="1D coupling."),
        alpha1: float = typer.Option(None, "--alpha1", min=0.0, help="2D coupling along i."),
        alpha2: float = typer.Option(None, "--alpha2", min=0.0, help="2D coupling along j."),
        lam: float = typer.Option(None, "--lam", help="Double-well strength (GL models)."),
        n: int = typer.Option(None, "--n", min=1, help="Number of samples."),
        seed: int = typer.Option(None, "--seed", help="Sampler seed."),
        burn_in: int = typer.Option(None, "--burn-in", min=0, help="MCMC burn-in steps per chain."),
        thinning: int = typer.Option(None, "--thinning", min=1, help="Keep every n-th MCMC state."),
        chains: int = typer.Option(None, "--chains", min=1, help="Number of MCMC chains."),
        output: Path = typer.Option(None, "--output", "-o",
                                    help="Sample CSV to write (default: <config output>/samples.csv)."),
):
    """
    Draw lattice-model samples (x-coordinates) into a CSV with a JSON sidecar.
    """
    if model is not None and model not in MODEL_KINDS:
        raise typer.BadParameter(f"--model must be one of {MODEL_KINDS}")
    cfg = ExperimentConfig.load(config, model=model, d=d, m=m, alpha=alpha, alpha1=alpha1, alpha2=alpha2,
                                lam=lam, n_samples=n, seed=seed)
    cfg = cfg.with_overrides(mcmc=override(cfg.mcmc, burn_in=burn_in, thinning=thinning, chains=chains))
    output = output or Path(cfg.output) / "samples.csv"
    logger.info(f"Sampling {cfg.n_samples} states of {cfg.model} in d={cfg.dimension}")

    samples, mcmc = draw_samples(cfg)
    write_matrix(output, samples, [f"x_{i + 1}" for i in range(cfg.dimension)])
    sidecar = output.with_suffix(".json")
    write_json(sidecar, {**provenance(cfg.to_dict()), "seed": cfg.seed, "shape": list(samples.shape),
                         "mcmc": mcmc})

    rich.print(f"Wrote {samples.shape[0]} x {samples.shape[1]} samples to {output} (sidecar {sidecar})")
    if mcmc is not None:
        rich.print({"acceptance": mcmc["acceptance"], "warnings": mcmc["warnings"]})


@app.command(name="transform")
@guarded
def cmd_transform(
        input_csv: Path = typer.Argument(..., exists=True, file_okay=True, dir_okay=False,
                                         help="Sample CSV (one lattice configuration per row)."),
        output: Path = typer.Option(Path("coefficients.csv"), "--output", "-o", help="CSV to write."),
        wavelet: str = typer.Option("haar", "--wavelet", "-w", help="haar or d4."),
        kind: str = typer.Option("1d", "--kind", help="Lattice kind: 1d or 2d."),
        inverse: bool = typer.Option(False, "--inverse", help="Map wavelet coordinates back to the lattice."),
):
    """
    Apply the multiresolution wavelet transform (or its inverse) to every row of a CSV.
    """
    values, _ = read_matrix(input_csv)
    plan = plan_for(wavelet, parse_kind(kind), values.shape[1])
    logger.info(f"{'Inverse' if inverse else 'Forward'} {wavelet} transform of {values.shape[0]} rows")

    if inverse:
        write_matrix(output, inverse_transform_samples(plan, values), plan.lattice_names())
    else:
        write_matrix(output, transform_samples(plan, values), plan.column_names())
    sidecar = output.with_suffix(".json")
    write_json(sidecar, {**provenance({"input": str(input_csv), "wavelet": wavelet, "kind": kind,
                                       "inverse": inverse}),
                         "plan": plan.describe(), "shape": list(values.shape)})
    rich.print(f"Wrote {values.shape[0]} rows to {output} (sidecar {sidecar})")
