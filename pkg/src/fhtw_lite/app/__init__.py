import sys

import typer
from loguru import logger

import fhtw_lite.app.fitting as fitting
import fhtw_lite.app.measures as measures
import fhtw_lite.app.ranks as ranks
import fhtw_lite.app.sampling as sampling

app = typer.Typer(add_completion=False,
                  help="Density estimation of lattice models with wavelet-based functional hierarchical tensors.")
app.add_typer(sampling.app)
app.add_typer(fitting.app)
app.add_typer(measures.app)
app.add_typer(ranks.app)


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug messages.")):
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")
