import typer
from pathlib import Path
from loguru import logger
import rich
from fhtw_lite.app import app
from fhtw_lite.app.common import parse_kind, provenance
from fhtw_lite.topology import build_tree_1d, build_tree_2d
from fhtw_lite.utils import write_json
from fhtw_lite.wavelet import DimensionKind


@app.command(name="describe-tree")
def describe_tree(kind: str = typer.Option("1d", "--kind", help="Lattice kind: 1d or 2d."),
                  levels: int = typer.Option(..., "--levels", "-L", min=1, help="Wavelet levels L (d = 2^L or 4^L)."),
                  output: Path = typer.Option(None, "--output", "-o", dir_okay=False,
                                              help="Also write the tree JSON to this file.")):
    """Prints the FHT-W tree (nodes, variables, edges) as JSON."""
    kind = parse_kind(kind)
    tree = build_tree_1d(levels) if kind is DimensionKind.LINE_1D else build_tree_2d(levels)
    logger.info(f"Tree with {len(tree)} nodes over {tree.d} variables")

    payload = tree.to_dict()
    rich.print_json(data=payload)
    if output is not None:
        write_json(output, {**provenance({"kind": kind.value, "levels": levels}), "tree": payload})


if __name__ == "__main__":
    app()
