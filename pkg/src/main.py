"""Main Typer application to assemble the CLI."""

import logging
import sys
from pathlib import Path
from typing import Annotated, Optional

import click
import typer
from rich.console import Console
from rich.logging import RichHandler

from commands import evaluate, perception, scene, verify
from commands.options import Settings
from services.config import load_config
from services.core import ContractError, FormatError

log = logging.getLogger(__name__)
console = Console(stderr=True)

app = typer.Typer(no_args_is_help=True)
app.command("generate")(scene.generate)
app.command("segment-visual")(perception.segment_visual)
app.command("skeletonize")(perception.skeletonize)
app.command("plan")(perception.plan)
app.command("simulate")(perception.simulate)
app.command("segment-tactile")(perception.segment_tactile)
app.command("fuse")(verify.fuse)
app.command("reconstruct")(verify.reconstruct)
app.command("evaluate")(evaluate.evaluate)
app.command("demo")(evaluate.demo)


@app.callback()
def enable_logs(
    ctx: typer.Context,
    verbose: bool = False,
    seed: Annotated[int, typer.Option(help="Seed for scenes, noise and touches.")] = 0,
    config: Annotated[
        Optional[Path], typer.Option(help="Pipeline configuration (YAML or JSON).")
    ] = None,
    out: Annotated[Path, typer.Option(help="Directory for default outputs.")] = Path("."),
):
    """Vision-guided active tactile crack detection and reconstruction."""
    if verbose:
        logging.basicConfig(level=logging.INFO, handlers=[RichHandler()])
    ctx.obj = Settings(seed=seed, config=load_config(config), out=out)


def run():
    """Console entry point: map contract errors to exit 2 and I/O errors to exit 3."""
    try:
        code = app(standalone_mode=False)
    except ContractError as e:
        console.print(f"[red]Error:[/red] {e}")
        sys.exit(2)
    except (FormatError, OSError) as e:
        console.print(f"[red]I/O error:[/red] {e}")
        sys.exit(3)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    run()
