"""Global settings shared by every command."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import typer

from services.config import PipelineConfig


@dataclass
class Settings:
    """Values of the top-level `--seed`, `--config` and `--out` options."""

    seed: int = 0
    config: PipelineConfig = field(default_factory=PipelineConfig)
    out: Path = Path(".")


def settings(ctx: typer.Context) -> Settings:
    """Return the settings stored by the top-level callback."""
    root = ctx.find_root()
    if not isinstance(root.obj, Settings):
        root.obj = Settings()
    return root.obj


def output_path(ctx: typer.Context, path: Optional[Path], default_name: str) -> Path:
    """Resolve a command's output: its own `--out`, else `default_name` under the global one."""
    if path is not None:
        return path
    out = settings(ctx).out
    out.mkdir(parents=True, exist_ok=True)
    return out / default_name
