"""CLI: export image embeddings to an EMB1 file."""

from __future__ import annotations

import sys

import click

from .encoders import EncoderError
from .export import ExportJob, export


@click.command(name="export")
@click.option("--model", "model_name", required=True,
              help="Encoder id: toy:rp-<dim>[-<seed>], torchvision:<name>, "
                   "timm:<name>, open_clip:<arch>:<tag>.")
@click.option("--images", "input_path", required=True, type=click.Path(),
              help="Directory with per-class subfolders, or an index CSV.")
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--batch", "batch_size", default=64, type=int, show_default=True)
@click.option("--device", default="cpu", show_default=True)
def cli(model_name, input_path, output_path, batch_size, device):
    """One feature row per image, sorted-path order, plus a JSON manifest."""
    job = ExportJob(model_name=model_name, input_path=input_path,
                    output_path=output_path, batch_size=batch_size,
                    device=device)
    out = export(job)
    click.echo(str(out))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except (EncoderError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
