"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad flags/arguments), 2 data error
(bad files, impossible requests).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import emb_io, pipeline, reports, synthetic, validators
from .data import SplitSpec, make_split
from .ensemble import (
    STRATEGIES,
    PseudoLabelSet,
    ThresholdPolicy,
    ensemble,
    pseudo_label,
    read_pseudo_label_file,
    write_pseudo_label_file,
)
from .errors import DataError, VpetError
from .heads import HeadConfig, TrainTargets, forward, load_head, save_head, train_head


@click.group(name="vpet")
def cli():
    """Semi-supervised training on pre-extracted embeddings."""


@cli.command("split")
@click.option("--in", "in_path", required=True, type=click.Path(), help="Source EMB1 file.")
@click.option("--shots", required=True, type=int, help="Labeled samples per class.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--validation-fraction", default=0.0, type=float, show_default=True)
@click.option("--test-fraction", default=0.0, type=float, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def split_cmd(in_path, shots, seed, validation_fraction, test_fraction, out_dir):
    """Carve labeled/unlabeled/validation/test EMB1 files from one source."""
    source = emb_io.read_embedding_file(in_path)
    spec = SplitSpec(shots_per_class=shots, seed=seed,
                     validation_fraction=validation_fraction,
                     test_fraction=test_fraction)
    split = make_split(source, spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name in ("labeled", "unlabeled", "validation", "test"):
        part = getattr(split, name)
        emb_io.write_embedding_file(part, out / f"{name}.emb")
        counts[name] = part.n
    manifest = {
        "source": str(in_path),
        "shots_per_class": shots,
        "seed": seed,
        "validation_fraction": validation_fraction,
        "test_fraction": test_fraction,
        "counts": counts,
    }
    (out / "split.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(" ".join(f"{k}={v}" for k, v in counts.items()))


@cli.command("train-head")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--arch", default="linear", type=click.Choice(["linear", "mlp"]),
              show_default=True)
@click.option("--hidden", default=256, type=int, show_default=True)
@click.option("--lr", default=0.01, type=float, show_default=True)
@click.option("--epochs", default=30, type=int, show_default=True)
@click.option("--batch-size", default=32, type=int, show_default=True)
@click.option("--weight-decay", default=5e-4, type=float, show_default=True)
@click.option("--warmup-fraction", default=0.025, type=float, show_default=True)
@click.option("--label-smoothing", default=0.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train_head_cmd(in_path, arch, hidden, lr, epochs, batch_size, weight_decay,
                   warmup_fraction, label_smoothing, seed, out_path):
    """Train a head on a labeled EMB1 file and save it as .head."""
    train = emb_io.read_embedding_file(in_path)
    if train.labels is None:
        raise DataError("training file has no labels")
    cfg = HeadConfig(architecture=arch, hidden_width=hidden, learning_rate=lr,
                     epochs=epochs, batch_size=batch_size,
                     weight_decay=weight_decay, warmup_fraction=warmup_fraction,
                     label_smoothing=label_smoothing, seed=seed)
    model = train_head(train, TrainTargets(hard=train.labels), cfg)
    save_head(model, out_path)
    click.echo(f"saved {out_path}")


@cli.command("pseudo-label")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--tau", default=0.0, type=float, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--outputs", "outputs_path", default=None, type=click.Path(),
              help="Also save the model's (features, logits) for ensembling.")
def pseudo_label_cmd(model_path, in_path, tau, out_path, outputs_path):
    """Pseudo-label an unlabeled EMB1 file with one trained head."""
    model = load_head(model_path)
    dataset = emb_io.read_embedding_file(in_path)
    outputs = forward(model, dataset)
    ids, onehot = pseudo_label(outputs, ThresholdPolicy(tau))
    pseudo = PseudoLabelSet(ids=ids, soft=onehot, source_count=1,
                            strategy="mean_labels")
    write_pseudo_label_file(pseudo, out_path)
    if outputs_path is not None:
        pipeline.write_outputs_file(outputs, outputs_path)
    click.echo(f"accepted={len(ids)} of {dataset.n}")


@cli.command("ensemble")
@click.option("--strategy", default="mean-labels",
              type=click.Choice(["mean-labels", "mean-logits", "mean-probs"]),
              show_default=True)
@click.option("--tau", default=0.0, type=float, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.argument("outputs_files", nargs=-1, required=True,
                type=click.Path())
def ensemble_cmd(strategy, tau, out_path, outputs_files):
    """Combine several saved model outputs into one pseudo-label file.

    With tau > 0 only samples accepted by every source are ensembled.
    """
    strategy = strategy.replace("-", "_")
    policy = ThresholdPolicy(tau)
    loaded = []
    for path in outputs_files:
        outputs = pipeline.read_outputs_file(path)
        ids, onehot = pseudo_label(outputs, policy)
        loaded.append((outputs, ids, onehot))

    common = set(int(i) for i in loaded[0][1])
    for _, ids, _ in loaded[1:]:
        common &= set(int(i) for i in ids)
    keep_ids = np.array([int(i) for i in loaded[0][1] if int(i) in common],
                        dtype=np.uint64)

    sources = []
    for outputs, ids, onehot in loaded:
        if strategy == "mean_labels":
            to_row = {int(i): r for r, i in enumerate(ids)}
            mat = onehot
        else:
            to_row = {int(i): r for r, i in enumerate(outputs.ids)}
            mat = outputs.logits
        rows = np.array([to_row[int(i)] for i in keep_ids], dtype=np.int64)
        sources.append((keep_ids, mat[rows]))
    pseudo = ensemble(strategy, sources)
    write_pseudo_label_file(pseudo, out_path)
    click.echo(f"sources={len(sources)} samples={len(pseudo.ids)}")


@cli.command("validate")
@click.option("--outputs", "outputs_path", required=True, type=click.Path(),
              help="outputs.emb file or a directory containing one.")
@click.option("--classes", required=True, type=int)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--rankme-epsilon", default=1e-7, type=float, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def validate_cmd(outputs_path, classes, seed, rankme_epsilon, out_path):
    """Score one model's outputs with all seven unsupervised criteria."""
    path = Path(outputs_path)
    if path.is_dir():
        path = path / "outputs.emb"
    outputs = pipeline.read_outputs_file(path)
    scores = validators.score_model(outputs, classes, seed=seed,
                                    rankme_epsilon=rankme_epsilon)
    if out_path is not None:
        validators.write_scores_csv(scores, out_path)
    else:
        validators.write_scores_csv(scores, sys.stdout)


@cli.command("select")
@click.option("--scores", "scores_path", required=True, type=click.Path(),
              help="CSV with config,criterion,score rows.")
@click.option("--out-dir", default=None, type=click.Path())
def select_cmd(scores_path, out_dir):
    """Aggregate criterion scores by average rank and pick a config."""
    panel = validators.read_scores_csv(scores_path)
    chosen = validators.select_config(panel)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        validators.write_panel_csv(panel, out / "panel.csv",
                                   out / "panel_summary.csv")
    click.echo(f"selected={panel.configs[chosen]}")


@cli.command("vpet")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", default=None, type=click.Path())
def vpet_cmd(config_path, out_dir):
    """Run the full pipeline from a JSON experiment config."""
    config = pipeline.ExperimentConfig.from_json_file(config_path)
    result = pipeline.run_vpet(config, out_dir=out_dir)
    click.echo(f"final_top1={result.final_top1}")


@cli.command("sweep-scaling")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--max-sources", required=True, type=int)
@click.option("--subsets", default=5, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def sweep_scaling_cmd(config_path, max_sources, subsets, out_path):
    """Measure final accuracy as the number of ensembled sources grows."""
    config = pipeline.ExperimentConfig.from_json_file(config_path)
    rows = pipeline.run_scaling_sweep(config, max_sources,
                                      subsets_per_size=subsets)
    pipeline.write_scaling_csv(rows, out_path)
    for r in rows:
        click.echo(f"size={r.size} mean_test_accuracy={r.mean_accuracy}")


@cli.command("report")
@click.option("--accuracies", "table_path", required=True, type=click.Path(),
              help="CSV: header row of method names, one row per setting.")
@click.option("--out-json", default=None, type=click.Path())
@click.option("--out-csv", default=None, type=click.Path())
def report_cmd(table_path, out_json, out_csv):
    """Rank-frequency report of methods across settings."""
    table, methods = reports.read_accuracy_table(table_path)
    report = reports.build_ranking_report(table, methods)
    reports.write_ranking_report(report, json_path=out_json, csv_path=out_csv)
    for name, rank in zip(report.methods, report.mean_rank):
        click.echo(f"{name} mean_rank={float(rank)}")


@cli.command("synth-views")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--views", default=4, type=int, show_default=True)
@click.option("--classes", default=8, type=int, show_default=True)
@click.option("--samples-per-class", default=628, type=int, show_default=True)
@click.option("--noise-sigma", default=0.5, type=float, show_default=True)
@click.option("--class-separation", default=1.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def synth_views_cmd(out_dir, views, classes, samples_per_class, noise_sigma,
                    class_separation, seed):
    """Generate the synthetic diverse-views benchmark files."""
    spec = synthetic.DiverseViewsSpec(
        classes=classes, n_views=views, samples_per_class=samples_per_class,
        noise_sigma=noise_sigma, class_separation=class_separation, seed=seed)
    paths = synthetic.write_diverse_views(spec, out_dir)
    for p in paths:
        click.echo(str(p))


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
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except (VpetError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
