"""Command-line entry point."""

import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import click

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DATASETS, LCE_MODES, POOLING_MODES, ModelConfig, load_settings, resolve_config
from .corpus import POLARITIES, class_counts, encode_all, load_split, prepare_dataset
from .errors import ConfigError, LcaError
from .evaluation import ABLATION_VARIANTS, evaluate, export_attention, predict_sentence, run_ablation, sigma_sweep
from .metrics import majority_accuracy
from .reporting import format_table, metrics_path, write_rows
from .training import train

DEFAULT_VARIANTS = ("full", "no_lce", "no_lcp", "no_cdm")
DEFAULT_SIGMAS = "0,0.2,0.4,0.6,0.8,1.0"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunSpec:
    """Fully resolved command: flags over config file over built-in defaults."""

    command: str
    config: ModelConfig
    dataset: Optional[str] = None
    data_dir: Path = Path("data")
    output_dir: Path = Path("runs")
    vectors: Optional[Path] = None
    checkpoint: Optional[Path] = None
    output: Optional[Path] = None
    variants: Tuple[str, ...] = ()
    sigmas: Tuple[float, ...] = ()
    sentence: Optional[str] = None
    target: Optional[str] = None
    log_level: str = "INFO"

    def describe(self) -> str:
        lines = [f"command: {self.command}", f"dataset: {self.dataset}", f"seed: {self.config.seed}"]
        for name in ("data_dir", "output_dir", "vectors", "checkpoint", "output"):
            lines.append(f"{name}: {getattr(self, name)}")
        if self.variants:
            lines.append(f"variants: {','.join(self.variants)}")
        if self.sigmas:
            lines.append(f"sigmas: {','.join(str(s) for s in self.sigmas)}")
        lines.extend(f"{key}: {value}" for key, value in self.config.to_dict().items())
        return "\n".join(lines)


# -- option parsing -----------------------------------------------------------


def _field_type(config_field: dataclasses.Field):
    if config_field.name == "sigma":
        return click.FloatRange(0.0, 1.0)
    if config_field.name == "alpha":
        return click.IntRange(min=0)
    if config_field.name == "lce_mode":
        return click.Choice(LCE_MODES)
    if config_field.name == "pooling":
        return click.Choice(POOLING_MODES)
    return {bool: click.BOOL, int: click.INT, float: click.FLOAT}.get(type(config_field.default), click.STRING)


def model_options(func: Callable) -> Callable:
    """One ``--<field>`` flag per ModelConfig field."""
    for config_field in reversed(dataclasses.fields(ModelConfig)):
        func = click.option(
            f"--{config_field.name}",
            config_field.name,
            type=_field_type(config_field),
            default=None,
            help=f"Override {config_field.name} (default {config_field.default}).",
        )(func)
    return func


def common_options(func: Callable) -> Callable:
    options = [
        click.option("--dataset", type=click.Choice(DATASETS), default=None),
        click.option("--config", "config_file", type=click.Path(path_type=Path), default=None,
                     help="Flat KEY=VALUE file with ModelConfig fields."),
        click.option("--data-dir", type=click.Path(path_type=Path), default=None,
                     help="Dataset root (env LCA_DATA_DIR)."),
        click.option("--output-dir", type=click.Path(path_type=Path), default=None,
                     help="Metric files directory (env LCA_OUTPUT_DIR)."),
        click.option("--vectors", type=click.Path(path_type=Path), default=None,
                     help="Pretrained word vectors (env LCA_VECTORS)."),
        click.option("--checkpoint", type=click.Path(path_type=Path), default=None),
        click.option("--output", type=click.Path(path_type=Path), default=None),
        click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), default=None),
    ]
    for option in reversed(options):
        func = option(func)
    return model_options(func)


def _parse_variants(ctx, param, value: Tuple[str, ...]) -> Tuple[str, ...]:
    names = [name.strip() for item in value for name in item.split(",") if name.strip()]
    for name in names:
        if name not in ABLATION_VARIANTS:
            raise click.BadParameter(f"{name!r} is not one of {', '.join(ABLATION_VARIANTS)}")
    return tuple(names) or DEFAULT_VARIANTS


def _parse_sigmas(ctx, param, value: str) -> Tuple[float, ...]:
    sigmas = []
    for item in value.split(","):
        try:
            sigma = float(item)
        except ValueError:
            raise click.BadParameter(f"{item!r} is not a number") from None
        if not 0.0 <= sigma <= 1.0:
            raise click.BadParameter(f"{item!r} is outside [0, 1]")
        sigmas.append(sigma)
    return tuple(sigmas)


def _build_spec(command: str, options: Dict, **extra) -> RunSpec:
    settings = load_settings()
    field_names = {f.name for f in dataclasses.fields(ModelConfig)}
    overrides = {name: options.pop(name) for name in list(options) if name in field_names}
    dataset = options.pop("dataset")
    try:
        config = resolve_config(dataset, options.pop("config_file"), overrides)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    if command in ("ingest", "train", "eval", "ablate", "sweep-sigma") and dataset is None:
        raise click.UsageError(f"{command} needs --dataset")
    if command in ("eval", "predict", "export-attention") and options["checkpoint"] is None:
        raise click.UsageError(f"{command} needs --checkpoint")
    return RunSpec(
        command=command,
        config=config,
        dataset=dataset,
        data_dir=options.pop("data_dir") or settings.data_dir,
        output_dir=options.pop("output_dir") or settings.output_dir,
        vectors=options.pop("vectors") or settings.vectors_path,
        checkpoint=options.pop("checkpoint"),
        output=options.pop("output"),
        log_level=options.pop("log_level") or settings.log_level,
        **extra,
    )


@click.group()
def cli():
    """Local context-aware MHSA network for targeted sentiment classification."""


@cli.command("ingest")
@common_options
def ingest_command(**options):
    """Parse both splits and print per-polarity counts."""
    return _build_spec("ingest", options)


@cli.command("train")
@common_options
def train_command(**options):
    """Train on a dataset and save a checkpoint."""
    return _build_spec("train", options)


@cli.command("eval")
@common_options
def eval_command(**options):
    """Evaluate a checkpoint on a dataset's test split."""
    return _build_spec("eval", options)


@cli.command("ablate")
@common_options
@click.option("--variants", multiple=True, callback=_parse_variants,
              help=f"Comma-separated subset of {', '.join(ABLATION_VARIANTS)}.")
def ablate_command(variants, **options):
    """Train each ablation variant with a shared seed."""
    return _build_spec("ablate", options, variants=variants)


@cli.command("sweep-sigma")
@common_options
@click.option("--sigmas", default=DEFAULT_SIGMAS, show_default=True, callback=_parse_sigmas)
def sweep_command(sigmas, **options):
    """Train once per sigma value."""
    return _build_spec("sweep-sigma", options, sigmas=sigmas)


@cli.command("predict")
@common_options
@click.option("--sentence", required=True)
@click.option("--target", required=True)
def predict_command(sentence, target, **options):
    """Predict polarity and LC-tags for one sentence/target."""
    return _build_spec("predict", options, sentence=sentence, target=target)


@cli.command("export-attention")
@common_options
@click.option("--sentence", required=True)
@click.option("--target", required=True)
def export_command(sentence, target, **options):
    """Write per-token attention scores for one sentence/target."""
    return _build_spec("export-attention", options, sentence=sentence, target=target)


def parse_args(argv: Optional[Sequence[str]] = None) -> RunSpec:
    """Resolve ``argv`` into a RunSpec; click usage errors propagate."""
    return cli.main(args=list(argv) if argv is not None else None, prog_name="lca-net", standalone_mode=False)


# -- command handlers ----------------------------------------------------------


def _output_file(spec: RunSpec, command: str) -> Path:
    return metrics_path(spec.output_dir, spec.dataset or "custom", command, spec.config.seed)


def _run_ingest(spec: RunSpec) -> None:
    rows = []
    for split in ("train", "test"):
        counts = class_counts(load_split(spec.dataset, split, spec.data_dir))
        rows.append({"dataset": spec.dataset, "split": split, **counts, "total": sum(counts.values())})
    click.echo(format_table(rows, ["dataset", "split", "positive", "negative", "neutral", "total"]))
    write_rows(rows, _output_file(spec, "ingest"))


def _run_train(spec: RunSpec) -> None:
    dataset = prepare_dataset(spec.config, spec.dataset, spec.data_dir, spec.vectors)
    checkpoint, report = train(spec.config, dataset.train, dataset.test, dataset.vocab, dataset.embeddings)
    path = spec.checkpoint or spec.output_dir / f"{spec.dataset}_{spec.config.seed}.ckpt"
    save_checkpoint(checkpoint, path)

    rows = [{**row, "reproduction": report.reproduction} for row in report.rows()]
    click.echo(format_table(rows))
    best = report.best
    click.echo(f"final epoch: acc {report.final.test_accuracy:.4f} / F1 {report.final.test_macro_f1:.4f}")
    click.echo(f"best epoch {best.epoch}: acc {best.test_accuracy:.4f} / F1 {best.test_macro_f1:.4f}")
    if not report.reproduction:
        click.echo("non-reproduction run: pretrained vectors were not available")
    write_rows(rows, _output_file(spec, "train"))
    click.echo(f"checkpoint: {path}")


def _run_eval(spec: RunSpec) -> None:
    checkpoint = load_checkpoint(spec.checkpoint)
    examples = load_split(spec.dataset, "test", spec.data_dir)
    test_set = encode_all(examples, checkpoint.vocab, checkpoint.config.pad_len)
    report = evaluate(checkpoint, test_set, alpha=spec.config.alpha)

    row = {"dataset": spec.dataset, **report.as_row(), "majority_accuracy": majority_accuracy(report.confusion)}
    click.echo(format_table([row], ["dataset", "accuracy", "macro_f1", "lc_tag_accuracy", "majority_accuracy"]))
    confusion = [
        {"gold": name, **{pred: int(count) for pred, count in zip(POLARITIES, line)}}
        for name, line in zip(POLARITIES, report.confusion)
    ]
    click.echo(format_table(confusion))
    write_rows([row], _output_file(spec, "eval"))


def _run_ablate(spec: RunSpec) -> None:
    dataset = prepare_dataset(spec.config, spec.dataset, spec.data_dir, spec.vectors)
    results = run_ablation(spec.config, dataset, spec.variants)
    rows = [
        {
            "variant": result.variant,
            "accuracy": result.metrics.accuracy,
            "macro_f1": result.metrics.macro_f1,
            "best_accuracy": result.report.best.test_accuracy,
            "best_macro_f1": result.report.best.test_macro_f1,
            "lc_tag_accuracy": result.metrics.lc_tag_accuracy,
        }
        for result in results
    ]
    click.echo(format_table(rows))
    write_rows(rows, _output_file(spec, "ablate"))


def _run_sweep(spec: RunSpec) -> None:
    dataset = prepare_dataset(spec.config, spec.dataset, spec.data_dir, spec.vectors)
    rows = [dataclasses.asdict(point) for point in sigma_sweep(spec.config, dataset, spec.sigmas)]
    click.echo(format_table(rows))
    write_rows(rows, _output_file(spec, "sweep-sigma"))


def _run_predict(spec: RunSpec) -> None:
    prediction = predict_sentence(load_checkpoint(spec.checkpoint), spec.sentence, spec.target)
    click.echo(f"polarity: {prediction.label}")
    rows = [
        {"token": token, "gold": int(gold), "pred": int(pred), "": "✓" if gold == pred else "×"}
        for token, gold, pred in zip(prediction.tokens, prediction.gold_tags, prediction.predicted_tags)
    ]
    click.echo(format_table(rows))
    write_rows(
        [{"token": row["token"], "gold": row["gold"], "pred": row["pred"], "polarity": prediction.label} for row in rows],
        _output_file(spec, "predict"),
    )


def _run_export(spec: RunSpec) -> None:
    path = spec.output or _output_file(spec, "export-attention")
    export_attention(load_checkpoint(spec.checkpoint), spec.sentence, spec.target, path)
    click.echo(f"attention scores: {path}")


HANDLERS = {
    "ingest": _run_ingest,
    "train": _run_train,
    "eval": _run_eval,
    "ablate": _run_ablate,
    "sweep-sigma": _run_sweep,
    "predict": _run_predict,
    "export-attention": _run_export,
}


def run(spec: RunSpec) -> int:
    """Dispatch a resolved command; returns the process exit status."""
    click.echo(spec.describe())
    try:
        HANDLERS[spec.command](spec)
    except LcaError as exc:
        logger.error(f"{spec.command} failed: {exc}")
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return 8
    except IndexError as exc:
        click.echo(f"error: {exc}", err=True)
        return 10
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        spec = parse_args(argv)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    if not isinstance(spec, RunSpec):
        # --help and friends
        return spec or 0
    logging.basicConfig(
        level=getattr(logging, spec.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
