import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click

from . import __version__, service
from .config import settings
from .errors import DesignError, EmirError
from .evaluation import KINDS, render_accuracy_table
from .storage import store

logger = logging.getLogger(__name__)

_KIND = click.Choice(KINDS)
_TARGET = click.Choice(["ir", "em", "hotspot"])
_CLASS = click.Choice(["continuous", "discontinuous"])


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _seed_list(ctx, param, value: str) -> List[int]:
    try:
        seeds = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not seeds or any(s < 0 for s in seeds):
        raise click.BadParameter("need at least one non-negative seed")
    return seeds


def _kind_list(ctx, param, value: str) -> List[str]:
    kinds = [k.strip() for k in value.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in KINDS]
    if unknown or not kinds:
        raise click.BadParameter(f"must name some of {', '.join(KINDS)}")
    return kinds


@click.group()
@click.version_option(__version__, prog_name="emir")
@click.option("--log-level", default=lambda: settings.log_level, show_default="INFO",
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def cli(log_level: str):
    """Fast EM/IR hotspot screening: synthetic designs, golden sign-off, window models."""
    _configure_logging(log_level)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def generate(config_path: str, seed: int, out: str):
    """Generate a synthetic design from a generator config."""
    path = service.run_generate(store, config_path, seed, out)
    logger.info("wrote %s", path)


@cli.command()
@click.argument("design", type=click.Path(dir_okay=False))
def validate(design: str):
    """List every validation violation of a design; exit 1 if there is any."""
    violations = service.run_validate(store, design)
    for v in violations:
        click.echo(f"{v.code}: {v.message}")
    if violations:
        raise DesignError("INVALID_DESIGN", f"{len(violations)} violation(s)")
    click.echo("ok")


@cli.command()
@click.argument("design", type=click.Path(dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dump-voltages", is_flag=True, help="Store every node voltage in the golden result.")
def solve(design: str, out: str, dump_voltages: bool):
    """Golden DC sign-off: IR drop per cell and EM violations per wire."""
    golden = service.run_solve(store, design, out, dump_voltages)
    logger.info(
        "%d IR and %d EM violations, max drop %.6g V",
        len(golden.ir), len(golden.em), golden.meta.max_drop,
    )


@cli.command()
@click.argument("design", type=click.Path(dir_okay=False))
@click.argument("golden", type=click.Path(dir_okay=False))
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def extract(design: str, golden: str, outdir: str):
    """Write the continuous and discontinuous window datasets."""
    for window_class, path in service.run_extract(store, design, golden, outdir).items():
        logger.info("%s: %s", window_class, path)


@cli.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--test-fraction", type=float, default=lambda: settings.test_fraction, show_default="0.2")
@click.option("--seed", default=0, type=click.IntRange(min=0))
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def split(data: str, test_fraction: float, seed: int, outdir: str):
    """Stratified train/test split of one dataset file."""
    service.run_split(store, data, test_fraction, seed, outdir)


@cli.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--kind", required=True, type=_KIND)
@click.option("--target", required=True, type=_TARGET)
@click.option("--window-class", type=_CLASS, default=None, help="Defaults to the dataset header's class.")
@click.option("--seed", default=0, type=click.IntRange(min=0))
@click.option("--allow-degenerate", is_flag=True, help="Save a constant model instead of failing on single-class labels.")
@click.option("--k", type=int, default=None, help="knn: neighbours")
@click.option("--n-trees", type=int, default=None, help="forest: trees")
@click.option("--max-depth", type=int, default=None, help="forest: depth limit")
@click.option("--hidden", type=int, default=None, help="mlp: hidden units")
@click.option("--epochs", type=int, default=None, help="mlp: epochs")
@click.option("--learning-rate", type=float, default=None, help="mlp: Adam step")
@click.option("--batch-size", type=int, default=None, help="mlp: minibatch size")
@click.option("--pos-weight-scale", type=float, default=None, help="mlp: multiplier on N_neg/N_pos")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def train(data, kind, target, window_class, seed, allow_degenerate, out, **hyper):
    """Train one classifier on a dataset file."""
    allowed = {
        "knn": {"k"},
        "forest": {"n_trees", "max_depth"},
        "mlp": {"hidden", "epochs", "learning_rate", "batch_size", "pos_weight_scale"},
    }[kind]
    given = {k: v for k, v in hyper.items() if v is not None}
    stray = sorted(set(given) - allowed)
    if stray:
        flags = ", ".join("--" + s.replace("_", "-") for s in stray)
        raise click.UsageError(f"{flags} do(es) not apply to --kind {kind}")
    path = service.run_train(store, data, kind, target, out, window_class, seed, allow_degenerate, given)
    logger.info("wrote %s", path)


@cli.command()
@click.argument("model", type=click.Path(dir_okay=False))
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def predict(model: str, data: str, out: str):
    """Label every row of a dataset file with a trained model."""
    service.run_predict(store, model, data, out)


@cli.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@click.option("--text", is_flag=True, help="Also write the rendered table next to the JSON report.")
def evaluate(files: Sequence[str], out: str, text: bool):
    """Score prediction files against the dataset files they were made from."""
    report, _ = service.run_evaluate(store, files, out, text)
    if text:
        color = not settings.color_disabled and sys.stdout.isatty()
        click.echo(render_accuracy_table(report, color=color), nl=False)


@cli.command()
@click.argument("data_dir", type=click.Path(file_okay=False))
@click.option("--seeds", default="0", callback=_seed_list, help="Comma-separated training seeds.")
@click.option("--split-seed", default=0, type=click.IntRange(min=0))
@click.option("--test-fraction", type=float, default=lambda: settings.test_fraction, show_default="0.2")
@click.option("--kinds", default=",".join(KINDS), show_default=True, callback=_kind_list, help="Comma-separated model kinds.")
@click.option("--best-out", type=click.Path(dir_okay=False), help="Also write the chosen kind per window class here.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def compare(data_dir: str, seeds: List[int], split_seed: int, test_fraction: float, kinds: List[str],
            best_out: Optional[str], out: str):
    """Train and score knn, forest and mlp on every (class, target) cell."""
    report = service.run_compare(store, data_dir, seeds, out, split_seed, test_fraction, kinds=kinds, best_out=best_out)
    for slot, ranking in report.rankings.items():
        click.echo(f"{slot}: {' > '.join(ranking) if ranking else 'DEGENERATE'}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, exists=True))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("-o", "--run-dir", required=True, type=click.Path(file_okay=False))
@click.option("--split-seed", default=0, type=click.IntRange(min=0))
@click.option("--test-fraction", type=float, default=lambda: settings.test_fraction, show_default="0.2")
@click.option("--kinds", default=",".join(KINDS), show_default=True, callback=_kind_list, help="Comma-separated model kinds.")
def pipeline(config_path: str, seed: int, run_dir: str, split_seed: int, test_fraction: float, kinds: List[str]):
    """Run generate through evaluate inside RUN_DIR and write manifest.json."""
    config_text = store.read_text(config_path)
    manifest = service.Pipeline(
        Path(run_dir), seed, split_seed=split_seed, test_fraction=test_fraction, kinds=kinds,
    ).run(config_text)
    click.echo(f"{len(manifest.steps)} steps, best models: "
               + ", ".join(f"{c}={k}" for c, k in manifest.best_models.items()))


@cli.command()
@click.argument("design", type=click.Path(dir_okay=False))
@click.option("--models", "models_dir", required=True, type=click.Path(file_okay=False))
@click.option("--kind", type=_KIND, default=None, help="Defaults to MODELS/best.json.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def scan(design: str, models_dir: str, kind: Optional[str], out: str):
    """Flag hotspot windows of a new design without solving it."""
    report = service.run_scan(store, design, models_dir, out, kind)
    click.echo(f"{len(report.flagged)} flagged of {report.windows} windows")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit status: 0 ok, 1 failure, 2 usage."""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="emir", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except EmirError as e:
        click.echo(f"error: {e.code}: {e.detail}", err=True)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    return 0


def main() -> None:
    sys.exit(run())
