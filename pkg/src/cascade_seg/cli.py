"""Cascade Seg CLI: generate phantoms, train, predict and evaluate."""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import structlog
import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .config import Settings, load_settings, write_resolved
from .data import (
    SPLITS,
    load_image_pgm,
    load_network,
    load_split,
    make_dataset,
    normalize_intensity,
    save_image_pgm,
    save_network,
    write_dataset,
)
from .metrics import (
    auc,
    evaluate_model,
    probability_histogram,
    restricted_roc,
    write_histogram_csv,
    write_report_csv,
    write_roc_csv,
)
from .models import Aggregation, Head, LossMode, MetricsReport, ModelKind
from .pipeline import one_step_predict, sequential_predict
from .training import (
    TrainingData,
    build_cascade_networks,
    build_one_step_network,
    train_one_step,
    train_sequential,
    write_epochs_csv,
)

app = typer.Typer(name="cascade-seg", help="Cascade Seg - liver and tumor segmentation on phantom CT slices")
console = Console()

PARTIAL_MARKER = "PARTIAL"
MODEL_FILES = {"A": "modelA.segc", "B": "modelB.segc", "C": "modelC.segc"}

CONFIG_OPTION = typer.Option(None, "--config", help="Run config file (key = value lines)")
VERBOSE_OPTION = typer.Option(False, "--verbose", help="Log progress events to stderr")


def configure_logging(verbose: bool) -> None:
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="%H:%M:%S"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(logging.INFO if verbose else logging.WARNING),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


@contextmanager
def output_guard(out_dir: Path) -> Iterator[None]:
    """Leave a PARTIAL marker in ``out_dir`` unless the body completes."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        marker = out_dir / PARTIAL_MARKER
        marker.write_text("incomplete output\n", encoding="utf-8")
    except OSError as e:
        console.print(f"[bold red]Error:[/] cannot write to {out_dir}: {e}")
        raise typer.Exit(code=1)
    try:
        yield
    except (ValueError, OSError) as e:
        console.print(f"[bold red]Error:[/] {e}")
        raise typer.Exit(code=1)
    marker.unlink()


def _spinner() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    )


def _settings(config: Optional[Path], **overrides) -> Settings:
    try:
        return load_settings(config, **overrides)
    except (ValueError, OSError) as e:
        console.print(f"[bold red]Error:[/] invalid configuration: {e}")
        raise typer.Exit(code=1)


# ============================================================
# Data Commands
# ============================================================

@app.command("gen-data")
def gen_data(
    out_dir: Path = typer.Option(..., "--out-dir", help="Dataset root"),
    n_train: Optional[int] = typer.Option(None, "--n-train", help="Training samples"),
    n_val: Optional[int] = typer.Option(None, "--n-val", help="Validation samples"),
    n_test: Optional[int] = typer.Option(None, "--n-test", help="Test samples"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Generator threads"),
    config: Optional[Path] = CONFIG_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Generate the phantom dataset as PGM files."""
    configure_logging(verbose)
    settings = _settings(config, n_train=n_train, n_val=n_val, n_test=n_test, workers=workers)

    with output_guard(out_dir):
        with _spinner() as progress:
            progress.add_task("Rendering phantoms...", total=None)
            dataset = make_dataset(
                settings.phantom_spec(), settings.n_train, settings.n_val, settings.n_test, settings.workers
            )
            progress.add_task("Writing PGM files...", total=None)
            write_dataset(dataset, out_dir)
        write_resolved(settings, out_dir)

    table = Table(title="Phantom Dataset")
    table.add_column("Split", style="cyan")
    table.add_column("Samples", justify="right")
    table.add_column("Tumor pixels", justify="right")
    for split in SPLITS:
        samples = dataset.split(split)
        table.add_row(split, str(len(samples)), str(sum(int((s.labels == 2).sum()) for s in samples)))
    console.print(table)
    console.print(f"[bold green]Dataset written to {out_dir}[/]")


# ============================================================
# Training Commands
# ============================================================

@app.command()
def train(
    data_dir: Path = typer.Option(..., "--data-dir", help="Dataset root written by gen-data"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for checkpoints and epochs.csv"),
    model: Optional[ModelKind] = typer.Option(None, "--model", help="one_step or sequential"),
    epochs_main: Optional[int] = typer.Option(None, "--epochs-main", help="Main-phase epochs"),
    epochs_finetune: Optional[int] = typer.Option(None, "--epochs-finetune", help="Fine-tuning epochs"),
    epochs_liver: Optional[int] = typer.Option(None, "--epochs-liver", help="Liver-network epochs"),
    loss_mode: Optional[LossMode] = typer.Option(None, "--loss-mode", help="plain, fixed_alpha or balanced"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Background weight for fixed_alpha"),
    config: Optional[Path] = CONFIG_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Train the one-step network or the liver/tumor cascade."""
    configure_logging(verbose)
    settings = _settings(
        config,
        model=model,
        epochs_main=epochs_main,
        epochs_finetune=epochs_finetune,
        epochs_liver=epochs_liver,
        loss_mode=loss_mode,
        alpha=alpha,
    )

    with output_guard(out_dir):
        train_samples = load_split(data_dir, "train")
        val_dir = Path(data_dir) / "val"
        val_samples = load_split(data_dir, "val") if val_dir.is_dir() else None
        dataset = TrainingData.from_samples(train_samples, val_samples)
        train_config = settings.train_config()

        with _spinner() as progress:
            if settings.model == ModelKind.ONE_STEP:
                progress.add_task(f"Training one-step network on {len(dataset)} samples...", total=None)
                net_c = build_one_step_network(settings.unet_config(Head.SOFTMAX3), settings.seed)
                report = train_one_step(net_c, dataset, train_config)
                save_network(net_c, out_dir / MODEL_FILES["C"])
                report.checkpoint = MODEL_FILES["C"]
                reports = [report]
            else:
                progress.add_task(f"Training liver/tumor cascade on {len(dataset)} samples...", total=None)
                net_a, net_b = build_cascade_networks(settings.unet_config(Head.BINARY_SIGMOID), settings.seed)
                reports = list(train_sequential(
                    net_a, net_b, dataset, train_config, settings.thresholds(), settings.window()
                ))
                save_network(net_a, out_dir / MODEL_FILES["A"])
                save_network(net_b, out_dir / MODEL_FILES["B"])
                reports[0].checkpoint = MODEL_FILES["A"]
                reports[1].checkpoint = MODEL_FILES["B"]

        write_epochs_csv([r for report in reports for r in report.records], out_dir / "epochs.csv")
        write_resolved(settings, out_dir)

    table = Table(title="Training Summary")
    table.add_column("Network", style="cyan")
    table.add_column("Epochs", justify="right")
    table.add_column("Final loss", justify="right")
    table.add_column("Val pixel acc", justify="right")
    table.add_column("Checkpoint", style="green")
    for report in reports:
        last = report.records[-1]
        acc = "-" if last.val_pixel_acc is None else f"{last.val_pixel_acc:.4f}"
        table.add_row(report.network, str(len(report.records)), f"{last.mean_loss:.5f}", acc, report.checkpoint)
    console.print(table)
    objective = reports[-1].joint_objective
    if objective is not None:
        console.print(f"Joint objective (c = {train_config.loss_weights().joint_c}): {objective:.5f}")


# ============================================================
# Prediction Commands
# ============================================================

def _input_images(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if (path / "img").is_dir():
        path = path / "img"
    if not path.is_dir():
        raise ValueError(f"input {path} is neither a PGM file nor a directory")
    files = sorted(path.glob("*.pgm"))
    if not files:
        raise ValueError(f"no PGM images found in {path}")
    return files


def _load_images(files: list[Path], size: int, normalize: bool = False) -> np.ndarray:
    images = []
    for f in files:
        image = load_image_pgm(f)
        if image.dtype == np.uint8:
            raise ValueError(f"{f} is a label map, expected an intensity image")
        if image.shape != (size, size):
            raise ValueError(
                f"{f.name} is {image.shape[1]}x{image.shape[0]}, network input size is {size}x{size}"
            )
        if normalize:
            image = normalize_intensity(image)
        images.append(image)
    return np.stack(images)


@app.command()
def predict(
    checkpoint_dir: Path = typer.Option(..., "--checkpoint-dir", help="Directory written by train"),
    input_path: Path = typer.Option(..., "--input", help="Image PGM, image directory or split directory"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for predicted PGMs"),
    model: Optional[ModelKind] = typer.Option(None, "--model", help="one_step or sequential"),
    normalize: Optional[bool] = typer.Option(
        None, "--normalize/--no-normalize", help="Min-max standardize each input image to [0, 1]"
    ),
    config: Optional[Path] = CONFIG_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Write label, liver-probability and tumor-probability PGMs per image."""
    configure_logging(verbose)
    settings = _settings(config, model=model, normalize_inputs=normalize)

    with output_guard(out_dir):
        files = _input_images(input_path)
        images = _load_images(files, settings.image_size, settings.normalize_inputs)

        with _spinner() as progress:
            progress.add_task(f"Segmenting {len(files)} images...", total=None)
            if settings.model == ModelKind.ONE_STEP:
                net_c = load_network(checkpoint_dir / MODEL_FILES["C"], settings.unet_config(Head.SOFTMAX3))
                labels, probs = one_step_predict(net_c, images)
                liver_probs = np.clip(probs[:, 0] + probs[:, 1], 0.0, 1.0)
                tumor_probs = probs[:, 0]
            else:
                unet = settings.unet_config(Head.BINARY_SIGMOID)
                net_a = load_network(checkpoint_dir / MODEL_FILES["A"], unet)
                net_b = load_network(checkpoint_dir / MODEL_FILES["B"], unet)
                result = sequential_predict(net_a, net_b, images, settings.thresholds(), settings.window())
                labels, liver_probs, tumor_probs = result.labels, result.liver_probs, result.tumor_probs

            for f, lbl, p_liver, p_tumor in zip(files, labels, liver_probs, tumor_probs):
                save_image_pgm(lbl.astype(np.uint8), out_dir / f"{f.stem}_label.pgm")
                save_image_pgm(np.asarray(p_liver, dtype=np.float64), out_dir / f"{f.stem}_liver.pgm")
                save_image_pgm(np.asarray(p_tumor, dtype=np.float64), out_dir / f"{f.stem}_tumor.pgm")
        write_resolved(settings, out_dir)

    console.print(f"[bold green]Wrote {3 * len(files)} files for {len(files)} images to {out_dir}[/]")


# ============================================================
# Evaluation Commands
# ============================================================

def _truth_files(truth_dir: Path) -> dict[str, Path]:
    if (truth_dir / "lbl").is_dir():
        truth_dir = truth_dir / "lbl"
    if not truth_dir.is_dir():
        raise ValueError(f"truth directory {truth_dir} does not exist")
    return {p.stem: p for p in truth_dir.glob("*.pgm")}


def _paired(predictions_dir: Path, truth_dir: Path) -> list[tuple[str, Path, Path]]:
    predicted = {p.name[: -len("_label.pgm")]: p for p in predictions_dir.glob("*_label.pgm")}
    truths = _truth_files(truth_dir)
    if predicted.keys() != truths.keys():
        missing = [f"{s} (no prediction)" for s in sorted(truths.keys() - predicted.keys())]
        missing += [f"{s} (no ground truth)" for s in sorted(predicted.keys() - truths.keys())]
        raise ValueError(f"misaligned sets, missing pairs: {', '.join(missing)}")
    if not truths:
        raise ValueError(f"no label maps found in {truth_dir}")
    return [(stem, predicted[stem], truths[stem]) for stem in sorted(truths)]


def _report_table(report: MetricsReport) -> Table:
    table = Table(title=f"Segmentation Metrics ({report.aggregation.value}, {report.n_images} images)")
    table.add_column("Class", style="cyan")
    for column in ("Pixel acc", "IoU", "Rand index", "rAUC", "Threshold"):
        table.add_column(column, justify="right")

    def fmt(v: Optional[float]) -> str:
        return "NA" if v is None else f"{v:.4f}"

    for name, row in (("liver", report.liver), ("tumor", report.tumor)):
        table.add_row(
            name,
            fmt(row.pixel_accuracy),
            fmt(row.iou),
            fmt(row.rand_index),
            fmt(row.restricted_auc),
            fmt(row.chosen_threshold),
        )
    return table


@app.command("eval")
def evaluate(
    predictions_dir: Path = typer.Option(..., "--predictions-dir", help="Directory written by predict"),
    truth_dir: Path = typer.Option(..., "--truth-dir", help="Split directory or directory of label PGMs"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for report and plot CSVs"),
    band_lo: Optional[float] = typer.Option(None, "--band-lo", help="Lower probability bound of the ROC band"),
    band_hi: Optional[float] = typer.Option(None, "--band-hi", help="Upper probability bound of the ROC band"),
    aggregation: Optional[Aggregation] = typer.Option(None, "--aggregation", help="pooled or per_image"),
    sweep: Optional[list[str]] = typer.Option(
        None, "--sweep", help="NAME=CHECKPOINT_DIR of a sequential model to add to the ROC comparison"
    ),
    config: Optional[Path] = CONFIG_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Score predictions against ground truth and emit ROC and histogram CSVs."""
    configure_logging(verbose)
    settings = _settings(config, band_lo=band_lo, band_hi=band_hi, aggregation=aggregation)

    with output_guard(out_dir):
        pairs = _paired(predictions_dir, truth_dir)
        predictions = [load_image_pgm(p) for _, p, _ in pairs]
        truths = [load_image_pgm(t) for _, _, t in pairs]
        tumor_files = [predictions_dir / f"{stem}_tumor.pgm" for stem, _, _ in pairs]
        tumor_probs = [load_image_pgm(f) for f in tumor_files] if all(f.exists() for f in tumor_files) else None

        report = evaluate_model(predictions, truths, tumor_probs, settings.band, settings.aggregation)
        write_report_csv(report, out_dir / "report.csv")
        if tumor_probs is not None:
            tumor_truth = [(t == 2).astype(np.uint8) for t in truths]
            write_roc_csv(restricted_roc(tumor_probs, tumor_truth, settings.band), out_dir / "roc_tumor.csv")
            write_histogram_csv(
                probability_histogram(tumor_probs, settings.band, settings.histogram_bins),
                out_dir / "hist_tumor.csv",
            )

        if sweep:
            image_files = [_sweep_image(truth_dir, stem) for stem, _, _ in pairs]
            images = _load_images(image_files, settings.image_size)
        sweep_rows = [_sweep_entry(entry, images, truths, settings, out_dir) for entry in sweep or []]
        write_resolved(settings, out_dir)

    console.print(_report_table(report))
    if sweep_rows:
        table = Table(title="Loss-weight Sweep (tumor restricted ROC)")
        table.add_column("Name", style="cyan")
        table.add_column("rAUC", justify="right")
        table.add_column("ROC file", style="green")
        for name, value, filename in sweep_rows:
            table.add_row(name, "NA" if value is None else f"{value:.4f}", filename)
        console.print(table)
    console.print(Panel(f"Outputs written to {out_dir}", title="[green]Evaluation Complete[/]"))


def _sweep_image(truth_dir: Path, stem: str) -> Path:
    path = truth_dir / "img" / f"{stem}.pgm"
    if not path.exists():
        raise ValueError(f"--sweep needs the split images next to the labels, missing {path}")
    return path


def _sweep_entry(
    entry: str,
    images: np.ndarray,
    truths: list[np.ndarray],
    settings: Settings,
    out_dir: Path,
) -> tuple[str, Optional[float], str]:
    """Predict the truth split with one cascade checkpoint pair and write its ROC."""
    name, sep, directory = entry.partition("=")
    if not sep or not name or not directory:
        raise ValueError(f"--sweep expects NAME=CHECKPOINT_DIR, got {entry!r}")
    unet = settings.unet_config(Head.BINARY_SIGMOID)
    net_a = load_network(Path(directory) / MODEL_FILES["A"], unet)
    net_b = load_network(Path(directory) / MODEL_FILES["B"], unet)
    result = sequential_predict(net_a, net_b, images, settings.thresholds(), settings.window())
    curve = restricted_roc(list(result.tumor_probs), [(t == 2).astype(np.uint8) for t in truths], settings.band)
    filename = f"roc_tumor_{name}.csv"
    write_roc_csv(curve, out_dir / filename)
    return name, auc(curve), filename


if __name__ == "__main__":
    app()
