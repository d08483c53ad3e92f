"""Sequential (cascade) training of the liver and tumor networks."""

import time
from dataclasses import dataclass

import numpy as np
import structlog

from ..autodiff import SGDMomentum
from ..losses import binary_cross_entropy, binary_loss, joint_loss
from ..models import CascadeThresholds, Head, MaskSource, TrainConfig, TrainReport, UNetConfig, WindowSpec
from ..network import Network, build_unet
from ..pipeline import derive_masks, masked_input, sequential_predict, threshold
from ..rng import training_streams
from .loop import TrainingData, label_snapshot, run_phase

logger = structlog.get_logger()

LIVER_KEY = 1
TUMOR_KEY = 2


@dataclass
class TumorStageData:
    """Inputs and targets of the tumor network, built from a frozen liver network."""
    inputs: np.ndarray  # w(M * X)
    targets: np.ndarray  # M * B
    liver_masks: np.ndarray  # M


def liver_masks(
    net_a: Network,
    images: np.ndarray,
    labels: np.ndarray,
    thresholds: CascadeThresholds,
    mask_source: MaskSource = MaskSource.TRAINED,
) -> np.ndarray:
    """Thresholded liver-network output, or the ground-truth liver-or-tumor mask."""
    if mask_source == MaskSource.GROUND_TRUTH:
        return derive_masks(labels).liver_or_tumor
    return threshold(net_a.predict(images)[:, 0], thresholds.t_a)


def materialize_tumor_stage(
    net_a: Network,
    images: np.ndarray,
    labels: np.ndarray,
    thresholds: CascadeThresholds,
    window: WindowSpec,
    mask_source: MaskSource = MaskSource.TRAINED,
) -> TumorStageData:
    masks = liver_masks(net_a, images, labels, thresholds, mask_source)
    return TumorStageData(
        inputs=masked_input(images, masks, window),
        targets=(masks * derive_masks(labels).tumor).astype(np.uint8),
        liver_masks=masks,
    )


def stage_objective(
    net_a: Network,
    net_b: Network,
    images: np.ndarray,
    labels: np.ndarray,
    stage: TumorStageData,
    c: float,
) -> float:
    """Joint objective of the cascade on an already materialized tumor stage."""
    masks = derive_masks(labels)
    return joint_loss(
        liver_probs=net_a.predict(images),
        liver_targets=masks.liver_or_tumor,
        tumor_probs=net_b.predict(stage.inputs),
        tumor_targets=masks.tumor,
        liver_masks=stage.liver_masks,
        c=c,
    )


def _require_binary(net: Network, role: str) -> None:
    if net.head != Head.BINARY_SIGMOID:
        raise ValueError(f"{role} network must have a binary_sigmoid head, got {net.head.value}")


def train_sequential(
    net_a: Network,
    net_b: Network,
    dataset: TrainingData,
    config: TrainConfig,
    thresholds: CascadeThresholds,
    window: WindowSpec,
) -> tuple[TrainReport, TrainReport]:
    """Train the liver network, freeze it, then train the tumor network on its masked output.

    Stage 1 fits the liver network to the liver-or-tumor mask with binary
    cross-entropy for ``epochs_liver`` epochs. Stage 2 materializes the
    masked, windowed inputs once, trains the tumor network with binary
    cross-entropy for ``epochs_main`` epochs at ``lr_initial`` and continues
    with the configured loss mode for ``epochs_finetune`` epochs at
    ``lr_finetune``. The tumor report carries the joint objective at
    ``joint_c`` on the training set.

    Returns:
        (liver report, tumor report)
    """
    _require_binary(net_a, "liver")
    _require_binary(net_b, "tumor")
    if net_a.config.input_size != net_b.config.input_size:
        raise ValueError(
            f"liver and tumor networks disagree on input size: "
            f"{net_a.config.input_size} vs {net_b.config.input_size}"
        )
    dataset.check(net_a.config.input_size)

    # ---- stage 1: liver network ----
    started = time.perf_counter()
    targets_a = derive_masks(dataset.labels).liver_or_tumor
    streams_a = training_streams(config.seed, LIVER_KEY)
    optimizer_a = SGDMomentum(net_a.params, lr=config.lr_initial, momentum=config.momentum)

    snapshot_a = None
    if dataset.has_validation:
        val_a = derive_masks(dataset.val_labels).liver_or_tumor

        def snapshot_a():
            masks = threshold(net_a.predict(dataset.val_images)[:, 0], thresholds.t_a)
            acc, liver, _ = label_snapshot(masks, val_a)
            return acc, liver, None

    logger.info("training_started", network="A", samples=len(dataset))
    records_a = run_phase(
        net_a,
        optimizer_a,
        dataset.images,
        lambda pred, idx: binary_cross_entropy(pred, targets_a[idx]),
        phase="liver",
        epochs=config.epochs_liver,
        lr=config.lr_initial,
        batch_size=config.batch_size,
        streams=streams_a,
        snapshot=snapshot_a,
    )
    report_a = TrainReport(network="A", records=records_a, wall_time_s=time.perf_counter() - started)

    # ---- stage 2: tumor network on frozen liver output ----
    started = time.perf_counter()
    stage = materialize_tumor_stage(
        net_a, dataset.images, dataset.labels, thresholds, window, config.mask_source
    )
    logger.info(
        "tumor_stage_materialized",
        mask_source=config.mask_source.value,
        mask_pixels=int(stage.liver_masks.sum()),
        tumor_pixels=int(stage.targets.sum()),
    )
    streams_b = training_streams(config.seed, TUMOR_KEY)
    optimizer_b = SGDMomentum(net_b.params, lr=config.lr_initial, momentum=config.momentum)
    weights = config.loss_weights()

    snapshot_b = None
    if dataset.has_validation:
        def snapshot_b():
            result = sequential_predict(net_a, net_b, dataset.val_images, thresholds, window)
            return label_snapshot(result.labels, dataset.val_labels)

    logger.info("training_started", network="B", samples=len(dataset), loss_mode=weights.mode.value)
    records_b = run_phase(
        net_b,
        optimizer_b,
        stage.inputs,
        lambda pred, idx: binary_cross_entropy(pred, stage.targets[idx]),
        phase="tumor_main",
        epochs=config.epochs_main,
        lr=config.lr_initial,
        batch_size=config.batch_size,
        streams=streams_b,
        first_epoch=len(records_a) + 1,
        snapshot=snapshot_b,
    )
    records_b += run_phase(
        net_b,
        optimizer_b,
        stage.inputs,
        lambda pred, idx: binary_loss(pred, stage.targets[idx], weights),
        phase="tumor_finetune",
        epochs=config.epochs_finetune,
        lr=config.lr_finetune,
        batch_size=config.batch_size,
        streams=streams_b,
        first_epoch=len(records_a) + len(records_b) + 1,
        snapshot=snapshot_b,
    )
    report_b = TrainReport(network="B", records=records_b, wall_time_s=time.perf_counter() - started)
    report_b.joint_objective = stage_objective(
        net_a, net_b, dataset.images, dataset.labels, stage, weights.joint_c
    )
    logger.info(
        "training_finished",
        network="AB",
        epochs=len(records_a) + len(records_b),
        wall_time_s=round(report_a.wall_time_s + report_b.wall_time_s, 2),
        joint_c=weights.joint_c,
        joint_objective=round(report_b.joint_objective, 6),
    )
    return report_a, report_b


def build_cascade_networks(config: UNetConfig, seed: int) -> tuple[Network, Network]:
    """Initialize the liver and tumor networks from the run seed."""
    if config.head != Head.BINARY_SIGMOID:
        raise ValueError(f"cascade networks must have a binary_sigmoid head, got {config.head.value}")
    net_a = build_unet(config, training_streams(seed, LIVER_KEY).init)
    net_b = build_unet(config, training_streams(seed, TUMOR_KEY).init)
    return net_a, net_b
