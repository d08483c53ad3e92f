"""One-step training: plain CCE pretraining, then class-balanced fine-tuning."""

import time

import numpy as np
import structlog

from ..autodiff import SGDMomentum
from ..losses import balanced_class_weights, categorical_cross_entropy
from ..models import Head, LossMode, TrainConfig, TrainReport, UNetConfig
from ..network import Network, build_unet
from ..pipeline import derive_masks, one_step_predict
from ..rng import training_streams
from .loop import TrainingData, label_snapshot, run_phase

logger = structlog.get_logger()

# stream key of the one-step network
ONE_STEP_KEY = 0


def train_one_step(net_c: Network, dataset: TrainingData, config: TrainConfig) -> TrainReport:
    """Train the three-class network in two phases.

    Phase ``main`` minimizes unweighted categorical cross-entropy for
    ``epochs_main`` epochs at ``lr_initial``. Phase ``finetune`` continues for
    ``epochs_finetune`` epochs at ``lr_finetune`` with per-sample balanced
    class weights, or unweighted when ``loss_mode`` is plain. A configured
    ``class_weights`` triple replaces either.
    """
    if net_c.head != Head.SOFTMAX3:
        raise ValueError(f"one-step network must have a softmax3 head, got {net_c.head.value}")
    dataset.check(net_c.config.input_size)
    started = time.perf_counter()

    onehot = derive_masks(dataset.labels).onehot()
    weights = None
    if config.class_weights is not None:
        weights = np.tile(np.asarray(config.class_weights, dtype=np.float64), (len(onehot), 1))
    elif config.loss_mode != LossMode.PLAIN:
        weights = np.array([balanced_class_weights(*sample) for sample in onehot])

    streams = training_streams(config.seed, ONE_STEP_KEY)
    optimizer = SGDMomentum(net_c.params, lr=config.lr_initial, momentum=config.momentum)

    snapshot = None
    if dataset.has_validation:
        def snapshot():
            labels, _ = one_step_predict(net_c, dataset.val_images)
            return label_snapshot(labels, dataset.val_labels)

    logger.info("training_started", network="C", samples=len(dataset), loss_mode=config.loss_mode.value)
    records = run_phase(
        net_c,
        optimizer,
        dataset.images,
        lambda pred, idx: categorical_cross_entropy(pred, onehot[idx]),
        phase="main",
        epochs=config.epochs_main,
        lr=config.lr_initial,
        batch_size=config.batch_size,
        streams=streams,
        snapshot=snapshot,
    )
    records += run_phase(
        net_c,
        optimizer,
        dataset.images,
        lambda pred, idx: categorical_cross_entropy(pred, onehot[idx], None if weights is None else weights[idx]),
        phase="finetune",
        epochs=config.epochs_finetune,
        lr=config.lr_finetune,
        batch_size=config.batch_size,
        streams=streams,
        first_epoch=len(records) + 1,
        snapshot=snapshot,
    )

    report = TrainReport(network="C", records=records, wall_time_s=time.perf_counter() - started)
    logger.info("training_finished", network="C", epochs=len(records), wall_time_s=round(report.wall_time_s, 2))
    return report


def build_one_step_network(config: UNetConfig, seed: int) -> Network:
    """Initialize the three-class network from the run seed."""
    if config.head != Head.SOFTMAX3:
        raise ValueError(f"one-step network must have a softmax3 head, got {config.head.value}")
    return build_unet(config, training_streams(seed, ONE_STEP_KEY).init)
