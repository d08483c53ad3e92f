"""Shared epoch loop, training data container and the epochs CSV."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import structlog

from ..autodiff import SGDMomentum, Tensor, backward
from ..data.phantom import Sample
from ..metrics import confusion, iou
from ..models import EpochRecord
from ..network import Network
from ..rng import TrainingStreams

logger = structlog.get_logger()

EPOCH_COLUMNS = ["epoch", "phase", "mean_loss", "val_pixel_acc", "val_iou_liver", "val_iou_tumor"]

# (prediction batch, sample indices) -> scalar loss
BatchLoss = Callable[[Tensor, np.ndarray], Tensor]
# () -> (pixel accuracy, liver IoU, tumor IoU)
Snapshot = Callable[[], tuple[Optional[float], Optional[float], Optional[float]]]


@dataclass
class TrainingData:
    """Stacked training images and label maps, with an optional validation split."""
    images: np.ndarray
    labels: np.ndarray
    val_images: Optional[np.ndarray] = None
    val_labels: Optional[np.ndarray] = None

    @classmethod
    def from_samples(cls, train: Sequence[Sample], val: Optional[Sequence[Sample]] = None) -> "TrainingData":
        if not train:
            raise ValueError("training set is empty")
        data = cls(
            images=np.stack([s.image for s in train]),
            labels=np.stack([s.labels for s in train]).astype(np.uint8),
        )
        if val:
            data.val_images = np.stack([s.image for s in val])
            data.val_labels = np.stack([s.labels for s in val]).astype(np.uint8)
        return data

    def __len__(self) -> int:
        return len(self.images)

    @property
    def has_validation(self) -> bool:
        return self.val_images is not None and len(self.val_images) > 0

    def check(self, size: int) -> None:
        if len(self.images) == 0:
            raise ValueError("training set is empty")
        if self.images.shape[1:] != (size, size):
            raise ValueError(
                f"training images are {self.images.shape[1]}x{self.images.shape[2]}, "
                f"network expects {size}x{size}"
            )
        if self.labels.shape != self.images.shape:
            raise ValueError(f"labels {self.labels.shape} do not match images {self.images.shape}")


def label_snapshot(predicted: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Pixel accuracy of the label maps plus liver and tumor IoU."""
    accuracy = float(np.mean(predicted == truth))
    liver = iou(confusion((predicted >= 1).astype(np.uint8), (truth >= 1).astype(np.uint8)))
    tumor = iou(confusion((predicted == 2).astype(np.uint8), (truth == 2).astype(np.uint8)))
    return accuracy, liver, tumor


def run_phase(
    net: Network,
    optimizer: SGDMomentum,
    inputs: np.ndarray,
    loss_fn: BatchLoss,
    *,
    phase: str,
    epochs: int,
    lr: float,
    batch_size: int,
    streams: TrainingStreams,
    first_epoch: int = 1,
    snapshot: Optional[Snapshot] = None,
) -> list[EpochRecord]:
    """Run ``epochs`` shuffled passes over ``inputs`` (N×H×W) at learning rate ``lr``.

    Each batch is a forward pass in training mode, ``loss_fn`` on the output,
    backpropagation and one momentum step. The reported loss is the
    sample-weighted mean of the batch losses.
    """
    n = len(inputs)
    if n == 0:
        raise ValueError("training set is empty")
    optimizer.lr = lr
    records = []
    for epoch in range(first_epoch, first_epoch + epochs):
        order = streams.shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            optimizer.zero_grad()
            pred = net(inputs[idx][:, None], training=True, rng=streams.dropout)
            loss = loss_fn(pred, idx)
            backward(loss)
            optimizer.step()
            total += loss.item() * len(idx)

        acc, iou_liver, iou_tumor = snapshot() if snapshot is not None else (None, None, None)
        record = EpochRecord(
            epoch=epoch,
            phase=phase,
            mean_loss=total / n,
            val_pixel_acc=acc,
            val_iou_liver=iou_liver,
            val_iou_tumor=iou_tumor,
        )
        records.append(record)
        logger.info(
            "epoch_completed",
            phase=phase,
            epoch=epoch,
            mean_loss=round(record.mean_loss, 6),
            val_pixel_acc=acc,
        )
    return records


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_epochs_csv(records: Sequence[EpochRecord], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(EPOCH_COLUMNS)
        for r in records:
            writer.writerow([
                r.epoch,
                r.phase,
                repr(r.mean_loss),
                _fmt(r.val_pixel_acc),
                _fmt(r.val_iou_liver),
                _fmt(r.val_iou_tumor),
            ])
