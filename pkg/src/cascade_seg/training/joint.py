"""Evaluation of the joint cascade objective over a dataset."""

from ..models import CascadeThresholds, MaskSource, WindowSpec
from ..network import Network
from .loop import TrainingData
from .sequential import materialize_tumor_stage, stage_objective


def evaluate_joint_objective(
    net_a: Network,
    net_b: Network,
    dataset: TrainingData,
    c: float,
    thresholds: CascadeThresholds = CascadeThresholds(),
    window: WindowSpec = WindowSpec(),
    mask_source: MaskSource = MaskSource.TRAINED,
) -> float:
    """c * mean liver loss + (1 - c) * mean tumor loss on the masked input.

    No gradient flows; the liver mask is the thresholded liver output.
    """
    dataset.check(net_a.config.input_size)
    images, labels = dataset.images, dataset.labels
    stage = materialize_tumor_stage(net_a, images, labels, thresholds, window, mask_source)
    return stage_objective(net_a, net_b, images, labels, stage, c)
