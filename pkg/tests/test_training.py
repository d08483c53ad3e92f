"""Tests for the one-step and sequential training procedures."""

import csv

import numpy as np
import pytest

from cascade_seg.data import make_dataset
from cascade_seg.losses import joint_component_losses
from cascade_seg.models import (
    CascadeThresholds,
    EpochRecord,
    Head,
    LossMode,
    MaskSource,
    PhantomSpec,
    TrainConfig,
    UNetConfig,
    WindowSpec,
)
from cascade_seg.pipeline import derive_masks, masked_input, one_step_predict
from cascade_seg.training import (
    EPOCH_COLUMNS,
    TrainingData,
    build_cascade_networks,
    build_one_step_network,
    evaluate_joint_objective,
    materialize_tumor_stage,
    train_one_step,
    train_sequential,
    write_epochs_csv,
)


@pytest.fixture
def dataset(small_spec):
    data = make_dataset(small_spec, n_train=4, n_val=2, n_test=1)
    return TrainingData.from_samples(data.train, data.val)


@pytest.fixture
def short_config():
    return TrainConfig(
        lr_initial=0.01,
        lr_finetune=0.001,
        epochs_main=1,
        epochs_finetune=1,
        epochs_liver=1,
        batch_size=2,
        seed=3,
    )


def snapshot_params(net):
    return {name: t.data.copy() for name, t in net.params.items()}


# =============================================================================
# Training data
# =============================================================================

class TestTrainingData:
    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            TrainingData.from_samples([])

    def test_size_mismatch_rejected(self, dataset):
        with pytest.raises(ValueError, match="16x16"):
            dataset.check(32)

    def test_validation_optional(self, small_spec):
        data = make_dataset(small_spec, 2, 1, 1)
        assert not TrainingData.from_samples(data.train).has_validation
        assert TrainingData.from_samples(data.train, data.val).has_validation


# =============================================================================
# One-step training
# =============================================================================

class TestOneStep:
    def test_records_per_phase(self, dataset, short_config, small_softmax_config):
        net = build_one_step_network(small_softmax_config, short_config.seed)
        report = train_one_step(net, dataset, short_config)
        assert report.network == "C"
        assert [(r.epoch, r.phase) for r in report.records] == [(1, "main"), (2, "finetune")]
        assert all(np.isfinite(r.mean_loss) and r.mean_loss >= 0 for r in report.records)
        assert all(r.val_pixel_acc is not None for r in report.records)

    def test_zero_learning_rate_leaves_parameters(self, dataset, small_softmax_config):
        config = TrainConfig(lr_initial=0.0, lr_finetune=0.0, epochs_main=1, epochs_finetune=1, batch_size=2)
        net = build_one_step_network(small_softmax_config, config.seed)
        before = snapshot_params(net)
        train_one_step(net, dataset, config)
        for name, value in before.items():
            np.testing.assert_array_equal(net.params[name].data, value)

    def test_same_seed_same_weights(self, dataset, short_config, small_softmax_config):
        nets = []
        for _ in range(2):
            net = build_one_step_network(small_softmax_config, short_config.seed)
            train_one_step(net, dataset, short_config)
            nets.append(net)
        for name in nets[0].params:
            assert nets[0].params[name].data.tobytes() == nets[1].params[name].data.tobytes()

    @pytest.mark.parametrize("mode", [LossMode.PLAIN, LossMode.BALANCED])
    def test_loss_modes(self, dataset, small_softmax_config, mode):
        config = TrainConfig(epochs_main=1, epochs_finetune=1, batch_size=4, loss_mode=mode)
        net = build_one_step_network(small_softmax_config, config.seed)
        report = train_one_step(net, dataset, config)
        assert len(report.records) == 2

    def test_configured_class_weights_replace_balanced(self, dataset, small_softmax_config):
        trained = {}
        for name, extra in (("plain", {"loss_mode": LossMode.PLAIN}), ("unit", {"class_weights": (1.0, 1.0, 1.0)})):
            config = TrainConfig(epochs_main=1, epochs_finetune=1, batch_size=2, **extra)
            net = build_one_step_network(small_softmax_config, config.seed)
            train_one_step(net, dataset, config)
            trained[name] = snapshot_params(net)
        for name, value in trained["plain"].items():
            np.testing.assert_array_equal(trained["unit"][name], value)

    def test_class_weights_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError, match="class weights"):
            TrainConfig(class_weights=(1.5, 0.5, 0.1))

    def test_binary_head_rejected(self, small_binary_config):
        with pytest.raises(ValueError, match="softmax3"):
            build_one_step_network(small_binary_config, 0)


# =============================================================================
# Sequential training
# =============================================================================

class TestSequential:
    def test_reports_and_phases(self, dataset, short_config, small_binary_config):
        net_a, net_b = build_cascade_networks(small_binary_config, short_config.seed)
        report_a, report_b = train_sequential(
            net_a, net_b, dataset, short_config, CascadeThresholds(), WindowSpec()
        )
        assert [r.phase for r in report_a.records] == ["liver"]
        assert [(r.epoch, r.phase) for r in report_b.records] == [(2, "tumor_main"), (3, "tumor_finetune")]
        assert report_a.records[0].val_iou_tumor is None

    def test_liver_and_tumor_networks_differ(self, small_binary_config):
        net_a, net_b = build_cascade_networks(small_binary_config, 0)
        assert not np.array_equal(net_a.params["head.weight"].data, net_b.params["head.weight"].data)

    def test_softmax_head_rejected(self, small_softmax_config):
        with pytest.raises(ValueError, match="binary_sigmoid"):
            build_cascade_networks(small_softmax_config, 0)

    def test_ground_truth_mask_stage(self, dataset, small_binary_config):
        net_a, _ = build_cascade_networks(small_binary_config, 0)
        window = WindowSpec(lo=0.1, hi=0.9)
        stage = materialize_tumor_stage(
            net_a, dataset.images, dataset.labels, CascadeThresholds(), window, MaskSource.GROUND_TRUTH
        )
        mask = derive_masks(dataset.labels).liver_or_tumor
        np.testing.assert_array_equal(stage.liver_masks, mask)
        np.testing.assert_allclose(stage.inputs, masked_input(dataset.images, mask, window))
        np.testing.assert_array_equal(stage.targets, derive_masks(dataset.labels).tumor)

    def test_tumor_targets_inside_trained_mask(self, dataset, small_binary_config):
        net_a, _ = build_cascade_networks(small_binary_config, 0)
        stage = materialize_tumor_stage(
            net_a, dataset.images, dataset.labels, CascadeThresholds(t_a=0.5), WindowSpec()
        )
        assert np.all(stage.targets <= stage.liver_masks)

    def test_ground_truth_mask_source_trains(self, dataset, small_binary_config):
        config = TrainConfig(epochs_main=1, epochs_finetune=1, epochs_liver=1, mask_source=MaskSource.GROUND_TRUTH)
        net_a, net_b = build_cascade_networks(small_binary_config, config.seed)
        _, report_b = train_sequential(net_a, net_b, dataset, config, CascadeThresholds(), WindowSpec())
        assert len(report_b.records) == 2

    def test_stage_input_outside_mask_is_window_of_zero(self, dataset, small_binary_config):
        net_a, _ = build_cascade_networks(small_binary_config, 0)
        window = WindowSpec(lo=-1.0, hi=1.0)
        stage = materialize_tumor_stage(
            net_a, dataset.images, dataset.labels, CascadeThresholds(t_a=0.5), window
        )
        outside = stage.liver_masks == 0
        np.testing.assert_allclose(stage.inputs[outside], 0.5)
        assert not stage.targets[outside].any()

    @pytest.mark.slow
    def test_two_samples_memorized(self):
        data = make_dataset(PhantomSpec(size=16, seed=21), n_train=2, n_val=1, n_test=1)
        train = TrainingData.from_samples(data.train)
        config = TrainConfig(
            lr_initial=0.01, lr_finetune=0.001, epochs_main=150, epochs_finetune=50,
            batch_size=2, loss_mode=LossMode.PLAIN,
        )
        unet = UNetConfig(input_size=16, depth=1, base_channels=8, dropout_rate=0.0, head=Head.SOFTMAX3)
        net = build_one_step_network(unet, config.seed)
        train_one_step(net, train, config)
        labels, _ = one_step_predict(net, train.images)
        assert np.mean(labels == train.labels) >= 0.99


# =============================================================================
# Joint objective
# =============================================================================

class TestJointObjective:
    def test_affine_combination(self, dataset, small_binary_config):
        net_a, net_b = build_cascade_networks(small_binary_config, 1)
        thresholds, window = CascadeThresholds(), WindowSpec()
        stage = materialize_tumor_stage(net_a, dataset.images, dataset.labels, thresholds, window)
        masks = derive_masks(dataset.labels)
        liver, tumor = joint_component_losses(
            net_a.predict(dataset.images),
            masks.liver_or_tumor,
            net_b.predict(stage.inputs),
            masks.tumor,
            stage.liver_masks,
        )
        for c in (0.0, 0.5, 1.0):
            value = evaluate_joint_objective(net_a, net_b, dataset, c, thresholds, window)
            assert value == pytest.approx(c * liver + (1 - c) * tumor, abs=1e-12)
            assert np.isfinite(value) and value >= 0

    @pytest.mark.parametrize("c", [None, 0.2])
    def test_sequential_report_carries_objective(self, dataset, small_binary_config, c):
        config = TrainConfig(epochs_main=1, epochs_finetune=1, epochs_liver=1, batch_size=2, joint_c=c)
        thresholds, window = CascadeThresholds(), WindowSpec()
        net_a, net_b = build_cascade_networks(small_binary_config, config.seed)
        report_a, report_b = train_sequential(net_a, net_b, dataset, config, thresholds, window)
        expected = evaluate_joint_objective(net_a, net_b, dataset, 0.5 if c is None else c, thresholds, window)
        assert report_a.joint_objective is None
        assert report_b.joint_objective == pytest.approx(expected, abs=1e-12)


# =============================================================================
# Epochs CSV
# =============================================================================

class TestEpochsCSV:
    def test_header_and_empty_validation_fields(self, tmp_path):
        records = [
            EpochRecord(epoch=1, phase="main", mean_loss=0.5),
            EpochRecord(epoch=2, phase="finetune", mean_loss=0.25, val_pixel_acc=0.9, val_iou_liver=0.8, val_iou_tumor=0.1),
        ]
        write_epochs_csv(records, tmp_path / "epochs.csv")
        with open(tmp_path / "epochs.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == EPOCH_COLUMNS
        assert rows[1] == ["1", "main", "0.5", "", "", ""]
        assert rows[2][3:] == ["0.9", "0.8", "0.1"]
