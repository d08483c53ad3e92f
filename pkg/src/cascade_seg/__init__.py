"""Cascade Seg - liver and tumor segmentation of CT-like slices with U-Nets.

Two models share one U-Net builder:

    one-step    a three-class network labels tumor, liver and background directly
    sequential  a liver network masks the image, a tumor network segments inside the mask

Example usage:
    from cascade_seg.config import Settings
    from cascade_seg.data import make_dataset
    from cascade_seg.models import Head
    from cascade_seg.training import TrainingData, build_cascade_networks, train_sequential

    settings = Settings(image_size=32, depth=2)
    data = make_dataset(settings.phantom_spec(), n_train=16, n_val=4, n_test=4)
    net_a, net_b = build_cascade_networks(settings.unet_config(Head.BINARY_SIGMOID), settings.seed)
    train_sequential(
        net_a, net_b, TrainingData.from_samples(data.train, data.val),
        settings.train_config(), settings.thresholds(), settings.window(),
    )
"""

__version__ = "0.1.0"
