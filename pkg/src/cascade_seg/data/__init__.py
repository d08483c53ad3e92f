"""Phantom data, dataset layout and file formats."""

from .checkpoint import (
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_network,
    save_checkpoint,
    save_network,
)
from .dataset import (
    SPLITS,
    DatasetSplits,
    load_split,
    make_dataset,
    stack_images,
    stack_labels,
    write_dataset,
    write_split,
)
from .pgm import PGMFormatError, decode_pgm, encode_image, encode_labels, load_image_pgm, save_image_pgm
from .phantom import Ellipse, Sample, generate_phantom, generate_phantoms, normalize_intensity

__all__ = [
    "CheckpointError",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "load_network",
    "save_checkpoint",
    "save_network",
    "SPLITS",
    "DatasetSplits",
    "load_split",
    "make_dataset",
    "stack_images",
    "stack_labels",
    "write_dataset",
    "write_split",
    "PGMFormatError",
    "decode_pgm",
    "encode_image",
    "encode_labels",
    "load_image_pgm",
    "save_image_pgm",
    "Ellipse",
    "Sample",
    "generate_phantom",
    "generate_phantoms",
    "normalize_intensity",
]
