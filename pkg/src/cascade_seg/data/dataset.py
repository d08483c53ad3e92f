"""Dataset splits and their on-disk layout ``<root>/{split}/{img,lbl}/NNNN.pgm``."""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import structlog

from ..models import PhantomSpec
from .pgm import load_image_pgm, save_image_pgm
from .phantom import Sample, generate_phantoms

logger = structlog.get_logger()

SPLITS = ("train", "val", "test")


@dataclass
class DatasetSplits:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]

    def split(self, name: str) -> list[Sample]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}, expected one of {SPLITS}")
        return getattr(self, name)

    def __len__(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


def make_dataset(
    spec: PhantomSpec,
    n_train: int = 256,
    n_val: int = 32,
    n_test: int = 32,
    workers: int = 1,
) -> DatasetSplits:
    """Generate three splits over consecutive, disjoint phantom index ranges."""
    for name, n in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test)):
        if n < 1:
            raise ValueError(f"{name} must be >= 1, got {n}")
    train = generate_phantoms(spec, range(n_train), workers)
    val = generate_phantoms(spec, range(n_train, n_train + n_val), workers)
    test = generate_phantoms(spec, range(n_train + n_val, n_train + n_val + n_test), workers)
    logger.info("dataset_generated", n_train=n_train, n_val=n_val, n_test=n_test, size=spec.size)
    return DatasetSplits(train=train, val=val, test=test)


def _file_name(position: int) -> str:
    return f"{position:04d}.pgm"


def write_split(samples: list[Sample], root: Union[str, Path], split: str) -> Path:
    base = Path(root) / split
    (base / "img").mkdir(parents=True, exist_ok=True)
    (base / "lbl").mkdir(parents=True, exist_ok=True)
    for position, sample in enumerate(samples):
        save_image_pgm(sample.image, base / "img" / _file_name(position))
        save_image_pgm(sample.labels.astype(np.uint8), base / "lbl" / _file_name(position))
    return base


def write_dataset(dataset: DatasetSplits, root: Union[str, Path]) -> None:
    for split in SPLITS:
        write_split(dataset.split(split), root, split)


def load_split(root: Union[str, Path], split: str) -> list[Sample]:
    """Read a split back in file-index order.

    Raises:
        ValueError: the split is missing, empty, or image and label files do not pair up
    """
    base = Path(root) / split
    img_dir, lbl_dir = base / "img", base / "lbl"
    if not img_dir.is_dir() or not lbl_dir.is_dir():
        raise ValueError(f"split directory {base} needs img/ and lbl/ subdirectories")
    images = {p.stem: p for p in img_dir.glob("*.pgm")}
    labels = {p.stem: p for p in lbl_dir.glob("*.pgm")}
    if images.keys() != labels.keys():
        missing = sorted(images.keys() ^ labels.keys())
        raise ValueError(f"unpaired files in {base}: {', '.join(missing)}")
    if not images:
        raise ValueError(f"split {base} holds no samples")

    samples = []
    for stem in sorted(images):
        image = load_image_pgm(images[stem])
        lbl = load_image_pgm(labels[stem])
        if image.shape != lbl.shape:
            raise ValueError(f"{stem}: image {image.shape} and labels {lbl.shape} differ")
        samples.append(Sample(image=image, labels=lbl, index=int(stem) if stem.isdigit() else len(samples)))
    logger.debug("split_loaded", split=split, n=len(samples))
    return samples


def stack_images(samples: list[Sample]) -> np.ndarray:
    return np.stack([s.image for s in samples])


def stack_labels(samples: list[Sample]) -> np.ndarray:
    return np.stack([s.labels for s in samples]).astype(np.uint8)
