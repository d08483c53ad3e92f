"""Binary PGM (P5) codec.

Images are stored with maxval 65535, two bytes per sample, big-endian, value
round(v * 65535). Label maps are stored with maxval 255 as 0 -> 0, 1 -> 127,
2 -> 255, which is also the display encoding. Decoding is strict: every
malformed file raises PGMFormatError naming the byte offset.
"""

from pathlib import Path
from typing import Union

import numpy as np

IMAGE_MAXVAL = 65535
LABEL_MAXVAL = 255
LABEL_LEVELS = np.array([0, 127, 255], dtype=np.uint8)

_WHITESPACE = b" \t\n\r\v\f"


class PGMFormatError(ValueError):
    """Malformed PGM data."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at byte {position})")
        self.position = position


def _header(width: int, height: int, maxval: int) -> bytes:
    return f"P5\n{width} {height}\n{maxval}\n".encode("ascii")


def encode_image(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected an H×W image, got shape {image.shape}")
    if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    samples = np.rint(image * IMAGE_MAXVAL).astype(">u2")
    return _header(image.shape[1], image.shape[0], IMAGE_MAXVAL) + samples.tobytes()


def encode_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected an H×W label map, got shape {labels.shape}")
    if not np.isin(labels, (0, 1, 2)).all():
        raise ValueError("label map may only contain 0, 1 and 2")
    samples = LABEL_LEVELS[labels.astype(np.intp)]
    return _header(labels.shape[1], labels.shape[0], LABEL_MAXVAL) + samples.tobytes()


class _HeaderReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self) -> None:
        data = self.data
        while self.pos < len(data):
            ch = data[self.pos:self.pos + 1]
            if ch == b"#":
                end = data.find(b"\n", self.pos)
                if end < 0:
                    raise PGMFormatError("unterminated header comment", self.pos)
                self.pos = end + 1
            elif ch in _WHITESPACE:
                self.pos += 1
            else:
                return
        raise PGMFormatError("header truncated", self.pos)

    def integer(self, what: str) -> int:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            raise PGMFormatError(f"expected {what}", start)
        if self.pos >= len(self.data):
            raise PGMFormatError(f"header truncated after {what}", self.pos)
        return int(self.data[start:self.pos])


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode P5 bytes into a float image (maxval 65535) or a uint8 label map (maxval 255)."""
    if len(data) < 2 or data[:2] != b"P5":
        raise PGMFormatError("bad magic, expected P5", 0)
    reader = _HeaderReader(data)
    reader.pos = 2
    if reader.pos >= len(data) or data[reader.pos:reader.pos + 1] not in _WHITESPACE:
        raise PGMFormatError("expected whitespace after magic", reader.pos)

    width = reader.integer("width")
    height = reader.integer("height")
    maxval_pos = reader.pos
    maxval = reader.integer("maxval")
    if width <= 0 or height <= 0:
        raise PGMFormatError(f"non-positive dimensions {width}x{height}", maxval_pos)
    if maxval not in (IMAGE_MAXVAL, LABEL_MAXVAL):
        raise PGMFormatError(f"unsupported maxval {maxval}", maxval_pos)
    if data[reader.pos:reader.pos + 1] not in _WHITESPACE:
        raise PGMFormatError("expected single whitespace before payload", reader.pos)
    start = reader.pos + 1

    sample_bytes = 2 if maxval == IMAGE_MAXVAL else 1
    expected = width * height * sample_bytes
    found = len(data) - start
    if found < expected:
        raise PGMFormatError(f"payload truncated: expected {expected} bytes, found {found}", len(data))
    if found > expected:
        raise PGMFormatError(f"{found - expected} trailing bytes after payload", start + expected)

    payload = data[start:]
    if maxval == IMAGE_MAXVAL:
        samples = np.frombuffer(payload, dtype=">u2").reshape(height, width)
        return samples.astype(np.float64) / IMAGE_MAXVAL

    samples = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    bad = ~np.isin(samples, LABEL_LEVELS)
    if bad.any():
        offset = int(np.flatnonzero(bad.ravel())[0])
        raise PGMFormatError(f"invalid label level {int(samples.ravel()[offset])}", start + offset)
    return np.searchsorted(LABEL_LEVELS, samples).astype(np.uint8)


def save_image_pgm(data: np.ndarray, path: Union[str, Path]) -> None:
    """Write an image (floating dtype) or a label map (integer dtype)."""
    data = np.asarray(data)
    encoded = encode_labels(data) if np.issubdtype(data.dtype, np.integer) else encode_image(data)
    Path(path).write_bytes(encoded)


def load_image_pgm(path: Union[str, Path]) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
