"""SEGC checkpoint format.

Layout, all integers u32 little-endian::

    b"SEGC" | version | digest_len | digest (utf-8) | count
    count x ( name_len | name (utf-8) | rank | extents[rank] | float32 LE data )

The digest is the SHA-256 of the network configuration the parameters were
trained with. Loading is strict: bad magic, unknown version, truncation,
duplicate names, trailing bytes and invalid UTF-8 are all rejected.
"""

import math
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np
import structlog

from ..autodiff import Tensor
from ..models import UNetConfig
from ..network import Network, param_shapes

logger = structlog.get_logger()

MAGIC = b"SEGC"
VERSION = 1

_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint; ``reason`` is one of magic, version,
    truncated, duplicate, trailing, encoding, digest."""

    def __init__(self, reason: str, message: str):
        super().__init__(f"checkpoint {reason}: {message}")
        self.reason = reason


def _u32(value: int) -> bytes:
    return _U32.pack(value)


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _u32(len(raw)) + raw


def encode_checkpoint(params: Mapping[str, Union[np.ndarray, Tensor]], digest: str = "") -> bytes:
    parts = [MAGIC, _u32(VERSION), _string(digest), _u32(len(params))]
    for name, value in params.items():
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        parts.append(_string(name))
        parts.append(_u32(array.ndim))
        parts.extend(_u32(extent) for extent in array.shape)
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                "truncated",
                f"{what} needs {n} bytes at offset {self.pos}, only {len(self.data) - self.pos} left",
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def string(self, what: str) -> str:
        raw = self.take(self.u32(f"{what} length"), what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("encoding", f"{what} at offset {self.pos - len(raw)} is not UTF-8") from e


def decode_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], str]:
    """Parse checkpoint bytes into (ordered float32 arrays, config digest)."""
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("magic", f"expected {MAGIC!r}, got {data[:len(MAGIC)]!r}")
    version = reader.u32("version")
    if version != VERSION:
        raise CheckpointError("version", f"unsupported version {version}, expected {VERSION}")
    digest = reader.string("config digest")

    params: dict[str, np.ndarray] = {}
    for _ in range(reader.u32("tensor count")):
        name = reader.string("tensor name")
        if name in params:
            raise CheckpointError("duplicate", f"tensor {name!r} appears twice")
        rank = reader.u32(f"{name} rank")
        shape = tuple(reader.u32(f"{name} extent") for _ in range(rank))
        count = math.prod(shape)
        raw = reader.take(4 * count, f"{name} data")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)

    if reader.pos != len(data):
        raise CheckpointError("trailing", f"{len(data) - reader.pos} bytes after the last tensor")
    return params, digest


def save_checkpoint(params: Mapping[str, Union[np.ndarray, Tensor]], path: Union[str, Path], digest: str = "") -> None:
    Path(path).write_bytes(encode_checkpoint(params, digest))
    logger.info("checkpoint_saved", path=str(path), tensors=len(params))


def load_checkpoint(path: Union[str, Path]) -> tuple[dict[str, np.ndarray], str]:
    params, digest = decode_checkpoint(Path(path).read_bytes())
    logger.debug("checkpoint_loaded", path=str(path), tensors=len(params))
    return params, digest


# ============================================================
# Network helpers
# ============================================================

def save_network(net: Network, path: Union[str, Path]) -> None:
    save_checkpoint(net.params, path, net.config.digest())


def load_network(path: Union[str, Path], config: UNetConfig) -> Network:
    """Rebuild a network from a checkpoint trained with ``config``."""
    params, digest = load_checkpoint(path)
    if digest != config.digest():
        raise CheckpointError(
            "digest",
            f"{path} was written for a different network configuration "
            f"(stored {digest[:12] or '<none>'}, configured {config.digest()[:12]})",
        )
    expected = param_shapes(config)
    found = {name: a.shape for name, a in params.items()}
    if found != expected or list(found) != list(expected):
        raise CheckpointError("digest", f"{path} tensors do not match the configured network layout")
    dtype = config.dtype
    return Network(config, {name: Tensor(a.astype(dtype), requires_grad=True) for name, a in params.items()})
