"""U-Net construction and forward pass.

Parameter naming scheme (``{block}.{layer}.{weight|bias}``), in order:

- ``down{i}.conv0``, ``down{i}.conv1`` for contracting level i = 0..depth-1
  (channels base*2^i; conv0 of level 0 reads the single input channel)
- ``bottom.conv0``, ``bottom.conv1`` (channels base*2^depth)
- ``up{i}.proj``, ``up{i}.conv0``, ``up{i}.conv1`` for i = depth-1..0;
  ``proj`` is the 3×3 convolution after nearest-neighbor upsampling,
  ``conv0`` reads [skip, upsampled] concatenated
- ``head`` (1×1 convolution to 1 or 3 channels)
"""

from typing import Iterator, Mapping, Optional, Union

import numpy as np
import structlog

from .autodiff import (
    ShapeError,
    Tensor,
    concat_channels,
    conv2d,
    dropout,
    max_pool_2x2,
    no_grad,
    relu,
    sigmoid,
    softmax_channels,
    upsample_nearest_2x,
)
from .models import Head, UNetConfig

logger = structlog.get_logger()

NetworkParams = dict[str, Tensor]


def _channels(config: UNetConfig, level: int) -> int:
    return config.base_channels * 2 ** level


def _layer_shapes(config: UNetConfig) -> Iterator[tuple[str, tuple[int, int, int, int]]]:
    """Yield (layer name, kernel shape F×C×kH×kW) in parameter order."""
    for i in range(config.depth):
        c_in = 1 if i == 0 else _channels(config, i - 1)
        c = _channels(config, i)
        yield f"down{i}.conv0", (c, c_in, 3, 3)
        yield f"down{i}.conv1", (c, c, 3, 3)
    c_bottom = _channels(config, config.depth)
    yield "bottom.conv0", (c_bottom, _channels(config, config.depth - 1), 3, 3)
    yield "bottom.conv1", (c_bottom, c_bottom, 3, 3)
    for i in reversed(range(config.depth)):
        c = _channels(config, i)
        yield f"up{i}.proj", (c, _channels(config, i + 1), 3, 3)
        yield f"up{i}.conv0", (c, 2 * c, 3, 3)
        yield f"up{i}.conv1", (c, c, 3, 3)
    yield "head", (config.out_channels, _channels(config, 0), 1, 1)


def param_names(config: UNetConfig) -> list[str]:
    """Ordered parameter names; a pure function of the config."""
    names = []
    for layer, _ in _layer_shapes(config):
        names += [f"{layer}.weight", f"{layer}.bias"]
    return names


def param_shapes(config: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter name -> shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    for layer, shape in _layer_shapes(config):
        shapes[f"{layer}.weight"] = shape
        shapes[f"{layer}.bias"] = (shape[0],)
    return shapes


def parameter_count(config: UNetConfig) -> int:
    return sum(f * c * kh * kw + f for _, (f, c, kh, kw) in _layer_shapes(config))


class Network:
    """A U-Net: configuration plus named parameters."""

    def __init__(self, config: UNetConfig, params: NetworkParams):
        self.config = config
        self.params = params

    def __call__(
        self,
        batch: Union[Tensor, np.ndarray],
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        return forward(self, batch, training=training, rng=rng)

    @property
    def head(self) -> Head:
        return self.config.head

    def parameter_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        """Copy arrays into the parameters; names and shapes must match exactly."""
        if list(state) != list(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ValueError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, array in state.items():
            target = self.params[name]
            if array.shape != target.shape:
                raise ShapeError(f"{name}: expected shape {target.shape}, got {array.shape}")
            target.data = np.array(array, dtype=self.config.dtype)

    def predict(self, images: np.ndarray, chunk: int = 16) -> np.ndarray:
        """Evaluation-mode probabilities for N×H×W images as an N×K×H×W array."""
        images = np.asarray(images)
        if images.ndim == 2:
            images = images[None]
        if len(images) == 0:
            size = self.config.input_size
            height, width = images.shape[1:] if images.ndim == 3 else (size, size)
            return np.zeros((0, self.config.out_channels, height, width), dtype=self.config.dtype)
        outputs = []
        with no_grad():
            for start in range(0, len(images), chunk):
                batch = images[start:start + chunk, None]
                outputs.append(forward(self, batch, training=False).data)
        return np.concatenate(outputs, axis=0)


def build_unet(config: UNetConfig, rng: np.random.Generator) -> Network:
    """Initialize a U-Net.

    Kernels are uniform in [-b, b] with b = sqrt(6 / fan_in); biases are zero.
    """
    dtype = config.dtype
    params: NetworkParams = {}
    for layer, shape in _layer_shapes(config):
        f, c, kh, kw = shape
        bound = np.sqrt(6.0 / (c * kh * kw))
        params[f"{layer}.weight"] = Tensor(
            rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True
        )
        params[f"{layer}.bias"] = Tensor(np.zeros(f, dtype=dtype), requires_grad=True)

    logger.info(
        "unet_built",
        depth=config.depth,
        base_channels=config.base_channels,
        head=config.head.value,
        parameters=sum(t.size for t in params.values()),
    )
    return Network(config, params)


def _conv_relu(net: Network, x: Tensor, layer: str) -> Tensor:
    p = net.params
    return relu(conv2d(x, p[f"{layer}.weight"], p[f"{layer}.bias"], padding="same"))


def forward(
    net: Network,
    batch: Union[Tensor, np.ndarray],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Per-pixel probabilities for an N×1×H×W batch.

    Returns N×1×H×W sigmoid outputs (binary head) or N×3×H×W softmax outputs
    with channels (tumor, liver, other).
    """
    config = net.config
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    size = config.input_size
    if data.ndim != 4 or data.shape[1] != 1 or data.shape[2:] != (size, size):
        raise ShapeError(
            f"expected input batch N×1×{size}×{size}, got shape {tuple(data.shape)}"
        )
    if training and config.dropout_rate > 0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")

    x = Tensor(data.astype(config.dtype, copy=False))
    skips = []
    for i in range(config.depth):
        x = _conv_relu(net, x, f"down{i}.conv0")
        x = _conv_relu(net, x, f"down{i}.conv1")
        skips.append(x)
        x = max_pool_2x2(x)

    x = _conv_relu(net, x, "bottom.conv0")
    x = _conv_relu(net, x, "bottom.conv1")

    for i in reversed(range(config.depth)):
        x = _conv_relu(net, upsample_nearest_2x(x), f"up{i}.proj")
        x = concat_channels(skips[i], x)
        x = _conv_relu(net, x, f"up{i}.conv0")
        x = _conv_relu(net, x, f"up{i}.conv1")
        x = dropout(x, config.dropout_rate, training, rng)

    p = net.params
    logits = conv2d(x, p["head.weight"], p["head.bias"], padding="same")
    if config.head == Head.BINARY_SIGMOID:
        return sigmoid(logits)
    return softmax_channels(logits)
