"""Generator building blocks: hierarchical dilated fusion and its
residual-in-residual wrapper, plus the sub-pixel upsampling head.

The fusion block runs K parallel 3x3 dilated convolutions (rates 1..K,
padding equal to the rate so every branch keeps the input size), forms the
prefix sums of the branch outputs, concatenates them, and fuses back to the
block width with a 1x1 convolution behind a leaky rectifier.  A scaled
local skip completes the block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T


@dataclass
class HffbConfig:
    k_dilations: int = 8
    branch_channels: int = 32
    io_channels: int = 64
    kernel: int = 3
    residual_scaling: float = 0.2
    lrelu_slope: float = 0.2

    def __post_init__(self):
        if self.k_dilations < 1:
            raise ValueError(f"k_dilations must be >= 1, got {self.k_dilations}")
        if not 0.0 < self.residual_scaling <= 1.0:
            raise ValueError(
                f"residual_scaling must be in (0, 1], got {self.residual_scaling}"
            )

    @property
    def concat_channels(self) -> int:
        return self.k_dilations * self.branch_channels


@dataclass
class RrfbConfig:
    n_hffb: int = 3
    hffb: HffbConfig = field(default_factory=HffbConfig)
    residual_scaling: float = 0.2

    def __post_init__(self):
        if self.n_hffb < 1:
            raise ValueError(f"n_hffb must be >= 1, got {self.n_hffb}")


class Layer:
    """Base for parameterised blocks.

    Parameters and sub-layers are registered in declaration order, which
    fixes checkpoint blob order and seeded initialization.
    """

    def __init__(self):
        self._params = []
        self._children = []

    def add_param(self, name: str, value: np.ndarray) -> T.Parameter:
        p = T.Parameter(value)
        self._params.append((name, p))
        return p

    def add_child(self, name: str, layer: "Layer") -> "Layer":
        self._children.append((name, layer))
        return layer

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params:
            yield prefix + name, p
        for name, child in self._children:
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def freeze(self):
        for p in self.parameters():
            p.freeze()

    def unfreeze(self):
        for p in self.parameters():
            p.unfreeze()


class Conv2d(Layer):
    """Convolution layer with fan-in uniform init and optional bias."""

    def __init__(self, rng, cin, cout, kernel=3, stride=1, padding=0, dilation=1,
                 bias=True, init_slope=0.2):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        fan_in = cin * kernel * kernel
        self.weight = self.add_param(
            "weight", T.kaiming_uniform(rng, (cout, cin, kernel, kernel), fan_in, init_slope)
        )
        self.bias = (
            self.add_param("bias", np.zeros((cout, 1, 1, 1), dtype=np.float32))
            if bias
            else None
        )

    def __call__(self, x):
        return T.conv2d(
            x, self.weight, self.bias,
            stride=self.stride, padding=self.padding, dilation=self.dilation,
        )


class Linear(Layer):
    def __init__(self, rng, cin, cout, bias=True, init_slope=0.2):
        super().__init__()
        self.weight = self.add_param(
            "weight", T.kaiming_uniform(rng, (cout, cin, 1, 1), cin, init_slope)
        )
        self.bias = (
            self.add_param("bias", np.zeros((cout, 1, 1, 1), dtype=np.float32))
            if bias
            else None
        )

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)


class HFFB(Layer):
    """Hierarchical feature fusion block.

    K parallel dilated branches over the block input, prefix-summed and
    concatenated, then fused by a 1x1 convolution; the fused map is scaled
    and added back onto the input.
    """

    def __init__(self, rng, config: HffbConfig):
        super().__init__()
        self.config = config
        self.branches = []
        for k in range(1, config.k_dilations + 1):
            conv = Conv2d(
                rng, config.io_channels, config.branch_channels,
                kernel=config.kernel, padding=k, dilation=k,
                init_slope=config.lrelu_slope,
            )
            self.branches.append(self.add_child(f"branch{k}", conv))
        self.fuse = self.add_child(
            "fuse",
            Conv2d(rng, config.concat_channels, config.io_channels, kernel=1,
                   init_slope=config.lrelu_slope),
        )
        assert self.config.concat_channels == config.k_dilations * config.branch_channels

    def multi_scale(self, x):
        """Pre-fusion activation: channel-concat of the prefix sums of the
        dilated branch outputs."""
        if x.shape[1] != self.config.io_channels:
            raise T.ShapeError(
                f"HFFB expects {self.config.io_channels} input channels, got {x.shape[1]}"
            )
        prefixes = []
        acc = None
        for conv in self.branches:
            f = conv(x)
            acc = f if acc is None else T.add(acc, f)
            prefixes.append(acc)
        return T.concat(prefixes, axis=1)

    def __call__(self, x):
        fused = self.fuse(T.leaky_relu(self.multi_scale(x), self.config.lrelu_slope))
        return T.add(x, T.scalar_mul(fused, self.config.residual_scaling))


class RRFB(Layer):
    """Residual-in-residual fusion block: a chain of HFFBs inside an outer
    scaled skip.  No activation between the inner blocks."""

    def __init__(self, rng, config: RrfbConfig):
        super().__init__()
        self.config = config
        self.blocks = [
            self.add_child(f"hffb{i}", HFFB(rng, config.hffb))
            for i in range(config.n_hffb)
        ]

    def __call__(self, x):
        h = x
        for block in self.blocks:
            h = block(h)
        return T.add(x, T.scalar_mul(h, self.config.residual_scaling))


class UpsampleHead(Layer):
    """Sub-pixel 4x reconstruction: two (conv -> shuffle -> LReLU) doublings
    followed by a 3-channel projection.  Output lives in image space,
    unclamped."""

    def __init__(self, rng, channels: int, scale: int = 4, lrelu_slope: float = 0.2):
        super().__init__()
        if scale != 4:
            raise ValueError(f"only 4x upsampling is supported, got scale={scale}")
        self.scale = scale
        self.lrelu_slope = lrelu_slope
        self.conv1 = self.add_child(
            "conv1", Conv2d(rng, channels, channels * 4, kernel=3, padding=1)
        )
        self.conv2 = self.add_child(
            "conv2", Conv2d(rng, channels, channels * 4, kernel=3, padding=1)
        )
        self.to_rgb = self.add_child(
            "to_rgb", Conv2d(rng, channels, 3, kernel=3, padding=1)
        )

    def __call__(self, x):
        h = T.leaky_relu(T.pixel_shuffle(self.conv1(x), 2), self.lrelu_slope)
        h = T.leaky_relu(T.pixel_shuffle(self.conv2(h), 2), self.lrelu_slope)
        return self.to_rgb(h)


def hffb_param_count(config: HffbConfig) -> int:
    """Closed-form parameter count for one fusion block (weights + biases)."""
    k, cb, cio, ks = (
        config.k_dilations,
        config.branch_channels,
        config.io_channels,
        config.kernel,
    )
    per_branch = ks * ks * cio * cb + cb
    fusion = config.concat_channels * cio + cio
    return k * per_branch + fusion
