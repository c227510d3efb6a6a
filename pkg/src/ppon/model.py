"""The progressive three-branch 4x super-resolution generator.

Content branch: head conv -> RRFB chain -> tail conv with a long skip from
the head output, then a sub-pixel reconstruction to the content image.
Structure branch: RRFB chain over the content *features* plus a
reconstruction whose output is added onto the content image.  Perception
branch: the same pattern over the structure features, with the perceptual
residual scaled by a user-chosen blend factor in [0, 1] at inference
(training always uses 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .blocks import Conv2d, HffbConfig, Layer, RRFB, RrfbConfig, UpsampleHead


@dataclass
class PponConfig:
    n_rrfb_co: int = 24
    n_rrfb_so: int = 2
    n_rrfb_po: int = 2
    channels: int = 64
    scale: int = 4
    rrfb: RrfbConfig = field(default_factory=RrfbConfig)
    test_profile: bool = False

    def __post_init__(self):
        if min(self.n_rrfb_co, self.n_rrfb_so, self.n_rrfb_po) < 1:
            raise ValueError("all branch block counts must be >= 1")
        if self.scale != 4:
            raise ValueError(f"only scale 4 is supported, got {self.scale}")
        if self.rrfb.hffb.io_channels != self.channels:
            raise ValueError(
                f"block io_channels {self.rrfb.hffb.io_channels} must equal "
                f"model channels {self.channels}"
            )

    @classmethod
    def full(cls) -> "PponConfig":
        return cls()

    @classmethod
    def test(cls) -> "PponConfig":
        """Shrunken desk-scale profile: 2/1/1 blocks, 16 channels, 4 dilations."""
        hffb = HffbConfig(k_dilations=4, branch_channels=8, io_channels=16)
        return cls(
            n_rrfb_co=2, n_rrfb_so=1, n_rrfb_po=1, channels=16,
            rrfb=RrfbConfig(n_hffb=3, hffb=hffb), test_profile=True,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PponConfig":
        d = dict(d)
        rrfb = dict(d.pop("rrfb"))
        hffb = HffbConfig(**rrfb.pop("hffb"))
        return cls(rrfb=RrfbConfig(hffb=hffb, **rrfb), **d)


@dataclass
class PponOutputs:
    """All three reconstructions plus the feature maps feeding them."""

    sr_c: T.Tensor
    sr_s: T.Tensor
    sr_p: T.Tensor
    f_c: T.Tensor
    f_s: T.Tensor
    f_p: T.Tensor


class PPON(Layer):
    """Three-branch progressive generator.

    Branch parameter names carry the prefixes ``co.``, ``so.`` and ``po.``,
    which the training harness uses for stage scoping and freezing.
    """

    def __init__(self, config: PponConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.SeedSequence((0x5150, self.seed)))
        ch = config.channels

        co = self.add_child("co", Layer())
        co.add_child("head", Conv2d(rng, 3, ch, kernel=3, padding=1))
        for i in range(config.n_rrfb_co):
            co.add_child(f"block{i:02d}", RRFB(rng, config.rrfb))
        co.add_child("tail", Conv2d(rng, ch, ch, kernel=3, padding=1))
        co.add_child("up", UpsampleHead(rng, ch, config.scale))
        self.co = co

        so = self.add_child("so", Layer())
        for i in range(config.n_rrfb_so):
            so.add_child(f"block{i:02d}", RRFB(rng, config.rrfb))
        so.add_child("up", UpsampleHead(rng, ch, config.scale))
        self.so = so

        po = self.add_child("po", Layer())
        for i in range(config.n_rrfb_po):
            po.add_child(f"block{i:02d}", RRFB(rng, config.rrfb))
        po.add_child("up", UpsampleHead(rng, ch, config.scale))
        self.po = po

    def _branch_layers(self, branch: Layer):
        return dict(branch._children)

    def forward_content(self, lr: T.Tensor):
        """LR image -> (content features, content image)."""
        if lr.shape[1] != 3:
            raise T.ShapeError(f"expected RGB input with 3 channels, got {lr.shape[1]}")
        parts = self._branch_layers(self.co)
        h0 = parts["head"](lr)
        h = h0
        for name, layer in self.co._children:
            if name.startswith("block"):
                h = layer(h)
        f_c = T.add(h0, parts["tail"](h))
        sr_c = parts["up"](f_c)
        return f_c, sr_c

    def forward_structure(self, f_c: T.Tensor, sr_c: T.Tensor):
        """Content features + content image -> (structure features, structure image)."""
        parts = self._branch_layers(self.so)
        h = f_c
        for name, layer in self.so._children:
            if name.startswith("block"):
                h = layer(h)
        f_s = h
        sr_s = T.add(parts["up"](f_s), sr_c)
        return f_s, sr_s

    def forward_perceptual(self, f_s: T.Tensor, sr_s: T.Tensor, alpha: float = 1.0):
        """Structure features + structure image -> (perceptual features,
        perceptual image) with the residual scaled by `alpha`."""
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        parts = self._branch_layers(self.po)
        h = f_s
        for name, layer in self.po._children:
            if name.startswith("block"):
                h = layer(h)
        f_p = h
        residual = parts["up"](f_p)
        if alpha == 0.0:
            sr_p = sr_s
        elif alpha == 1.0:
            sr_p = T.add(residual, sr_s)
        else:
            sr_p = T.add(T.scalar_mul(residual, alpha), sr_s)
        return f_p, sr_p

    def forward(self, lr: T.Tensor, alpha: float = 1.0) -> PponOutputs:
        f_c, sr_c = self.forward_content(lr)
        f_s, sr_s = self.forward_structure(f_c, sr_c)
        f_p, sr_p = self.forward_perceptual(f_s, sr_s, alpha)
        return PponOutputs(sr_c=sr_c, sr_s=sr_s, sr_p=sr_p, f_c=f_c, f_s=f_s, f_p=f_p)

    def infer(self, lr, alpha: float = 1.0) -> PponOutputs:
        """Single feed-forward pass producing all three outputs, no gradients.

        Accepts a Tensor or an (N, 3, H, W) float array in [0, 1].  Outputs
        are unclamped; clamping belongs to image encoding.
        """
        if not isinstance(lr, T.Tensor):
            lr = T.Tensor(np.asarray(lr, dtype=np.float32))
        with T.no_grad():
            return self.forward(lr, alpha)


def branch_prefixes(stage: str) -> tuple[str, ...]:
    """Parameter-name prefixes trained at each stage."""
    table = {"content": ("co.",), "structure": ("so.",), "perception": ("po.",)}
    if stage not in table:
        raise ValueError(f"unknown stage {stage!r}")
    return table[stage]
