"""Training objectives for the three stages and the discriminator.

Stage 1 minimizes mean absolute error.  Stage 2 combines a multi-scale L1
with a multi-scale structural-similarity term on an average-pooling
pyramid.  Stage 3 pairs an L1 feature-space distance (through a frozen
convolutional extractor) with a relativistic-average adversarial loss.
Every loss is differentiable through the tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import Conv2d, Layer, Linear

# multi-scale exponents and per-scale L1 weights
MS_BETA = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_OMEGA = (1.0, 0.5, 0.25, 0.125, 0.125)

STRUCTURE_LAMBDA = 1.0e3
PERCEPTION_ETA = 5.0e-3

_CS_FLOOR = 1e-8  # keeps fractional powers defined if a cs term dips <= 0


@dataclass
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    dynamic_range: float = 1.0

    @property
    def c1(self) -> float:
        return (0.01 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.dynamic_range) ** 2


@dataclass
class MsWeights:
    beta: tuple = MS_BETA
    omega: tuple = MS_OMEGA
    m_scales: int = 5

    def __post_init__(self):
        if len(self.beta) != self.m_scales or len(self.omega) != self.m_scales:
            raise ValueError(
                f"beta/omega must have m_scales={self.m_scales} entries, "
                f"got {len(self.beta)}/{len(self.omega)}"
            )
        if abs(sum(self.beta) - 1.0) > 1e-3:
            raise ValueError(f"beta exponents must sum to ~1, got {sum(self.beta)}")

    @classmethod
    def truncated(cls, m: int) -> "MsWeights":
        """Fewer scales with the exponents renormalized to sum to 1; used by
        the desk profile where patches are too small for five halvings."""
        if not 1 <= m <= 5:
            raise ValueError(f"m must be in 1..5, got {m}")
        if m == 5:
            return cls()
        bsum = sum(MS_BETA[:m])
        return cls(
            beta=tuple(b / bsum for b in MS_BETA[:m]),
            omega=MS_OMEGA[:m],
            m_scales=m,
        )


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """1-D gaussian taps normalized to sum to 1."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return (w / w.sum()).astype(np.float32)


def content_loss(sr, hr):
    """Mean absolute error over all elements."""
    if sr.shape != hr.shape:
        raise T.ShapeError(f"content_loss: shapes {sr.shape} vs {hr.shape} differ")
    return T.mean(T.absolute(T.sub(sr, hr)))


def _blur(x, win_col, win_row):
    """Separable gaussian blur, valid convolution, each channel independent."""
    n, c, h, w = x.shape
    flat = T.reshape(x, (n * c, 1, h, w))
    v = T.conv2d(flat, win_col)
    v = T.conv2d(v, win_row)
    _, _, ho, wo = v.shape
    return T.reshape(v, (n, c, ho, wo))


def _ssim_terms(x, y, params: SsimParams):
    """Per-image luminance and contrast-structure means, shape (N, 1, 1, 1).

    Local statistics use a gaussian window (valid region only) with the
    biased covariance estimator; channels are averaged.
    """
    if x.shape != y.shape:
        raise T.ShapeError(f"ssim: shapes {x.shape} vs {y.shape} differ")
    size = params.window_size
    if x.shape[2] < size or x.shape[3] < size:
        raise T.ShapeError(
            f"ssim: image {x.shape[2]}x{x.shape[3]} smaller than window {size}"
        )
    g = gaussian_window(size, params.window_sigma)
    win_col = T.Tensor(g.reshape(1, 1, size, 1))
    win_row = T.Tensor(g.reshape(1, 1, 1, size))

    mu_x = _blur(x, win_col, win_row)
    mu_y = _blur(y, win_col, win_row)
    xx = _blur(T.mul(x, x), win_col, win_row)
    yy = _blur(T.mul(y, y), win_col, win_row)
    xy = _blur(T.mul(x, y), win_col, win_row)

    var_x = T.sub(xx, T.mul(mu_x, mu_x))
    var_y = T.sub(yy, T.mul(mu_y, mu_y))
    cov = T.sub(xy, T.mul(mu_x, mu_y))

    c1, c2 = params.c1, params.c2
    l_map = T.div(
        T.add(T.scalar_mul(T.mul(mu_x, mu_y), 2.0), c1),
        T.add(T.add(T.mul(mu_x, mu_x), T.mul(mu_y, mu_y)), c1),
    )
    cs_map = T.div(
        T.add(T.scalar_mul(cov, 2.0), c2),
        T.add(T.add(var_x, var_y), c2),
    )
    return T.mean(l_map, axes=(1, 2, 3)), T.mean(cs_map, axes=(1, 2, 3))


def ssim(x, y, params: SsimParams | None = None):
    """Structural similarity, batch-meaned; returns (ssim, cs) scalars."""
    params = params or SsimParams()
    l_term, cs_term = _ssim_terms(x, y, params)
    return T.mean(T.mul(l_term, cs_term)), T.mean(cs_term)


def ms_ssim(x, y, weights: MsWeights | None = None, params: SsimParams | None = None):
    """Multi-scale structural similarity, batch-meaned scalar.

    Contrast-structure terms are taken at every scale of a 2x
    average-pooling pyramid, the luminance term only at the coarsest, and
    each factor is raised to its exponent.
    """
    weights = weights or MsWeights()
    params = params or SsimParams()
    m = weights.m_scales
    min_side = min(x.shape[2], x.shape[3])
    if min_side // (2 ** (m - 1)) < params.window_size:
        raise T.ShapeError(
            f"ms_ssim: {x.shape[2]}x{x.shape[3]} input is too small for "
            f"{m} scales with an {params.window_size}-tap window; reduce the "
            f"scale count (MsWeights.truncated)"
        )
    product = None
    cur_x, cur_y = x, y
    for j in range(m):
        l_term, cs_term = _ssim_terms(cur_x, cur_y, params)
        base = T.mul(l_term, cs_term) if j == m - 1 else cs_term
        factor = T.pow_const(T.clamp_min(base, _CS_FLOOR), weights.beta[j])
        product = factor if product is None else T.mul(product, factor)
        if j != m - 1:
            cur_x = T.avg_pool2d(cur_x, 2)
            cur_y = T.avg_pool2d(cur_y, 2)
    return T.mean(product)


def ms_l1(x, y, weights: MsWeights | None = None):
    """Weighted sum of per-scale mean absolute errors on the same pyramid."""
    weights = weights or MsWeights()
    if x.shape != y.shape:
        raise T.ShapeError(f"ms_l1: shapes {x.shape} vs {y.shape} differ")
    m = weights.m_scales
    if min(x.shape[2], x.shape[3]) // (2 ** (m - 1)) < 1:
        raise T.ShapeError(
            f"ms_l1: input {x.shape[2]}x{x.shape[3]} too small for {m} scales"
        )
    total = None
    cur_x, cur_y = x, y
    for j in range(m):
        term = T.scalar_mul(T.mean(T.absolute(T.sub(cur_x, cur_y))), weights.omega[j])
        total = term if total is None else T.add(total, term)
        if j != m - 1:
            cur_x = T.avg_pool2d(cur_x, 2)
            cur_y = T.avg_pool2d(cur_y, 2)
    return total


def structure_loss(sr, hr, weights: MsWeights | None = None,
                   params: SsimParams | None = None, lam: float = STRUCTURE_LAMBDA):
    """Multi-scale L1 plus lam * (1 - multi-scale SSIM)."""
    weights = weights or MsWeights()
    loss = ms_l1(sr, hr, weights)
    if lam != 0.0:
        dissim = T.sub(1.0, ms_ssim(sr, hr, weights, params))
        loss = T.add(loss, T.scalar_mul(dissim, lam))
    return loss


# ---------------------------------------------------------------------------
# relativistic-average adversarial losses


def ragan_d_loss(c_real, c_fake):
    """Discriminator loss on raw critic outputs.

    Uses batch means for the relativistic expectations and the softplus
    identity for the log-sigmoids, so it stays finite at any logit scale.
    """
    if c_real.shape != c_fake.shape:
        raise T.ShapeError(
            f"ragan: logit shapes {c_real.shape} vs {c_fake.shape} differ"
        )
    rel_real = T.sub(c_real, T.mean(c_fake))
    rel_fake = T.sub(c_fake, T.mean(c_real))
    # -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    return T.add(
        T.mean(T.softplus(T.scalar_mul(rel_real, -1.0))),
        T.mean(T.softplus(rel_fake)),
    )


def ragan_g_loss(c_real, c_fake):
    """Generator adversarial loss: the discriminator loss with the roles of
    real and fake swapped (same code path)."""
    return ragan_d_loss(c_fake, c_real)


# ---------------------------------------------------------------------------
# feature extractor and perceptual loss

# arch entries: ("conv", cout, kernel, stride, pad) / ("lrelu", slope) /
# ("relu",) / ("maxpool", k)
DESK_EXTRACTOR_ARCH = (
    ("conv", 16, 3, 2, 1), ("lrelu", 0.2),
    ("conv", 32, 3, 2, 1), ("lrelu", 0.2),
    ("conv", 64, 3, 2, 1), ("lrelu", 0.2),
    ("conv", 96, 3, 2, 1), ("lrelu", 0.2),
    ("conv", 128, 3, 2, 1), ("lrelu", 0.2),
)


class FeatureExtractor(Layer):
    """Frozen convolutional feature map with a named tap point.

    Built from a generic layer-spec list so externally exported weights
    (e.g. a deep 19-layer stack tapped before its fifth pooling) can be
    loaded through the same container format as model checkpoints.
    """

    def __init__(self, arch, tap: str, seed: int | None = None, in_channels: int = 3):
        super().__init__()
        self.arch = tuple(tuple(entry) for entry in arch)
        self.tap = tap
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence((0xFEA7, seed or 0)))
        self._ops = []
        cin = in_channels
        conv_idx = 0
        for entry in self.arch:
            kind = entry[0]
            if kind == "conv":
                _, cout, k, stride, pad = entry
                conv = self.add_child(
                    f"conv{conv_idx}",
                    Conv2d(rng, cin, cout, kernel=k, stride=stride, padding=pad),
                )
                self._ops.append(("conv", conv))
                cin = cout
                conv_idx += 1
            elif kind == "lrelu":
                self._ops.append(("lrelu", float(entry[1])))
            elif kind == "relu":
                self._ops.append(("lrelu", 0.0))
            elif kind == "maxpool":
                self._ops.append(("maxpool", int(entry[1])))
            else:
                raise ValueError(f"unknown extractor layer kind {kind!r}")
        self.freeze()

    def features(self, x):
        h = x
        for kind, arg in self._ops:
            if kind == "conv":
                h = arg(h)
            elif kind == "lrelu":
                h = T.leaky_relu(h, arg)
            else:
                h = T.max_pool2d(h, arg)
        return h


def desk_feature_extractor(seed: int = 717) -> FeatureExtractor:
    """The repo's default frozen extractor: a fixed-seed 5-stage strided CNN."""
    return FeatureExtractor(DESK_EXTRACTOR_ARCH, tap="stage5", seed=seed)


def identity_feature_extractor() -> FeatureExtractor:
    """Single 1x1 identity conv; reduces the perceptual loss to plain MAE."""
    fe = FeatureExtractor((("conv", 3, 1, 1, 0),), tap="identity", seed=0)
    w = fe._ops[0][1].weight
    w.data[:] = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    b = fe._ops[0][1].bias
    b.data[:] = 0.0
    return fe


def perceptual_loss(sr, hr, extractor: FeatureExtractor):
    """L1 distance between feature maps, normalized by the tensor volume.

    The extractor is frozen, so gradients flow only into `sr`.
    """
    feat_sr = extractor.features(sr)
    with T.no_grad():
        feat_hr = extractor.features(hr if not hr.requires_grad else hr.detach())
    return T.mean(T.absolute(T.sub(feat_sr, feat_hr.detach())))


def perception_total(sr, hr, c_real, c_fake, extractor: FeatureExtractor,
                     eta: float = PERCEPTION_ETA):
    """Perceptual term plus eta times the generator adversarial term."""
    loss = perceptual_loss(sr, hr, extractor)
    if eta != 0.0:
        loss = T.add(loss, T.scalar_mul(ragan_g_loss(c_real, c_fake), eta))
    return loss


# ---------------------------------------------------------------------------
# discriminator

# strided ladder reaching a 4x4 grid from 128-px inputs (6x6 from 192-px)
DEFAULT_CHANNEL_LADDER = (
    (64, 1), (64, 2), (128, 1), (128, 2), (256, 1), (256, 2),
    (512, 1), (512, 2), (512, 1), (512, 2),
)
DESK_CHANNEL_LADDER = ((32, 1), (32, 2), (64, 2), (128, 2), (128, 2))


@dataclass
class DiscriminatorConfig:
    input_size: int = 192
    channel_ladder: tuple = DEFAULT_CHANNEL_LADDER
    lrelu_slope: float = 0.2
    dense_width: int = 100

    def __post_init__(self):
        self.channel_ladder = tuple(tuple(e) for e in self.channel_ladder)
        stride_product = 1
        for _, s in self.channel_ladder:
            stride_product *= s
        if self.input_size % stride_product != 0:
            raise ValueError(
                f"input size {self.input_size} not divisible by the ladder's "
                f"total stride {stride_product}"
            )
        self.grid = self.input_size // stride_product

    @classmethod
    def desk(cls, input_size: int = 64) -> "DiscriminatorConfig":
        return cls(input_size=input_size, channel_ladder=DESK_CHANNEL_LADDER)


class Discriminator(Layer):
    """VGG-style critic: strided conv ladder with leaky rectifiers down to a
    small grid, then dense -> LReLU -> dense to one raw logit per image (no
    sigmoid; the relativistic losses consume raw outputs)."""

    def __init__(self, config: DiscriminatorConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence((0xD15C, seed)))
        cin = 3
        self.convs = []
        for i, (cout, stride) in enumerate(config.channel_ladder):
            conv = self.add_child(
                f"conv{i:02d}",
                Conv2d(rng, cin, cout, kernel=3, stride=stride, padding=1,
                       init_slope=config.lrelu_slope),
            )
            self.convs.append(conv)
            cin = cout
        flat = cin * config.grid * config.grid
        self.fc1 = self.add_child("fc1", Linear(rng, flat, config.dense_width))
        self.fc2 = self.add_child("fc2", Linear(rng, config.dense_width, 1))

    def __call__(self, image):
        n, c, h, w = image.shape
        if c != 3:
            raise T.ShapeError(f"discriminator expects RGB input, got {c} channels")
        if h != self.config.input_size or w != self.config.input_size:
            raise T.ShapeError(
                f"discriminator configured for {self.config.input_size}px inputs, "
                f"got {h}x{w}"
            )
        x = image
        for conv in self.convs:
            x = T.leaky_relu(conv(x), self.config.lrelu_slope)
        x = T.flatten_spatial(x)
        x = T.leaky_relu(self.fc1(x), self.config.lrelu_slope)
        return self.fc2(x)


def symmetric_start_loss() -> float:
    """Loss value when real and fake critic outputs coincide: 2 ln 2."""
    return 2.0 * math.log(2.0)
