"""Image I/O, the bicubic degradation model, patch sampling and augmentation.

The resize implements separable cubic convolution (Keys kernel, a = -0.5)
with the kernel widened by the scale factor on downscale (antialiasing) and
edge-replicated boundaries.  Degradation always runs on the full image
before any patch is cut, so patch borders carry realistic ringing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor import Tensor


class DataError(ValueError):
    """Image decoding / dataset layout problem; message names the file."""


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Keys cubic with a = -0.5."""
    a = np.abs(t)
    a2, a3 = a * a, a * a * a
    return np.where(
        a <= 1.0,
        1.5 * a3 - 2.5 * a2 + 1.0,
        np.where(a < 2.0, -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0, 0.0),
    )


def _axis_weights(n_in: int, n_out: int):
    """Per-output-row tap indices and weights for one axis.

    On downscale the kernel is stretched by the scale factor so it acts as
    an antialiasing low-pass.  Out-of-range taps are clamped to the edge
    (replication) and each row is normalized to sum to 1.
    """
    scale = n_in / n_out
    kscale = max(scale, 1.0)
    support = 2.0 * kscale
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    left = np.floor(centers - support).astype(np.int64) + 1
    n_taps = int(np.ceil(2.0 * support)) + 2
    idx = left[:, None] + np.arange(n_taps)[None, :]
    weights = _cubic_kernel((centers[:, None] - idx) / kscale) / kscale
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    return idx, weights


def bicubic_resize(img: Tensor, out_h: int, out_w: int) -> Tensor:
    """Separable cubic-convolution resize of an (N, C, H, W) tensor."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be >= 1, got {out_h}x{out_w}")
    data = img.data.astype(np.float64)
    n, c, h, w = data.shape

    idx_h, w_h = _axis_weights(h, out_h)
    # gather (N, C, out_h, taps, W) then weight-sum the taps
    rows = data[:, :, idx_h, :]
    data = np.einsum("nchtw,ht->nchw", rows, w_h, optimize=True)

    idx_w, w_w = _axis_weights(w, out_w)
    cols = data[:, :, :, idx_w]
    data = np.einsum("nchwt,wt->nchw", cols, w_w, optimize=True)
    return Tensor(data.astype(np.float32))


def add_awgn(img: Tensor, sigma_255: float, seed) -> Tensor:
    """Gaussian noise with std sigma/255, clamped to [0, 1]; deterministic
    per seed."""
    if sigma_255 < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma_255}")
    if sigma_255 == 0:
        return Tensor(img.data.copy())
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma_255 / 255.0, size=img.shape)
    return Tensor(np.clip(img.data + noise, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# image files


def load_image(path) -> Tensor:
    """8-bit RGB PNG (or any Pillow-decodable RGB file) -> (1, 3, H, W) in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise DataError(f"{path}: expected 8-bit RGB, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: failed to decode ({exc})") from exc
    chw = arr.astype(np.float32).transpose(2, 0, 1) / 255.0
    return Tensor(chw[None])


def save_image(img: Tensor, path) -> None:
    """Clamp to [0, 1], quantize with round-half-up, write PNG."""
    path = Path(path)
    data = img.data
    if data.shape[0] != 1 or data.shape[1] != 3:
        raise ValueError(f"save_image expects a (1, 3, H, W) tensor, got {data.shape}")
    clipped = np.clip(data[0], 0.0, 1.0)
    bytes_ = np.floor(clipped * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(bytes_.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# dataset plumbing


@dataclass
class DatasetManifest:
    """Root directory plus relative image paths, one per line in the file."""

    root: Path
    names: list
    lr_dir: Path | None = None
    split: str = "train"

    @classmethod
    def from_file(cls, manifest_path, root=None, lr_dir=None, split="train"):
        manifest_path = Path(manifest_path)
        if not manifest_path.is_file():
            raise DataError(f"{manifest_path}: manifest file not found")
        names = []
        for line in manifest_path.read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
        if not names:
            raise DataError(f"{manifest_path}: manifest lists no images")
        return cls(
            root=Path(root) if root else manifest_path.parent,
            names=names,
            lr_dir=Path(lr_dir) if lr_dir else None,
            split=split,
        )

    def hr_path(self, name: str) -> Path:
        return self.root / name

    def lr_path(self, name: str) -> Path | None:
        return self.lr_dir / name if self.lr_dir is not None else None


@dataclass
class DegradationSpec:
    kind: str = "bicubic"  # "bicubic" | "bicubic+awgn"
    sigma_255: float = 0.0
    scale: int = 4

    def label(self) -> str:
        if self.kind == "bicubic+awgn":
            return f"bicubic+awgn({self.sigma_255:g})"
        return "bicubic"

    @classmethod
    def parse(cls, text: str) -> "DegradationSpec":
        """Accepts 'bicubic' or 'awgn:SIGMA'."""
        text = text.strip()
        if text == "bicubic":
            return cls()
        if text.startswith("awgn:"):
            sigma = float(text.split(":", 1)[1])
            if sigma < 0:
                raise ValueError(f"noise sigma must be >= 0, got {sigma}")
            return cls(kind="bicubic+awgn", sigma_255=sigma)
        raise ValueError(f"unknown degradation spec {text!r}")


@dataclass
class ImagePair:
    """Aligned LR/HR patch pair with provenance."""

    lr: Tensor
    hr: Tensor
    degradation: str = "bicubic"
    augmentation: dict = field(default_factory=lambda: {"hflip": False, "rot90": 0})


@dataclass
class PairSource:
    """A full HR image with its full pre-degraded LR counterpart."""

    name: str
    hr: Tensor
    lr: Tensor
    degradation: str


def crop_to_scale_multiple(img: Tensor, scale: int = 4) -> Tensor:
    _, _, h, w = img.shape
    h4, w4 = (h // scale) * scale, (w // scale) * scale
    if h4 < scale or w4 < scale:
        raise DataError(f"image {h}x{w} too small for scale {scale}")
    if (h4, w4) == (h, w):
        return img
    return Tensor(np.ascontiguousarray(img.data[:, :, :h4, :w4]))


def degrade_image(hr: Tensor, spec: DegradationSpec, seed=None) -> Tensor:
    """Full-image degradation: bicubic 1/scale, then optional noise."""
    hr = crop_to_scale_multiple(hr, spec.scale)
    _, _, h, w = hr.shape
    lr = bicubic_resize(hr, h // spec.scale, w // spec.scale)
    if spec.kind == "bicubic+awgn":
        lr = add_awgn(lr, spec.sigma_255, seed)
    return lr


def make_pair_source(name, hr: Tensor, spec: DegradationSpec, seed=None) -> PairSource:
    hr = crop_to_scale_multiple(hr, spec.scale)
    return PairSource(
        name=name, hr=hr, lr=degrade_image(hr, spec, seed), degradation=spec.label()
    )


def sample_patch_origin(source: PairSource, hr_patch: int, rng) -> tuple:
    """Random HR crop origin, always a multiple of the scale so the LR crop
    lands on exact pixels."""
    scale = 4
    _, _, h, w = source.hr.shape
    if h < hr_patch or w < hr_patch:
        raise DataError(
            f"{source.name}: image {h}x{w} smaller than patch size {hr_patch}"
        )
    if hr_patch % scale != 0:
        raise ValueError(f"hr_patch must be a multiple of {scale}, got {hr_patch}")
    oy = int(rng.integers(0, (h - hr_patch) // scale + 1)) * scale
    ox = int(rng.integers(0, (w - hr_patch) // scale + 1)) * scale
    return oy, ox


def sample_patch_pair(source: PairSource, hr_patch: int, rng) -> ImagePair:
    """Random aligned crop from the pre-degraded full-image pair."""
    scale = 4
    oy, ox = sample_patch_origin(source, hr_patch, rng)
    hr_crop = source.hr.data[:, :, oy : oy + hr_patch, ox : ox + hr_patch]
    lp = hr_patch // scale
    lr_crop = source.lr.data[
        :, :, oy // scale : oy // scale + lp, ox // scale : ox // scale + lp
    ]
    return ImagePair(
        lr=Tensor(np.ascontiguousarray(lr_crop)),
        hr=Tensor(np.ascontiguousarray(hr_crop)),
        degradation=source.degradation,
    )


def apply_augment(pair: ImagePair, hflip: bool, rot: int) -> ImagePair:
    """Horizontal flip then k*90-degree rotation, same transform at both
    resolutions; the transform is recorded on the returned pair."""
    lr, hr = pair.lr.data, pair.hr.data
    if hflip:
        lr, hr = lr[:, :, :, ::-1], hr[:, :, :, ::-1]
    if rot:
        lr = np.rot90(lr, rot, axes=(2, 3))
        hr = np.rot90(hr, rot, axes=(2, 3))
    return ImagePair(
        lr=Tensor(np.ascontiguousarray(lr)),
        hr=Tensor(np.ascontiguousarray(hr)),
        degradation=pair.degradation,
        augmentation={"hflip": hflip, "rot90": rot},
    )


def augment(pair: ImagePair, rng) -> ImagePair:
    """Random flip/rotation draw."""
    return apply_augment(pair, bool(rng.integers(0, 2)), int(rng.integers(0, 4)))


def load_sources(manifest: DatasetManifest, spec: DegradationSpec, seed=0):
    """Decode every manifest image and build degraded pair sources.

    When the manifest carries a pre-degraded LR directory (externally
    compressed inputs), those files are used instead of the internal
    degradation.
    """
    sources = []
    for i, name in enumerate(manifest.names):
        hr = load_image(manifest.hr_path(name))
        lr_path = manifest.lr_path(name)
        if lr_path is not None:
            hr = crop_to_scale_multiple(hr, spec.scale)
            lr = load_image(lr_path)
            _, _, h, w = hr.shape
            if lr.shape[2:] != (h // spec.scale, w // spec.scale):
                raise DataError(
                    f"{lr_path}: LR size {lr.shape[2:]} does not match HR/{spec.scale}"
                )
            sources.append(
                PairSource(name=name, hr=hr, lr=lr, degradation="external")
            )
        else:
            sources.append(
                make_pair_source(
                    name, hr, spec,
                    seed=np.random.SeedSequence((seed, 0xDE64, i)),
                )
            )
    return sources
