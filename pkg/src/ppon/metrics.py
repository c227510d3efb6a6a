"""Evaluation-time metrics (PSNR / SSIM / MS-SSIM on the luma channel) and
dataset-level reporting.

Luma uses the BT.601 studio-swing convention common in super-resolution
benchmarking: Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255.  PSNR and
the similarity metrics shave a configurable border (default: the scale
factor, 4 px) from both images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import (
    DatasetManifest,
    DegradationSpec,
    crop_to_scale_multiple,
    degrade_image,
    load_image,
)
from .losses import MsWeights, SsimParams, ms_ssim, ssim
from .train import load_checkpoint

PSNR_INF = float("inf")


def rgb_to_y(img: T.Tensor) -> T.Tensor:
    """(N, 3, H, W) RGB in [0, 1] -> (N, 1, H, W) studio-swing luma."""
    if img.shape[1] != 3:
        raise T.ShapeError(f"rgb_to_y expects 3 channels, got {img.shape[1]}")
    r, g, b = img.data[:, 0:1], img.data[:, 1:2], img.data[:, 2:3]
    y = (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
    return T.Tensor(y.astype(np.float32))


def _shave(a: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return a
    if a.shape[2] <= 2 * border or a.shape[3] <= 2 * border:
        raise ValueError(
            f"shave {border} leaves no pixels on a {a.shape[2]}x{a.shape[3]} image"
        )
    return a[:, :, border:-border, border:-border]


def psnr(x: T.Tensor, y: T.Tensor, border_shave: int = 4, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE) over the shaved region; +inf for identical
    inputs."""
    if x.shape != y.shape:
        raise T.ShapeError(f"psnr: shapes {x.shape} vs {y.shape} differ")
    if border_shave < 0:
        raise ValueError(f"border_shave must be >= 0, got {border_shave}")
    a = _shave(x.data, border_shave).astype(np.float64)
    b = _shave(y.data, border_shave).astype(np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(data_range * data_range / mse)


def ssim_y(x: T.Tensor, y: T.Tensor, border_shave: int = 4,
           params: SsimParams | None = None) -> float:
    """SSIM on the shaved luma channel."""
    a = T.Tensor(_shave(rgb_to_y(x).data, border_shave))
    b = T.Tensor(_shave(rgb_to_y(y).data, border_shave))
    with T.no_grad():
        value, _ = ssim(a, b, params)
    return value.item()


def ms_ssim_y(x: T.Tensor, y: T.Tensor, border_shave: int = 4, scales: int = 5,
              params: SsimParams | None = None) -> float:
    """Multi-scale SSIM on the shaved luma channel."""
    a = T.Tensor(_shave(rgb_to_y(x).data, border_shave))
    b = T.Tensor(_shave(rgb_to_y(y).data, border_shave))
    with T.no_grad():
        value = ms_ssim(a, b, MsWeights.truncated(scales), params)
    return value.item()


@dataclass
class EvalReport:
    """Per-image metric rows plus dataset-level means and a config echo."""

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def aggregate(self):
        """Arithmetic means of every numeric metric over the row set."""
        self.aggregates = {}
        if not self.rows:
            return self
        keys = [k for k, v in self.rows[0].items() if isinstance(v, (int, float))]
        for k in keys:
            vals = [row[k] for row in self.rows if k in row]
            self.aggregates[k] = float(np.mean(vals)) if vals else None
        return self

    def to_jsonl(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(json.dumps({"record": "config", **self.config}) + "\n")
            for row in self.rows:
                fh.write(json.dumps({"record": "image", **row}) + "\n")
            for fail in self.failures:
                fh.write(json.dumps({"record": "failure", **fail}) + "\n")
            fh.write(json.dumps({"record": "aggregate", **self.aggregates}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "EvalReport":
        report = cls()
        for line in Path(path).read_text().splitlines():
            row = json.loads(line)
            kind = row.pop("record")
            if kind == "config":
                report.config = row
            elif kind == "image":
                report.rows.append(row)
            elif kind == "failure":
                report.failures.append(row)
            elif kind == "aggregate":
                report.aggregates = row
        return report

    def to_text_table(self) -> str:
        """Fixed-width table, one row per image plus the mean row."""
        if not self.rows:
            return "(no results)\n"
        metric_keys = [
            k for k, v in self.rows[0].items() if isinstance(v, (int, float))
        ]
        name_w = max(len("image"), max(len(str(r.get("image", ""))) for r in self.rows))
        header = "image".ljust(name_w) + "".join(k.rjust(16) for k in metric_keys)
        lines = [header, "-" * len(header)]

        def fmt(v):
            if v is None:
                return "n/a".rjust(16)
            if math.isinf(v):
                return "inf".rjust(16)
            return f"{v:.4f}".rjust(16)

        for row in self.rows:
            lines.append(
                str(row.get("image", "")).ljust(name_w)
                + "".join(fmt(row.get(k)) for k in metric_keys)
            )
        lines.append("-" * len(header))
        lines.append(
            "mean".ljust(name_w)
            + "".join(fmt(self.aggregates.get(k)) for k in metric_keys)
        )
        return "\n".join(lines) + "\n"


def evaluate_dataset(checkpoint, manifest: DatasetManifest, alpha_list=(1.0,),
                     degradation: DegradationSpec | None = None, shave: int = 4,
                     ms_scales: int = 5, seed: int = 0) -> EvalReport:
    """Degrade, super-resolve and score every manifest image.

    For each image the report carries PSNR-Y / SSIM-Y / MS-SSIM-Y of the
    content and structure outputs and of the perceptual output at every
    requested blend factor.  Per-image failures are recorded and evaluation
    continues.
    """
    degradation = degradation or DegradationSpec()
    if isinstance(checkpoint, (str, Path)):
        model, _ = load_checkpoint(checkpoint)
    else:
        model = checkpoint
    report = EvalReport(
        config={
            "alpha_list": list(alpha_list),
            "degradation": degradation.label(),
            "shave": shave,
            "ms_scales": ms_scales,
            "model_config": model.config.to_dict(),
        }
    )
    for index, name in enumerate(manifest.names):
        try:
            hr = load_image(manifest.hr_path(name))
            hr = crop_to_scale_multiple(hr, degradation.scale)
            lr = degrade_image(
                hr, degradation, seed=np.random.SeedSequence((seed, 0xE7A1, index))
            )
            row = {"image": name}
            outputs = model.infer(lr, alpha=1.0)
            targets = {"sr_c": outputs.sr_c, "sr_s": outputs.sr_s}
            with T.no_grad():
                for alpha in alpha_list:
                    _, sr_p = model.forward_perceptual(
                        outputs.f_s, outputs.sr_s, alpha
                    )
                    targets[f"sr_p@{alpha:g}"] = sr_p
            for key, sr in targets.items():
                clipped = T.Tensor(np.clip(sr.data, 0.0, 1.0))
                row[f"psnr_y/{key}"] = psnr(clipped, hr, shave)
                row[f"ssim_y/{key}"] = ssim_y(clipped, hr, shave)
                row[f"ms_ssim_y/{key}"] = ms_ssim_y(clipped, hr, shave, ms_scales)
            report.rows.append(row)
        except Exception as exc:  # per-image failure; keep going
            report.failures.append({"image": name, "error": str(exc)})
    return report.aggregate()
