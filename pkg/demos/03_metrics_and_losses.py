"""The measurement stack: structural similarity at one and many scales,
the relativistic adversarial pair, and luma-channel PSNR.

Run:  python demos/03_metrics_and_losses.py
"""

import math

import numpy as np

from ppon import tensor as T
from ppon.data import bicubic_resize
from ppon.fixture import fixture_images
from ppon.losses import (
    MsWeights,
    ms_l1,
    ms_ssim,
    ragan_d_loss,
    ragan_g_loss,
    ssim,
    structure_loss,
)
from ppon.metrics import psnr, rgb_to_y, ssim_y

hr = fixture_images()["glyphs_a.png"]
blurry = bicubic_resize(bicubic_resize(hr, 64, 64), 256, 256)  # 4x round trip
noisy = T.Tensor(np.clip(
    hr.data + np.random.default_rng(0).normal(0, 0.05, hr.shape), 0, 1
).astype(np.float32))

print("pairing a glyph card against two corruptions:")
for name, img in (("blurry", blurry), ("noisy", noisy)):
    s, _ = ssim(img, hr)
    m = ms_ssim(img, hr)
    p = psnr(rgb_to_y(img), rgb_to_y(hr))
    print(f"  {name:6s}: psnr-y {p:6.2f} dB  ssim {s.item():.4f}  ms-ssim {m.item():.4f}")

# The structure objective: multi-scale L1 plus a heavily weighted
# multi-scale dissimilarity term.
print(f"\nstructure loss (blurry): {structure_loss(blurry, hr).item():.4f}")
print(f"  ms-l1 part: {ms_l1(blurry, hr).item():.4f}")
print(f"  weights: beta {MsWeights().beta}")

# Relativistic average losses on raw critic outputs. A constant batch sits
# exactly at the symmetric point 2 ln 2; a separated one rewards the critic.
flat = T.Tensor(np.full((4, 1, 1, 1), 0.3, np.float32))
print(f"\nsymmetric critic start: d-loss {ragan_d_loss(flat, flat).item():.6f} "
      f"(2 ln 2 = {2 * math.log(2):.6f})")
real = T.Tensor(np.full((4, 1, 1, 1), 4.0, np.float32))
fake = T.Tensor(np.full((4, 1, 1, 1), -4.0, np.float32))
print(f"separated critic:       d-loss {ragan_d_loss(real, fake).item():.6f} "
      f"g-loss {ragan_g_loss(real, fake).item():.6f}")
print(f"swap identity: g(a,b) == d(b,a): "
      f"{ragan_g_loss(real, fake).item() == ragan_d_loss(fake, real).item()}")
