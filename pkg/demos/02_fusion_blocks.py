"""Anatomy of the generator's building block: parallel dilated branches,
prefix-sum fusion, and the receptive field an impulse actually sees.

Run:  python demos/02_fusion_blocks.py
"""

import numpy as np

from ppon import tensor as T
from ppon.blocks import HFFB, HffbConfig, RRFB, RrfbConfig, hffb_param_count

cfg = HffbConfig(k_dilations=8, branch_channels=32, io_channels=64)
print(f"fusion block, K={cfg.k_dilations}: concat width {cfg.concat_channels}, "
      f"parameters {hffb_param_count(cfg):,}")

# Impulse probe: feed a single lit pixel and look at the support of each
# prefix-summed branch. Branch k is a single dilated conv (rate k), so the
# k-th prefix has support 2k+1 -- parallel branches, not a stacked chain.
probe_cfg = HffbConfig(k_dilations=8, branch_channels=1, io_channels=4)
rng = np.random.default_rng(0)
block = HFFB(rng, probe_cfg)
for name, p in block.named_parameters():
    if name.startswith("branch") and name.endswith("weight"):
        p.data[:] = 1.0
    elif name.endswith("bias"):
        p.data[:] = 0.0

size = 41
impulse = np.zeros((1, 4, size, size), np.float32)
impulse[0, :, size // 2, size // 2] = 1.0
with T.no_grad():
    ms = block.multi_scale(T.Tensor(impulse))
print("\nprefix-sum support (impulse response):")
for k in range(probe_cfg.k_dilations):
    plane = ms.data[0, k]
    rows = np.where(np.abs(plane).sum(axis=1) > 0)[0]
    span = rows.max() - rows.min() + 1
    print(f"  prefix {k + 1}: {span}x{span} pixels (expected {2 * (k + 1) + 1})")

# The residual-in-residual wrapper: three blocks chained inside a scaled
# outer skip. Zeroing every conv turns each inner block into the identity,
# so the outer skip adds 0.2 * x.
rrfb = RRFB(np.random.default_rng(1), RrfbConfig(n_hffb=3, hffb=probe_cfg))
for p in rrfb.parameters():
    p.data[:] = 0.0
x = T.Tensor(rng.random((1, 4, 8, 8), dtype=np.float32))
with T.no_grad():
    y = rrfb(x)
print(f"\nzero-weight residual-in-residual output == 1.2 * input: "
      f"{np.allclose(y.data, 1.2 * x.data)}")
