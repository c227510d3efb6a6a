"""Naive reference convolution kept in-tree as the oracle for the fast path.

Deliberately written as six explicit loops over python lists with float64
accumulation; it shares no code with the im2col/GEMM implementation.
"""

from __future__ import annotations

import numpy as np


def conv2d_reference(x, weight, bias=None, stride: int = 1, padding: int = 0, dilation: int = 1):
    """Direct 6-nested-loop cross-correlation.

    Arguments are numpy arrays: x (N, Cin, H, W), weight (Cout, Cin, kH, kW),
    bias (Cout,) or None.  Returns a float32 array.
    """
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    assert cin == cin_w, "channel mismatch"
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (w + 2 * padding - dilation * (kw - 1) - 1) // stride + 1

    xl = x.astype(np.float64).tolist()
    wl = weight.astype(np.float64).tolist()
    bl = bias.astype(np.float64).tolist() if bias is not None else [0.0] * cout

    out = np.empty((n, cout, ho, wo), dtype=np.float64)
    for ni in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = bl[co]
                    for ci in range(cin):
                        plane = xl[ni][ci]
                        kern = wl[co][ci]
                        for ky in range(kh):
                            iy = oy * stride + ky * dilation - padding
                            if iy < 0 or iy >= h:
                                continue
                            row = plane[iy]
                            krow = kern[ky]
                            for kx in range(kw):
                                ix = ox * stride + kx * dilation - padding
                                if 0 <= ix < w:
                                    acc += row[ix] * krow[kx]
                    out[ni, co, oy, ox] = acc
    return out.astype(np.float32)
