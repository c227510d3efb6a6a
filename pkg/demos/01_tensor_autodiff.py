"""Tour of the tensor engine: building a graph, reverse-mode gradients,
and the freeze contract the staged training relies on.

Run:  python demos/01_tensor_autodiff.py
"""

import numpy as np

from ppon import tensor as T

# Everything is a rank-4 NCHW float32 tensor; scalars are 1x1x1x1.
x = T.Tensor(np.linspace(-1, 1, 12, dtype=np.float32).reshape(1, 3, 2, 2),
             requires_grad=True)
w = T.Parameter(np.random.default_rng(0).standard_normal((4, 3, 3, 3)).astype(np.float32))


def forward():
    y = T.leaky_relu(T.conv2d(x, w, padding=2, dilation=2), 0.2)
    return T.mean(T.mul(y, y))


loss = forward()
print(f"forward: loss {loss.item():.6f}")

# Reverse-mode sweep: gradients accumulate into the leaves, tape is consumed.
T.backward(loss)
print(f"grad shapes: x {x.grad.shape}, w {w.grad.shape}")
print(f"|dL/dw| mean: {np.abs(w.grad).mean():.6f}")

# Compare one weight gradient against a central finite difference.
idx = 5
analytic = float(w.grad.flat[idx])
h = 1e-2
w.data.flat[idx] += h
with T.no_grad():
    up = forward().item()
w.data.flat[idx] -= 2 * h
with T.no_grad():
    down = forward().item()
w.data.flat[idx] += h
print(f"gradient check: analytic {analytic:.6f} vs numeric {(up - down) / (2 * h):.6f}")

# Frozen parameters are skipped by the optimizer and never even receive
# gradients -- the mechanism behind the stage-wise freeze training.
w.grad = None
w.freeze()
z = T.conv2d(x, w, padding=1)
T.backward(T.mean(z))
print(f"frozen parameter: grad is {w.grad}, accumulation count {w.grad_accums}")

before = w.data.copy()
w.grad = np.ones_like(w.data)  # even a planted gradient is ignored
T.adam_step([w], lr=0.1)
print(f"frozen bytes unchanged after adam step: {np.array_equal(before, w.data)}")
