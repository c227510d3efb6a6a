"""Shared test utilities: finite-difference gradient checking and seeded
random tensors."""

import numpy as np
import pytest

from ppon import tensor as T


def rand_tensor(rng, shape, requires_grad=False, low=-1.0, high=1.0):
    data = rng.uniform(low, high, size=shape).astype(np.float32)
    return T.Tensor(data, requires_grad=requires_grad)


def central_diff(forward_fn, array, index, h=1e-3):
    """Central finite difference of a scalar-valued forward w.r.t. one
    element of `array` (mutated in place and restored)."""
    original = array.flat[index]
    array.flat[index] = original + h
    with T.no_grad():
        up = forward_fn().item()
    array.flat[index] = original - h
    with T.no_grad():
        down = forward_fn().item()
    array.flat[index] = original
    return (up - down) / (2.0 * h)


def check_gradients(forward_fn, tensors, rng=None, h=1e-3, rel=1e-2, abs_tol=1e-4,
                    max_checks_per_tensor=None):
    """Compare tape gradients against central differences.

    `forward_fn` rebuilds the graph and returns the scalar loss.  Passes
    when |analytic - numeric| <= max(abs_tol, rel * max(|analytic|, |numeric|))
    for every checked element.  With `max_checks_per_tensor`, a seeded
    random subset of elements is checked instead of all of them.
    """
    for t in tensors:
        t.grad = None
    T.active_tape().clear()
    loss = forward_fn()
    T.backward(loss)

    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "tensor received no gradient"
        n = t.data.size
        if max_checks_per_tensor and n > max_checks_per_tensor:
            picker = rng or np.random.default_rng(0)
            indices = picker.choice(n, size=max_checks_per_tensor, replace=False)
        else:
            indices = range(n)
        for index in indices:
            analytic = float(t.grad.flat[index])
            # float32 losses cannot resolve tiny per-element wiggles at small
            # h; widen the step before calling a mismatch
            err = tol = None
            for step in (h, 10 * h, 40 * h, h / 4, h / 16):
                numeric = central_diff(forward_fn, t.data, index, step)
                tol = max(abs_tol, rel * max(abs(analytic), abs(numeric)))
                err = abs(analytic - numeric)
                if err <= tol:
                    break
            worst = max(worst, err - tol)
            assert err <= tol, (
                f"gradient mismatch at flat index {index}: "
                f"analytic {analytic:.6g} vs numeric {numeric:.6g} (tol {tol:.2g})"
            )
    return worst


def check_directional(forward_fn, tensors, h=1e-2, rel=1e-2):
    """Central difference along each tensor's own (normalized) gradient.

    The projection of the gradient onto its own direction is the largest
    signal available, which keeps the check meaningful for losses whose
    float32 quantization drowns per-element wiggles.
    """
    for t in tensors:
        t.grad = None
    T.active_tape().clear()
    loss = forward_fn()
    T.backward(loss)
    for t in tensors:
        assert t.grad is not None, "tensor received no gradient"
        g = t.grad.astype(np.float64)
        norm = np.linalg.norm(g)
        assert norm > 0, "zero gradient, nothing to check"
        direction = (g / norm).astype(np.float32)
        t.data += h * direction
        with T.no_grad():
            up = forward_fn().item()
        t.data -= 2 * h * direction
        with T.no_grad():
            down = forward_fn().item()
        t.data += h * direction
        numeric = (up - down) / (2.0 * h)
        assert abs(numeric - norm) <= rel * max(abs(numeric), norm), (
            f"directional derivative mismatch: analytic {norm:.6g} "
            f"vs numeric {numeric:.6g}"
        )


@pytest.fixture(autouse=True)
def _clean_tape():
    T.active_tape().clear()
    yield
    T.active_tape().clear()
