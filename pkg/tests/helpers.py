"""Shared test utilities: finite-difference gradient oracle."""

import numpy as np

from tgtransfer.numerics import backward


def assert_grads_match_fd(build_loss, tensors, rng, n_coords=4, h=1e-5, tol=1e-4):
    """Check autodiff grads of a scalar loss against central differences.

    `build_loss` must rebuild the forward pass from the tensors' current
    data on every call. A few coordinates per tensor are sampled; relative
    error uses max(|fd|, |ad|, 1e-3) as denominator so near-zero gradients
    do not blow up the ratio.
    """
    for t in tensors:
        t.grad = None
    loss = build_loss()
    backward(loss)
    for t in tensors:
        assert t.grad is not None, "no gradient reached a checked tensor"
        n = min(n_coords, t.data.size)
        picks = rng.choice(t.data.size, size=n, replace=False)
        for flat in picks:
            idx = np.unravel_index(flat, t.data.shape)
            orig = t.data[idx]
            t.data[idx] = orig + h
            hi = float(build_loss().data)
            t.data[idx] = orig - h
            lo = float(build_loss().data)
            t.data[idx] = orig
            fd = (hi - lo) / (2.0 * h)
            ad = t.grad[idx]
            denom = max(abs(fd), abs(ad), 1e-3)
            rel = abs(fd - ad) / denom
            assert rel < tol, f"coord {idx}: fd={fd:.10g} ad={ad:.10g} rel={rel:.3g}"
