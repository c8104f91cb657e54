"""Central finite-difference verification of reverse-mode gradients."""

import numpy as np

from .tensor import Tape, backward, no_grad


def finite_diff_check(f, params, step=1e-5):
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor, deterministic
    and differentiable in a neighborhood of the current parameter values
    (dropout off, no ties at max/relu kinks). ``params`` maps names to
    parameter Tensors. Returns the max over all parameter elements of

        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    """
    for t in params.values():
        t.grad = None
    with Tape():
        loss = f()
        backward(loss)
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in params.items()}

    worst = 0.0
    worst_name = None
    with no_grad():
        for name, t in params.items():
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = f().item()
                flat[i] = orig - step
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * step)
                a = analytic[name].reshape(-1)[i]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                if err > worst:
                    worst = err
                    worst_name = f"{name}[{i}]"
    return worst, worst_name
