"""Shared test utilities: finite differences and naive reference oracles."""

import numpy as np


def central_diff(loss_fn, params, step=1e-4):
    """Central finite-difference gradient of loss_fn() wrt each array in
    params, perturbing entries in place."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst relative deviation between two gradient lists; small entries
    compare absolutely against the floor."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def naive_sum_rate(h, w, noise_power, squared=False):
    """Straight-line per-user evaluation of the achieved sum rate."""
    num_users = h.shape[0]
    total = 0.0
    for u in range(num_users):
        sig = abs(complex(h[u] @ w[:, u]))
        interf = sum(abs(complex(h[u] @ w[:, v]))
                     for v in range(num_users) if v != u)
        if squared:
            sig = sig ** 2
            interf = sum(abs(complex(h[u] @ w[:, v])) ** 2
                         for v in range(num_users) if v != u)
        total += np.log2(1.0 + sig / (noise_power + interf))
    return total
