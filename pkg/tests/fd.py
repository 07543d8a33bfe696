"""Central finite-difference oracle shared by the gradient tests.

rel_err floors its denominator at 1e-6 so gradients that vanish identically
(a bias feeding batch-norm) compare on absolute error.
"""

import numpy as np


def numeric_grad(f, arr, h=1e-4):
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-6))
