"""Pure NumPy kernels; reference implementation and import fallback.

Every kernel takes 2-d ``(n_atoms, batch)`` float arrays so a batch of
functions is processed in one call.
"""
import numpy as np

NAME = "numpy"


def block_average(f, weights, labels, n_blocks):
    n, m = f.shape
    mass = np.bincount(labels, weights=weights, minlength=n_blocks)
    # normalise weights first: singleton blocks then reproduce f exactly
    share = np.zeros(n)
    pos = mass[labels] > 0
    share[pos] = weights[pos] / mass[labels][pos]
    if m == 1:
        avg = np.bincount(labels, weights=share * f[:, 0], minlength=n_blocks)[:, None]
    else:
        avg = np.zeros((n_blocks, m))
        np.add.at(avg, labels, share[:, None] * f)
    return avg[labels]


def apply_T(u, image, weights, labels, n_blocks, f):
    return block_average(u[:, None] * f[image], weights, labels, n_blocks)


def iterate_T(u, image, weights, labels, n_blocks, f, steps):
    g = np.array(f, dtype=float, copy=True)
    for _ in range(steps):
        g = apply_T(u, image, weights, labels, n_blocks, g)
    return g


def _norms(g, weights, p):
    a = np.abs(g)
    a[weights == 0] = 0.0  # null atoms carry no norm
    scale = a.max(axis=0, initial=0.0)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * (weights @ (a / safe) ** p) ** (1.0 / p)


def orbit_norms(u, image, weights, labels, n_blocks, f, steps, p):
    g = np.array(f, dtype=float, copy=True)
    out = np.empty((steps + 1, g.shape[1]))
    out[0] = _norms(g, weights, p)
    for s in range(1, steps + 1):
        g = apply_T(u, image, weights, labels, n_blocks, g)
        out[s] = _norms(g, weights, p)
    return out, g


def cocycle(e, image, steps):
    w = np.ones(e.size)
    cur = np.arange(e.size)
    for _ in range(steps):
        w = w * e[cur]
        cur = image[cur]
    return w


def preimage_mass(image, weights):
    return np.bincount(image, weights=weights, minlength=weights.size)
