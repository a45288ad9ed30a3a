"""Small vectorised numerical helpers shared across modules."""

import numpy as np

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_minimize(f, lo, hi, iters: int = 80, rtol: float = 1e-13):
    """Vectorised golden-section search of f on the brackets [lo, hi].

    f maps an array of abscissae (same shape as lo) to values.  Returns the
    abscissae and the minimum values found.  One evaluation of f per
    iteration; stops once every bracket is below rtol relative width.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc < fd
        # keep [a, d] where f(c) < f(d), else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        x_new = np.where(left, b - INV_PHI * (b - a), a + INV_PHI * (b - a))
        f_new = f(x_new)
        c, d, fc, fd = (np.where(left, x_new, d), np.where(left, c, x_new),
                        np.where(left, f_new, fd), np.where(left, fc, f_new))
        if np.all(b - a <= rtol * np.maximum(np.abs(a), np.abs(b))):
            break
    x = np.where(fc < fd, c, d)
    return x, np.minimum(fc, fd)


def bisect_increasing(g, target, lo, hi, tol: float = 1e-12, max_iter: int = 200):
    """Vectorised bisection for g(x) = target with g increasing on [lo, hi]."""
    target = np.asarray(target, dtype=float)
    a = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    b = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        below = g(mid) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
        if np.all(b - a <= tol):
            break
    return 0.5 * (a + b)

