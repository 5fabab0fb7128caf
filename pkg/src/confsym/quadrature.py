"""Adaptive Gauss-Legendre quadrature for batched, vector-valued integrands."""

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when adaptive refinement fails to reach the requested tolerance."""


@lru_cache(maxsize=None)
def _rule(degree):
    nodes, weights = np.polynomial.legendre.leggauss(degree)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def adaptive_gauss_legendre(fn, lo, hi, atol=1e-10, degree=10, max_level=30,
                            max_intervals=20000):
    """Integrate ``fn`` over ``[lo, hi]`` for a batch of intervals at once.

    Every interval is mapped to the unit interval ``s in [0, 1]``. Panels in
    ``s`` are bisected until the Gauss-Legendre value on a panel agrees with
    the sum over its two halves to ``atol`` times the panel width, for every
    batch entry and every integrand component simultaneously.

    Parameters
    ----------
    fn : callable
        ``fn(t)`` receives nodes of shape ``(*batch, m)`` and returns an array
        of shape ``(*batch, m, *out)``.
    lo, hi : array_like
        Interval endpoints with shape ``batch`` (scalars allowed).
    atol : float
        Absolute tolerance on the final integral.
    degree : int
        Number of Gauss-Legendre nodes per panel.

    Returns
    -------
    ndarray
        Integrals of shape ``(*batch, *out)``.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    width = hi - lo
    x, w = _rule(degree)

    def panel_values(a, b):
        # a, b: (q,) panel ends in s; returns (q, *batch, *out)
        s = a[:, None] + np.outer(b - a, x)                     # (q, m)
        t = lo[..., None] + width[..., None] * s.reshape(-1)   # (*batch, q*m)
        vals = np.asarray(fn(t))
        nb = lo.ndim
        vals = vals.reshape(lo.shape + (len(a), degree) + vals.shape[nb + 1:])
        vals = np.moveaxis(vals, nb, 0)                         # (q, *batch, m, *out)
        wts = (b - a)[:, None] * w                              # (q, m)
        wts = wts.reshape((len(a),) + (1,) * nb + (degree,) + (1,) * (vals.ndim - nb - 2))
        scale = width.reshape(width.shape + (1,) * (vals.ndim - nb - 2))
        return (vals * wts).sum(axis=nb + 1) * scale

    a = np.array([0.0])
    b = np.array([1.0])
    coarse = panel_values(a, b)
    total = np.zeros(coarse.shape[1:])
    for _ in range(max_level):
        mid = 0.5 * (a + b)
        halves = panel_values(np.r_[a, mid], np.r_[mid, b])
        q = len(a)
        refined = halves[:q] + halves[q:]
        err = np.abs(refined - coarse).reshape(q, -1).max(axis=1) if refined.size else np.zeros(q)
        done = err <= atol * (b - a) + 1e-15 * np.abs(refined).reshape(q, -1).max(axis=1, initial=0.0)
        total = total + refined[done].sum(axis=0)
        if done.all():
            return total
        keep = ~done
        a, b = np.r_[a[keep], mid[keep]], np.r_[mid[keep], b[keep]]
        coarse = np.concatenate([halves[:q][keep], halves[q:][keep]])
        if len(a) > max_intervals:
            break
    raise QuadratureError("adaptive Gauss-Legendre did not converge")
