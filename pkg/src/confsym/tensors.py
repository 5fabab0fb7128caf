"""Index gymnastics on jet-valued tensors, shared by surfaces and n-manifolds.

Conventions used throughout the package:

* ``gamma[a, b, c]`` is the connection component Γ^a_{bc}.
* Covariant derivatives append the derivative index last, so
  ``DT[j, k, l]`` is T_{jk,l} in comma notation.
* ``R[j, k, l, m]`` is R_{jkl}^m with
  R_{jkl}^m = ∂_kΓ^m_{jl} − ∂_jΓ^m_{kl} + Γ^m_{ks}Γ^s_{jl} − Γ^m_{js}Γ^s_{kl},
  i.e. R(u, v) = ∇_v∇_u − ∇_u∇_v + ∇_[u,v]. This is opposite to many
  textbooks; positive curvature (round spheres) still has positive Ricci.
* Ricci is the trace ρ_{jl} = R_{jsl}^s.
"""

import numpy as np

from . import jets as J

_IDX = "abcdfghijklmnopqrtuv"


def covariant_derivative(t, gamma, variance):
    """Covariant derivative of a tensor of jets.

    Parameters
    ----------
    t : Jet
        Batch ``(*B, *indices)``; the jet variables are the chart coordinates.
    gamma : Jet
        Connection components, batch ``(*B, d, d, d)``.
    variance : str
        One letter per tensor index, ``'l'`` for lower and ``'u'`` for upper.

    Returns
    -------
    Jet
        Batch ``(*B, *indices, d)``, one order lower than ``t``.
    """
    k = len(variance)
    idx = _IDX[:k]
    e, s = "e", "s"
    out = t.grad()
    t, gamma = t.truncate(out.order), gamma.truncate(out.order)
    for pos, kind in enumerate(variance):
        if kind == "l":
            src = idx[:pos] + s + idx[pos + 1:]
            term = J.einsum(f"...{src},...{s}{e}{idx[pos]}->...{idx}{e}", t, gamma)
            out = out - term
        elif kind == "u":
            src = idx[:pos] + s + idx[pos + 1:]
            term = J.einsum(f"...{src},...{idx[pos]}{e}{s}->...{idx}{e}", t, gamma)
            out = out + term
        else:
            raise ValueError(f"unknown variance letter {kind!r}")
    return out


def covariant_derivative_curvature(t, gamma):
    """Covariant derivative of a 4-tensor with the algebraic symmetries of R.

    For t antisymmetric in each index pair and symmetric under pair exchange,
    the four connection terms are permutations of one contraction.
    """
    out = t.grad()
    t, gamma = t.truncate(out.order), gamma.truncate(out.order)
    t1 = J.einsum("...sbcd,...sea->...abcde", t, gamma)
    u = t1 - t1.moveaxis(-5, -4)
    u = u + J.Jet(np.swapaxes(np.swapaxes(u.coeffs, -6, -4), -5, -3), u.dim, u.order)
    return out - u


def curvature_from_gamma(gamma):
    """Jets of R_{jkl}^m from jets of Γ (one order lost)."""
    dg = gamma.grad()                       # dg[m, j, l, k] = ∂_k Γ^m_{jl}
    r = J.einsum("...mjlk->...jklm", dg) - J.einsum("...mklj->...jklm", dg)
    g = gamma.truncate(dg.order)
    q = J.einsum("...mks,...sjl->...jklm", g, g)
    return r + q - _swap01(q)


def _swap01(t):
    """Exchange the first two of the last four tensor indices."""
    return t.moveaxis(-4, -3) if isinstance(t, J.Jet) else np.swapaxes(t, -4, -3)


def _swap23(t):
    return t.moveaxis(-2, -1) if isinstance(t, J.Jet) else np.swapaxes(t, -2, -1)


def ricci_from_curvature(r):
    return J.einsum("...jsls->...jl", r)


def wedge(tau, lam):
    """(τ∧λ)_{jklm} = τ_{jl}λ_{km} − τ_{jm}λ_{kl} − τ_{kl}λ_{jm} + τ_{km}λ_{jl}."""
    ein = J.einsum if isinstance(tau, J.Jet) or isinstance(lam, J.Jet) else np.einsum
    p = ein("...jl,...km->...jklm", tau, lam)
    p = p - _swap23(p)
    return p - _swap01(p)


def symmetric_part(t):
    return 0.5 * (t + t.moveaxis(-1, -2)) if isinstance(t, J.Jet) else 0.5 * (t + np.swapaxes(t, -1, -2))
