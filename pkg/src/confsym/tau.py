"""The operator 𝓛, its scalar form 𝓕, and a local solver for 𝓛τ = ε α⊗α.

For a symmetric 2-tensor τ on a surface with connection D and Ricci
tensor R,

    (𝓛τ)_{jklm} = τ_{mk,lj} − τ_{lk,mj} − τ_{mj,lk} + τ_{lj,mk}
                  + τ_{mk}R_{lj} − τ_{lk}R_{mj} − τ_{mj}R_{lk} + τ_{lj}R_{mk},

a 2-form valued in 2-forms, so its (1,2,1,2) component carries everything.
For a contravariant T, 𝓕T = T^{jk}_{,jk} + T^{jk}R_{jk}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets as J
from .kerb import b_apply
from .tensors import covariant_derivative


class InconsistentInputError(ValueError):
    """f and α are not related by a constant α̃ = f⁻³α."""


def _rho_field(conn, rho):
    return conn.ricci_field() if rho is None else rho


def _pts(points):
    points = np.asarray(points, float)
    return np.atleast_2d(points), points.ndim == 1


def L_tensor(conn, rho, tau, points):
    """All components (𝓛τ)_{jklm} at the points, shape ``(P, 2, 2, 2, 2)``."""
    pts, _ = _pts(points)
    gam = conn.christoffel(pts, 1)
    t = tau.evaluate(pts, 2)
    dt = covariant_derivative(t, gam, "ll")
    ddt = covariant_derivative(dt, gam, "lll").value      # ddt[m, k, l, j] = τ_{mk,lj}
    tv = t.value
    r = _rho_field(conn, rho).evaluate(pts, 0).value
    return (np.einsum("...mklj->...jklm", ddt) - np.einsum("...lkmj->...jklm", ddt)
            - np.einsum("...mjlk->...jklm", ddt) + np.einsum("...ljmk->...jklm", ddt)
            + np.einsum("...mk,...lj->...jklm", tv, r) - np.einsum("...lk,...mj->...jklm", tv, r)
            - np.einsum("...mj,...lk->...jklm", tv, r) + np.einsum("...lj,...mk->...jklm", tv, r))


def L_apply(conn, rho, tau, points):
    """The essential component A₁₂₁₂ of 𝓛τ at one point or a batch."""
    pts, single = _pts(points)
    a = L_tensor(conn, rho, tau, pts)[:, 0, 1, 0, 1]
    return a[0] if single else a


def F_apply(conn, rho, T, points):
    """𝓕T = T^{jk}_{,jk} + T^{jk}R_{jk} for a contravariant symmetric field T."""
    pts, single = _pts(points)
    gam = conn.christoffel(pts, 1)
    t = T.evaluate(pts, 2)
    dt = covariant_derivative(t, gam, "uu")
    ddt = covariant_derivative(dt, gam, "uul").value      # ddt[j, k, a, b] = T^{jk}_{,ab}
    r = _rho_field(conn, rho).evaluate(pts, 0).value
    out = np.einsum("...jkjk->...", ddt) + np.einsum("...jk,...jk->...", t.value, r)
    return out[0] if single else out


def gauge_shift(conn, tau, xi):
    """τ + 𝓑ξ, which has the same image under 𝓛."""
    bxi = b_apply(conn, xi)
    return J.Field(2, (2, 2), evaluator=lambda p, k: tau.evaluate(p, k) + bxi.evaluate(p, k),
                   max_order=min(tau.max_order, bxi.max_order), domain=tau.domain,
                   name=f"{tau.name}+B({xi.name})")


@dataclass
class TauSolution:
    """τ = f²λ with λ₁₁ = λ₁₂ = 0 and ∂₁∂₁λ₂₂ = ε c² f⁴.

    Attributes
    ----------
    tau : Field
        The symmetric tensor τ (shape ``(2, 2)``).
    lam : Field
        λ = f⁻²τ, a solution of the flat-chart equation.
    c : float
        Constant component of α̃ = f⁻³α.
    """

    tau: J.Field
    lam: J.Field
    c: float
    epsilon: int
    base_line: float
    c_residual: float


def _slot22(field, name):
    def evaluator(points, order):
        v = field.evaluate(points, order)
        z = 0.0 * v
        return J.stack([J.stack([z, z], axis=-1), J.stack([z, v], axis=-1)], axis=-2)
    return J.Field(2, (2, 2), evaluator=evaluator, max_order=field.max_order,
                   domain=field.domain, name=name)


def solve_tau(conn, f, alpha, epsilon, base_line=None, grid=None, tol=1e-9):
    """Solve 𝓛τ = ε α⊗α in the central-projection chart.

    In that chart the projectively related connection D̃ has vanishing
    components and α̃ = f⁻³α = c du¹∧du² is constant, so 𝓛̃λ = ε c² f⁴ reduces
    to ∂₁∂₁λ₂₂ = ε c² f⁴. λ₂₂ is the iterated integral from the base line
    ``u¹ = base_line`` (default: u¹ of the area form's basepoint), and
    τ = f²λ.

    Raises
    ------
    InconsistentInputError
        If α/f³ varies by more than ``tol`` on the grid.
    """
    if epsilon not in (1, -1):
        raise ValueError("epsilon must be +1 or -1")
    grid = conn.domain.grid() if grid is None else grid
    base = np.asarray(alpha.basepoint, float)
    c = float(alpha.a.evaluate(base, 0).value / f.evaluate(base, 0).value ** 3)
    ratio = alpha.a.values(grid) / f.values(grid) ** 3
    c_res = float(np.abs(ratio - c).max()) / abs(c)
    if c_res > tol:
        raise InconsistentInputError(f"α/f³ is not constant (spread {c_res:.2e})")
    base_line = float(base[0]) if base_line is None else float(base_line)
    coef = epsilon * c * c
    h = J.Field(2, (), evaluator=lambda p, k: f.evaluate(p, k) ** 4 * coef,
                max_order=f.max_order, domain=f.domain, name="εc²f⁴")
    lam22 = J.axis_antiderivative(h, axis=0, base=base_line, times=2)
    lam = _slot22(lam22, "λ")
    tau = J.Field(2, (2, 2), evaluator=lambda p, k: lam.evaluate(p, k) * (f.evaluate(p, k) ** 2)[:, None, None],
                  max_order=lam.max_order, domain=f.domain, name=f"τ(ε={epsilon:+d})")
    return TauSolution(tau, lam, c, epsilon, base_line, c_res)


def gauge_between(sol, other, f, basepoint=None):
    """ξ with 𝓑ξ = 2(τ − τ′) for two solutions from :func:`solve_tau`.

    Both solutions differ only in their base lines, so μ = λ₂₂ − λ′₂₂ is
    affine in u¹. In the flat chart ζ₂ = ½∫μ du² and ζ₁ = −½∬∂₁μ du² du²
    solve 𝓑̃ζ = λ − λ′, and ξ = 2f²ζ. The u² integrals start at
    ``basepoint`` (default: the centre of the domain).
    """
    lam, lam2 = sol.lam.component(1, 1), other.lam.component(1, 1)
    dom = lam.domain
    b2 = float((dom.center if basepoint is None else np.asarray(basepoint, float))[1])
    mu = J.Field(2, (), evaluator=lambda p, k: lam.evaluate(p, k) - lam2.evaluate(p, k),
                 max_order=lam.max_order, domain=dom, name="μ")
    zeta2 = J.axis_antiderivative(mu, axis=1, base=b2, times=1)
    zeta1 = J.axis_antiderivative(mu.diff(0), axis=1, base=b2, times=2)

    def evaluator(points, order):
        z = J.stack([zeta1.evaluate(points, order) * -0.5, zeta2.evaluate(points, order) * 0.5], axis=-1)
        return z * (2.0 * f.evaluate(points, order) ** 2)[:, None]

    return J.Field(2, (2,), evaluator=evaluator, max_order=min(zeta1.max_order, zeta2.max_order, f.max_order),
                   domain=dom, name="ξ(τ,τ')")
