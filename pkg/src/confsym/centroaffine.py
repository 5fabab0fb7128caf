"""Centroaffine geometry of surfaces in a 3-space.

An immersion ``r`` transverse to lines through the origin induces a
torsion-free connection D and a symmetric form b through

    r_{jk} = Γ^s_{jk} r_s + b_{jk} r,

with Ricci tensor ρ^D = −b. Central projection to the plane x³ = 1 gives a
chart ``u = (x¹/x³, x²/x³)`` in which D is projectively equivalent to the
flat connection; the function ``f = x³`` along the inverse projection then
satisfies D D df = −f ρ^D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import jets as J
from .surface import SurfaceConnection, exp_line_integral, trace_form
from .tensors import covariant_derivative


class TransversalityError(ValueError):
    """The frame (r₁, r₂, r) is singular."""


class ProjectiveFormError(ValueError):
    """Two connections fail to be projectively equivalent."""


@dataclass
class Embedding3:
    """Immersion ``r`` of a chart rectangle into R³ (a field of shape ``(3,)``)."""

    r: J.Field
    domain: J.Box
    name: str = ""

    def transversality_margin(self, grid=None):
        """min |det[r, r₁, r₂]| over the grid (default 9×9 over the domain)."""
        grid = self.domain.grid() if grid is None else grid
        rj = self.r.evaluate(grid, 1)
        m = np.stack([rj.value, rj.gradient_values()[:, :, 0], rj.gradient_values()[:, :, 1]], axis=-1)
        return float(np.abs(np.linalg.det(m)).min())

    def values(self, points):
        return self.r.evaluate(points, 0).value


@dataclass
class CentroaffineOutput:
    conn: SurfaceConnection
    b: J.Field
    margin: float


def _frame_solver(emb):
    cache = {}

    def solve(points, order):
        key = (order, points.tobytes())
        if key not in cache:
            rj = emb.r.evaluate(points, order + 2)
            d1 = rj.grad()                       # (P, 3, 2)
            d2 = d1.grad()                       # (P, 3, 2, 2)
            frame = J.stack([d1[:, :, 0], d1[:, :, 1], rj], axis=-1)
            det = np.linalg.det(frame.value)
            if np.any(np.abs(det) < 1e-12):
                raise TransversalityError(f"{emb.name}: singular centroaffine frame")
            coeffs = J.einsum("...ci,...ijk->...cjk", J.inv(frame), d2)
            cache.clear()
            cache[key] = coeffs
        return cache[key]

    return solve


def centroaffine_connection(emb, grid=None):
    """Centroaffine connection and second fundamental form of ``emb``.

    Raises
    ------
    TransversalityError
        If the transversality margin on the grid is below 1e-6.
    """
    margin = emb.transversality_margin(grid)
    if margin <= 1e-6:
        raise TransversalityError(f"{emb.name}: transversality margin {margin:.2e}")
    solve = _frame_solver(emb)
    top = max(0, emb.r.max_order - 2)
    gamma = J.Field(2, (2, 2, 2), evaluator=lambda p, k: solve(p, k)[:, :2],
                    max_order=top, domain=emb.domain, name=f"Γ({emb.name})")
    b = J.Field(2, (2, 2), evaluator=lambda p, k: solve(p, k)[:, 2],
                max_order=top, domain=emb.domain, name=f"b({emb.name})")
    rho = J.Field(2, (2, 2), evaluator=lambda p, k: -solve(p, k)[:, 2],
                  max_order=top, domain=emb.domain, name=f"ρ({emb.name})")
    conn = SurfaceConnection(gamma, ricci=rho, name=emb.name)
    return CentroaffineOutput(conn, b, margin)


def reconstruction_residual(emb, out, grid):
    """max |r_{jk} − Γ^s_{jk} r_s − b_{jk} r| over the grid."""
    rj = emb.r.evaluate(grid, 2)
    d1 = rj.grad().value
    d2 = rj.grad().grad().value
    g = out.conn.christoffel(grid, 0).value
    b = out.b.evaluate(grid, 0).value
    rebuilt = np.einsum("pijk,pai->pajk", g, d1) + np.einsum("pjk,pa->pajk", b, rj.value)
    return float(np.abs(d2 - rebuilt).max())


# ---------------------------------------------------------------------------
# central projection

@dataclass
class FlatChart:
    """Central-projection chart ``u = (x¹/x³, x²/x³)`` of an embedding.

    Attributes
    ----------
    embedding : Embedding3
        The same surface parametrized by ``u`` over ``domain``.
    to_flat : Field
        ``y ↦ u`` on the original chart.
    to_original : Field
        ``u ↦ y``, by root solving with jet lifting.
    x3 : Field
        Third coordinate of ``r`` as a function of ``u``.
    margin : float
        min |x³| over the flat grid.
    """

    embedding: Embedding3
    to_flat: J.Field
    to_original: J.Field
    x3: J.Field
    domain: J.Box
    margin: float


def _projection(emb):
    def expr(y1, y2):
        r = emb.r(y1, y2)
        return [r[..., 0] / r[..., 2], r[..., 1] / r[..., 2]]
    return J.Field(2, (2,), expr=expr, domain=emb.domain, name=f"u({emb.name})")


def flat_chart(emb, domain, seed_resolution=64, newton_tol=1e-14):
    """Reparametrize ``emb`` by central projection onto x³ = 1.

    Parameters
    ----------
    emb : Embedding3
    domain : Box
        Working rectangle in ``u``; its preimage must lie in ``emb.domain``.

    Raises
    ------
    DomainError
        If x³ nearly vanishes on the region or the preimage leaves the chart.
    """
    proj = _projection(emb)
    seeds_y = emb.domain.grid(seed_resolution, margin=0.0)
    tree = cKDTree(proj.values(seeds_y))

    def invert_values(u):
        _, idx = tree.query(u)
        y = seeds_y[idx].copy()
        lo, hi = np.array(emb.domain.lo), np.array(emb.domain.hi)
        for _ in range(60):
            jet = proj.evaluate(np.clip(y, lo, hi), 1)
            res = jet.value - u
            step = np.linalg.solve(jet.gradient_values(), res[..., None])[..., 0]
            y = y - step
            if np.abs(step).max() < newton_tol * max(1.0, np.abs(y).max()):
                break
        else:
            raise J.DomainError(f"{emb.name}: central projection inversion did not converge")
        if not np.all(emb.domain.contains(y)):
            raise J.DomainError(f"{emb.name}: flat-chart region leaves the original chart")
        return y

    def inverse(points, order):
        y0 = invert_values(points)
        jac = np.linalg.inv(proj.evaluate(y0, 1).gradient_values())   # dy/du at the point
        u = J.Jet.variables(points, order)
        y = J.Jet.constant(y0, 2, order)
        for _ in range(order):
            res = proj(y[:, 0], y[:, 1]) - u
            y = y - J.einsum("...ij,...j->...i", jac, res)
        return y

    to_original = J.Field(2, (2,), evaluator=inverse, domain=domain, name=f"y(u; {emb.name})")

    def r_flat(points, order):
        y = to_original.evaluate(points, order)
        return emb.r(y[:, 0], y[:, 1])

    flat_emb = Embedding3(J.Field(2, (3,), evaluator=r_flat, domain=domain, max_order=emb.r.max_order,
                                  name=f"{emb.name}[flat]"), domain, f"{emb.name}[flat]")
    x3 = flat_emb.r.component(2)
    margin = float(np.abs(x3.values(domain.grid())).min())
    if margin < 1e-6:
        raise J.DomainError(f"{emb.name}: x³ vanishes on the flat-chart region")
    return FlatChart(flat_emb, proj, to_original, x3, domain, margin)


# ---------------------------------------------------------------------------
# the function f

@dataclass
class RecoveredF:
    """Positive f with D D df = −f ρ^D, plus the checks that certified it."""

    f: J.Field
    xi: J.Field
    residuals: dict = field(default_factory=dict)
    source: str = "path-integral"


def ddf_residual(conn, f, grid):
    """max |D D df + f ρ^D| normalized by max(1, |f ρ^D|)."""
    fj = f.evaluate(grid, 2)
    ddf = covariant_derivative(fj.grad(), conn.christoffel(grid, 1), "l").value
    rho = conn.ricci_jets(grid, 0).value
    frho = fj.value[:, None, None] * rho
    return float(np.abs(ddf + frho).max()) / max(1.0, float(np.abs(frho).max()))


def recover_f(conn, basepoint, base_value, flat_conn=None, candidate=None, grid=None, tol=1e-9):
    """Recover f > 0 with ξ = −d log f from D and the flat connection D̃.

    ξ_j = (Γ̃^k_{jk} − Γ^k_{jk})/3 and f = exp(−∫ξ) with ``f(basepoint) =
    base_value``. A closed-form ``candidate`` (x³ along the inverse
    projection) is returned instead when it agrees with the path integral
    and passes the D D df = −f ρ^D check; otherwise the path-integral
    field is returned.

    Raises
    ------
    ProjectiveFormError
        If D̃ − D is not of the form 2ξ⊙Id or dξ ≠ 0.
    """
    grid = conn.domain.grid() if grid is None else grid
    flat_conn = flat_conn or SurfaceConnection.flat(conn.domain)
    tr, tr_flat = trace_form(conn), trace_form(flat_conn)
    xi = J.Field(2, (2,), evaluator=lambda p, k: (tr_flat.evaluate(p, k) - tr.evaluate(p, k)) / 3.0,
                 max_order=conn.max_order, domain=conn.domain, name="ξ")
    eye = np.eye(2)
    diff = flat_conn.christoffel(grid, 1) - conn.christoffel(grid, 1)
    x = xi.evaluate(grid, 1)
    proj_part = J.einsum("...j,lk->...ljk", x, eye) + J.einsum("...k,lj->...ljk", x, eye)
    scale = max(1.0, float(np.abs(diff.value).max()))
    off_trace = float(np.abs((diff - proj_part).value).max()) / scale
    dxi = x.grad().value
    closed = float(np.abs(dxi[:, 1, 0] - dxi[:, 0, 1]).max()) / max(1.0, float(np.abs(dxi).max()))
    residuals = {"off_trace": off_trace, "d_xi": closed}
    if off_trace > tol:
        raise ProjectiveFormError(f"difference tensor not projective (residual {off_trace:.2e})")
    if closed > tol:
        raise ProjectiveFormError(f"dξ does not vanish (residual {closed:.2e})")
    minus_xi = J.Field(2, (2,), evaluator=lambda p, k: -xi.evaluate(p, k), max_order=xi.max_order,
                       domain=xi.domain, name="-ξ")
    f_path = exp_line_integral(minus_xi, basepoint, base_value, name="f")
    residuals["ddf_path"] = ddf_residual(conn, f_path, grid)
    if candidate is not None:
        a, b = candidate.evaluate(grid, 1).coeffs, f_path.evaluate(grid, 1).coeffs
        agree = float(np.abs(a - b).max()) / max(1.0, float(np.abs(b).max()))
        residuals["candidate_vs_path"] = agree
        residuals["ddf_candidate"] = ddf_residual(conn, candidate, grid)
        if agree < 1e-8 and residuals["ddf_candidate"] < tol:
            return RecoveredF(candidate, xi, residuals, "x3-candidate")
    if residuals["ddf_path"] > tol:
        raise ProjectiveFormError(f"D D df + f ρ residual {residuals['ddf_path']:.2e}")
    return RecoveredF(f_path, xi, residuals, "path-integral")
