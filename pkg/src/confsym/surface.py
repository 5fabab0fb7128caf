"""Torsion-free connections on surface charts.

Curvature, Ricci, the Codazzi test for projective flatness, parallel area
forms, projective modification and a coarse classification of the Ricci
tensor (flat, parallel, recurrent, generic).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .quadrature import adaptive_gauss_legendre
from .tensors import covariant_derivative, curvature_from_gamma, ricci_from_curvature


class AsymmetricRicciError(ValueError):
    """The Ricci tensor is not symmetric, so no parallel area element exists."""


class HolonomyError(ValueError):
    """Transport around a closed loop is not the identity."""


@dataclass
class SurfaceConnection:
    """Torsion-free connection on a 2-chart.

    Attributes
    ----------
    gamma : Field
        Shape ``(2, 2, 2)`` with ``gamma[j, k, l] = Γ^j_{kl}``, symmetric in
        ``k, l``.
    ricci : Field, optional
        Cached Ricci tensor when a closed form is known (for centroaffine
        connections ρ = −b). Without it Ricci is computed from Γ, costing one
        extra derivative order.
    """

    gamma: J.Field
    ricci: J.Field | None = None
    name: str = ""

    @property
    def domain(self):
        return self.gamma.domain

    @property
    def max_order(self):
        return self.gamma.max_order

    def christoffel(self, points, order):
        return self.gamma.evaluate(points, order)

    def component(self, j, k, l):
        return self.gamma.component(j, k, l)

    def ricci_jets(self, points, order):
        if self.ricci is not None:
            return self.ricci.evaluate(points, order)
        return ricci_from_curvature(curvature_from_gamma(self.christoffel(points, order + 1)))

    def ricci_field(self):
        if self.ricci is not None:
            return self.ricci
        return J.Field(2, (2, 2), evaluator=self.ricci_jets, max_order=self.max_order - 1,
                       domain=self.domain, name=f"ricci({self.name})")

    @classmethod
    def from_components(cls, components, domain=None, name=""):
        """Connection from closed-form components ``{(j, k, l): expr}`` with ``k <= l``.

        Missing components are zero; ``(j, l, k)`` mirrors ``(j, k, l)``.
        """
        def expr(y1, y2):
            zero = 0.0 * y1
            table = [[[zero] * 2 for _ in range(2)] for _ in range(2)]
            for (j, k, l), f in components.items():
                v = f(y1, y2)
                table[j][k][l] = v
                table[j][l][k] = v
            return table
        return cls(J.Field(2, (2, 2, 2), expr=expr, domain=domain, name=name), name=name)

    @classmethod
    def flat(cls, domain=None):
        return cls.from_components({}, domain=domain, name="flat")


def _points(points):
    points = np.asarray(points, float)
    return np.atleast_2d(points), points.ndim == 1


def curvature2(conn, points):
    """R_{jkl}^m at one point or a batch of points."""
    pts, single = _points(points)
    r = curvature_from_gamma(conn.christoffel(pts, 1)).value
    return r[0] if single else r


def ricci2(conn, points):
    """ρ_{jk} = R_{jsk}^s computed from Γ (ignores any cached Ricci)."""
    pts, single = _points(points)
    rho = ricci_from_curvature(curvature_from_gamma(conn.christoffel(pts, 1))).value
    return rho[0] if single else rho


def _ricci_and_derivative(conn, pts):
    gam = conn.christoffel(pts, 2)
    rho = ricci_from_curvature(curvature_from_gamma(gam))
    drho = covariant_derivative(rho, gam, "ll")
    return rho.value, drho.value


def ricci_asymmetry(conn, grid):
    """max |ρ_{jk} − ρ_{kj}| normalized by max(1, |ρ|)."""
    rho, _ = _ricci_and_derivative(conn, grid)
    return float(np.abs(rho - np.swapaxes(rho, -1, -2)).max()) / max(1.0, float(np.abs(rho).max()))


def is_projectively_flat(conn, grid, tol=1e-8):
    """Codazzi test for the projective Schouten tensor on a sample grid.

    With P = (2ρ + ρᵀ)/3 the connection is projectively flat iff
    P_{jl,k} = P_{kl,j}. For symmetric ρ (every equiaffine connection) P = ρ
    and this is the Codazzi equation for ρ; the symmetrization keeps the
    verdict meaningful when ρ is not symmetric.

    Returns
    -------
    (bool, float)
        Verdict and the max residual normalized by max(1, |DP|).
    """
    gam = conn.christoffel(grid, 2)
    rho = ricci_from_curvature(curvature_from_gamma(gam))
    p = (2.0 * rho + rho.moveaxis(-1, -2)) * (1.0 / 3.0)
    dp = covariant_derivative(p, gam, "ll").value          # dp[j, l, k] = P_{jl,k}
    codazzi = dp - np.swapaxes(dp, -3, -1)
    res = float(np.abs(codazzi).max()) / max(1.0, float(np.abs(dp).max()))
    return res < tol, res


# ---------------------------------------------------------------------------
# fields defined by exponentials of line integrals

def _segment_integral(one_form, start, ends, atol=1e-12):
    """∫ ω along straight segments from ``start`` to each row of ``ends``."""
    start = np.asarray(start, float)
    ends = np.atleast_2d(ends)
    delta = ends - start

    def fn(t):
        pts = start + t[..., None] * delta[:, None, :]
        w = one_form.evaluate(pts.reshape(-1, 2), 0).value.reshape(t.shape + (2,))
        return np.einsum("pmj,pj->pm", w, delta)

    return adaptive_gauss_legendre(fn, np.zeros(len(ends)), np.ones(len(ends)), atol=atol)


def exp_line_integral(one_form, basepoint, base_value, name=""):
    """Field ``c · exp(∫_b^y ω)`` for a closed 1-form ω (shape ``(2,)``).

    The value comes from quadrature along the straight segment from the
    basepoint; derivatives come from the jets of ω, since d log = ω.
    """
    basepoint = np.asarray(basepoint, float)
    sign = np.sign(base_value)
    log0 = np.log(abs(base_value))
    if sign == 0:
        raise ValueError("base value must be nonzero")

    def evaluator(points, order):
        log_val = log0 + _segment_integral(one_form, basepoint, points)
        coeffs = np.zeros((len(points), J.n_coeffs(2, order)))
        coeffs[:, 0] = log_val
        if order:
            w = one_form.evaluate(points, order - 1)
            idx = J.index_map(2, order - 1)
            for k, alpha in enumerate(J.multi_indices(2, order)):
                if not any(alpha):
                    continue
                j = 0 if alpha[0] else 1
                beta = list(alpha)
                beta[j] -= 1
                coeffs[:, k] = w.coeffs[:, j, idx[tuple(beta)]]
        return J.exp(J.Jet(coeffs, 2, order)) * sign

    return J.Field(2, (), evaluator=evaluator, max_order=min(J.MAX_ORDER, one_form.max_order + 1),
                   domain=one_form.domain, name=name)


def loop_log_holonomy(one_form, loop):
    """∮ ω around the closed polyline ``loop`` (vertices, last joined to first)."""
    loop = np.asarray(loop, float)
    total = 0.0
    for a, b in zip(loop, np.roll(loop, -1, axis=0)):
        total += float(_segment_integral(one_form, a, b[None])[0])
    return total


@dataclass
class AreaForm:
    """Parallel area form α = a dy¹∧dy².

    ``element`` marks that only ±α is meaningful (area element rather than
    oriented form).
    """

    a: J.Field
    basepoint: tuple
    base_value: float
    element: bool = False
    loop_residual: float = 0.0

    def form_jets(self, points, order):
        """Antisymmetric 2×2 table α_{jk} as jets."""
        a = self.a.evaluate(points, order)
        return J.stack([J.stack([0.0 * a, a], axis=-1), J.stack([-a, 0.0 * a], axis=-1)], axis=-2)


def trace_form(conn):
    """The 1-form Γ^k_{jk} whose integral gives log |α|."""
    return J.Field(2, (2,), evaluator=lambda p, k: J.einsum("...kjk->...j", conn.christoffel(p, k)),
                   max_order=conn.max_order, domain=conn.domain, name=f"trace({conn.name})")


def small_loops(center, size, count=4):
    """A few small squares around ``center`` for holonomy checks."""
    c = np.asarray(center, float)
    h = 0.5 * size
    square = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    offsets = [np.zeros(2)] + [np.array([np.cos(t), np.sin(t)]) * size
                               for t in np.linspace(0, 2 * np.pi, count, endpoint=False)][:count - 1]
    return [c + o + square for o in offsets]


def parallel_area_form(conn, basepoint, base_value=1.0, loops=None, tol=1e-8):
    """D-parallel area form with ``a(basepoint) = base_value``.

    Parameters
    ----------
    loops : sequence of (k, 2) arrays, optional
        Closed polylines for the path-independence check. Defaults to a few
        small squares near the basepoint inside the chart.

    Raises
    ------
    HolonomyError
        If transport around any loop changes ``a`` by more than ``tol``.
    """
    omega = trace_form(conn)
    if loops is None:
        if conn.domain is not None:
            size = 0.2 * min(h - l for l, h in zip(conn.domain.lo, conn.domain.hi))
            center = np.clip(np.asarray(basepoint, float),
                             np.array(conn.domain.lo) + 1.5 * size,
                             np.array(conn.domain.hi) - 1.5 * size)
        else:
            size, center = 0.1, np.asarray(basepoint, float)
        loops = small_loops(center, size)
    residual = max((abs(np.expm1(loop_log_holonomy(omega, lp))) for lp in loops), default=0.0)
    if residual > tol:
        raise HolonomyError(f"area-form holonomy defect {residual:.3e}")
    a = exp_line_integral(omega, basepoint, base_value, name=f"area({conn.name})")
    return AreaForm(a, tuple(basepoint), float(base_value), loop_residual=residual)


def projective_modify(conn, xi):
    """Connection Γ̃^l_{jk} = Γ^l_{jk} + ξ_jδ^l_k + ξ_kδ^l_j for a 1-form field ``xi``."""
    eye = np.eye(2)

    def evaluator(points, order):
        g = conn.christoffel(points, order)
        x = xi.evaluate(points, order)
        shift = J.einsum("...j,lk->...ljk", x, eye) + J.einsum("...k,lj->...ljk", x, eye)
        return g + shift

    gam = J.Field(2, (2, 2, 2), evaluator=evaluator,
                  max_order=min(conn.max_order, xi.max_order), domain=conn.domain,
                  name=f"{conn.name}+2ξ⊙Id")
    return SurfaceConnection(gam, name=gam.name)


# ---------------------------------------------------------------------------
# classification

FLAT = "FLAT"
PARALLEL_RICCI = "PARALLEL_RICCI"
RICCI_RECURRENT = "RICCI_RECURRENT"
GENERIC = "GENERIC"


@dataclass
class Classification:
    kind: str
    signature: tuple | None = None
    residuals: dict = field(default_factory=dict)
    per_point: list = field(default_factory=list)
    mixed: bool = False

    @property
    def rank(self):
        return None if self.signature is None else self.signature[0] + self.signature[1]


def ricci_signature(rho, rel_tol=1e-6):
    """(positive, negative, zero) eigenvalue counts of the symmetric part."""
    ev = np.linalg.eigvalsh(0.5 * (rho + rho.T))
    cut = rel_tol * float(np.abs(ev).max())
    return (int((ev > cut).sum()), int((ev < -cut).sum()), int((np.abs(ev) <= cut).sum()))


def recurrence_minors(rho, drho):
    """ρ_{jk}(D_uρ)_{lm} − ρ_{lm}(D_uρ)_{jk}, shape ``(..., j, k, l, m, u)``."""
    return (np.einsum("...jk,...lmu->...jklmu", rho, drho)
            - np.einsum("...lm,...jku->...jklmu", rho, drho))


def classify_connection(conn, grid, tol=1e-8):
    """Classify ρ^D on the grid as flat, parallel, recurrent or generic.

    Residuals are normalized by ``max(1, magnitude)`` over the grid. If the
    pointwise verdicts disagree the result is ``GENERIC`` with ``mixed``
    set and the per-point verdicts listed.

    Raises
    ------
    AsymmetricRicciError
        If ρ is not symmetric on the grid.
    """
    asym = ricci_asymmetry(conn, grid)
    if asym > tol:
        raise AsymmetricRicciError(f"Ricci asymmetry {asym:.3e} exceeds {tol:.1e}")
    ok, codazzi = is_projectively_flat(conn, grid, tol)
    rho, drho = _ricci_and_derivative(conn, grid)
    rho_scale = max(1.0, float(np.abs(rho).max()))
    d_scale = max(1.0, float(np.abs(drho).max()))
    minors = recurrence_minors(rho, drho)
    m_scale = max(1.0, float(np.abs(rho).max() * np.abs(drho).max()))
    r_abs = np.abs(rho).reshape(len(grid), -1).max(axis=1)
    d_abs = np.abs(drho).reshape(len(grid), -1).max(axis=1) / d_scale
    m_abs = np.abs(minors).reshape(len(grid), -1).max(axis=1) / m_scale
    per_point = []
    for r, d, m in zip(r_abs, d_abs, m_abs):
        if r < tol:
            per_point.append(FLAT)
        elif d < tol:
            per_point.append(PARALLEL_RICCI)
        elif m < tol:
            per_point.append(RICCI_RECURRENT)
        else:
            per_point.append(GENERIC)
    residuals = {"ricci_max": float(r_abs.max()), "codazzi": codazzi,
                 "d_ricci": float(d_abs.max()), "recurrence_minors": float(m_abs.max())}
    kinds = set(per_point)
    mixed = len(kinds) > 1
    kind = per_point[0] if not mixed else GENERIC
    signature = None
    if kind == PARALLEL_RICCI:
        sigs = {ricci_signature(r) for r in rho}
        signature = sigs.pop() if len(sigs) == 1 else None
    elif kind == FLAT:
        signature = (0, 0, 2)
    return Classification(kind, signature, residuals, per_point, mixed)
