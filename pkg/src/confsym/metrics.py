"""Pseudo-Riemannian metrics assembled from surface data.

Every metric lives on a single global chart with coordinates
``(y¹, y², p₁, p₂, v¹, …)`` and is evaluated as a table of jets. Surface
fields (Γ, τ, ρ^D, f) are evaluated once per distinct ``y`` and embedded in
the n-variable jet algebra, so sampling many ``(p, v)`` above one ``y`` is
cheap.

The central construction is

    g = 2 dp_j dy^j − (2 p_j Γ^j_{kl} + 2 τ_{kl} + θ(v) ρ_{kl}) dy^k dy^l + γ_{ab} dv^a dv^b,

with θ(v) = γ_{ab} v^a v^b. Dropping τ and V gives the Riemann extension;
replacing Γ by zero and τ by λ gives a Walker metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import jets as J


class MetricError(ValueError):
    """Invalid metric data (degenerate, wrong dimension or non-positive factor)."""


@dataclass(frozen=True)
class InnerProductV:
    """Constant nondegenerate symmetric form γ on V = R^m."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gamma, float)) if np.size(self.gamma) else np.zeros((0, 0))
        if g.shape[0] != g.shape[1] or not np.allclose(g, g.T):
            raise MetricError("γ must be a symmetric square matrix")
        if g.size and abs(np.linalg.det(g)) < 1e-12:
            raise MetricError("γ is degenerate")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def from_signs(cls, signs):
        """Diagonal γ from a string such as ``"+-"`` (empty for m = 0)."""
        table = {"+": 1.0, "-": -1.0, "−": -1.0}
        try:
            return cls(np.diag([table[s] for s in signs]))
        except KeyError:
            raise MetricError(f"bad signature string {signs!r}") from None

    @property
    def dim(self):
        return self.gamma.shape[0]

    @property
    def signs(self):
        ev = np.linalg.eigvalsh(self.gamma) if self.dim else np.zeros(0)
        return [1 if e > 0 else -1 for e in ev]

    def theta(self, v):
        """θ(v) = γ(v, v) for arrays or jets (last batch axis indexes V)."""
        if isinstance(v, J.Jet):
            return J.einsum("...a,ab,...b->...", v, self.gamma, v)
        v = np.asarray(v, float)
        return np.einsum("...a,ab,...b->...", v, self.gamma, v)


def _coord_names(n):
    return ["y1", "y2", "p1", "p2"] + [f"v{a + 1}" for a in range(n - 4)]


class MetricChart:
    """Metric g_{ab} on an n-dimensional chart, evaluated as jets.

    Parameters
    ----------
    n : int
    evaluator : callable
        ``evaluator(points, order)`` returning jets of batch ``(P, n, n)``.
    signature : sequence of int
        Declared eigenvalue signs, sorted ascending.
    provenance : str
        Formula tag used in dumps and reports.
    sources : dict
        Surface data the metric was built from (``conn``, ``rho``, ``tau``, …).
    coords : list of str, optional
    max_order : int
    """

    def __init__(self, n, evaluator, signature, provenance, sources=None, coords=None,
                 max_order=J.MAX_ORDER, pv_box=0.5):
        self.n = n
        self.coords = list(coords) if coords is not None else _coord_names(n)
        self.signature = sorted(signature)
        self.provenance = provenance
        self.sources = dict(sources or {})
        self.pv_box = pv_box
        self.field = J.Field(n, (n, n), evaluator=evaluator, max_order=max_order, name=provenance)

    @classmethod
    def from_expr(cls, n, expr, signature, provenance, **kwargs):
        """Metric from a closed form ``expr(x_0, …, x_{n−1})`` returning an n×n nested list."""
        fld = J.Field(n, (n, n), expr=expr, name=provenance)
        return cls(n, fld.evaluate, signature, provenance, **kwargs)

    def __repr__(self):
        return f"MetricChart(n={self.n}, {self.provenance})"

    @property
    def max_order(self):
        return self.field.max_order

    def evaluate(self, points, order):
        return self.field.evaluate(points, order)

    def __call__(self, *xs):
        return self.field(*xs)

    def values(self, points):
        return self.field.values(points)

    def component(self, a, b):
        return self.field.component(a, b)

    def sample_points(self, y_domain, ny=5, per_axis=3, margin=0.05, box=None):
        """``ny × ny`` y-grid times a ``per_axis``-point stencil on every p/v axis."""
        box = self.pv_box if box is None else box
        ys = y_domain.grid(ny, margin)
        axis = np.linspace(-box, box, per_axis) if per_axis > 1 else np.zeros(1)
        rest = np.stack(np.meshgrid(*([axis] * (self.n - 2)), indexing="ij"), axis=-1).reshape(-1, self.n - 2)
        return np.concatenate([np.repeat(ys, len(rest), axis=0), np.tile(rest, (len(ys), 1))], axis=1)

    def certify_signature(self, points, margin=1e-6):
        """(ok, smallest |eigenvalue|) for the declared sign pattern at all points."""
        ev = np.linalg.eigvalsh(self.values(points))
        signs = np.where(ev > margin, 1, np.where(ev < -margin, -1, 0))
        ok = bool(np.all(signs == np.asarray(self.signature)))
        return ok, float(np.abs(ev).min())

    def to_json(self, points):
        """Dump: coordinates, provenance tag and sampled components."""
        points = np.atleast_2d(np.asarray(points, float))
        vals = self.values(points)
        return {
            "n": self.n,
            "coords": self.coords,
            "provenance": self.provenance,
            "signature": self.signature,
            "samples": [{"point": p.tolist(), "g": v.tolist()} for p, v in zip(points, vals)],
        }

    def dump(self, path, points):
        with open(path, "w") as fh:
            json.dump(self.to_json(points), fh, indent=2)


# ---------------------------------------------------------------------------
# assembly helpers

def _surface_jets(fields, points, order):
    """Evaluate 2-chart fields at the distinct y of ``points`` and lift to n variables."""
    n = points.shape[1]
    ys, inv = np.unique(points[:, :2], axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    out = []
    for f in fields:
        if f is None:
            out.append(None)
            continue
        jet = f.evaluate(ys, order)
        lifted = J.Jet(jet.coeffs[inv], 2, order).embed(n, (0, 1))
        out.append(lifted)
    return out


def _cotangent_metric(points, order, gamma_f, tau_f, ric_f, inner, tau_scale=2.0):
    """Jets of 2dp dy − (2pΓ + s·τ + θ(v)ρ) dy dy + γ dv dv at ``points``."""
    n = points.shape[1]
    m = n - 4
    gam, tau, ric = _surface_jets((gamma_f, tau_f, ric_f), points, order)
    x = J.Jet.variables(points, order)
    p = x[:, 2:4]
    gyy = J.Jet.zeros((len(points), 2, 2), n, order)
    if gam is not None:
        gyy = gyy - 2.0 * J.einsum("...j,...jkl->...kl", p, gam)
    if tau is not None:
        gyy = gyy - tau_scale * tau
    if ric is not None and m:
        theta = inner.theta(x[:, 4:])
        gyy = gyy - J.einsum("...,...kl->...kl", theta, ric)
    coeffs = np.zeros((len(points), n, n, J.n_coeffs(n, order)))
    coeffs[:, :2, :2] = gyy.coeffs
    coeffs[:, 0, 2, 0] = coeffs[:, 2, 0, 0] = 1.0
    coeffs[:, 1, 3, 0] = coeffs[:, 3, 1, 0] = 1.0
    if m:
        coeffs[:, 4:, 4:, 0] = inner.gamma
    return J.Jet(coeffs, n, order)


def _neutral(inner=None):
    return [-1, -1, 1, 1] + (inner.signs if inner is not None else [])


def _order_cap(*fields):
    return min([J.MAX_ORDER] + [f.max_order for f in fields if f is not None])


def riemann_extension(conn, pv_box=0.5):
    """h^D = 2dp_j dy^j − 2p_jΓ^j_{kl}dy^k dy^l on (y¹, y², p₁, p₂)."""
    return MetricChart(4, lambda p, k: _cotangent_metric(p, k, conn.gamma, None, None, None),
                       _neutral(), "2dp_j dy^j - 2p_j G^j_kl dy^k dy^l",
                       {"conn": conn}, max_order=_order_cap(conn.gamma), pv_box=pv_box)


def walker_metric(lam, pv_box=0.5):
    """h̃ = 2dq_j dy^j − 2λ_{kl}dy^k dy^l on (y¹, y², q₁, q₂)."""
    coords = ["y1", "y2", "q1", "q2"]
    return MetricChart(4, lambda p, k: _cotangent_metric(p, k, None, lam, None, None),
                       _neutral(), "2dq_j dy^j - 2lambda_kl dy^k dy^l", {"lam": lam},
                       coords=coords, max_order=_order_cap(lam), pv_box=pv_box)


def build_g(conn, rho, tau, inner, n, pv_box=0.5):
    """The rank-one conformally symmetric metric on (y, p, v).

    Parameters
    ----------
    conn : SurfaceConnection
    rho : Field or None
        Ricci tensor of ``conn`` (default: ``conn.ricci_field()``).
    tau : Field
        Symmetric τ with 𝓛τ = ε α⊗α.
    inner : InnerProductV
        γ on V, of dimension ``n − 4``.
    n : int

    Raises
    ------
    MetricError
        If ``n < 4`` or γ has the wrong size.
    """
    if n < 4:
        raise MetricError("n must be at least 4")
    if inner.dim != n - 4:
        raise MetricError(f"γ has dimension {inner.dim}, expected {n - 4}")
    rho = conn.ricci_field() if rho is None else rho
    tag = "2dp_j dy^j - (2p_j G^j_kl + 2tau_kl + theta(v) rho_kl) dy^k dy^l + gamma_ab dv^a dv^b"
    return MetricChart(n, lambda p, k: _cotangent_metric(p, k, conn.gamma, tau, rho, inner),
                       _neutral(inner), tag, {"conn": conn, "rho": rho, "tau": tau, "inner": inner},
                       max_order=_order_cap(conn.gamma, tau, rho), pv_box=pv_box)


def _pullback_scalar(f, n):
    """A function on the surface (dim 2) or the full chart, as an n-chart evaluator."""
    if f.dim == n:
        return lambda points, order: f.evaluate(points, order)
    return lambda points, order: _surface_jets((f,), points, order)[0]


def conformal_rescale(g, f, power=-2):
    """g̃ = f^power · g (default f⁻²g) for a positive function f.

    ``f`` may live on the surface chart, in which case it is pulled back.

    Raises
    ------
    MetricError
        If f is not positive at the evaluated points.
    """
    fn = _pullback_scalar(f, g.n)

    def evaluator(points, order):
        fj = fn(points, order)
        if np.any(fj.value <= 0):
            raise MetricError("conformal factor must be positive")
        return g.evaluate(points, order) * J.power(fj, power)[:, None, None]

    return MetricChart(g.n, evaluator, g.signature, f"f^{power} * [{g.provenance}]",
                       {**g.sources, "base_metric": g, "f": f}, coords=g.coords,
                       max_order=min(g.max_order, f.max_order), pv_box=g.pv_box)


def pullback_metric(phi, g, jacobian_tol=1e-10):
    """(Φ*g)_{ab} = g_{cd}(Φ) ∂_aΦ^c ∂_bΦ^d for a map field Φ of shape ``(n,)``.

    Raises
    ------
    MetricError
        If the Jacobian of Φ is singular at an evaluated point.
    """
    n = g.n

    def evaluator(points, order):
        y = phi.evaluate(points, order + 1)
        d = y.grad().truncate(order)                         # d[c, a] = ∂_aΦ^c
        if np.any(np.abs(np.linalg.det(d.value)) < jacobian_tol):
            raise MetricError("singular Jacobian")
        y = y.truncate(order)
        gy = g(*(y[:, c] for c in range(n)))
        return J.einsum("...ca,...cb->...ab", d, J.einsum("...cd,...db->...cb", gy, d))

    return MetricChart(n, evaluator, g.signature, f"pullback[{g.provenance}]",
                       {**g.sources, "base_metric": g, "map": phi}, coords=g.coords,
                       max_order=min(g.max_order, phi.max_order - 1), pv_box=g.pv_box)


def warped_product(h, f, inner):
    """h ⊕ f²γ on (coordinates of h, v¹, …) with f a positive surface function."""
    n = h.n + inner.dim
    fn = _pullback_scalar(f, n)

    def evaluator(points, order):
        hj = h.evaluate(points[:, :h.n], order).embed(n, tuple(range(h.n)))
        f2 = fn(points, order) ** 2
        coeffs = np.zeros((len(points), n, n, hj.coeffs.shape[-1]))
        coeffs[:, :h.n, :h.n] = hj.coeffs
        coeffs[:, h.n:, h.n:] = inner.gamma[None, :, :, None] * f2.coeffs[:, None, None, :]
        return J.Jet(coeffs, n, order)

    coords = h.coords + [f"v{a + 1}" for a in range(inner.dim)]
    return MetricChart(n, evaluator, list(h.signature) + inner.signs,
                       f"[{h.provenance}] + f^2 gamma", {**h.sources, "base_metric": h, "f": f},
                       coords=coords, max_order=min(h.max_order, f.max_order), pv_box=h.pv_box)


def coordinate_map(n, expr, name="map"):
    """Chart map Φ: R^n → R^n from a closed-form ``expr(x_0, …, x_{n−1})``."""
    return J.Field(n, (n,), expr=expr, name=name)


def fiber_shift_map(n, xi):
    """Φ(y, p, v) = (y, p + ξ(y), v) for a 1-form field ξ on the surface.

    Pulling back a cotangent-type metric by Φ adds (𝓑ξ)_{kl} dy^k dy^l.
    """
    def evaluator(points, order):
        x = J.Jet.variables(points, order)
        (shift,) = _surface_jets((xi,), points, order)
        coeffs = x.coeffs.copy()
        coeffs[:, 2:4] += shift.coeffs
        return J.Jet(coeffs, n, order)

    return J.Field(n, (n,), evaluator=evaluator, max_order=xi.max_order, name=f"shift({xi.name})")


def warped_chart_map(f, inner):
    """Φ(y, p, v) = (y, p + θ(v) df/(2f), v/f), carrying build_g to h ⊕ f²γ.

    With h the n = 4 metric for the same data, ``pullback_metric(Φ,
    warped_product(h, f, γ))`` reproduces ``build_g`` in dimension
    ``4 + dim γ``.
    """
    n = 4 + inner.dim

    def evaluator(points, order):
        x = J.Jet.variables(points, order)
        (fj,) = _surface_jets((f,), points, order + 1)
        df = fj.grad().truncate(order)[:, :2]
        fj = fj.truncate(order)
        rf = J.reciprocal(fj)
        q = x[:, 2:4] + 0.5 * J.einsum("...,...j->...j", inner.theta(x[:, 4:]), df * rf[:, None])
        coeffs = x.coeffs.copy()
        coeffs[:, 2:4] = q.coeffs
        coeffs[:, 4:] = (x[:, 4:] * rf[:, None]).coeffs
        return J.Jet(coeffs, n, order)

    return J.Field(n, (n,), evaluator=evaluator, max_order=f.max_order - 1, name="warped-chart")
