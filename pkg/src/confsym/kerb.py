"""The operator 𝓑ξ = Dξ + (Dξ)* and its three-dimensional kernel.

Solutions of 𝓑ξ = 0 correspond to parallel sections (Θ, ξ) of the flat
connection

    ∇(Θ, ξ) = (DΘ − ξ∧ρ, Dξ − Θ)

on 2-forms ⊕ 1-forms, so Ker 𝓑 is realized by transporting states along
paths. In a chart, with u the velocity, θ = Θ₁₂ and η = ρ(u, ·), a state is
parallel along a curve when

    dθ/dt   = (u^j Γ^k_{jk}) θ + ξ₁η₂ − ξ₂η₁,
    dξ_k/dt = u^j Γ^s_{jk} ξ_s + u^j Θ_{jk}.

Evaluating the state (α_y, 0) at y and transporting it back to a basepoint
gives the immersion F of the surface into Ker 𝓑 ≅ R³.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp

from . import jets as J
from .tensors import covariant_derivative

RTOL = ATOL = 1e-11


class TransportError(RuntimeError):
    """The transport ODE could not be integrated."""


def b_apply(conn, xi):
    """Field (𝓑ξ)_{jk} = ξ_{k,j} + ξ_{j,k} for a 1-form field ``xi``."""
    def evaluator(points, order):
        dxi = covariant_derivative(xi.evaluate(points, order + 1), conn.christoffel(points, order), "l")
        return dxi + dxi.moveaxis(-1, -2)

    return J.Field(2, (2, 2), evaluator=evaluator,
                   max_order=min(xi.max_order - 1, conn.max_order),
                   domain=conn.domain, name=f"B({xi.name})")


@dataclass
class TransportState:
    theta: float
    xi: np.ndarray
    position: np.ndarray

    def as_array(self):
        return np.r_[self.theta, self.xi]


@dataclass
class KerBElement:
    """Base-point coordinates (Θ₁₂, ξ₁, ξ₂) of an element of Ker 𝓑."""

    theta0: float
    xi0: np.ndarray

    def as_array(self):
        return np.r_[self.theta0, self.xi0]


def _generators(conn, rho, y, u):
    """Generator matrices A at points ``y (P, 2)`` for velocities ``u (P, 2)``."""
    gam = conn.christoffel(y, 0).value          # (P, 2, 2, 2)
    r = rho.evaluate(y, 0).value                # (P, 2, 2)
    eta = np.einsum("pj,pjk->pk", u, r)
    a = np.zeros((len(y), 3, 3))
    a[:, 0, 0] = np.einsum("pj,pkjk->p", u, gam)
    a[:, 0, 1], a[:, 0, 2] = eta[:, 1], -eta[:, 0]
    a[:, 1, 0], a[:, 2, 0] = -u[:, 1], u[:, 0]
    a[:, 1:, 1:] = np.einsum("pj,psjk->pks", u, gam)
    return a


class _SegmentGenerators:
    """Chebyshev interpolants of A(t) along straight segments, t ∈ [0, 1].

    Node counts double until the interpolant matches A at interleaved check
    points to ``INTERP_TOL`` relative, so the ODE right-hand side is cheap
    while staying faithful to the connection.
    """

    INTERP_TOL = 1e-13

    def __init__(self, conn, rho, starts, ends, nodes=16, max_nodes=256):
        self.starts, self.u = starts, ends - starts
        while True:
            k = np.arange(nodes)
            x = np.cos(np.pi * (k + 0.5) / nodes)[::-1]                 # Chebyshev points in (−1, 1)
            vals = self._exact(conn, rho, 0.5 * (x + 1.0))              # (nodes, S, 3, 3)
            self.coef = C.chebfit(x, vals.reshape(nodes, -1), nodes - 1).reshape((nodes,) + vals.shape[1:])
            xc = 0.5 * (x[:-1] + x[1:])
            err = np.abs(self(0.5 * (xc + 1.0)) - self._exact(conn, rho, 0.5 * (xc + 1.0))).max()
            scale = max(1.0, float(np.abs(vals).max()))
            if err <= self.INTERP_TOL * scale:
                self.interp_error = err
                return
            if nodes >= max_nodes:
                raise TransportError(f"generator interpolation error {err:.2e} with {nodes} nodes")
            nodes *= 2

    def _exact(self, conn, rho, ts):
        ts = np.asarray(ts)
        pts = self.starts[None] + ts[:, None, None] * self.u[None]     # (T, S, 2)
        flat = pts.reshape(-1, 2)
        a = _generators(conn, rho, flat, np.broadcast_to(self.u, pts.shape).reshape(-1, 2))
        return a.reshape(pts.shape[:2] + (3, 3))

    def __call__(self, t):
        """A at parameter(s) t: shape ``(S, 3, 3)`` for scalar t, else ``(T, S, 3, 3)``."""
        return _chebval(2.0 * np.asarray(t, float) - 1.0, self.coef)


def _chebval(x, coef):
    """Clenshaw recurrence over the leading axis of ``coef`` at scalar or 1-D ``x``."""
    x = np.asarray(x, float)
    xs = x.reshape(x.shape + (1,) * (coef.ndim - 1))
    b1 = np.zeros(x.shape + coef.shape[1:])
    b2 = np.zeros_like(b1)
    for c in coef[:0:-1]:
        b1, b2 = 2.0 * xs * b1 - b2 + c, b1
    return xs * b1 - b2 + coef[0]


def _segments(conn, rho, starts, ends, t_eval=None):
    """Propagators along the straight segments ``starts[i] → ends[i]`` (t from 0 to 1).

    All segments are integrated as one batched linear ODE. Returns shape
    ``(S, 3, 3)``, or ``(S, len(t_eval), 3, 3)`` when ``t_eval`` is given.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    ends = np.atleast_2d(np.asarray(ends, float))
    gen = _SegmentGenerators(conn, rho, starts, ends)
    m = len(starts)

    def rhs(t, x):
        return np.matmul(gen(t), x.reshape(m, 3, 3)).reshape(-1)

    x0 = np.broadcast_to(np.eye(3), (m, 3, 3)).reshape(-1)
    sol = solve_ivp(rhs, (0.0, 1.0), x0, method="DOP853", rtol=RTOL, atol=ATOL, t_eval=t_eval)
    if sol.status != 0:
        raise TransportError(sol.message)
    if t_eval is None:
        return sol.y[:, -1].reshape(m, 3, 3)
    return np.moveaxis(sol.y.reshape(m, 3, 3, -1), -1, 1)


def _segment(conn, rho, start, end, t_eval=None):
    """Propagator(s) along one straight segment ``start → end``."""
    out = _segments(conn, rho, [start], [end], t_eval)
    return out[0]


def transport_matrix(conn, rho, path):
    """Propagator along a polyline (sequence of vertices)."""
    path = np.asarray(path, float)
    m = np.eye(3)
    for a, b in zip(path[:-1], path[1:]):
        if np.any(a != b):
            m = _segment(conn, rho, a, b) @ m
    return m


def transport(conn, rho, path, initial):
    """Parallel transport of a :class:`TransportState` along a polyline."""
    out = transport_matrix(conn, rho, path) @ initial.as_array()
    return TransportState(out[0], out[1:], np.asarray(path, float)[-1])


def _lines(conn, rho, starts, axis, targets):
    """Propagators from each start to the points with coordinate ``axis`` set to each target.

    Returns shape ``(len(starts), len(targets), 3, 3)``. Targets on either
    side of a start are reached by one segment per side; the segments of
    all starts share one ODE solve.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    targets = np.asarray(targets, float)
    out = np.empty((len(starts), len(targets), 3, 3))
    seg_start, seg_end, jobs = [], [], []
    for i, start in enumerate(starts):
        c0 = start[axis]
        out[i, targets == c0] = np.eye(3)
        for side in (targets > c0, targets < c0):
            if not side.any():
                continue
            far = targets[side][np.argmax(np.abs(targets[side] - c0))]
            end = start.copy()
            end[axis] = far
            seg_start.append(start)
            seg_end.append(end)
            jobs.append((i, np.flatnonzero(side), (targets[side] - c0) / (far - c0)))
    if not jobs:
        return out
    ts = np.unique(np.concatenate([j[2] for j in jobs]))
    mats = _segments(conn, rho, np.array(seg_start), np.array(seg_end), t_eval=ts)
    for s, (i, idx, t) in enumerate(jobs):
        out[i, idx] = mats[s, np.searchsorted(ts, t)]
    return out


def grid_propagators(conn, rho, basepoint, xs, ys, first_axis=1):
    """Propagators from the basepoint to every node of the grid ``xs × ys``.

    The path runs along ``first_axis`` through the basepoint and then along
    the other axis. Returns an array of shape ``(len(xs), len(ys), 3, 3)``.
    """
    b = np.asarray(basepoint, float)
    if first_axis == 1:
        legs = _lines(conn, rho, b, 1, ys)[0]                              # (ny, 3, 3)
        rows = _lines(conn, rho, np.stack([np.full(len(ys), b[0]), ys], axis=1), 0, xs)   # (ny, nx, 3, 3)
        return np.swapaxes(rows @ legs[:, None], 0, 1)
    legs = _lines(conn, rho, b, 0, xs)[0]
    cols = _lines(conn, rho, np.stack([xs, np.full(len(xs), b[1])], axis=1), 1, ys)       # (nx, ny, 3, 3)
    return cols @ legs[:, None]


@dataclass
class KerBReport:
    dimension: int
    loop_defect: float
    min_singular: float
    xs: np.ndarray
    ys: np.ndarray
    basepoint: np.ndarray
    propagators: np.ndarray


def kerb_analysis(conn, rho, domain, n=9, margin=0.05, tol=1e-8, basepoint=None):
    """Transport the canonical base states over a grid and certify Ker 𝓑.

    Two families of paths (row-first and column-first) reach every grid
    node; their disagreement is the holonomy around the rectangle they
    bound. The dimension is that of the subspace of base states left fixed
    by all these holonomies.
    """
    pts = domain.grid(n, margin)
    xs = np.unique(pts[:, 0])
    ys = np.unique(pts[:, 1])
    if basepoint is None:
        basepoint = np.array([xs[len(xs) // 2], ys[len(ys) // 2]])
    pa = grid_propagators(conn, rho, basepoint, xs, ys, first_axis=1)
    pb = grid_propagators(conn, rho, basepoint, xs, ys, first_axis=0)
    hol = np.linalg.solve(pa, pb) - np.eye(3)
    defect = float(np.abs(hol).max())
    sv = np.linalg.svd(hol.reshape(-1, 3), compute_uv=False)
    rank = int((sv > tol).sum())
    min_sv = float(np.linalg.svd(pa, compute_uv=False)[..., -1].max())
    dim = 3 - rank if min_sv > tol else 0
    return KerBReport(dim, defect, min_sv, xs, ys, np.asarray(basepoint, float), pa)


def kerb_dimension(conn, rho, domain, tol=1e-8, n=9):
    """Dimension of Ker 𝓑 certified on an ``n × n`` grid (3 for projectively flat D)."""
    return kerb_analysis(conn, rho, domain, n=n, tol=tol).dimension


def immersion_F(conn, rho, alpha, basepoint, y):
    """F(y): the element of Ker 𝓑 with ξ_y = 0 and (Dξ)_y = α_y, in base coordinates."""
    b, y = np.asarray(basepoint, float), np.asarray(y, float)
    m = transport_matrix(conn, rho, [b, [b[0], y[1]], y])
    a = float(alpha.a.evaluate(y, 0).value)
    out = np.linalg.solve(m, np.array([a, 0.0, 0.0]))
    return KerBElement(out[0], out[1:])


def immersion_samples(report, alpha):
    """F at every node of a :class:`KerBReport` grid; returns (points, F)."""
    xs, ys = report.xs, report.ys
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    a = alpha.a.evaluate(pts, 0).value
    states = np.zeros((len(pts), 3))
    states[:, 0] = a
    props = report.propagators.reshape(-1, 3, 3)
    return pts, np.linalg.solve(props, states[..., None])[..., 0]


def embedding_match(F, r):
    """Least-squares H with H·F(y) ≈ r(y); returns (H, RMS residual).

    Raises
    ------
    ValueError
        If the samples of F do not span R³.
    """
    F, r = np.asarray(F, float), np.asarray(r, float)
    if np.linalg.matrix_rank(F, tol=1e-10 * np.abs(F).max()) < 3:
        raise ValueError("rank-deficient sample set")
    sol, *_ = np.linalg.lstsq(F, r, rcond=None)
    resid = F @ sol - r
    return sol.T, float(np.sqrt((resid ** 2).sum(axis=1).mean()))


@dataclass
class QuadricFit:
    form: np.ndarray
    residual: float
    signature: tuple

    @property
    def rank(self):
        return self.signature[0] + self.signature[1]


def quadric_fit(F, rel_tol=1e-6):
    """Least-squares symmetric form Q with ⟨F(y), Q F(y)⟩ = 1.

    The signature is (positive, negative, zero) eigenvalue counts with
    eigenvalues below ``rel_tol`` times the largest treated as zero.
    """
    F = np.asarray(F, float)
    x, y, z = F.T
    design = np.stack([x * x, y * y, z * z, 2 * x * y, 2 * x * z, 2 * y * z], axis=1)
    if np.linalg.matrix_rank(design, tol=1e-12 * np.abs(design).max()) < 6:
        raise ValueError("rank-deficient normal equations (degenerate sample geometry)")
    q, *_ = np.linalg.lstsq(design, np.ones(len(F)), rcond=None)
    form = np.array([[q[0], q[3], q[4]], [q[3], q[1], q[5]], [q[4], q[5], q[2]]])
    residual = float(np.sqrt(((design @ q - 1.0) ** 2).mean()))
    ev = np.linalg.eigvalsh(form)
    cut = rel_tol * np.abs(ev).max()
    sig = (int((ev > cut).sum()), int((ev < -cut).sum()), int((np.abs(ev) <= cut).sum()))
    return QuadricFit(form, residual, sig)


def write_F_csv(path, points, F):
    """Dump samples as CSV rows (y1, y2, F1, F2, F3)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y1", "y2", "F1", "F2", "F3"])
        for p, v in zip(points, F):
            w.writerow([repr(float(c)) for c in (*p, *v)])
