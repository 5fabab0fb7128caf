"""Curvature of n-dimensional metrics and the certification battery.

Index conventions follow :mod:`confsym.tensors`, lifted to n dimensions:
``R[j, k, l, m]`` is the four-times covariant R_{jklm} = R_{jkl}^s g_{sm},
ρ_{jl} = R_{jsl}^s, and for a space of constant curvature K one has
R = (K/2) g∧g. Then

    σ = ρ − s g/(2n − 2),    W = R − g∧σ/(n − 2).

Covariant derivatives append the derivative index last.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import jets as J
from .tensors import (covariant_derivative, covariant_derivative_curvature, curvature_from_gamma,
                      ricci_from_curvature, wedge)

OK, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"


class CurvatureError(ValueError):
    """Degenerate metric or a precondition on W failed."""


@dataclass
class CurvaturePoint:
    """Curvature data at a batch of points (leading axis) or a single point."""

    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    schouten: np.ndarray
    W: np.ndarray
    DW: np.ndarray
    Dricci: np.ndarray
    DR: np.ndarray
    jets: dict = field(default_factory=dict, repr=False)


def curvature_jets(g, points, chunk=96, keep=None):
    """Jets of the curvature hierarchy at ``points`` (shape ``(P, n)``).

    Returns a dict with ``g`` (order 3), ``ginv`` and ``gamma`` (order 2),
    ``R``, ``ricci``, ``scalar``, ``schouten``, ``W`` (order 1) and the
    covariant derivatives ``DW``, ``Dricci``, ``DR`` (order 0). Points are
    processed in chunks so intermediate tables stay cache sized; keys not
    listed in ``keep`` (default: all) are returned at order 0 only.
    """
    G = g.evaluate(points, 3)
    parts = [_curvature_chunk(g.n, G[k:k + chunk]) for k in range(0, len(points), chunk)]
    out = {}
    for key in parts[0]:
        if key == "g":
            continue
        order = parts[0][key].order if keep is None or key in keep else 0
        out[key] = J.Jet(np.concatenate([p[key].coeffs[..., :J.n_coeffs(g.n, order)] for p in parts]),
                         g.n, order)
    return {"g": G, **out}


def _curvature_chunk(n, G):
    if np.any(np.abs(np.linalg.det(G.value)) < 1e-12):
        raise CurvatureError("metric is singular at a sample point")
    g2 = G.truncate(2)
    ginv = J.inv(g2)
    dg = G.grad()                                   # dg[a, b, c] = ∂_c g_ab
    low = 0.5 * (J.einsum("...acb->...abc", dg) + dg - J.einsum("...bca->...abc", dg))
    gamma = J.einsum("...ad,...dbc->...abc", ginv, low)
    Rmix = curvature_from_gamma(gamma)              # order 1, R_{jkl}^m
    g1 = g2.truncate(1)
    R = J.einsum("...jkls,...sm->...jklm", Rmix, g1)
    ricci = ricci_from_curvature(Rmix)
    ginv1 = ginv.truncate(1)
    scalar = J.einsum("...jl,...jl->...", ginv1, ricci)
    schouten = ricci - J.einsum("...,...jl->...jl", scalar, g1) * (1.0 / (2 * n - 2))
    W = R - wedge(g1, schouten) * (1.0 / (n - 2))
    gam1 = gamma.truncate(1)
    return {
        "g": G, "ginv": ginv, "gamma": gamma, "R": R, "ricci": ricci, "scalar": scalar,
        "schouten": schouten, "W": W,
        "DW": covariant_derivative_curvature(W, gam1),
        "Dricci": covariant_derivative(ricci, gam1, "ll"),
        "DR": covariant_derivative_curvature(R, gam1),
    }


def curvature_at(g, points):
    """:class:`CurvaturePoint` at one point or a batch of points."""
    points = np.asarray(points, float)
    single = points.ndim == 1
    jets = curvature_jets(g, np.atleast_2d(points))
    vals = {k: v.value for k, v in jets.items()}
    if single:
        vals = {k: v[0] for k, v in vals.items()}
    return CurvaturePoint(**vals, jets=jets)


# ---------------------------------------------------------------------------
# W as an operator on 2-forms

def pair_indices(n):
    return list(combinations(range(n), 2))


def weyl_matrix(W):
    """Covariant matrix W_{(ab),(cd)} over pairs a < b, c < d."""
    pairs = pair_indices(W.shape[-1])
    a, b = np.array(pairs).T
    return W[..., a[:, None], b[:, None], a[None, :], b[None, :]]


def two_form_metric(g):
    """Induced inner product g_ac g_bd − g_ad g_bc on pairs."""
    pairs = pair_indices(g.shape[-1])
    a, b = np.array(pairs).T
    return (g[..., a[:, None], a[None, :]] * g[..., b[:, None], b[None, :]]
            - g[..., a[:, None], b[None, :]] * g[..., b[:, None], a[None, :]])


@dataclass
class WeylRank:
    """Rank data of W on 2-forms; array fields carry a leading batch axis when batched."""

    rank: int | np.ndarray
    singular_values: np.ndarray
    epsilon: int | np.ndarray | None
    omega: np.ndarray | None
    residual: float | np.ndarray | None
    ambiguous: bool | np.ndarray


def weyl_rank_batch(W, g, rel_tol=1e-7, abs_floor=1e-12):
    """:func:`weyl_rank` over a batch ``W (P, n, n, n, n)``, ``g (P, n, n)``.

    ε, ω and the residual are filled where the rank is 1 (NaN or 0 elsewhere).
    """
    n = g.shape[-1]
    wc = weyl_matrix(W)
    mixed = np.linalg.solve(two_form_metric(g), wc)
    sv = np.linalg.svd(mixed, compute_uv=False)
    top = np.maximum(sv[:, 0], 1e-300)
    rank = np.where(sv[:, 0] <= abs_floor, 0, (sv > rel_tol * top[:, None]).sum(axis=1))
    gap = sv[:, 1] / top
    ambiguous = (gap >= 1e-9) & (gap <= 1e-5) & (rank > 0)
    ev, vec = np.linalg.eigh(0.5 * (wc + np.swapaxes(wc, -1, -2)))
    k = np.argmax(np.abs(ev), axis=1)
    lead = ev[np.arange(len(ev)), k]
    eps = np.where(lead > 0, 1, -1)
    w = vec[np.arange(len(ev)), :, k] * np.sqrt(np.abs(lead))[:, None]
    # sign convention: first nonzero pair component positive (the (y¹, y²) pair comes first)
    first = np.argmax(np.abs(w) > 1e-14 * np.abs(w).max(axis=1, keepdims=True), axis=1)
    w = w * np.where(w[np.arange(len(w)), first] < 0, -1.0, 1.0)[:, None]
    a, b = np.array(pair_indices(n)).T
    omega = np.zeros(g.shape)
    omega[:, a, b], omega[:, b, a] = w, -w
    residual = np.abs(W - eps[:, None, None, None, None]
                      * np.einsum("pab,pcd->pabcd", omega, omega)).reshape(len(W), -1).max(axis=1)
    one = rank == 1
    return WeylRank(rank, sv, np.where(one, eps, 0), np.where(one[:, None, None], omega, np.nan),
                    np.where(one, residual, np.nan), ambiguous)


def weyl_rank(W, g, rel_tol=1e-7, abs_floor=1e-12):
    """Rank of W on 2-forms at one point, with ε and ω when the rank is 1.

    The rank comes from the singular values of the mixed operator (one pair
    of indices raised), which is basis independent. When the rank is 1,
    W = ε ω⊗ω; ε is the sign of the nonzero eigenvalue of the covariant
    matrix and the sign of ω is fixed by ω₁₂ > 0. A relative gap
    ``sv₂/sv₁`` between 1e-9 and 1e-5 is flagged as ambiguous.
    """
    r = weyl_rank_batch(W[None], g[None], rel_tol, abs_floor)
    if r.rank[0] != 1:
        return WeylRank(int(r.rank[0]), r.singular_values[0], None, None, None, bool(r.ambiguous[0]))
    return WeylRank(1, r.singular_values[0], int(r.epsilon[0]), r.omega[0], float(r.residual[0]),
                    bool(r.ambiguous[0]))


@dataclass
class Distribution:
    basis: np.ndarray          # (..., n, 2) columns spanning 𝒫
    checks: dict


def _distribution_batch(g, ginv, R, omega, vertical=(2, 3)):
    sharp = ginv @ omega
    u, s, _ = np.linalg.svd(sharp)
    if np.any(s[:, 1] < 1e-9 * s[:, 0]) or np.any(s[:, 2:] > 1e-9 * s[:, :1]):
        raise CurvatureError("ω^♯ does not have rank 2")
    basis = u[:, :, :2]
    gP = np.swapaxes(basis, -1, -2) @ g @ basis
    # 𝒫⊥ = common kernel of the 1-forms g(e, ·), e ∈ 𝒫
    _, _, vt = np.linalg.svd(np.swapaxes(basis, -1, -2) @ g)
    perp = np.swapaxes(vt[:, 2:], -1, -2)
    rzo = np.einsum("pabcd,pai,pbj->pijcd", R, basis, perp)
    rvv = np.einsum("pabcd,pai,pcj->pibjd", R, basis, perp)
    checks = {"null": float(np.abs(gP).max()),
              "R(P,Pperp,.,.)": float(np.abs(rzo).max()),
              "R(P,.,Pperp,.)": float(np.abs(rvv).max())}
    if vertical is not None:
        other = [i for i in range(g.shape[-1]) if i not in vertical]
        checks["vertical"] = float(np.abs(basis[:, other]).max())
    return Distribution(basis, checks)


def distribution_P(cp, omega, vertical=(2, 3)):
    """𝒫 = image of ω raised by g, with nullity and curvature checks.

    ``cp`` is a single-point :class:`CurvaturePoint`. The checks are
    g(𝒫, 𝒫) = 0, R(𝒫, 𝒫⊥, ·, ·) = 0, R(𝒫, ·, 𝒫⊥, ·) = 0 and, when
    ``vertical`` names coordinate indices, that 𝒫 lies in their span.

    Raises
    ------
    CurvatureError
        If ω is absent (rank W ≠ 1) or ω^♯ does not have rank 2.
    """
    if omega is None:
        raise CurvatureError("distribution 𝒫 needs rank W = 1")
    d = _distribution_batch(cp.g[None], cp.ginv[None], cp.R[None], omega[None], vertical)
    return Distribution(d.basis[0], d.checks)


def omega_jets(jets):
    """Jets (order 1) of ω_{ab} = W_{abij}/√(εW_{ijij}) for the dominant pair (i, j)."""
    W = jets["W"]
    wv = W.value
    n = wv.shape[-1]
    pairs = pair_indices(n)
    diag = np.array([wv[:, a, b, a, b] for a, b in pairs])           # (N, P)
    k = int(np.argmax(np.abs(diag).max(axis=1)))
    i, j = pairs[k]
    wijij = W[:, i, j, i, j]
    eps = np.sign(wijij.value)
    root = J.sqrt(wijij * eps)
    om = W[:, :, :, i, j] * J.reciprocal(root)[:, None, None]
    sign = np.sign(om.value[:, 0, 1])
    sign[sign == 0] = 1.0
    return om * sign[:, None, None]


def parallelism_residual(jets, omega_j):
    """Transverse part of ∇(ω^♯) relative to |ω^♯| at each point.

    𝒫 is parallel exactly when every covariant derivative of ω^♯ keeps its
    image inside 𝒫.
    """
    gam = jets["gamma"].truncate(1)
    ginv = jets["ginv"].truncate(1)
    sharp = J.einsum("...ac,...cb->...ab", ginv, omega_j)            # (ω^♯)^a_b
    d = covariant_derivative(sharp, gam, "ul").value                  # d[a, b, e]
    u, sig, _ = np.linalg.svd(sharp.value)
    basis = u[:, :, :2]
    trans = d - np.einsum("pai,pbi,pbce->pace", basis, basis, d)
    return np.abs(trans).reshape(len(d), -1).max(axis=1) / np.maximum(sig[:, 0], 1e-300)


# ---------------------------------------------------------------------------
# certification

@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    status: str
    note: str = ""

    @property
    def passed(self):
        return self.status == OK

    def as_dict(self):
        return {"name": self.name, "residual": self.residual, "tolerance": self.tolerance,
                "pass": self.passed, "status": self.status, **({"note": self.note} if self.note else {})}


@dataclass
class VerificationReport:
    checks: list
    info: dict = field(default_factory=dict)

    @property
    def status(self):
        if any(c.status == FAIL for c in self.checks):
            return FAIL
        if any(c.status == INDETERMINATE for c in self.checks):
            return INDETERMINATE
        return OK

    @property
    def passed(self):
        return self.status == OK

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def residuals(self):
        return {c.name: c.residual for c in self.checks}


DEFAULT_TOLERANCES = {
    "signature": 1e-6,
    "nabla_W": 1e-7,
    "rank_gap": 1e-8,
    "weyl_size": 1e-4,
    "omega_decomposition": 1e-7,
    "omega_pullback": 1e-7,
    "scalar_curvature": 1e-8,
    "codazzi": 1e-7,
    "weyl_decomposition": 1e-7,
    "projected_ricci": 1e-7,
    "distribution": 1e-8,
    "bianchi": 1e-9,
    "weyl_tracefree": 1e-9,
    "local_symmetry": 1e-7,
    "ricci_recurrence": 1e-7,
    "d_ricci_low": 1e-8,
    "d_ricci_high": 1e-5,
}


def _threshold_check(name, residual, tol, lower=False):
    ok = residual > tol if lower else residual < tol
    return Check(name, float(residual), tol, OK if ok else FAIL)


def _ladder(name, surface_measure, metric_measure, tol, low, high):
    """Both sides of an equivalence: the surface quantity decides the expectation.

    ``surface_measure`` below ``low`` requires ``metric_measure < tol``;
    above ``high`` requires ``metric_measure ≥ tol``; in between the
    verdict is indeterminate.
    """
    if surface_measure < low:
        return Check(name, metric_measure, tol, OK if metric_measure < tol else FAIL,
                     f"surface {surface_measure:.3e}: expected vanishing")
    if surface_measure > high:
        return Check(name, metric_measure, tol, OK if metric_measure >= tol else FAIL,
                     f"surface {surface_measure:.3e}: expected nonvanishing")
    return Check(name, metric_measure, tol, INDETERMINATE,
                 f"surface {surface_measure:.3e} inside [{low:.0e}, {high:.0e}]")


def _surface_ricci_data(conn, rho, ys):
    gam = conn.christoffel(ys, 1)
    r = rho.evaluate(ys, 1)
    dr = covariant_derivative(r, gam, "ll").value
    return r.value, dr


def verify_class(g, points, epsilon=None, alpha=None, tolerances=None, expect_rank=1):
    """Run the certification battery on a metric from :func:`build_g`.

    Parameters
    ----------
    g : MetricChart
        Must carry ``conn`` and ``rho`` in ``g.sources``.
    points : ndarray, shape (P, n)
    epsilon : int, optional
        Expected sign in W = ε ω⊗ω.
    alpha : AreaForm, optional
        When given, ω is compared with π*α.
    tolerances : dict, optional
        Overrides of :data:`DEFAULT_TOLERANCES`.
    expect_rank : int
        1 for the general construction; the rank-0 branch skips ω checks.

    Raises
    ------
    CurvatureError
        If the provenance needed for π*ρ^D is missing.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    if "conn" not in g.sources or "rho" not in g.sources:
        raise CurvatureError("metric provenance lacks the surface connection")
    conn, rho = g.sources["conn"], g.sources["rho"]
    n = g.n
    points = np.atleast_2d(np.asarray(points, float))
    jets = curvature_jets(g, points, keep=("gamma", "ginv", "W"))
    v = {k: j.value for k, j in jets.items()}
    checks = []

    ok, margin = g.certify_signature(points, tol["signature"])
    checks.append(Check("signature", margin, tol["signature"], OK if ok else FAIL))

    w_scale = float(np.abs(v["W"]).max())
    dw = float(np.abs(v["DW"]).max())
    checks.append(Check("nabla_W", dw / max(w_scale, 1e-300), tol["nabla_W"],
                        OK if dw < tol["nabla_W"] * max(w_scale, 1e-300) or dw < 1e-12 else FAIL))

    wr = weyl_rank_batch(v["W"], v["g"])
    sv = wr.singular_values
    gap = float((sv[:, 1] / np.maximum(sv[:, 0], 1e-300)).max())
    sv1 = float(sv[:, 0].min())
    rank_set = sorted({int(r) for r in wr.rank})
    info = {"rank": rank_set[0] if len(rank_set) == 1 else rank_set, "sv1_min": sv1,
            "points": len(points), "W_max": w_scale, "ambiguous_gap": bool(wr.ambiguous.any())}
    if expect_rank == 1:
        checks.append(_threshold_check("rank_gap", gap, tol["rank_gap"]))
        checks.append(_threshold_check("weyl_size", sv1, tol["weyl_size"], lower=True))
        if rank_set == [1]:
            eps_set = sorted({int(e) for e in wr.epsilon})
            info["epsilon"] = eps_set[0] if len(eps_set) == 1 else eps_set
            dec = float(wr.residual.max())
            eps_ok = epsilon is None or eps_set == [epsilon]
            checks.append(Check("omega_decomposition", dec, tol["omega_decomposition"],
                                OK if dec < tol["omega_decomposition"] and eps_ok else FAIL,
                                "" if eps_ok else f"epsilon {eps_set} != {epsilon}"))
            if alpha is not None:
                ys_u, inv_u = np.unique(points[:, :2], axis=0, return_inverse=True)
                a = alpha.a.values(ys_u)[inv_u.reshape(-1)]
                target = np.zeros_like(wr.omega)
                target[:, 0, 1], target[:, 1, 0] = np.abs(a), -np.abs(a)
                checks.append(_threshold_check("omega_pullback", float(np.abs(wr.omega - target).max()),
                                               tol["omega_pullback"]))
            dist = _distribution_batch(v["g"], v["ginv"], v["R"], wr.omega)
            par = parallelism_residual(jets, omega_jets(jets))
            info["distribution"] = {**dist.checks, "parallel": float(par.max())}
            checks.append(_threshold_check("distribution", max(max(dist.checks.values()), float(par.max())),
                                           tol["distribution"]))
        else:
            checks.append(Check("omega_decomposition", float("nan"), tol["omega_decomposition"], FAIL,
                                f"rank {rank_set}"))

    checks.append(_threshold_check("scalar_curvature", float(np.abs(v["scalar"]).max()),
                                   tol["scalar_curvature"]))
    dric = v["Dricci"]
    checks.append(_threshold_check("codazzi", float(np.abs(dric - np.swapaxes(dric, -3, -1)).max()),
                                   tol["codazzi"]))
    gr = np.einsum("...jl,...km->...jklm", v["g"], v["ricci"])
    g_wedge_rho = gr - np.einsum("...jklm->...jkml", gr) - np.einsum("...jklm->...kjlm", gr) \
        + np.einsum("...jklm->...kjml", gr)
    checks.append(_threshold_check("weyl_decomposition",
                                   float(np.abs(v["R"] - v["W"] - g_wedge_rho / (n - 2)).max()),
                                   tol["weyl_decomposition"]))

    ys, inv = np.unique(points[:, :2], axis=0, return_inverse=True)
    rD, drD = _surface_ricci_data(conn, rho, ys)
    pi_rho = np.zeros_like(v["ricci"])
    pi_rho[:, :2, :2] = rD[inv.reshape(-1)]
    checks.append(_threshold_check("projected_ricci",
                                   float(np.abs(v["ricci"] - (n - 2) * pi_rho).max()),
                                   tol["projected_ricci"]))

    R = v["R"]
    bianchi = R + np.einsum("...jklm->...kljm", R) + np.einsum("...jklm->...ljkm", R)
    checks.append(_threshold_check("bianchi", float(np.abs(bianchi).max()) / max(1.0, float(np.abs(R).max())),
                                   tol["bianchi"]))
    trace = np.einsum("...ac,...abcd->...bd", v["ginv"], v["W"])
    checks.append(_threshold_check("weyl_tracefree", float(np.abs(trace).max()) / max(1.0, w_scale),
                                   tol["weyl_tracefree"]))

    d_rho_D = float(np.abs(drD).max())
    d_R = float(np.abs(v["DR"]).max())
    info.update({"max_D_rhoD": d_rho_D, "max_nabla_R": d_R})
    checks.append(_ladder("local_symmetry", d_rho_D, d_R, tol["local_symmetry"],
                          tol["d_ricci_low"], tol["d_ricci_high"]))

    def minors(r, dr):
        m = (np.einsum("...jk,...lmu->...jklmu", r, dr) - np.einsum("...lm,...jku->...jklmu", r, dr))
        return float(np.abs(m).max())
    surf_minor = minors(rD, drD) / max(1.0, float(np.abs(rD).max()))
    metric_minor = minors(v["ricci"], dric) / max(1.0, float(np.abs(v["ricci"]).max()))
    info.update({"surface_recurrence_minor": surf_minor, "metric_recurrence_minor": metric_minor})
    checks.append(_ladder("ricci_recurrence", surf_minor, metric_minor, tol["ricci_recurrence"],
                          tol["d_ricci_low"], tol["d_ricci_high"]))
    return VerificationReport(checks, info)
