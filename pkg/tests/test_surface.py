import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from confsym import centroaffine as C
from confsym import fixtures as FX
from confsym import jets as J
from confsym import pipeline as P
from confsym import surface as S
from confsym.tensors import covariant_derivative

BOX = J.Box((-1.0, -1.0), (1.0, 1.0))


@pytest.fixture(scope="module")
def sphere_polar():
    fx = FX.get_fixture("sphere")
    return C.centroaffine_connection(fx.embedding).conn


@pytest.fixture(scope="module", params=["sphere", "ellipsoid", "hyperbolic-cylinder", "zpow", "plane"])
def flat_chart_conn(request):
    return P.surface_data(request.param)


def rri_tensor(rho):
    eye = np.eye(2)
    return np.einsum("...jl,km->...jklm", rho, eye) - np.einsum("...kl,jm->...jklm", rho, eye)


class TestCurvature:
    def test_flat_connection(self):
        assert np.all(S.curvature2(S.SurfaceConnection.flat(BOX), BOX.grid(3)) == 0.0)
        assert np.all(S.ricci2(S.SurfaceConnection.flat(BOX), BOX.grid(3)) == 0.0)

    def test_sphere_structure(self, sphere_polar):
        y = np.array([1.0, 0.5])
        rho = np.diag([1.0, math.sin(1.0) ** 2])
        assert_allclose(S.curvature2(sphere_polar, y), rri_tensor(rho), atol=1e-13)
        assert_allclose(S.ricci2(sphere_polar, y), rho, atol=1e-13)

    def test_antisymmetry(self):
        conn = S.SurfaceConnection.from_components({(0, 0, 0): lambda y1, y2: y2}, domain=BOX)
        r = S.curvature2(conn, np.array([0.0, 0.0]))
        assert np.array_equal(r, -np.swapaxes(r, 0, 1))
        # R_{21 1}^1 = ∂_1Γ^1_{21} − ∂_2Γ^1_{11} = −1 (0-based R[1, 0, 0, 0])
        assert r[1, 0, 0, 0] == -1.0

    def test_centroaffine_ricci_symmetric(self):
        for name in FX.fixture_names():
            sd = P.surface_data(name)
            rho = S.ricci2(sd.conn, sd.fixture.flat_domain.grid(5))
            assert np.abs(rho - np.swapaxes(rho, -1, -2)).max() < 1e-10, name

    def test_cached_ricci_matches_trace(self, flat_chart_conn):
        grid = flat_chart_conn.fixture.flat_domain.grid(4)
        assert_allclose(flat_chart_conn.rho.values(grid), S.ricci2(flat_chart_conn.conn, grid), atol=1e-11)

    def test_rri_reconstruction(self, flat_chart_conn):
        grid = flat_chart_conn.fixture.flat_domain.grid(5)
        r = S.curvature2(flat_chart_conn.conn, grid)
        assert np.abs(r - rri_tensor(S.ricci2(flat_chart_conn.conn, grid))).max() < 1e-9

    def test_ricci_identity(self, flat_chart_conn, rng):
        sd = flat_chart_conn
        grid = sd.fixture.flat_domain.grid(4)
        c = rng.normal(size=(2, 3))
        xi = J.Field(2, (2,), expr=lambda y1, y2: [c[i, 0] * J.sin(y1) + c[i, 1] * y1 * y2 + c[i, 2] * J.exp(y2)
                                                  for i in range(2)])
        gam = sd.conn.christoffel(grid, 1)
        d1 = covariant_derivative(xi.evaluate(grid, 2), gam, "l")
        d2 = covariant_derivative(d1, gam, "ll").value                   # d2[j, k, l] = ξ_{j,kl}
        rho = S.ricci2(sd.conn, grid)
        x = xi.values(grid)
        lhs = d2 - np.swapaxes(d2, -1, -2)
        rhs = np.einsum("pk,plj->pjkl", x, rho) - np.einsum("pl,pkj->pjkl", x, rho)
        assert np.abs(lhs - rhs).max() < 1e-9


class TestProjectiveFlatness:
    def test_flat(self):
        assert S.is_projectively_flat(S.SurfaceConnection.flat(BOX), BOX.grid()) == (True, 0.0)

    @pytest.mark.parametrize("name", FX.fixture_names())
    def test_fixtures(self, name):
        sd = P.surface_data(name)
        ok, res = S.is_projectively_flat(sd.conn, sd.fixture.flat_domain.grid())
        assert ok, res

    def test_non_flat_example_golden(self, oracles):
        ref = oracles["projective_flatness_example"]
        conn = S.SurfaceConnection.from_components({(0, 0, 0): lambda y1, y2: y2 * y2}, domain=BOX)
        ok, res = S.is_projectively_flat(conn, BOX.grid(ref["n"]))
        assert not ok
        assert_allclose(res, ref["residual"], rtol=1e-12)

    def test_projectively_modified_flat_is_flat(self):
        # non-closed ξ makes ρ asymmetric; the projective class is still flat
        xi = J.Field(2, (2,), expr=lambda y1, y2: [y2 * y2 * y1, J.sin(y1) + y1 * y2], domain=BOX)
        conn = S.projective_modify(S.SurfaceConnection.flat(BOX), xi)
        assert S.ricci_asymmetry(conn, BOX.grid(5)) > 1.0
        assert S.is_projectively_flat(conn, BOX.grid(5))[0]
        with pytest.raises(S.AsymmetricRicciError):
            S.classify_connection(conn, BOX.grid(5))


class TestAreaForm:
    def test_flat(self):
        af = S.parallel_area_form(S.SurfaceConnection.flat(BOX), (0.0, 0.0))
        assert_allclose(af.a.values(BOX.grid(4)), 1.0, atol=1e-14)

    def test_sphere_polar(self, sphere_polar):
        af = S.parallel_area_form(sphere_polar, (math.pi / 2, 0.0))
        grid = J.Box((0.4, -1.0), (1.8, 1.0)).grid(5)
        assert_allclose(af.a.values(grid), np.sin(grid[:, 0]), atol=1e-10)
        assert abs(af.loop_residual) < 1e-9

    def test_parallel(self, flat_chart_conn):
        sd = flat_chart_conn
        grid = sd.fixture.flat_domain.grid(4)
        alpha = sd.alpha.form_jets(grid, 1)
        d = covariant_derivative(alpha, sd.conn.christoffel(grid, 0), "ll").value
        assert np.abs(d).max() < 1e-9

    def test_loop_holonomy(self, flat_chart_conn):
        sd = flat_chart_conn
        loop = S.small_loops(sd.fixture.basepoint, 0.05, count=1)[0]
        assert abs(np.expm1(S.loop_log_holonomy(S.trace_form(sd.conn), loop))) < 1e-9

    def test_holonomy_error(self):
        xi = J.Field(2, (2,), expr=lambda y1, y2: [-y2, y1], domain=BOX)
        conn = S.projective_modify(S.SurfaceConnection.flat(BOX), xi)
        with pytest.raises(S.HolonomyError):
            S.parallel_area_form(conn, (0.0, 0.0))


class TestProjectiveModify:
    def test_zero_is_identity(self, flat_chart_conn):
        conn = flat_chart_conn.conn
        zero = J.Field(2, (2,), expr=lambda y1, y2: [0.0 * y1, 0.0 * y1])
        grid = flat_chart_conn.fixture.flat_domain.grid(3)
        mod = S.projective_modify(conn, zero)
        assert np.array_equal(mod.christoffel(grid, 2).coeffs, conn.christoffel(grid, 2).coeffs)

    def test_trace_recovery(self, flat_chart_conn):
        sd = flat_chart_conn
        grid = sd.fixture.flat_domain.grid(3)
        xi = J.Field(2, (2,), expr=lambda y1, y2: [y1 * y2, J.cos(y1)])
        mod = S.projective_modify(sd.conn, xi)
        trace = lambda c: np.einsum("pkjk->pj", c.christoffel(grid, 0).value)
        assert_allclose((trace(mod) - trace(sd.conn)) / 3.0, xi.values(grid), atol=1e-13)

    def test_ricci_rule(self, flat_chart_conn):
        # ρ̃ = ρ + ξ⊗ξ − 2Dξ + (Dξ)* with (Dξ)_{jk} = D_jξ_k
        sd = flat_chart_conn
        grid = sd.fixture.flat_domain.grid(4)
        xi = J.Field(2, (2,), expr=lambda y1, y2: [0.3 * y1 * y2 + 0.1, J.sin(y1) - 0.2 * y2 * y2])
        mod = S.projective_modify(sd.conn, xi)
        x = xi.evaluate(grid, 1)
        dxi = np.swapaxes(covariant_derivative(x, sd.conn.christoffel(grid, 0), "l").value, -1, -2)
        expected = S.ricci2(sd.conn, grid) + np.einsum("pj,pk->pjk", x.value, x.value) - 2 * dxi \
            + np.swapaxes(dxi, -1, -2)
        assert_allclose(S.ricci2(mod, grid), expected, atol=1e-12)


class TestClassification:
    def test_flat(self):
        assert S.classify_connection(S.SurfaceConnection.flat(BOX), BOX.grid()).kind == S.FLAT

    def test_ellipsoid(self):
        sd = P.surface_data("ellipsoid")
        grid = sd.fixture.flat_domain.grid()
        cls = S.classify_connection(sd.conn, grid)
        assert cls.kind == S.PARALLEL_RICCI and cls.signature == (2, 0, 0)
        for rho in S.ricci2(sd.conn, grid):
            assert S.ricci_signature(rho) == (2, 0, 0)

    @pytest.mark.parametrize("name,signature", [("elliptic-cylinder", (1, 0, 1)),
                                                ("hyperbolic-cylinder", (0, 1, 1)),
                                                ("two-sheeted-hyperboloid", (0, 2, 0)),
                                                ("one-sheeted-hyperboloid", (1, 1, 0))])
    def test_quadric_signatures(self, name, signature):
        sd = P.surface_data(name)
        cls = S.classify_connection(sd.conn, sd.fixture.flat_domain.grid())
        assert (cls.kind, cls.signature) == (S.PARALLEL_RICCI, signature)

    def test_zpow_generic(self):
        sd = P.surface_data("zpow")
        cls = S.classify_connection(sd.conn, sd.fixture.flat_domain.grid())
        assert cls.kind == S.GENERIC and not cls.mixed
        assert cls.residuals["recurrence_minors"] > 1e-3

    def test_recurrent_example(self):
        # Γ¹₂₂ = exp(y¹) gives ρ = exp(y¹) dy²dy², rank one and recurrent but not parallel
        conn = S.SurfaceConnection.from_components({(0, 1, 1): lambda y1, y2: J.exp(y1)}, domain=BOX)
        cls = S.classify_connection(conn, BOX.grid(5))
        assert cls.kind == S.RICCI_RECURRENT, cls.residuals
