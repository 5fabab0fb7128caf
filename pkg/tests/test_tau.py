import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from confsym import jets as J
from confsym import kerb as K
from confsym import pipeline as P
from confsym import surface as S
from confsym import tau as T

BOX = J.Box((-1.0, -1.0), (1.0, 1.0))
FLAT = S.SurfaceConnection.flat(domain=BOX)
PTS = J.Box((-0.8, -0.8), (0.8, 0.8)).grid(4)


def sym_field(expr, domain=BOX):
    """Symmetric (2, 2) field from a function returning (t00, t01, t11)."""
    def full(y1, y2):
        a, b, c = expr(y1, y2)
        return [[a, b], [b, c]]
    return J.Field(2, (2, 2), expr=full, domain=domain)


def constant(value, domain=BOX):
    return J.Field(2, (), expr=lambda y1, y2: value + 0.0 * y1, domain=domain)


class TestL:
    def test_flat_example(self):
        tau = sym_field(lambda y1, y2: (y2 ** 2, 0 * y1, 0 * y1))
        assert_allclose(T.L_apply(FLAT, None, tau, PTS), 2.0, atol=1e-13)

    def test_single_point(self):
        tau = sym_field(lambda y1, y2: (y2 ** 2, 0 * y1, 0 * y1))
        assert np.ndim(T.L_apply(FLAT, None, tau, [0.1, 0.2])) == 0

    def test_two_form_symmetries(self):
        sd = P.surface_data("ellipsoid")
        dom = sd.conn.domain
        tau = sym_field(lambda u1, u2: (u1 * u2, J.sin(u2), u1 ** 3), dom)
        L = T.L_tensor(sd.conn, sd.rho, tau, sd.fixture.flat_domain.grid(3))
        assert_allclose(L, -np.swapaxes(L, 1, 2), atol=1e-12)
        assert_allclose(L, -np.swapaxes(L, 3, 4), atol=1e-12)
        assert_allclose(L[:, 0, 1, 0, 1], L[:, 1, 0, 1, 0], atol=1e-12)

    @pytest.mark.parametrize("name", ["sphere", "zpow"])
    def test_gauge_kernel(self, name):
        sd = P.surface_data(name)
        xi = J.Field(2, (2,), expr=lambda u1, u2: [J.exp(u2) * u1, u1 * u1 - u2], domain=sd.conn.domain)
        out = T.L_apply(sd.conn, sd.rho, K.b_apply(sd.conn, xi), sd.fixture.flat_domain.grid(3))
        assert np.abs(out).max() < 1e-10


class TestF:
    def test_constant_on_flat(self):
        Tc = sym_field(lambda y1, y2: (1.0 + 0 * y1, 2.0 + 0 * y1, -1.0 + 0 * y1))
        assert_allclose(T.F_apply(FLAT, None, Tc, PTS), 0.0, atol=1e-14)

    def test_quadratic_on_flat(self):
        Tq = sym_field(lambda y1, y2: (y1 ** 2, 0 * y1, 0 * y1))
        assert_allclose(T.F_apply(FLAT, None, Tq, PTS), 2.0, atol=1e-13)

    def test_correspondence_with_L(self):
        # τ_{jk} = α_{jm}α_{kn}T^{mn} gives (𝓛τ)₁₂₁₂ = a²·𝓕T for a parallel α
        sd = P.surface_data("sphere")
        dom = sd.conn.domain
        Tf = sym_field(lambda u1, u2: (u1 * u2, u2 ** 2, J.cos(u1)), dom)
        a = sd.alpha.a

        def tau_eval(p, k):
            t, aa = Tf.evaluate(p, k), a.evaluate(p, k) ** 2
            t00, t01, t11 = t[:, 0, 0], t[:, 0, 1], t[:, 1, 1]
            return J.stack([J.stack([aa * t11, -aa * t01], -1), J.stack([-aa * t01, aa * t00], -1)], -2)

        tau = J.Field(2, (2, 2), evaluator=tau_eval, domain=dom)
        pts = sd.fixture.flat_domain.grid(3)
        lhs = T.L_apply(sd.conn, sd.rho, tau, pts)
        rhs = a.values(pts) ** 2 * T.F_apply(sd.conn, sd.rho, Tf, pts)
        assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


class TestSolveTau:
    alpha = S.parallel_area_form(FLAT, (0.0, 0.0))

    @pytest.mark.parametrize("eps", [1, -1])
    def test_flat_closed_form(self, eps):
        sol = T.solve_tau(FLAT, constant(1.0), self.alpha, eps)
        u = PTS
        assert sol.c == 1.0 and sol.base_line == 0.0
        assert_allclose(sol.tau.values(u)[:, 1, 1], eps * u[:, 0] ** 2 / 2, atol=1e-13)
        assert_allclose(sol.tau.values(u)[:, [0, 0, 1], [0, 1, 0]], 0.0, atol=0)

    def test_epsilon_flip(self):
        sd = P.surface_data("sphere")
        pts = sd.fixture.flat_domain.grid(3)
        plus = T.solve_tau(sd.conn, sd.f, sd.alpha, 1).tau.values(pts)
        minus = T.solve_tau(sd.conn, sd.f, sd.alpha, -1).tau.values(pts)
        assert_allclose(plus, -minus, atol=1e-15)

    @pytest.mark.parametrize("name", ["sphere", "two-sheeted-hyperboloid", "zpow"])
    @pytest.mark.parametrize("eps", [1, -1])
    def test_residual(self, name, eps):
        sd = P.surface_data(name)
        sol = T.solve_tau(sd.conn, sd.f, sd.alpha, eps)
        pts = sd.fixture.flat_domain.grid(4)
        target = eps * sd.alpha.a.values(pts) ** 2
        assert np.abs(T.L_apply(sd.conn, sd.rho, sol.tau, pts) - target).max() < 1e-6

    def test_inconsistent(self):
        f = J.Field(2, (), expr=lambda y1, y2: 1.0 + 0.1 * y1, domain=BOX)
        with pytest.raises(T.InconsistentInputError):
            T.solve_tau(FLAT, f, self.alpha, 1)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            T.solve_tau(FLAT, constant(1.0), self.alpha, 0)


class TestGauge:
    def test_shift_keeps_image(self):
        sd = P.surface_data("ellipsoid")
        sol = T.solve_tau(sd.conn, sd.f, sd.alpha, 1)
        xi = J.Field(2, (2,), expr=lambda u1, u2: [u1 * u2 ** 2, J.sin(u1 + u2)], domain=sd.conn.domain)
        pts = sd.fixture.flat_domain.grid(3)
        shifted = T.gauge_shift(sd.conn, sol.tau, xi)
        assert_allclose(T.L_apply(sd.conn, sd.rho, shifted, pts), T.L_apply(sd.conn, sd.rho, sol.tau, pts),
                        atol=1e-9)

    @settings(max_examples=5, deadline=None)
    @given(st.floats(-0.2, 0.2))
    def test_between_two_base_lines(self, shift):
        sd = P.surface_data("sphere")
        dom = sd.fixture.flat_domain
        sol = T.solve_tau(sd.conn, sd.f, sd.alpha, -1)
        other = T.solve_tau(sd.conn, sd.f, sd.alpha, -1, base_line=sol.base_line + shift)
        xi = T.gauge_between(sol, other, sd.f)
        pts = dom.grid(3)
        bxi = K.b_apply(sd.conn, xi).values(pts)
        assert_allclose(bxi, 2 * (sol.tau.values(pts) - other.tau.values(pts)), atol=1e-10)
