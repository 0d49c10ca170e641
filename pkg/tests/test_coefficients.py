import numpy as np
import pytest

from leftspec import (
    ConfigError,
    MiuraField,
    ModelSpec,
    PeriodicPotential,
    PiecewisePoly,
    SignedWeight,
    build_model,
    jordan_decompose,
    loc_unif_seminorm,
    miura_forward,
    step_field,
    yafaev_check,
)

OM = 2.0 * np.pi


def assert_same_density(a, b, atol=1e-11):
    xs = np.linspace(0.013, a.omega - 0.017, 401)
    for x in xs:
        assert a(x, side="right") == pytest.approx(b(x, side="right"), abs=atol)


class TestMiuraForward:
    def test_zero_field(self):
        phi = MiuraField(OM, PiecewisePoly.zero(OM))
        q = miura_forward(phi, "partner1")
        assert q.q1 == pytest.approx(0.0)
        assert q.atoms == ()
        assert_same_density(q.density, PiecewisePoly.zero(OM))

    def test_step_field_atoms_and_constant(self):
        # circle version of (alpha/2) sgn(x - x0): partner1 puts +alpha at the
        # boundary and -alpha at x0, on top of the constant alpha^2/4
        alpha, x0 = 2.0, np.pi
        q = miura_forward(step_field(alpha, x0, OM), "partner1")
        assert q.q1 == pytest.approx(alpha**2 / 4.0)
        assert dict(q.atoms) == pytest.approx({0.0: alpha, x0: -alpha})
        q2 = miura_forward(step_field(alpha, x0, OM), "partner2")
        assert dict(q2.atoms) == pytest.approx({0.0: -alpha, x0: alpha})

    def test_cos_field_oracle(self, cos_field):
        # phi = cos: q1 = 1/2 and q2 = sin(2x)/4 - cos(x) in the mean-zero gauge
        q = miura_forward(cos_field, "partner1")
        assert q.q1 == pytest.approx(0.5, abs=1e-10)
        q2 = q.q2_canonical
        xs = np.linspace(0.1, OM - 0.1, 101)
        for x in xs:
            assert q2(x, side="right") == pytest.approx(
                np.sin(2 * x) / 4 - np.cos(x), abs=1e-9
            )

    @pytest.mark.parametrize("sign,s", [("partner1", -1.0), ("partner2", 1.0)])
    def test_symbolic_piece_identity(self, sign, s):
        # on each smooth piece q1 + density == phi^2 + s*phi' exactly, and the
        # atoms are s*(jumps of phi)
        phi_pw = PiecewisePoly(
            OM, (0.0, 1.0, 4.0),
            (np.array([0.5, -0.25]), np.array([1.0, 0.0, 0.125]), np.array([-0.7])),
        )
        phi = MiuraField(OM, phi_pw)
        q = miura_forward(phi, sign)
        target = phi_pw.square() + s * phi_pw.derivative()
        recon = q.density + q.q1
        merged = sorted(set(target.breaks) | set(recon.breaks))
        t = target.refine_breaks(merged)
        rrec = recon.refine_breaks(merged)
        for ct, cr in zip(t.coeffs, rrec.coeffs):
            n = max(ct.size, cr.size)
            a = np.zeros(n); a[: ct.size] = ct
            b = np.zeros(n); b[: cr.size] = cr
            assert np.allclose(a, b, atol=1e-12)
        expected_atoms = {p: s * j for p, j in phi_pw.jumps(tol=1e-12)}
        assert dict(q.atoms) == pytest.approx(expected_atoms)

    def test_q2_gauge_is_mean_zero(self, cos_field):
        q = miura_forward(cos_field, "partner1")
        assert q.q2_canonical.mean() == pytest.approx(0.0, abs=1e-12)

    def test_bad_sign(self, cos_field):
        with pytest.raises(ValueError):
            miura_forward(cos_field, "partner3")


class TestJordan:
    def test_atom_split(self):
        w = SignedWeight(OM, atoms=((1.0, 2.0), (2.0, -3.0)))
        plus, minus = jordan_decompose(w)
        assert plus.total_variation() == pytest.approx(2.0)
        assert minus.total_variation() == pytest.approx(3.0)
        assert plus.atoms == ((1.0, 2.0),)
        assert minus.atoms == ((2.0, 3.0),)

    def test_nonnegative_density(self):
        w = SignedWeight.constant(OM, 1.0)
        plus, minus = jordan_decompose(w)
        assert minus.total_variation() == pytest.approx(0.0)
        assert plus.total_variation() == pytest.approx(w.total_variation())

    def test_cos_density_split(self):
        from leftspec import fit_callable

        w = SignedWeight(OM, density=fit_callable(np.cos, OM, tol=1e-10))
        plus, minus = jordan_decompose(w)
        assert plus.density.integral_cell() == pytest.approx(2.0, abs=1e-8)
        assert minus.density.integral_cell() == pytest.approx(2.0, abs=1e-8)
        # positive part lives on [0, pi/2) u (3 pi/2, 2 pi)
        assert plus.density(1.0, side="right") == pytest.approx(np.cos(1.0), abs=1e-9)
        assert plus.density(np.pi, side="right") == pytest.approx(0.0, abs=1e-12)

    def test_reassembly_and_tv(self):
        rng = np.random.default_rng(7)
        from conftest import random_weight

        for _ in range(10):
            w = random_weight(rng, OM)
            plus, minus = jordan_decompose(w)
            xs = np.linspace(0.01, OM - 0.01, 101)
            for x in xs:
                assert plus.density(x, side="right") - minus.density(
                    x, side="right"
                ) == pytest.approx(w.density(x, side="right"), abs=1e-10)
            assert plus.total_variation() + minus.total_variation() == pytest.approx(
                w.total_variation(), abs=1e-9
            )


class TestLocUnifSeminorm:
    def test_constant(self):
        f = PiecewisePoly.constant(OM, 1.0)
        assert loc_unif_seminorm(f, 1, 1.0) == pytest.approx(1.0)

    def test_cos_p2_closed_form(self):
        from leftspec import fit_callable

        f = fit_callable(np.cos, OM, tol=1e-10)
        # max over a of 1/2 + (sin(2a+2) - sin(2a))/4 = 1/2 + sin(1)/2
        assert loc_unif_seminorm(f, 2, 1.0) == pytest.approx(
            0.5 + np.sin(1.0) / 2.0, abs=1e-8
        )

    def test_zero(self):
        assert loc_unif_seminorm(PiecewisePoly.zero(OM), 1, 2.0) == pytest.approx(0.0)

    def test_brute_force_oracle(self):
        f = PiecewisePoly(OM, (0.0, 2.5), (np.array([1.0, -0.3]), np.array([-0.5, 0.2])))
        val = loc_unif_seminorm(f, 2, 1.3)
        g = f.square()
        brute = max(g.integrate(a, a + 1.3) for a in np.linspace(0, OM, 20001))
        assert val == pytest.approx(brute, abs=1e-6)
        assert val >= brute - 1e-12

    def test_translation_invariance(self):
        f = PiecewisePoly(OM, (0.0, 1.0), (np.array([0.7, 0.1]), np.array([-0.2])))
        base = loc_unif_seminorm(f, 1, 0.8)
        for delta in (0.3, 1.9, 5.0):
            assert loc_unif_seminorm(f.translate(delta), 1, 0.8) == pytest.approx(
                base, abs=1e-10
            )

    def test_validation(self):
        with pytest.raises(ValueError):
            loc_unif_seminorm(PiecewisePoly.zero(OM), 3, 1.0)
        with pytest.raises(ValueError):
            loc_unif_seminorm(PiecewisePoly.zero(OM), 1, -1.0)


class TestYafaev:
    def test_constant_true(self):
        q = PeriodicPotential.constant(OM, 1.0)
        assert yafaev_check(q, 1.0, 1.0) is True

    def test_cos_false(self):
        # q = cos x: window integrals dip to -2 sin(1/2) < 0
        from leftspec import fit_callable

        q = PeriodicPotential(OM, 0.0, fit_callable(np.cos, OM, tol=1e-10))
        assert yafaev_check(q, 1.0, 0.1) is False

    def test_zero_false(self):
        q = PeriodicPotential.constant(OM, 0.0)
        assert yafaev_check(q, 2.0, 0.5) is False

    def test_affine_shift_identity(self):
        rng = np.random.default_rng(3)
        from conftest import random_potential

        for _ in range(10):
            q = random_potential(rng, omega=OM)
            q = PeriodicPotential(OM, q.q1, q.density, ())  # no atoms
            a = float(rng.uniform(0.3, 2.0))
            c = float(rng.uniform(-1.0, 1.0))
            c0 = float(rng.uniform(0.1, 1.0))
            if yafaev_check(q, a, c0):
                assert yafaev_check(q.shifted(c), a, c0 + c * a) or c < 0
            if c > 0 and yafaev_check(q, a, c0):
                assert yafaev_check(q.shifted(c), a, c0) is True

    def test_rejects_atoms(self):
        q = PeriodicPotential(OM, 1.0, atoms=((1.0, 0.5),))
        with pytest.raises(ValueError):
            yafaev_check(q, 1.0, 0.5)


class TestBuildModel:
    def test_constant(self):
        q, r = build_model(ModelSpec("constant", {"q1": 1.0, "r1": 1.0}))
        assert q.q1 == 1.0 and q.atoms == ()
        assert r.density(0.3, side="right") == pytest.approx(1.0)
        assert q.omega == 1.0  # default cell

    def test_constant_rejects_zero_weight(self):
        with pytest.raises(ConfigError):
            build_model(ModelSpec("constant", {"q1": 1.0, "r1": 0.0}))

    def test_kronig_penney(self):
        q, r = build_model(ModelSpec("kronig_penney", {"alpha": 1.0, "omega": OM}))
        assert q.q1 == 0.0
        assert q.atoms == ((0.0, 1.0),)
        assert q.density.integral_cell() == pytest.approx(0.0)
        assert r.atoms == ()

    def test_miura_step_matches_miura_forward(self):
        q, r = build_model(ModelSpec("miura_step", {"alpha": 2.0, "x0": np.pi}))
        ref = miura_forward(step_field(2.0, np.pi, OM), "partner2")
        assert q.q1 == pytest.approx(1.0)
        assert dict(q.atoms)[np.pi] == pytest.approx(2.0)
        assert dict(q.atoms) == pytest.approx(dict(ref.atoms))

    def test_step_weight(self):
        q, r = build_model(ModelSpec("step_weight", {"omega": OM}))
        assert r.density(1.0, side="right") == 1.0
        assert r.density(4.0, side="right") == -1.0
        assert r.total_mass() == pytest.approx(0.0)

    def test_ch_peakon(self):
        om, amp = 2.0, 1.3
        q, r = build_model(ModelSpec("ch_peakon", {"omega": om, "amplitude": amp}))
        # single corner atom at omega/2 with weight equal to the derivative jump
        assert len(r.atoms) == 1
        pos, wgt = r.atoms[0]
        assert pos == pytest.approx(om / 2)
        assert wgt == pytest.approx(-2.0 * amp * np.sinh(om / 2))
        # density is -3u for the cosh profile
        for x in (0.2, 0.7, 1.4, 1.9):
            u = amp * np.cosh(om / 2 - abs(x - om / 2))
            assert r.density(x, side="right") == pytest.approx(-3 * u, abs=1e-7)
        # C^1 at the period boundary: no atom there
        assert all(abs(p) > 1e-9 for p, _ in r.atoms)
        assert q.q1 == 1.0

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_model(ModelSpec("nonsense", {}))

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            build_model(ModelSpec("constant", {"q1": 1.0}))  # missing r1
        with pytest.raises(ConfigError):
            build_model(ModelSpec("constant", {"q1": 1.0, "r1": 1.0, "omega": -2.0}))


class TestInvariants:
    def test_weight_atoms_strictly_inside(self):
        with pytest.raises(ValueError):
            SignedWeight(OM, atoms=((0.0, 1.0),))

    def test_potential_atom_at_boundary_allowed(self):
        q = PeriodicPotential(OM, 0.0, atoms=((0.0, 1.0),))
        assert q.atoms == ((0.0, 1.0),)

    def test_distinct_atoms(self):
        with pytest.raises(ValueError):
            SignedWeight(OM, atoms=((1.0, 1.0), (1.0, 2.0)))

    def test_nonzero_atoms(self):
        with pytest.raises(ValueError):
            PeriodicPotential(OM, 0.0, atoms=((1.0, 0.0),))

    def test_canonical_primitive_reproduces_distribution(self):
        rng = np.random.default_rng(11)
        from conftest import random_potential

        for _ in range(10):
            q = random_potential(rng, positive=False)
            q2 = q.q2_canonical
            # periodic and mean zero
            assert q2.mean() == pytest.approx(0.0, abs=1e-10)
            # its derivative plus q1_canonical gives back the density
            back = q2.derivative() + q.q1_canonical
            xs = np.linspace(0.011, q.omega * 0.997, 53)
            for x in xs:
                assert back(x, side="right") == pytest.approx(
                    q.density(x, side="right") + q.q1, abs=1e-9
                )
            # its jumps are the atoms
            assert dict(q2.jumps(tol=1e-9)) == pytest.approx(dict(q.atoms), abs=1e-9)
