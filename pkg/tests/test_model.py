import numpy as np
import pytest

from latticelz.model import (
    BoundaryModeError,
    ModelParams,
    PhysicalRegimeWarning,
    SiteIndex,
    SpinorField,
    SweepSchedule,
    dispersion,
    dispersion_grids,
    energy_functional,
    hamiltonian_apply,
    onsite_matrix,
    total_density,
    trap_potential,
)
from latticelz.observables import bloch_field

from oracles import brute_energy, mirror_field

PAPER = dict(t1=-0.09, t2=0.0045, u=0.38)


def params(**kw):
    base = dict(PAPER, omega=0.0, nx=8, ny=8)
    base.update(kw)
    return ModelParams(**base)


class TestModelParams:
    def test_rejects_attractive_interaction(self):
        with pytest.raises(ValueError, match="repulsive"):
            params(u=-0.1)

    def test_rejects_tiny_lattice(self):
        with pytest.raises(ValueError, match="2x2"):
            params(nx=1)

    def test_rejects_negative_trap(self):
        with pytest.raises(ValueError):
            params(omega=-1.0)

    def test_warns_when_transverse_hopping_dominates(self):
        with pytest.warns(PhysicalRegimeWarning):
            params(t1=0.001, t2=0.0045)

    def test_warns_on_same_sign_hoppings(self):
        with pytest.warns(PhysicalRegimeWarning):
            params(t1=-0.09, t2=-0.0045)

    def test_physical_regime_is_quiet(self, recwarn):
        params()
        assert not [w for w in recwarn if w.category is PhysicalRegimeWarning]


class TestSiteGeometry:
    def test_position_is_pi_times_index(self):
        site = SiteIndex(3, -5)
        assert site.position == (3 * np.pi, -5 * np.pi)

    def test_trap_vanishes_at_origin(self):
        assert trap_potential(SiteIndex(0, 0), params(omega=0.1)) == 0.0

    def test_trap_value(self):
        p = params(omega=0.003, nx=32, ny=32)
        expected = 4.5e-6 * (10 * np.pi) ** 2
        assert trap_potential(SiteIndex(10, 0), p) == pytest.approx(expected, rel=1e-12)

    def test_trapless_limit(self):
        assert trap_potential(SiteIndex(7, -3), params(omega=0.0)) == 0.0


class TestDispersion:
    def test_band_center_x(self):
        assert dispersion((0.0, 0.0), "x", params()) == pytest.approx(0.171, abs=1e-12)

    def test_cosine_zeros(self):
        for orb in ("x", "y"):
            assert dispersion((np.pi / 2, np.pi / 2), orb, params()) == pytest.approx(
                0.0, abs=1e-15)

    def test_band_center_y_symmetric(self):
        assert dispersion((0.0, 0.0), "y", params()) == pytest.approx(0.171, abs=1e-12)

    def test_orbital_swap_is_axis_swap(self, rng):
        p = params()
        for _ in range(20):
            kx, ky = rng.uniform(-np.pi, np.pi, 2)
            assert dispersion((kx, ky), "y", p) == dispersion((ky, kx), "x", p)

    def test_unknown_orbital(self):
        with pytest.raises(ValueError):
            dispersion((0.0, 0.0), "z", params())

    def test_grids_match_pointwise(self):
        p = params(nx=4, ny=6)
        eps_x, eps_y = dispersion_grids(p)
        kx = 2 * np.pi * np.fft.fftfreq(4)
        ky = 2 * np.pi * np.fft.fftfreq(6)
        for i, kxv in enumerate(kx):
            for j, kyv in enumerate(ky):
                assert eps_x[i, j] == pytest.approx(dispersion((kxv, kyv), "x", p))
                assert eps_y[i, j] == pytest.approx(dispersion((kxv, kyv), "y", p))


class TestOnsiteMatrix:
    def test_pure_x_site(self):
        m = onsite_matrix(1.0, 0.0, 0.0, 0.0, params())
        assert m[0, 0] == pytest.approx(0.38, abs=1e-15)
        assert m[1, 1] == pytest.approx(0.38 * 2 / 3, abs=1e-15)
        assert m[0, 1] == 0.0

    def test_two_level_diagonal_at_zero_interaction(self):
        c = 1 / np.sqrt(2)
        m = onsite_matrix(c, c, 0.7, 0.0, params(u=0.0))
        assert m[0, 0] == pytest.approx(0.7)
        assert m[1, 1] == pytest.approx(-0.7)
        assert m[0, 1] == 0.0

    def test_balanced_site_hand_evaluated(self):
        # u*(1/2 + 1/3) on the diagonal, (2u/3)*(1/2) off diagonal
        c = 1 / np.sqrt(2)
        m = onsite_matrix(c, c, 0.0, 0.0, params())
        assert m[0, 0] == pytest.approx(0.38 * 5 / 6, rel=1e-12)
        assert m[1, 1] == pytest.approx(0.38 * 5 / 6, rel=1e-12)
        assert m[0, 1] == pytest.approx(0.38 / 3, rel=1e-12)

    def test_hermitian_for_random_inputs(self, rng):
        p = params()
        for _ in range(50):
            zx, zy = rng.normal(size=2) + 1j * rng.normal(size=2)
            m = onsite_matrix(zx, zy, rng.normal(), rng.uniform(0, 1), p)
            assert np.abs(m - m.conj().T).max() < 1e-15

    def test_matrix_reproduces_equations_of_motion(self, rng, free_params):
        """onsite_matrix * spinor + hopping == direct right-hand side."""
        from latticelz.model import trap_grid, _hop

        p = free_params
        f = SpinorField(
            rng.normal(size=p.shape) + 1j * rng.normal(size=p.shape),
            rng.normal(size=p.shape) + 1j * rng.normal(size=p.shape),
        )
        d = 0.37
        direct = hamiltonian_apply(f, d, p)
        v = np.asarray(trap_grid(p))
        rebuilt_x = _hop(f.psi_x, p.t1, p.t2).astype(complex)
        rebuilt_y = _hop(f.psi_y, p.t2, p.t1).astype(complex)
        for ix in range(p.nx):
            for iy in range(p.ny):
                m = onsite_matrix(f.psi_x[ix, iy], f.psi_y[ix, iy], d,
                                  v[ix, iy], p)
                vec = m @ np.array([f.psi_x[ix, iy], f.psi_y[ix, iy]])
                rebuilt_x[ix, iy] += vec[0]
                rebuilt_y[ix, iy] += vec[1]
        assert np.abs(rebuilt_x - direct.psi_x).max() < 1e-13
        assert np.abs(rebuilt_y - direct.psi_y).max() < 1e-13


class TestEnergyFunctional:
    def test_single_occupied_site(self):
        f = SpinorField.zeros(8, 8)
        f.psi_x[4, 4] = 1.0
        assert energy_functional(f, 0.0, params()) == pytest.approx(0.19, abs=1e-14)

    def test_vacuum(self):
        assert energy_functional(SpinorField.zeros(8, 8), 0.3, params()) == 0.0

    def test_uniform_closed_form(self):
        c = 0.25 - 0.4j
        p = params()
        f = SpinorField(np.full(p.shape, c), np.zeros(p.shape))
        n = p.nx * p.ny
        expected = n * (-2 * p.t1 - 2 * p.t2) * abs(c) ** 2 \
            + n * (p.u / 2) * abs(c) ** 4
        assert energy_functional(f, 0.0, p) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force_summation(self, rng):
        p = ModelParams(**PAPER, omega=0.05, nx=6, ny=5)
        f = SpinorField(
            rng.normal(size=p.shape) + 1j * rng.normal(size=p.shape),
            rng.normal(size=p.shape) + 1j * rng.normal(size=p.shape),
        ).normalized()
        d = -0.002
        brute = brute_energy(f, d, p)
        assert abs(brute.imag) < 1e-12
        assert energy_functional(f, d, p) == pytest.approx(brute.real, rel=1e-12)

    def test_rejects_unsupported_boundary(self):
        f = SpinorField.zeros(4, 4)
        with pytest.raises(BoundaryModeError):
            energy_functional(f, 0.0, params(nx=4, ny=4), boundary="open")

    def test_mirror_symmetry(self, rng, make_random_field):
        p = ModelParams(**PAPER, omega=0.07, nx=8, ny=8)
        f = make_random_field(8, 8)
        d = 3.3e-3
        e = energy_functional(f, d, p)
        e_mirror = energy_functional(mirror_field(f), -d, p)
        assert abs(e - e_mirror) < 1e-12

    def test_global_phase_invariance(self, make_random_field):
        p = ModelParams(**PAPER, omega=0.07, nx=8, ny=8)
        f = make_random_field(8, 8)
        theta = 0.8137
        g = SpinorField(f.psi_x * np.exp(1j * theta), f.psi_y * np.exp(1j * theta))
        assert abs(energy_functional(f, 1e-3, p)
                   - energy_functional(g, 1e-3, p)) < 1e-12
        assert np.abs(total_density(f) - total_density(g)).max() < 1e-12
        bf, bg = bloch_field(f), bloch_field(g)
        for a, b in ((bf.j_x, bg.j_x), (bf.j_y, bg.j_y), (bf.j_z, bg.j_z)):
            assert np.abs(a - b).max() < 1e-12


class TestDensityAndBloch:
    def test_point_density(self):
        f = SpinorField.zeros(4, 4)
        f.psi_x[1, 2] = 1.0
        q = total_density(f)
        assert q[1, 2] == 1.0
        assert q.sum() == 1.0

    def test_equal_fields_double_density(self, make_random_field):
        f = make_random_field(6, 6)
        g = SpinorField(f.psi_x, f.psi_x)
        assert np.allclose(total_density(g), 2 * np.abs(f.psi_x) ** 2)

    def test_bloch_length_identity(self, make_random_field):
        f = make_random_field(8, 8)
        b = bloch_field(f)
        q = total_density(f)
        length_sq = b.j_x**2 + b.j_y**2 + b.j_z**2
        assert np.abs(length_sq - q**2).max() < 1e-12


class TestSpinorField:
    def test_norm_and_normalized(self, make_random_field):
        f = make_random_field(5, 7)
        assert f.norm() == pytest.approx(1.0, abs=1e-13)
        g = SpinorField(2.0 * f.psi_x, 2.0 * f.psi_y)
        assert g.normalized().norm() == pytest.approx(1.0, abs=1e-13)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            SpinorField(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_zero_field_cannot_normalize(self):
        with pytest.raises(ValueError):
            SpinorField.zeros(4, 4).normalized()


class TestSweepSchedule:
    def test_detuning_clamps_outside_interval(self):
        s = SweepSchedule(lam=2.0, t_i=-1.0, t_f=3.0, dt=0.1)
        assert s.detuning(-10.0) == pytest.approx(-2.0)
        assert s.detuning(10.0) == pytest.approx(6.0)
        assert s.detuning(0.5) == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            SweepSchedule(lam=0.0, t_i=-1.0, t_f=1.0, dt=0.1)
        with pytest.raises(ValueError):
            SweepSchedule(lam=1.0, t_i=1.0, t_f=-1.0, dt=0.1)
        with pytest.raises(ValueError):
            SweepSchedule(lam=1.0, t_i=-1.0, t_f=1.0, dt=-0.1)
        with pytest.raises(ValueError):
            SweepSchedule(lam=1.0, t_i=-1.0, t_f=1.0, dt=0.1, hold_pre=-1.0)
