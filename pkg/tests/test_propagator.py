import numpy as np
import pytest

from latticelz.model import (
    ModelParams,
    SpinorField,
    SweepSchedule,
    dispersion,
    energy_functional,
)
from latticelz.propagate import (
    FieldNotFiniteError,
    NormUnderflowError,
    Observer,
    StepperConfig,
    evolve,
    plan_segments,
    step_imaginary,
    step_rk4,
    step_split,
)

from oracles import exact_single_particle_ground, mirror_field

PAPER = dict(t1=-0.09, t2=0.0045)


def plane_wave(p, mx, my):
    jx = np.arange(p.nx)[:, None]
    jy = np.arange(p.ny)[None, :]
    kx = 2 * np.pi * mx / p.nx
    ky = 2 * np.pi * my / p.ny
    psi = np.exp(1j * (kx * jx + ky * jy)) / np.sqrt(p.nx * p.ny)
    return (kx, ky), SpinorField(psi, np.zeros(p.shape))


class TestSplitStep:
    def test_plane_wave_acquires_exact_phase(self):
        p = ModelParams(**PAPER, u=0.0, omega=0.0, nx=8, ny=8)
        k, f = plane_wave(p, 2, 1)
        cfg = StepperConfig(dt=0.05)
        out = step_split(f, 0.0, cfg, 0.0, p)
        expected = f.psi_x * np.exp(-1j * dispersion(k, "x", p) * cfg.dt)
        assert np.abs(out.psi_x - expected).max() < 1e-14
        assert np.abs(np.abs(out.psi_x) - np.abs(f.psi_x)).max() < 1e-14

    def test_single_site_diagonal_evolution(self):
        with pytest.warns(UserWarning):
            p = ModelParams(t1=0.0, t2=0.0, u=0.0, omega=0.0, nx=4, ny=4)
        f = SpinorField.zeros(4, 4)
        f.psi_x[1, 1] = 0.6
        f.psi_y[1, 1] = 0.8j
        d = 0.31
        cfg = StepperConfig(dt=0.05)
        out = step_split(f, 0.0, cfg, d, p)
        assert out.psi_x[1, 1] == pytest.approx(0.6 * np.exp(-1j * d * 0.05),
                                                abs=1e-14)
        assert out.psi_y[1, 1] == pytest.approx(0.8j * np.exp(1j * d * 0.05),
                                                abs=1e-14)

    def test_norm_conserved_per_step(self, make_random_field, free_params):
        f = make_random_field(8, 8)
        cfg = StepperConfig(dt=0.05)
        for k in range(10):
            g = step_split(f, 0.05 * k, cfg, 1e-3, free_params)
            assert abs(g.norm() - f.norm()) <= 1e-14
            f = g

    def test_matches_rk4_oracle(self, make_random_field, free_params):
        """500 coarse split steps vs RK4 at 10x finer dt."""
        f0 = make_random_field(8, 8)
        detuning = SweepSchedule(lam=1e-3, t_i=-10.0, t_f=15.0, dt=0.05).detuning
        split = f0.copy()
        cfg = StepperConfig(dt=0.05)
        for k in range(500):
            split = step_split(split, 0.05 * k, cfg, detuning, free_params)
        rk4 = f0.copy()
        for k in range(5000):
            rk4 = step_rk4(rk4, 0.005 * k, 0.005, detuning, free_params)
        err = max(np.abs(split.psi_x - rk4.psi_x).max(),
                  np.abs(split.psi_y - rk4.psi_y).max())
        assert err <= 1e-6

    def test_strang_order_halving(self, make_random_field, free_params):
        """Halving dt shrinks the final-state error by at least 3.5x."""
        f0 = make_random_field(8, 8)
        total_time = 10.0

        def run(dt):
            f = f0.copy()
            cfg = StepperConfig(dt=dt)
            for k in range(int(round(total_time / dt))):
                f = step_split(f, dt * k, cfg, 2e-3, free_params)
            return f

        ref = run(0.1 / 64)
        err = {}
        for dt in (0.1, 0.05):
            f = run(dt)
            err[dt] = max(np.abs(f.psi_x - ref.psi_x).max(),
                          np.abs(f.psi_y - ref.psi_y).max())
        assert err[0.1] / err[0.05] >= 3.5

    def test_mirror_covariance(self, make_random_field, free_params):
        """Orbital swap + transpose + negated detuning commutes with a step."""
        f = make_random_field(8, 8)
        cfg = StepperConfig(dt=0.05)
        d = 4e-3
        direct = f
        mirrored = mirror_field(f)
        for k in range(50):
            direct = step_split(direct, 0.05 * k, cfg, d, free_params)
            mirrored = step_split(mirrored, 0.05 * k, cfg, -d, free_params)
        swapped = mirror_field(direct)
        assert np.abs(swapped.psi_x - mirrored.psi_x).max() < 1e-10
        assert np.abs(swapped.psi_y - mirrored.psi_y).max() < 1e-10

    def test_nan_aborts_with_step_index(self, free_params):
        f = SpinorField.zeros(8, 8)
        f.psi_x[0, 0] = np.inf
        cfg = StepperConfig(dt=0.05)
        with pytest.raises(FieldNotFiniteError, match="step 7"):
            step_split(f, 0.0, cfg, 0.0, free_params, step_index=7)

    def test_mode_mismatch_rejected(self, free_params, make_random_field):
        f = make_random_field(8, 8)
        with pytest.raises(ValueError):
            step_split(f, 0.0, StepperConfig(dt=0.1, mode="imaginary"), 0.0,
                       free_params)
        with pytest.raises(ValueError):
            step_imaginary(f, StepperConfig(dt=0.1, mode="real"), 0.0,
                           free_params)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StepperConfig(dt=-1.0)
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, mode="sideways")
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, nonlinearity_update="never")


class TestRK4:
    def test_plane_wave_phase(self):
        p = ModelParams(**PAPER, u=0.0, omega=0.0, nx=8, ny=8)
        k, f = plane_wave(p, 1, 2)
        dt = 0.05
        out = step_rk4(f, 0.0, dt, 0.0, p)
        expected = f.psi_x * np.exp(-1j * dispersion(k, "x", p) * dt)
        # RK4 phase error is O((eps dt)^5) per step
        assert np.abs(out.psi_x - expected).max() < (0.2 * dt) ** 5

    def test_norm_drift_bounded(self, make_random_field, free_params):
        f = make_random_field(8, 8)
        for k in range(1000):
            f = step_rk4(f, 0.01 * k, 0.01, 1e-3, free_params)
        assert abs(f.norm() - 1.0) <= 1e-8

    def test_fourth_order_accuracy(self, make_random_field, free_params):
        """Error over a fixed interval drops ~16x when dt halves."""
        f0 = make_random_field(8, 8)
        total = 0.4

        def run(dt):
            f = f0.copy()
            for k in range(int(round(total / dt))):
                f = step_rk4(f, k * dt, dt, 5e-3, free_params)
            return f

        ref = run(total / 100)
        err = {}
        for dt in (0.4, 0.2):
            f = run(dt)
            err[dt] = max(np.abs(f.psi_x - ref.psi_x).max(),
                          np.abs(f.psi_y - ref.psi_y).max())
        ratio = err[0.4] / err[0.2]
        assert 10.0 <= ratio <= 24.0


class TestImaginaryStep:
    def test_exact_eigenstate_is_fixed_direction(self):
        p = ModelParams(**PAPER, u=0.0, omega=0.0, nx=8, ny=8)
        _, f = plane_wave(p, 3, 1)
        cfg = StepperConfig(dt=0.1, mode="imaginary")
        out, pre_norm = step_imaginary(f, cfg, 0.0, p)
        overlap = abs(f.overlap(out))
        assert overlap == pytest.approx(1.0, abs=1e-13)
        assert out.norm() == pytest.approx(1.0, abs=1e-13)
        assert pre_norm > 0

    def test_energy_never_increases(self, compact_params):
        from latticelz.groundstate import gaussian_initial_field

        rng = np.random.default_rng(5)
        f = gaussian_initial_field(compact_params, True, rng)
        cfg = StepperConfig(dt=0.05, mode="imaginary")
        energy = energy_functional(f, -1e-3, compact_params)
        for _ in range(400):
            f, _ = step_imaginary(f, cfg, -1e-3, compact_params)
            new_energy = energy_functional(f, -1e-3, compact_params)
            assert new_energy <= energy + 1e-10 * max(abs(energy), 1.0)
            energy = new_energy

    def test_single_particle_ground_energy(self, compact_params):
        """Repeated contraction reaches the exact U=0 ground state energy."""
        p = ModelParams(t1=compact_params.t1, t2=compact_params.t2, u=0.0,
                        omega=compact_params.omega, nx=12, ny=12)
        e_exact, _ = exact_single_particle_ground(p, 0.0, "x")
        from latticelz.groundstate import gaussian_initial_field

        f = gaussian_initial_field(p, True, np.random.default_rng(2))
        f = SpinorField(f.psi_x, np.zeros(p.shape))  # x-orbital sector
        cfg = StepperConfig(dt=0.1, mode="imaginary")
        for _ in range(3000):
            f, _ = step_imaginary(f, cfg, 0.0, p)
        energy = energy_functional(f, 0.0, p)
        assert abs(energy - e_exact) / abs(e_exact) <= 1e-3

    def test_underflow_aborts(self):
        with pytest.warns(UserWarning):
            p = ModelParams(t1=0.0, t2=0.0, u=0.0, omega=100.0, nx=16, ny=16)
        f = SpinorField.zeros(16, 16)
        f.psi_x[0, 0] = 1.0  # far corner, huge trap energy
        cfg = StepperConfig(dt=1.0, mode="imaginary")
        with pytest.raises(NormUnderflowError):
            g = f
            for _ in range(10):
                g, _ = step_imaginary(g, cfg, 0.0, p)


class TestEvolve:
    def test_zero_duration_returns_input(self, make_random_field, free_params):
        f = make_random_field(8, 8)
        schedule = SweepSchedule(lam=1.0, t_i=-1e-10, t_f=1e-10, dt=1.0)
        cfg = StepperConfig(dt=1.0)
        out, _ = evolve(f, schedule, cfg, free_params)
        assert out.psi_x is f.psi_x  # no step taken, field untouched

    def test_observation_is_non_intrusive(self, make_random_field, free_params):
        f = make_random_field(8, 8)
        schedule = SweepSchedule(lam=1e-3, t_i=-2.0, t_f=2.0, dt=0.1,
                                 hold_post=1.0)
        cfg = StepperConfig(dt=0.1)

        seen = []

        def spy(step, t, field):
            seen.append(step)

        out1, _ = evolve(f.copy(), schedule, cfg, free_params,
                         observers=[Observer(stride=1, fn=spy)])
        out2, _ = evolve(f.copy(), schedule, cfg, free_params,
                         observers=[Observer(stride=10, fn=spy)])
        assert np.array_equal(out1.psi_x, out2.psi_x)
        assert np.array_equal(out1.psi_y, out2.psi_y)

    def test_observers_hit_boundaries(self, make_random_field, free_params):
        f = make_random_field(8, 8)
        schedule = SweepSchedule(lam=1e-3, t_i=-2.0, t_f=2.0, dt=0.1,
                                 hold_pre=1.0, hold_post=1.0)
        plan = plan_segments(schedule, 0.1)
        seen = []
        evolve(f, schedule, StepperConfig(dt=0.1), free_params,
               observers=[Observer(stride=10**9, fn=lambda s, t, g: seen.append(s))])
        assert seen[0] == 0
        for boundary in plan.boundaries:
            assert boundary in seen

    def test_segment_plan(self):
        schedule = SweepSchedule(lam=1e-3, t_i=-2.0, t_f=2.0, dt=0.1,
                                 hold_pre=0.5, hold_post=1.5)
        plan = plan_segments(schedule, 0.1)
        assert (plan.n_pre, plan.n_sweep, plan.n_post) == (5, 40, 15)
        assert plan.time_at(0) == pytest.approx(-2.5)
        assert plan.time_at(plan.n_total) == pytest.approx(3.5)

    def test_energy_drift_small_on_hold(self, compact_ground, compact_params):
        """Constant-detuning evolution keeps the energy flat."""
        from latticelz.sweep import seed_initial

        f = seed_initial(compact_ground.field, 0.01)
        d = compact_ground.detuning
        e0 = energy_functional(f, d, compact_params)
        cfg = StepperConfig(dt=0.05)
        for k in range(2000):
            f = step_split(f, 0.05 * k, cfg, d, compact_params)
        e1 = energy_functional(f, d, compact_params)
        assert abs(e1 - e0) / abs(e0) <= 1e-6
