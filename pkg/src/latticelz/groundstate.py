"""Imaginary-time ground-state search at fixed detuning, plus detuning scans.

The solver contracts a trial state with the same split stepping as the
real-time propagator, renormalizing each step.  Convergence requires both a
relative energy-change and a max-pointwise state-change criterion to hold
for a number of consecutive steps; the step size then halves and the
criteria must hold again, down to ``dt_min``.  A coarse warmup step bridges
the slow trap-scale relaxation modes, whose rates are far below the hopping
scale.  Non-convergence within ``max_steps`` returns the best iterate
flagged, never an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .model import (
    ModelParams,
    SpinorField,
    edge_density_ratio,
    energy_functional,
    hamiltonian_apply,
)
from .observables import EmptyOrbitalError, imbalance, widths
from .propagate import StepperConfig, step_imaginary

__all__ = [
    "GroundConfig",
    "GroundPoint",
    "GroundReport",
    "GroundResult",
    "carrier_initial_field",
    "find_ground",
    "gaussian_initial_field",
    "ground_scan",
]


@dataclass
class GroundConfig:
    """Solver settings for one imaginary-time relaxation."""

    detuning: float = 0.0
    tol_energy: float = 1e-10
    tol_state: float = 1e-9
    consecutive: int = 10
    max_steps: int = 200_000
    # "adapted-carrier" | "gaussian" | "random-phase-gaussian" | a SpinorField
    init: object = "adapted-carrier"
    rng_seed: int = 0
    dt: float = 0.1
    dt_min: float = 0.025
    dt_coarse: float | None = 1.6
    mixing_search_every: int = 200  # 0 disables the orbital-mixing search

    def __post_init__(self) -> None:
        for name in ("tol_energy", "tol_state", "dt", "dt_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.dt_coarse is not None and self.dt_coarse <= 0:
            raise ValueError("dt_coarse must be > 0 or None")
        if self.max_steps < 1 or self.consecutive < 1:
            raise ValueError("max_steps and consecutive must be >= 1")


@dataclass
class GroundReport:
    converged: bool
    steps: int
    energy: float
    residual: float
    phase_log: list = dc_field(default_factory=list)  # (dt, steps in phase)
    warnings: list = dc_field(default_factory=list)


@dataclass
class GroundResult:
    field: SpinorField
    energy: float
    report: GroundReport

    @property
    def z_tot(self) -> float:
        return imbalance(self.field)[0]


def _gaussian_envelope(params: ModelParams) -> np.ndarray:
    sigma2 = 2.0 / params.omega if params.omega > 0 else (max(params.shape) / 4.0) ** 2
    jx = (np.arange(params.nx) - params.nx // 2)[:, None]
    jy = (np.arange(params.ny) - params.ny // 2)[None, :]
    return np.exp(-(jx**2 + jy**2) / (2.0 * sigma2))


def gaussian_initial_field(
    params: ModelParams, random_phases: bool, rng: np.random.Generator,
) -> SpinorField:
    """Isotropic Gaussian envelope on both orbitals, unit total norm.

    Width in site units is sqrt(2/omega).  Random onsite phases let the
    relaxation fall into a symmetry-broken branch instead of stalling on a
    symmetric saddle near zero detuning.
    """
    envelope = _gaussian_envelope(params).astype(np.complex128)
    if random_phases:
        px = envelope * np.exp(2j * np.pi * rng.random(params.shape))
        py = envelope * np.exp(2j * np.pi * rng.random(params.shape))
    else:
        px = envelope.copy()
        py = envelope.copy()
    return SpinorField(px, py).normalized()


def _harmonic_width_sq(t_hop: float, omega: float, params: ModelParams) -> float:
    """Harmonic-estimate position variance for a band-edge condensate.

    A particle with hopping amplitude t along one axis has effective mass
    1/(2|t|) near its band minimum, so in the trap <r^2> = sqrt(|t|/2)/omega.
    """
    if omega > 0 and t_hop != 0:
        return np.sqrt(abs(t_hop) / 2.0) / omega
    return (np.pi * max(params.shape) / 4.0) ** 2


def carrier_initial_field(
    params: ModelParams, detuning: float, minority_weight: float = 0.05,
) -> SpinorField:
    """Band-minimum carrier waves under orbital-matched Gaussian envelopes.

    With t1 < 0 each orbital condenses at the band edge along its node
    direction, so the x-orbital carries a phase e^{i pi jx} and the
    y-orbital e^{i pi jy} (real staggered signs on integer sites).  The
    y-component gets an extra factor i, seeding one of the two
    antiferromagnetic branches favored by the orbital-changing term.
    Envelope widths per orbital and axis are the harmonic-trap estimates
    for the corresponding effective mass, so only the interaction
    broadening is left to relax.  The orbital disfavored by the detuning
    starts at ``minority_weight`` amplitude: near the polarization
    crossover the total imbalance is a critically soft coordinate, and
    starting close to the polarized sector skips an arbitrarily slow
    global population transfer while still letting a mixed minimum pull
    population back in.
    """
    jx = (np.arange(params.nx) - params.nx // 2)[:, None]
    jy = (np.arange(params.ny) - params.ny // 2)[None, :]
    x, y = np.pi * jx, np.pi * jy
    vx_along = _harmonic_width_sq(params.t1, params.omega, params)
    vx_trans = _harmonic_width_sq(params.t2, params.omega, params)
    env_x = np.exp(-x**2 / (4 * vx_along) - y**2 / (4 * vx_trans))
    env_y = np.exp(-x**2 / (4 * vx_trans) - y**2 / (4 * vx_along))
    wx, wy = 1.0, 1.0
    if detuning < 0:
        wy = minority_weight
    elif detuning > 0:
        wx = minority_weight
    px = wx * env_x * np.cos(np.pi * jx) * np.ones(params.shape)
    py = 1j * wy * env_y * np.cos(np.pi * jy) * np.ones(params.shape)
    return SpinorField(px.astype(np.complex128), py).normalized()


def _initial_field(cfg: GroundConfig, params: ModelParams) -> SpinorField:
    if isinstance(cfg.init, SpinorField):
        if cfg.init.shape != params.shape:
            raise ValueError(
                f"provided field shape {cfg.init.shape} != lattice {params.shape}"
            )
        return cfg.init.normalized()
    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.init == "gaussian":
        return gaussian_initial_field(params, False, rng)
    if cfg.init == "random-phase-gaussian":
        return gaussian_initial_field(params, True, rng)
    if cfg.init == "adapted-carrier":
        return carrier_initial_field(params, cfg.detuning)
    raise ValueError(f"unknown init {cfg.init!r}")


def _phase_plan(cfg: GroundConfig):
    """(dt, tol_energy, tol_state) triples, coarse warmup ladder first.

    Warmup phases halve from dt_coarse down to dt with tolerances scaled
    proportionally to their step size, so each phase relaxes to the same
    physical level while the slow (trap-scale) modes decay on the cheap
    coarse steps.  The final ladder dt -> dt_min runs at the configured
    tolerances.
    """
    phases = []
    if cfg.dt_coarse is not None and cfg.dt_coarse > cfg.dt:
        d = cfg.dt_coarse
        while d > cfg.dt * (1 + 1e-12):
            scale = d / cfg.dt
            phases.append((d, cfg.tol_energy * scale, cfg.tol_state * scale))
            d = 0.5 * d
    dt = cfg.dt
    while True:
        phases.append((dt, cfg.tol_energy, cfg.tol_state))
        if dt <= cfg.dt_min * (1 + 1e-12):
            break
        dt = 0.5 * dt
    return phases


_MIX_FACTORS = (0.25, 0.5, 0.8, 1.0, 1.25, 2.0, 4.0)


def _rebalanced(field: SpinorField, n_y_target: float, n_x: float,
                n_y: float) -> SpinorField:
    gx = np.sqrt((1.0 - n_y_target) / n_x)
    gy = np.sqrt(n_y_target / n_y)
    return SpinorField(gx * field.psi_x, gy * field.psi_y)


def _mixing_search(
    field: SpinorField, energy: float, detuning: float, params: ModelParams,
) -> tuple[SpinorField, float]:
    """Exact line minimization over the global orbital population split.

    Near the polarization crossover the total imbalance is a critically
    soft coordinate: plain imaginary time crawls along it at the (nearly
    vanishing) orbital gap.  Rescaling the two components jointly moves
    along exactly that coordinate with the cloud shapes frozen, so an
    occasional search over the y-population fraction, keeping only strict
    energy improvements, removes the critical slowing without touching the
    flow itself.  Run this only at step sizes small enough that the
    splitting bias is below the orbital gap, or the search and the biased
    flow tug the population in opposite directions forever.
    """
    min_gain = 1e-15 * max(abs(energy), 1.0)
    n_x = float(np.sum(np.abs(field.psi_x) ** 2))
    n_y = float(np.sum(np.abs(field.psi_y) ** 2))
    if n_x < 1e-12 or n_y < 1e-12:
        return field, energy

    def evaluate(n_y_target):
        cand = _rebalanced(field, n_y_target, n_x, n_y)
        return cand, energy_functional(cand, detuning, params)

    trials = []
    for factor in _MIX_FACTORS:
        target = n_y * factor
        if not 1e-300 < target < 1.0 - 1e-12:
            continue
        if factor == 1.0:
            trials.append((energy, n_y, field))
            continue
        cand, e = evaluate(target)
        trials.append((e, target, cand))
    if not trials:
        return field, energy
    trials.sort(key=lambda item: item[0])
    best_e, best_target, best_field = trials[0]

    # parabolic refinement in log(n_y) around the discrete minimum
    logs = sorted((np.log(t), e) for e, t, _ in trials)
    idx = int(np.argmin([e for _, e in logs]))
    if 0 < idx < len(logs) - 1:
        pts = logs[idx - 1:idx + 2]
        a, b, _ = np.polyfit([p[0] for p in pts], [p[1] for p in pts], 2)
        if a > 0:
            vertex = -b / (2 * a)
            if pts[0][0] < vertex < pts[2][0]:
                cand, e = evaluate(float(np.exp(vertex)))
                if e < best_e:
                    best_e, best_field = e, cand

    if best_e < energy - min_gain:
        return best_field, best_e
    return field, energy


def stationarity_residual(
    field: SpinorField, detuning: float, params: ModelParams
) -> float:
    """||H_eff psi - mu psi|| with mu = <psi|H_eff psi>, for a unit-norm state."""
    h_psi = hamiltonian_apply(field, detuning, params)
    mu = field.overlap(h_psi).real
    rx = h_psi.psi_x - mu * field.psi_x
    ry = h_psi.psi_y - mu * field.psi_y
    return float(np.sqrt(np.sum(np.abs(rx) ** 2) + np.sum(np.abs(ry) ** 2)))


def _inject_minority(field: SpinorField, params: ModelParams, detuning: float,
                     weight: float = 0.05) -> SpinorField:
    """Plant the carrier-wave seed of the detuning-disfavored orbital."""
    jx = (np.arange(params.nx) - params.nx // 2)[:, None]
    jy = (np.arange(params.ny) - params.ny // 2)[None, :]
    x, y = np.pi * jx, np.pi * jy
    v_along = _harmonic_width_sq(params.t1, params.omega, params)
    v_trans = _harmonic_width_sq(params.t2, params.omega, params)
    if detuning < 0:
        env = np.exp(-x**2 / (4 * v_trans) - y**2 / (4 * v_along))
        seed = 1j * env * np.cos(np.pi * jy) * np.ones(params.shape)
        majority_norm = np.sum(np.abs(field.psi_x) ** 2)
        seed *= weight * np.sqrt(majority_norm / np.sum(np.abs(seed) ** 2))
        return SpinorField(field.psi_x, field.psi_y + seed).normalized()
    env = np.exp(-x**2 / (4 * v_along) - y**2 / (4 * v_trans))
    seed = env * np.cos(np.pi * jx) * np.ones(params.shape).astype(complex)
    majority_norm = np.sum(np.abs(field.psi_y) ** 2)
    seed *= weight * np.sqrt(majority_norm / np.sum(np.abs(seed) ** 2))
    return SpinorField(field.psi_x + seed, field.psi_y).normalized()


def find_ground(cfg: GroundConfig, params: ModelParams) -> GroundResult:
    """Relax to the lowest-energy state at the configured detuning.

    With the default staged init the coarse warmup runs with the
    detuning-disfavored orbital empty: an exactly empty orbital is
    preserved by the flow, so the coarse-step splitting bias cannot pump
    population across the (near-critical, arbitrarily soft) orbital
    balance.  The minority seed is planted when the fine ladder starts,
    where the mixing search and the almost unbiased flow settle it.
    """
    staged = (cfg.init == "adapted-carrier" and cfg.detuning != 0.0
              and cfg.mixing_search_every > 0)
    if staged:
        field = carrier_initial_field(params, cfg.detuning, minority_weight=0.0)
    else:
        field = _initial_field(cfg, params)
    energy = energy_functional(field, cfg.detuning, params)
    best_field, best_energy = field, energy

    report = GroundReport(converged=False, steps=0, energy=energy, residual=np.nan)
    total_steps = 0
    minority_pending = staged
    for dt, tol_e, tol_s in _phase_plan(cfg):
        stepper = StepperConfig(dt=dt, mode="imaginary")
        # at coarse dt the splitting bias overwhelms the orbital gap and
        # would fight the mixing search; keep the search to the fine ladder
        fine = dt <= cfg.dt * (1 + 1e-12)
        search_here = cfg.mixing_search_every and fine
        if minority_pending and fine:
            field = _inject_minority(field, params, cfg.detuning)
            energy = energy_functional(field, cfg.detuning, params)
            minority_pending = False
        streak = 0
        phase_steps = 0
        while total_steps < cfg.max_steps:
            new_field, _ = step_imaginary(field, stepper, cfg.detuning, params)
            new_energy = energy_functional(new_field, cfg.detuning, params)
            if search_here and (phase_steps == 0 or (phase_steps + 1)
                                % cfg.mixing_search_every == 0):
                new_field, new_energy = _mixing_search(
                    new_field, new_energy, cfg.detuning, params)
            de = abs(new_energy - energy) / max(abs(new_energy), 1e-18)
            dpsi = max(
                np.abs(new_field.psi_x - field.psi_x).max(),
                np.abs(new_field.psi_y - field.psi_y).max(),
            )
            field, energy = new_field, new_energy
            total_steps += 1
            phase_steps += 1
            if energy < best_energy:
                best_field, best_energy = field, energy
            streak = streak + 1 if (de <= tol_e and dpsi <= tol_s) else 0
            if streak >= cfg.consecutive:
                break
        report.phase_log.append((dt, phase_steps))
        if streak < cfg.consecutive:
            break  # budget exhausted in this phase
    else:
        report.converged = True

    if not report.converged:
        report.warnings.append(
            f"not converged within {cfg.max_steps} steps; returning best iterate"
        )
        field, energy = best_field, best_energy
    if edge_density_ratio(field) > 1e-8:
        report.warnings.append(
            "cloud reaches the lattice edge (periodic images may interact)"
        )
    report.steps = total_steps
    report.energy = energy
    report.residual = stationarity_residual(field, cfg.detuning, params)
    return GroundResult(field=field, energy=energy, report=report)


@dataclass
class GroundPoint:
    """One row of a detuning scan."""

    detuning: float
    z_tot: float
    energy: float
    converged: bool
    steps: int
    widths_x: tuple  # (var_x, var_y) of the x-orbital cloud, NaN if empty
    widths_y: tuple
    field: SpinorField | None = None


def _orbital_widths(field: SpinorField, orbital: str) -> tuple:
    try:
        return widths(field, orbital)
    except EmptyOrbitalError:
        return (np.nan, np.nan)


def ground_scan(
    detunings,
    params: ModelParams,
    warm_start: bool = True,
    base_cfg: GroundConfig | None = None,
    keep_fields: bool = False,
) -> list[GroundPoint]:
    """Solve the ground state over a sorted list of detunings.

    Warm starting seeds each solve with the previous solution (sequential
    by construction); cold starts are independent.
    """
    detunings = [float(d) for d in detunings]
    if any(b < a for a, b in zip(detunings, detunings[1:])):
        raise ValueError("detunings must be sorted ascending")
    base = base_cfg or GroundConfig()

    points: list[GroundPoint] = []
    prev_field: SpinorField | None = None
    for d in detunings:
        init = prev_field if (warm_start and prev_field is not None) else base.init
        cfg = GroundConfig(
            detuning=d, tol_energy=base.tol_energy, tol_state=base.tol_state,
            consecutive=base.consecutive, max_steps=base.max_steps, init=init,
            rng_seed=base.rng_seed, dt=base.dt, dt_min=base.dt_min,
            dt_coarse=base.dt_coarse,
            mixing_search_every=base.mixing_search_every,
        )
        result = find_ground(cfg, params)
        if warm_start:
            prev_field = result.field
        points.append(GroundPoint(
            detuning=d,
            z_tot=result.z_tot,
            energy=result.energy,
            converged=result.report.converged,
            steps=result.report.steps,
            widths_x=_orbital_widths(result.field, "x"),
            widths_y=_orbital_widths(result.field, "y"),
            field=result.field if keep_fields else None,
        ))
    return points
