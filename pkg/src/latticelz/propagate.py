"""Time evolution: Strang-split spectral stepping plus an RK4 oracle.

A step is half-kinetic / full-onsite / half-kinetic.  The kinetic half steps
are exact in quasimomentum space (FFT under periodic boundaries); the onsite
step exponentiates the frozen-nonlinearity 2x2 matrix in closed form via its
Pauli decomposition, so every real-time substep is unitary by construction.
In ``midpoint`` mode the densities entering the onsite matrix are
re-estimated once from a provisional half step, which keeps the scheme
second order in dt for the nonlinear terms.

RK4 integrates the unsplit equations of motion and exists purely as a
verification oracle; it does not conserve the norm exactly and is never
used in production sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .model import (
    ModelParams,
    SpinorField,
    SweepSchedule,
    _dispersion_grids_raw,
    hamiltonian_apply,
    onsite_terms,
    trap_grid,
)

__all__ = [
    "FieldNotFiniteError",
    "NormUnderflowError",
    "Observer",
    "SegmentPlan",
    "StepperConfig",
    "evolve",
    "plan_segments",
    "step_imaginary",
    "step_rk4",
    "step_split",
]

DetuningLike = float | Callable[[float], float]


class FieldNotFiniteError(RuntimeError):
    """NaN/Inf appeared during stepping."""

    def __init__(self, step_index=None):
        where = "unknown step" if step_index is None else f"step {step_index}"
        super().__init__(f"field is no longer finite at {where}")
        self.step_index = step_index


class NormUnderflowError(RuntimeError):
    """Imaginary-time contraction drove the norm below representable range."""


@dataclass
class StepperConfig:
    """Step size, real/imaginary mode and nonlinearity treatment.

    ``plan`` is an opaque handle for cached FFT-space factors; it is filled
    lazily and keyed on (params, dt, mode), so one config can be reused
    across runs.
    """

    dt: float
    mode: str = "real"
    nonlinearity_update: str = "midpoint"
    plan: object = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"step size must be > 0, got {self.dt}")
        if self.mode not in ("real", "imaginary"):
            raise ValueError(f"mode must be 'real' or 'imaginary', got {self.mode!r}")
        if self.nonlinearity_update not in ("frozen", "midpoint"):
            raise ValueError(
                "nonlinearity_update must be 'frozen' or 'midpoint', "
                f"got {self.nonlinearity_update!r}"
            )


@lru_cache(maxsize=64)
def _kinetic_half_factors(t1, t2, nx, ny, dt, mode):
    eps_x, eps_y = _dispersion_grids_raw(t1, t2, nx, ny)
    z = -0.5j * dt if mode == "real" else -0.5 * dt
    fx = np.exp(z * eps_x)
    fy = np.exp(z * eps_y)
    fx.setflags(write=False)
    fy.setflags(write=False)
    return fx, fy


def _kinetic_factors(params: ModelParams, dt: float, mode: str):
    return _kinetic_half_factors(params.t1, params.t2, params.nx, params.ny, dt, mode)


def _apply_kinetic_half(field: SpinorField, factors) -> SpinorField:
    fx, fy = factors
    px = np.fft.ifft2(np.fft.fft2(field.psi_x) * fx)
    py = np.fft.ifft2(np.fft.fft2(field.psi_y) * fy)
    return SpinorField(px, py)


def _onsite_exp_real(field: SpinorField, h11, h22, h12, dt: float) -> SpinorField:
    """Apply exp(-i H dt) sitewise, H Hermitian 2x2, in closed form."""
    a = 0.5 * (h11 + h22)
    bz = 0.5 * (h11 - h22)
    b = np.sqrt(bz**2 + np.abs(h12) ** 2)
    phase = np.exp(-1j * dt * a)
    c = np.cos(b * dt)
    s = dt * np.sinc(b * dt / np.pi)  # sin(b dt)/b, finite at b = 0
    px = phase * ((c - 1j * s * bz) * field.psi_x - 1j * s * h12 * field.psi_y)
    py = phase * (-1j * s * np.conj(h12) * field.psi_x + (c + 1j * s * bz) * field.psi_y)
    return SpinorField(px, py)


def _onsite_exp_imag(field: SpinorField, h11, h22, h12, dt: float) -> SpinorField:
    """Apply exp(-H dt) sitewise (Hermitian, contractive), in closed form."""
    a = 0.5 * (h11 + h22)
    bz = 0.5 * (h11 - h22)
    b = np.sqrt(bz**2 + np.abs(h12) ** 2)
    scale = np.exp(-dt * a)
    arg = b * dt
    ch = np.cosh(arg)
    small = arg < 1e-8
    safe = np.where(small, 1.0, arg)
    sh = dt * np.where(small, 1.0 + arg**2 / 6.0, np.sinh(safe) / safe)
    px = scale * ((ch - sh * bz) * field.psi_x - sh * h12 * field.psi_y)
    py = scale * (-sh * np.conj(h12) * field.psi_x + (ch + sh * bz) * field.psi_y)
    return SpinorField(px, py)


def _detuning_at(detuning: DetuningLike, t: float) -> float:
    return detuning(t) if callable(detuning) else float(detuning)


def _onsite_step(
    field: SpinorField, d_mid: float, dt: float, cfg: StepperConfig,
    params: ModelParams, apply_exp,
) -> SpinorField:
    v = trap_grid(params)
    h11, h22, h12 = onsite_terms(field, d_mid, v, params)
    if cfg.nonlinearity_update == "midpoint":
        provisional = apply_exp(field, h11, h22, h12, 0.5 * dt)
        h11, h22, h12 = onsite_terms(provisional, d_mid, v, params)
    return apply_exp(field, h11, h22, h12, dt)


def step_split(
    field: SpinorField, t: float, cfg: StepperConfig, detuning: DetuningLike,
    params: ModelParams, step_index: int | None = None,
) -> SpinorField:
    """One real-time Strang step from t to t + dt.

    The detuning entering the onsite matrix is evaluated at the midpoint
    t + dt/2.  Norm is conserved to roundoff per step.
    """
    if cfg.mode != "real":
        raise ValueError("step_split requires mode='real'")
    dt = cfg.dt
    factors = _kinetic_factors(params, dt, "real")
    d_mid = _detuning_at(detuning, t + 0.5 * dt)
    out = _apply_kinetic_half(field, factors)
    out = _onsite_step(out, d_mid, dt, cfg, params, _onsite_exp_real)
    out = _apply_kinetic_half(out, factors)
    if not out.is_finite():
        raise FieldNotFiniteError(step_index)
    return out


def step_imaginary(
    field: SpinorField, cfg: StepperConfig, detuning: float, params: ModelParams,
) -> tuple[SpinorField, float]:
    """One imaginary-time step at fixed detuning; renormalizes to unit norm.

    Returns the renormalized field and the pre-normalization norm (a
    chemical-potential diagnostic for the caller).
    """
    if cfg.mode != "imaginary":
        raise ValueError("step_imaginary requires mode='imaginary'")
    dt = cfg.dt
    factors = _kinetic_factors(params, dt, "imaginary")
    out = _apply_kinetic_half(field, factors)
    out = _onsite_step(out, float(detuning), dt, cfg, params, _onsite_exp_imag)
    out = _apply_kinetic_half(out, factors)
    if not out.is_finite():
        raise FieldNotFiniteError(None)
    pre_norm = out.norm()
    if pre_norm < 1e-300:
        raise NormUnderflowError(
            f"pre-normalization norm underflowed ({pre_norm!r}); "
            "reduce dt or check the detuning scale"
        )
    scale = 1.0 / np.sqrt(pre_norm)
    return SpinorField(out.psi_x * scale, out.psi_y * scale), pre_norm


def _rhs(field: SpinorField, t: float, detuning: DetuningLike,
         params: ModelParams) -> SpinorField:
    h = hamiltonian_apply(field, _detuning_at(detuning, t), params)
    return SpinorField(-1j * h.psi_x, -1j * h.psi_y)


def step_rk4(
    field: SpinorField, t: float, dt: float, detuning: DetuningLike,
    params: ModelParams,
) -> SpinorField:
    """Classical fourth-order step on the unsplit equations of motion.

    Verification oracle only: no norm projection, not used in sweeps.
    """
    k1 = _rhs(field, t, detuning, params)
    mid = SpinorField(field.psi_x + 0.5 * dt * k1.psi_x,
                      field.psi_y + 0.5 * dt * k1.psi_y)
    k2 = _rhs(mid, t + 0.5 * dt, detuning, params)
    mid = SpinorField(field.psi_x + 0.5 * dt * k2.psi_x,
                      field.psi_y + 0.5 * dt * k2.psi_y)
    k3 = _rhs(mid, t + 0.5 * dt, detuning, params)
    end = SpinorField(field.psi_x + dt * k3.psi_x, field.psi_y + dt * k3.psi_y)
    k4 = _rhs(end, t + dt, detuning, params)
    sixth = dt / 6.0
    px = field.psi_x + sixth * (k1.psi_x + 2 * k2.psi_x + 2 * k3.psi_x + k4.psi_x)
    py = field.psi_y + sixth * (k1.psi_y + 2 * k2.psi_y + 2 * k3.psi_y + k4.psi_y)
    out = SpinorField(px, py)
    if not out.is_finite():
        raise FieldNotFiniteError(None)
    return out


@dataclass(frozen=True)
class SegmentPlan:
    """Integer-step layout of hold_pre / sweep / hold_post segments."""

    t0: float
    dt: float
    n_pre: int
    n_sweep: int
    n_post: int

    @property
    def n_total(self) -> int:
        return self.n_pre + self.n_sweep + self.n_post

    @property
    def boundaries(self) -> tuple[int, ...]:
        return (self.n_pre, self.n_pre + self.n_sweep, self.n_total)

    def time_at(self, step: int) -> float:
        """Clock time after `step` steps; exact function of the integer index."""
        return self.t0 + step * self.dt


def plan_segments(schedule: SweepSchedule, dt: float) -> SegmentPlan:
    """Divide the schedule into whole steps of size dt per segment."""
    def count(duration: float, label: str) -> int:
        n = int(round(duration / dt))
        if abs(n * dt - duration) > 1e-9 * max(1.0, abs(duration)):
            import warnings

            warnings.warn(
                f"{label} duration {duration} is not a multiple of dt={dt}; "
                f"using {n} steps ({n * dt})",
                stacklevel=3,
            )
        return max(n, 0)

    return SegmentPlan(
        t0=schedule.t_i - schedule.hold_pre,
        dt=dt,
        n_pre=count(schedule.hold_pre, "hold_pre"),
        n_sweep=count(schedule.t_f - schedule.t_i, "sweep"),
        n_post=count(schedule.hold_post, "hold_post"),
    )


@dataclass
class Observer:
    """Read-only callback invoked every `stride` steps and at segment edges."""

    stride: int
    fn: Callable[[int, float, SpinorField], None]

    def __call__(self, step: int, t: float, field: SpinorField) -> None:
        self.fn(step, t, field)


def evolve(
    field: SpinorField,
    schedule: SweepSchedule,
    cfg: StepperConfig,
    params: ModelParams,
    observers: Sequence = (),
    recorder=None,
    start_step: int = 0,
):
    """Run hold_pre, the sweep and hold_post, notifying observers.

    Observers see (step, time, field) read-only at their stride and at every
    segment boundary; observation never alters the evolution.  ``recorder``
    is an ordinary observer whose accumulated series is returned alongside
    the final field.  ``start_step`` resumes mid-run from a checkpointed
    field (times are recomputed from the integer index, so a resumed run
    retraces the original bit for bit).
    """
    if cfg.mode != "real":
        raise ValueError("evolve runs in real time; use mode='real'")
    plan = plan_segments(schedule, cfg.dt)
    if not 0 <= start_step <= plan.n_total:
        raise ValueError(f"start_step {start_step} outside [0, {plan.n_total}]")

    all_observers = ([recorder] if recorder is not None else []) + list(observers)
    boundaries = set(plan.boundaries)

    def notify(step: int, current: SpinorField, initial: bool = False) -> None:
        t_now = plan.time_at(step)
        for obs in all_observers:
            stride = max(getattr(obs, "stride", 1), 1)
            if initial or step % stride == 0 or step in boundaries:
                obs(step, t_now, current)

    if start_step == 0:
        notify(0, field, initial=True)
    for k in range(start_step, plan.n_total):
        field = step_split(field, plan.time_at(k), cfg, schedule.detuning,
                           params, step_index=k)
        notify(k + 1, field)

    series = recorder.series if recorder is not None else None
    return field, series
