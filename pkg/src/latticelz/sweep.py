"""Full sweep experiment: prepare, seed, ramp, hold, measure, package.

A run finds the ground state at the starting detuning (x-polarized for a
negative start), plants a small admixture in the empty y-orbital (the
conjugate coupling that drives the transfer vanishes identically on a state
with an exactly empty orbital), ramps the detuning linearly, and holds it
constant afterwards while the cloud rings down.

The intrinsic-excitation number reported for a run is the fraction of atoms
left behind in the initially occupied orbital at the end of the ramp: with
the imbalance z = n_x - n_y and an x-polarized start this is (1 + z)/2, so
a sudden sweep scores ~1 and a perfect transfer scores 0.  External
excitations are tracked through the time variance of the squeezing ratio
over a trailing window of the hold.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .groundstate import GroundConfig, GroundReport, find_ground
from .model import (
    ModelParams,
    SpinorField,
    SweepSchedule,
    edge_density_ratio,
    total_density,
)
from .observables import (
    ChannelRecorder,
    InsufficientSamplesError,
    ObservableSeries,
    imbalance,
    intrinsic_excitation,
    squeeze_variance,
)
from .propagate import Observer, StepperConfig, evolve, plan_segments

__all__ = [
    "RunResult",
    "ScanRow",
    "SeedingWarning",
    "SweepRunConfig",
    "fit_polynomial",
    "run_sweep",
    "schedule_for_velocity",
    "seed_initial",
    "velocity_scan",
]

EDGE_GUARD_RATIO = 1e-8
SQUEEZE_WINDOW_CAP = 2000.0


class SeedingWarning(UserWarning):
    """Seeding applied to a state that is not x-dominant."""


@dataclass(frozen=True)
class SweepRunConfig:
    """Everything one sweep run needs, fully explicit for reproducibility."""

    params: ModelParams
    schedule: SweepSchedule
    seed_fraction: float = 0.01
    seed_phase: str = "aligned"
    stride: int = 20
    checkpoint_every: int = 0
    out_dir: Path | None = None
    ground: GroundConfig | None = None
    nonlinearity_update: str = "midpoint"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.seed_fraction < 1.0:
            raise ValueError(
                f"seed fraction must be in [0, 1), got {self.seed_fraction}"
            )
        if self.seed_phase not in ("aligned", "random"):
            raise ValueError(f"seed_phase must be 'aligned' or 'random', "
                             f"got {self.seed_phase!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def ground_config(self) -> GroundConfig:
        if self.ground is not None:
            return self.ground
        return GroundConfig(detuning=self.schedule.detuning(self.schedule.t_i),
                            rng_seed=self.rng_seed)


@dataclass
class RunResult:
    """Final state plus everything measured along the way."""

    final_field: SpinorField
    series: ObservableSeries
    snapshots: dict
    z_sweep_end: float
    p_iex: float
    delta_f_y: float
    ground_report: GroundReport | None
    warnings: list = dc_field(default_factory=list)


def seed_initial(
    ground: SpinorField, fraction: float, phase_rule: str = "aligned",
    rng: np.random.Generator | None = None,
) -> SpinorField:
    """Plant |psi_y|^2 = fraction * |psi_x|^2 sitewise, then renormalize.

    The whole field is rescaled back to unit norm, which keeps the sitewise
    population ratio exactly ``fraction`` and gives a total imbalance of
    (1 - f)/(1 + f) for a pure-x input regardless of its shape.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"seed fraction must be in [0, 1), got {fraction}")
    if fraction == 0.0:
        return ground.copy()
    z_tot, _ = imbalance(ground)
    if z_tot <= 0.9 * ground.norm():
        warnings.warn(
            f"seeding a state with imbalance {z_tot:.3f}; expected an "
            "x-dominant ground state",
            SeedingWarning,
            stacklevel=2,
        )
    root = math.sqrt(fraction)
    if phase_rule == "aligned":
        psi_y = root * ground.psi_x
    elif phase_rule == "random":
        if rng is None:
            rng = np.random.default_rng(0)
        phases = np.exp(2j * np.pi * rng.random(ground.shape))
        psi_y = root * np.abs(ground.psi_x) * phases
    else:
        raise ValueError(f"unknown phase rule {phase_rule!r}")
    seeded = SpinorField(ground.psi_x.copy(), psi_y)
    return seeded.normalized()


def _squeeze_window(hold_post: float) -> float:
    return min(SQUEEZE_WINDOW_CAP, 0.25 * hold_post)


def run_sweep(
    cfg: SweepRunConfig,
    ground_field: SpinorField | None = None,
    resume_from=None,
) -> RunResult:
    """Execute ground-state preparation, seeding, ramp and hold.

    ``ground_field`` short-circuits the (slow) preparation when a suitable
    converged state is already at hand, e.g. across a velocity scan where
    every run starts from the same endpoint detuning.  ``resume_from`` is a
    checkpoint loaded by the caller (see latticelz.io); the continued run
    retraces an uninterrupted one bit for bit because times derive from the
    integer step index.
    """
    params, schedule = cfg.params, cfg.schedule
    stepper = StepperConfig(dt=schedule.dt, mode="real",
                            nonlinearity_update=cfg.nonlinearity_update)
    plan = plan_segments(schedule, schedule.dt)
    run_warnings: list[str] = []
    ground_report = None

    if resume_from is not None:
        field = resume_from.field
        start_step = resume_from.step
        recorder = ChannelRecorder(cfg.stride, params, schedule.detuning)
        recorder.series = resume_from.series
    else:
        start_step = 0
        if ground_field is None:
            ground = find_ground(cfg.ground_config(), params)
            ground_report = ground.report
            run_warnings.extend(ground.report.warnings)
            ground_field = ground.field
        rng = np.random.default_rng(cfg.rng_seed)
        field = seed_initial(ground_field, cfg.seed_fraction, cfg.seed_phase, rng)
        recorder = ChannelRecorder(cfg.stride, params, schedule.detuning)

    snapshots: dict[str, SpinorField] = {}
    if resume_from is None:
        snapshots["seeded"] = field.copy()

    sweep_end_step = plan.n_pre + plan.n_sweep

    def capture(step: int, t: float, current: SpinorField) -> None:
        if step == sweep_end_step:
            snapshots["sweep_end"] = current.copy()

    guard_stride = cfg.checkpoint_every if cfg.checkpoint_every else max(
        plan.n_total // 8, 1)

    def guard(step: int, t: float, current: SpinorField) -> None:
        ratio = edge_density_ratio(current)
        if ratio > EDGE_GUARD_RATIO:
            run_warnings.append(
                f"edge density {ratio:.2e} of peak at t={t:.6g} exceeds "
                f"{EDGE_GUARD_RATIO:.0e}; periodic boundaries suspect"
            )

    observers = [
        Observer(stride=max(plan.n_total, 1), fn=capture),  # boundaries only
        Observer(stride=guard_stride, fn=guard),
    ]
    if cfg.checkpoint_every and cfg.out_dir is not None:
        from . import io as _io

        def checkpoint(step: int, t: float, current: SpinorField) -> None:
            if step == 0 or step == plan.n_total:
                return
            _io.write_checkpoint(
                Path(cfg.out_dir) / "checkpoints" / f"step_{step:08d}",
                current, step, cfg, recorder.series,
            )

        observers.append(Observer(stride=cfg.checkpoint_every, fn=checkpoint))

    final_field, series = evolve(
        field, schedule, stepper, params,
        observers=observers, recorder=recorder, start_step=start_step,
    )
    snapshots["final"] = final_field.copy()

    times = series.times
    t_sweep_end = plan.time_at(sweep_end_step)
    idx = int(np.argmin(np.abs(times - t_sweep_end)))
    if abs(times[idx] - t_sweep_end) > 0.5 * schedule.dt + 1e-9:
        run_warnings.append(
            f"no sample exactly at the ramp end; using t={times[idx]:.6g}"
        )
    z_sweep_end = float(series.channel("z_tot")[idx])
    # transfer-frame imbalance: fraction left in the initial (x) orbital
    p_iex = intrinsic_excitation(-z_sweep_end)

    delta_f_y = float("nan")
    if schedule.hold_post > 0:
        window = _squeeze_window(schedule.hold_post)
        slowest = 2.0 * np.pi / window
        run_warnings.append(
            f"delta_f_y window {window:.6g}: modes slower than "
            f"nu~{slowest:.2e} are under-resolved"
        )
        try:
            delta_f_y = squeeze_variance(series, window)
        except (InsufficientSamplesError, ValueError) as exc:
            run_warnings.append(f"delta_f_y unavailable: {exc}")
    else:
        run_warnings.append("delta_f_y unavailable: schedule has no hold_post")

    return RunResult(
        final_field=final_field,
        series=series,
        snapshots=snapshots,
        z_sweep_end=z_sweep_end,
        p_iex=p_iex,
        delta_f_y=delta_f_y,
        ground_report=ground_report,
        warnings=run_warnings,
    )


def schedule_for_velocity(
    lam: float, edge_detuning: float = 1e-3, dt: float = 0.2,
    hold_pre: float = 0.0, hold_post: float = 4000.0,
) -> SweepSchedule:
    """Ramp between detunings -+edge_detuning at velocity lam.

    The endpoints +-edge_detuning/lam put the run in the decoupled regime on
    both sides of the crossing; dt is nudged so every segment is a whole
    number of steps.
    """
    if lam <= 0:
        raise ValueError(f"sweep velocity must be > 0, got {lam}")
    span = 2.0 * edge_detuning / lam
    n = max(int(round(span / dt)), 2)
    dt_eff = span / n
    hold_post = round(hold_post / dt_eff) * dt_eff
    hold_pre = round(hold_pre / dt_eff) * dt_eff
    return SweepSchedule(lam=lam, t_i=-0.5 * span, t_f=0.5 * span, dt=dt_eff,
                         hold_pre=hold_pre, hold_post=hold_post)


@dataclass
class ScanRow:
    lam: float
    p_iex: float
    delta_f_y: float
    z_sweep_end: float
    f_y_final: float
    error: str | None = None


def _scan_one(args) -> ScanRow:
    cfg, ground_field = args
    try:
        result = run_sweep(cfg, ground_field=ground_field)
        f_y = result.series.channel("f_y")
        return ScanRow(
            lam=cfg.schedule.lam,
            p_iex=result.p_iex,
            delta_f_y=result.delta_f_y,
            z_sweep_end=result.z_sweep_end,
            f_y_final=float(f_y[-1]),
        )
    except Exception as exc:  # record, keep scanning
        return ScanRow(cfg.schedule.lam, float("nan"), float("nan"),
                       float("nan"), float("nan"), error=str(exc))


def velocity_scan(
    base: SweepRunConfig,
    lambdas,
    edge_detuning: float = 1e-3,
    share_ground: bool = True,
    threads: int = 1,
) -> list[ScanRow]:
    """Independent sweep runs over a list of velocities, sorted ascending.

    The starting detuning is the same for every velocity, so the (slow)
    ground-state preparation runs once and seeds every run.  Failures are
    recorded per row and do not stop the scan.
    """
    lambdas = sorted(float(l) for l in lambdas)
    if any(l <= 0 for l in lambdas):
        raise ValueError("all sweep velocities must be > 0")

    ground_field = None
    if share_ground:
        probe = replace(base, schedule=schedule_for_velocity(
            lambdas[0], edge_detuning, base.schedule.dt,
            base.schedule.hold_pre, base.schedule.hold_post))
        ground_field = find_ground(probe.ground_config(), base.params).field

    jobs = []
    for lam in lambdas:
        schedule = schedule_for_velocity(lam, edge_detuning, base.schedule.dt,
                                         base.schedule.hold_pre,
                                         base.schedule.hold_post)
        jobs.append((replace(base, schedule=schedule, out_dir=None,
                             checkpoint_every=0), ground_field))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_scan_one, jobs))
    else:
        rows = [_scan_one(job) for job in jobs]
    return rows


def fit_polynomial(x, y, degree: int = 5):
    """Least-squares polynomial fit; returns (coefficients, residuals).

    Coefficients are in the plain power basis, low order first; residuals
    are y - fit(x) per point.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < degree + 1:
        raise ValueError(
            f"need at least {degree + 1} points for a degree-{degree} fit, "
            f"got {x.size}"
        )
    poly = np.polynomial.Polynomial.fit(x, y, degree)
    coeffs = poly.convert().coef
    residuals = y - poly(x)
    return coeffs, residuals
