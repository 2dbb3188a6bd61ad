"""Measurements: imbalance, widths, squeezing, Bloch fields, spectra.

All functions here are read-only over fields and series and are safe to
call concurrently.  Orbital populations are squared amplitudes; the cloud
geometry is probed through second moments of the discrete position operator
(site positions are pi times the integer index).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    BlochField,
    ModelParams,
    SpinorField,
    energy_functional,
    site_positions,
    total_density,
)

__all__ = [
    "ChannelRecorder",
    "DegenerateWidthError",
    "EmptyOrbitalError",
    "InsufficientSamplesError",
    "NonUniformSamplingError",
    "ObservableSeries",
    "SpectrumResult",
    "bloch_field",
    "imbalance",
    "intrinsic_excitation",
    "measure_channels",
    "spectrum",
    "squeeze_variance",
    "squeezing",
    "widths",
]

STANDARD_CHANNELS = (
    "z_tot", "energy", "x2_x", "y2_x", "x2_y", "y2_y", "f_y", "q_x2", "q_y2",
)


class EmptyOrbitalError(ValueError):
    """Asked for the geometry of an orbital that carries no population."""


class DegenerateWidthError(ValueError):
    """Squeezing ratio undefined: the reference width vanishes."""


class NonUniformSamplingError(ValueError):
    """Spectrum input must be uniformly sampled."""


class InsufficientSamplesError(ValueError):
    """Too few samples in the requested variance window."""


class ObservableSeries:
    """Time-stamped scalar records with named channels.

    Times are strictly increasing; every channel has one value per time.
    """

    def __init__(self, channels: Sequence[str]):
        self._names = tuple(channels)
        self._times: list[float] = []
        self._values: dict[str, list[float]] = {name: [] for name in self._names}

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self._names

    def __len__(self) -> int:
        return len(self._times)

    def append(self, t: float, **values: float) -> None:
        if self._times and t <= self._times[-1]:
            raise ValueError(
                f"times must be strictly increasing, got {t} after {self._times[-1]}"
            )
        missing = set(self._names) - set(values)
        extra = set(values) - set(self._names)
        if missing or extra:
            raise ValueError(
                f"channel mismatch: missing {sorted(missing)}, unknown {sorted(extra)}"
            )
        self._times.append(float(t))
        for name in self._names:
            self._values[name].append(float(values[name]))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times, dtype=np.float64)

    def channel(self, name: str) -> np.ndarray:
        if name not in self._values:
            raise KeyError(f"no channel {name!r}; have {self._names}")
        return np.asarray(self._values[name], dtype=np.float64)

    @classmethod
    def from_arrays(cls, times, channels: dict) -> "ObservableSeries":
        series = cls(tuple(channels))
        for i, t in enumerate(times):
            series.append(float(t), **{k: channels[k][i] for k in channels})
        return series


@dataclass(frozen=True)
class SpectrumResult:
    """Frequency grid and complex spectral amplitudes of the cloud widths."""

    nu: np.ndarray
    s_x: np.ndarray
    s_y: np.ndarray
    window_start: float
    window_length: float
    taper: str
    detrended: bool


def imbalance(field: SpinorField) -> tuple[float, np.ndarray]:
    """Total and per-site orbital population imbalance.

    Z_j = |psi_x|^2 - |psi_y|^2; the total is bounded by the norm.
    """
    z_grid = np.abs(field.psi_x) ** 2 - np.abs(field.psi_y) ** 2
    return float(z_grid.sum()), z_grid


def intrinsic_excitation(z_tot: float) -> float:
    """Excited-orbital fraction (1 - z)/2 for an imbalance z in [-1, 1]."""
    if not -1.0 - 1e-12 <= z_tot <= 1.0 + 1e-12:
        raise ValueError(f"imbalance must lie in [-1, 1], got {z_tot}")
    return min(max((1.0 - z_tot) / 2.0, 0.0), 1.0)


def _moments(weights: np.ndarray) -> tuple[float, float, float, float]:
    """(mean_x, mean_y, var_x, var_y) of a nonnegative weight grid."""
    total = weights.sum()
    x = site_positions(weights.shape[0])[:, None]
    y = site_positions(weights.shape[1])[None, :]
    mx = float((weights * x).sum() / total)
    my = float((weights * y).sum() / total)
    vx = float((weights * (x - mx) ** 2).sum() / total)
    vy = float((weights * (y - my) ** 2).sum() / total)
    return mx, my, vx, vy


def widths(field: SpinorField, orbital: str) -> tuple[float, float]:
    """Position variances (delta_x^2, delta_y^2) of one orbital's density."""
    if orbital == "x":
        w = np.abs(field.psi_x) ** 2
    elif orbital == "y":
        w = np.abs(field.psi_y) ** 2
    else:
        raise ValueError(f"orbital must be 'x' or 'y', got {orbital!r}")
    if w.sum() <= 1e-12:
        raise EmptyOrbitalError(f"orbital {orbital!r} is unpopulated")
    _, _, vx, vy = _moments(w)
    return vx, vy


def squeezing(field: SpinorField) -> float:
    """Elongation ratio F_y = var_y / var_x of the y-orbital cloud.

    F_y < 1 means the cloud is squeezed along y, F_y > 1 along x.
    """
    vx, vy = widths(field, "y")
    if vx <= 0.0:
        raise DegenerateWidthError("x-width of the y-orbital cloud vanishes")
    return vy / vx


def squeeze_variance(
    series: ObservableSeries, window: float, channel: str = "f_y",
    t_eval: float | None = None,
) -> float:
    """Variance of a channel over the trailing window ending at t_eval.

    Defaults to the last recorded time.  Requires at least 8 samples inside
    the window and a window contained in the recorded span.
    """
    times = series.times
    if len(times) == 0:
        raise InsufficientSamplesError("series is empty")
    if t_eval is None:
        t_eval = float(times[-1])
    t_start = t_eval - window
    if window <= 0:
        raise ValueError(f"window must be > 0, got {window}")
    if t_start < times[0] - 1e-9 or t_eval > times[-1] + 1e-9:
        raise ValueError(
            f"window [{t_start}, {t_eval}] outside recorded span "
            f"[{times[0]}, {times[-1]}]"
        )
    mask = (times >= t_start - 1e-12) & (times <= t_eval + 1e-12)
    values = series.channel(channel)[mask]
    if values.size < 8:
        raise InsufficientSamplesError(
            f"only {values.size} samples in window; need at least 8"
        )
    return float(np.var(values))


def bloch_field(field: SpinorField) -> BlochField:
    """Per-site Bloch vector; its length equals the site density exactly."""
    cross = np.conj(field.psi_x) * field.psi_y
    return BlochField(
        j_x=2.0 * cross.real,
        j_y=2.0 * cross.imag,
        j_z=np.abs(field.psi_x) ** 2 - np.abs(field.psi_y) ** 2,
    )


def spectrum(
    series: ObservableSeries,
    x2_channel: str = "q_x2",
    y2_channel: str = "q_y2",
    taper: str = "hann",
    detrend: bool = True,
    window_start: float | None = None,
) -> SpectrumResult:
    """Fourier spectrum S(nu) of the cloud's second moments over a hold.

    Transforms the <x^2> and <y^2> signals of the total density recorded
    from ``window_start`` onward.  Plain DFT with forward 1/N normalization
    against e^{+i nu t}; the frequency grid is nu_k = 2 pi k / (N dt).
    Real input gives Hermitian symmetry S(-nu) = S(nu)*.
    """
    if taper not in ("none", "hann"):
        raise ValueError(f"taper must be 'none' or 'hann', got {taper!r}")
    times = series.times
    if window_start is not None:
        mask = times >= window_start - 1e-12
        times = times[mask]
    else:
        mask = slice(None)
    if times.size < 2:
        raise ValueError("need at least two samples to form a spectrum")
    steps = np.diff(times)
    dt = float(steps.mean())
    if np.any(np.abs(steps - dt) > 1e-9 * max(abs(dt), 1e-30)):
        raise NonUniformSamplingError("spectrum input must be uniformly sampled")

    n = times.size
    win = np.hanning(n) if taper == "hann" else np.ones(n)

    def transform(name: str) -> np.ndarray:
        signal = series.channel(name)[mask].astype(np.float64)
        if detrend:
            signal = signal - signal.mean()
        # e^{+i nu t} convention: conjugate of numpy's forward transform
        return np.conj(np.fft.fft(signal * win)) / n

    nu = 2.0 * np.pi * np.fft.fftfreq(n, d=dt)
    return SpectrumResult(
        nu=nu,
        s_x=transform(x2_channel),
        s_y=transform(y2_channel),
        window_start=float(times[0]),
        window_length=float(times[-1] - times[0]),
        taper=taper,
        detrended=detrend,
    )


def measure_channels(
    field: SpinorField, detuning: float, params: ModelParams
) -> dict[str, float]:
    """Standard scalar channels recorded during evolutions.

    Per-orbital position variances are NaN for an unpopulated orbital; the
    q_* channels are raw second moments of the total density (the spectrum
    input).
    """
    z_tot, _ = imbalance(field)
    norm = field.norm()
    assert abs(z_tot) <= norm + 1e-12, "imbalance exceeded norm"
    out = {"z_tot": z_tot, "energy": energy_functional(field, detuning, params)}
    for orb in ("x", "y"):
        try:
            vx, vy = widths(field, orb)
        except EmptyOrbitalError:
            vx = vy = np.nan
        out[f"x2_{orb}"] = vx
        out[f"y2_{orb}"] = vy
    vx_y, vy_y = out["x2_y"], out["y2_y"]
    out["f_y"] = vy_y / vx_y if vx_y and np.isfinite(vx_y) and vx_y > 0 else np.nan

    q = total_density(field)
    qsum = q.sum()
    if qsum > 0:
        x = site_positions(q.shape[0])[:, None]
        y = site_positions(q.shape[1])[None, :]
        out["q_x2"] = float((q * x**2).sum() / qsum)
        out["q_y2"] = float((q * y**2).sum() / qsum)
    else:
        out["q_x2"] = out["q_y2"] = np.nan
    return out


class ChannelRecorder:
    """Observer that appends the standard channels to a series."""

    def __init__(self, stride: int, params: ModelParams, detuning) -> None:
        self.stride = max(int(stride), 1)
        self._params = params
        self._detuning = detuning
        self.series = ObservableSeries(STANDARD_CHANNELS)

    def __call__(self, step: int, t: float, field: SpinorField) -> None:
        if len(self.series) and t <= self.series.times[-1]:
            return  # boundary and stride coincided; already recorded
        d = self._detuning(t) if callable(self._detuning) else float(self._detuning)
        self.series.append(t, **measure_channels(field, d, self._params))
