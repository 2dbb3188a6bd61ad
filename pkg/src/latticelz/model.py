"""Two-orbital lattice model: parameters, fields, Hamiltonian terms, energy.

The model lives on an ``nx x ny`` square lattice with spacing ``pi`` in
recoil units.  Each site carries two complex amplitudes (one per orbital,
labelled ``x`` and ``y``).  An orbital hops with amplitude ``t1`` along its
own label direction and ``t2`` transverse to it, sits in an isotropic
harmonic trap of frequency ``omega``, and interacts on site with strength
``u``.  A detuning ``d`` raises the x-orbital onsite energy by ``+d`` and
lowers the y-orbital by ``-d``; the linear ramp ``d(t)`` lives in
:class:`SweepSchedule`, everything here takes ``d`` as a plain number.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BlochField",
    "BoundaryModeError",
    "ModelParams",
    "PhysicalRegimeWarning",
    "SiteIndex",
    "SpinorField",
    "SweepSchedule",
    "dispersion",
    "dispersion_grids",
    "edge_density_ratio",
    "energy_functional",
    "hamiltonian_apply",
    "onsite_matrix",
    "onsite_terms",
    "position_grids",
    "site_positions",
    "total_density",
    "trap_grid",
    "trap_potential",
]

LATTICE_SPACING = np.pi


class PhysicalRegimeWarning(UserWarning):
    """Parameters outside the regime the model is meant for."""


class BoundaryModeError(ValueError):
    """Requested a boundary convention the propagator does not support."""


@dataclass(frozen=True)
class ModelParams:
    """Tight-binding parameters, all in recoil units.

    t1: hopping along the orbital's node direction (conventionally negative).
    t2: hopping transverse to the node (conventionally positive, weaker).
    u: onsite same-orbital interaction strength (repulsive, >= 0).
    omega: harmonic trap frequency (>= 0).
    nx, ny: lattice dimensions in sites (powers of two recommended).
    """

    t1: float
    t2: float
    u: float
    omega: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.u < 0:
            raise ValueError(f"interaction must be repulsive (u >= 0), got {self.u}")
        if self.omega < 0:
            raise ValueError(f"trap frequency must be >= 0, got {self.omega}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"lattice must be at least 2x2, got {self.nx}x{self.ny}")
        if abs(self.t1) <= abs(self.t2):
            warnings.warn(
                f"expected |t1| > |t2| (node-direction hopping dominates), "
                f"got t1={self.t1}, t2={self.t2}",
                PhysicalRegimeWarning,
                stacklevel=2,
            )
        if self.t1 * self.t2 > 0:
            warnings.warn(
                f"expected opposite hopping signs (t1 < 0 < t2), "
                f"got t1={self.t1}, t2={self.t2}",
                PhysicalRegimeWarning,
                stacklevel=2,
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)


@dataclass(frozen=True)
class SiteIndex:
    """Integer site coordinates, centered so jx runs over [-nx/2, nx/2)."""

    jx: int
    jy: int

    @property
    def position(self) -> tuple[float, float]:
        """Site position (x, y) = (pi*jx, pi*jy)."""
        return (LATTICE_SPACING * self.jx, LATTICE_SPACING * self.jy)


@dataclass(frozen=True)
class SweepSchedule:
    """Linear detuning ramp d(t) = lam * clamp(t, t_i, t_f).

    The ramp runs over [t_i, t_f] and is held constant outside it, so the
    same schedule also describes the constant-detuning hold segments of
    duration ``hold_pre`` / ``hold_post`` attached before and after.
    """

    lam: float
    t_i: float
    t_f: float
    dt: float
    hold_pre: float = 0.0
    hold_post: float = 0.0

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError(f"sweep velocity must be > 0, got {self.lam}")
        if self.t_i >= self.t_f:
            raise ValueError(f"need t_i < t_f, got [{self.t_i}, {self.t_f}]")
        if self.dt <= 0:
            raise ValueError(f"step size must be > 0, got {self.dt}")
        if self.hold_pre < 0 or self.hold_post < 0:
            raise ValueError("hold durations must be >= 0")
        if not (self.t_i < 0 < self.t_f):
            warnings.warn(
                f"sweep interval [{self.t_i}, {self.t_f}] does not bracket the "
                "crossing at t=0",
                PhysicalRegimeWarning,
                stacklevel=2,
            )

    def detuning(self, t: float) -> float:
        """Detuning at time t; the x-orbital onsite energy is +detuning."""
        return self.lam * min(max(t, self.t_i), self.t_f)


class SpinorField:
    """Two complex grids (psi_x, psi_y), the mean-field order parameter.

    The total norm sum(|psi_x|^2 + |psi_y|^2) is the particle fraction;
    initialized states carry norm 1.
    """

    __slots__ = ("psi_x", "psi_y")

    def __init__(self, psi_x: np.ndarray, psi_y: np.ndarray):
        psi_x = np.asarray(psi_x, dtype=np.complex128)
        psi_y = np.asarray(psi_y, dtype=np.complex128)
        if psi_x.ndim != 2 or psi_x.shape != psi_y.shape:
            raise ValueError(
                f"components must be 2-d grids of equal shape, got "
                f"{psi_x.shape} and {psi_y.shape}"
            )
        self.psi_x = psi_x
        self.psi_y = psi_y

    @classmethod
    def zeros(cls, nx: int, ny: int) -> "SpinorField":
        return cls(np.zeros((nx, ny), dtype=np.complex128),
                   np.zeros((nx, ny), dtype=np.complex128))

    @property
    def shape(self) -> tuple[int, int]:
        return self.psi_x.shape

    def copy(self) -> "SpinorField":
        return SpinorField(self.psi_x.copy(), self.psi_y.copy())

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi_x) ** 2)
                     + np.sum(np.abs(self.psi_y) ** 2))

    def normalized(self) -> "SpinorField":
        n = self.norm()
        if n <= 0:
            raise ValueError("cannot normalize a zero field")
        scale = 1.0 / np.sqrt(n)
        return SpinorField(self.psi_x * scale, self.psi_y * scale)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.psi_x).all() and np.isfinite(self.psi_y).all())

    def overlap(self, other: "SpinorField") -> complex:
        """<self|other>, summed over sites and orbitals."""
        return complex(np.vdot(self.psi_x, other.psi_x)
                       + np.vdot(self.psi_y, other.psi_y))

    def __getstate__(self):
        return (self.psi_x, self.psi_y)

    def __setstate__(self, state):
        self.psi_x, self.psi_y = state


@dataclass(frozen=True)
class BlochField:
    """Per-site Bloch vector (J_x, J_y, J_z) of the two-orbital spinor.

    J_x = 2 Re(psi_x* psi_y), J_y = 2 Im(psi_x* psi_y),
    J_z = |psi_x|^2 - |psi_y|^2; the length equals the site density Q_j.
    """

    j_x: np.ndarray
    j_y: np.ndarray
    j_z: np.ndarray


def site_positions(n: int) -> np.ndarray:
    """Centered site positions pi*j for j in [-n//2, n - n//2)."""
    return LATTICE_SPACING * (np.arange(n, dtype=np.float64) - n // 2)


def position_grids(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    """Broadcastable X (nx,1) and Y (1,ny) position grids."""
    return site_positions(nx)[:, None], site_positions(ny)[None, :]


@lru_cache(maxsize=32)
def _trap_grid_cached(omega: float, nx: int, ny: int) -> np.ndarray:
    x, y = position_grids(nx, ny)
    grid = 0.5 * omega**2 * (x**2 + y**2)
    grid.setflags(write=False)
    return grid


def trap_grid(params: ModelParams) -> np.ndarray:
    """Trap energy (omega^2/2)(x_j^2 + y_j^2) on the full grid."""
    return _trap_grid_cached(params.omega, params.nx, params.ny)


def trap_potential(site: SiteIndex, params: ModelParams) -> float:
    """Trap energy at one site; identical for both orbitals."""
    x, y = site.position
    return 0.5 * params.omega**2 * (x**2 + y**2)


def dispersion(k, orbital: str, params: ModelParams):
    """Hopping band energy at quasimomentum k = (k_x, k_y) in [-pi, pi)^2.

    eps_x(k) = -2 t1 cos(k_x) - 2 t2 cos(k_y) and eps_y is the same with
    the axes swapped, so eps_y(k_x, k_y) = eps_x(k_y, k_x) exactly.
    """
    kx, ky = k
    if orbital == "x":
        return -2.0 * params.t1 * np.cos(kx) - 2.0 * params.t2 * np.cos(ky)
    if orbital == "y":
        return -2.0 * params.t2 * np.cos(kx) - 2.0 * params.t1 * np.cos(ky)
    raise ValueError(f"orbital must be 'x' or 'y', got {orbital!r}")


def _dispersion_grids_raw(
    t1: float, t2: float, nx: int, ny: int
) -> tuple[np.ndarray, np.ndarray]:
    kx = 2.0 * np.pi * np.fft.fftfreq(nx)[:, None]
    ky = 2.0 * np.pi * np.fft.fftfreq(ny)[None, :]
    eps_x = -2.0 * t1 * np.cos(kx) - 2.0 * t2 * np.cos(ky)
    eps_y = -2.0 * t2 * np.cos(kx) - 2.0 * t1 * np.cos(ky)
    return eps_x, eps_y


def dispersion_grids(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Band energies of both orbitals on the FFT quasimomentum grid."""
    return _dispersion_grids_raw(params.t1, params.t2, params.nx, params.ny)


def total_density(field: SpinorField) -> np.ndarray:
    """Per-site density Q_j = |psi_x|^2 + |psi_y|^2."""
    return np.abs(field.psi_x) ** 2 + np.abs(field.psi_y) ** 2


def edge_density_ratio(field: SpinorField) -> float:
    """Max density on the boundary rows/columns relative to the peak.

    Periodic boundaries are only faithful while the cloud stays away from
    the edges; drivers flag states where this ratio exceeds 1e-8.
    """
    q = total_density(field)
    peak = float(q.max())
    if peak == 0.0:
        return 0.0
    edge = max(q[0, :].max(), q[-1, :].max(), q[:, 0].max(), q[:, -1].max())
    return float(edge) / peak


def onsite_terms(
    field: SpinorField, detuning: float, v_trap: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gridded entries (h11, h22, h12) of the frozen-nonlinearity onsite matrix.

    With the instantaneous densities frozen, the onsite part of the equations
    of motion is the Hermitian matrix

        [[v + d + u(|psi_x|^2 + (2/3)|psi_y|^2),  (2u/3) psi_x* psi_y      ],
         [(2u/3) psi_x psi_y*,                    v - d + u(|psi_y|^2 + (2/3)|psi_x|^2)]]

    whose off-diagonal, applied to (psi_x, psi_y), reproduces the conjugate
    orbital-changing couplings (2u/3) psi_y^2 psi_x* and (2u/3) psi_x^2 psi_y*.
    """
    ax2 = np.abs(field.psi_x) ** 2
    ay2 = np.abs(field.psi_y) ** 2
    u = params.u
    h11 = v_trap + detuning + u * (ax2 + (2.0 / 3.0) * ay2)
    h22 = v_trap - detuning + u * (ay2 + (2.0 / 3.0) * ax2)
    h12 = (2.0 * u / 3.0) * np.conj(field.psi_x) * field.psi_y
    return h11, h22, h12


def onsite_matrix(
    psi_x_j: complex, psi_y_j: complex, detuning: float, v_trap: float,
    params: ModelParams,
) -> np.ndarray:
    """2x2 Hermitian onsite matrix at a single site (see onsite_terms)."""
    site = SpinorField(np.array([[psi_x_j]]), np.array([[psi_y_j]]))
    h11, h22, h12 = onsite_terms(site, detuning, np.float64(v_trap), params)
    return np.array([[h11[0, 0], h12[0, 0]], [np.conj(h12[0, 0]), h22[0, 0]]])


def _hop(psi: np.ndarray, t_axis0: float, t_axis1: float) -> np.ndarray:
    """Nearest-neighbor hopping term under periodic boundaries."""
    out = -t_axis0 * (np.roll(psi, 1, axis=0) + np.roll(psi, -1, axis=0))
    out -= t_axis1 * (np.roll(psi, 1, axis=1) + np.roll(psi, -1, axis=1))
    return out


def hamiltonian_apply(
    field: SpinorField, detuning: float, params: ModelParams
) -> SpinorField:
    """Right-hand side of i d(psi)/dt, evaluated at the given detuning.

    This is the direct (unsplit) evaluation of the equations of motion,
    used by the RK4 oracle and the stationarity residual.
    """
    v = trap_grid(params)
    h11, h22, h12 = onsite_terms(field, detuning, v, params)
    out_x = _hop(field.psi_x, params.t1, params.t2)
    out_x += h11 * field.psi_x + h12 * field.psi_y
    out_y = _hop(field.psi_y, params.t2, params.t1)
    out_y += np.conj(h12) * field.psi_x + h22 * field.psi_y
    return SpinorField(out_x, out_y)


def energy_functional(
    field: SpinorField, detuning: float, params: ModelParams,
    boundary: str = "periodic",
) -> float:
    """Total mean-field energy of the state at the given detuning.

    Assembles hopping, trap/detuning, density-density and orbital-changing
    contributions; the hopping uses the same periodic convention as the
    propagator.  The assembled sum must be real to 1e-12 (Hermiticity); the
    tiny imaginary residue is checked and discarded.
    """
    if boundary != "periodic":
        raise BoundaryModeError(
            f"propagator supports only periodic boundaries, got {boundary!r}"
        )
    px, py = field.psi_x, field.psi_y
    v = trap_grid(params)
    u = params.u

    e = np.sum(np.conj(px) * _hop(px, params.t1, params.t2))
    e += np.sum(np.conj(py) * _hop(py, params.t2, params.t1))
    ax2 = np.abs(px) ** 2
    ay2 = np.abs(py) ** 2
    e += np.sum((v + detuning) * ax2 + (v - detuning) * ay2)
    e += 0.5 * u * np.sum(ax2**2 + ay2**2)
    e += (2.0 * u / 3.0) * np.sum(ax2 * ay2)
    cross = np.conj(px) * py
    e += (u / 3.0) * np.sum(cross**2 + np.conj(cross) ** 2)

    e = complex(e)
    if abs(e.imag) >= 1e-12:
        raise ValueError(
            f"energy functional acquired imaginary part {e.imag:.3e}; "
            "field is inconsistent"
        )
    return e.real
