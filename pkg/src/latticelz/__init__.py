"""Mean-field lattice Landau-Zener simulator for two-orbital trapped bosons.

Batch tooling for a square optical lattice whose sites each host two
orbital states: imaginary-time ground states, linear detuning sweeps
through the coupled discrete Gross-Pitaevskii equations, and the
observables separating internal (orbital transfer) from external
(cloud vibration) excitations.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    BlochField,
    ModelParams,
    SiteIndex,
    SpinorField,
    SweepSchedule,
    dispersion,
    energy_functional,
    onsite_matrix,
    total_density,
    trap_potential,
)
from .propagate import (  # noqa: E402
    Observer,
    StepperConfig,
    evolve,
    step_imaginary,
    step_rk4,
    step_split,
)
from .groundstate import GroundConfig, GroundResult, find_ground, ground_scan  # noqa: E402
from .observables import (  # noqa: E402
    ObservableSeries,
    SpectrumResult,
    bloch_field,
    imbalance,
    intrinsic_excitation,
    spectrum,
    squeeze_variance,
    squeezing,
    widths,
)
from .sweep import (  # noqa: E402
    RunResult,
    SweepRunConfig,
    run_sweep,
    seed_initial,
    velocity_scan,
)
from .twolevel import (  # noqa: E402
    TwoLevelConfig,
    lz_analytic,
    lz_integrate,
    single_site_nonlinear,
)

__all__ = [
    "BlochField",
    "GroundConfig",
    "GroundResult",
    "ModelParams",
    "ObservableSeries",
    "Observer",
    "RunResult",
    "SiteIndex",
    "SpectrumResult",
    "SpinorField",
    "StepperConfig",
    "SweepRunConfig",
    "SweepSchedule",
    "TwoLevelConfig",
    "__version__",
    "bloch_field",
    "dispersion",
    "energy_functional",
    "evolve",
    "find_ground",
    "ground_scan",
    "imbalance",
    "intrinsic_excitation",
    "lz_analytic",
    "lz_integrate",
    "onsite_matrix",
    "run_sweep",
    "seed_initial",
    "single_site_nonlinear",
    "spectrum",
    "squeeze_variance",
    "squeezing",
    "step_imaginary",
    "step_rk4",
    "step_split",
    "total_density",
    "trap_potential",
    "velocity_scan",
    "widths",
]
