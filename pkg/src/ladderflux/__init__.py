"""Two-leg fermionic ladder with a drive-engineered gauge potential.

Band structure, open-ladder eigenstates, chiral currents and vortex counting,
two-tone drive engineering, and dissipative generation/measurement protocols
for the single-excitation sector of a superconducting-qubit ladder.
"""

__version__ = "0.1.0"

from .model import ConfigError, LadderConfig, Leg, SiteId, Units, build_open_ladder, site_index, validate_config
from .bands import BandParams, CharacteristicRoots, band_energy, characteristic_roots, critical_coupling, decay_bound_lambda, minima_count
from .eigensolve import EigenSystem, ModeExpansion, QuasimomentumMap, diagonalize, fit_mode_expansion, quasimomentum_map
from .currents import CurrentField, PhaseDiagram, chiral_current, count_vortices, link_currents, phase_diagram
from .floquet import DriveSpec, LevelScheme, bessel_j, renormalized_couplings, stark_and_modulation, validate_effective_model
from .dynamics import (
    DissipationSpec,
    MeasurementPair,
    extract_current,
    fidelity_exact,
    fidelity_strong_coupling,
    generation_plan,
    simulate_measurement,
)

__all__ = [
    "BandParams",
    "CharacteristicRoots",
    "ConfigError",
    "CurrentField",
    "DissipationSpec",
    "DriveSpec",
    "EigenSystem",
    "LadderConfig",
    "Leg",
    "LevelScheme",
    "MeasurementPair",
    "ModeExpansion",
    "PhaseDiagram",
    "QuasimomentumMap",
    "SiteId",
    "Units",
    "band_energy",
    "bessel_j",
    "build_open_ladder",
    "characteristic_roots",
    "chiral_current",
    "count_vortices",
    "critical_coupling",
    "decay_bound_lambda",
    "diagonalize",
    "extract_current",
    "fidelity_exact",
    "fidelity_strong_coupling",
    "fit_mode_expansion",
    "generation_plan",
    "link_currents",
    "minima_count",
    "phase_diagram",
    "quasimomentum_map",
    "renormalized_couplings",
    "simulate_measurement",
    "site_index",
    "stark_and_modulation",
    "validate_config",
    "validate_effective_model",
]
