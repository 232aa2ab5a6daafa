"""Numerical laboratory for corotational wave maps R^{3+1} -> S^3.

Subpackages cover the self-similar profile family and its stability spectra,
static harmonic maps, Cauchy evolution in physical and similarity
coordinates, and the dispersion/collapse threshold machinery.
"""

__version__ = "0.1.0"

from .grid import (
    EnergyReport,
    FieldState,
    ProfileTable,
    RadialGrid,
    classify_degree,
    energy,
    interpolate,
    make_uniform_grid,
)
from .selfsim import (
    SelfSimilarProfile,
    ShootConfig,
    extend_exterior,
    find_profile,
    integrate_from_lightcone,
    integrate_from_origin,
)
from .spectrum import (
    ModeProfile,
    SpectrumReport,
    build_mode,
    extend_mode,
    find_eigenvalues,
    gauge_mode_check,
    mode_shoot_lightcone,
    mode_shoot_origin,
)
from .statics import (
    BoundStateReport,
    NeumannFamily,
    StaticProfile,
    bound_states,
    integrate_pendulum,
    neumann_family,
    neumann_points,
    rescale_static,
    zero_mode_residual,
)
from .cauchy import (
    BlowupReport,
    EvolutionConfig,
    InitialDataSpec,
    estimate_blowup_time,
    evolve,
    make_initial_data,
    refine,
    rescaled_profile,
    turok_spergel_state,
)
from .similarity import (
    SimilarityConfig,
    SimilarityState,
    evolve_similarity,
    fit_gauge_amplitude,
    gauge_tune,
    profile_distance,
    to_similarity,
)
from .criticality import (
    BisectionRecord,
    FamilySpec,
    KReport,
    Outcome,
    TransientFit,
    UniversalityReport,
    attractor_distance,
    bisect,
    classify_run,
    lyapunov_K,
    marginal_pair,
    monitor_K,
    transient_analysis,
    universality_check,
)

__all__ = [
    "EnergyReport",
    "FieldState",
    "ProfileTable",
    "RadialGrid",
    "classify_degree",
    "energy",
    "interpolate",
    "make_uniform_grid",
    "SelfSimilarProfile",
    "ShootConfig",
    "extend_exterior",
    "find_profile",
    "integrate_from_lightcone",
    "integrate_from_origin",
    "ModeProfile",
    "SpectrumReport",
    "build_mode",
    "extend_mode",
    "find_eigenvalues",
    "gauge_mode_check",
    "mode_shoot_lightcone",
    "mode_shoot_origin",
    "BoundStateReport",
    "NeumannFamily",
    "StaticProfile",
    "bound_states",
    "integrate_pendulum",
    "neumann_family",
    "neumann_points",
    "rescale_static",
    "zero_mode_residual",
    "BlowupReport",
    "EvolutionConfig",
    "InitialDataSpec",
    "estimate_blowup_time",
    "evolve",
    "make_initial_data",
    "refine",
    "rescaled_profile",
    "turok_spergel_state",
    "SimilarityConfig",
    "SimilarityState",
    "evolve_similarity",
    "fit_gauge_amplitude",
    "gauge_tune",
    "profile_distance",
    "to_similarity",
    "BisectionRecord",
    "FamilySpec",
    "KReport",
    "Outcome",
    "TransientFit",
    "UniversalityReport",
    "attractor_distance",
    "bisect",
    "classify_run",
    "lyapunov_K",
    "marginal_pair",
    "monitor_K",
    "transient_analysis",
    "universality_check",
    "__version__",
]
