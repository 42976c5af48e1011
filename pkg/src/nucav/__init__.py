"""Thin-film x-ray cavity design toolkit: stacks to level schemes to spectra."""

from .materials import Material, VACUUM, builtin_materials, load_materials
from .stratified import (
    CavityStack,
    IncidenceGeometry,
    Layer,
    SolverError,
    field_at_depth,
    greens_function,
    parratt_coefficients,
    rocking_curve,
    semiclassical_reflectance,
    solve,
)
from .ensemble import (
    FE57,
    LevelScheme,
    NuclearSpecies,
    ResonantLayerSet,
    derive_level_scheme,
)
from .spectra import (
    FrequencyGrid,
    eigen_decompose,
    reflectance,
    susceptibility,
    transmittance,
)

__version__ = "0.1.0"
