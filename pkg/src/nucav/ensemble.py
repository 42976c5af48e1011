"""Artificial multi-level schemes of resonant nuclear layers in a cavity.

Each resonant layer hosts one collective excitation.  The cavity's Green's
function G sets the complex couplings between excitations l, m at depths
z_l, z_m,

    (matrix)_lm = sqrt(xi_l xi_m) G(z_l, z_m) / gamma0,

whose real part is the coherent coupling (the diagonal is minus the
collective Lamb shift) and whose imaginary part is half the (cross-)decay
enhancement (the diagonal gives half the superradiant rate).  The species
constant xi bundles the number density, dipole strength and field prefactors
per unit layer thickness; it is calibrated once for Fe-57 against published
two-layer reference values (see scripts/calibrate_species.py) and exposed in
the run configuration.

Reported (dimensionless) quantities follow the reference normalization:

* detunings, couplings and rates are in units of the bare linewidth gamma0;
* the Rabi vector equals the complex field enhancement at each layer;
* the outcoupling vectors are G(0, z_l) and G(D, z_l) scaled by
  dipole_phase^2 / (i zeta_l) with a real per-species constant zeta.  Only
  the square of the dipole phase is observable in these reports; spectra do
  not depend on it at all.  The default phase +i reproduces the published
  sign convention (a real dipole flips the sign of both vectors).

All operations accept complex grazing angles; the level scheme is then the
analytic continuation used by the pole analysis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .stratified import CavityStack, IncidenceGeometry, StackSolution, solve

__all__ = [
    "NuclearSpecies",
    "FE57",
    "SPECIES",
    "ResonantLayerSet",
    "LevelScheme",
    "coupling_matrix",
    "rabi_vector",
    "outcoupling_vectors",
    "derive_level_scheme",
    "scheme_from_solution",
]

# Fe-57 coupling strength per nm of layer thickness (units: gamma0 / nm^2)
# and outcoupling report normalization (units: 1 / nm^2), both calibrated
# against the published two-layer reference tables; see
# scripts/calibrate_species.py for the fit and residuals.
_FE57_STRENGTH = 0.6062
_FE57_OUT_NORM = 5.290


@dataclass(frozen=True)
class NuclearSpecies:
    """Resonant isotope parameters decoupled from the electronic constants."""

    name: str = "Fe57"
    transition_energy: float = 14412.5  # eV
    gamma0: float = 4.66e-9  # eV, natural linewidth
    strength: float = _FE57_STRENGTH  # gamma0 / nm^2, per unit thickness
    out_norm: float = _FE57_OUT_NORM  # 1 / nm^2, report-only normalization
    dipole_phase: complex = 1j  # unit modulus; affects reported outcoupling signs only

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if self.strength < 0:
            raise ValueError("strength must be non-negative")
        if not math.isclose(abs(self.dipole_phase), 1.0, rel_tol=1e-9):
            raise ValueError("dipole_phase must have unit modulus")

    def with_strength(self, strength: float) -> "NuclearSpecies":
        return replace(self, strength=strength)


FE57 = NuclearSpecies()

SPECIES: dict[str, NuclearSpecies] = {"Fe57": FE57, "Fe": FE57}


@dataclass(frozen=True)
class ResonantLayerSet:
    """Which stack layers are resonant, and with which species."""

    indices: tuple[int, ...]
    species: tuple[NuclearSpecies, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.species) or not self.indices:
            raise ValueError("need one species per resonant layer")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("resonant layer indices must be distinct")
        if list(self.indices) != sorted(self.indices):
            raise ValueError("resonant layers must be listed by increasing depth")

    @classmethod
    def for_stack(cls, stack: CavityStack, indices: Sequence[int],
                  species: NuclearSpecies | Sequence[NuclearSpecies]) -> "ResonantLayerSet":
        indices = tuple(int(i) for i in indices)
        if any(not 0 <= i < len(stack.layers) for i in indices):
            raise ValueError(f"resonant indices {indices} out of range")
        if isinstance(species, NuclearSpecies):
            species = (species,) * len(indices)
        rls = cls(indices, tuple(species))
        depths = rls.depths(stack)
        if np.any(np.diff(depths) <= 0):
            raise ValueError("resonant layer depths must be strictly increasing")
        return rls

    def __len__(self):
        return len(self.indices)

    def items(self) -> Iterable[tuple[int, NuclearSpecies]]:
        return zip(self.indices, self.species)

    def depths(self, stack: CavityStack) -> np.ndarray:
        return np.array([stack.depth_of(i) for i in self.indices])

    def strengths(self, stack: CavityStack) -> np.ndarray:
        """Effective xi per layer (gamma0 / nm): strength times thickness."""
        return np.array([sp.strength * stack.layers[i].thickness
                         for i, sp in self.items()])

    def mirrored(self, stack: CavityStack) -> "ResonantLayerSet":
        """The same physical layers in the depth-mirrored stack (order reversed)."""
        n = len(stack.layers)
        pairs = sorted((n - 1 - i, sp) for i, sp in self.items())
        return ResonantLayerSet(tuple(i for i, _ in pairs), tuple(sp for _, sp in pairs))


@dataclass(frozen=True)
class LevelScheme:
    """Complex level-shift matrix plus drive and outcoupling data (gamma0 units).

    `matrix`, `rabi`, `out_refl`, `out_trans` follow the reported
    normalization described in the module docstring.  `drive` and the
    `coupling_*` vectors are the internal combinations entering observables:
    r(x) = r_el - coupling_refl . K(x)^-1 drive with K = (x + i/2) 1 + matrix.
    """

    matrix: np.ndarray        # (L, L) complex, symmetric
    rabi: np.ndarray          # (L,) complex field enhancements
    out_refl: np.ndarray      # (L,) complex, reported units
    out_trans: np.ndarray     # (L,) complex, reported units
    drive: np.ndarray         # (L,) complex, sqrt(xi) * field
    coupling_refl: np.ndarray  # (L,) complex, sqrt(xi) * G(0, z_l)
    coupling_trans: np.ndarray  # (L,) complex, sqrt(xi) * G(D, z_l)
    r_el: complex
    t_el: complex
    gamma0: float

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape[-1] != m.shape[-2]:
            raise ValueError("level-shift matrix must be square")

    def __len__(self):
        return self.matrix.shape[-1]

    def validate(self, tol: float = 1e-12) -> "LevelScheme":
        m = self.matrix
        if not np.all(np.isfinite(m)):
            raise ValueError("level scheme contains non-finite entries")
        asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)))
        if asym > tol * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError(f"level-shift matrix asymmetry {asym:.2e} exceeds tolerance")
        return self

    # -- convenience accessors (all in units of gamma0) --
    @property
    def lamb_shift(self) -> np.ndarray:
        """Collective Lamb shift per excited state, -Re(matrix_ll)."""
        return -np.real(np.diagonal(self.matrix, axis1=-2, axis2=-1))

    @property
    def superradiance(self) -> np.ndarray:
        """Superradiant decay enhancement per excited state, 2 Im(matrix_ll)."""
        return 2.0 * np.imag(np.diagonal(self.matrix, axis1=-2, axis2=-1))

    def _pair(self):
        if len(self) != 2:
            raise ValueError("pair couplings are defined for two-layer schemes")
        return self.matrix[..., 0, 1]

    @property
    def coherent_coupling(self) -> float:
        return float(np.real(self._pair()))

    @property
    def cross_damping(self) -> float:
        return float(2.0 * np.imag(self._pair()))

    def to_json_dict(self) -> dict:
        def c(arr):
            arr = np.asarray(arr)
            return np.stack([arr.real, arr.imag], axis=-1).tolist()

        return {
            "gamma0_eV": self.gamma0,
            "matrix": c(self.matrix),
            "rabi": c(self.rabi),
            "out_refl": c(self.out_refl),
            "out_trans": c(self.out_trans),
            "r_el": c(self.r_el),
            "t_el": c(self.t_el),
            "units": "gamma0",
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


def scheme_from_solution(sol: StackSolution, resonant: ResonantLayerSet,
                         thicknesses, gamma0: float) -> dict:
    """Level-scheme ingredients from a solved stack; batch dimensions pass through.

    `thicknesses` must match the solution's layer axis.  Returns raw arrays
    keyed like LevelScheme fields, with leading batch dimensions intact.
    """
    d = np.asarray(thicknesses, dtype=float)
    nres = len(resonant)
    idx = list(resonant.indices)
    xi = np.array([sp.strength for _, sp in resonant.items()])  # per unit thickness
    t_res = d[..., idx]
    xi_eff = xi * t_res  # (..., L) in gamma0 / nm
    sqrt_xi = np.sqrt(xi_eff)

    psi_r = np.stack([sol.field_in_layer(i, d[..., i] / 2.0) for i in idx], axis=-1)
    psi_l = np.stack([sol.upstream_field_in_layer(i, d[..., i] / 2.0) for i in idx], axis=-1)
    w = sol.wronskian

    # pairwise Green's function at layer midpoints (depths increase with index)
    g = np.empty(psi_r.shape[:-1] + (nres, nres), dtype=complex)
    for a in range(nres):
        for b in range(a, nres):
            gab = -psi_l[..., a] * psi_r[..., b] / w
            g[..., a, b] = gab
            g[..., b, a] = gab
    matrix = sqrt_xi[..., :, None] * g * sqrt_xi[..., None, :]

    g_top = -sol._reversed.t_el[..., None] * psi_r / w[..., None]   # G(0, z_l)
    g_bot = -psi_l * sol.t_el[..., None] / w[..., None]             # G(D, z_l)

    zeta = np.array([sp.out_norm for _, sp in resonant.items()]) * t_res
    phase2 = np.array([sp.dipole_phase ** 2 for _, sp in resonant.items()])
    report = phase2 / (1j * zeta)

    return {
        "matrix": matrix,
        "rabi": psi_r,
        "drive": sqrt_xi * psi_r,
        "coupling_refl": sqrt_xi * g_top,
        "coupling_trans": sqrt_xi * g_bot,
        "out_refl": report * g_top,
        "out_trans": report * g_bot,
        "r_el": sol.r_el,
        "t_el": sol.t_el,
        "gamma0": gamma0,
    }


def derive_level_scheme(stack: CavityStack, geom: IncidenceGeometry,
                        resonant: ResonantLayerSet) -> LevelScheme:
    """Assemble the full level scheme of a stack at one incidence angle."""
    gamma0 = resonant.species[0].gamma0
    if any(sp.gamma0 != gamma0 for sp in resonant.species):
        raise ValueError("mixed bare linewidths in one scheme are not supported")
    sol = solve(stack, geom)
    parts = scheme_from_solution(sol, resonant, stack.thicknesses, gamma0)
    parts["r_el"] = complex(parts["r_el"])
    parts["t_el"] = complex(parts["t_el"])
    return LevelScheme(**parts).validate()


def coupling_matrix(stack: CavityStack, geom: IncidenceGeometry,
                    resonant: ResonantLayerSet) -> np.ndarray:
    """Complex coupling matrix (Delta + i gamma/2) in units of gamma0."""
    return derive_level_scheme(stack, geom, resonant).matrix


def rabi_vector(stack: CavityStack, geom: IncidenceGeometry,
                resonant: ResonantLayerSet) -> np.ndarray:
    """Reported drive vector: the field enhancement at each resonant layer."""
    return derive_level_scheme(stack, geom, resonant).rabi


def outcoupling_vectors(stack: CavityStack, geom: IncidenceGeometry,
                        resonant: ResonantLayerSet) -> tuple[np.ndarray, np.ndarray]:
    """Reported reflection- and transmission-side outcoupling vectors."""
    scheme = derive_level_scheme(stack, geom, resonant)
    return scheme.out_refl, scheme.out_trans
