"""Optical constants of cavity materials at the working photon energy.

A material is characterized by the refractive index n = 1 - delta + i*beta.
Constants are loaded from a CSV table (columns: name, energy_eV, delta, beta)
so that users can substitute their own tabulation; the bundled table holds
Henke-type values at 14.4125 keV for the materials used throughout.

``Fe56`` and ``Fe57`` share the electronic constants of natural iron; they
differ only in whether a nuclear resonance is attached (see `nucav.ensemble`).
The plain name ``Fe`` is an alias for the enriched resonant isotope.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from importlib import resources

__all__ = [
    "Material",
    "VACUUM",
    "MaterialsError",
    "load_materials",
    "builtin_materials",
]

MATERIALS_ENV_VAR = "NUCAV_MATERIALS"

# Sanity bound for the hard x-ray regime; tabulation errors usually show up
# as wildly wrong orders of magnitude.
_MAX_DELTA = 1e-3


class MaterialsError(ValueError):
    """Raised for malformed materials tables or unknown material names."""


@dataclass(frozen=True)
class Material:
    """Electronic optical constants of one substance at one photon energy."""

    name: str
    delta: float
    beta: float

    def __post_init__(self):
        if not (abs(self.delta) < _MAX_DELTA):
            raise MaterialsError(
                f"{self.name}: |delta|={abs(self.delta):.3g} outside hard x-ray regime"
            )
        if not (self.beta >= 0.0):
            raise MaterialsError(f"{self.name}: beta={self.beta:.3g} must be >= 0")

    @property
    def index_squared(self) -> complex:
        """n**2 for n = 1 - delta + i*beta."""
        n = 1.0 - self.delta + 1j * self.beta
        return n * n

    def lossless(self) -> "Material":
        """Copy with absorption switched off (for conservation checks)."""
        return Material(self.name + "~lossless", self.delta, 0.0)


VACUUM = Material("vacuum", 0.0, 0.0)


def load_materials(path, energy_eV: float | None = None) -> dict[str, Material]:
    """Read a materials CSV into a name -> Material mapping.

    If `energy_eV` is given, rows at other energies (>0.5 eV away) are
    rejected, so that a stack is never silently assembled from mixed-energy
    constants.  A ``vacuum`` entry is always present.
    """
    table: dict[str, Material] = {"vacuum": VACUUM}
    with open(path, newline="") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        required = {"name", "energy_eV", "delta", "beta"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise MaterialsError(
                f"{path}: materials CSV needs columns {sorted(required)}"
            )
        for row in reader:
            name = row["name"].strip()
            try:
                e = float(row["energy_eV"])
                delta = float(row["delta"])
                beta = float(row["beta"])
            except ValueError as exc:
                raise MaterialsError(f"{path}: bad row for {name!r}: {exc}") from exc
            if energy_eV is not None and abs(e - energy_eV) > 0.5:
                raise MaterialsError(
                    f"{path}: {name} tabulated at {e} eV, run is at {energy_eV} eV"
                )
            table[name] = Material(name, delta, beta)
    if "Fe57" in table:
        table.setdefault("Fe", table["Fe57"])
    return table


def _strip_comments(lines):
    for line in lines:
        if not line.lstrip().startswith("#"):
            yield line


def builtin_materials(energy_eV: float | None = 14412.5) -> dict[str, Material]:
    """Bundled table, unless ``NUCAV_MATERIALS`` points somewhere else."""
    override = os.environ.get(MATERIALS_ENV_VAR)
    if override:
        return load_materials(override, energy_eV)
    ref = resources.files("nucav.data").joinpath("materials_14keV.csv")
    with resources.as_file(ref) as path:
        return load_materials(path, energy_eV)
