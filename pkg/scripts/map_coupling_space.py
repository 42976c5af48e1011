#!/usr/bin/env python3
"""Map the accessible excited-state couplings of a two-layer cavity family.

Samples the (coherent, incoherent) coupling plane for the Pd-clad family
under a sequence of top-cladding thickness caps, writes the raw clouds and
alpha-shape boundaries, and prints the reach of each constrained family.
The nesting of the shaded regions with the cap mirrors the trade-off
between strong collective coupling and incoupling of the probe beam.

Usage: map_coupling_space.py [outdir] [budget]
"""

import json
import sys
from pathlib import Path

import numpy as np

from nucav.ensemble import FE57, ResonantLayerSet
from nucav.materials import builtin_materials
from nucav.obspace import (CavityParameterization, FreeAngle, FreeThickness,
                           os_boundary, sample_os)
from nucav.stratified import CavityStack

CAPS_NM = [0.0, 1.0, 2.0, 3.0, 120.0]
OBSERVABLES = ("d12_s1", "g12_s1")  # couplings scaled by the first decay rate


def family(materials, cap: float) -> CavityParameterization:
    pd, b4c, fe, si = (materials[n] for n in ("Pd", "B4C", "Fe57", "Si"))
    template = CavityStack.from_pairs(
        [(pd, 1.0), (b4c, 20.0), (fe, 0.57), (b4c, 20.0), (fe, 0.57),
         (b4c, 20.0), (pd, 20.0)], bottom=si)
    resonant = ResonantLayerSet.for_stack(template, (2, 4), FE57)
    top = FreeThickness(0, 0.0, cap) if cap > 0 else FreeThickness(0, 0.0, 1e-9)
    return CavityParameterization(template, resonant, (
        top,
        FreeThickness(1, 0.0, 150.0), FreeThickness(3, 0.0, 150.0),
        FreeThickness(5, 0.0, 150.0), FreeThickness(6, 8.0, 120.0),
        FreeAngle(2.2e-3, 4.6e-3)))


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("coupling-space")
    budget = int(sys.argv[2]) if len(sys.argv) > 2 else 40_000
    outdir.mkdir(parents=True, exist_ok=True)
    materials = builtin_materials()

    for cap in CAPS_NM:
        samples = sample_os(family(materials, cap), OBSERVABLES, budget, seed=7)
        tag = f"cap{cap:g}nm"
        cloud = np.column_stack([samples.params, samples.observables,
                                 samples.capped.astype(float)])
        header = ",".join([f"p{j}" for j in range(samples.params.shape[1])]
                          + list(OBSERVABLES) + ["capped"])
        np.savetxt(outdir / f"os_{tag}.csv", cloud, delimiter=",",
                   header=header, comments="")
        hull = os_boundary(samples, OBSERVABLES)
        (outdir / f"boundary_{tag}.json").write_text(
            json.dumps(hull.to_json_dict()), encoding="utf-8")
        d12 = samples.column(OBSERVABLES[0])
        g12 = samples.column(OBSERVABLES[1])
        print(f"cap {cap:6g} nm: {OBSERVABLES[0]} in [{d12.min():8.2f}, {d12.max():7.2f}], "
              f"{OBSERVABLES[1]} in [{g12.min():8.2f}, {g12.max():7.2f}], "
              f"hull area {hull.area:9.1f}")


if __name__ == "__main__":
    main()
