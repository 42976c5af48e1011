#!/usr/bin/env python3
"""One-time calibration of the Fe-57 species constants.

Fits the coupling strength (per unit layer thickness) and the outcoupling
report normalization so that the derived level schemes reproduce the
published reference values for three benchmark cavities: the mirrored
vacuum-bounded pair at its third rocking minimum and the two Pd/B4C cavities
on Si used for the transparency design study.  The fitted numbers are frozen
into `nucav.ensemble`; rerun this script after changing the materials table.
"""

import numpy as np

from nucav.ensemble import FE57, ResonantLayerSet, derive_level_scheme
from nucav.materials import builtin_materials
from nucav.stratified import CavityStack, IncidenceGeometry

MATS = builtin_materials()


def build(seq, bottom="vacuum"):
    return CavityStack.from_pairs([(MATS[n], t) for n, t in seq], bottom=MATS[bottom])


FIG2A = build([("Pt", 2.0), ("C", 13.0), ("Fe57", 0.57), ("C", 8.0), ("Fe57", 0.57),
               ("C", 8.0), ("Fe56", 0.57), ("C", 13.0), ("Pt", 2.0)])
EIT = build([("Pd", 1.5), ("B4C", 49.8), ("Fe57", 0.57), ("B4C", 97.1), ("Fe57", 0.57),
             ("B4C", 35.4), ("Pd", 43.7)], bottom="Si")
NOEIT = build([("Pd", 3.0), ("B4C", 42.5), ("Fe57", 0.57), ("B4C", 143.4), ("Fe57", 0.57),
               ("B4C", 72.9), ("Pd", 43.4)], bottom="Si")

CASES = [
    ("two-layer mirrored pair", FIG2A, (2, 4), 3.39e-3),
    ("transparency design", EIT, (2, 4), 2.28e-3),
    ("negative control", NOEIT, (2, 4), 2.23e-3),
]

# published values, in gamma0 units
MATRIX_TARGETS = {
    "two-layer mirrored pair": {
        (0, 0): -0.040 + 0.22j, (0, 1): -0.86 + 0.012j, (1, 1): 0.64 + 3.5j,
    },
    "transparency design": {
        "im00": 2 * 0.38 / 2, "im11": 2 * 6.2 / 2, (0, 1): 6.4 + 0.52j,
    },
    "negative control": {
        "im00": 3.2, "im11": 0.63, (0, 1): 6.2 + 1.1j,
    },
}
OUT_TARGETS = {  # reflection and transmission outcoupling of the mirrored-pair cavity
    "refl": np.array([0.26 - 0.23j, 1.1 + 0.80j]),
    "trans": np.array([-0.24 + 0.23j, 1.1 + 0.80j]),
}
RABI_TARGETS = np.array([-0.37 + 0.34j, -1.6 - 1.2j])


def unit_schemes():
    """Schemes with strength 1/nm^2 and out_norm 1/nm^2: raw geometric factors."""
    probe = FE57.with_strength(1.0)
    probe = type(probe)(**{**probe.__dict__, "out_norm": 1.0})
    out = {}
    for name, stack, idx, theta in CASES:
        res = ResonantLayerSet.for_stack(stack, idx, probe)
        out[name] = derive_level_scheme(stack, IncidenceGeometry(theta), res)
    return out


def fit_strength(raw):
    num = den = 0.0
    rows = []
    for name, targets in MATRIX_TARGETS.items():
        m = raw[name].matrix
        for key, tv in targets.items():
            if key == "im00":
                g, t = m[0, 0].imag, tv
                contrib = (g, t)
            elif key == "im11":
                g, t = m[1, 1].imag, tv
                contrib = (g, t)
            else:
                g, t = m[key], tv
                contrib = (g, t)
            w = 1.0 / abs(t) ** 2
            num += w * np.real(np.conj(g) * t)
            den += w * abs(g) ** 2
            rows.append((name, key, g, t))
    xi = num / den
    print(f"strength fit: xi = {xi:.6g} gamma0/nm^2")
    for name, key, g, t in rows:
        rel = abs(xi * g - t) / abs(t)
        print(f"  {name:26s} {str(key):8s} model {xi * g:+.3f}  target {t:+.3f}  rel {rel:6.1%}")
    return xi


def fit_out_norm(raw):
    scheme = raw["two-layer mirrored pair"]
    g = np.concatenate([scheme.out_refl, scheme.out_trans])  # computed with out_norm = 1
    t = np.concatenate([OUT_TARGETS["refl"], OUT_TARGETS["trans"]])
    w = 1.0 / np.abs(t) ** 2
    c = np.sum(w * np.real(np.conj(g) * t)) / np.sum(w * np.abs(g) ** 2)
    zeta = 1.0 / c
    print(f"outcoupling fit: out_norm = {zeta:.6g} /nm^2")
    for gi, ti in zip(g, t):
        print(f"  model {gi * c:+.3f}  target {ti:+.3f}  rel {abs(gi * c - ti) / abs(ti):6.1%}")
    return zeta


def report_rabi(raw):
    print("rabi predictions (no fitted constants involved):")
    sch = raw["two-layer mirrored pair"]
    for got, want in zip(sch.rabi, RABI_TARGETS):
        print(f"  model {got:+.3f}  target {want:+.3f}  rel {abs(got - want) / abs(want):6.1%}")
    for name, want in [("transparency design", 279.0), ("negative control", 1 / 4.4)]:
        r = abs(raw[name].rabi[1] / raw[name].rabi[0]) ** 2
        print(f"  {name}: |rabi2/rabi1|^2 = {r:.3g} (target {want:.3g})")


if __name__ == "__main__":
    raw = unit_schemes()
    fit_strength(raw)
    fit_out_norm(raw)
    report_rabi(raw)
