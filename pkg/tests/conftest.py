import numpy as np
import pytest

from nucav.materials import builtin_materials
from nucav.stratified import CavityStack, IncidenceGeometry, Layer


@pytest.fixture(scope="session")
def materials():
    return builtin_materials()


@pytest.fixture(scope="session")
def fig2_stacks(materials):
    """The mirrored pair of vacuum-bounded test cavities with three iron layers.

    In (a) the two resonant layers sit on the illuminated side, in (b) on the
    far side; electronically the two stacks are identical palindromes.
    Returns (stack_a, stack_b, resonant_indices_a, resonant_indices_b).
    """
    pt, c = materials["Pt"], materials["C"]
    fe57, fe56 = materials["Fe57"], materials["Fe56"]
    seq_a = [(pt, 2.0), (c, 13.0), (fe57, 0.57), (c, 8.0), (fe57, 0.57),
             (c, 8.0), (fe56, 0.57), (c, 13.0), (pt, 2.0)]
    seq_b = [(pt, 2.0), (c, 13.0), (fe56, 0.57), (c, 8.0), (fe57, 0.57),
             (c, 8.0), (fe57, 0.57), (c, 13.0), (pt, 2.0)]
    return (CavityStack.from_pairs(seq_a), CavityStack.from_pairs(seq_b), (2, 4), (4, 6))


def random_stack(rng: np.random.Generator, materials, *, lossless=False,
                 max_layers=7, vacuum_sides=True) -> CavityStack:
    """Arbitrary physical stack for property tests (vacuum half-spaces by default)."""
    pool = [materials[name] for name in ("Pt", "Pd", "C", "B4C", "Si", "Fe56")]
    if lossless:
        pool = [m.lossless() for m in pool]
    n = int(rng.integers(1, max_layers + 1))
    layers = tuple(
        Layer(pool[rng.integers(len(pool))], float(rng.uniform(0.3, 40.0)))
        for _ in range(n)
    )
    top = bottom = materials["vacuum"]
    if not vacuum_sides:
        bottom = pool[rng.integers(len(pool))]
    return CavityStack(layers, top=top, bottom=bottom)


def random_geometry(rng: np.random.Generator) -> IncidenceGeometry:
    return IncidenceGeometry(float(rng.uniform(1.0e-3, 8.0e-3)))
