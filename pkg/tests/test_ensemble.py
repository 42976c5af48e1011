import json

import numpy as np
import pytest

from nucav.ensemble import (
    FE57,
    LevelScheme,
    NuclearSpecies,
    ResonantLayerSet,
    coupling_matrix,
    derive_level_scheme,
    outcoupling_vectors,
    rabi_vector,
)
from nucav.materials import VACUUM
from nucav.stratified import CavityStack, IncidenceGeometry, Layer, solve

from conftest import random_geometry, random_stack

THETA3 = 3.39e-3

# published two-layer reference values (gamma0 units)
TABLE_MATRIX = np.array([[-0.040 + 0.22j, -0.86 + 0.012j],
                         [-0.86 + 0.012j, 0.64 + 3.5j]])
TABLE_RABI_A = np.array([-0.37 + 0.34j, -1.6 - 1.2j])
TABLE_RABI_B = np.array([0.35 - 0.33j, -1.6 - 1.2j])  # central layer second
TABLE_OUT_R_A = np.array([0.26 - 0.23j, 1.1 + 0.80j])
TABLE_OUT_T_A = np.array([-0.24 + 0.23j, 1.1 + 0.80j])


def scheme_pair(fig2_stacks):
    stack_a, stack_b, res_a, res_b = fig2_stacks
    geom = IncidenceGeometry(THETA3)
    sa = derive_level_scheme(stack_a, geom, ResonantLayerSet.for_stack(stack_a, res_a, FE57))
    sb = derive_level_scheme(stack_b, geom, ResonantLayerSet.for_stack(stack_b, res_b, FE57))
    return sa, sb


def rel(got, want):
    return np.abs(got - want) / np.abs(want)


class TestReferenceCavity:
    def test_matrix_matches_published_values(self, fig2_stacks):
        sa, _ = scheme_pair(fig2_stacks)
        assert np.all(rel(sa.matrix, TABLE_MATRIX) < 0.20)

    def test_mirrored_stack_same_matrix(self, fig2_stacks):
        sa, sb = scheme_pair(fig2_stacks)
        # cavity (b) lists layers by depth; the mirror pairing is the reversal
        flipped = sb.matrix[::-1, ::-1]
        assert np.max(np.abs(flipped - sa.matrix)) < 1e-8

    def test_rabi_values_and_sign_flip(self, fig2_stacks):
        sa, sb = scheme_pair(fig2_stacks)
        assert np.all(rel(sa.rabi, TABLE_RABI_A) < 0.20)
        rabi_b = sb.rabi[::-1]  # table convention: central layer second
        assert np.all(rel(rabi_b, TABLE_RABI_B) < 0.20)
        # first entries flip sign exactly (sign pattern), second entries agree exactly
        assert np.sign(rabi_b[0].real) == -np.sign(sa.rabi[0].real)
        assert np.sign(rabi_b[0].imag) == -np.sign(sa.rabi[0].imag)
        assert rabi_b[1] == pytest.approx(sa.rabi[1], rel=1e-10)

    def test_outcoupling_values(self, fig2_stacks):
        sa, _ = scheme_pair(fig2_stacks)
        assert np.all(rel(sa.out_refl, TABLE_OUT_R_A) < 0.20)
        assert np.all(rel(sa.out_trans, TABLE_OUT_T_A) < 0.20)

    def test_transmission_outcoupling_equals_mirrored_reflection(self, fig2_stacks):
        sa, sb = scheme_pair(fig2_stacks)
        assert np.max(np.abs(sa.out_trans - sb.out_refl[::-1])) < 1e-10

    def test_node_antinode_rabi_ratio(self, fig2_stacks):
        sa, _ = scheme_pair(fig2_stacks)
        assert abs(sa.rabi[0]) ** 2 / abs(sa.rabi[1]) ** 2 < 0.1


@pytest.fixture(scope="module")
def pd_cavities(materials):
    pd, b4c, fe, si = materials["Pd"], materials["B4C"], materials["Fe57"], materials["Si"]
    eit = CavityStack.from_pairs(
        [(pd, 1.5), (b4c, 49.8), (fe, 0.57), (b4c, 97.1), (fe, 0.57),
         (b4c, 35.4), (pd, 43.7)], bottom=si)
    control = CavityStack.from_pairs(
        [(pd, 3.0), (b4c, 42.5), (fe, 0.57), (b4c, 143.4), (fe, 0.57),
         (b4c, 72.9), (pd, 43.4)], bottom=si)
    return eit, control


class TestDesignCavities:
    def test_transparency_cavity_scheme(self, pd_cavities):
        eit, _ = pd_cavities
        res = ResonantLayerSet.for_stack(eit, (2, 4), FE57)
        s = derive_level_scheme(eit, IncidenceGeometry(2.28e-3), res)
        assert rel(s.superradiance[0] / 2, 0.38) < 0.25
        assert rel(s.superradiance[1] / 2, 6.2) < 0.25
        assert rel(s.matrix[0, 1], 6.4 + 0.52j) < 0.25
        assert rel(abs(s.rabi[1] / s.rabi[0]) ** 2, 279.0) < 0.30

    def test_control_cavity_scheme(self, pd_cavities):
        _, control = pd_cavities
        res = ResonantLayerSet.for_stack(control, (2, 4), FE57)
        s = derive_level_scheme(control, IncidenceGeometry(2.23e-3), res)
        assert rel(s.superradiance[0] / 2, 3.2) < 0.25
        assert rel(s.superradiance[1] / 2, 0.63) < 0.25
        assert rel(s.matrix[0, 1], 6.2 + 1.1j) < 0.25
        assert rel(abs(s.rabi[0] / s.rabi[1]) ** 2, 4.4) < 0.30


class TestLimitsAndProperties:
    def test_zero_strength_gives_zero_matrix(self, fig2_stacks):
        stack_a, _, res_a, _ = fig2_stacks
        dead = FE57.with_strength(0.0)
        res = ResonantLayerSet.for_stack(stack_a, res_a, dead)
        m = coupling_matrix(stack_a, IncidenceGeometry(THETA3), res)
        assert np.all(m == 0)

    def test_opaque_cladding_kills_drive(self, materials):
        pt, c, fe = materials["Pt"], materials["C"], materials["Fe57"]
        stack = CavityStack.from_pairs([(pt, 400.0), (c, 10.0), (fe, 0.57), (c, 10.0), (pt, 2.0)])
        res = ResonantLayerSet.for_stack(stack, (2,), FE57)
        rabi = rabi_vector(stack, IncidenceGeometry(THETA3), res)
        assert np.all(np.abs(rabi) < 1e-6)

    def test_free_space_outcoupling_phase_relation(self):
        # resonant sheet in an all-vacuum stack: top and bottom propagators
        # differ by the free phase over the remaining distance
        t = 0.6
        stack = CavityStack.from_pairs([(VACUUM, t), (VACUUM, 25.0)])
        geom = IncidenceGeometry(3.0e-3)
        res = ResonantLayerSet.for_stack(stack, (0,), FE57)
        g_r, g_t = outcoupling_vectors(stack, geom, res)
        kz = geom.k * np.sin(geom.theta)
        depth = stack.total_thickness
        z1 = t / 2
        expected = np.exp(1j * kz * (depth - z1)) / np.exp(1j * kz * z1)
        assert g_t[0] / g_r[0] == pytest.approx(expected, rel=1e-10)

    def test_single_layer_scheme_is_scalar(self, materials):
        pt, c, fe = materials["Pt"], materials["C"], materials["Fe57"]
        stack = CavityStack.from_pairs([(pt, 2.0), (c, 15.0), (fe, 0.57), (c, 15.0), (pt, 2.0)])
        s = derive_level_scheme(stack, IncidenceGeometry(2.5e-3), ResonantLayerSet.for_stack(stack, (2,), FE57))
        assert s.matrix.shape == (1, 1)
        assert s.superradiance[0] > 0

    def test_single_layer_limit_of_two_layer_scheme(self, fig2_stacks):
        stack_a, _, res_a, _ = fig2_stacks
        geom = IncidenceGeometry(THETA3)
        dead = FE57.with_strength(0.0)
        both = ResonantLayerSet.for_stack(stack_a, res_a, (FE57, dead))
        single = ResonantLayerSet.for_stack(stack_a, res_a[:1], FE57)
        s2 = derive_level_scheme(stack_a, geom, both)
        s1 = derive_level_scheme(stack_a, geom, single)
        assert s2.matrix[0, 0] == pytest.approx(s1.matrix[0, 0], rel=1e-12)
        assert s2.rabi[0] == pytest.approx(s1.rabi[0], rel=1e-12)
        assert np.all(s2.matrix[1, :] == 0)

    def test_mirror_theorem_random_stacks(self, materials):
        rng = np.random.default_rng(101)
        checked = 0
        while checked < 40:
            stack = random_stack(rng, materials, max_layers=6)
            if len(stack.layers) < 2:
                continue
            geom = random_geometry(rng)
            n = len(stack.layers)
            k = int(rng.integers(1, min(3, n) + 1))
            idx = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
            try:
                res = ResonantLayerSet.for_stack(stack, idx, FE57)
            except ValueError:
                continue
            mirrored = stack.mirrored()
            res_m = res.mirrored(stack)
            s = derive_level_scheme(stack, geom, res)
            sm = derive_level_scheme(mirrored, geom, res_m)
            scale = max(1.0, float(np.max(np.abs(s.matrix))))
            assert np.max(np.abs(sm.matrix[::-1, ::-1] - s.matrix)) < 1e-8 * scale
            assert np.max(np.abs(sm.out_refl[::-1] - s.out_trans)) < 1e-8
            assert np.max(np.abs(sm.out_trans[::-1] - s.out_refl)) < 1e-8
            # incoupling of the mirrored stack = transmission-side propagator of the original
            sol = solve(stack, geom)
            kz_bot = sol.kz[-1]
            expected_rabi = -2j * kz_bot * np.array(
                [sol.green(stack.total_thickness, stack.depth_of(i)) for i in res.indices])
            assert np.max(np.abs(sm.rabi[::-1] - expected_rabi)) < 1e-8
            checked += 1

    def test_passivity_random_stacks(self, materials):
        rng = np.random.default_rng(202)
        for _ in range(200):
            stack = random_stack(rng, materials, max_layers=5)
            geom = random_geometry(rng)
            n = len(stack.layers)
            idx = (int(rng.integers(n)),)
            s = derive_level_scheme(stack, geom, ResonantLayerSet.for_stack(stack, idx, FE57))
            assert np.all(s.superradiance >= -1e-12)

    def test_cross_damping_bound(self, materials):
        rng = np.random.default_rng(303)
        checked = 0
        while checked < 100:
            stack = random_stack(rng, materials, max_layers=6)
            if len(stack.layers) < 2:
                continue
            idx = tuple(sorted(rng.choice(len(stack.layers), size=2, replace=False).tolist()))
            try:
                res = ResonantLayerSet.for_stack(stack, idx, FE57)
            except ValueError:
                continue
            s = derive_level_scheme(stack, random_geometry(rng), res)
            g12 = abs(s.cross_damping)
            bound = np.sqrt(s.superradiance[0] * s.superradiance[1])
            assert g12 <= bound + 1e-6
            checked += 1


class TestTypesAndExport:
    def test_resonant_set_validation(self, fig2_stacks):
        stack_a, _, _, _ = fig2_stacks
        with pytest.raises(ValueError):
            ResonantLayerSet.for_stack(stack_a, (4, 2), FE57)  # not by depth
        with pytest.raises(ValueError):
            ResonantLayerSet.for_stack(stack_a, (2, 2), FE57)  # duplicate
        with pytest.raises(ValueError):
            ResonantLayerSet.for_stack(stack_a, (99,), FE57)  # out of range

    def test_species_validation(self):
        with pytest.raises(ValueError):
            NuclearSpecies(gamma0=0.0)
        with pytest.raises(ValueError):
            NuclearSpecies(strength=-1.0)
        with pytest.raises(ValueError):
            NuclearSpecies(dipole_phase=2.0)

    def test_scheme_accessors(self, fig2_stacks):
        sa, _ = scheme_pair(fig2_stacks)
        assert sa.lamb_shift[0] == pytest.approx(-sa.matrix[0, 0].real)
        assert sa.superradiance[1] == pytest.approx(2 * sa.matrix[1, 1].imag)
        assert sa.coherent_coupling == pytest.approx(sa.matrix[0, 1].real)
        assert sa.cross_damping == pytest.approx(2 * sa.matrix[0, 1].imag)

    def test_json_export_roundtrips_values(self, fig2_stacks):
        sa, _ = scheme_pair(fig2_stacks)
        blob = json.loads(sa.to_json())
        m = np.array(blob["matrix"])
        restored = m[..., 0] + 1j * m[..., 1]
        assert np.allclose(restored, sa.matrix)
        assert blob["gamma0_eV"] == pytest.approx(FE57.gamma0)
