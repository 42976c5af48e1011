"""Grazing-incidence electromagnetics of a planar layer stack (s polarization).

Conventions, used consistently by every module downstream:

* Depth axis: z = 0 at the top surface, increasing downward.  Layers are
  listed top to bottom; the stack of total thickness D sits between two
  half-spaces.  Reflection is evaluated at z = 0, transmission at z = D.
* Time convention exp(-i w t).  In medium j the field is
  a_j exp(+i kz_j (z - z_j^top)) + b_j exp(-i kz_j (z - z_j^top)) with
  kz_j = sqrt(k^2 n_j^2 - k_par^2) on the principal branch, k the vacuum
  wavenumber and k_par = k cos(theta) (analytically continued for complex
  grazing angles theta).
* Incident amplitude is unity, so `field_at` returns the enhancement factor.
* The in-plane Fourier-transformed Green's function solves
      (d^2/dz^2 + k^2 n(z)^2 - k_par^2) G(z, z') = -delta(z - z'),
  i.e. in a homogeneous medium G = +i exp(i kz |z-z'|) / (2 kz).  The sign is
  fixed so that Im G(z, z) > 0 in a passive structure (positive collective
  damping); it is the negative of the e^{ikz|z-z'|}/(2i kz) form quoted with
  the opposite source sign.

The recursion works with interface reflectivities and per-layer amplitude
pairs only; every stored exponential has non-increasing magnitude for
passive media, so thick absorbing claddings do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .materials import Material, VACUUM

__all__ = [
    "HC_EV_NM",
    "Layer",
    "CavityStack",
    "IncidenceGeometry",
    "SolverError",
    "StackSolution",
    "solve",
    "parratt_coefficients",
    "field_at_depth",
    "greens_function",
    "rocking_curve",
    "semiclassical_reflectance",
]

HC_EV_NM = 1239.841984  # photon energy [eV] * wavelength [nm]


class SolverError(ArithmeticError):
    """Non-finite amplitudes or an otherwise failed stack solve."""


@dataclass(frozen=True)
class Layer:
    material: Material
    thickness: float  # nm

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness >= 0.0):
            raise ValueError(f"layer thickness {self.thickness!r} must be finite and >= 0")


@dataclass(frozen=True)
class CavityStack:
    """Ordered layers between two half-spaces, top first."""

    layers: tuple[Layer, ...]
    top: Material = VACUUM
    bottom: Material = VACUUM

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a stack needs at least one layer")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[Material, float]],
                   top: Material = VACUUM, bottom: Material = VACUUM) -> "CavityStack":
        return cls(tuple(Layer(m, t) for m, t in pairs), top=top, bottom=bottom)

    @property
    def thicknesses(self) -> np.ndarray:
        return np.array([lay.thickness for lay in self.layers])

    @property
    def boundaries(self) -> np.ndarray:
        """Interface depths, including z=0 and z=D."""
        return np.concatenate([[0.0], np.cumsum(self.thicknesses)])

    @property
    def total_thickness(self) -> float:
        return float(self.thicknesses.sum())

    def depth_of(self, index: int) -> float:
        """Midpoint depth of layer `index` (0-based)."""
        b = self.boundaries
        return float(0.5 * (b[index] + b[index + 1]))

    def index_squared(self) -> np.ndarray:
        """n^2 of every medium: [top, layers..., bottom]."""
        mats = [self.top, *(lay.material for lay in self.layers), self.bottom]
        return np.array([m.index_squared for m in mats], dtype=complex)

    def mirrored(self) -> "CavityStack":
        """The stack viewed upside down (layer order and half-spaces swapped)."""
        return CavityStack(tuple(reversed(self.layers)), top=self.bottom, bottom=self.top)

    def with_thicknesses(self, thicknesses: Sequence[float]) -> "CavityStack":
        if len(thicknesses) != len(self.layers):
            raise ValueError("thickness count does not match layer count")
        new = tuple(Layer(lay.material, float(t)) for lay, t in zip(self.layers, thicknesses))
        return CavityStack(new, top=self.top, bottom=self.bottom)


@dataclass(frozen=True)
class IncidenceGeometry:
    """Grazing angle (rad; complex only for analytic continuation) and photon energy (eV)."""

    theta: complex
    photon_energy: float = 14412.5

    @property
    def k(self) -> float:
        """Vacuum wavenumber, 1/nm."""
        return 2.0 * math.pi * self.photon_energy / HC_EV_NM

    @property
    def k_par(self) -> complex:
        kp = self.k * np.cos(self.theta)
        return complex(kp) if np.iscomplexobj(kp) or isinstance(self.theta, complex) else float(kp)

    @property
    def q_vac2(self) -> complex:
        """(k sin theta)^2 = k^2 - k_par^2, formed without grazing-incidence cancellation."""
        q = self.k * np.sin(self.theta)
        return complex(q * q)

    @property
    def is_physical(self) -> bool:
        th = complex(self.theta)
        return th.imag == 0.0 and 0.0 < th.real < 0.1

    def require_physical(self):
        if not self.is_physical:
            raise ValueError(f"theta={self.theta!r} is not a physical grazing angle")

    def with_theta(self, theta) -> "IncidenceGeometry":
        return IncidenceGeometry(theta, self.photon_energy)


def _wave_numbers(n2: np.ndarray, k: float, q2: np.ndarray) -> np.ndarray:
    """kz per medium from q2 = k^2 - k_par^2; n2 (..., M), q2 (...,) -> (..., M).

    Written as sqrt(k^2 (n^2 - 1) + q2) so the near-cancellation of k^2 n^2
    and k_par^2 at grazing incidence happens analytically, not in floats.
    """
    return np.sqrt(k * k * (n2 - 1.0) + np.asarray(q2)[..., None])


def _amplitudes(n2, d, k, q2):
    """Per-medium wave amplitudes for unit incidence from the top.

    n2: (..., M) squared indices (M = number of layers + 2),
    d:  (..., M-2) layer thicknesses, q2 = k^2 - k_par^2: (...,).  Broadcasts
    over leading dimensions.  Returns (kz, a, b) each (..., M); a/b are the
    down-/up-going amplitudes referenced at the top of each medium
    (half-spaces referenced at z=0 and z=D).
    """
    n2, d = np.asarray(n2, dtype=complex), np.asarray(d, dtype=float)
    q2 = np.asarray(q2, dtype=complex)
    m = n2.shape[-1]
    batch = np.broadcast_shapes(n2.shape[:-1], d.shape[:-1], q2.shape)
    kz = np.broadcast_to(_wave_numbers(n2, k, q2), batch + (m,)).copy()
    d = np.broadcast_to(d, batch + (m - 2,))

    # downward pass: u[j] = (b/a) at the bottom of medium j, refl[j] at its top
    u = np.empty(batch + (m,), dtype=complex)
    refl = np.zeros(batch + (m,), dtype=complex)
    for j in range(m - 2, -1, -1):
        rf = (kz[..., j] - kz[..., j + 1]) / (kz[..., j] + kz[..., j + 1])
        u[..., j] = (rf + refl[..., j + 1]) / (1.0 + rf * refl[..., j + 1])
        if j >= 1:
            refl[..., j] = u[..., j] * np.exp(2j * kz[..., j] * d[..., j - 1])
        else:
            refl[..., j] = u[..., j]

    # upward-to-downward amplitude pass
    a = np.empty(batch + (m,), dtype=complex)
    b = np.empty(batch + (m,), dtype=complex)
    a[..., 0] = 1.0
    b[..., 0] = refl[..., 0]
    for j in range(m - 1):
        if j == 0:
            abot = a[..., 0]
        else:
            abot = a[..., j] * np.exp(1j * kz[..., j] * d[..., j - 1])
        bbot = u[..., j] * abot
        # the two expressions are algebraically equal; pick the better-conditioned one
        den_sum = 1.0 + refl[..., j + 1]
        den_dif = 1.0 - refl[..., j + 1]
        use_sum = np.abs(den_sum) >= np.abs(den_dif)
        with np.errstate(divide="ignore", invalid="ignore"):
            via_sum = (abot + bbot) / den_sum
            via_dif = (kz[..., j] / kz[..., j + 1]) * (abot - bbot) / den_dif
        a[..., j + 1] = np.where(use_sum, via_sum, via_dif)
        b[..., j + 1] = refl[..., j + 1] * a[..., j + 1]
    return kz, a, b


class StackSolution:
    """Solved wave amplitudes of one stack at one (possibly batched) incidence."""

    def __init__(self, n2, d, k, q2):
        self.n2 = np.asarray(n2, dtype=complex)
        self.d = np.asarray(d, dtype=float)
        self.k = float(k)
        self.q2 = np.asarray(q2, dtype=complex)
        self.kz, self.a, self.b = _amplitudes(self.n2, self.d, self.k, self.q2)
        self.total = self.d.sum(axis=-1)
        # interface depths incl. z=0 and z=D, as (..., M-1)
        zeros = np.zeros(np.shape(self.total) + (1,))
        self.boundaries = np.concatenate(
            [zeros, np.cumsum(np.broadcast_to(self.d, np.shape(self.total) + self.d.shape[-1:]), axis=-1)],
            axis=-1,
        )

    @property
    def r_el(self):
        return self.b[..., 0]

    @property
    def t_el(self):
        return self.a[..., -1]

    @cached_property
    def _reversed(self) -> "StackSolution":
        return StackSolution(self.n2[..., ::-1], self.d[..., ::-1], self.k, self.q2)

    @property
    def wronskian(self):
        """W = 2i kz_bottom t_el of the down-going / up-going solution pair."""
        return 2j * self.kz[..., -1] * self.t_el

    def _medium_of(self, z):
        z = np.asarray(z, dtype=float)
        if self.boundaries.ndim > 1:
            raise ValueError("depth lookup by position requires an unbatched stack")
        return np.searchsorted(self.boundaries, z, side="right")

    def field_at(self, z):
        """Field enhancement of the unit-incidence solution at depth z."""
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)):
            raise ValueError("depth must be finite")
        med = self._medium_of(z)
        ztop = np.concatenate([[0.0], self.boundaries])[med]  # top halfspace references z=0
        off = z - ztop
        kzm = self.kz[..., med]
        return self.a[..., med] * np.exp(1j * kzm * off) + self.b[..., med] * np.exp(-1j * kzm * off)

    def field_in_layer(self, index, offset):
        """Field inside layer `index` (0-based) at `offset` below its top interface.

        Batch-friendly: avoids the depth -> medium lookup of `field_at`.
        """
        kzm = self.kz[..., index + 1]
        return (self.a[..., index + 1] * np.exp(1j * kzm * offset)
                + self.b[..., index + 1] * np.exp(-1j * kzm * offset))

    def upstream_field_at(self, z):
        """Unit-incidence-from-below solution at depth z (for the Green's function)."""
        rev = self._reversed
        return rev.field_at(self.total - np.asarray(z, dtype=float))

    def upstream_field_in_layer(self, index, offset):
        rev = self._reversed
        nlay = self.d.shape[-1]
        return rev.field_in_layer(nlay - 1 - index, self.d[..., index] - offset)

    def green(self, z, zp):
        """G(z, z') in nm; see module docstring for the normalization."""
        z = np.asarray(z, dtype=float)
        zp = np.asarray(zp, dtype=float)
        lo, hi = np.minimum(z, zp), np.maximum(z, zp)
        return -self.upstream_field_at(lo) * self.field_at(hi) / self.wronskian

    def check_finite(self):
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise SolverError("stack solve produced non-finite amplitudes")
        return self


def solve(stack: CavityStack, geom: IncidenceGeometry) -> StackSolution:
    """Solve the stack for the given incidence; accepts complex theta."""
    return StackSolution(stack.index_squared(), stack.thicknesses, geom.k, geom.q_vac2)


def parratt_coefficients(stack: CavityStack, geom: IncidenceGeometry) -> tuple[complex, complex]:
    """Amplitude reflection and transmission of the full stack (s polarization)."""
    geom.require_physical()
    sol = solve(stack, geom)
    r, t = complex(sol.r_el), complex(sol.t_el)
    if not (np.isfinite(r.real) and np.isfinite(r.imag) and np.isfinite(t.real) and np.isfinite(t.imag)):
        raise SolverError("Parratt recursion returned non-finite coefficients")
    return r, t


def field_at_depth(stack: CavityStack, geom: IncidenceGeometry, z) -> complex | np.ndarray:
    """Field enhancement at depth z (z < 0 above, z > D below the stack)."""
    geom.require_physical()
    out = solve(stack, geom).check_finite().field_at(z)
    return complex(out) if np.ndim(out) == 0 else out


def greens_function(stack: CavityStack, geom: IncidenceGeometry, z, zp) -> complex | np.ndarray:
    """Layered-medium Green's function G(z, z'), symmetric in its arguments."""
    out = solve(stack, geom).check_finite().green(z, zp)
    return complex(out) if np.ndim(out) == 0 else out


def rocking_curve(stack: CavityStack, theta_grid, photon_energy: float = 14412.5) -> np.ndarray:
    """|r_el|^2 over a grid of physical grazing angles; minima mark cavity modes."""
    thetas = np.asarray(theta_grid, dtype=float)
    if not np.all((thetas > 0) & (thetas < 0.1)):
        raise ValueError("rocking-curve angles must satisfy 0 < theta < 0.1 rad")
    k = 2.0 * math.pi * photon_energy / HC_EV_NM
    sol = StackSolution(stack.index_squared(), stack.thicknesses, k, (k * np.sin(thetas)) ** 2)
    r = sol.r_el
    if not np.all(np.isfinite(r)):
        raise SolverError("rocking curve contains non-finite reflectivities")
    return np.abs(r) ** 2


def semiclassical_reflectance(stack: CavityStack, geom: IncidenceGeometry,
                              resonant, detunings) -> np.ndarray:
    """Reflection spectrum with the nuclear response folded into the index.

    Each resonant layer's n^2 acquires a single-Lorentzian susceptibility
    -(strength / k^2) / (x + i/2) at dimensionless detuning x, and the stack
    is re-solved per grid point.  `resonant` provides ``items()`` yielding
    (layer_index, species); see `nucav.ensemble.ResonantLayerSet`.  This
    route is independent of the Green's-function machinery and serves as its
    cross-check.
    """
    geom.require_physical()
    if hasattr(detunings, "detunings"):
        detunings = detunings.detunings
    x = np.asarray(detunings, dtype=float)
    n2 = np.broadcast_to(stack.index_squared(), x.shape + (len(stack.layers) + 2,)).copy()
    k = geom.k
    for index, species in resonant.items():
        chi = -(species.strength / (k * k)) / (x + 0.5j)
        n2[..., index + 1] = n2[..., index + 1] + chi
    sol = StackSolution(n2, stack.thicknesses, k, geom.q_vac2)
    r = sol.r_el
    if not np.all(np.isfinite(r)):
        raise SolverError("semiclassical spectrum contains non-finite points")
    return r
