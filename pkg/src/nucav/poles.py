"""Cavity-mode poles of level-scheme observables in the complex angle plane.

Every level-scheme quantity derives from the same layered-medium Green's
function, so as functions of the (analytically continued) grazing angle they
share one set of poles and differ only in their residues.  Poles of passive
structures sit below the real axis for the exp(-i w t) time convention; the
default search window is Im(theta) in [-1, 0] mrad.

All observables here are even in theta (the in-plane wavevector is
k cos theta), so every pole theta0 has a mirror image at -theta0 carrying
the opposite residue; the truncated pole expansion includes those images by
default, which matters for its accuracy at small angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import ResonantLayerSet, scheme_from_solution
from .stratified import HC_EV_NM, CavityStack, StackSolution

__all__ = [
    "Window",
    "PoleSet",
    "CircleFit",
    "level_scheme_observable",
    "find_poles",
    "contour_residue",
    "laurent_residue",
    "mittag_leffler_approx",
    "single_mode_circle_fit",
]

OBSERVABLE_NAMES = ("coupling", "shift1", "shift2", "rabi1", "rabi2")


@dataclass(frozen=True)
class Window:
    """Rectangle in the complex theta plane (radians)."""

    re_min: float
    re_max: float
    im_min: float = -1e-3
    im_max: float = 0.0

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("degenerate pole-search window")
        if self.re_min <= 0.0:
            raise ValueError("window must avoid theta = 0")

    def contains(self, theta: complex, margin: float = 0.0) -> bool:
        return (self.re_min - margin <= theta.real <= self.re_max + margin
                and self.im_min - margin <= theta.imag <= self.im_max + margin)

    def grid(self, n_re: int, n_im: int) -> np.ndarray:
        re = np.linspace(self.re_min, self.re_max, n_re)
        im = np.linspace(self.im_min, self.im_max, n_im)
        return re[None, :] + 1j * im[:, None]


@dataclass(frozen=True)
class PoleSet:
    poles: np.ndarray                       # (P,) complex angles
    residues: dict[str, np.ndarray]         # per observable, (P,) complex
    window: Window
    failures: tuple[str, ...] = ()          # per-candidate polishing reports

    def __len__(self):
        return len(self.poles)

    def residue(self, observable: str) -> np.ndarray:
        return self.residues[observable]

    def to_json_dict(self) -> dict:
        def c(arr):
            arr = np.asarray(arr)
            return np.stack([arr.real, arr.imag], axis=-1).tolist()

        return {
            "poles_rad": c(self.poles),
            "residues": {k: c(v) for k, v in self.residues.items()},
            "window_rad": [self.window.re_min, self.window.re_max,
                           self.window.im_min, self.window.im_max],
            "failures": list(self.failures),
        }


def level_scheme_observable(stack: CavityStack, resonant: ResonantLayerSet,
                            name: str, photon_energy: float = 14412.5):
    """A callable theta -> complex for one scheme quantity, vectorized and
    analytic in theta."""
    if name not in OBSERVABLE_NAMES:
        raise ValueError(f"unknown observable {name!r}; choose from {OBSERVABLE_NAMES}")
    n2 = stack.index_squared()
    d = stack.thicknesses
    k = 2.0 * np.pi * photon_energy / HC_EV_NM
    gamma0 = resonant.species[0].gamma0

    def fn(theta):
        theta = np.asarray(theta, dtype=complex)
        q2 = (k * np.sin(theta)) ** 2
        sol = StackSolution(n2, d, k, q2)
        parts = scheme_from_solution(sol, resonant, d, gamma0)
        if name == "coupling":
            return parts["matrix"][..., 0, 1]
        if name == "shift1":
            return parts["matrix"][..., 0, 0]
        if name == "shift2":
            return parts["matrix"][..., 1, 1]
        index = {"rabi1": 0, "rabi2": 1}[name]
        return parts["rabi"][..., index]

    return fn


def _newton_polish(fn, theta0: complex, tol: float = 1e-13, max_iter: int = 60):
    """Newton iteration on 1/fn, which has a simple zero at the pole."""
    theta = complex(theta0)
    h = 1.0 / complex(fn(theta))
    for _ in range(max_iter):
        eps = 1e-7 * max(abs(theta), 1e-4)
        hp = complex(fn(theta + eps))
        hm = complex(fn(theta - eps))
        dh = (1.0 / hp - 1.0 / hm) / (2.0 * eps)
        if dh == 0:
            return theta, False
        step = h / dh
        theta -= step
        h = 1.0 / complex(fn(theta))
        if abs(step) < tol * max(abs(theta), 1.0):
            return theta, True
    return theta, False


def find_poles(stack: CavityStack, resonant: ResonantLayerSet, window: Window,
               photon_energy: float = 14412.5, observable: str = "coupling",
               residue_observables: tuple[str, ...] | None = None,
               n_re: int = 601, n_im: int = 61) -> PoleSet:
    """Locate all poles of a scheme observable inside the window.

    Grid scan for local maxima of |observable| followed by Newton polishing
    of its reciprocal; residues are then computed for `residue_observables`
    (default: the search observable) by contour quadrature.
    """
    if residue_observables is None:
        residue_observables = (observable,)
    fn = level_scheme_observable(stack, resonant, observable, photon_energy)
    grid = window.grid(n_re, n_im)
    vals = np.abs(fn(grid))

    # local maxima of |f| = minima of |1/f|; the -inf padding lets peaks on
    # the window edge qualify (narrow poles often hug Im(theta) = 0)
    padded = np.pad(vals, 1, constant_values=-np.inf)
    neighbors = np.stack([
        padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:],
        padded[:-2, :-2], padded[:-2, 2:], padded[2:, :-2], padded[2:, 2:],
    ])
    is_peak = np.all(vals >= neighbors, axis=0)
    candidates = grid[is_peak]

    margin = 0.05 * (window.re_max - window.re_min)
    poles: list[complex] = []
    failures: list[str] = []
    for cand in candidates:
        pole, ok = _newton_polish(fn, complex(cand))
        if not ok:
            failures.append(f"no convergence from {cand:.6g}")
            continue
        if not window.contains(pole, margin=margin):
            continue
        if any(abs(pole - p) < 1e-9 for p in poles):
            continue
        poles.append(pole)
    poles_arr = np.array(sorted(poles, key=lambda p: p.real), dtype=complex)
    inside = np.array([window.contains(p) for p in poles_arr], dtype=bool)
    poles_arr = poles_arr[inside]

    residues: dict[str, np.ndarray] = {}
    for name in residue_observables:
        fobs = fn if name == observable else level_scheme_observable(
            stack, resonant, name, photon_energy)
        res = np.empty(len(poles_arr), dtype=complex)
        for i, pole in enumerate(poles_arr):
            others = np.delete(poles_arr, i)
            gap = np.min(np.abs(others - pole)) if len(others) else np.inf
            r0 = min(gap / 3.0, abs(pole.imag) if pole.imag != 0 else np.inf,
                     2e-5) or 2e-5
            res[i] = contour_residue(fobs, pole, r0)
        residues[name] = res
    return PoleSet(poles_arr, residues, window, tuple(failures))


def contour_residue(fn, pole: complex, radius: float, n: int = 32,
                    rtol: float = 1e-8, max_shrink: int = 20) -> complex:
    """Residue by trapezoidal contour quadrature with radius auto-shrink."""
    prev = None
    r = radius
    phi = 2.0 * np.pi * np.arange(n) / n
    ring = np.exp(1j * phi)
    for _ in range(max_shrink):
        vals = fn(pole + r * ring)
        est = complex(np.mean(vals * ring) * r)
        # absolute floor: a residue this far below the quadrature scale is zero
        floor = 1e-11 * float(np.max(np.abs(vals))) * r
        if prev is not None and abs(est - prev) <= max(rtol * abs(est), floor):
            return est
        prev = est
        r /= 2.0
    raise ArithmeticError(f"residue estimate did not settle at pole {pole:.6g}")


def laurent_residue(fn, pole: complex, radius: float, n: int = 64) -> complex:
    """Independent residue estimator: least-squares Laurent fit c_-1/(t-p) + c0 + c1 (t-p)."""
    rng = np.linspace(0, 2 * np.pi, n, endpoint=False)
    dz = radius * np.exp(1j * rng)
    vals = fn(pole + dz)
    basis = np.stack([1.0 / dz, np.ones_like(dz), dz], axis=1)
    coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    return complex(coef[0])


def mittag_leffler_approx(pole_set: PoleSet, observable, theta,
                          value_at_zero: complex | None = None,
                          include_mirror: bool = True):
    """Truncated pole expansion f(0) + sum Res (1/theta0 + 1/(theta-theta0)).

    `observable` is the name keyed in the pole set's residues.  With
    `include_mirror`, the mirror poles (-theta0, -Res) implied by evenness
    are summed as well.  `value_at_zero` defaults to 0; pass the directly
    evaluated small-angle limit for an absolute approximation.
    """
    theta = np.asarray(theta, dtype=complex)
    res = pole_set.residue(observable)
    poles = pole_set.poles
    if include_mirror:
        poles = np.concatenate([poles, -poles])
        res = np.concatenate([res, -res])
    base = 0.0 if value_at_zero is None else value_at_zero
    terms = res * (1.0 / poles + 1.0 / (theta[..., None] - poles))
    return base + terms.sum(axis=-1)


@dataclass(frozen=True)
class CircleFit:
    center: complex
    radius: float
    residual: float  # rms radial misfit relative to the radius

    @property
    def is_single_mode(self) -> bool:
        return self.residual < 0.05


def single_mode_circle_fit(samples) -> CircleFit:
    """Least-squares circle through a complex-plane trajectory.

    A trajectory governed by a single pole, C + R/(theta - theta0) over real
    theta, is an exact circle; the relative residual measures how well one
    isolated mode describes the sweep.
    """
    z = np.asarray(samples, dtype=complex).ravel()
    if z.size < 4:
        raise ValueError("need at least 4 samples for a circle fit")
    x, y = z.real, z.imag
    a = np.stack([2 * x, 2 * y, np.ones_like(x)], axis=1)
    b = x * x + y * y
    coef, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3:
        raise ValueError("degenerate (collinear) samples: no circle fit")
    cx, cy, c0 = coef
    r2 = c0 + cx * cx + cy * cy
    if r2 <= 0:
        raise ValueError("degenerate circle fit")
    radius = float(np.sqrt(r2))
    center = complex(cx, cy)
    misfit = np.abs(np.abs(z - center) - radius)
    return CircleFit(center, radius, float(np.sqrt(np.mean(misfit ** 2)) / radius))
