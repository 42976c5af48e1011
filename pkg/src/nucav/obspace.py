"""Accessible observable spaces over cavity parameterizations.

A parameterization fixes the material sequence of a stack and frees chosen
layer thicknesses and, optionally, the grazing angle.  Any combination of
named scalar observables of the resulting level scheme (couplings, rates,
field quadratures, eigenvalues, scaled-weight difference, background) spans
an observables space; `sample_os` covers it with quasi-random interior
samples plus boundary refinement along random directions, and `os_boundary`
extracts a concave (alpha-shape) outline of a 2D or 3D projection.

All evaluation is vectorized over samples; a fixed seed reproduces the
sample set bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import differential_evolution
from scipy.spatial import Delaunay, QhullError
from scipy.stats import qmc

from .ensemble import ResonantLayerSet, scheme_from_solution
from .stratified import HC_EV_NM, CavityStack, IncidenceGeometry, StackSolution

__all__ = [
    "FreeThickness",
    "FreeAngle",
    "CavityParameterization",
    "OBSERVABLES",
    "OSSamples",
    "sample_os",
    "os_boundary",
    "angle_trajectory",
    "Boundary",
]

OBSERVABLE_CAP = 1e4  # |observable| cap (units of gamma0) near exceptional points


@dataclass(frozen=True)
class FreeThickness:
    layer: int
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise ValueError("thickness bounds must satisfy 0 <= lo < hi < inf")


@dataclass(frozen=True)
class FreeAngle:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi < 0.1):
            raise ValueError("angle bounds must satisfy 0 < lo < hi < 0.1 rad")


@dataclass(frozen=True)
class CavityParameterization:
    """Template stack with free thicknesses and (optionally) a free angle."""

    template: CavityStack
    resonant: ResonantLayerSet
    parameters: tuple  # FreeThickness | FreeAngle entries
    theta: float | None = None  # fixed angle when no FreeAngle is present
    photon_energy: float = 14412.5

    def __post_init__(self):
        angles = [p for p in self.parameters if isinstance(p, FreeAngle)]
        if len(angles) > 1:
            raise ValueError("at most one free angle")
        if not angles and self.theta is None:
            raise ValueError("either free the angle or fix theta")
        res_idx = set(self.resonant.indices)
        for p in self.parameters:
            if isinstance(p, FreeThickness):
                if not 0 <= p.layer < len(self.template.layers):
                    raise ValueError(f"free thickness layer {p.layer} out of range")
                if p.layer in res_idx:
                    raise ValueError("resonant layer thicknesses are fixed by the species")

    @property
    def dim(self) -> int:
        return len(self.parameters)

    def bounds(self) -> np.ndarray:
        return np.array([[p.lo, p.hi] for p in self.parameters])

    def thicknesses_for(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = np.broadcast_to(self.template.thicknesses, x.shape[:-1] + (len(self.template.layers),)).copy()
        for j, p in enumerate(self.parameters):
            if isinstance(p, FreeThickness):
                d[..., p.layer] = x[..., j]
        return d

    def theta_for(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        for j, p in enumerate(self.parameters):
            if isinstance(p, FreeAngle):
                return x[..., j]
        return np.broadcast_to(self.theta, x.shape[:-1])

    def realize(self, x) -> tuple[CavityStack, IncidenceGeometry]:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("realize takes a single parameter point")
        stack = self.template.with_thicknesses(self.thicknesses_for(x))
        return stack, IncidenceGeometry(float(self.theta_for(x)), self.photon_energy)

    def evaluate(self, x) -> dict:
        """Level-scheme ingredient arrays for a batch of parameter points."""
        x = np.asarray(x, dtype=float)
        d = self.thicknesses_for(x)
        theta = self.theta_for(x)
        k = 2.0 * math.pi * self.photon_energy / HC_EV_NM
        q2 = (k * np.sin(theta)) ** 2 + 0j
        sol = StackSolution(self.template.index_squared(), d, k, q2)
        gamma0 = self.resonant.species[0].gamma0
        return scheme_from_solution(sol, self.resonant, d, gamma0)


# -- named scalar observables over the batch ingredient dict --

def _eig2(parts):
    m = parts["matrix"]
    e1, e2, e12 = m[..., 0, 0], m[..., 1, 1], m[..., 0, 1]
    mean = 0.5 * (e1 + e2)
    root = 0.5 * np.sqrt((e1 - e2) ** 2 + 4.0 * e12 ** 2)
    return mean - root, mean + root


def _weights2(parts):
    """Reflection weights of the two eigenmodes, batch closed form."""
    m = parts["matrix"]
    lam1, lam2 = _eig2(parts)
    e1, e12 = m[..., 0, 0], m[..., 0, 1]
    e2 = m[..., 1, 1]

    def eigvec(lam):
        # (e12, lam - e1) and (lam - e2, e12) are parallel; take the larger
        v_a = np.stack([e12, lam - e1], axis=-1)
        v_b = np.stack([lam - e2, e12], axis=-1)
        use_a = (np.abs(v_a) ** 2).sum(-1) >= (np.abs(v_b) ** 2).sum(-1)
        v = np.where(use_a[..., None], v_a, v_b)
        return v / np.sqrt((np.abs(v) ** 2).sum(-1))[..., None]

    v1, v2 = eigvec(lam1), eigvec(lam2)
    s = np.stack([v1, v2], axis=-1)  # columns are eigenvectors
    det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
    cr, dv = parts["coupling_refl"], parts["drive"]
    cs1 = cr[..., 0] * s[..., 0, 0] + cr[..., 1] * s[..., 1, 0]
    cs2 = cr[..., 0] * s[..., 0, 1] + cr[..., 1] * s[..., 1, 1]
    sd1 = (s[..., 1, 1] * dv[..., 0] - s[..., 0, 1] * dv[..., 1]) / det
    sd2 = (-s[..., 1, 0] * dv[..., 0] + s[..., 0, 0] * dv[..., 1]) / det
    return lam1, lam2, 1j * cs1 * sd1, 1j * cs2 * sd2


def _scaled_weight_difference(parts):
    lam1, lam2, w1, w2 = _weights2(parts)
    g1 = np.abs(w1) / (lam1.imag + 0.5)
    g2 = np.abs(w2) / (lam2.imag + 0.5)
    return g1 - g2


OBSERVABLES: dict[str, Callable[[dict], np.ndarray]] = {
    "cls1": lambda p: -p["matrix"][..., 0, 0].real,
    "cls2": lambda p: -p["matrix"][..., 1, 1].real,
    "sr1": lambda p: 2.0 * p["matrix"][..., 0, 0].imag,
    "sr2": lambda p: 2.0 * p["matrix"][..., 1, 1].imag,
    "d12": lambda p: p["matrix"][..., 0, 1].real,
    "g12": lambda p: 2.0 * p["matrix"][..., 0, 1].imag,
    # couplings and rates scaled by either excited state's total decay rate
    "d12_s1": lambda p: p["matrix"][..., 0, 1].real / (2 * p["matrix"][..., 0, 0].imag + 1),
    "g12_s1": lambda p: 2 * p["matrix"][..., 0, 1].imag / (2 * p["matrix"][..., 0, 0].imag + 1),
    "d12_s2": lambda p: p["matrix"][..., 0, 1].real / (2 * p["matrix"][..., 1, 1].imag + 1),
    "g12_s2": lambda p: 2 * p["matrix"][..., 0, 1].imag / (2 * p["matrix"][..., 1, 1].imag + 1),
    "rate21": lambda p: (2 * p["matrix"][..., 1, 1].imag + 1) / (2 * p["matrix"][..., 0, 0].imag + 1),
    "rate12": lambda p: (2 * p["matrix"][..., 0, 0].imag + 1) / (2 * p["matrix"][..., 1, 1].imag + 1),
    "re_field1": lambda p: p["rabi"][..., 0].real,
    "im_field1": lambda p: p["rabi"][..., 0].imag,
    "re_field2": lambda p: p["rabi"][..., 1].real,
    "im_field2": lambda p: p["rabi"][..., 1].imag,
    "re_lam1": lambda p: _eig2(p)[0].real,
    "im_lam1": lambda p: _eig2(p)[0].imag,
    "re_lam2": lambda p: _eig2(p)[1].real,
    "im_lam2": lambda p: _eig2(p)[1].imag,
    "im_lam_max": lambda p: np.maximum(_eig2(p)[0].imag, _eig2(p)[1].imag),
    "wdiff": _scaled_weight_difference,
    "rel": lambda p: np.abs(p["r_el"]),
}


def evaluate_observables(parts: dict, names: Sequence[str]) -> np.ndarray:
    cols = []
    for name in names:
        if name not in OBSERVABLES:
            raise ValueError(f"unknown observable {name!r}")
        cols.append(np.asarray(OBSERVABLES[name](parts), dtype=float))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class OSSamples:
    names: tuple[str, ...]
    params: np.ndarray        # (S, P)
    observables: np.ndarray   # (S, K), capped
    capped: np.ndarray        # (S,) bool, any component hit the cap
    seed: int
    budget_used: int

    def __len__(self):
        return len(self.params)

    def column(self, name: str) -> np.ndarray:
        return self.observables[:, self.names.index(name)]

    def projection(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.names.index(n) for n in names]
        return self.observables[:, idx]


def _cap(arr):
    capped = np.any(~np.isfinite(arr) | (np.abs(arr) > OBSERVABLE_CAP), axis=-1)
    safe = np.nan_to_num(arr, nan=0.0, posinf=OBSERVABLE_CAP, neginf=-OBSERVABLE_CAP)
    return np.clip(safe, -OBSERVABLE_CAP, OBSERVABLE_CAP), capped


def sample_os(parameterization: CavityParameterization, observables: Sequence[str],
              budget: int, seed: int = 0, n_directions: int | None = None,
              interior_fraction: float = 0.5) -> OSSamples:
    """Cover the observables space with `budget` scheme evaluations.

    Quasi-random (Sobol) interior samples plus boundary refinement: random
    unit directions in observable space (always including the +/- coordinate
    axes) are each pushed outward by a small bounded derivative-free
    evolution whose starting population is the best, mutually separated
    interior samples.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    names = tuple(observables)
    k = len(names)
    rng = np.random.default_rng(seed)
    bounds = parameterization.bounds()
    span = bounds[:, 1] - bounds[:, 0]

    n_interior = max(1, int(budget * interior_fraction))
    m = max(0, int(math.floor(math.log2(n_interior))))
    sob = qmc.Sobol(d=parameterization.dim, scramble=True, seed=int(rng.integers(2**31)))
    unit = sob.random_base2(m) if m > 0 else np.full((1, parameterization.dim), 0.5)
    xs = bounds[:, 0] + unit * span
    parts = parameterization.evaluate(xs)
    obs, capped = _cap(evaluate_observables(parts, names))
    all_x, all_obs, all_cap = [xs], [obs], [capped]
    used = len(xs)

    remaining = budget - used
    if n_directions is None:
        n_directions = max(2 * k, 8)
    if remaining > n_directions:
        dirs = [np.eye(k)[j] * s for j in range(k) for s in (+1.0, -1.0)]
        while len(dirs) < n_directions:
            v = rng.normal(size=k)
            dirs.append(v / np.linalg.norm(v))
        dirs = dirs[:n_directions]
        per_push = remaining // len(dirs)
        n_pop = max(8, 2 * parameterization.dim)

        def seeds_for(score):
            # best interior points, mutually separated, as the push population
            order = np.argsort(-score)
            chosen: list[np.ndarray] = []
            for idx in order:
                x = xs[idx]
                if all(np.max(np.abs(x - c) / span) > 0.02 for c in chosen):
                    chosen.append(x)
                if len(chosen) == n_pop:
                    break
            while len(chosen) < n_pop:
                chosen.append(bounds[:, 0] + rng.random(parameterization.dim) * span)
            return np.array(chosen)

        for w in dirs:
            if per_push < 4 * n_pop:
                break
            trace_x, trace_o, trace_c = [], [], []

            def neg(x2d):
                x2d = np.atleast_2d(np.asarray(x2d, dtype=float).T)
                parts = parameterization.evaluate(x2d)
                oo, cc = _cap(evaluate_observables(parts, names))
                trace_x.append(x2d)
                trace_o.append(oo)
                trace_c.append(cc)
                out = -(oo @ w)
                return out if x2d.shape[0] > 1 else float(out[0])

            differential_evolution(
                neg, bounds, popsize=n_pop, init=seeds_for(obs @ w), polish=False,
                maxiter=max(2, per_push // n_pop - 2), tol=1e-10,
                vectorized=True, updating="deferred",
                seed=int(rng.integers(2 ** 31)))
            all_x.append(np.concatenate(trace_x))
            all_obs.append(np.concatenate(trace_o))
            all_cap.append(np.concatenate(trace_c))
            used += len(all_x[-1])

    return OSSamples(names=names, params=np.concatenate(all_x),
                     observables=np.concatenate(all_obs),
                     capped=np.concatenate(all_cap), seed=seed, budget_used=used)


def angle_trajectory(stack: CavityStack, resonant: ResonantLayerSet,
                     observables: Sequence[str], theta_grid,
                     photon_energy: float = 14412.5) -> np.ndarray:
    """Observable-vector polyline over a grazing-angle sweep for one stack."""
    names = tuple(observables)
    thetas = np.asarray(theta_grid, dtype=float)
    k = 2.0 * math.pi * photon_energy / HC_EV_NM
    sol = StackSolution(stack.index_squared(), stack.thicknesses, k,
                        (k * np.sin(thetas)) ** 2 + 0j)
    parts = scheme_from_solution(sol, resonant, stack.thicknesses,
                                 resonant.species[0].gamma0)
    out, _ = _cap(evaluate_observables(parts, names))
    return out


@dataclass(frozen=True)
class Boundary:
    """Alpha-shape outline of a projected sample cloud."""

    names: tuple[str, ...]
    points: np.ndarray            # (S, dim) the projected cloud
    simplices: np.ndarray         # kept triangles (2D) or tetrahedra (3D)
    edges: np.ndarray             # boundary edges (2D) or faces (3D), index pairs/triples
    alpha_radius: float
    degenerate: bool = False
    scale: np.ndarray = field(default_factory=lambda: np.ones(2))

    @property
    def area(self) -> float:
        """Total area (2D) of the kept alpha complex."""
        if self.degenerate or self.points.shape[1] != 2:
            return 0.0
        p = self.points[self.simplices]
        u, v = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return float(np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]).sum() / 2.0)

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Membership of points in the kept 2D alpha complex (with margin tol,
        in normalized units of the cloud scale).

        A containing triangle's centroid lies within its circumradius of the
        point, so a KD-tree radius query prunes the candidate triangles.
        """
        if self.degenerate or self.points.shape[1] != 2:
            raise ValueError("containment test requires a 2D non-degenerate boundary")
        from scipy.spatial import cKDTree

        pts = np.asarray(pts, dtype=float)
        tri = self.points[self.simplices] / self.scale
        q = pts / self.scale
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        centroids = tri.mean(axis=1)
        tree = cKDTree(centroids)
        reach = self.alpha_radius * (1.0 + tol) + 1e-12
        inside = np.zeros(len(q), dtype=bool)
        for i, point in enumerate(q):
            cand = tree.query_ball_point(point, reach)
            if not cand:
                continue
            cand = np.asarray(cand)
            aa, bb, cc, dd = a[cand], b[cand], c[cand], det[cand]
            u = ((point[0] - aa[:, 0]) * (cc[:, 1] - aa[:, 1])
                 - (point[1] - aa[:, 1]) * (cc[:, 0] - aa[:, 0])) / dd
            v = ((bb[:, 0] - aa[:, 0]) * (point[1] - aa[:, 1])
                 - (bb[:, 1] - aa[:, 1]) * (point[0] - aa[:, 0])) / dd
            inside[i] = bool(np.any((u >= -tol) & (v >= -tol) & (u + v <= 1 + tol)))
        return inside

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.names),
            "points": self.points.tolist(),
            "simplices": self.simplices.tolist(),
            "boundary": self.edges.tolist(),
            "alpha_radius": self.alpha_radius,
            "degenerate": self.degenerate,
        }


def os_boundary(samples: OSSamples, projection: Sequence[str],
                alpha_radius: float | None = None) -> Boundary:
    """Concave (alpha-shape) boundary of a 2D or 3D projection of the cloud.

    Coordinates are normalized per axis before triangulation; the default
    alpha radius is a multiple of the typical nearest-neighbor spacing.
    """
    names = tuple(projection)
    if len(names) not in (2, 3):
        raise ValueError("projection must name 2 or 3 observables")
    pts = samples.projection(names)[~samples.capped]
    if len(pts) < 10:
        raise ValueError("need at least 10 uncapped samples")
    scale = pts.std(axis=0)
    scale[scale == 0] = 1.0
    norm = pts / scale
    try:
        tri = Delaunay(norm)
    except QhullError:
        order = np.argsort(pts[:, 0])
        return Boundary(names, pts[order], np.empty((0, len(names) + 1), int),
                        np.empty((0, len(names)), int), 0.0, degenerate=True,
                        scale=scale)

    if alpha_radius is None:
        # sparse-region spacing: high percentile of per-simplex shortest edges
        # (robust against locally clustered samples from the boundary pushes)
        simplex_pts = norm[tri.simplices]
        edge = np.inf * np.ones(len(simplex_pts))
        for i, j in ((0, 1), (1, 2), (0, 2)):
            edge = np.minimum(edge, np.linalg.norm(simplex_pts[:, i] - simplex_pts[:, j], axis=1))
        alpha_radius = 3.0 * float(np.percentile(edge, 90))

    keep = _circumradius(norm, tri.simplices) <= alpha_radius
    simplices = tri.simplices[keep]
    faces: dict[tuple, int] = {}
    nd = len(names)
    for simplex in simplices:
        for drop in range(nd + 1):
            face = tuple(sorted(np.delete(simplex, drop)))
            faces[face] = faces.get(face, 0) + 1
    boundary = np.array([f for f, cnt in faces.items() if cnt == 1], dtype=int)
    return Boundary(names, pts, simplices, boundary, float(alpha_radius), scale=scale)


def _circumradius(pts, simplices):
    p = pts[simplices]
    if pts.shape[1] == 2:
        a = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
        s = 0.5 * (a + b + c)
        area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 1e-300))
        return a * b * c / (4.0 * area)
    # 3D: circumcenter c solves 2 (p_j - a) . c = |p_j|^2 - |a|^2 per vertex
    a = p[:, 0]
    mat = 2.0 * (p[:, 1:] - a[:, None, :])
    rhs = (np.einsum("ijk,ijk->ij", p[:, 1:], p[:, 1:])
           - np.einsum("ik,ik->i", a, a)[:, None])
    r = np.full(len(p), np.inf)
    for i in range(len(p)):
        try:
            center = np.linalg.solve(mat[i], rhs[i])
        except np.linalg.LinAlgError:
            continue
        r[i] = float(np.linalg.norm(center - a[i]))
    return r
