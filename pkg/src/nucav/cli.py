"""Command-line interface: one subcommand per config command block.

Every run writes its artifacts into one output directory together with a
manifest (config hash, versions, seed, artifact list).  Outputs are
deterministic for a fixed config and seed: no timestamps, fixed float
formatting, RFC-4180 CSV.  Solver failures produce a machine-readable
error.json and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .design import (EITGoal, SpectralGoal, design_eit, design_spectrum)
from .ensemble import derive_level_scheme
from .obspace import (CavityParameterization, FreeAngle, FreeThickness,
                      os_boundary, sample_os)
from .poles import Window, find_poles
from .spectra import eigen_decompose, reflectance, susceptibility, transmittance
from .stratified import IncidenceGeometry, rocking_curve

FMT = "%.12g"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nucav",
                                     description="thin-film x-ray cavity design toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True, help="TOML or JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name in ("os", "design-eit", "design-spectrum"):
            p.add_argument("--max-cladding", type=float, default=None,
                           help="cap the top-cladding free-thickness bound (nm)")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if config.command != args.command:
        print(f"config declares a '{config.command}' block, not '{args.command}'",
              file=sys.stderr)
        return 2
    if args.seed is not None:
        config = _replace(config, seed=args.seed)
    if args.out is not None:
        config = _replace(config, output=args.out)
    cap = getattr(args, "max_cladding", None)
    if cap is not None:
        config = _apply_cladding_cap(config, cap)

    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    try:
        outputs, summary = run_command(config, out)
    except Exception as exc:  # noqa: BLE001 - surfaced as machine-readable error
        payload = {"error": type(exc).__name__, "message": str(exc)}
        (out / "error.json").write_text(json.dumps(payload, indent=1), encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(config, out, outputs)
    print(summary)
    return 0


def _replace(config: RunConfig, **kw) -> RunConfig:
    from dataclasses import replace

    return replace(config, **kw)


def _apply_cladding_cap(config: RunConfig, cap: float) -> RunConfig:
    params = config.options.get("parameters")
    if not params:
        raise SystemExit("--max-cladding requires a command with free parameters")
    new = []
    hit = False
    for p in params:
        if p.get("kind") == "thickness" and p.get("layer") == 0:
            p = {**p, "max": min(float(p["max"]), cap), "min": min(float(p["min"]), cap)}
            hit = True
        new.append(p)
    if not hit:
        raise SystemExit("--max-cladding: no free thickness for layer 0 in the config")
    options = {**config.options, "parameters": new}
    return _replace(config, options=options)


def run_command(config: RunConfig, out: Path) -> tuple[list[str], str]:
    """Execute the configured pipeline; returns (artifact names, summary text)."""
    handler = {
        "spectrum": _run_spectrum,
        "levelscheme": _run_levelscheme,
        "rocking": _run_rocking,
        "poles": _run_poles,
        "os": _run_os,
        "design-eit": _run_design_eit,
        "design-spectrum": _run_design_spectrum,
    }[config.command]
    return handler(config, out)


# -- artifact helpers --

def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)  # RFC-4180 line endings
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([FMT % v for v in row])


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def _write_manifest(config: RunConfig, out: Path, outputs: list[str]):
    digest = hashlib.sha256(config.to_json().encode("utf-8")).hexdigest()
    import scipy

    _write_json(out / "manifest.json", {
        "command": config.command,
        "config_sha256": digest,
        "seed": config.seed,
        "versions": {"nucav": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": sorted(outputs),
    })


def _spectrum_csv(out: Path, name: str, x, r, t) -> str:
    _write_csv(out / name, ["detuning", "re_r", "im_r", "r2", "re_t", "im_t", "t2"],
               [x, r.real, r.imag, np.abs(r) ** 2, t.real, t.imag, np.abs(t) ** 2])
    return name


def _family(config: RunConfig) -> CavityParameterization:
    entries = []
    for p in config.options["parameters"]:
        if p["kind"] == "thickness":
            entries.append(FreeThickness(int(p["layer"]), float(p["min"]), float(p["max"])))
        else:
            entries.append(FreeAngle(float(p["min_mrad"]) * 1e-3, float(p["max_mrad"]) * 1e-3))
    return CavityParameterization(config.stack, config.resonant, tuple(entries))


def _stack_lines(stack) -> str:
    seq = "/".join(f"{lay.material.name}({lay.thickness:g})" for lay in stack.layers)
    return f"{stack.top.name} | {seq} | {stack.bottom.name}"


# -- command implementations --

def _run_spectrum(config: RunConfig, out: Path):
    theta = config.options["theta_mrad"] * 1e-3
    lo, hi = config.options["detuning"]
    x = np.linspace(lo, hi, config.options["points"])
    geom = IncidenceGeometry(theta, config.resonant.species[0].transition_energy)
    scheme = derive_level_scheme(config.stack, geom, config.resonant)
    r = reflectance(scheme, x)
    t = transmittance(scheme, x)
    d = eigen_decompose(scheme)
    outputs = [_spectrum_csv(out, "spectrum.csv", x, r, t)]
    _write_json(out / "levelscheme.json", scheme.to_json_dict())
    _write_json(out / "decomposition.json", {
        "eigenvalues": _c(d.eigenvalues),
        "weights_refl": _c(d.weights_refl),
        "weights_trans": _c(d.weights_trans),
        "condition_number": d.condition_number,
        "r_el": _c(d.r_el), "t_el": _c(d.t_el),
    })
    outputs += ["levelscheme.json", "decomposition.json"]
    r2 = np.abs(r) ** 2
    lam = np.sort_complex(d.eigenvalues)
    summary = "\n".join([
        f"spectrum: {_stack_lines(config.stack)} at {theta * 1e3:g} mrad",
        f"  level scheme (gamma0 units): shifts {np.round(-scheme.matrix.diagonal().real, 3)}"
        f" rates {np.round(scheme.superradiance, 3)}",
        f"  eigenvalues: " + ", ".join(f"{v:.3g}" for v in lam),
        f"  |r|^2 range [{r2.min():.4f}, {r2.max():.4f}], background {abs(scheme.r_el) ** 2:.4f}",
    ])
    return outputs, summary


def _run_levelscheme(config: RunConfig, out: Path):
    theta = config.options["theta_mrad"] * 1e-3
    geom = IncidenceGeometry(theta, config.resonant.species[0].transition_energy)
    scheme = derive_level_scheme(config.stack, geom, config.resonant)
    _write_json(out / "levelscheme.json", scheme.to_json_dict())
    lines = [f"level scheme: {_stack_lines(config.stack)} at {theta * 1e3:g} mrad",
             "  matrix (gamma0 units):"]
    for row in scheme.matrix:
        lines.append("    " + "  ".join(f"{v.real:+.3f}{v.imag:+.3f}i" for v in row))
    lines.append("  drive: " + "  ".join(f"{v:+.3f}" for v in scheme.rabi))
    return ["levelscheme.json"], "\n".join(lines)


def _run_rocking(config: RunConfig, out: Path):
    lo, hi = config.options["theta_mrad"]
    thetas = np.linspace(lo * 1e-3, hi * 1e-3, config.options["points"])
    curve = rocking_curve(config.stack, thetas,
                          config.resonant.species[0].transition_energy)
    _write_csv(out / "rocking.csv", ["theta_mrad", "reflectivity"],
               [thetas * 1e3, curve])
    interior = (curve[1:-1] < curve[:-2]) & (curve[1:-1] < curve[2:])
    minima = thetas[1:-1][interior] * 1e3
    summary = (f"rocking curve: {_stack_lines(config.stack)}\n"
               f"  minima (mrad): {np.round(minima, 4).tolist()}")
    return ["rocking.csv"], summary


def _run_poles(config: RunConfig, out: Path):
    w = config.options["window_mrad"]
    window = Window(w[0] * 1e-3, w[1] * 1e-3, w[2] * 1e-3, w[3] * 1e-3)
    n_re, n_im = config.options["grid"]
    names = tuple(config.options["observables"])
    ps = find_poles(config.stack, config.resonant, window,
                    photon_energy=config.resonant.species[0].transition_energy,
                    observable=names[0], residue_observables=names,
                    n_re=n_re, n_im=n_im)
    _write_json(out / "poles.json", ps.to_json_dict())
    summary = (f"poles: {len(ps)} in window {w} mrad\n  "
               + ", ".join(f"{p * 1e3:.4f}" for p in ps.poles))
    return ["poles.json"], summary


def _run_os(config: RunConfig, out: Path):
    family = _family(config)
    names = tuple(config.options["observables"])
    samples = sample_os(family, names, config.options["budget"], seed=config.seed)
    cols = [samples.params[:, j] for j in range(samples.params.shape[1])]
    cols += [samples.observables[:, j] for j in range(len(names))]
    cols += [samples.capped.astype(float)]
    header = [f"p{j}" for j in range(samples.params.shape[1])] + list(names) + ["capped"]
    _write_csv(out / "os.csv", header, cols)
    outputs = ["os.csv"]
    projection = config.options.get("projection") or list(names[:2])
    summary_extra = ""
    if len(names) >= 2:
        hull = os_boundary(samples, tuple(projection))
        _write_json(out / "os_boundary.json", hull.to_json_dict())
        outputs.append("os_boundary.json")
        summary_extra = f"\n  boundary simplices: {len(hull.simplices)} (area {hull.area:.4g})"
    ranges = {n: (float(samples.column(n).min()), float(samples.column(n).max()))
              for n in names}
    summary = (f"observable space: {samples.budget_used} evaluations\n  ranges: "
               + ", ".join(f"{n} in [{a:.3g}, {b:.3g}]" for n, (a, b) in ranges.items())
               + summary_extra)
    return outputs, summary


def _run_design_eit(config: RunConfig, out: Path):
    family = _family(config)
    o = config.options
    goal = EITGoal(metastable=int(o["metastable"]), margin=float(o["margin"]),
                   max_cross_damping=float(o["max_cross_damping"]),
                   min_rabi_suppression=float(o["min_rabi_suppression"]),
                   include_incoherent=bool(o["include_incoherent"]))
    result = design_eit(family, goal, o["budget"], seed=config.seed)
    outputs = _design_bundle(config, out, result)
    scheme = derive_level_scheme(result.stack, IncidenceGeometry(result.theta),
                                 config.resonant)
    x = np.linspace(-25.0, 25.0, 1001)
    chi = susceptibility(scheme, x, probe_index=1 - goal.metastable)
    _write_csv(out / "susceptibility.csv", ["detuning", "re_chi", "im_chi"],
               [x, chi.real, chi.imag])
    outputs.append("susceptibility.csv")
    rep = result.report
    summary = "\n".join([
        f"transparency design ({'feasible' if result.feasible else 'INFEASIBLE'})",
        f"  best stack: {_stack_lines(result.stack)} at {result.theta * 1e3:.4f} mrad",
        f"  chain: {np.round(rep.chain, 2).tolist()}  margins {np.round(rep.chain_margins, 2).tolist()}",
        f"  probe isolation {rep.rabi_suppression:.1f}, cross damping {rep.cross_damping_ratio:.3f}",
        f"  transparency floor Im chi = {result.metrics['min_im_chi_center']:.3f}",
    ])
    return outputs, summary


def _run_design_spectrum(config: RunConfig, out: Path):
    family = _family(config)
    o = config.options
    shift = o["shift"]
    goal = SpectralGoal(separation=float(o["separation"]), alpha=float(o["alpha"]),
                        shift=None if shift != shift else float(shift),
                        weights=tuple(o["weights"]) if o["weights"] else
                        SpectralGoal(separation=0.0).weights)
    result = design_spectrum(family, goal, o["budget"], seed=config.seed)
    outputs = _design_bundle(config, out, result)
    summary = "\n".join([
        f"spectral design: target separation {goal.separation:g} (alpha {goal.alpha:g})",
        f"  best stack: {_stack_lines(result.stack)} at {result.theta * 1e3:.4f} mrad",
        f"  achieved mode separation {result.metrics['mode_separation']:.3f},"
        f" center shift {result.metrics['mode_center']:.3f}",
        f"  cost {result.value:.4f} after {result.n_evaluations} evaluations",
    ])
    return outputs, summary


def _design_bundle(config: RunConfig, out: Path, result) -> list[str]:
    _write_json(out / "design_result.json", result.to_json_dict())
    _write_csv(out / "cost_trace.csv", ["evaluation", "cost"],
               [np.arange(len(result.trace_values), dtype=float), result.trace_values])
    scheme = derive_level_scheme(result.stack, IncidenceGeometry(result.theta),
                                 config.resonant)
    x = np.linspace(-40.0, 40.0, 2001)
    r = reflectance(scheme, x)
    t = transmittance(scheme, x)
    return ["design_result.json", "cost_trace.csv",
            _spectrum_csv(out, "spectrum.csv", x, r, t)]


def _c(arr):
    arr = np.asarray(arr)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


if __name__ == "__main__":
    sys.exit(main())
