"""Run configuration: parsing, validation, and round-tripping.

A run is described by a TOML (or equivalent JSON) document with a stack
table, optional species overrides, and exactly one command block.  Angles
are milliradians, thicknesses nanometers, detunings and rates in units of
the bare linewidth.  Validation is eager and collects every problem it can
find before failing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ensemble import SPECIES, NuclearSpecies, ResonantLayerSet
from .materials import Material, builtin_materials, load_materials
from .stratified import CavityStack

try:
    import tomllib  # python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

COMMANDS = ("spectrum", "levelscheme", "rocking", "poles", "os",
            "design-eit", "design-spectrum")

_REQUIRED = object()

# per-command option names with defaults
_OPTION_SCHEMAS: dict[str, dict] = {
    "spectrum": {"theta_mrad": _REQUIRED, "detuning": [-20.0, 20.0], "points": 2001},
    "levelscheme": {"theta_mrad": _REQUIRED},
    "rocking": {"theta_mrad": [1.0, 6.0], "points": 2001},
    "poles": {"window_mrad": [2.0, 4.6, -0.5, 0.0],
              "observables": ["coupling", "shift1", "shift2"],
              "grid": [601, 61]},
    "os": {"observables": ["d12", "g12"], "budget": 20000,
           "parameters": _REQUIRED, "projection": []},
    "design-eit": {"metastable": 0, "margin": 1.2, "max_cross_damping": 0.25,
                   "min_rabi_suppression": 10.0, "include_incoherent": False,
                   "budget": 10000, "parameters": _REQUIRED},
    "design-spectrum": {"separation": _REQUIRED, "alpha": 0.0, "shift": float("nan"),
                        "weights": [], "budget": 8000, "parameters": _REQUIRED},
}


class ConfigError(ValueError):
    """Invalid run configuration; carries every detected problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class RunConfig:
    stack: CavityStack
    resonant: ResonantLayerSet
    command: str
    options: dict
    seed: int = 0
    output: str = "run-output"
    materials_path: str | None = None
    raw: dict = field(default_factory=dict)

    def to_json(self, **kwargs) -> str:
        """Serialize to the equivalent JSON config (lossless round trip)."""
        return json.dumps(self.raw, sort_keys=True, **kwargs)


def load_config(path) -> RunConfig:
    """Read and validate a TOML or JSON run configuration."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"])
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"])
    return parse_config(doc, base=path.parent)


def parse_config(doc: dict, base: Path | None = None) -> RunConfig:
    problems: list[str] = []
    base = Path(".") if base is None else base

    materials_path = doc.get("materials")
    energy = None
    species_over = doc.get("species", {})
    if not isinstance(species_over, dict):
        problems.append("species: must be a table of per-species overrides")
        species_over = {}
    species_reg = dict(SPECIES)
    for name, over in species_over.items():
        basesp = species_reg.get(name, NuclearSpecies(name=name))
        fields = {}
        for key, attr in (("strength", "strength"), ("out_norm", "out_norm"),
                          ("gamma0_eV", "gamma0"), ("transition_energy_eV", "transition_energy")):
            if key in over:
                fields[attr] = float(over[key])
        unknown = set(over) - {"strength", "out_norm", "gamma0_eV", "transition_energy_eV"}
        if unknown:
            problems.append(f"species.{name}: unknown keys {sorted(unknown)}")
        try:
            species_reg[name] = replace(basesp, **fields)
        except ValueError as exc:
            problems.append(f"species.{name}: {exc}")

    energy = next(iter(species_reg.values())).transition_energy if species_reg else 14412.5
    try:
        if materials_path:
            table = load_materials(base / materials_path, energy)
        else:
            table = builtin_materials(energy)
    except Exception as exc:
        problems.append(f"materials: {exc}")
        table = {"vacuum": Material("vacuum", 0.0, 0.0)}

    stack_doc = doc.get("stack")
    stack = None
    resonant = None
    if not isinstance(stack_doc, dict):
        problems.append("stack: required table missing")
    else:
        layers = stack_doc.get("layers")
        pairs = []
        if not isinstance(layers, list) or not layers:
            problems.append("stack.layers: required non-empty array of [material, thickness_nm]")
        else:
            for i, entry in enumerate(layers):
                if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
                    problems.append(f"stack.layers[{i}]: expected [material, thickness_nm]")
                    continue
                name, thickness = entry
                if name not in table:
                    problems.append(
                        f"stack.layers[{i}]: unknown material {name!r};"
                        f" available: {', '.join(sorted(table))}")
                    continue
                try:
                    pairs.append((table[name], float(thickness), str(name)))
                except (TypeError, ValueError):
                    problems.append(f"stack.layers[{i}]: bad thickness {thickness!r}")
        halves = {}
        for side in ("top", "bottom"):
            name = stack_doc.get(side, "vacuum")
            if name not in table:
                problems.append(f"stack.{side}: unknown material {name!r};"
                                f" available: {', '.join(sorted(table))}")
                name = "vacuum"
            halves[side] = table[name]
        if pairs and not problems:
            try:
                stack = CavityStack.from_pairs([(m, t) for m, t, _ in pairs],
                                               top=halves["top"], bottom=halves["bottom"])
            except ValueError as exc:
                problems.append(f"stack: {exc}")
        if stack is not None:
            indices = stack_doc.get("resonant")
            if indices is None:
                indices = [i for i, (_, _, name) in enumerate(pairs) if name in species_reg]
            if not indices:
                problems.append("stack.resonant: no resonant layers (none match a known species)")
            else:
                try:
                    specs = tuple(species_reg.get(pairs[i][2], next(iter(species_reg.values())))
                                  for i in indices)
                    resonant = ResonantLayerSet.for_stack(stack, indices, specs)
                except (ValueError, IndexError) as exc:
                    problems.append(f"stack.resonant: {exc}")

    present = [c for c in COMMANDS if c in doc]
    command, options = None, {}
    if len(present) != 1:
        problems.append(
            f"exactly one command block required ({', '.join(COMMANDS)});"
            f" found {present or 'none'}")
    else:
        command = present[0]
        schema = _OPTION_SCHEMAS[command]
        block = doc[command]
        if not isinstance(block, dict):
            problems.append(f"{command}: must be a table")
            block = {}
        unknown = set(block) - set(schema)
        if unknown:
            problems.append(f"{command}: unknown options {sorted(unknown)}")
        for key, default in schema.items():
            if key in block:
                options[key] = block[key]
            elif default is _REQUIRED:
                problems.append(f"{command}.{key}: required option missing")
            else:
                options[key] = default
        problems.extend(_check_options(command, options))

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append(f"seed: expected non-negative integer, got {seed!r}")
        seed = 0
    output = doc.get("output", "run-output")

    known_top = set(COMMANDS) | {"materials", "species", "stack", "seed", "output"}
    unknown_top = set(doc) - known_top
    if unknown_top:
        problems.append(f"unknown top-level keys {sorted(unknown_top)}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(stack=stack, resonant=resonant, command=command, options=options,
                     seed=seed, output=str(output), materials_path=materials_path, raw=doc)


def _check_options(command: str, options: dict) -> list[str]:
    problems = []

    def positive_int(key, minimum=1):
        v = options.get(key)
        if not isinstance(v, int) or v < minimum:
            problems.append(f"{command}.{key}: expected integer >= {minimum}, got {v!r}")

    if command in ("spectrum", "levelscheme"):
        theta = options.get("theta_mrad")
        if not isinstance(theta, (int, float)) or not 0 < theta < 100:
            problems.append(f"{command}.theta_mrad: expected angle in (0, 100) mrad")
    if command == "spectrum":
        positive_int("points", 2)
        rng = options.get("detuning")
        if not (isinstance(rng, list) and len(rng) == 2 and rng[0] < rng[1]):
            problems.append("spectrum.detuning: expected [lo, hi] with lo < hi")
    if command == "rocking":
        positive_int("points", 2)
        rng = options.get("theta_mrad")
        if not (isinstance(rng, list) and len(rng) == 2 and 0 < rng[0] < rng[1] < 100):
            problems.append("rocking.theta_mrad: expected [lo, hi] mrad, 0 < lo < hi")
    if command == "poles":
        win = options.get("window_mrad")
        if not (isinstance(win, list) and len(win) == 4 and win[0] < win[1] and win[2] < win[3]):
            problems.append("poles.window_mrad: expected [re_lo, re_hi, im_lo, im_hi]")
    if command in ("os", "design-eit", "design-spectrum"):
        positive_int("budget")
        problems.extend(_check_parameters(command, options.get("parameters")))
    if command == "os":
        proj = options.get("projection")
        if proj and not (isinstance(proj, list) and len(proj) in (2, 3)):
            problems.append("os.projection: expected 2 or 3 observable names")
    if command == "design-spectrum":
        sep = options.get("separation")
        if not isinstance(sep, (int, float)) or sep < 0:
            problems.append("design-spectrum.separation: expected number >= 0")
        alpha = options.get("alpha", 0.0)
        if not (isinstance(alpha, (int, float)) and 0 <= alpha <= 1):
            problems.append("design-spectrum.alpha: expected value in [0, 1]")
        w = options.get("weights")
        if w and not (isinstance(w, list) and len(w) == 6):
            problems.append("design-spectrum.weights: expected 6 numbers")
    return problems


def _check_parameters(command: str, params) -> list[str]:
    problems = []
    if not isinstance(params, list) or not params:
        return [f"{command}.parameters: required array of free-parameter tables"]
    n_angle = 0
    for i, p in enumerate(params):
        if not isinstance(p, dict) or "kind" not in p:
            problems.append(f"{command}.parameters[{i}]: expected table with a 'kind'")
            continue
        kind = p["kind"]
        if kind == "thickness":
            if not all(k in p for k in ("layer", "min", "max")):
                problems.append(f"{command}.parameters[{i}]: thickness needs layer/min/max")
        elif kind == "angle":
            n_angle += 1
            if not all(k in p for k in ("min_mrad", "max_mrad")):
                problems.append(f"{command}.parameters[{i}]: angle needs min_mrad/max_mrad")
        else:
            problems.append(f"{command}.parameters[{i}]: unknown kind {kind!r}")
    if n_angle != 1:
        problems.append(f"{command}.parameters: exactly one angle parameter required")
    return problems
