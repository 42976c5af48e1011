import json
from pathlib import Path

import numpy as np
import pytest

from nucav.cli import main
from nucav.config import ConfigError, load_config

FIG2A_LAYERS = [["Pt", 2.0], ["C", 13.0], ["Fe57", 0.57], ["C", 8.0], ["Fe57", 0.57],
                ["C", 8.0], ["Fe56", 0.57], ["C", 13.0], ["Pt", 2.0]]


def write_config(tmp_path, body: str, name="run.toml") -> Path:
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


def spectrum_config(tmp_path, out="out", theta=3.39, name="run.toml"):
    layers = json.dumps(FIG2A_LAYERS)
    return write_config(tmp_path, f"""
seed = 1
output = "{(tmp_path / out).as_posix()}"

[stack]
layers = {layers}

[spectrum]
theta_mrad = {theta}
detuning = [-20.0, 20.0]
points = 801
""", name=name)


def read_csv(path):
    rows = [line.split(",") for line in path.read_text().strip().splitlines()]
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return header, data


class TestConfigParsing:
    def test_minimal_spectrum_config(self, tmp_path):
        config = load_config(spectrum_config(tmp_path))
        assert config.command == "spectrum"
        assert len(config.stack.layers) == 9
        assert config.resonant.indices == (2, 4)  # Fe57 layers discovered
        assert config.seed == 1

    def test_unknown_material_lists_available(self, tmp_path):
        path = write_config(tmp_path, """
[stack]
layers = [["Xx", 2.0], ["Fe57", 0.57]]

[levelscheme]
theta_mrad = 3.0
""")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        message = str(err.value)
        assert "Xx" in message and "Pt" in message and "B4C" in message

    def test_all_problems_reported_at_once(self, tmp_path):
        path = write_config(tmp_path, """
seed = -4

[stack]
layers = [["Xx", 2.0]]

[spectrum]
theta_mrad = -1.0
detuning = [5.0, -5.0]
""")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert len(err.value.problems) >= 4

    def test_exactly_one_command_block(self, tmp_path):
        path = write_config(tmp_path, f"""
[stack]
layers = {json.dumps(FIG2A_LAYERS)}

[spectrum]
theta_mrad = 3.0

[rocking]
""")
        with pytest.raises(ConfigError, match="exactly one command"):
            load_config(path)

    def test_roundtrip_through_json_export(self, tmp_path):
        config = load_config(spectrum_config(tmp_path))
        exported = tmp_path / "exported.json"
        exported.write_text(config.to_json(), encoding="utf-8")
        again = load_config(exported)
        assert again.stack == config.stack
        assert again.resonant == config.resonant
        assert again.command == config.command
        assert again.options == config.options
        assert again.seed == config.seed

    def test_species_override(self, tmp_path):
        layers = json.dumps(FIG2A_LAYERS)
        path = write_config(tmp_path, f"""
[stack]
layers = {layers}

[species.Fe57]
strength = 0.1

[levelscheme]
theta_mrad = 3.39
""")
        config = load_config(path)
        assert config.resonant.species[0].strength == pytest.approx(0.1)

    def test_json_parse_error_has_position(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"stack": [,]}', encoding="utf-8")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(bad)


class TestCliRuns:
    def test_spectrum_run_shows_transparency_dip(self, tmp_path, capsys):
        cfg = spectrum_config(tmp_path)
        assert main(["spectrum", "--config", str(cfg)]) == 0
        header, data = read_csv(tmp_path / "out" / "spectrum.csv")
        x = data[:, header.index("detuning")]
        r2 = data[:, header.index("r2")]
        center = r2[np.abs(x) < 0.8].min()
        shoulders = r2[(np.abs(x) > 3) & (np.abs(x) < 8)].max()
        assert center < 0.5 * shoulders
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["command"] == "spectrum"
        assert "spectrum.csv" in manifest["outputs"]

    def test_mismatched_subcommand_rejected(self, tmp_path, capsys):
        cfg = spectrum_config(tmp_path)
        assert main(["rocking", "--config", str(cfg)]) == 2
        assert "declares" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path, capsys):
        cfg_a = spectrum_config(tmp_path, out="run-a", name="a.toml")
        cfg_b = spectrum_config(tmp_path, out="run-b", name="b.toml")
        assert main(["spectrum", "--config", str(cfg_a)]) == 0
        assert main(["spectrum", "--config", str(cfg_b)]) == 0
        for name in ("spectrum.csv", "levelscheme.json", "decomposition.json"):
            a = (tmp_path / "run-a" / name).read_bytes()
            b = (tmp_path / "run-b" / name).read_bytes()
            assert a == b

    def test_rocking_run(self, tmp_path, capsys):
        layers = json.dumps(FIG2A_LAYERS)
        cfg = write_config(tmp_path, f"""
output = "{(tmp_path / 'rock').as_posix()}"

[stack]
layers = {layers}

[rocking]
theta_mrad = [2.0, 4.5]
points = 1201
""")
        assert main(["rocking", "--config", str(cfg)]) == 0
        header, data = read_csv(tmp_path / "rock" / "rocking.csv")
        assert header == ["theta_mrad", "reflectivity"]
        th, r2 = data[:, 0], data[:, 1]
        interior = (r2[1:-1] < r2[:-2]) & (r2[1:-1] < r2[2:])
        minima = th[1:-1][interior]
        assert len(minima) >= 3
        assert minima[2] == pytest.approx(3.39, rel=0.02)

    def test_os_budget_zero_rejected(self, tmp_path, capsys):
        layers = json.dumps(FIG2A_LAYERS)
        cfg = write_config(tmp_path, f"""
[stack]
layers = {layers}

[os]
observables = ["d12", "g12"]
budget = 0
parameters = [
  {{kind = "thickness", layer = 1, min = 2.0, max = 30.0}},
  {{kind = "angle", min_mrad = 2.6, max_mrad = 4.0}},
]
""")
        assert main(["os", "--config", str(cfg)]) == 2
        assert ">= 1" in capsys.readouterr().err

    def test_max_cladding_caps_bound(self, tmp_path, capsys):
        layers = json.dumps(FIG2A_LAYERS)
        cfg = write_config(tmp_path, f"""
output = "{(tmp_path / 'os-run').as_posix()}"

[stack]
layers = {layers}

[os]
observables = ["d12", "g12"]
budget = 600
parameters = [
  {{kind = "thickness", layer = 0, min = 0.0, max = 30.0}},
  {{kind = "angle", min_mrad = 2.6, max_mrad = 4.0}},
]
""")
        assert main(["os", "--config", str(cfg), "--max-cladding", "2.0"]) == 0
        header, data = read_csv(tmp_path / "os-run" / "os.csv")
        assert data[:, header.index("p0")].max() <= 2.0 + 1e-12

    def test_solver_failure_writes_error_json(self, tmp_path, capsys):
        layers = json.dumps(FIG2A_LAYERS)
        cfg = write_config(tmp_path, f"""
output = "{(tmp_path / 'fail').as_posix()}"

[stack]
layers = {layers}

[design-spectrum]
separation = 20.0
budget = 5
parameters = [
  {{kind = "thickness", layer = 1, min = 2.0, max = 30.0}},
  {{kind = "angle", min_mrad = 2.6, max_mrad = 4.0}},
]
""")
        assert main(["design-spectrum", "--config", str(cfg)]) == 1
        err = json.loads((tmp_path / "fail" / "error.json").read_text())
        assert err["error"] == "ValueError"
        assert "budget" in err["message"]

    def test_design_spectrum_bundle_dip_separation(self, tmp_path, capsys):
        pd_layers = [["Pd", 5.0], ["B4C", 20.0], ["Fe57", 0.57], ["B4C", 20.0],
                     ["Fe57", 0.57], ["B4C", 20.0], ["Pd", 15.0]]
        cfg = write_config(tmp_path, f"""
seed = 11
output = "{(tmp_path / 'design').as_posix()}"

[stack]
bottom = "Si"
layers = {json.dumps(pd_layers)}

[design-spectrum]
separation = 20.0
budget = 8000
parameters = [
  {{kind = "thickness", layer = 0, min = 0.0, max = 30.0}},
  {{kind = "thickness", layer = 1, min = 2.0, max = 60.0}},
  {{kind = "thickness", layer = 3, min = 2.0, max = 60.0}},
  {{kind = "thickness", layer = 5, min = 2.0, max = 60.0}},
  {{kind = "thickness", layer = 6, min = 5.0, max = 60.0}},
  {{kind = "angle", min_mrad = 2.2, max_mrad = 3.4}},
]
""")
        assert main(["design-spectrum", "--config", str(cfg)]) == 0
        header, data = read_csv(tmp_path / "design" / "spectrum.csv")
        x = data[:, header.index("detuning")]
        r2 = data[:, header.index("r2")]
        interior = (r2[1:-1] < r2[:-2]) & (r2[1:-1] < r2[2:])
        bg = np.median(r2[np.abs(x) > 35])
        dips = sorted(zip((bg - r2[1:-1][interior]) / bg, x[1:-1][interior]))[::-1][:2]
        positions = sorted(d[1] for d in dips)
        separation = positions[1] - positions[0]
        assert abs(separation - 20.0) / 20.0 < 0.10
        result = json.loads((tmp_path / "design" / "design_result.json").read_text())
        assert abs(result["metrics"]["mode_separation"] - 20.0) / 20.0 < 0.10


class TestRemainingCommands:
    def test_levelscheme_run(self, tmp_path, capsys):
        layers = json.dumps(FIG2A_LAYERS)
        cfg = write_config(tmp_path, f"""
output = "{(tmp_path / 'scheme').as_posix()}"

[stack]
layers = {layers}

[levelscheme]
theta_mrad = 3.39
""")
        assert main(["levelscheme", "--config", str(cfg)]) == 0
        blob = json.loads((tmp_path / "scheme" / "levelscheme.json").read_text())
        matrix = np.array(blob["matrix"])
        assert matrix.shape == (2, 2, 2)
        out = capsys.readouterr().out
        assert "matrix" in out

    def test_poles_run(self, tmp_path, capsys):
        pd_layers = [["Pd", 105.1], ["B4C", 27.7], ["Fe57", 0.57], ["B4C", 23.8],
                     ["Fe57", 0.57], ["B4C", 28.8], ["Pd", 12.5]]
        cfg = write_config(tmp_path, f"""
output = "{(tmp_path / 'poles').as_posix()}"

[stack]
bottom = "Si"
layers = {json.dumps(pd_layers)}

[poles]
window_mrad = [2.8, 3.8, -0.5, 0.0]
observables = ["coupling", "shift1"]
grid = [301, 41]
""")
        assert main(["poles", "--config", str(cfg)]) == 0
        blob = json.loads((tmp_path / "poles" / "poles.json").read_text())
        assert len(blob["poles_rad"]) >= 2
        assert set(blob["residues"]) == {"coupling", "shift1"}

    def test_design_eit_run(self, tmp_path, capsys):
        pd_layers = [["Pd", 1.0], ["B4C", 50.0], ["Fe57", 0.57], ["B4C", 90.0],
                     ["Fe57", 0.57], ["B4C", 40.0], ["Pd", 40.0]]
        cfg = write_config(tmp_path, f"""
seed = 2
output = "{(tmp_path / 'eit').as_posix()}"

[stack]
bottom = "Si"
layers = {json.dumps(pd_layers)}

[design-eit]
metastable = 0
margin = 1.2
min_rabi_suppression = 30.0
budget = 12000
parameters = [
  {{kind = "thickness", layer = 0, min = 0.0, max = 3.0}},
  {{kind = "thickness", layer = 1, min = 20.0, max = 120.0}},
  {{kind = "thickness", layer = 3, min = 40.0, max = 160.0}},
  {{kind = "thickness", layer = 5, min = 20.0, max = 120.0}},
  {{kind = "thickness", layer = 6, min = 20.0, max = 60.0}},
  {{kind = "angle", min_mrad = 2.2, max_mrad = 2.6}},
]
""")
        assert main(["design-eit", "--config", str(cfg)]) == 0
        result = json.loads((tmp_path / "eit" / "design_result.json").read_text())
        assert result["feasible"]
        assert result["report"]["satisfied"]
        header, data = read_csv(tmp_path / "eit" / "susceptibility.csv")
        im = data[:, header.index("im_chi")]
        assert im.max() == pytest.approx(1.0, abs=1e-9)
        assert im.min() < 0.2  # transparency window present
        assert (tmp_path / "eit" / "cost_trace.csv").exists()
        assert (tmp_path / "eit" / "spectrum.csv").exists()
