import json

import pytest

from acflow.cli import main
from acflow.config import (
    DEFAULTS,
    load_config,
    parse_pressure_modes,
    parse_velocity_modes,
)
from acflow.spaces import ConfigurationError


def test_defaults_fill_minimal_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[solver]\nnu = 0.2\neps = 0.05\nn_modes = 4\ndt = 0.002\nhorizon = 0.1\n")
    setup = load_config(str(cfg))
    assert setup.solver.nu == 0.2
    assert setup.solver.eps == 0.05
    assert setup.solver.n_modes == 4
    assert setup.solver.delta == 1.0  # default
    assert setup.provenance["solver.nu"] == "file"
    assert setup.provenance["solver.delta"] == "default"
    assert setup.provenance["solver.seed"] == "default"


def test_override_provenance(tmp_path):
    setup = load_config(None, overrides=["solver.eps=1e-4"])
    assert setup.solver.eps == 1e-4
    assert setup.provenance["solver.eps"] == "override"


def test_validation_error_names_field():
    with pytest.raises(ConfigurationError, match="dt must be positive"):
        load_config(None, overrides=["solver.dt=0"])


def test_unknown_section_and_key(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[warp]\nspeed = 9\n")
    with pytest.raises(ConfigurationError, match="unknown config section"):
        load_config(str(bad))
    bad.write_text("[solver]\nwarp = 9\n")
    with pytest.raises(ConfigurationError, match="unknown key"):
        load_config(str(bad))
    with pytest.raises(ConfigurationError, match="unknown key"):
        load_config(None, overrides=["solver.warp=1"])
    with pytest.raises(ConfigurationError, match="must look like"):
        load_config(None, overrides=["solver.dt"])


def test_mode_entry_parsing():
    entries = parse_velocity_modes("1,2,1,0.5; 3,1,2,-0.25")
    assert entries == [(1, 2, 1, 0.5), (3, 1, 2, -0.25)]
    assert parse_velocity_modes("") == []
    with pytest.raises(ConfigurationError):
        parse_velocity_modes("1,2,0.5")
    p = parse_pressure_modes("cs,1,2,0.5; sc,2,2,1.0")
    assert p == [("cs", 1, 2, 0.5), ("sc", 2, 2, 1.0)]


def test_defaults_cover_every_section_key():
    setup = load_config(None)
    for section, keys in DEFAULTS.items():
        for key in keys:
            assert f"{section}.{key}" in setup.values


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_run_subcommand_outputs_and_digest(tmp_path):
    out = tmp_path / "out"
    rc = main(
        ["run", "--out", str(out), "--set", "solver.horizon=0.01",
         "--set", "solver.n_modes=4", "--quiet"]
    )
    assert rc == 0
    csv = (out / "run.csv").read_text().splitlines()
    assert csv[0].startswith("# manifest=")
    digest = csv[0].split("=", 1)[1]
    assert len(digest) == 64
    assert csv[1] == "t,l2_u,h1_u,l4_u,l2_p,l2_div_u,energy,residual"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["digest"] == digest
    assert "run.csv" in manifest["outputs"]
    snap = _read(out / "run_final.bin")
    assert snap[:4] == b"ACSN"
    assert digest.encode() in snap


def test_run_twice_is_byte_identical(tmp_path):
    args = ["run", "--set", "solver.horizon=0.01", "--set", "solver.n_modes=4", "--quiet"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert _read(out1 / "run.csv") == _read(out2 / "run.csv")
    assert _read(out1 / "run_final.bin") == _read(out2 / "run_final.bin")
    assert _read(out1 / "manifest.json") == _read(out2 / "manifest.json")


def test_mc_energy_worker_count_does_not_change_bytes(tmp_path):
    args = [
        "mc-energy", "--quiet",
        "--set", "solver.horizon=0.02", "--set", "solver.n_modes=4",
        "--paths", "6",
    ]
    out1, out2 = tmp_path / "w1", tmp_path / "w4"
    assert main(args + ["--out", str(out1), "--workers", "1"]) == 0
    assert main(args + ["--out", str(out2), "--workers", "4"]) == 0
    assert _read(out1 / "mc_energy.csv") == _read(out2 / "mc_energy.csv")
    assert _read(out1 / "mc_energy.json") == _read(out2 / "mc_energy.json")


def test_verify_subcommand(tmp_path):
    out = tmp_path / "v"
    rc = main(["verify", "--samples", "12", "--seed", "42", "--out", str(out), "--quiet"])
    assert rc == 0
    lines = (out / "verify.csv").read_text().splitlines()
    assert lines[1] == "lemma,seed,lhs,rhs,margin,pass"
    summary = json.loads((out / "verify.json").read_text())
    assert summary["pass"] is True
    assert summary["failures"] == []


def test_uniqueness_subcommand(tmp_path):
    out = tmp_path / "u"
    rc = main(
        ["uniqueness", "--quiet", "--out", str(out),
         "--set", "solver.horizon=0.02", "--set", "solver.n_modes=4"]
    )
    assert rc == 0
    summary = json.loads((out / "uniqueness.json").read_text())
    assert summary["pass"] is True
    assert summary["max_increase"] <= summary["tolerance"]


def test_sweep_subcommand_small(tmp_path):
    out = tmp_path / "s"
    rc = main(
        ["sweep-eps", "--quiet", "--out", str(out),
         "--set", "solver.horizon=0.05", "--set", "solver.n_modes=4",
         "--set", "sweep.eps_values=0.1,0.001", "--paths", "3"]
    )
    assert rc == 0
    summary = json.loads((out / "sweep_eps.json").read_text())
    assert summary["pass"] is True
    lines = (out / "sweep_eps.csv").read_text().splitlines()
    assert lines[1].startswith("eps,")
    assert len(lines) == 4  # header comment + columns + 2 eps rows


def test_unknown_subcommand_exits_2():
    assert main(["frobnicate"]) == 2


def test_config_error_exits_2(tmp_path):
    rc = main(["run", "--set", "solver.dt=0", "--quiet", "--out", str(tmp_path)])
    assert rc == 2


def test_mc_moment_subcommand(tmp_path):
    out = tmp_path / "m"
    rc = main(
        ["mc-moment", "--quiet", "--out", str(out),
         "--set", "solver.horizon=0.02", "--set", "solver.n_modes=4",
         "--set", "solver.moment_p=4", "--paths", "8"]
    )
    assert rc == 0
    summary = json.loads((out / "mc_moment.json").read_text())
    assert summary["implied_constant"] is not None
    assert summary["moment_p"] == 4.0


def test_help_exits_zero():
    assert main(["--help"]) == 0
