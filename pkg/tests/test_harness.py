import json

import numpy as np
import pytest

from twospecies import make_geometry
from twospecies.harness import ConfigError, compare_fields, from_dict, load_config, run_experiment
from twospecies.harness.cli import main
from twospecies.kmc import EmpiricalField, block_field
from twospecies.measures import compressibility, sample_grand
from twospecies.pde import DensityProfile
from twospecies.process import RateSet


def hydro_doc(**over):
    doc = {
        "version": 1,
        "kind": "hydro",
        "rates": [1, 1, 1, 0, 1],
        "seed": 4,
        "geometry": {"N": 32},
        "hydro": {"ensemble": 2, "T": 0.01, "snapshots": 3, "pde_snapshots": 21,
                  "initial": {"profile": "cos", "hole_fraction": 0.5}},
    }
    doc.update(over)
    return doc


def test_config_defaults_and_overrides():
    cfg = from_dict(hydro_doc())
    assert cfg.section("hydro")["tolerance"] == 0.05
    assert cfg.section("hydro")["initial"]["amplitude"] == 0.5
    assert cfg.with_overrides(seed=9).seed == 9
    named = from_dict(hydro_doc(rates={"c_plus": 1, "c_minus": 1, "c_exchange": 1, "c_annihilate": 0, "c_create": 1}))
    assert named.rates == cfg.rates


@pytest.mark.parametrize(
    "doc,field",
    [
        (hydro_doc(version=2), "version"),
        (hydro_doc(kind="movie"), "kind"),
        (hydro_doc(rates=[1, 1, 1]), "rates"),
        (hydro_doc(geometry={"N": 1}), "geometry.N"),
        (hydro_doc(extra=1), "<root>"),
        (hydro_doc(hydro={"T": -1}), "hydro.T"),
    ],
)
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as exc:
        from_dict(doc)
    assert field in str(exc.value)


def test_prerequisites_are_enforced():
    with pytest.raises(ConfigError, match="gradient"):
        from_dict(hydro_doc(rates=[1, 1, 0.5, 0, 1]))  # Case 3 with 2 C_E != C+ + C-
    with pytest.raises(ConfigError, match="gradient"):
        from_dict(hydro_doc(rates=[3, 1, 0, 2, 0]))
    with pytest.raises(ConfigError, match="Case 1"):
        from_dict({"version": 1, "kind": "diffusion", "rates": [3, 1, 0, 4, 0]})
    with pytest.raises(ConfigError):
        from_dict(hydro_doc(rates=[0, 1, 1, 1, 1]))


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_compare_fields_examples():
    a = np.random.default_rng(0).uniform(-1, 1, 64)
    assert compare_fields(a, DensityProfile(a)) == 0.0
    assert compare_fields(a + 0.3, DensityProfile(a)) == pytest.approx(0.3)
    # piecewise-constant averaging of the finer field onto the coarser grid
    fine = np.repeat(np.arange(8.0), 4)
    assert compare_fields(fine, DensityProfile(np.arange(8.0))) == 0.0
    with pytest.raises(ValueError):
        compare_fields(np.zeros(10), DensityProfile(np.zeros(4)))
    assert compare_fields(np.ones(16), DensityProfile(np.zeros((4, 4)))) == 1.0
    with pytest.raises(ValueError):
        compare_fields(np.zeros(10), DensityProfile(np.zeros((4, 4))))
    g2 = make_geometry(2, 4)
    with pytest.raises(ValueError):
        compare_fields(EmpiricalField(np.zeros(16), 0, g2), DensityProfile(np.zeros(16)))


def test_compare_fields_clt_band():
    rates = RateSet(1.0, 1.0, 1.0, 1.0, 1.0)
    g = make_geometry(1, 10_000)
    l = 50
    eta = sample_grand(0.0, rates, g, 6)
    fld = EmpiricalField(block_field(eta.spins, g, l), l, g)
    err = compare_fields(fld, DensityProfile(np.zeros(100)))
    block_se = np.sqrt(compressibility(0.0, rates) / (2 * l + 1))
    assert err <= 4 * block_se


def test_run_experiment_is_reproducible(tmp_path):
    cfg = from_dict(hydro_doc())
    r1 = run_experiment(cfg, out_dir=tmp_path / "a")
    r2 = run_experiment(cfg, out_dir=tmp_path / "b", threads=2)
    for name in ("hydro_errors.csv", "mean_field.csv", "reference_field.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert r1.comparison.errors.shape == (2, 3)
    assert r1.summary["final_mean_l1"] == r2.summary["final_mean_l1"]


def _write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_exit_codes(tmp_path):
    cfg = _write(tmp_path, hydro_doc())
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "hydro-compare"]) in (0, 1)
    assert main(["hydro-compare", "--config", _write(tmp_path, hydro_doc(version=3))]) == 2
    assert main(["gap", "--config", cfg]) == 2  # wrong kind for the subcommand
    assert main(["gap"]) == 2
    tight = hydro_doc()
    tight["hydro"]["tolerance"] = 1e-9
    assert main(["hydro-compare", "--config", _write(tmp_path, tight), "--out", str(tmp_path / "t")]) == 1


def test_cli_simulate_sample_pde(tmp_path):
    cfg = _write(tmp_path, hydro_doc())
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    lines = (out / "snapshots.csv").read_text().splitlines()
    assert lines[0] == "time,site_index,spin" and len(lines) == 1 + 3 * 32
    assert main(["simulate", "--config", cfg, "--out", str(out), "--format", "block"]) == 0
    assert (out / "block_fields.csv").read_text().startswith("time,cell_index,density")
    assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
    spins = [int(v) for v in (out / "initial.txt").read_text().strip().split(",")]
    assert len(spins) == 32 and set(spins) <= {-1, 0, 1}
    assert main(["pde", "--config", cfg, "--out", str(out), "--M", "64"]) == 0
    meta = json.loads((out / "pde_metadata.json").read_text())
    assert meta["grid"]["M"] == 64


def test_cli_spectral_and_diffusion(tmp_path, capsys):
    gap = _write(tmp_path, {"version": 1, "kind": "gap", "rates": [1, 1, 1, 1, 1], "gap": {"N": [3, 4, 5]}})
    assert main(["gap", "--config", gap, "--out", str(tmp_path / "g")]) == 0
    rows = (tmp_path / "g" / "gap_sweep.csv").read_text().splitlines()
    assert rows[0] == "d,N,K,variant,states,gap,gap_times_N2" and len(rows) == 4
    diff = _write(tmp_path, {"version": 1, "kind": "diffusion", "rates": [1, 1, 0, 1, 1],
                             "diffusion": {"rho": [-0.5, 0.0, 0.5], "k": [0, 1]}})
    assert main(["diffusion", "--config", diff, "--out", str(tmp_path / "d")]) == 0
    var = _write(tmp_path, {"version": 1, "kind": "variance", "rates": [1, 1, 0, 1, 1], "variance": {"l": [1, 2]}})
    assert main(["variance", "--config", var, "--out", str(tmp_path / "v")]) == 0
    gk = _write(tmp_path, {"version": 1, "kind": "greenkubo", "rates": [1, 1, 0, 1, 1],
                           "geometry": {"d": 2, "N": 3}})
    assert main(["green-kubo", "--config", gk, "--out", str(tmp_path / "k")]) == 0
    assert "greenkubo: PASS" in capsys.readouterr().out
