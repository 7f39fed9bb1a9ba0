import filecmp
import json
import os

import numpy as np
import pytest

from gradphi import cli


def write_ini(path, body):
    path.write_text(body)
    return str(path)


HESSIAN_INI = """
[experiment]
kind = hessian
seed = 3
outdir = {out}

[lattice]
d = 2
l = 3

[potential]
name = quadratic
param = 1.0

[tilt]
xi = 0.0 0.0

[sampler]
samples = 40
stride = 4
batch = 2
"""


class TestParseConfig:
    def test_flat_mapping_and_overrides(self, tmp_path):
        p = write_ini(tmp_path / "c.ini",
                      "[experiment]\nkind = sample\n[lattice]\nl = 4\n")
        cfg = cli.parse_config(p, ["lattice.l=6", "experiment.seed=9"])
        assert cfg["experiment.kind"] == "sample"
        assert cfg["lattice.l"] == "6"
        assert cfg["experiment.seed"] == "9"

    def test_missing_file_raises(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("/nonexistent/path.ini")

    def test_bad_override_forms(self, tmp_path):
        p = write_ini(tmp_path / "c.ini", "[experiment]\nkind = sample\n")
        with pytest.raises(cli.ConfigError):
            cli.parse_config(p, ["noequals"])
        with pytest.raises(cli.ConfigError):
            cli.parse_config(p, ["nodot=1"])


class TestExperimentParams:
    def base(self):
        return {"experiment.kind": "sample", "lattice.l": "4",
                "potential.name": "quadratic", "potential.param": "1.0"}

    def test_defaults(self):
        p = cli.experiment_params(self.base())
        assert p["seed"] == 0 and p["workers"] == 1 and p["d"] == 2
        assert np.allclose(p["xi"], 0.0)

    def test_unknown_kind(self):
        cfg = self.base()
        cfg["experiment.kind"] = "nope"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)

    def test_unknown_potential(self):
        cfg = self.base()
        cfg["potential.name"] = "quartic"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)

    def test_bc_aliases(self):
        from gradphi import dynamics as dyn
        for name, want in [("dirichlet", dyn.DIRICHLET),
                           ("periodic", dyn.PERIODIC),
                           (dyn.PERIODIC, dyn.PERIODIC)]:
            cfg = self.base()
            cfg["lattice.bc"] = name
            assert cli.experiment_params(cfg)["bc"] == want
        cfg = self.base()
        cfg["lattice.bc"] = "free"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)

    def test_xi_dimension_mismatch(self):
        cfg = self.base()
        cfg["tilt.xi"] = "0.1 0.2 0.3"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)

    def test_negative_samples(self):
        cfg = self.base()
        cfg["sampler.samples"] = "-1"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)

    def test_scale_list_must_be_integer(self):
        cfg = self.base()
        cfg["lattice.scales"] = "1 2.5"
        with pytest.raises(cli.ConfigError):
            cli.experiment_params(cfg)


class TestPlan:
    def cfg(self, **kw):
        cfg = {"experiment.kind": "sample", "lattice.l": "8",
               "potential.name": "quadratic", "potential.param": "1.0",
               "sampler.samples": "100", "sampler.stride": "10",
               "sampler.batch": "1"}
        cfg.update(kw)
        return cfg

    def test_doubling_samples_doubles_steps(self):
        a = cli.plan_report(self.cfg())
        b = cli.plan_report(self.cfg(**{"sampler.samples": "200"}))
        assert b["estimated_steps"] == 2 * a["estimated_steps"]

    def test_doubling_side_quadruples_vertex_cost(self):
        a = cli.plan_report(self.cfg(**{"lattice.l": "20"}))
        b = cli.plan_report(self.cfg(**{"lattice.l": "40"}))
        ratio = b["estimated_vertex_updates"] / a["estimated_vertex_updates"]
        assert ratio == pytest.approx(4.0, rel=0.1)


class TestMain:
    def test_no_command_usage(self, capsys):
        assert cli.main([]) == 2

    def test_missing_config_exit_2(self):
        assert cli.main(["run", "/nonexistent.ini"]) == 2

    def test_bad_override_exit_2(self, tmp_path):
        p = write_ini(tmp_path / "c.ini",
                      HESSIAN_INI.format(out=tmp_path / "o"))
        assert cli.main(["run", p, "experiment.kind=wrong"]) == 2

    def test_verify_requires_samples(self, tmp_path):
        body = HESSIAN_INI.format(out=tmp_path / "o")
        p = write_ini(tmp_path / "c.ini", body)
        rc = cli.main(["run", p, "experiment.kind=verify",
                       "sampler.samples=0"])
        assert rc == 2

    def test_plan_prints_report(self, tmp_path, capsys):
        p = write_ini(tmp_path / "c.ini",
                      HESSIAN_INI.format(out=tmp_path / "o"))
        assert cli.main(["plan", p]) == 0
        out = capsys.readouterr().out
        assert "estimated_steps" in out
        assert "lattice_side: 7" in out

    def test_run_writes_outputs_and_oracle(self, tmp_path, capsys):
        out = tmp_path / "o"
        p = write_ini(tmp_path / "c.ini", HESSIAN_INI.format(out=out))
        assert cli.main(["run", p]) == 0
        for name in ("results.csv", "results.json", "manifest.json"):
            assert (out / name).exists()
        csv_text = (out / "results.csv").read_text()
        assert "hessian_sigma" in csv_text
        assert "hessian_oracle" in csv_text
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["kind"] == "hessian"
        assert manifest["seed"] == 3
        assert manifest["outputs"] == ["results.csv", "results.json"]
        assert "hessian_sigma" in capsys.readouterr().out

    def test_run_determinism_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        p = write_ini(tmp_path / "c.ini", HESSIAN_INI.format(out=out1))
        assert cli.main(["run", p]) == 0
        assert cli.main(["run", p, f"experiment.outdir={out2}"]) == 0
        for name in ("results.csv", "results.json"):
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False)

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GRADPHI_OUTPUT_ROOT", str(tmp_path))
        p = write_ini(tmp_path / "c.ini", HESSIAN_INI.format(out="rel"))
        assert cli.main(["run", p, "sampler.samples=5"]) == 0
        assert (tmp_path / "rel" / "manifest.json").exists()
