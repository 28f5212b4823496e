import json
from pathlib import Path

import numpy as np
import pytest

from annealed_langevin.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main
from annealed_langevin.config import ConfigError, parse_config
from annealed_langevin.experiment import run_experiment, t_label

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """
seed = 3
methods = direct_sample, ULA, convolution
target.weights = 0.3, 0.4, 0.3
target.means = -2; 0; 2
target.stds = 0.2; 0.1; 0.3
schedule.T = 0.1, 2
run.n_chains = 100
run.max_steps = 40
run.snapshot_every = 20
run.histogram_iterations = 40
"""


class TestConfig:
    def test_parse(self):
        c = parse_config(BASE)
        assert c.methods == ["direct_sample", "ula", "convolution"]
        assert c.columns == ["KL_gt", "ULA", "diffusion"]
        assert c.snapshot_iterations == [0, 20, 40]
        assert c.T_values == [0.1, 2.0]

    def test_canonical_order(self):
        c = parse_config(BASE.replace("direct_sample, ULA, convolution", "DAZ, ula, direct_sample"))
        assert c.columns == ["KL_gt", "ULA", "DAZ"]

    @pytest.mark.parametrize("bad", [
        "methods = \n",
        "methods = hmc\n",
        "schedule.T = 0\n",
        "run.nchains = 5\n",
        "seed = -1\n",
    ])
    def test_errors(self, bad):
        key = bad.split("=")[0].strip()
        text = "\n".join(l for l in BASE.splitlines() if not l.startswith(key + " ")) + "\n" + bad
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config(BASE + "seed = 4\n")

    def test_shipped_configs_parse(self):
        for f in CONFIGS.glob("*.conf"):
            parse_config(f.read_text())

    def test_random_target(self):
        c = parse_config((CONFIGS / "gmm_10d.conf").read_text())
        assert c.target.dim == 10 and c.target.n_components == 4


class TestLabels:
    @pytest.mark.parametrize("T,label", [(0.1, "01"), (1.0, "1"), (2.0, "2"), (10.0, "10"), (2.5, "25")])
    def test_t_label(self, T, label):
        assert t_label(T) == label


class TestRunExperiment:
    def test_schema_and_files(self, tmp_path):
        run_experiment(parse_config(BASE), out_dir=tmp_path)
        for label in ("01", "2"):
            lines = (tmp_path / f"T_{label}" / "KL_comparison.csv").read_text().splitlines()
            assert lines[0] == "iter,KL_gt,ULA,diffusion"
            assert [l.split(",")[0] for l in lines[1:]] == ["0", "20", "40"]
            vals = np.array([[float(v) for v in l.split(",")[1:]] for l in lines[1:]])
            assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
            hist = (tmp_path / f"T_{label}" / "histo_comparison_iter_40.csv").read_text()
            assert hist.startswith("x,sample,ULA,diffusion\n")
        assert (tmp_path / "gt_density.csv").read_text().startswith("x,Ground truth density\n")
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["seed"] == 3 and len(meta["cells"]) == 6
        conv = [c for c in meta["cells"] if c["method"] == "convolution"][0]
        assert set(conv["theory_bound"]) == {"20", "40"}

    def test_full_roster_header(self, tmp_path):
        cfg = parse_config(BASE.replace("direct_sample, ULA, convolution",
                                        "direct_sample, ULA, dilation, tempering, convolution, DAZ")
                           .replace("schedule.T = 0.1, 2", "schedule.T = 1"))
        run_experiment(cfg, out_dir=tmp_path)
        header = (tmp_path / "T_1" / "KL_comparison.csv").read_text().splitlines()[0]
        assert header == "iter,KL_gt,ULA,dilation,tempering,diffusion,DAZ"

    def test_zero_steps_is_initial_kl(self, tmp_path):
        from annealed_langevin.metrics import histogram_kl, default_histogram_spec
        cfg = parse_config(BASE.replace("run.max_steps = 40", "run.max_steps = 0")
                           .replace("run.histogram_iterations = 40", "")
                           .replace("direct_sample, ULA, convolution", "ULA"))
        run_experiment(cfg, out_dir=tmp_path)
        lines = (tmp_path / "T_01" / "KL_comparison.csv").read_text().splitlines()
        assert lines[0] == "iter,ULA" and len(lines) == 2
        x0 = np.full((100, 1), -3.0)
        assert float(lines[1].split(",")[1]) == histogram_kl(x0, cfg.target, default_histogram_spec(cfg.target))

    def test_marginal_files_10d(self, tmp_path):
        text = (CONFIGS / "gmm_10d.conf").read_text()
        text = (text.replace("run.max_steps = 10000", "run.max_steps = 20")
                .replace("run.snapshot_every = 500", "run.snapshot_every = 10")
                .replace("run.histogram_iterations = 10000", "run.histogram_iterations = 20")
                .replace("schedule.T = 1, 2", "schedule.T = 1")
                .replace("run.n_chains = 2000", "run.n_chains = 100"))
        run_experiment(parse_config(text), out_dir=tmp_path)
        for i in range(4):
            header = (tmp_path / f"T1_KLmarginal{i}.csv").read_text().splitlines()[0]
            assert header == f"iter,KL_{i}_gt,KL_{i}_ULA,KL_{i}_dilation,KL_{i}_tempering,KL_{i}_diffusion"

    def test_histogram_grids_2d(self, tmp_path):
        text = (CONFIGS / "gmm_2d.conf").read_text()
        text = (text.replace("run.max_steps = 10000", "run.max_steps = 10")
                .replace("run.snapshot_every = 500", "run.snapshot_every = 5")
                .replace("run.histogram_iterations = 10000", "run.histogram_iterations = 10")
                .replace("schedule.T = 1, 2", "schedule.T = 1")
                .replace("run.n_chains = 2000", "run.n_chains = 50"))
        run_experiment(parse_config(text), out_dir=tmp_path)
        header = (tmp_path / "T_1" / "KL_comparison.csv").read_text().splitlines()[0]
        assert header == "iter,KL_gt,ULA,dilation,tempering,diffusion,DAZ"
        for tag in ("gt", "sample", "ULA", "dilation", "tempering", "diffusion", "daz"):
            grid = np.loadtxt(tmp_path / "T_1" / f"histo_comparison_iter_10_{tag}.csv", delimiter=",", skiprows=1)
            cell = (grid[1, 1] - grid[0, 1]) ** 2
            assert grid.shape == (10_000, 3)
            assert grid[:, 2].sum() * cell == pytest.approx(1.0, abs=1e-3)

    def test_daz_domain_fails_fast(self, tmp_path):
        cfg = parse_config(BASE.replace("ULA, convolution", "ULA, DAZ") + "paths.daz_tau_max = 0.5\n")
        with pytest.raises(ValueError, match="daz"):
            run_experiment(cfg, out_dir=tmp_path / "o")
        assert not (tmp_path / "o").exists()

    def test_line_endings_and_repr(self, tmp_path):
        run_experiment(parse_config(BASE), out_dir=tmp_path)
        raw = (tmp_path / "T_2" / "KL_comparison.csv").read_bytes()
        assert b"\r" not in raw
        for cell in raw.decode().splitlines()[1].split(",")[1:]:
            assert repr(float(cell)) == cell

    def test_parallel_identical(self, tmp_path):
        cfg = parse_config(BASE)
        run_experiment(cfg, out_dir=tmp_path / "a")
        run_experiment(cfg, out_dir=tmp_path / "b", parallel=True)
        for f in (tmp_path / "a").rglob("*.csv"):
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


class TestMain:
    def _write(self, tmp_path, text):
        p = tmp_path / "c.conf"
        p.write_text(text)
        return str(p)

    def test_run_ok(self, tmp_path, capsys):
        assert main(["run", "--config", self._write(tmp_path, BASE), "--out", str(tmp_path / "o")]) == EXIT_OK
        assert "KL_comparison.csv" in capsys.readouterr().out

    def test_config_error(self, tmp_path, capsys):
        assert main(["run", "--config", self._write(tmp_path, "bogus = 1\n")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.conf")]) == EXIT_CONFIG

    def test_invalid_daz_domain(self, tmp_path):
        text = BASE.replace("ULA, convolution", "ULA, DAZ") + "paths.daz_tau_max = 0.5\n"
        assert main(["run", "--config", self._write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_verify(self, capsys):
        assert main(["verify"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == 5 and "5/5 checks passed" in out

    def test_verify_failure_exit(self, monkeypatch):
        from annealed_langevin import oracles
        from annealed_langevin.oracles import CheckResult
        monkeypatch.setattr(oracles, "verification_checks", lambda: [CheckResult("x", False, "")])
        assert main(["verify"]) == EXIT_VERIFY

    def test_constants(self, tmp_path, capsys):
        assert main(["constants", "--config", self._write(tmp_path, BASE)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "convolution" in out and "a_tau" in out
