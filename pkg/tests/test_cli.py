import json
from pathlib import Path

import numpy as np
import pytest

from backscatter.certificate import bound_integral_I
from backscatter.cli import load_config, main, run
from backscatter.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "configs" / "certificate_example.toml"
REGRESSION = ROOT / "tests" / "data" / "certificate_regression.csv"

SMALL_GRID = ["--a", "2.25", "--n", "16", "--threads", "1"]
BUMP = "bump:0,0,0,1.5,0.1"


def write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_bound_integral_matches_library(capsys):
    assert main(["bound-integral", "--k", "1", "--eta", "2", "--l", "3"]) == 0
    assert capsys.readouterr().out.strip() == repr(bound_integral_I(1.0, 2.0, 3.0))


def test_empty_pipeline_list_writes_manifest_only(tmp_path):
    cfg = write(tmp_path, '[run]\nname = "empty"\npipelines = []\n')
    status, out = run(cfg, tmp_path / "runs")
    assert status == 0
    assert sorted(p.name for p in out.iterdir()) == ["config.toml", "manifest.json"]
    m = json.loads((out / "manifest.json").read_text())
    assert m["pipelines"] == {} and len(m["config_sha256"]) == 64 and "numpy" in m["versions"]


def test_non_unit_beta_names_field(tmp_path):
    cfg = write(tmp_path, EXAMPLE.read_text().replace("beta = [0.0, 0.0, 1.0]", "beta = [0.0, 0.0, 2.0]"))
    with pytest.raises(ConfigError, match=r"certificate\.beta"):
        load_config(cfg)
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2


def test_syntax_error_reports_line(tmp_path):
    cfg = write(tmp_path, "[run]\npipelines = [\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(cfg)


@pytest.mark.parametrize("text, field", [
    ('[run]\npipelines = ["bogus"]\n', "run.pipelines"),
    ('[run]\npipelines = ["forward"]\n', "grid"),
    ('[run]\npipelines = ["forward"]\n[grid]\nhalf_width = 3.0\nn = 12\n[forward]\npotential = "q"\nk = 1.0\n',
     "forward.potential"),
    ('[run]\npipelines = ["forward"]\n[grid]\nhalf_width = 3.0\nn = 12\n'
     '[[potentials]]\nname = "q"\ntype = "zero"\n[forward]\npotential = "q"\nk = 1.0\ncolour = 1\n',
     "forward.colour"),
])
def test_schema_errors_name_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(write(tmp_path, text))


def test_partial_failure_nonzero_exit(tmp_path):
    text = ('[run]\npipelines = ["invert", "forward"]\n[grid]\nhalf_width = 3.0\nn = 12\n'
            '[[potentials]]\nname = "q"\ntype = "bump"\nradius = 1.0\namplitude = 0.1\n'
            '[invert]\npotential = "q"\ndirections = 3\nk_max = 1.0\nn_k = 1\n'
            '[forward]\npotential = "q"\nk = 0.5\ndirections = 4\n')
    status, out = run(write(tmp_path, text), tmp_path / "runs")
    m = json.loads((out / "manifest.json").read_text())
    assert status == 1
    assert m["pipelines"]["invert"]["status"] == "failed" and "CoverageError" in m["pipelines"]["invert"]["error"]
    assert m["pipelines"]["forward"]["status"] == "ok" and (out / "forward_amplitudes.csv").exists()


def test_runs_are_deterministic(tmp_path):
    text = ('[run]\npipelines = ["forward"]\nthreads = 1\n[grid]\nhalf_width = 3.0\nn = 12\n'
            '[[potentials]]\nname = "q"\ntype = "bump"\nradius = 1.0\namplitude = 0.2\n'
            '[forward]\npotential = "q"\nk = 0.5\ndirections = 6\n')
    cfg = write(tmp_path, text)
    _, a = run(cfg, tmp_path / "one")
    _, b = run(cfg, tmp_path / "two")
    for name in ("forward_amplitudes.csv", "forward_v/v.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_bundled_certificate_config_reproduces_regression(tmp_path):
    status, out = run(EXAMPLE, tmp_path)
    assert status == 0
    assert (out / "certificate.csv").read_bytes() == REGRESSION.read_bytes()


@pytest.mark.parametrize("q1, expected", [(BUMP, 0), ("well:40,1.0", 1)])
def test_certify_exit_status(tmp_path, capsys, q1, expected):
    code = main(["certify", *SMALL_GRID, "--q1", q1, "--etas", "2,4", "--out", str(tmp_path)])
    verdict = capsys.readouterr().out.strip()
    assert code == expected and (verdict == "certified") == (code == 0)


def test_dataset_then_born_round_trip(tmp_path, capsys):
    data = tmp_path / "ds"
    args = ["--potential", BUMP, "--directions", "80", "--k-max", "2", "--n-k", "8"]
    assert main(["dataset", *SMALL_GRID, *args, "--out", str(data)]) == 0
    capsys.readouterr()
    assert main(["invert-born", *SMALL_GRID, "--data", str(data), "--support-radius", "1.6",
                 "--truth", BUMP, "--out", str(tmp_path / "rec")]) == 0
    assert json.loads(capsys.readouterr().out)["l2_error"] <= 0.2


def test_perturb_and_refine(tmp_path, capsys):
    data = tmp_path / "ds"
    main(["dataset", *SMALL_GRID, "--potential", BUMP, "--directions", "40", "--k-max", "1",
          "--n-k", "4", "--out", str(data)])
    assert main(["perturb", "--data", str(data), "--delta", "1e-4", "--seed", "3",
                 "--out", str(tmp_path / "noisy")]) == 0
    main(["invert-born", *SMALL_GRID, "--data", str(data), "--out", str(tmp_path / "born")])
    capsys.readouterr()
    assert main(["invert-refine", "--data", str(tmp_path / "noisy"), "--init", str(tmp_path / "born"),
                 "--iters", "1", "--threads", "1", "--out", str(tmp_path / "ref")]) == 0
    misfits = json.loads(capsys.readouterr().out)["misfits"]
    assert len(misfits) == 2 and np.all(np.isfinite(misfits))
    assert (tmp_path / "ref" / "iterate_1" / "manifest.json").exists()


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "backscatter", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
