from __future__ import annotations

import json
import subprocess
import sys

import pytest

from fvlab import __version__
from fvlab.cli import main
from fvlab.errors import SpecParseError
from fvlab.experiments import ExperimentConfig, parse_mu0, parse_tgrid
from fvlab.lookdown import parse_event_log


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_rates_table(capsys):
    code, out, _ = run_cli(capsys, "rates", "--lambda", "kingman:1", "--bmax", "6")
    assert code == 0
    body = json.loads(out)
    assert body["fvlab_version"] == __version__ and body["config"]["lambda_spec"] == "kingman:1"
    for row in body["results"]["table"]:
        assert row["rate"] == (1.0 if row["k"] == 2 else 0.0)


def test_csv_layout(capsys):
    code, out, _ = run_cli(capsys, "rates", "--lambda", "beta:1.5", "--bmax", "3", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == f"# fvlab {__version__}" and lines[1].startswith("# config: {")
    assert lines[2] == "experiment,observable,n,t,replica_group,value,stderr"
    assert len(lines) == 3 + 3


def test_exit_codes(capsys):
    assert run_cli(capsys, "rates", "--lambda", "nonsense")[0] == 2
    assert run_cli(capsys, "moments", "--levy", "stable:alpha=3")[0] == 2
    assert run_cli(capsys, "speed", "--tgrid", "log:1,2,3")[0] == 2
    assert run_cli(capsys, "rates", "--replicas", "0")[0] == 2
    assert run_cli(capsys, "dust", "--lambda", "kingman:1", "--replicas", "2")[0] == 2
    code, _, err = run_cli(capsys, "coalescent", "--n", "50", "--t", "5", "--lookdown", "--event-cap", "5")
    assert code == 3 and "event cap" in err
    with pytest.raises(SystemExit):
        main(["unknown-experiment"])


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[defaults]\nlambda = beta:1.5\nseed = 4\n\n[speed]\nn = 200\ntgrid = geo:0.01,0.1,3\nreplicas = 3\n")
    code, out, _ = run_cli(capsys, "speed", "--config", str(cfg), "--replicas", "2")
    body = json.loads(out)
    assert code == 0
    assert body["config"]["lambda_spec"] == "beta:1.5" and body["config"]["n"] == 200
    assert body["config"]["replicas"] == 2 and body["seed"] == 4
    assert len(body["results"]["block_counts"]) == 2
    assert run_cli(capsys, "speed", "--config", str(tmp_path / "missing.ini"))[0] == 2


def test_lookdown_dump_parses(capsys):
    code, out, _ = run_cli(capsys, "coalescent", "--lambda", "kingman:1", "--n", "5", "--t", "1", "--lookdown", "--seed", "3")
    log = parse_event_log(out)
    assert code == 0 and log.n == 5 and log.seed == 3 and log.horizon == 1.0


def test_out_file_and_determinism(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["genealogy", "--lambda", "beta:1.5", "--n", "3", "--replicas", "300", "--seed", "5",
                     "--format", "csv", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "fvlab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_parsers():
    assert parse_tgrid("lin:0,1,3") == [0.0, 0.5, 1.0]
    assert parse_tgrid("geo:1e-3,1e-1,3") == pytest.approx([1e-3, 1e-2, 1e-1])
    for bad in ("geo:0,1,3", "lin:1,0,3", "geo:1,2", "x:1,2,3"):
        with pytest.raises(SpecParseError):
            parse_tgrid(bad)
    assert parse_mu0("uniform:0/1;2/3").points.tolist() == [[0.0, 1.0], [2.0, 3.0]]
    with pytest.raises(SpecParseError):
        parse_mu0("gauss:1")
    with pytest.raises(SpecParseError):
        ExperimentConfig("nope")
