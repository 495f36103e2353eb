import csv
import io
import math

import numpy as np
import pytest

from drbqo.bench import ci96
from drbqo.cli import (
    OUTPUT_ENV,
    SUMMARY_HEADER,
    ConfigError,
    cmd_run,
    cmd_solve_weights,
    main,
    parse_config_text,
    raw_header,
    read_raw,
)

MINIMAL = """\
# tiny smoke run
problem = logistic
algorithms = DRBQO, BQO_TS
rho = 1.0
T = 2
repetitions = 2
master_seed = 3
learn = false
candidates = 20
regret_grid = 21
"""


def write_config(tmp_path, text, out="out"):
    path = tmp_path / "exp.cfg"
    path.write_text(text + f"output_dir = {tmp_path / out}\n")
    return path


def solve_row(l, rho, eps=None):
    out, err = io.StringIO(), io.StringIO()
    code = cmd_solve_weights(l, rho, eps, out=out, err=err)
    return code, out.getvalue().strip(), err.getvalue()


def test_parse_config():
    values = parse_config_text("rho = 0.5, 1  # two radii\n\nlearn = yes\n")
    assert values == {"rho": (0.5, 1.0), "learn": True}
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("T = 3\ncolour = red\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("T = three\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("T = 1\nT = 2\n")
    with pytest.raises(ConfigError, match="line 3"):
        parse_config_text("T = 1\n\njust words\n")


def test_minimal_config_runs(tmp_path):
    cfg = write_config(tmp_path, MINIMAL)
    out = io.StringIO()
    assert cmd_run(cfg, out=out, err=io.StringIO()) == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["config.resolved.txt", "raw.csv", "summary.csv"]
    with open(tmp_path / "out" / "raw.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == raw_header(2)
    assert rows[0][:4] == ["algorithm", "rho", "repetition", "iteration"]
    assert len(rows) == 1 + 2 * 2 * 2
    with open(tmp_path / "out" / "summary.csv") as fh:
        assert next(csv.reader(fh)) == SUMMARY_HEADER


def test_summary_round_trips_from_raw(tmp_path):
    cfg = write_config(tmp_path, MINIMAL.replace("repetitions = 2", "repetitions = 3"))
    assert cmd_run(cfg, out=io.StringIO(), err=io.StringIO()) == 0
    raw = read_raw(tmp_path / "out" / "raw.csv")
    with open(tmp_path / "out" / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    for row in summary:
        cell = [r for r in raw if r["algorithm"] == row["algorithm"]
                and r["rho"] == float(row["rho"]) and r["iteration"] == float(row["iteration"])]
        regs = [r["rho_regret"] for r in cell]
        emps = [r["empirical_value"] for r in cell]
        # raw values carry 12 significant digits
        assert float(row["mean_regret"]) == pytest.approx(np.mean(regs), rel=1e-9, abs=1e-11)
        assert float(row["ci96_regret"]) == pytest.approx(ci96(regs), rel=1e-6, abs=1e-10)
        assert float(row["mean_empirical"]) == pytest.approx(np.mean(emps), rel=1e-9)
        assert float(row["ci96_empirical"]) == pytest.approx(ci96(emps), rel=1e-6, abs=1e-10)
        assert float(row["log10_mean_regret"]) == pytest.approx(
            math.log10(max(float(row["mean_regret"]), 1e-12)), rel=1e-9)


def test_unknown_algorithm_is_config_error(tmp_path):
    cfg = write_config(tmp_path, MINIMAL.replace("DRBQO, BQO_TS", "DRBQO, FANCY_BO"))
    err = io.StringIO()
    assert cmd_run(cfg, out=io.StringIO(), err=err) == 1
    assert "FANCY_BO" in err.getvalue() and "line 3" in err.getvalue()
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path):
    assert cmd_run(tmp_path / "nope.cfg", out=io.StringIO(), err=io.StringIO()) == 1


def test_rerun_is_byte_identical(tmp_path):
    a = write_config(tmp_path, MINIMAL, "a")
    assert cmd_run(a, out=io.StringIO(), err=io.StringIO()) == 0
    b = write_config(tmp_path, MINIMAL, "b")
    assert cmd_run(b, out=io.StringIO(), err=io.StringIO()) == 0
    for name in ("raw.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = write_config(tmp_path, MINIMAL, "a")
    assert cmd_run(cfg, out=io.StringIO(), err=io.StringIO()) == 0
    first = (tmp_path / "a" / "raw.csv").read_bytes()
    assert cmd_run(cfg, seed=99, out=io.StringIO(), err=io.StringIO()) == 0
    assert (tmp_path / "a" / "raw.csv").read_bytes() != first
    assert "master_seed = 99" in (tmp_path / "a" / "config.resolved.txt").read_text()


def test_output_dir_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, MINIMAL, "ignored")
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cmd_run(cfg, out=io.StringIO(), err=io.StringIO()) == 0
    assert (tmp_path / "env" / "raw.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_partial_failure_exit_code(tmp_path, monkeypatch):
    import drbqo.bench as bench

    real = bench.baseline_run

    def flaky(algorithm, problem, contexts, config, seed):
        if algorithm == "BQO_TS":
            raise FloatingPointError("diverged")
        return real(algorithm, problem, contexts, config, seed)

    monkeypatch.setattr(bench, "baseline_run", flaky)
    cfg = write_config(tmp_path, MINIMAL)
    assert cmd_run(cfg, out=io.StringIO(), err=io.StringIO()) == 2
    failed = (tmp_path / "out" / "failed.csv").read_text()
    assert "diverged" in failed and "BQO_TS" in failed


def test_solve_weights_examples():
    code, row, _ = solve_row("0,1", "0.25")
    fields = [float(v) for v in row.split(",")]
    assert code == 0 and fields[0] == 2 and fields[1] == 0.25
    assert fields[4] == pytest.approx(0.146447, abs=1e-6)
    assert fields[5:] == pytest.approx([0.853553, 0.146447], abs=1e-6)
    code, row, _ = solve_row("3,1,2", "10")
    assert row.split(",")[5:] == ["0", "1", "0"]
    code, row, _ = solve_row("1,2,6", "0")
    assert [float(v) for v in row.split(",")[5:]] == pytest.approx([1 / 3] * 3, abs=1e-12)
    assert row.split(",")[5] == "0.333333333333"


def test_solve_weights_errors():
    assert solve_row("a,b", "1")[0] == 1
    assert solve_row("1", "1")[0] == 1
    assert solve_row("1,2", "x")[0] == 1
    assert solve_row("1,2", "-1")[0] == 1


def test_main_dispatch(tmp_path, capsys):
    assert main(["solve-weights", "--l", "0,1", "--rho", "0.25"]) == 0
    assert capsys.readouterr().out.startswith("2,0.25,")
    cfg = write_config(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "--jobs", "1"]) == 0
    assert (tmp_path / "out" / "raw.csv").exists()
    with pytest.raises(SystemExit):
        main(["frobnicate"])
