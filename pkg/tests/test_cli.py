"""CLI tests: config handling, CSV reports, determinism, plots, exit codes."""

import os

import pytest

from qecsplit.cli import (
    CSV_HEADER,
    ConfigError,
    RunConfig,
    config_from_mapping,
    load_config,
    main,
    parse_config_text,
    render_plot,
    serialize_config,
)


def run_cli(args):
    return main(list(args))


def test_config_round_trip():
    cfg = RunConfig(d=5, p=2e-3, method="split", p_target=1e-4,
                    timings=True, out="x.csv")
    text = serialize_config(cfg)
    again = config_from_mapping(parse_config_text(text))
    assert again == cfg
    assert serialize_config(again) == text


def test_config_comments_and_blank_lines(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# a comment\n\nd=5\np = 2e-3\n")
    cfg = load_config(str(path), {})
    assert cfg.d == 5
    assert cfg.p == 2e-3


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        config_from_mapping({"distance": "3"})


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        load_config(None, {"d": "4"})
    with pytest.raises(ConfigError):
        load_config(None, {"method": "bogus"})
    with pytest.raises(ConfigError):
        load_config(None, {"p": "1.5"})
    with pytest.raises(ConfigError):
        load_config(None, {"method": "split"})  # missing p_target
    with pytest.raises(ConfigError):
        load_config(None, {"method": "split", "p": "1e-4",
                           "p_target": "1e-3"})


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("d=5\nseed=1\n")
    cfg = load_config(str(path), {"d": "3"})
    assert cfg.d == 3
    assert cfg.seed == 1


def test_missing_config_file_exit_1(capsys):
    assert run_cli(["run", "--config", "/nonexistent/cfg.txt"]) == 1
    assert "error:" in capsys.readouterr().err


def test_build_output(tmp_path, capsys):
    out = tmp_path / "circ.txt"
    assert run_cli(["build", "--d", "3", "--output", str(out)]) == 0
    text = out.read_text()
    assert len([l for l in text.splitlines()
                if not l.startswith(("DETECTOR", "LOGICAL"))]) == 240
    assert run_cli(["build", "--d", "3"]) == 0
    assert capsys.readouterr().out == text


def mc_args(out, seed="0", extra=()):
    return ["run", "--method", "mc", "--d", "3", "--p", "2e-2",
            "--stop-failures", "20", "--seed", seed, "--out", out,
            *extra]


def test_mc_report_schema_and_determinism(tmp_path, monkeypatch, capsys):
    # identical invocations from two directories: the embedded config
    # (including the relative out path) and all rows must match byte for byte
    dir1 = tmp_path / "run1"
    dir2 = tmp_path / "run2"
    dir1.mkdir()
    dir2.mkdir()
    monkeypatch.chdir(dir1)
    assert run_cli(mc_args("report.csv")) == 0
    monkeypatch.chdir(dir2)
    assert run_cli(mc_args("report.csv")) == 0
    out1 = dir1 / "report.csv"
    out2 = dir2 / "report.csv"
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    config_lines = [l for l in lines if l.startswith("# ")]
    assert any(l == "# method=mc" for l in config_lines)
    data = [l for l in lines if not l.startswith("#")]
    assert data[0] == CSV_HEADER
    assert len(data) == 2
    parts = data[1].split(",")
    assert len(parts) == 9
    assert parts[1] == "Z"
    assert float(parts[2]) > 0
    assert parts[8] == "0.000"


def test_determinism_under_thread_env(tmp_path, monkeypatch):
    dir1 = tmp_path / "run1"
    dir2 = tmp_path / "run2"
    dir1.mkdir()
    dir2.mkdir()
    args = ["run", "--method", "split", "--d", "3", "--p", "2e-2",
            "--p-target", "1.2e-2", "--stop-failures", "20",
            "--chains", "4", "--min-jumps", "3", "--min-chains-ok", "3",
            "--max-samples", "60", "--seed", "5", "--out", "report.csv"]
    monkeypatch.setenv("QEC_THREADS", "1")
    monkeypatch.chdir(dir1)
    assert run_cli(args) == 0
    monkeypatch.setenv("QEC_THREADS", "4")
    monkeypatch.chdir(dir2)
    assert run_cli(args) == 0
    assert (dir1 / "report.csv").read_bytes() == \
        (dir2 / "report.csv").read_bytes()


def test_split_report_rows(tmp_path):
    out = tmp_path / "s.csv"
    code = run_cli(["run", "--method", "split", "--d", "3", "--p", "2e-2",
                    "--p-target", "1e-2", "--stop-failures", "20",
                    "--chains", "4", "--min-jumps", "3",
                    "--min-chains-ok", "3", "--max-samples", "80",
                    "--seed", "2", "--out", str(out)])
    assert code == 0
    data = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert data[0] == CSV_HEADER
    assert len(data) >= 3          # setup row plus at least one step
    first = data[1].split(",")
    assert first[3] == ""          # no ratio on the setup MC row
    step = data[2].split(",")
    assert 0.0 < float(step[3]) <= 1.0
    assert int(step[4]) <= int(step[5])     # jumps_min <= jumps_max
    assert int(step[6]) > 0                 # decoder calls
    # rhat is nan when chains converge within a single sampling block
    rhat = float(step[7])
    assert rhat > 0.0 or rhat != rhat
    ps = [float(l.split(",")[0]) for l in data[1:]]
    assert ps == sorted(ps, reverse=True)


def test_split_partial_convergence_exit_2(tmp_path):
    out = tmp_path / "p.csv"
    code = run_cli(["run", "--method", "split", "--d", "3", "--p", "2e-2",
                    "--p-target", "1.5e-2", "--stop-failures", "20",
                    "--chains", "4", "--min-jumps", "100000",
                    "--min-chains-ok", "4", "--max-samples", "30",
                    "--seed", "2", "--out", str(out)])
    assert code == 2
    assert os.path.exists(out)     # partial results still written


def test_plot_polylines_and_determinism(tmp_path):
    csv = tmp_path / "r.csv"
    rows = [CSV_HEADER]
    for obs in ("X", "Z"):
        for p, rate in ((1e-3, 1e-4), (5e-4, 2e-5)):
            rows.append(f"{p:.6e},{obs},{rate:.6e},,0,0,0,,0.000")
    csv.write_text("\n".join(rows) + "\n")
    svg1 = tmp_path / "a.svg"
    svg2 = tmp_path / "b.svg"
    assert run_cli(["plot", str(csv), "--output", str(svg1)]) == 0
    assert run_cli(["plot", str(csv), "--output", str(svg2)]) == 0
    content = svg1.read_text()
    assert content.count("<polyline") == 2
    assert content.startswith("<svg ")
    assert svg1.read_bytes() == svg2.read_bytes()


def test_plot_two_files_four_series(tmp_path):
    rows = [CSV_HEADER, f"{1e-3:.6e},Z,{1e-4:.6e},,0,0,0,,0.000",
            f"{5e-4:.6e},Z,{1e-5:.6e},,0,0,0,,0.000"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("\n".join(rows) + "\n")
    b.write_text("\n".join(rows) + "\n")
    svg = render_plot([str(a), str(b)])
    assert svg.count("<polyline") == 2
    assert "a.csv:Z" in svg and "b.csv:Z" in svg


def test_plot_errors(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run_cli(["plot", str(empty), "--output",
                    str(tmp_path / "x.svg")]) == 1
    assert "header" in capsys.readouterr().err

    bad = tmp_path / "bad.csv"
    bad.write_text(CSV_HEADER + "\n1e-3,Z,oops\n")
    assert run_cli(["plot", str(bad), "--output",
                    str(tmp_path / "y.svg")]) == 1
    err = capsys.readouterr().err
    assert "line 2" in err


def test_malignant_fraction_subcommand(capsys):
    code = run_cli(["malignant-fraction", "--d", "3", "--k", "1",
                    "--mode", "exhaustive", "--budget", "5000"])
    assert code == 0
    out = capsys.readouterr().out
    assert "fraction=0.000000" in out
    assert "(0/2256)" in out
