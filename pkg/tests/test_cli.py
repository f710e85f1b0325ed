import csv
import io
import os
import subprocess
import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

from krakensim import cli
from krakensim.metrics import scaling_report


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_run_twice_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert cli.main(["run", "--scenario", "intersection", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert a == b
    for name in ("config.txt", "trace.csv", "negotiation.csv", "reasoning.csv", "rejections.csv", "report.txt"):
        assert name in a
    assert any(k.startswith("knowledge/") for k in a)
    assert a["trace.csv"].startswith(b"tick,seq,target,kind\n")
    assert a["negotiation.csv"].startswith(b"tick,session,round,conflicts,conceding_agent\n")
    assert a["reasoning.csv"].startswith(b"tick,agent,action,score,active_duals\n")
    assert a["rejections.csv"].startswith(b"tick,subject,kind,reason\n")
    out = capsys.readouterr().out
    assert "semantic_efficiency = " in out and "wall_to_sim = " in out


@pytest.mark.parametrize("scenario", ["xr", "sensing", "dual-toy"])
def test_echoed_config_reproduces_run(tmp_path, scenario):
    first = tmp_path / "first"
    cli.main(["run", "--scenario", scenario, "--seed", "3", "--set", "metrics.warmup_steps=2", "--out", str(first)])
    again = tmp_path / "again"
    cli.main(["run", "--config", str(first / "config.txt"), "--out", str(again)])
    assert tree(first) == tree(again)


def test_out_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--scenario", "dual-toy", "--set", "dual_toy.steps=50"]) == 0
    assert (tmp_path / "env" / "report.txt").is_file()


def test_compare_table(tmp_path, capsys):
    rc = cli.main(["compare", "--scenario", "sensing", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    rows = {r["metric"]: r for r in csv.DictReader(io.StringIO((tmp_path / "compare.csv").read_text()))}
    tb = rows["total_bits"]
    assert float(tb["full-kraken/data-centric"]) == pytest.approx(int(tb["full-kraken"]) / int(tb["data-centric"]))
    for m in ("data-centric", "full-kraken"):
        assert (tmp_path / m / "report.txt").is_file()
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["metric", "data-centric", "full-kraken", "ratio"]


def test_sweep_slope_matches_scaling_report(tmp_path, capsys):
    rc = cli.main(
        ["sweep", "--scenario", "sync", "--param", "n", "--values", "8,16,32,64",
         "--modes", "semantic,full-kraken", "--out", str(tmp_path)]
    )
    assert rc == 0
    text = (tmp_path / "sweep.csv").read_text()
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert len(rows) == 8 and "sync.n" in rows[0]
    counts = {m: [int(r["sync_messages"]) for r in rows if r["mode"] == m] for m in ("semantic", "full-kraken")}
    rep = scaling_report([8, 16, 32, 64], counts)
    for m, s in rep.slopes.items():
        assert f"# slope {m} = {s:.6f}" in text
    assert rep.slopes["full-kraken"] <= 1.3
    assert (tmp_path / "runs" / "semantic-sync.n=8" / "report.txt").is_file()


def test_parallel_sweep_matches_serial(tmp_path, capsys):
    args = ["sweep", "--scenario", "sync", "--param", "n", "--values", "8,16,32,64"]
    cli.main(args + ["--out", str(tmp_path / "serial")])
    cli.main(args + ["--set", "sweep.workers=2", "--out", str(tmp_path / "par")])
    assert (tmp_path / "serial" / "sweep.csv").read_text() == (tmp_path / "par" / "sweep.csv").read_text()


def test_validate_config(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("scenario = xr\nseed = 5\n")
    assert cli.main(["validate-config", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "run.scenario = xr\n" in out and "run.seed = 5\n" in out
    cfg.write_text("negotiation.r_max = 0\n")
    assert cli.main(["validate-config", "--config", str(cfg)]) == 2
    assert "must be >= 1" in capsys.readouterr().err
    assert cli.main(["validate-config", "--set", "bogus.key=1"]) == 2
    assert cli.main(["validate-config", "--config", str(tmp_path / "missing.txt")]) == 1


@pytest.mark.parametrize("argv", [["run", "--seed", "-1"], ["run", "--seed", str(2**64)], ["run", "--mode", "x"], ["run", "--set", "novalue"]])
def test_argument_errors(argv, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(argv)
    assert e.value.code == 2


def test_failed_write_leaves_nothing(tmp_path, monkeypatch):
    real_fdopen = os.fdopen
    opened = []

    def flaky(fd, *a, **k):
        opened.append(fd)
        if len(opened) == 3:
            os.close(fd)
            raise OSError("disk full")
        return real_fdopen(fd, *a, **k)

    monkeypatch.setattr(cli.os, "fdopen", flaky)
    with pytest.raises(OSError):
        cli.write_atomic(tmp_path, {f"f{i}.txt": "x" for i in range(5)})
    assert list(tmp_path.iterdir()) == []


def test_failed_run_keeps_previous_artifacts(tmp_path, capsys):
    cli.main(["run", "--scenario", "dual-toy", "--set", "dual_toy.steps=20", "--out", str(tmp_path)])
    before = tree(tmp_path)
    assert cli.main(["run", "--scenario", "dual-toy", "--set", "negotiation.r_max=0", "--out", str(tmp_path)]) == 2
    assert tree(tmp_path) == before


def test_envelope_violation_exit_code(monkeypatch, tmp_path, capsys):
    art = SimpleNamespace(config=SimpleNamespace(mode="full-kraken"), report=SimpleNamespace(extras={"collisions": 2}))
    with pytest.raises(cli.EnvelopeViolated):
        cli.check_envelope(art)
    art.config.mode = "semantic"
    cli.check_envelope(art)

    def boom(a):
        raise cli.EnvelopeViolated("envelope violated: 1 collision(s)")

    monkeypatch.setattr(cli, "check_envelope", boom)
    assert cli.main(["run", "--scenario", "dual-toy", "--set", "dual_toy.steps=10", "--out", str(tmp_path)]) == 3
    assert "collision" in capsys.readouterr().err


def test_console_script_entry(tmp_path):
    env = dict(os.environ, **{cli.OUT_ENV: str(tmp_path)})
    res = subprocess.run(
        [sys.executable, "-m", "krakensim.cli", "run", "--scenario", "dual-toy", "--set", "dual_toy.steps=20"],
        env=env, capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "report.txt").read_text() in res.stdout
