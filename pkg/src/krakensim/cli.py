"""Command-line entry point: ``run``, ``compare``, ``sweep`` and ``validate-config``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from krakensim.config import MODES, SCENARIOS, ConfigError, RunConfig, U64_MAX, emit_config, parse_config
from krakensim.metrics import InsufficientPoints, MetricsReport, scaling_report, table_csv
from krakensim.scenarios import RunArtifacts, run_config

OUT_ENV = "KRAKENSIM_OUT"
DEFAULT_OUT = "krakensim-out"

TRACE_HEADER = "tick,seq,target,kind\n"
NEGOTIATION_HEADER = "tick,session,round,conflicts,conceding_agent\n"
REASONING_HEADER = "tick,agent,action,score,active_duals\n"
REJECTION_HEADER = "tick,subject,kind,reason\n"


class EnvelopeViolated(RuntimeError):
    pass


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed out of range: {v}")
    return v


def _pair(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def load_config(args) -> RunConfig:
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8")) if args.config else RunConfig()
    overrides = dict(args.set or [])
    if getattr(args, "scenario", None):
        overrides["run.scenario"] = args.scenario
    if args.mode:
        overrides["run.mode"] = args.mode
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    return cfg.with_overrides(overrides)


def out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def render_files(art: RunArtifacts) -> dict[str, str]:
    """Every artifact of one run, keyed by relative path."""
    files = {
        "config.txt": emit_config(art.config),
        "trace.csv": TRACE_HEADER + art.trace,
        "negotiation.csv": NEGOTIATION_HEADER + "".join(ln + "\n" for ln in art.negotiation),
        "reasoning.csv": REASONING_HEADER + "".join(ln + "\n" for ln in art.reasoning),
        "rejections.csv": REJECTION_HEADER + "".join(ln + "\n" for ln in art.rejections),
        "report.txt": art.report.to_block(),
        "ground_truth.json": json.dumps(art.sidecar, sort_keys=True, indent=1, default=str) + "\n",
    }
    for name, snap in art.snapshots.items():
        files[f"knowledge/{name}.json"] = json.dumps(snap, sort_keys=True, indent=1, default=str) + "\n"
    return files


def write_atomic(root: Path, files: dict[str, str]) -> None:
    """Stage every file next to its target, then rename them all into place."""
    staged = []
    try:
        for rel, text in sorted(files.items()):
            dest = root / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".tmp")
            staged.append((tmp, dest))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def check_envelope(art: RunArtifacts) -> None:
    collisions = art.report.extras.get("collisions", 0)
    if art.config.mode == "full-kraken" and collisions:
        raise EnvelopeViolated(f"envelope violated: {collisions} collision(s) in full-kraken mode")


def execute(cfg: RunConfig) -> tuple[RunArtifacts, float]:
    t0 = time.perf_counter()
    art = run_config(cfg)
    wall = time.perf_counter() - t0
    last = art.trace.rstrip("\n").rsplit("\n", 1)[-1]
    sim_s = int(last.split(",", 1)[0]) / 1e6 if last else 0.0
    art.report.wall_to_sim = wall / sim_s if sim_s > 0 else float("nan")
    return art, wall


def _run_one(cfg_text: str, dest: str) -> dict:
    cfg = parse_config(cfg_text)
    art, _ = execute(cfg)
    write_atomic(Path(dest), render_files(art))
    return art.report.fields()


def cmd_run(args) -> int:
    cfg = load_config(args)
    art, _ = execute(cfg)
    root = out_dir(args)
    write_atomic(root, render_files(art))
    sys.stdout.write(art.report.to_block())
    sys.stdout.write(f"wall_to_sim = {art.report.wall_to_sim:.6g}\n")
    check_envelope(art)
    return 0


def _scalar(v):
    return v if isinstance(v, (int, float, str, bool)) else str(v)


def compare_table(a: MetricsReport, b: MetricsReport, mode_a: str, mode_b: str) -> list[dict]:
    fa, fb = a.fields(), b.fields()
    rows = []
    for k in fa:
        va, vb = fa[k], fb.get(k, "")
        ratio = ""
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)) and not isinstance(va, bool):
            ratio = vb / va if va else ""
        rows.append({"metric": k, mode_a: _scalar(va), mode_b: _scalar(vb), f"{mode_b}/{mode_a}": ratio})
    return rows


def cmd_compare(args) -> int:
    cfg = load_config(args)
    modes = args.modes.split(",")
    if len(modes) != 2 or any(m not in MODES for m in modes):
        raise ConfigError(f"--modes needs two of {', '.join(MODES)}")
    root = out_dir(args)
    reports = []
    files: dict[str, str] = {}
    for m in modes:
        art, _ = execute(cfg.with_overrides({"run.mode": m}))
        reports.append(art.report)
        files.update({f"{m}/{k}": v for k, v in render_files(art).items()})
    rows = compare_table(reports[0], reports[1], *modes)
    files["compare.csv"] = table_csv(rows)
    write_atomic(root, files)
    width = max(len(r["metric"]) for r in rows)
    sys.stdout.write(f"{'metric':<{width}}  {modes[0]:>16}  {modes[1]:>16}  {'ratio':>10}\n")
    for r in rows:
        ratio = r[f"{modes[1]}/{modes[0]}"]
        ratio_txt = f"{ratio:.4g}" if isinstance(ratio, float) else str(ratio)
        sys.stdout.write(f"{r['metric']:<{width}}  {str(r[modes[0]]):>16.16}  {str(r[modes[1]]):>16.16}  {ratio_txt:>10}\n")
    return 0


def sweep_key(cfg: RunConfig, param: str) -> str:
    if "." in param:
        return param
    return f"{cfg.scenario.replace('-', '_')}.{param}"


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    key = sweep_key(cfg, args.param)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    modes = args.modes.split(",") if args.modes else [cfg.mode]
    root = out_dir(args)
    jobs = []
    for m in modes:
        for v in values:
            run_cfg = cfg.with_overrides({key: v, "run.mode": m})
            jobs.append((m, v, emit_config(run_cfg), str(root / "runs" / f"{m}-{key}={v}")))
    workers = cfg["sweep.workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fields = list(pool.map(_run_one, [j[2] for j in jobs], [j[3] for j in jobs]))
    else:
        fields = [_run_one(j[2], j[3]) for j in jobs]
    rows = [{"mode": m, key: v, **{k: _scalar(x) for k, x in f.items()}} for (m, v, _, _), f in zip(jobs, fields)]
    text = table_csv(rows)
    metric = args.metric
    try:
        ns = [float(v) for v in values]
        counts = {m: [r[metric] for r in rows if r["mode"] == m] for m in modes}
        rep = scaling_report(ns, counts)
        text += "".join(f"# slope {m} = {s:.6f}\n" for m, s in sorted(rep.slopes.items()))
    except (InsufficientPoints, ValueError, KeyError, TypeError) as e:
        text += f"# slope unavailable: {e}\n"
    write_atomic(root, {"sweep.csv": text})
    sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args)
    sys.stdout.write(emit_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="krakensim", description="Knowledge-centric network management simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="key = value config file")
        sp.add_argument("--seed", type=_u64, metavar="U64")
        sp.add_argument("--mode", choices=MODES)
        sp.add_argument("--scenario", choices=SCENARIOS)
        sp.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--set", type=_pair, action="append", metavar="KEY=VALUE", help="override one config key")

    sp = sub.add_parser("run", help="run one scenario and write its artifacts")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("compare", help="run two modes on the same seed side by side")
    common(sp)
    sp.add_argument("--modes", default="data-centric,full-kraken")
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("sweep", help="run over a list of values of one key")
    common(sp)
    sp.add_argument("--param", required=True, help="config key, or a bare name inside the scenario's section")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--modes", help="comma-separated modes (default: the configured mode)")
    sp.add_argument("--metric", default="sync_messages", help="report field used for the log-log slope")
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("validate-config", help="parse and echo the effective config")
    common(sp)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EnvelopeViolated as e:
        print(f"krakensim: {e}", file=sys.stderr)
        return 3
    except ConfigError as e:
        print(f"krakensim: config: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        mod = type(e).__module__.replace("builtins", "krakensim")
        print(f"krakensim: {mod}.{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
