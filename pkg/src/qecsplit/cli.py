"""Command-line front end: builds, estimation runs, CSV reports, SVG plots.

Configuration is a flat key=value text file; command-line flags override
file values.  Reports use a fixed CSV schema with the resolved
configuration embedded as comment lines, so every figure is
self-describing.  Plots are hand-assembled SVG with deterministic bytes
for fixed input.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .circuit import (
    InvalidParameterError,
    NoiseModel,
    build_rotated_surface_code,
    serialize_circuit,
)
from .estimator import (
    EstimationError,
    FractionEstimate,
    Schedule,
    SplitReport,
    generate_schedule,
    malignant_fraction,
    mc_estimate,
    run_splitting,
    subset_sampling_estimate,
)
from .pauli import SyndromeTable

CSV_HEADER = ("p,observable,rate,ratio,jumps_min,jumps_max,"
              "decoder_calls,rhat,seconds")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    d: int = 3
    rounds: int = 0                 # 0 means the default 2d
    observable: str = "Z"           # X, Z, or both
    method: str = "mc"              # mc, subset, split
    p: float = 1e-3                 # mc/subset rate; split start when p_start unset
    p_start: float = 0.0
    p_target: float = 0.0
    stop_failures: int = 1000
    max_shots: int = 100_000_000
    subset_m: int = 4
    subset_shots: int = 10_000
    schedule: str = ""              # comma-separated override points
    w_count: int = 0                # schedule weight count; 0 means gate count
    chains: int = 20
    min_jumps: int = 10
    min_chains_ok: int = 18
    max_samples: int = 2000
    region: str = ""                # comma-separated qubit ids
    multiplier: float = 1.0
    seed: int = 0
    out: str = "report.csv"
    timings: bool = False


_BOOL_KEYS = {"timings"}


def parse_config_text(text: str) -> Dict[str, str]:
    """key=value lines; '#' comments and blank lines ignored."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: Dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    valid = {f.name: f.type for f in fields(RunConfig)}
    updates = {}
    for key, value in mapping.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            updates[key] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            updates[key] = int(value)
        elif isinstance(current, float):
            updates[key] = float(value)
        else:
            updates[key] = value
    return replace(cfg, **updates)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = format(value, ".12g")
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def load_config(path: Optional[str], overrides: Dict[str, str]) -> RunConfig:
    mapping: Dict[str, str] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            mapping.update(parse_config_text(fh.read()))
    mapping.update(overrides)       # flags win
    cfg = config_from_mapping(mapping)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.d < 3 or cfg.d % 2 == 0:
        raise ConfigError("d must be an odd integer >= 3")
    if cfg.observable not in ("X", "Z", "both"):
        raise ConfigError("observable must be X, Z, or both")
    if cfg.method not in ("mc", "subset", "split"):
        raise ConfigError("method must be mc, subset, or split")
    for name in ("p", "p_start", "p_target"):
        value = getattr(cfg, name)
        if value and not 0.0 < value < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1)")
    if cfg.method == "split":
        p_start = cfg.p_start or cfg.p
        p_target = cfg.p_target
        if not p_target:
            raise ConfigError("split method requires p_target")
        if p_target > p_start:
            raise ConfigError("p_target must not exceed p_start")


def _observables(cfg: RunConfig) -> List[str]:
    return ["X", "Z"] if cfg.observable == "both" else [cfg.observable]


def _noise(cfg: RunConfig, circuit) -> NoiseModel:
    region = None
    if cfg.region:
        region = [int(q) for q in cfg.region.split(",") if q.strip()]
    return NoiseModel(circuit, cfg.p_start or cfg.p, region, cfg.multiplier)


def _fmt(x: float) -> str:
    return format(x, ".6e")


def _csv_row(p: float, observable: str, rate: float, ratio: str,
             jumps: Tuple[int, int], decoder_calls: int, rhat: str,
             seconds: float, timings: bool) -> str:
    sec = format(seconds, ".3f") if timings else "0.000"
    return (f"{_fmt(p)},{observable},{_fmt(rate)},{ratio},"
            f"{jumps[0]},{jumps[1]},{decoder_calls},{rhat},{sec}")


def _write_report(path: str, cfg: RunConfig, rows: List[str]) -> None:
    lines = [f"# {line}" for line in serialize_config(cfg).splitlines()]
    lines.append(CSV_HEADER)
    lines.extend(rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_build(args: argparse.Namespace) -> int:
    circuit = build_rotated_surface_code(
        args.d, args.rounds if args.rounds else None, args.basis)
    text = serialize_circuit(circuit)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(cfg: RunConfig) -> int:
    circuit = build_rotated_surface_code(cfg.d,
                                         cfg.rounds if cfg.rounds else None)
    noise = _noise(cfg, circuit)
    table = SyndromeTable(circuit)
    rows: List[str] = []
    exit_code = 0

    for observable in _observables(cfg):
        if cfg.method == "mc":
            rate, shots, fails = mc_estimate(
                circuit, noise, cfg.p, cfg.stop_failures, cfg.max_shots,
                observable=observable, seed=cfg.seed)
            print(f"p={_fmt(cfg.p)} obs={observable} rate={_fmt(rate)} "
                  f"shots={shots}")
            rows.append(_csv_row(cfg.p, observable, rate, "", (0, 0),
                                 0, "", 0.0, cfg.timings))
        elif cfg.method == "subset":
            est = subset_sampling_estimate(
                circuit, noise, cfg.p, cfg.subset_m, cfg.subset_shots,
                observable=observable, seed=cfg.seed)
            print(f"p={_fmt(cfg.p)} obs={observable} rate={_fmt(est.rate)} "
                  f"zero_strata={est.zero_strata}")
            rows.append(_csv_row(cfg.p, observable, est.rate, "", (0, 0),
                                 0, "", 0.0, cfg.timings))
        else:
            p_start = cfg.p_start or cfg.p
            if cfg.schedule:
                points = [float(x) for x in cfg.schedule.split(",")]
                sched = Schedule(points, [])
            else:
                sched = generate_schedule(
                    p_start, cfg.p_target, cfg.d,
                    cfg.w_count or circuit.num_gates)
            report = run_splitting(
                circuit, noise, sched, chains=cfg.chains,
                min_jumps=cfg.min_jumps, min_chains_ok=cfg.min_chains_ok,
                seed=cfg.seed, observable=observable,
                stop_failures=max(cfg.stop_failures, 10),
                max_samples_per_chain=cfg.max_samples, table=table)
            print(f"p={_fmt(sched.points[0])} obs={observable} "
                  f"rate={_fmt(report.mc_rate)} (setup MC, "
                  f"{report.mc_shots} shots)")
            rows.append(_csv_row(sched.points[0], observable, report.mc_rate,
                                 "", (0, 0), 0, "", 0.0, cfg.timings))
            for rec in report.steps:
                flag = "" if rec.converged else " [partial]"
                print(f"p={_fmt(rec.p)} obs={observable} "
                      f"rate={_fmt(rec.rate)} ratio={rec.ratio:.4f} "
                      f"rhat={rec.rhat:.3f}{flag}")
                rows.append(_csv_row(
                    rec.p, observable, rec.rate, format(rec.ratio, ".6e"),
                    (rec.jumps_min, rec.jumps_max), rec.decoder_calls,
                    format(rec.rhat, ".4f"), rec.seconds, cfg.timings))
            if not report.converged:
                exit_code = 2
    _write_report(cfg.out, cfg, rows)
    return exit_code


def _read_series(path: str) -> Dict[str, List[Tuple[float, float]]]:
    series: Dict[str, List[Tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    data = [l for l in lines if l and not l.startswith("#")]
    if not data or data[0] != CSV_HEADER:
        raise ConfigError(f"{path}: missing or wrong CSV header")
    for lineno, line in enumerate(data[1:], 2):
        parts = line.split(",")
        if len(parts) != len(CSV_HEADER.split(",")):
            raise ConfigError(f"{path}: malformed CSV line {lineno}: {line!r}")
        try:
            p = float(parts[0])
            rate = float(parts[2])
        except ValueError as err:
            raise ConfigError(
                f"{path}: malformed CSV line {lineno}: {line!r}") from err
        if p > 0 and rate > 0:
            series.setdefault(parts[1], []).append((p, rate))
    return series


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#17becf")


def render_plot(csv_paths: Sequence[str]) -> str:
    """Self-contained log-log SVG, one polyline per (file, observable)."""
    all_series: List[Tuple[str, List[Tuple[float, float]]]] = []
    for path in csv_paths:
        for observable, pts in sorted(_read_series(path).items()):
            label = f"{os.path.basename(path)}:{observable}"
            all_series.append((label, sorted(pts)))
    if not all_series:
        raise ConfigError("no plottable series found")

    xs = [math.log10(p) for _, pts in all_series for p, _ in pts]
    ys = [math.log10(r) for _, pts in all_series for _, r in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    width, height = 640.0, 480.0
    ml, mr, mt, mb = 70.0, 20.0, 20.0, 50.0

    def sx(lx: float) -> float:
        return ml + (lx - x0) / (x1 - x0) * (width - ml - mr)

    def sy(ly: float) -> float:
        return height - mb - (ly - y0) / (y1 - y0) * (height - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
        f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<path d="M {ml:g} {mt:g} L {ml:g} {height - mb:g} '
        f'L {width - mr:g} {height - mb:g}" fill="none" stroke="black"/>',
    ]
    for dec in range(math.floor(x0), math.floor(x1) + 1):
        if x0 <= dec <= x1:
            x = sx(dec)
            out.append(f'<path d="M {x:.2f} {height - mb:g} '
                       f'L {x:.2f} {height - mb + 6:g}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{height - mb + 20:g}" '
                       'font-size="12" text-anchor="middle">'
                       f'1e{dec}</text>')
    for dec in range(math.floor(y0), math.floor(y1) + 1):
        if y0 <= dec <= y1:
            y = sy(dec)
            out.append(f'<path d="M {ml:g} {y:.2f} '
                       f'L {ml - 6:g} {y:.2f}" stroke="black"/>')
            out.append(f'<text x="{ml - 10:g}" y="{y + 4:.2f}" '
                       'font-size="12" text-anchor="end">'
                       f'1e{dec}</text>')
    out.append(f'<text x="{(ml + width - mr) / 2:g}" y="{height - 8:g}" '
               'font-size="14" text-anchor="middle">p</text>')
    out.append(f'<text x="16" y="{(mt + height - mb) / 2:g}" font-size="14" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{(mt + height - mb) / 2:g})">logical rate</text>')
    for i, (label, pts) in enumerate(all_series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(math.log10(p)):.2f},{sy(math.log10(r)):.2f}"
                          for p, r in pts)
        out.append(f'<polyline points="{coords}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - mr - 4:g}" y="{mt + 16 + 16 * i:g}" '
                   f'font-size="12" text-anchor="end" fill="{color}">'
                   f'{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args: argparse.Namespace) -> int:
    svg = render_plot(args.csv)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return 0


def cmd_malignant_fraction(args: argparse.Namespace) -> int:
    circuit = build_rotated_surface_code(args.d)
    noise = NoiseModel.uniform(circuit, args.p)
    est = malignant_fraction(circuit, noise, args.k, mode=args.mode,
                             budget=args.budget, observable=args.observable,
                             seed=args.seed)
    print(f"d={args.d} k={args.k} mode={est.mode} "
          f"fraction={est.fraction:.6f} "
          f"ci=[{est.ci_low:.6f},{est.ci_high:.6f}] "
          f"({est.malignant}/{est.total})")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qecsplit",
        description="Logical failure-rate estimation for surface-code "
                    "syndrome extraction, by direct MC or multilevel "
                    "splitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="dump a circuit description")
    b.add_argument("--d", type=int, default=3)
    b.add_argument("--rounds", type=int, default=0)
    b.add_argument("--basis", default="Z", choices=("X", "Z"))
    b.add_argument("--output", default="")

    r = sub.add_parser("run", help="run an estimation and write a CSV report")
    r.add_argument("--config", default=None)
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _BOOL_KEYS:
            r.add_argument(flag, action="store_true", default=None)
        else:
            r.add_argument(flag, default=None)

    p = sub.add_parser("plot", help="render a log-log SVG from CSV reports")
    p.add_argument("csv", nargs="*")
    p.add_argument("--output", default="plot.svg")

    m = sub.add_parser("malignant-fraction",
                       help="fraction of weight-k events that are malignant")
    m.add_argument("--d", type=int, default=3)
    m.add_argument("--k", type=int, default=2)
    m.add_argument("--p", type=float, default=1e-3)
    m.add_argument("--mode", default="sampled",
                   choices=("exhaustive", "sampled"))
    m.add_argument("--budget", type=int, default=100_000)
    m.add_argument("--observable", default="Z", choices=("X", "Z"))
    m.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "build":
            return cmd_build(args)
        if args.command == "run":
            overrides = {
                f.name: (("true" if getattr(args, f.name) else "false")
                         if f.name in _BOOL_KEYS
                         else str(getattr(args, f.name)))
                for f in fields(RunConfig)
                if getattr(args, f.name) is not None}
            cfg = load_config(args.config, overrides)
            return cmd_run(cfg)
        if args.command == "plot":
            return cmd_plot(args)
        if args.command == "malignant-fraction":
            return cmd_malignant_fraction(args)
    except (ConfigError, InvalidParameterError, EstimationError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
