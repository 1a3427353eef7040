"""Command-line front end: ``hybrid-auth simulate | analyze | optimize | replay``.

Exit codes: 0 success, 1 configuration error, 2 I/O or malformed input,
3 invariant violation under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .adversaries import ATTACKS, StrategyParams, optimal_vector
from .montecarlo import (
    DEFAULT_CHUNK,
    ENGINES,
    Counts,
    Experiment,
    analytic_bit_accept,
    analytic_round_accept,
    chunks,
    default_jobs,
    run_experiment,
    run_faithful_chunk,
)
from .protocol import MalformedTranscript, SourceMode, SourceModel, read_transcripts, replay
from .quantum import BellKind

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_STRICT = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _bounded_float(lo, hi, name):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}")
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"{name} must lie in [{lo}, {hi}], got {v}")
        return v

    return parse


def _int_at_least(lo, name, hi=None):
    def parse(text):
        try:
            v = int(text, 0)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}")
        if v < lo or (hi is not None and v > hi):
            raise argparse.ArgumentTypeError(f"{name} out of range: {v}")
        return v

    return parse


def _bell(text):
    try:
        return BellKind(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown Bell state {text!r}; choose from {[b.value for b in BellKind]}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    trials: int
    master_seed: int
    engine: str = "batch"
    jobs: int = 1
    chunk_size: int = DEFAULT_CHUNK
    out: str | None = None
    transcripts: str | None = None
    strict: bool = False

    def echo(self) -> dict:
        return {
            **self.experiment.describe(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "engine": self.engine,
            "chunk_size": self.chunk_size,
        }


@dataclass(frozen=True)
class RunSummary:
    accept_count: int
    trials: int
    empirical_rate: float
    wilson_lo: float
    wilson_hi: float
    analytic_reference: float | None
    bit_passes: int
    bit_total: int
    analytic_bit_reference: float | None
    wall_time: float

    @classmethod
    def from_counts(cls, counts: Counts, reference, bit_reference, wall_time, z: float = 5.0) -> "RunSummary":
        lo, hi = analysis.wilson_interval(counts.accepts, counts.trials, z)
        return cls(
            counts.accepts,
            counts.trials,
            counts.accepts / counts.trials,
            lo,
            hi,
            reference,
            counts.bit_passes,
            counts.bit_total,
            bit_reference,
            wall_time,
        )

    @property
    def bit_rate(self) -> float:
        return self.bit_passes / self.bit_total

    def reference_within_interval(self) -> bool:
        if self.analytic_reference is None:
            return True
        return self.wilson_lo <= self.analytic_reference <= self.wilson_hi

    def to_dict(self) -> dict:
        """Everything except wall time, so summaries are reproducible byte for byte."""
        return {
            "accept_count": self.accept_count,
            "trials": self.trials,
            "empirical_rate": self.empirical_rate,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "wilson_z": 5.0,
            "analytic_reference": self.analytic_reference,
            "bit_passes": self.bit_passes,
            "bit_total": self.bit_total,
            "bit_rate": self.bit_rate,
            "analytic_bit_reference": self.analytic_bit_reference,
        }


def summary_json(config: ExperimentConfig, summary: RunSummary) -> str:
    return json.dumps({"config": config.echo(), **summary.to_dict()}, sort_keys=True, indent=2) + "\n"


def cmd_simulate(config: ExperimentConfig) -> RunSummary:
    exp = config.experiment
    t0 = time.perf_counter()
    if config.transcripts:
        counts = Counts()
        with open(config.transcripts, "w"):
            pass
        for _, s, e in chunks(config.trials, config.chunk_size):
            part, kept = run_faithful_chunk(exp, config.master_seed, s, e, keep_transcripts=True)
            counts = counts + part
            with open(config.transcripts, "a") as fh:
                for tr in kept:
                    fh.write("\n".join(tr.to_lines()) + "\n")
    else:
        counts = run_experiment(
            exp, config.trials, config.master_seed, engine=config.engine, jobs=config.jobs, chunk_size=config.chunk_size
        )
    wall = time.perf_counter() - t0
    summary = RunSummary.from_counts(counts, analytic_round_accept(exp), analytic_bit_accept(exp), wall)
    if config.out:
        Path(config.out).write_text(summary_json(config, summary))
    return summary


def cmd_analyze(kind: str, *, points: int = 101, bits: int = 32, delta: float = 0.25, eps_max: float = 0.25, out=None) -> list:
    if kind == "figure3":
        grid = np.linspace(0.0, 0.5, points)
        rows = analysis.figure3_curves(grid, bits)
        header = analysis.FIGURE3_HEADER
    elif kind == "table1":
        rows = analysis.table1_csv_rows(analysis.table1_rows(bits, delta))
        header = analysis.TABLE1_HEADER
    elif kind == "bounds":
        rows = analysis.bounds_rows(np.linspace(0.0, eps_max, points), bits)
        header = analysis.BOUNDS_HEADER
    else:
        raise ConfigError(f"unknown analysis {kind!r}")
    if out:
        analysis.write_csv(out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([analysis.fmt(v) for v in row])
    return rows


def cmd_optimize(delta: float, resolution: float) -> dict:
    result = analysis.optimize_grid(delta, resolution)
    closed = analysis.pr_win_closed_form(delta)
    rx, rz = optimal_vector(delta)
    return {
        **result.as_dict(),
        "delta": delta,
        "closed_form": closed,
        "abs_error": abs(result.best_value - closed),
        "analytic_vector": {"r_x": rx, "r_z": rz},
    }


def cmd_replay(path) -> list[dict]:
    return [{"round_id": t.round_id, "protocol": t.protocol, **replay(t)} for t in read_transcripts(path)]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybrid-auth", description="Entanglement-based hybrid PUF authentication simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo acceptance of one protocol/attack configuration")
    s.add_argument("--protocol", choices=("offline", "online"), required=True)
    s.add_argument("--attack", choices=ATTACKS, default="none")
    s.add_argument("--delta", type=_bounded_float(0.0, 0.5, "delta"), default=0.0)
    s.add_argument("--epsilon", type=_bounded_float(0.0, 1.0, "epsilon"), default=0.0)
    s.add_argument("--source", choices=[m.value for m in SourceMode], default=None, help="offline entanglement source; default perfect, or purification for that attack")
    s.add_argument("--noise-state", type=_bell, default=BellKind.PSI_MINUS, help="Bell state mixed in by the mixed source")
    s.add_argument("--chi", type=_bell, default=BellKind.PHI_MINUS, help="flagged branch of the purification source")
    s.add_argument("--bits", type=_int_at_least(1, "bits"), default=1, help="m for offline, k for online")
    s.add_argument("--challenge-bits", type=_int_at_least(1, "challenge-bits", 64), default=32)
    s.add_argument("--trials", type=_int_at_least(1, "trials"), default=10_000)
    s.add_argument("--seed", type=_int_at_least(0, "seed", (1 << 64) - 1), default=0)
    s.add_argument("--engine", choices=ENGINES, default="batch")
    s.add_argument("--jobs", type=_int_at_least(1, "jobs"), default=None)
    s.add_argument("--chunk-size", type=_int_at_least(1, "chunk-size"), default=DEFAULT_CHUNK)
    s.add_argument("--out", help="summary JSON path")
    s.add_argument("--transcripts", help="JSON-lines transcript path (runs the faithful engine)")
    s.add_argument("--strict", action="store_true", help="exit 3 if the analytic reference is outside the z=5 Wilson interval")
    for name in ("rx", "rz", "rpx", "rpz"):
        s.add_argument(f"--{name}", type=_bounded_float(-1.0, 1.0, name), default=0.0)
    s.add_argument("--q0", type=_bounded_float(0.0, 1.0, "q0"), default=1.0)

    a = sub.add_parser("analyze", help="closed-form curves and tables as CSV")
    a.add_argument("kind", choices=("figure3", "table1", "bounds"))
    a.add_argument("--points", type=_int_at_least(2, "points"), default=101)
    a.add_argument("--bits", type=_int_at_least(1, "bits"), default=32)
    a.add_argument("--delta", type=_bounded_float(0.0, 0.5, "delta"), default=0.25)
    a.add_argument("--eps-max", type=_bounded_float(0.0, 0.25, "eps-max"), default=0.25)
    a.add_argument("--out")

    o = sub.add_parser("optimize", help="grid-search the forging game")
    o.add_argument("--delta", type=_bounded_float(0.0, 0.5, "delta"), required=True)
    o.add_argument("--resolution", type=float, default=0.005)
    o.add_argument("--out")

    r = sub.add_parser("replay", help="recheck recorded transcripts")
    r.add_argument("path")
    r.add_argument("--strict", action="store_true")
    return p


def _config_from_args(ns) -> ExperimentConfig:
    mode = ns.source or ("purification" if ns.attack == "purification" else "perfect")
    if ns.protocol == "online" and ns.source is not None:
        raise ConfigError("--source applies to the offline protocol only")
    source = SourceModel(ns.epsilon, SourceMode(mode), ((ns.noise_state, 1.0),), ns.chi)
    params = StrategyParams(ns.rx, ns.rz, ns.rpx, ns.rpz, ns.q0) if ns.attack == "grid" else None
    exp = Experiment(ns.protocol, ns.bits, ns.delta, ns.challenge_bits, ns.attack, source, params)
    return ExperimentConfig(
        exp,
        ns.trials,
        ns.seed,
        "faithful" if ns.transcripts else ns.engine,
        ns.jobs or default_jobs(),
        ns.chunk_size,
        ns.out,
        ns.transcripts,
        ns.strict,
    )


def _emit_json(obj, out) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        # Usage errors exit 1 and --help exits 0; return the code so callers get an int.
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        if ns.command == "simulate":
            config = _config_from_args(ns)
            summary = cmd_simulate(config)
            ref = summary.analytic_reference
            print(
                f"accepted {summary.accept_count}/{summary.trials} = {summary.empirical_rate:.6g} "
                f"[{summary.wilson_lo:.6g}, {summary.wilson_hi:.6g}] (z=5); "
                f"analytic {'n/a' if ref is None else format(ref, '.6g')}; "
                f"per-bit {summary.bit_rate:.6g}; {summary.wall_time:.2f}s"
            )
            if config.strict and not summary.reference_within_interval():
                print("strict: analytic reference outside the Wilson interval", file=sys.stderr)
                return EXIT_STRICT
        elif ns.command == "analyze":
            cmd_analyze(ns.kind, points=ns.points, bits=ns.bits, delta=ns.delta, eps_max=ns.eps_max, out=ns.out)
        elif ns.command == "optimize":
            _emit_json(cmd_optimize(ns.delta, ns.resolution), ns.out)
        elif ns.command == "replay":
            reports = cmd_replay(ns.path)
            failed = 0
            for rep in reports:
                bad = [k for k, v in rep.items() if isinstance(v, bool) and not v]
                failed += bool(bad)
                status = "pass" if not bad else "FAIL " + ",".join(bad)
                print(f"round {rep['round_id']} ({rep['protocol']}): {status}")
            print(f"{len(reports) - failed}/{len(reports)} transcripts pass all invariants")
            if ns.strict and failed:
                return EXIT_STRICT
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, MalformedTranscript):
            print(f"error: malformed transcript: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
