"""Command-line pipeline: generate, simulate, reconstruct, quantify, report.

Every artifact records the hash of the effective config; a stage that reads
an artifact written under a different config stops with exit code 4.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .bootstrap import BootstrapResult, attach_std, bootstrap_run
from .circuits import Schedule, build_schedule
from .config import ConfigError, RunConfig, default_config, load_config
from .counts import CountsTable, MissingCircuitError
from .mle import EstimateSet, SolverError, run_protocol
from .quantifiers import QualityReport, assess, reports_csv
from .report import ModeResult, write_report
from .simulator import execute

log = logging.getLogger("qndtomo")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
STAGES = ("generate", "simulate", "reconstruct", "quantify", "report")


class ArtifactError(Exception):
    """A stage input is missing, unreadable or belongs to another config."""


# artifact I/O ------------------------------------------------------------

def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path, config_hash: str) -> dict:
    if not path.exists():
        raise ArtifactError(f"{path} not found; run the earlier stages first")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: malformed JSON ({exc})") from None
    _check_hash(path, doc.get("config_hash"), config_hash)
    return doc


def _check_hash(path: Path, found: str | None, expected: str) -> None:
    if found != expected:
        raise ArtifactError(f"{path} was written for config {found}, not {expected}; rerun the earlier stages")


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output.directory)
    p.mkdir(parents=True, exist_ok=True)
    return p


# stages ------------------------------------------------------------------

def manifest_text(schedule: Schedule, cfg: RunConfig, mode: str) -> str:
    kinds = schedule.counts_by_kind()
    lines = [
        f"config hash: {cfg.hash}",
        f"mode: {mode}",
        f"device: {schedule.graph.n_qubits} qubits, {len(schedule.graph.edges)} edges",
        f"colour groups: {len(schedule.color_groups)}",
    ]
    for i, grp in enumerate(schedule.color_groups):
        lines.append(f"  group {i}: " + ", ".join(f"{a}-{b}" for a, b in grp))
    lines.append(f"batches: {len(schedule)} (" + ", ".join(f"{k} {v}" for k, v in kinds.items()) + ")")
    lines.append("")
    for b in schedule.batches:
        targets = " ".join(f"{t[0]}-{t[1]}" if isinstance(t, tuple) else str(t) for t in b.targets)
        lines.append(f"{b.index:5d}  {b.circuit.kind:9s}  prep={'.'.join(b.circuit.prep):8s}"
                     f"  rot={'.'.join(b.circuit.rotation):8s}  targets={targets}")
    return "\n".join(lines) + "\n"


def cmd_generate(cfg: RunConfig) -> list[Path]:
    out = _out(cfg)
    paths = []
    for mode in cfg.modes:
        schedule = build_schedule(cfg.device.graph, reset_variant=mode == "reset")
        p = out / f"schedule_{mode}.json"
        _write_json(p, {"config_hash": cfg.hash, "mode": mode, "schedule": schedule.to_dict()})
        m = out / f"manifest_{mode}.txt"
        m.write_text(manifest_text(schedule, cfg, mode))
        paths += [p, m]
        log.info("mode %s: %d batches in %d colour groups", mode, len(schedule), len(schedule.color_groups))
    return paths


def load_schedule(cfg: RunConfig, mode: str) -> Schedule:
    doc = _read_json(Path(cfg.output.directory) / f"schedule_{mode}.json", cfg.hash)
    return Schedule.from_dict(doc["schedule"])


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    out = _out(cfg)
    paths = []
    for mode in cfg.modes:
        schedule = load_schedule(cfg, mode)
        model = cfg.device.model(cfg.run.seed, reset=mode == "reset")
        table = execute(model, schedule, cfg.run.shots, cfg.run.seed, cfg.run.jobs)
        if "csv" in cfg.output.formats:
            p = out / f"counts_{mode}.csv"
            p.write_text(table.to_csv(header_comment=f"config_hash={cfg.hash}"))
            paths.append(p)
        if "json" in cfg.output.formats:
            p = out / f"counts_{mode}.json"
            p.write_text(table.to_json(config_hash=cfg.hash) + "\n")
            paths.append(p)
    return paths


def load_counts(cfg: RunConfig, mode: str) -> CountsTable:
    out = Path(cfg.output.directory)
    pj, pc = out / f"counts_{mode}.json", out / f"counts_{mode}.csv"
    if pj.exists():
        return CountsTable.from_dict(_read_json(pj, cfg.hash))
    if pc.exists():
        text = pc.read_text()
        first = text.split("\n", 1)[0]
        found = first[len("# config_hash="):] if first.startswith("# config_hash=") else None
        _check_hash(pc, found, cfg.hash)
        try:
            return CountsTable.from_csv(text)
        except (KeyError, ValueError) as exc:
            raise ArtifactError(f"{pc}: malformed counts ({exc})") from None
    raise ArtifactError(f"no counts for mode {mode} in {out}; run simulate first")


def cmd_reconstruct(cfg: RunConfig) -> list[Path]:
    out = _out(cfg)
    paths = []
    for mode in cfg.modes:
        counts = load_counts(cfg, mode)
        est = run_protocol(counts, cfg.device.graph, cfg.run.optimizer, jobs=cfg.run.jobs)
        if est.failed():
            log.warning("mode %s: %d problems stopped before convergence: %s", mode, len(est.failed()),
                        ", ".join(est.failed()))
        p = out / f"estimates_{mode}.json"
        _write_json(p, {"config_hash": cfg.hash, "mode": mode, "estimates": est.to_dict()})
        c = out / f"problems_{mode}.csv"
        c.write_text(f"# config_hash={cfg.hash}\n" + est.logs_csv())
        paths += [p, c]
        log.info("mode %s: %d problems solved", mode, est.n_problems)
    return paths


def load_estimates(cfg: RunConfig, mode: str) -> EstimateSet:
    doc = _read_json(Path(cfg.output.directory) / f"estimates_{mode}.json", cfg.hash)
    return EstimateSet.from_dict(doc["estimates"])


def cmd_quantify(cfg: RunConfig) -> list[Path]:
    out = _out(cfg)
    paths = []
    for mode in cfg.modes:
        est = load_estimates(cfg, mode)
        reports = assess(est)
        if cfg.run.bootstrap:
            counts = load_counts(cfg, mode)
            boot = bootstrap_run(counts, cfg.device.graph, cfg.run.bootstrap, cfg.run.seed, cfg.run.optimizer,
                                 point=est, rerun_gst=cfg.run.rerun_gst, jobs=cfg.run.jobs)
            attach_std(reports, boot)
            b = out / f"bootstrap_{mode}.json"
            _write_json(b, {"config_hash": cfg.hash, "mode": mode, "bootstrap": boot.to_dict()})
            paths.append(b)
        p = out / f"quality_{mode}.json"
        _write_json(p, {"config_hash": cfg.hash, "mode": mode, "reports": [r.to_dict() for r in reports]})
        c = out / f"quality_{mode}.csv"
        c.write_text(f"# config_hash={cfg.hash}\n" + reports_csv(reports))
        paths += [p, c]
    return paths


def cmd_report(cfg: RunConfig, timestamp: str | None = None) -> list[Path]:
    out = _out(cfg)
    results = []
    for mode in cfg.modes:
        doc = _read_json(out / f"quality_{mode}.json", cfg.hash)
        reports = [QualityReport.from_dict(r) for r in doc["reports"]]
        est = load_estimates(cfg, mode)
        bpath = out / f"bootstrap_{mode}.json"
        boot = None
        if cfg.run.bootstrap and bpath.exists():
            boot = BootstrapResult.from_dict(_read_json(bpath, cfg.hash)["bootstrap"])
        results.append(ModeResult(mode, reports, est, boot))
    timestamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return write_report(out, results, cfg.hash, timestamp)


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "quantify": cmd_quantify,
    "report": cmd_report,
}


# entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qndtomo", description="Parallel QND measurement tomography pipeline.")
    parser.add_argument("command", choices=(*STAGES, "all"))
    parser.add_argument("--config", type=Path, help="TOML or JSON run config (default: built-in 7-qubit device)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--shots", type=int, help="shots per circuit")
    parser.add_argument("--seed", type=int, help="simulation and bootstrap seed")
    parser.add_argument("--jobs", type=int, help="worker threads")
    parser.add_argument("--mode", choices=("direct", "reset", "both"), help="measurement mode")
    parser.add_argument("--bootstrap", type=int, help="bootstrap resamples (0 disables)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    return cfg.override(shots=args.shots, seed=args.seed, jobs=args.jobs, mode=args.mode,
                        bootstrap=args.bootstrap, out=args.out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        stages = STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            for p in COMMANDS[stage](cfg):
                print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure in {exc.problem_id}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MissingCircuitError as exc:
        print(f"incomplete counts: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArtifactError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
