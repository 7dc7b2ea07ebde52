"""Run configuration: parsing, validation and hashing.

A config is a TOML or JSON document with ``device``, ``run`` and ``output``
tables plus a top-level ``mode``. Validation errors name the offending field
with a dotted path such as ``device.edges[6]``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import tomli

from .circuits import DeviceGraph, graph_from_edges, heavy_hex_65, seven_qubit_h_layout
from .mle import OptimizerConfig
from .simulator import DEFAULT_SHOTS, DeviceModel, NoiseParams, misassignment

MODES = ("direct", "reset", "both")
MODE_ALIASES = {"measure-and-reset": "reset", "measure_and_reset": "reset"}
FORMATS = ("csv", "json")
LAYOUTS = {"seven-qubit-h": seven_qubit_h_layout, "heavy-hex-65": heavy_hex_65}
NOISE_KEYS = ("p_decay", "p_excite", "eps_assign", "misassignment", "T_meas", "T1", "gate_depolarizing")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class DeviceConfig:
    n_qubits: int
    edges: tuple[tuple[int, int], ...]
    noise: tuple[NoiseParams, ...]
    crosstalk_strength: float = 0.0
    reset_fidelity: float = 1.0

    @property
    def graph(self) -> DeviceGraph:
        return graph_from_edges(self.n_qubits, self.edges)

    def model(self, seed: int, reset: bool = False) -> DeviceModel:
        return DeviceModel.build(self.graph, self.noise, self.crosstalk_strength, seed,
                                 reset_fidelity=self.reset_fidelity if reset else None)


@dataclass(frozen=True)
class RunSection:
    shots: int = DEFAULT_SHOTS
    seed: int = 0
    bootstrap: int = 0
    rerun_gst: bool = False
    jobs: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


@dataclass(frozen=True)
class OutputSection:
    directory: str = "qndtomo-out"
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class RunConfig:
    device: DeviceConfig
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)
    mode: str = "direct"

    @property
    def modes(self) -> tuple[str, ...]:
        return ("direct", "reset") if self.mode == "both" else (self.mode,)

    def canonical(self) -> dict:
        """Everything that can change a result; worker count and output location excluded."""
        dev = self.device
        return {
            "device": {
                "n_qubits": dev.n_qubits,
                "edges": [list(e) for e in dev.edges],
                "noise": [asdict(p) | {"decay": p.decay} for p in dev.noise],
                "crosstalk_strength": dev.crosstalk_strength,
                "reset_fidelity": dev.reset_fidelity,
            },
            "run": {
                "shots": self.run.shots,
                "seed": self.run.seed,
                "bootstrap": self.run.bootstrap,
                "rerun_gst": self.run.rerun_gst,
                "optimizer": self.run.optimizer.to_dict(),
            },
            "mode": self.mode,
        }

    @property
    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def override(self, *, shots=None, seed=None, jobs=None, mode=None, bootstrap=None, out=None) -> "RunConfig":
        """Apply command-line overrides, validating them like file values."""
        run, output, new_mode = self.run, self.output, self.mode
        if shots is not None:
            run = replace(run, shots=_positive_int(shots, "run.shots"))
        if seed is not None:
            run = replace(run, seed=_int(seed, "run.seed", minimum=0))
        if jobs is not None:
            run = replace(run, jobs=_positive_int(jobs, "run.jobs"))
        if bootstrap is not None:
            run = replace(run, bootstrap=_bootstrap(bootstrap, "run.bootstrap"))
        if mode is not None:
            new_mode = _mode(mode, "mode")
        if out is not None:
            output = replace(output, directory=str(out))
        return replace(self, run=run, output=output, mode=new_mode)


def default_config() -> RunConfig:
    g = seven_qubit_h_layout()
    return RunConfig(DeviceConfig(g.n_qubits, g.edges, (NoiseParams(),) * g.n_qubits))


# validation helpers ------------------------------------------------------

def _int(v, path: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v}")
    return v


def _positive_int(v, path: str) -> int:
    return _int(v, path, minimum=1)


def _bootstrap(v, path: str) -> int:
    v = _int(v, path, minimum=0)
    if v == 1:
        raise ConfigError(path, "the bootstrap needs 0 (off) or at least 2 resamples")
    return v


def _float(v, path: str, lo: float | None = None, hi: float | None = None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(path, f"{v} outside [{lo}, {hi}]")
    return v


def _mode(v, path: str) -> str:
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    v = MODE_ALIASES.get(v, v)
    if v not in MODES:
        raise ConfigError(path, f"unknown mode {v!r}; expected one of {', '.join(MODES)} or measure-and-reset")
    return v


def _table(doc: dict, key: str, path: str) -> dict:
    v = doc.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a table")
    return v


def _reject_unknown(doc: dict, allowed, path: str) -> None:
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")


def _noise(doc: dict, path: str, base: dict | None = None) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a table")
    _reject_unknown(doc, NOISE_KEYS, path)
    out = dict(base or {})
    for k, v in doc.items():
        p = f"{path}.{k}"
        if k == "misassignment":
            if isinstance(v, list):
                if len(v) != 2:
                    raise ConfigError(p, "expected one number or [e01, e10]")
                out["eps_assign"] = misassignment(_float(v[0], p + "[0]", 0, 1), _float(v[1], p + "[1]", 0, 1))
            else:
                out["eps_assign"] = misassignment(_float(v, p, 0, 1))
        elif k == "eps_assign":
            if not (isinstance(v, list) and len(v) == 2 and all(isinstance(r, list) and len(r) == 2 for r in v)):
                raise ConfigError(p, "expected a 2x2 nested list")
            out["eps_assign"] = [[_float(x, f"{p}[{i}][{j}]", 0, 1) for j, x in enumerate(r)] for i, r in enumerate(v)]
        else:
            out[k] = _float(v, p)
    if "eps_assign" in doc and "misassignment" in doc:
        raise ConfigError(path, "give either eps_assign or misassignment, not both")
    return out


def _make_noise(fields: dict, path: str) -> NoiseParams:
    fields = dict(fields)
    if "eps_assign" in fields:
        fields["eps_assign"] = tuple(tuple(float(x) for x in r) for r in fields["eps_assign"])
    try:
        return NoiseParams(**fields)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _device(doc: dict) -> DeviceConfig:
    _reject_unknown(doc, ("layout", "n_qubits", "edges", "noise", "qubits", "crosstalk_strength", "reset_fidelity"),
                    "device")
    if "layout" in doc:
        name = doc["layout"]
        if name not in LAYOUTS:
            raise ConfigError("device.layout", f"unknown layout {name!r}; expected one of {', '.join(LAYOUTS)}")
        if "n_qubits" in doc or "edges" in doc:
            raise ConfigError("device.layout", "a layout excludes n_qubits and edges")
        g = LAYOUTS[name]()
        n, edges = g.n_qubits, g.edges
    else:
        if "n_qubits" not in doc:
            raise ConfigError("device.n_qubits", "required")
        n = _positive_int(doc["n_qubits"], "device.n_qubits")
        raw = doc.get("edges", [])
        if not isinstance(raw, list):
            raise ConfigError("device.edges", "expected a list of [a, b] pairs")
        edges = []
        seen = set()
        for i, e in enumerate(raw):
            p = f"device.edges[{i}]"
            if not (isinstance(e, list) and len(e) == 2):
                raise ConfigError(p, f"expected a pair [a, b], got {e!r}")
            a, b = (_int(x, f"{p}[{j}]") for j, x in enumerate(e))
            if not (0 <= a < n and 0 <= b < n):
                raise ConfigError(p, f"edge ({a}, {b}) references a qubit outside 0..{n - 1}")
            if a == b:
                raise ConfigError(p, f"self-loop on qubit {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ConfigError(p, f"duplicate edge {key}")
            seen.add(key)
            edges.append((a, b))
        edges = tuple(edges)
    base = _noise(doc.get("noise", {}), "device.noise")
    per = {}
    qubits = doc.get("qubits", {})
    if not isinstance(qubits, dict):
        raise ConfigError("device.qubits", "expected a table keyed by qubit index")
    for k, v in qubits.items():
        p = f"device.qubits.{k}"
        if not k.isdigit() or int(k) >= n:
            raise ConfigError(p, f"not a qubit index in 0..{n - 1}")
        per[int(k)] = _noise(v, p, base)
    noise = tuple(_make_noise(per.get(q, base), f"device.qubits.{q}" if q in per else "device.noise")
                  for q in range(n))
    return DeviceConfig(
        n, edges, noise,
        _float(doc.get("crosstalk_strength", 0.0), "device.crosstalk_strength", 0, 1),
        _float(doc.get("reset_fidelity", 1.0), "device.reset_fidelity", 0, 1),
    )


def _run(doc: dict) -> RunSection:
    _reject_unknown(doc, ("shots", "seed", "bootstrap", "rerun_gst", "jobs", "optimizer"), "run")
    opt = _table(doc, "optimizer", "run.optimizer")
    known = OptimizerConfig.__dataclass_fields__
    _reject_unknown(opt, known, "run.optimizer")
    try:
        optimizer = OptimizerConfig(**opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError("run.optimizer", str(exc)) from None
    rerun = doc.get("rerun_gst", False)
    if not isinstance(rerun, bool):
        raise ConfigError("run.rerun_gst", "expected true or false")
    return RunSection(
        _positive_int(doc.get("shots", DEFAULT_SHOTS), "run.shots"),
        _int(doc.get("seed", 0), "run.seed", minimum=0),
        _bootstrap(doc.get("bootstrap", 0), "run.bootstrap"),
        rerun,
        _positive_int(doc.get("jobs", 1), "run.jobs"),
        optimizer,
    )


def _output(doc: dict) -> OutputSection:
    _reject_unknown(doc, ("directory", "formats"), "output")
    directory = doc.get("directory", OutputSection.directory)
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", "expected a non-empty path")
    formats = doc.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats:
        raise ConfigError("output.formats", "expected a non-empty list")
    for i, f in enumerate(formats):
        if f not in FORMATS:
            raise ConfigError(f"output.formats[{i}]", f"unknown format {f!r}; expected csv or json")
    return OutputSection(directory, tuple(dict.fromkeys(formats)))


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a table")
    _reject_unknown(doc, ("device", "run", "output", "mode"), "")
    if "device" not in doc:
        raise ConfigError("device", "required")
    return RunConfig(
        _device(_table(doc, "device", "device")),
        _run(_table(doc, "run", "run")),
        _output(_table(doc, "output", "output")),
        _mode(doc.get("mode", "direct"), "mode"),
    )


def loads(text: str, fmt: str = "toml") -> RunConfig:
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}", exc.msg) from None
    else:
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("", f"TOML syntax error: {exc}") from None
    return parse_config(doc)


def load_config(path: str | Path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` config; other suffixes are parsed as TOML."""
    path = Path(path)
    text = path.read_text()
    return loads(text, "json" if path.suffix.lower() == ".json" else "toml")


__all__ = [
    "ConfigError",
    "DeviceConfig",
    "MODES",
    "OutputSection",
    "RunConfig",
    "RunSection",
    "default_config",
    "load_config",
    "loads",
    "parse_config",
]
