"""Markdown report and plot-ready CSV tables.

Only the comment block at the top of ``report.md`` carries a timestamp, so
two runs of the same config give byte-identical files below it.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapResult
from .channels import bits, label_str
from .mle import EstimateSet
from .quantifiers import QualityReport

log = logging.getLogger(__name__)

HEADER_END = "-->"
QUANTITIES = ("F", "Q", "1-D", "mean")


@dataclass
class ModeResult:
    """Everything reported for one measurement mode."""

    mode: str
    reports: list[QualityReport]
    estimates: EstimateSet | None = None
    bootstrap: BootstrapResult | None = None

    @property
    def qubit_reports(self) -> list[QualityReport]:
        return [r for r in self.reports if "-" not in r.target]

    @property
    def edge_reports(self) -> list[QualityReport]:
        return [r for r in self.reports if "-" in r.target]


def _value(rep: QualityReport, key: str) -> tuple[float | None, float | None]:
    s = rep.scalars()
    if key == "1-D":
        return 1.0 - s["D"], rep.std.get("D")
    return s.get(key), rep.std.get(key)


def _fmt(v: float | None, sd: float | None = None) -> str:
    if v is None:
        return "n/a"
    return f"{v:.4f}" if sd is None else f"{v:.4f} ± {sd:.4f}"


def _md_table(head: list[str], rows: list[list[str]]) -> list[str]:
    out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def _flip_matrix(rep: QualityReport, n: int, nb: int) -> np.ndarray:
    d = 2 ** nb
    m = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            m[a, b] = rep.flip_probabilities[f"{label_str(bits(n, nb))}:{label_str(bits(a, nb))}->{label_str(bits(b, nb))}"]
    return m


def _flip_std(rep: QualityReport, boot: BootstrapResult | None, key: str) -> float | None:
    if boot is None:
        return None
    return boot.quantity_std.get(f"p[{rep.target}]{key}")


def mode_section(res: ModeResult) -> list[str]:
    lines = [f"## Mode: {res.mode}", ""]
    if res.bootstrap is None:
        lines += ["Point estimates only: no bootstrap results were supplied.", ""]
    else:
        b = res.bootstrap
        lines += [f"Error bars: one standard deviation over {b.n_resamples} bootstrap resamples"
                  f" ({b.n_failed} failed{', flagged' if b.flagged else ''}).", ""]
    if res.qubit_reports:
        lines += ["### Qubits", ""]
        rows = [[r.target] + [_fmt(*_value(r, k)) for k in QUANTITIES] for r in res.qubit_reports]
        lines += _md_table(["qubit", *QUANTITIES], rows) + [""]
    if res.edge_reports:
        lines += ["### Edges", ""]
        keys = QUANTITIES + ("C_povm", "C_choi")
        rows = [[r.target] + [_fmt(*_value(r, k)) for k in keys] for r in res.edge_reports]
        lines += _md_table(["edge", *keys], rows) + [""]
    lines += ["### Flip probabilities", "",
              "Entry (a, b) of the matrix for outcome n is the probability of reading n"
              " and leaving the input |a> in |b>.", ""]
    for r in res.reports:
        nb = 2 if "-" in r.target else 1
        d = 2 ** nb
        labels = [label_str(bits(i, nb)) for i in range(d)]
        for n in range(d):
            m = _flip_matrix(r, n, nb)
            rows = []
            for a in range(d):
                row = [labels[a]]
                for b in range(d):
                    key = f"{labels[n]}:{labels[a]}->{labels[b]}"
                    row.append(_fmt(m[a, b], _flip_std(r, res.bootstrap, key)))
                rows.append(row)
            lines += [f"{r.target}, outcome {labels[n]}:", ""]
            lines += _md_table(["a \\ b", *labels], rows) + [""]
    return lines


def comparison_section(direct: ModeResult, reset: ModeResult) -> list[str]:
    lines = ["## Direct vs. measure-and-reset", ""]
    by_target = {r.target: r for r in reset.reports}
    rows = []
    for r in direct.reports:
        other = by_target.get(r.target)
        if other is None:
            continue
        row = [r.target]
        for k in QUANTITIES:
            row += [_fmt(*_value(r, k)), _fmt(*_value(other, k))]
        rows.append(row)
    head = ["target"] + [f"{k} {m}" for k in QUANTITIES for m in ("direct", "reset")]
    return lines + _md_table(head, rows) + [""]


def render_markdown(results: list[ModeResult], config_hash: str, timestamp: str) -> str:
    lines = ["<!--", f"generated: {timestamp}", HEADER_END,
             "# QND measurement tomography report", "", f"config hash: `{config_hash}`", ""]
    for res in results:
        lines += mode_section(res)
    modes = {r.mode: r for r in results}
    if "direct" in modes and "reset" in modes:
        lines += comparison_section(modes["direct"], modes["reset"])
    return "\n".join(lines).rstrip() + "\n"


def strip_header(text: str) -> str:
    """Report body without the timestamped comment block."""
    head, sep, body = text.partition(HEADER_END + "\n")
    return body if sep and head.startswith("<!--") else text


def _csv(rows, head) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def bars_csv(res: ModeResult, config_hash: str) -> str:
    """Bar heights and error bars per qubit and edge."""
    rows = []
    for r in res.reports:
        keys = QUANTITIES + (("C_povm", "C_choi") if "-" in r.target else ())
        for k in keys:
            v, sd = _value(r, k)
            rows.append((res.mode, r.target, k, _num(v), _num(sd)))
    return f"# config_hash={config_hash}\n" + _csv(rows, ("mode", "target", "quantity", "value", "std"))


def flips_csv(res: ModeResult, config_hash: str) -> str:
    rows = []
    for r in res.reports:
        for k, v in sorted(r.flip_probabilities.items()):
            n, rest = k.split(":")
            a, b = rest.split("->")
            rows.append((res.mode, r.target, n, a, b, _num(v), _num(_flip_std(r, res.bootstrap, k))))
    return f"# config_hash={config_hash}\n" + _csv(rows, ("mode", "target", "outcome", "input", "output",
                                                          "probability", "std"))


def averaged_choi_csv(res: ModeResult, config_hash: str) -> str:
    """Elementwise ``|Y_n|`` of the Liouville matrices, averaged over all qubits and over all edges."""
    rows = []
    if res.estimates is not None:
        for name, group in (("1q", res.estimates.qubits), ("2q", res.estimates.edges)):
            if not group:
                continue
            ms = list(group.values())
            for n in range(len(ms[0])):
                avg = np.mean([np.abs(m[n].liouville) for m in ms], axis=0)
                lab = label_str(ms[0][n].outcome)
                for i, j in np.ndindex(avg.shape):
                    rows.append((res.mode, name, lab, i, j, _num(avg[i, j])))
    return f"# config_hash={config_hash}\n" + _csv(rows, ("mode", "block", "outcome", "row", "col", "abs_mean"))


def write_report(out_dir: str | Path, results: list[ModeResult], config_hash: str, timestamp: str) -> list[Path]:
    """Write ``report.md`` and the plot CSVs; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        if res.bootstrap is None:
            log.warning("no bootstrap results for mode %s; reporting point estimates only", res.mode)
    paths = [out / "report.md"]
    paths[0].write_text(render_markdown(results, config_hash, timestamp))
    for res in results:
        for name, fn in (("bars", bars_csv), ("flips", flips_csv), ("choi_avg", averaged_choi_csv)):
            p = out / f"{name}_{res.mode}.csv"
            p.write_text(fn(res, config_hash))
            paths.append(p)
    return paths


__all__ = ["ModeResult", "averaged_choi_csv", "bars_csv", "flips_csv", "render_markdown", "strip_header",
           "write_report"]
