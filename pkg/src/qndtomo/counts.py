"""Outcome-count tables: the hand-off between simulation and reconstruction."""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .channels import bits, label_str
from .circuits import GST, GST_LABELS, PREP_LABELS, QNDMT_1Q, QNDMT_2Q, ROTATION_LABELS

CSV_COLUMNS = ("batch", "target", "prep", "rotation", "outcome1", "outcome2", "count")


def target_id(target) -> str:
    if isinstance(target, tuple):
        return f"{target[0]}-{target[1]}"
    return str(int(target))


def parse_target(tid: str):
    if "-" in tid:
        a, b = tid.split("-")
        return int(a), int(b)
    return int(tid)


def _kind(target: str, prep: str) -> str:
    if "-" in target:
        return QNDMT_2Q
    return GST if "," in prep else QNDMT_1Q


class MissingCircuitError(KeyError):
    """A reconstruction needs a circuit the table does not contain."""


@dataclass
class Record:
    batch: int
    target: str
    prep: str
    rotation: str
    counts: np.ndarray = field(repr=False)  # (first outcome, second outcome); GST has one row

    @property
    def kind(self) -> str:
        return _kind(self.target, self.prep)


@dataclass
class CountsTable:
    shots: int
    records: dict[tuple[int, str], Record] = field(default_factory=dict)

    def add(self, rec: Record) -> None:
        rec.counts = np.asarray(rec.counts, dtype=np.int64)
        self.records[(rec.batch, rec.target)] = rec

    def __len__(self) -> int:
        return len(self.records)

    def sorted_records(self) -> list[Record]:
        return [self.records[k] for k in sorted(self.records)]

    def check_totals(self) -> None:
        for rec in self.records.values():
            if int(rec.counts.sum()) != self.shots:
                raise ValueError(f"batch {rec.batch} target {rec.target}: counts sum to {rec.counts.sum()}, not {self.shots}")

    def targets(self) -> set[str]:
        return {t for _, t in self.records}

    def _index(self, target: str) -> dict[tuple[str, str], Record]:
        return {(r.prep, r.rotation): r for r in self.records.values() if r.target == target}

    def gst(self, qubit: int) -> np.ndarray:
        """Counts ``[i, j, k, l]`` of outcome ``l`` after gates ``G_i, G_j, G_k``."""
        idx = self._index(target_id(qubit))
        out = np.zeros((4, 4, 4, 2), dtype=np.int64)
        for (a, i), (b, j), (c, k) in itertools.product(enumerate(GST_LABELS), repeat=3):
            rec = idx.get((f"{i},{j}", k))
            if rec is None:
                raise MissingCircuitError(f"qubit {qubit}: GST circuit ({i}, {j}, {k}) missing")
            out[a, b, c] = rec.counts[0]
        return out

    def qndmt(self, target) -> np.ndarray:
        """Counts ``[v, u, n, m]``: V index, U index, first and second outcome.

        For an edge the V and U indices run over label pairs in
        ``itertools.product`` order and outcomes are ``2 * n_a + n_b``.
        """
        tid = target_id(target)
        width = 2 if "-" in tid else 1
        idx = self._index(tid)
        preps = list(itertools.product(PREP_LABELS, repeat=width))
        rots = list(itertools.product(ROTATION_LABELS, repeat=width))
        n_out = 2 ** width
        out = np.zeros((len(preps), len(rots), n_out, n_out), dtype=np.int64)
        for a, v in enumerate(preps):
            for b, u in enumerate(rots):
                rec = idx.get((":".join(v), ":".join(u)))
                if rec is None:
                    raise MissingCircuitError(f"target {tid}: QND-MT circuit V={v} U={u} missing")
                out[a, b] = rec.counts
        return out

    def map_counts(self, fn) -> "CountsTable":
        new = CountsTable(self.shots)
        for rec in self.sorted_records():
            new.add(Record(rec.batch, rec.target, rec.prep, rec.rotation, fn(rec)))
        return new

    # serialisation -------------------------------------------------------

    def rows(self):
        for rec in self.sorted_records():
            n1, n2 = rec.counts.shape
            kind = rec.kind
            w = {GST: 1, QNDMT_1Q: 1, QNDMT_2Q: 2}[kind]
            for a in range(n1):
                for b in range(n2):
                    o1 = "" if kind == GST else label_str(bits(a, w))
                    yield (rec.batch, rec.target, rec.prep, rec.rotation, o1, label_str(bits(b, w)), int(rec.counts[a, b]))

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, shots: int | None = None) -> "CountsTable":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        reader = csv.DictReader(lines)
        grouped: dict[tuple[int, str], dict] = {}
        for row in reader:
            key = (int(row["batch"]), row["target"])
            g = grouped.setdefault(key, {"prep": row["prep"], "rotation": row["rotation"], "cells": {}})
            o1 = int(row["outcome1"], 2) if row["outcome1"] else 0
            g["cells"][(o1, int(row["outcome2"], 2))] = int(row["count"])
        table = cls(0)
        for (batch, target), g in grouped.items():
            kind = _kind(target, g["prep"])
            n = 4 if kind == QNDMT_2Q else 2
            arr = np.zeros((1 if kind == GST else n, n), dtype=np.int64)
            for (a, b), c in g["cells"].items():
                arr[a, b] = c
            table.add(Record(batch, target, g["prep"], g["rotation"], arr))
        totals = {int(r.counts.sum()) for r in table.records.values()}
        table.shots = shots if shots is not None else (totals.pop() if len(totals) == 1 else 0)
        return table

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "records": [
                {"batch": r.batch, "target": r.target, "prep": r.prep, "rotation": r.rotation,
                 "counts": r.counts.tolist()}
                for r in self.sorted_records()
            ],
        }

    def to_json(self, **extra) -> str:
        doc = {**extra, **self.to_dict()}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "CountsTable":
        table = cls(int(doc["shots"]))
        for r in doc["records"]:
            table.add(Record(int(r["batch"]), r["target"], r["prep"], r["rotation"], np.asarray(r["counts"])))
        return table
