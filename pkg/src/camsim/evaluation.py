"""Per-class performance differences between two datasets.

Records come from an external perception run: one row per (image, class) with
a metric value in [0, 1] and a content-batch key. The difference measure is
deliberately simple and lives in :func:`contextual_difference` so a richer
distributional measure can replace it without touching I/O.

``paired`` mode compares the same (image, class) keys directly and averages the
absolute differences. ``batched`` mode averages each batch per class first and
then averages the absolute differences of batch means over the batches both
datasets share.
"""

from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

HEADER = ["image_id", "batch_key", "class_label", "value"]
PAIRED = "paired"
BATCHED = "batched"

CLASS_REPORT = "report_class.csv"
BATCH_REPORT = "report_batch.csv"


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class PerformanceRecord:
    image_id: str
    batch_key: str
    class_label: str
    value: float


@dataclass
class BatchTerm:
    class_label: str
    batch_key: str
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int

    @property
    def difference(self) -> float:
        return abs(self.mean_a - self.mean_b)


@dataclass
class DifferenceReport:
    mode: str
    per_class: dict
    batches: list = field(default_factory=list)
    size_a: int = 0
    size_b: int = 0


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def validate_records(records) -> list:
    seen = set()
    out = []
    for i, rec in enumerate(records):
        if not 0.0 <= rec.value <= 1.0:
            raise RecordError(f"record {i}: value {rec.value} outside [0, 1]")
        key = (rec.image_id, rec.class_label)
        if key in seen:
            raise RecordError(f"record {i}: duplicate (image_id, class_label) {key}")
        seen.add(key)
        out.append(rec)
    return out


def load_records(path) -> list:
    """Read and validate a ``image_id,batch_key,class_label,value`` CSV file."""
    records = []
    seen = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise RecordError(f"{path}: line 1: header must be {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise RecordError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            image_id, batch_key, class_label, raw = (c.strip() for c in row)
            try:
                value = float(raw)
            except ValueError:
                raise RecordError(f"{path}: line {lineno}: value {raw!r} is not a number") from None
            if not 0.0 <= value <= 1.0:
                raise RecordError(f"{path}: line {lineno}: value {value} outside [0, 1]")
            key = (image_id, class_label)
            if key in seen:
                raise RecordError(
                    f"{path}: line {lineno}: duplicate (image_id, class_label) {key}, first on line {seen[key]}"
                )
            seen[key] = lineno
            records.append(PerformanceRecord(image_id, batch_key, class_label, value))
    return records


def _group(records, key):
    groups = defaultdict(list)
    for rec in records:
        groups[key(rec)].append(rec)
    return groups


def contextual_difference(a, b, mode: str = BATCHED) -> DifferenceReport:
    a = validate_records(a)
    b = validate_records(b)
    if mode == PAIRED:
        return _paired(a, b)
    if mode == BATCHED:
        return _batched(a, b)
    raise ValueError(f"mode must be {PAIRED!r} or {BATCHED!r}, got {mode!r}")


def _paired(a, b) -> DifferenceReport:
    index_a = {(r.image_id, r.class_label): r for r in a}
    index_b = {(r.image_id, r.class_label): r for r in b}
    if set(index_a) != set(index_b):
        missing = sorted(set(index_a) ^ set(index_b))[:5]
        raise RecordError(f"paired mode needs identical (image_id, class_label) keys; e.g. unmatched {missing}")
    if not index_a:
        raise RecordError("no records to compare")

    diffs = defaultdict(list)
    cells = defaultdict(lambda: ([], []))
    for key in index_a:
        ra, rb = index_a[key], index_b[key]
        diffs[ra.class_label].append(abs(ra.value - rb.value))
        # A pair can carry different batch keys on the two sides; bucket by the sorted pair.
        batch = ra.batch_key if ra.batch_key == rb.batch_key else "|".join(sorted((ra.batch_key, rb.batch_key)))
        cells[(ra.class_label, batch)][0].append(ra.value)
        cells[(ra.class_label, batch)][1].append(rb.value)

    per_class = {c: _mean(v) for c, v in diffs.items()}
    batches = [
        BatchTerm(c, k, _mean(va), _mean(vb), len(va), len(vb))
        for (c, k), (va, vb) in sorted(cells.items())
    ]
    return DifferenceReport(PAIRED, per_class, batches, len(a), len(b))


def _batched(a, b) -> DifferenceReport:
    cells_a = _group(a, lambda r: (r.class_label, r.batch_key))
    cells_b = _group(b, lambda r: (r.class_label, r.batch_key))
    shared = sorted(set(cells_a) & set(cells_b))
    if not shared:
        raise RecordError("the two record sets share no (class_label, batch_key) cells")
    batches = []
    terms = defaultdict(list)
    for cls, batch in shared:
        va = [r.value for r in cells_a[(cls, batch)]]
        vb = [r.value for r in cells_b[(cls, batch)]]
        term = BatchTerm(cls, batch, _mean(va), _mean(vb), len(va), len(vb))
        batches.append(term)
        terms[cls].append(term.difference)
    per_class = {c: _mean(v) for c, v in terms.items()}
    return DifferenceReport(BATCHED, per_class, batches, len(a), len(b))


def _fmt(x: float) -> str:
    return repr(float(x))


def render_report(report: DifferenceReport, out_dir) -> tuple:
    """Write the class and batch CSVs into ``out_dir``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    class_path = os.path.join(out_dir, CLASS_REPORT)
    batch_path = os.path.join(out_dir, BATCH_REPORT)
    with open(class_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_label", "difference"])
        for cls in sorted(report.per_class):
            w.writerow([cls, _fmt(report.per_class[cls])])
    with open(batch_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_label", "batch_key", "mean_a", "mean_b", "difference", "n_a", "n_b"])
        for t in sorted(report.batches, key=lambda t: (t.class_label, t.batch_key)):
            w.writerow([t.class_label, t.batch_key, _fmt(t.mean_a), _fmt(t.mean_b), _fmt(t.difference), t.n_a, t.n_b])
    return class_path, batch_path
