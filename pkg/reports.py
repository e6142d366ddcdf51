"""Run reports: canonical JSON, CSV tables, plot-data CSVs and flat field dumps.

JSON is written with sorted keys, UTF-8, LF line endings and no NaN/Infinity
tokens (non-finite numbers become null). Python's float repr is already the
shortest round-trip form, so equal runs give byte-identical files.
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from config import PRECISION, SCHEMA_VERSION, VERSION
from errors import IoFailure
from utils import REPORT_FORMATS

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ("check", "entry", "value", "ratio", "drift", "status")
STATUSES = ("pass", "flag", "fail", "skip", "error")
FIELD_MAGIC = b"LPF1"


@dataclass
class CheckResult:
    check: str
    entry: str
    value: float | None = None
    ratio: float | None = None
    drift: float | None = None
    status: str = "pass"

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in CHECK_COLUMNS}


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    error: str | None = None
    skipped: str | None = None

    @property
    def status(self) -> str:
        if self.error:
            return "error"
        if self.skipped:
            return "skip"
        statuses = {c.status for c in self.checks}
        for status in ("fail", "flag", "pass"):
            if status in statuses:
                return status
        return "skip" if statuses == {"skip"} else "pass"

    @property
    def hard_failure(self) -> bool:
        return self.error is not None or any(c.status == "fail" for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "checks": [c.to_dict() for c in self.checks],
            "details": self.details,
            "error": self.error,
            "skipped": self.skipped,
        }


@dataclass
class RunReport:
    config: dict
    seed: int
    suites: dict = field(default_factory=dict)
    plot_data: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def hard_failures(self) -> list[str]:
        return [name for name, suite in self.suites.items() if suite.hard_failure]

    @property
    def checks(self) -> list[CheckResult]:
        return [c for name in sorted(self.suites) for c in self.suites[name].checks]

    def body(self) -> dict:
        """Everything except timing; deterministic for a fixed config and seed."""
        return {
            "meta": {"version": VERSION, "schema_version": SCHEMA_VERSION, "precision": PRECISION, "seed": self.seed},
            "config": self.config,
            "suites": {name: suite.to_dict() for name, suite in self.suites.items()},
            "summary": {
                "hard_failures": self.hard_failures,
                "status": {name: suite.status for name, suite in self.suites.items()},
            },
        }

    def to_dict(self) -> dict:
        return {**self.body(), "timing": self.timing}


# ── Canonical JSON ────────────────────────────────────────

def canonical(value):
    """Plain JSON types only: numpy scalars/arrays unwrapped, non-finite floats as None."""
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return canonical(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return canonical([value.real, value.imag])
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "to_dict"):
        return canonical(value.to_dict())
    return str(value)


def dumps_canonical(payload) -> str:
    return json.dumps(canonical(payload), sort_keys=True, ensure_ascii=False, allow_nan=False, indent=2) + "\n"


# ── Files ─────────────────────────────────────────────────

@contextmanager
def atomic_write(path: Path, mode: str = "w"):
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    kwargs = {"encoding": "utf-8", "newline": ""} if "b" not in mode else {}
    try:
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in canonical(list(row))])
    return buffer.getvalue()


def checks_table(report: RunReport) -> str:
    return _csv_text(CHECK_COLUMNS, ([c.check, c.entry, c.value, c.ratio, c.drift, c.status] for c in report.checks))


def write_report(report: RunReport, out_dir, formats=("json",)) -> list[Path]:
    """Write the requested formats into out_dir; returns the paths written, in order."""
    unknown = [f for f in formats if f not in REPORT_FORMATS]
    if unknown:
        raise ValueError(f"unknown report formats {unknown}; expected some of {REPORT_FORMATS}")
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(_write_text(out_dir / "report.json", dumps_canonical(report.to_dict())))
    if "csv" in formats:
        written.append(_write_text(out_dir / "checks.csv", checks_table(report)))
    if "plot" in formats:
        for name in sorted(report.plot_data):
            header, rows = report.plot_data[name]
            written.append(_write_text(out_dir / f"plot_{name}.csv", _csv_text(header, rows)))
        for name in sorted(report.fields):
            written.append(dump_field(out_dir / f"field_{name}.bin", report.fields[name]))
    logger.info("Wrote %d report file(s) to %s", len(written), out_dir)
    return written


def _write_text(path: Path, text: str) -> Path:
    with atomic_write(path) as handle:
        handle.write(text)
    return path


def load_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


# ── Field dumps ───────────────────────────────────────────

def dump_field(path, values) -> Path:
    """LPF1 | ndim:uint32 | dims:uint64[ndim] | float64 data, little-endian, row-major.

    Complex arrays gain a trailing axis of length 2 (real, imaginary).
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        values = np.stack([values.real, values.imag], axis=-1)
    data = np.ascontiguousarray(values, dtype="<f8")
    header = FIELD_MAGIC + np.array([data.ndim], dtype="<u4").tobytes() + np.array(data.shape, dtype="<u8").tobytes()
    path = Path(path)
    with atomic_write(path, "wb") as handle:
        handle.write(header)
        handle.write(data.tobytes(order="C"))
    return path


def load_field(path, as_complex: bool = False) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:4] != FIELD_MAGIC:
        raise IoFailure(f"{path} is not a field dump (bad magic {raw[:4]!r})")
    ndim = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    shape = tuple(int(d) for d in np.frombuffer(raw, dtype="<u8", count=ndim, offset=8))
    offset = 8 + 8 * ndim
    expected = offset + 8 * math.prod(shape)
    if len(raw) != expected:
        raise IoFailure(f"{path} has {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape).astype(float)
    if as_complex:
        if not shape or shape[-1] != 2:
            raise IoFailure(f"{path} has no trailing (real, imag) axis")
        return data[..., 0] + 1j * data[..., 1]
    return data
