# shell/serializers.py
"""
Result files: CSV with `#` metadata header lines, or JSON carrying the
same columns and metadata.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from engine import __version__
from engine.errors import ResultFileError
from engine.liouville import Trajectory
from engine.spectrum import SpectrumResult

logger = logging.getLogger(__name__)

FIXED_TIMESTAMP = "1970-01-01T00:00:00+00:00"
KINDS = ("trajectory", "steady", "spectrum")
NUMBER_FORMAT = "{:.16e}"   # 17 significant digits: exact for doubles

LEVEL_PAIRS = [(i, j) for i in range(1, 5) for j in range(1, 5)]


@dataclass
class ResultTable:
    """Columns of numbers plus the metadata describing how they were made."""
    kind: str
    columns: List[str]
    rows: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.size and self.rows.shape[1] != len(self.columns):
            raise ValueError(f"{len(self.columns)} columns but rows have {self.rows.shape[1]} values")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def stamp(metadata: Dict[str, Any], kind: str, fixed_clock: bool = False) -> Dict[str, Any]:
    """Metadata with kind, version and creation time prepended."""
    created = FIXED_TIMESTAMP if fixed_clock else datetime.now(timezone.utc).isoformat(timespec="seconds")
    return {"kind": kind, "version": __version__, "created": created, **metadata}


# === Builders ===

def trajectory_table(trajectory: Trajectory, metadata: Dict[str, Any]) -> ResultTable:
    columns = ["t_s"]
    for i, j in LEVEL_PAIRS:
        columns += [f"re_rho_{i}{j}", f"im_rho_{i}{j}"]
    columns += ["im_rho13_probe", "rho33_minus_rho11"]

    rows = []
    for t, state in zip(trajectory.times, trajectory.states):
        row = [t]
        for i, j in LEVEL_PAIRS:
            value = state.element(i, j)
            row += [value.real, value.imag]
        row += [state.element(1, 3).imag, state.inversion_31]
        rows.append(row)
    return ResultTable("trajectory", columns, np.array(rows), metadata)


def steady_table(rho: np.ndarray, metadata: Dict[str, Any]) -> ResultTable:
    rows = [[i, j, rho[i - 1, j - 1].real, rho[i - 1, j - 1].imag] for i, j in LEVEL_PAIRS]
    return ResultTable("steady", ["i", "j", "re_rho", "im_rho"], np.array(rows), metadata)


def spectrum_table(result: SpectrumResult, metadata: Dict[str, Any]) -> ResultTable:
    rows = np.column_stack([result.detunings, result.gain, result.transmission])
    return ResultTable("spectrum", ["detuning_radps", "gain", "transmission"], rows,
                       {**metadata, "warnings": list(result.warnings)})


# === Writers ===

def _format_row(values: Sequence[float], columns: Sequence[str]) -> str:
    cells = []
    for name, value in zip(columns, values):
        cells.append(str(int(value)) if name in ("i", "j") else NUMBER_FORMAT.format(value))
    return ",".join(cells)


def to_csv(table: ResultTable) -> str:
    lines = [f"# {key}: {json.dumps(value, sort_keys=True)}" for key, value in table.metadata.items()]
    lines.append(",".join(table.columns))
    lines += [_format_row(row, table.columns) for row in table.rows]
    return "\n".join(lines) + "\n"


def to_json(table: ResultTable) -> str:
    document = {
        "metadata": table.metadata,
        "columns": table.columns,
        "rows": table.rows.tolist(),
    }
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def write_result(table: ResultTable, path: "str | Path", fmt: str = "csv") -> Path:
    path = Path(path)
    text = to_json(table) if fmt == "json" else to_csv(table)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ResultFileError(f"cannot write {path}: {e.strerror}", path=str(path)) from e
    logger.info(f"wrote {table.kind} result ({len(table.rows)} rows) to {path}")
    return path


# === Readers ===

def _parse_csv(text: str, path: Path) -> ResultTable:
    metadata: Dict[str, Any] = {}
    header: Optional[List[str]] = None
    rows: List[List[float]] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition(":")
            if not sep:
                raise ResultFileError(f"{path}:{number}: metadata line without 'key: value'")
            try:
                metadata[key.strip()] = json.loads(value)
            except json.JSONDecodeError as e:
                raise ResultFileError(f"{path}:{number}: unreadable metadata value") from e
            continue
        if header is None:
            header = line.split(",")
            continue
        try:
            values = [float(cell) for cell in line.split(",")]
        except ValueError as e:
            raise ResultFileError(f"{path}:{number}: non-numeric value") from e
        if len(values) != len(header):
            raise ResultFileError(f"{path}:{number}: expected {len(header)} values, got {len(values)}")
        rows.append(values)
    if header is None:
        raise ResultFileError(f"{path}: no column header")
    return _checked(metadata, header, rows, path)


def _parse_json(text: str, path: Path) -> ResultTable:
    try:
        document = json.loads(text)
        return _checked(document["metadata"], document["columns"], document["rows"], path)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ResultFileError(f"{path}: not a result document ({e})") from e


def _checked(metadata: Dict[str, Any], columns: List[str], rows: List[List[float]], path: Path) -> ResultTable:
    kind = metadata.get("kind")
    if kind not in KINDS:
        raise ResultFileError(f"{path}: unknown result kind {kind!r}")
    try:
        return ResultTable(kind, list(columns), np.array(rows, dtype=float).reshape(len(rows), len(columns)),
                           metadata)
    except ValueError as e:
        raise ResultFileError(f"{path}: {e}") from e


def read_result(path: "str | Path") -> ResultTable:
    """
    Load a result file written by `write_result`.

    Raises:
        ResultFileError if the file is missing or garbled
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ResultFileError(f"cannot read result file {path}: {e.strerror}", path=str(path)) from e
    if text.lstrip().startswith("{"):
        return _parse_json(text, path)
    return _parse_csv(text, path)
