"""CSV / JSON / binary serialization shared by the modules and the CLI."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .graphon import ClosedFormGraphon, Graphon, Partition, StepGraphon, StepKernel, graphon_from_dict


class ParseError(ValueError):
    """Malformed input file; carries the offending line and column (1-based)."""

    def __init__(self, path, message, line=None, column=None):
        self.path = str(path)
        self.line = line
        self.column = column
        where = f"{path}"
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")

    def to_dict(self) -> dict:
        return {"error": "parse", "path": self.path, "line": self.line, "column": self.column,
                "message": str(self)}


def format_float(x: float) -> str:
    # 17 significant digits round-trip every float64
    return format(float(x), ".17g")


def write_csv(path, matrix) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def matrix_to_csv(matrix) -> str:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in m)


def read_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(path, f"not a number: {cell!r}", lineno, col) from None
            if rows and len(values) != len(rows[0]):
                raise ParseError(
                    path, f"expected {len(rows[0])} columns, found {len(values)}", lineno, len(values)
                )
            rows.append(values)
    if not rows:
        raise ParseError(path, "empty CSV file")
    return np.array(rows, dtype=float)


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.msg, exc.lineno, exc.colno) from None


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_graphon(path) -> Graphon:
    """Load a step graphon from CSV (regular partition) or JSON."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = read_json(path)
        try:
            return graphon_from_dict(data)
        except (KeyError, TypeError) as exc:
            raise ParseError(path, f"not a graphon document: {exc}") from None
    from .graphon import induced_graphon

    return induced_graphon(read_csv(path))


def load_kernel(path) -> StepKernel:
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = read_json(path)
        return StepKernel(Partition(data["breakpoints"]), data["values"])
    m = read_csv(path)
    return StepKernel(Partition.uniform(m.shape[0]), m)


def graphon_to_dict(w) -> dict:
    if isinstance(w, (ClosedFormGraphon, StepKernel)):
        return w.to_dict()
    raise TypeError(f"cannot serialize {type(w).__name__}")


def save_graphon(path, w) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if not isinstance(w, StepGraphon) or not w.partition.regular:
            raise ValueError("CSV holds only step graphons on a regular partition")
        write_csv(path, w.values)
    else:
        write_json(path, graphon_to_dict(w))


def save_weights(prefix, arrays: dict) -> tuple[Path, Path]:
    """Write arrays as one little-endian float64 blob plus a JSON shape manifest."""
    prefix = Path(prefix)
    bin_path = prefix.with_suffix(".bin")
    manifest_path = prefix.with_suffix(".json")
    entries = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype="<f8")
            fh.write(a.tobytes())
            entries.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.size
    write_json(manifest_path, {"dtype": "<f8", "file": bin_path.name, "tensors": entries})
    return bin_path, manifest_path


def load_weights(manifest_path) -> dict:
    manifest_path = Path(manifest_path)
    manifest = read_json(manifest_path)
    flat = np.fromfile(manifest_path.parent / manifest["file"], dtype="<f8")
    out = {}
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        out[entry["name"]] = flat[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).astype(float)
    return out
