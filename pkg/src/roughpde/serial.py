"""Flat-file persistence: raw little-endian float64 arrays with JSON
sidecars, round-trippable CSV tables, and canonical JSON documents.

CSV files are UTF-8, comma-separated with '.' decimals and a mandatory
header row.  Floats are written with repr, so parsing them back recovers
the exact double; ints and strings survive unchanged.
"""

import csv
import json

import numpy as np

ARRAY_DTYPE = "<f8"


def save_array(path, arr):
    """Raw C-order float64 bytes at path plus a JSON sidecar (path + .json)."""
    arr = np.ascontiguousarray(arr, dtype=np.dtype(ARRAY_DTYPE))
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    write_json(str(path) + ".json",
               {"dtype": ARRAY_DTYPE, "shape": list(arr.shape)})


def load_array(path):
    meta = read_json(str(path) + ".json")
    shape = tuple(meta["shape"])
    with open(path, "rb") as fh:
        raw = fh.read()
    arr = np.frombuffer(raw, dtype=np.dtype(meta["dtype"]))
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload holds {arr.size} values, "
                         f"sidecar promises shape {shape}")
    return arr.reshape(shape).copy()


def _format_cell(value):
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_cell(text):
    if text in ("True", "False"):
        return text == "True"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(path, columns, rows):
    """Header row is mandatory; an empty table is header-only."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def read_csv(path):
    """Returns (columns, rows) with numeric cells restored to int/float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: missing header row")
        rows = [[_parse_cell(c) for c in row] for row in reader]
    return columns, rows


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
