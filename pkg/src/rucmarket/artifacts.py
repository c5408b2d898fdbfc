"""Artifact files: deterministic JSON (optional one-line volatile header) and
bus-by-hour CSV matrices that round-trip exactly."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

HEADER_KEY = "_header"


class ArtifactError(FileNotFoundError):
    pass


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, body, header: dict | None = None) -> None:
    """Body is written with sorted keys so reruns are byte-identical. Anything
    volatile (timestamps, wall times) goes in ``header``, kept on line one."""
    text = json.dumps(body, indent=1, sort_keys=True, default=_default)
    if header is not None:
        text = json.dumps({HEADER_KEY: header}, sort_keys=True, default=_default) + "\n" + text
    Path(path).write_text(text + "\n")


def read_json(path, with_header: bool = False):
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path}")
    text = path.read_text()
    header = None
    first, _, rest = text.partition("\n")
    if first.startswith('{"' + HEADER_KEY + '"'):
        header = json.loads(first)[HEADER_KEY]
        text = rest
    body = json.loads(text)
    return (body, header) if with_header else body


def write_matrix_csv(path, matrix: np.ndarray, row_label: str = "bus_id", unit: str = "$/MWh",
                     col_label: str = "hour") -> None:
    """Rows are buses (0-based ids), columns hours 1..T; values written with repr."""
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_label] + [f"{col_label}_{t + 1} [{unit}]" for t in range(m.shape[1])])
        for i, row in enumerate(m):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)


HEATMAP_FILES = {"energy": "lmp.csv", "ump_up": "ump_up.csv", "ump_down": "ump_down.csv"}


def write_heatmaps(out_dir, prices: dict) -> list[Path]:
    out = []
    for key, name in HEATMAP_FILES.items():
        p = Path(out_dir) / name
        write_matrix_csv(p, np.asarray(prices[key]))
        out.append(p)
    return out
