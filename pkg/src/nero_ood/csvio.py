"""Plain-text CSV helpers shared by the bundle and dataset file formats.

Floats are written with Python's shortest round-trip ``repr``, so a file
written on one machine reparses to bit-identical float64 values on any
other. Files use LF line endings and carry no header row.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MissingFile, NonFiniteValue, ParseError


def format_float(x: float) -> str:
    """Shortest decimal text that reparses to the same float64."""
    return repr(float(x))


def write_float_matrix(path: Path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {values.shape}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in values:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


def write_int_vector(path: Path, values: np.ndarray) -> None:
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in values:
            fh.write(f"{int(v)}\n")


def _read_lines(path: Path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    text = path.read_text(encoding="utf-8")
    return text.splitlines()


def read_float_matrix(path: Path) -> np.ndarray:
    """Parse a headerless CSV of decimal floats into an (n, cols) array.

    Raises ParseError with line/column context on bad tokens, and
    NonFiniteValue if any parsed entry is NaN or infinite. Ragged rows are
    reported as a ParseError on the offending line.
    """
    lines = _read_lines(path)
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split(",")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(
                f"expected {width} columns, found {len(tokens)}",
                path=path,
                line=lineno,
            )
        row = []
        for col, tok in enumerate(tokens, start=1):
            try:
                value = float(tok)
            except ValueError:
                raise ParseError(
                    f"invalid float {tok!r}", path=path, line=lineno, column=col
                ) from None
            if not np.isfinite(value):
                raise NonFiniteValue(
                    f"{path}: line {lineno}, column {col}: non-finite value {tok!r}"
                )
            row.append(value)
        rows.append(row)
    if not rows:
        return np.zeros((0, 0), dtype=np.float64)
    return np.array(rows, dtype=np.float64)


def read_int_vector(path: Path) -> np.ndarray:
    lines = _read_lines(path)
    values = []
    for lineno, line in enumerate(lines, start=1):
        tok = line.strip()
        try:
            values.append(int(tok))
        except ValueError:
            raise ParseError(
                f"invalid integer {tok!r}", path=path, line=lineno, column=1
            ) from None
    return np.array(values, dtype=np.int64)
