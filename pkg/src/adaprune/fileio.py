"""CSV readers and writers. All writers produce LF-terminated, byte-deterministic files."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .exceptions import InvalidInputError, ParseError
from .kernel import EmbeddingSet
from .mmd import PruneMask


def fmt(value: float) -> str:
    return "%.17g" % value


@contextmanager
def atomic_write(path):
    """Yield a text handle whose contents replace ``path`` only on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            yield lineno, [cell.strip() for cell in row]


def load_embeddings(path) -> EmbeddingSet:
    """Read an embedding CSV: header, optional leading ``label`` column, then features."""
    rows = iter(_rows(path))
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("file is empty", line=1, path=path) from None
    if not header or header == [""]:
        raise ParseError("missing header", line=1, path=path)
    has_label = header[0].lower() == "label"
    width = len(header)
    n_features = width - int(has_label)
    if n_features < 1:
        raise ParseError("no feature columns", line=1, path=path)

    data, labels = [], []
    for lineno, row in rows:
        if not row or row == [""]:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=lineno, path=path)
        if has_label:
            try:
                labels.append(int(row[0]))
            except ValueError:
                raise ParseError(f"label {row[0]!r} is not an integer", line=lineno, path=path) from None
        values = []
        for cell in row[int(has_label):]:
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r}", line=lineno, path=path) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {cell!r}", line=lineno, path=path)
            values.append(value)
        data.append(values)
    if not data:
        raise ParseError("no data rows", path=path)
    return EmbeddingSet(np.array(data), np.array(labels) if has_label else None)


def write_embeddings(path, emb: EmbeddingSet) -> None:
    with atomic_write(path) as fh:
        header = ([] if emb.labels is None else ["label"]) + [f"f{j}" for j in range(emb.dim)]
        fh.write(",".join(header) + "\n")
        for i in range(emb.n):
            cells = [] if emb.labels is None else [str(int(emb.labels[i]))]
            cells += [fmt(v) for v in emb.data[i]]
            fh.write(",".join(cells) + "\n")


def _single_column(path, name, convert):
    rows = iter(_rows(path))
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("file is empty", line=1, path=path) from None
    if header != [name]:
        raise ParseError(f"expected header {name!r}", line=lineno, path=path)
    out = []
    for lineno, row in rows:
        if not row or row == [""]:
            continue
        if len(row) != 1:
            raise ParseError(f"expected 1 field, found {len(row)}", line=lineno, path=path)
        try:
            out.append(convert(row[0]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    return out


def write_mask(path, mask: PruneMask, n_source=None) -> None:
    if n_source is not None and len(mask) != n_source:
        raise InvalidInputError(f"mask length {len(mask)} != source rows {n_source}")
    with atomic_write(path) as fh:
        fh.write("keep\n")
        for bit in mask.bits:
            fh.write(f"{int(bit)}\n")


def _bit(cell):
    if cell not in ("0", "1"):
        raise ValueError(f"mask value {cell!r} is not 0 or 1")
    return int(cell)


def read_mask(path, n_source=None) -> PruneMask:
    bits = _single_column(path, "keep", _bit)
    if n_source is not None and len(bits) != n_source:
        raise InvalidInputError(f"mask length {len(bits)} != source rows {n_source}")
    return PruneMask(np.array(bits, dtype=np.int8))


def write_weights(path, weights) -> None:
    values = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    with atomic_write(path) as fh:
        fh.write("weight\n")
        for v in values:
            fh.write(fmt(v) + "\n")


def _weight(cell):
    value = float(cell)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"weight {cell!r} must be finite and nonnegative")
    return value


def read_weights(path) -> np.ndarray:
    return np.array(_single_column(path, "weight", _weight))


def write_sweep(path, table) -> str:
    """Write the sweep CSV and its ``.pearson.csv`` sidecar; returns the sidecar path."""
    with atomic_write(path) as fh:
        fh.write("ratio,seed,mmd,accuracy\n")
        for ratio, seed, value, acc in table.rows:
            fh.write(f"{fmt(ratio)},{seed},{fmt(value)},{fmt(acc)}\n")
    sidecar = os.fspath(path) + ".pearson.csv"
    with atomic_write(sidecar) as fh:
        fh.write("r,p,n\n")
        fh.write(f"{fmt(table.r)},{fmt(table.p)},{table.n}\n")
    return sidecar


def write_report(path, report) -> None:
    row = report.as_row()
    with atomic_write(path) as fh:
        fh.write(",".join(row) + "\n")
        fh.write(",".join(fmt(v) for v in row.values()) + "\n")
