"""Model JSON, dataset CSV and result CSV helpers."""

import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .net import BIAS, Dataset, DenseLayer, Network


def model_to_dict(net):
    return {
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ],
        "head": net.head,
        "temperature": net.temperature,
    }


def model_from_dict(doc, include_bias=True):
    layers = [
        DenseLayer(l["weights"], l["bias"], l.get("activation", "relu")) for l in doc["layers"]
    ]
    return Network(
        layers,
        head=doc.get("head", "regression"),
        temperature=float(doc.get("temperature", 1.0)),
        include_bias=include_bias,
    )


def load_model(path, include_bias=True):
    with open(path) as fh:
        return model_from_dict(json.load(fh), include_bias=include_bias)


def save_model(net, path, extra=None):
    doc = model_to_dict(net)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_dataset(path, label_column=None, head="classification"):
    """Read a CSV with a header row. ``label_column`` names the label column;
    the remaining columns are inputs in file order."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    if label_column is None:
        return Dataset(values)
    if label_column not in header:
        raise KeyError(f"label column {label_column!r} not in {header}")
    j = header.index(label_column)
    labels = values[:, j]
    inputs = np.delete(values, j, axis=1)
    if head == "classification":
        if not np.all(labels == np.round(labels)):
            raise ValueError("classification labels must be integers")
        labels = labels.astype(np.int64)
    return Dataset(inputs, labels)


def save_dataset(data, path, label_column="label"):
    labels = None
    if data.has_labels:
        labels = np.asarray(data.labels)
        if labels.ndim == 2:
            if labels.shape[1] != 1:
                raise ShapeError("only single-column labels fit in one CSV column")
            labels = labels[:, 0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"x{j}" for j in range(data.inputs.shape[1])]
        w.writerow(cols + ([label_column] if data.has_labels else []))
        for i in range(data.n):
            row = [fmt(v) for v in data.inputs[i]]
            if data.has_labels:
                row.append(fmt(labels[i]))
            w.writerow(row)


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns, rows, comments=()):
    """Write rows under a ``#``-comment preamble. Floats keep 17 significant digits.

    ``path`` of None or "-" writes to stdout.
    """
    if path in (None, "-"):
        _write_csv(sys.stdout, columns, rows, comments)
        return
    with open(path, "w", newline="") as fh:
        _write_csv(fh, columns, rows, comments)


def _write_csv(fh, columns, rows, comments):
    for line in comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def read_csv(path):
    """Return (comments, header, rows) with rows as lists of strings."""
    comments, rows = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                break
    with open(path, newline="") as fh:
        body = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return comments, body[0], body[1:]


def importance_rows(net, imp):
    layer, row, col = net.flat_index().table()
    H = imp.quartic if imp.quartic is not None else np.zeros_like(imp.quadratic)
    for i in range(len(imp.quadratic)):
        c = "bias" if col[i] == BIAS else int(col[i])
        yield (i, int(layer[i]), int(row[i]), c, imp.quadratic[i], H[i])


IMPORTANCE_COLUMNS = ("global_index", "layer", "row", "col", "I", "H")


def write_importance(path, net, imp, comments=()):
    write_csv(path, IMPORTANCE_COLUMNS, importance_rows(net, imp), comments)
