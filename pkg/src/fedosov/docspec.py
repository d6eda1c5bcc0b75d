"""Manifold specification documents.

A JSON-compatible object describes a chart-level candidate structure:

    {
      "dimension": 4,
      "coordinates": ["x1", "x2", "x3", "x4"],
      "J": [["0", "1", ...], ...],
      "connection": {"type": "flat"}
                  | {"type": "christoffel", "gamma": [[["0", ...], ...], ...]}
                  | {"type": "levi_civita", "metric": [["1", ...], ...]},
      "gauge": {"omega_squared": "x1^2 + ..."}      # optional
    }

Array shapes are validated before any expression is parsed; J must parse
to a skew matrix.  Shape or parse problems raise DocumentError (CLI exit
code 2); mathematical failures downstream are reported per check (exit 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .connection import Connection, ConnectionError_, levi_civita
from .expr import ExprError, RationalExpr
from .tensor import Chart, DOWN, Tensor, TensorError, UP, permute


class DocumentError(Exception):
    pass


@dataclass(frozen=True)
class ManifoldSpec:
    chart: Chart
    j: Tensor
    conn: Connection
    omega_squared: RationalExpr | None
    source: dict


def _require(cond: bool, message: str):
    if not cond:
        raise DocumentError(message)


def _shape_matrix(value, dim: int, what: str):
    _require(isinstance(value, list) and len(value) == dim, f"{what} must be a {dim}x{dim} array")
    for row in value:
        _require(isinstance(row, list) and len(row) == dim, f"{what} must be a {dim}x{dim} array")
        for entry in row:
            _require(isinstance(entry, str), f"{what} entries must be expression strings")


def _shape_cube(value, dim: int, what: str):
    _require(isinstance(value, list) and len(value) == dim, f"{what} must be a {dim}^3 array")
    for plane in value:
        _shape_matrix(plane, dim, what)


def parse_document(doc: dict) -> ManifoldSpec:
    _require(isinstance(doc, dict), "document must be an object")
    dim = doc.get("dimension")
    _require(isinstance(dim, int) and dim >= 4 and dim % 2 == 0, "dimension must be an even integer >= 4")
    coords = doc.get("coordinates")
    _require(
        isinstance(coords, list) and len(coords) == dim and all(isinstance(c, str) for c in coords),
        "coordinates must list one name per dimension",
    )
    _shape_matrix(doc.get("J"), dim, "J")
    conn_doc = doc.get("connection")
    _require(isinstance(conn_doc, dict) and "type" in conn_doc, "connection must carry a type")
    ctype = conn_doc["type"]
    _require(ctype in ("flat", "christoffel", "levi_civita"), f"unknown connection type {ctype!r}")
    if ctype == "christoffel":
        _shape_cube(conn_doc.get("gamma"), dim, "gamma")
    if ctype == "levi_civita":
        _shape_matrix(conn_doc.get("metric"), dim, "metric")
    gauge = doc.get("gauge")
    if gauge is not None:
        _require(isinstance(gauge, dict) and isinstance(gauge.get("omega_squared"), str),
                 "gauge must carry an omega_squared expression string")

    try:
        chart = Chart(tuple(coords))
    except TensorError as exc:
        raise DocumentError(str(exc)) from exc

    def parse_entry(text: str, where: str) -> RationalExpr:
        try:
            return chart.parse(text)
        except ExprError as exc:
            raise DocumentError(f"{where}: {exc}") from exc

    j_rows = [[parse_entry(e, f"J[{r}][{c}]") for c, e in enumerate(row)] for r, row in enumerate(doc["J"])]
    j = Tensor.from_matrix(chart, (DOWN, DOWN), j_rows)
    if not (j + permute(j, (1, 0))).is_zero():
        raise DocumentError("J must parse to a skew matrix of expressions")

    try:
        if ctype == "flat":
            conn = Connection.flat(chart)
        elif ctype == "christoffel":
            comps = [
                parse_entry(e, f"gamma[{c}][{a}][{b}]")
                for c, plane in enumerate(conn_doc["gamma"])
                for a, row in enumerate(plane)
                for b, e in enumerate(row)
            ]
            conn = Connection(chart, Tensor(chart, (UP, DOWN, DOWN), comps))
        else:
            m_rows = [
                [parse_entry(e, f"metric[{r}][{c}]") for c, e in enumerate(row)]
                for r, row in enumerate(conn_doc["metric"])
            ]
            metric = Tensor.from_matrix(chart, (DOWN, DOWN), m_rows)
            conn = levi_civita(metric)
    except ConnectionError_ as exc:
        raise DocumentError(str(exc)) from exc

    omega_squared = None
    if gauge is not None:
        omega_squared = parse_entry(gauge["omega_squared"], "gauge.omega_squared")
        if omega_squared.is_zero:
            raise DocumentError("gauge.omega_squared must be nonzero")

    return ManifoldSpec(chart, j, conn, omega_squared, doc)


def load_document(path: str) -> ManifoldSpec:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON in {path}: {exc}") from exc
    return parse_document(doc)
