"""JSON problem files.

Indices are 0-based. Example::

    {
      "n": 3, "p": 1, "m": 1,
      "objective": [{"kind": "quadratic", "params": {"a": 2.0}}],
      "equality": {"triplets": [[0, 0, 1.0], [0, 1, 1.0]], "b": [1.0]},
      "inequalities": [{"kind": "upper_bound", "index": 2, "u": 0.5}],
      "slater_point": [0.5, 0.5, 0.0]
    }

``objective`` holds either one entry per variable or a single entry applied
to all. ``equality`` takes ``triplets`` or a ``generator`` (``circulant``
with ``[a0, a1, a2]`` or ``tridiag_toeplitz`` with ``[a, b, c]``); ``b`` may
be a list or a scalar broadcast to every row.
"""
from __future__ import annotations

import json
import re

import jsonschema
import numpy as np

from .errors import ConfigError
from .problem import (
    AbsValue, AffineHalfspace, ConvexProgram, LinearCombination, PiecewiseQuadratic, Quadratic,
    Quartic, SparseMatrix, UpperBound, generate_circulant, generate_tridiag_toeplitz,
)

_num = {"type": "number"}
_term = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["quadratic", "quartic", "abs", "piecewise_quadratic", "sum"]},
        "params": {"type": "object"},
    },
}
SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "objective", "equality"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "objective": {"type": "array", "minItems": 1, "items": _term},
        "equality": {
            "type": "object",
            "additionalProperties": False,
            "required": ["b"],
            "properties": {
                "triplets": {"type": "array", "items": {
                    "type": "array", "minItems": 3, "maxItems": 3,
                    "prefixItems": [{"type": "integer", "minimum": 0}, {"type": "integer", "minimum": 0}, _num]}},
                "generator": {
                    "type": "object", "additionalProperties": False, "required": ["kind", "params"],
                    "properties": {
                        "kind": {"enum": ["circulant", "tridiag_toeplitz"]},
                        "params": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                    },
                },
                "b": {"oneOf": [_num, {"type": "array", "items": _num}]},
                "rows": {"type": "integer", "minimum": 0},
            },
            "oneOf": [{"required": ["triplets"]}, {"required": ["generator"]}],
        },
        "inequalities": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {
                "kind": {"enum": ["upper_bound", "halfspace"]},
                "index": {"type": "integer", "minimum": 0},
                "u": _num,
                "c": {"type": "array", "items": _num},
                "d": _num,
            },
        }},
        "slater_point": {"type": "array", "items": _num},
    },
}


def _locate(text: str, path) -> int | None:
    """Best-effort line number of the JSON value at ``path``."""
    pos = 0
    line = None
    for key in path:
        if isinstance(key, str):
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if not m:
                break
            pos = m.end()
            line = text.count("\n", 0, m.start()) + 1
    return line


def _where(text, path) -> str:
    field = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path).lstrip(".") or "<root>"
    line = _locate(text, path)
    return f"line {line}, field {field}" if line else f"field {field}"


def _term_from(entry, path, text):
    kind = entry["kind"]
    par = entry.get("params", {})
    try:
        if kind == "quadratic":
            return Quadratic(float(par.get("a", 1.0)))
        if kind == "quartic":
            return Quartic()
        if kind == "abs":
            return AbsValue(float(par.get("w", 1.0)))
        if kind == "piecewise_quadratic":
            return PiecewiseQuadratic(float(par["c_plus"]), float(par["c_minus"]))
        sub = par.get("terms", [])
        terms = tuple(_term_from(s, path + ["params", "terms", k], text) for k, s in enumerate(sub))
        weights = tuple(float(w) for w in par.get("weights", [1.0] * len(terms)))
        return LinearCombination(terms, weights)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(text, path)}: bad {kind} parameters ({exc})") from None


def parse_problem(text: str, source: str = "<string>") -> ConvexProgram:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = list(exc.absolute_path)
        if exc.validator == "additionalProperties" and isinstance(exc.instance, dict):
            extra = sorted(set(exc.instance) - set(exc.schema.get("properties", {})))
            path += extra[:1]
        raise ConfigError(f"{source}: {_where(text, path)}: {exc.message}") from None
    n = doc["n"]
    obj = doc["objective"]
    if len(obj) not in (1, n):
        raise ConfigError(f"{source}: {_where(text, ['objective'])}: need 1 or n={n} entries, got {len(obj)}")
    terms = [_term_from(s, ["objective", k], text) for k, s in enumerate(obj)]
    terms = terms * n if len(terms) == 1 else terms
    eq = doc["equality"]
    try:
        if "generator" in eq:
            kind, (a0, a1, a2) = eq["generator"]["kind"], eq["generator"]["params"]
            A = generate_circulant(n, a0, a1, a2) if kind == "circulant" else generate_tridiag_toeplitz(n, a0, a1, a2)
        else:
            trip = np.array(eq["triplets"], dtype=float).reshape(-1, 3)
            p = eq.get("rows", doc.get("p", int(trip[:, 0].max()) + 1 if len(trip) else 0))
            A = SparseMatrix.from_triplets((p, n), trip[:, 0].astype(int), trip[:, 1].astype(int), trip[:, 2])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{source}: {_where(text, ['equality'])}: {exc}") from None
    b = eq["b"]
    b = np.full(A.shape[0], float(b)) if not isinstance(b, list) else np.array(b, dtype=float)
    ineqs = []
    for k, s in enumerate(doc.get("inequalities", [])):
        path = ["inequalities", k]
        try:
            if s["kind"] == "upper_bound":
                ineqs.append(UpperBound(int(s["index"]), float(s["u"])))
            else:
                ineqs.append(AffineHalfspace(tuple(float(c) for c in s["c"]), float(s["d"])))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{source}: {_where(text, path)}: bad {s['kind']} ({exc})") from None
    for key, expect, got in (("p", doc.get("p"), A.shape[0]), ("m", doc.get("m"), len(ineqs))):
        if expect is not None and expect != got:
            raise ConfigError(f"{source}: {_where(text, [key])}: declared {expect}, found {got}")
    try:
        return ConvexProgram(tuple(terms), A, b, tuple(ineqs), doc.get("slater_point"))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_problem(path) -> ConvexProgram:
    with open(path) as fh:
        return parse_problem(fh.read(), str(path))


def _term_doc(t):
    if isinstance(t, Quadratic):
        return {"kind": "quadratic", "params": {"a": t.a}}
    if isinstance(t, Quartic):
        return {"kind": "quartic"}
    if isinstance(t, AbsValue):
        return {"kind": "abs", "params": {"w": t.w}}
    if isinstance(t, PiecewiseQuadratic):
        return {"kind": "piecewise_quadratic", "params": {"c_plus": t.c_plus, "c_minus": t.c_minus}}
    if isinstance(t, LinearCombination):
        return {"kind": "sum", "params": {"terms": [_term_doc(s) for s in t.terms], "weights": list(t.weights or (1.0,) * len(t.terms))}}
    raise ConfigError(f"cannot serialize term {t!r}")


def dump_problem(prog: ConvexProgram) -> str:
    """JSON text that :func:`parse_problem` reads back to an equivalent program."""
    ineqs = []
    for g in prog.ineqs:
        if isinstance(g, UpperBound):
            ineqs.append({"kind": "upper_bound", "index": g.index, "u": g.u})
        elif isinstance(g, AffineHalfspace):
            ineqs.append({"kind": "halfspace", "c": list(g.c), "d": g.d})
        else:
            raise ConfigError("smooth oracle constraints cannot be written to a problem file")
    doc = {
        "n": prog.n, "p": prog.p, "m": prog.m,
        "objective": [_term_doc(t) for t in prog.terms],
        "equality": {"triplets": [[int(r), int(c), float(v)] for r, c, v in zip(prog.A.rows, prog.A.cols, prog.A.vals)],
                     "rows": prog.p, "b": [float(v) for v in prog.b]},
        "inequalities": ineqs,
    }
    if prog.slater_point is not None:
        doc["slater_point"] = [float(v) for v in prog.slater_point]
    return json.dumps(doc, indent=2)
