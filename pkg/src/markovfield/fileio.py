"""Text formats: the graph+form file, CSV matrices, and JSON reports.

Form files are line oriented::

    # comment
    v <id> <m>          vertex with measure weight
    e <i> <j> <w>       form edge weight (nonnegative)
    k <i> <kappa>       killing weight (nonnegative)
    ref <i> <j>         reference-adjacency edge

Vertex ids must be 0-based and contiguous; duplicate vertices, duplicate
edges (of either kind) and duplicate killing entries are rejected.
"""

import io
import json

import numpy as np

from .forms import DirichletForm, form_from_components
from .space import Space


class FormFormatError(ValueError):
    """Malformed form file; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_form(text: str) -> DirichletForm:
    """Parse the graph+form text format into a validated form."""
    vertices = {}
    edges = {}
    killing = {}
    ref = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            if kind == "v":
                if len(args) != 2:
                    raise ValueError("expected: v <id> <m>")
                vid, m = int(args[0]), float(args[1])
                if vid in vertices:
                    raise ValueError(f"duplicate vertex {vid}")
                if m <= 0:
                    raise ValueError(f"measure must be positive, got {m}")
                vertices[vid] = m
            elif kind == "e":
                if len(args) != 3:
                    raise ValueError("expected: e <i> <j> <w>")
                i, j, w = int(args[0]), int(args[1]), float(args[2])
                if i == j:
                    raise ValueError(f"self-loop edge ({i},{j})")
                key = (min(i, j), max(i, j))
                if key in edges:
                    raise ValueError(f"duplicate edge ({key[0]},{key[1]})")
                if w < 0:
                    raise ValueError(f"negative edge weight {w}")
                edges[key] = w
            elif kind == "k":
                if len(args) != 2:
                    raise ValueError("expected: k <i> <kappa>")
                i, kap = int(args[0]), float(args[1])
                if i in killing:
                    raise ValueError(f"duplicate killing entry for vertex {i}")
                if kap < 0:
                    raise ValueError(f"negative killing weight {kap}")
                killing[i] = kap
            elif kind == "ref":
                if len(args) != 2:
                    raise ValueError("expected: ref <i> <j>")
                i, j = int(args[0]), int(args[1])
                if i == j:
                    raise ValueError(f"self-loop reference edge ({i},{j})")
                key = (min(i, j), max(i, j))
                if key in ref:
                    raise ValueError(f"duplicate reference edge ({key[0]},{key[1]})")
                ref.add(key)
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except ValueError as exc:
            raise FormFormatError(line_no, str(exc)) from None

    if not vertices:
        raise FormFormatError(1, "no vertices declared")
    n = len(vertices)
    if set(vertices) != set(range(n)):
        missing = sorted(set(range(n)) - set(vertices))[:5]
        raise FormFormatError(
            1, f"vertex ids must be contiguous 0..{n - 1}; missing {missing}"
        )
    for (i, j) in list(edges) + list(ref):
        if not (0 <= i < n and 0 <= j < n):
            raise FormFormatError(1, f"edge ({i},{j}) references undeclared vertex")
    for i in killing:
        if not (0 <= i < n):
            raise FormFormatError(1, f"killing entry references undeclared vertex {i}")

    m = np.array([vertices[i] for i in range(n)])
    k = np.zeros(n)
    for i, kap in killing.items():
        k[i] = kap
    space = Space(n, m, frozenset(ref))
    return form_from_components(space, edges, k)


def load_form(path) -> DirichletForm:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_form(fh.read())


def dump_form(form: DirichletForm) -> str:
    """Serialize a form to the text format (deterministic ordering)."""
    out = io.StringIO()
    for i in range(form.n):
        out.write(f"v {i} {float(form.space.m[i])!r}\n")
    (ei, ej, ew), k = form.decompose()
    order = np.lexsort((ej, ei))
    for t in order:
        out.write(f"e {ei[t]} {ej[t]} {float(ew[t])!r}\n")
    for i in np.flatnonzero(k > 0):
        out.write(f"k {i} {float(k[i])!r}\n")
    for i, j in sorted(form.space.ref_edges):
        out.write(f"ref {i} {j}\n")
    return out.getvalue()


def save_form(form: DirichletForm, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_form(form))


def matrix_csv(M, header=None) -> str:
    """CSV text for a matrix; default header is the column index row."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    cols = M.shape[1]
    if header is None:
        header = [str(c) for c in range(cols)]
    lines = [",".join(header)]
    for row in M:
        lines.append(",".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def save_matrix_csv(path, M, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(matrix_csv(M, header))


def canonical_json(obj) -> str:
    """Deterministic JSON serialization used for all reports."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))
