"""Builders for the standard corpus of forms: paths, cycles, grids, trees,
random local forms, and their jump-augmented (nonlocal) variants.

Every local builder returns a form whose off-diagonal support coincides
with the reference adjacency of its space; ``with_jump`` adds one
off-reference edge, producing the matching nonlocal control.
"""

import numpy as np

from .forms import DirichletForm, form_from_components
from .space import Space


def path_space(n: int, m=None) -> Space:
    edges = frozenset((i, i + 1) for i in range(n - 1))
    return Space(n, np.ones(n) if m is None else m, edges)


def cycle_space(n: int) -> Space:
    edges = set((i, i + 1) for i in range(n - 1))
    if n > 2:
        edges.add((0, n - 1))
    return Space(n, np.ones(n), frozenset(edges))


def grid_space(rows: int, cols: int) -> Space:
    def vid(r, c):
        return r * cols + c

    edges = set()
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.add((vid(r, c), vid(r, c + 1)))
            if r + 1 < rows:
                edges.add((vid(r, c), vid(r + 1, c)))
    return Space(rows * cols, np.ones(rows * cols), frozenset(edges))


def random_tree_space(n: int, seed: int = 0) -> Space:
    rng = np.random.default_rng(seed)
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    return Space(n, np.ones(n), frozenset(edges))


def random_connected_space(n: int, extra_edges: int = 0, seed: int = 0) -> Space:
    """Random tree plus a few extra edges; always connected."""
    rng = np.random.default_rng(seed)
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    attempts = 0
    added = 0
    while added < extra_edges and attempts < 50 * (extra_edges + 1):
        u, v = sorted(rng.integers(0, n, size=2).tolist())
        attempts += 1
        if u != v and (u, v) not in edges:
            edges.add((u, v))
            added += 1
    return Space(n, np.ones(n), frozenset(edges))


def local_form(space: Space, killing=None, seed: int = 0,
               weight_low: float = 0.5, weight_high: float = 2.0) -> DirichletForm:
    """Random-weight form supported exactly on the reference adjacency."""
    rng = np.random.default_rng(seed)
    w = {e: float(rng.uniform(weight_low, weight_high)) for e in sorted(space.ref_edges)}
    if killing is None:
        k = np.zeros(space.n)
    elif np.isscalar(killing):
        k = np.zeros(space.n)
        k[0] = float(killing)
    else:
        k = np.asarray(killing, dtype=float)
    return form_from_components(space, w, k)


def killed_path_form(n: int = 3, weight: float = 1.0, kill: float = 1.0) -> DirichletForm:
    """Unit-weight path with killing at vertex 0; the standard transient fixture.

    For n = 3 this is Q = [[2,-1,0],[-1,2,-1],[0,-1,1]].
    """
    space = path_space(n)
    w = {(i, i + 1): weight for i in range(n - 1)}
    k = np.zeros(n)
    k[0] = kill
    return form_from_components(space, w, k)


def anchored_path_form(n: int, weight: float = 1.0, kill: float = 1.0) -> DirichletForm:
    """Path with killing at both endpoints (both-ends-anchored fixture)."""
    space = path_space(n)
    w = {(i, i + 1): weight for i in range(n - 1)}
    k = np.zeros(n)
    k[0] = kill
    k[n - 1] = kill
    return form_from_components(space, w, k)


def recurrent_path_form(n: int = 3, weight: float = 1.0) -> DirichletForm:
    """Path graph Laplacian (no killing)."""
    space = path_space(n)
    w = {(i, i + 1): weight for i in range(n - 1)}
    return form_from_components(space, w, np.zeros(n))


def with_jump(form: DirichletForm, edge=None, weight: float = 1.0,
              seed: int = 0) -> DirichletForm:
    """Copy of a form with one extra off-reference edge (a nonlocal control).

    The reference adjacency of the space is kept, so the result is not
    local with respect to it.
    """
    space = form.space
    if edge is None:
        rng = np.random.default_rng(seed)
        candidates = [
            (i, j)
            for i in range(space.n)
            for j in range(i + 2, space.n)
            if (i, j) not in space.ref_edges and (i, j) not in form.edge_set()
        ]
        if not candidates:
            raise ValueError("no room for an off-reference edge")
        edge = candidates[int(rng.integers(0, len(candidates)))]
    i, j = min(edge), max(edge)
    if (i, j) in space.ref_edges:
        raise ValueError(f"edge ({i},{j}) is a reference edge; jump must leave it")
    (ei, ej, ew), k = form.decompose()
    w = {(int(a), int(b)): float(v) for a, b, v in zip(ei, ej, ew)}
    if (i, j) in w:
        raise ValueError(f"form already has edge ({i},{j})")
    w[(i, j)] = weight
    return form_from_components(space, w, k.copy())


def jump_path_form(n: int = 3, jump=(0, 2), weight: float = 1.0) -> DirichletForm:
    """Killed path plus one long-range edge; the standard nonlocal fixture."""
    return with_jump(killed_path_form(n), edge=jump, weight=weight)


def diagonal_form(values) -> DirichletForm:
    """Pure killing form Q = diag(values) on an edgeless space."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if np.any(values <= 0):
        raise ValueError("diagonal entries must be positive")
    space = Space(n, np.ones(n), frozenset())
    return form_from_components(space, {}, values)


def local_corpus(max_n: int = 12, seed: int = 0):
    """Named local forms: transient and recurrent across several graph shapes."""
    entries = []
    entries.append(("path6-killed", killed_path_form(min(6, max_n))))
    entries.append(("path6-recurrent", recurrent_path_form(min(6, max_n))))
    if max_n >= 6:
        entries.append(("cycle6-recurrent", local_form(cycle_space(6), seed=seed + 1)))
        sp = grid_space(2, 3)
        k = np.zeros(6)
        k[0] = 1.0
        entries.append(("grid2x3-killed", local_form(sp, killing=k, seed=seed + 2)))
    if max_n >= 7:
        entries.append(("tree7-recurrent", local_form(random_tree_space(7, seed=seed + 3),
                                                      seed=seed + 3)))
        k = np.zeros(7)
        k[2] = 0.7
        entries.append(("random7-killed", local_form(
            random_connected_space(7, extra_edges=2, seed=seed + 4),
            killing=k, seed=seed + 4)))
    if max_n >= 9:
        entries.append(("grid3x3-recurrent", local_form(grid_space(3, 3), seed=seed + 5)))
    if max_n >= 12:
        k = np.zeros(12)
        k[5] = 1.3
        entries.append(("random12-killed", local_form(
            random_connected_space(12, extra_edges=3, seed=seed + 6),
            killing=k, seed=seed + 6)))
        entries.append(("path12-recurrent", recurrent_path_form(12)))
    return entries


def nonlocal_corpus(max_n: int = 12, seed: int = 0, weight: float = 1.0):
    """One jump-augmented variant of every local corpus entry."""
    out = []
    for idx, (name, form) in enumerate(local_corpus(max_n, seed)):
        try:
            out.append((name + "+jump", with_jump(form, weight=weight, seed=seed + 10 + idx)))
        except ValueError:
            continue
    return out
