"""Combinatorial p.c.f. structures, level graphs and the refinement operator.

A structure is given by its boundary labels ``V0`` and, for each cell i,
the images ``F_i(b)`` of the boundary points as level-1 labels.  Cells that
share a level-1 label are glued there.  Level-n vertex sets are built by
substituting a copy of ``V_{n-1}`` into every cell:

* ``F_i(b)`` for ``b`` in ``V0`` keeps its level-1 label,
* ``F_i(x)`` for ``x`` outside ``V0`` is labeled ``"<i>.<label of x>"``
  with 1-based ``i``.

The embedded ``V_{n-1}`` always comes first in the ordering of ``V_n``, so
the inclusion ``V_m -> V_n`` is the prefix of length ``|V_m|``.  Words are
ordered lexicographically, first letter most significant.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, GuardError, StructureError
from .forms import StandardForm, VertexSet, as_vertex_set
from .unionfind import UnionFind

VERTEX_GUARD = 20000


@dataclass(frozen=True)
class GroupElement:
    """A symmetry: permutation of ``V0`` plus the induced cell permutation (0-based)."""

    sigma: tuple  # sigma[k] = index of the image of boundary vertex k
    cell_perm: tuple  # cell_perm[i] = image of cell i

    def compose(self, other: "GroupElement") -> "GroupElement":
        """``self`` after ``other``."""
        return GroupElement(
            tuple(self.sigma[j] for j in other.sigma),
            tuple(self.cell_perm[j] for j in other.cell_perm),
        )

    @property
    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.sigma)) and all(
            i == j for i, j in enumerate(self.cell_perm)
        )


@dataclass(frozen=True)
class LevelGraph:
    level: int
    vertices: VertexSet
    cell_index: np.ndarray  # (N^n, |V0|) indices into vertices
    word_weights: np.ndarray  # r_w for each word, same order as cell_index
    maps: tuple  # maps[i]: indices of F_i(V_{n-1}) in V_n (empty at level 0)

    @property
    def n_cells(self) -> int:
        return int(self.cell_index.shape[0])

    def words(self, n_letters: int):
        return list(itertools.product(range(1, n_letters + 1), repeat=self.level))

    def cell_labels(self, w: int):
        return [self.vertices.labels[k] for k in self.cell_index[w]]


class _Combinatorics:
    """Level vertex sets and maps, shared by structures differing only in r."""

    def __init__(self, boundary: VertexSet, cells: tuple):
        self.boundary = boundary
        self.cells = cells
        self.levels = []  # list of (VertexSet, maps, cell_index)
        b = len(boundary)
        self.levels.append((boundary, (), np.arange(b)[None, :]))

    def get(self, n: int):
        while len(self.levels) <= n:
            self._extend()
        return self.levels[n]

    def _extend(self):
        boundary, cells = self.boundary, self.cells
        prev_vs, _, prev_cells = self.levels[-1]
        m = len(self.levels)
        nb = len(boundary)
        labels = []
        index = {}
        maps = []
        # Embedded V_{m-1}: its vertices are images of V_{m-2} under the cells,
        # which carry the same labels at level m.
        level1_labels = [cells[i][boundary.labels[k]] for i in range(len(cells)) for k in range(nb)]
        if m == 1:
            order = []
            seen = set()
            for x in boundary.labels:
                seen.add(x)
                order.append(x)
            for lab in level1_labels:
                if lab not in seen:
                    seen.add(lab)
                    order.append(lab)
            for lab in order:
                index[lab] = len(labels)
                labels.append(lab)
            for i in range(len(cells)):
                maps.append(np.array([index[cells[i][x]] for x in boundary.labels], dtype=np.int64))
        else:
            for lab in prev_vs.labels:
                index[lab] = len(labels)
                labels.append(lab)
            bset = set(boundary.labels)
            for i in range(len(cells)):
                mp = np.empty(len(prev_vs), dtype=np.int64)
                for k, x in enumerate(prev_vs.labels):
                    lab = cells[i][x] if x in bset else f"{i + 1}.{x}"
                    if lab not in index:
                        index[lab] = len(labels)
                        labels.append(lab)
                    mp[k] = index[lab]
                maps.append(mp)
        vs = VertexSet(labels)
        n_prev = prev_cells.shape[0]
        cell_index = np.vstack([maps[i][prev_cells] for i in range(len(cells))])
        assert cell_index.shape == (len(cells) * n_prev, nb)
        self.levels.append((vs, tuple(maps), cell_index))


@dataclass(frozen=True, eq=False)
class PcfStructure:
    boundary: VertexSet
    cells: tuple  # cells[i]: dict boundary label -> level-1 label
    r: np.ndarray
    group: tuple = ()  # generators as GroupElement
    geometry: Mapping | None = None
    fixed_words: Mapping | None = None
    name: str = "custom"
    p: float | None = None
    E0: tuple | None = None  # optional [[x, y, c], ...] on V0
    _combo: _Combinatorics | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boundary", as_vertex_set(self.boundary))
        cells = tuple(dict(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        r = np.asarray(self.r, dtype=float).ravel()
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        self._validate()
        if self._combo is None:
            object.__setattr__(self, "_combo", _Combinatorics(self.boundary, cells))

    @property
    def N(self) -> int:
        return len(self.cells)

    def _validate(self):
        b = self.boundary
        if len(b) < 2:
            raise StructureError("boundary needs at least two vertices")
        if len(self.cells) < 2:
            raise StructureError("a structure needs at least two cells")
        if self.r.size != len(self.cells):
            raise StructureError(f"r has {self.r.size} entries for {len(self.cells)} cells")
        if not np.all(np.isfinite(self.r)) or np.any(self.r <= 0):
            raise StructureError("weights r must be positive and finite")
        for i, c in enumerate(self.cells):
            if set(c) != set(b.labels):
                raise StructureError(f"cell {i + 1}: images must be given for exactly the boundary labels")
            if len(set(c.values())) != len(c):
                raise StructureError(f"cell {i + 1}: boundary map is not injective")
            for lab in c.values():
                if isinstance(lab, str) and "." in lab and lab.split(".", 1)[0].isdigit():
                    raise StructureError(f"cell {i + 1}: label {lab!r} clashes with generated labels")
        v1 = {lab for c in self.cells for lab in c.values()}
        missing = [x for x in b if x not in v1]
        if missing:
            raise StructureError(f"boundary vertices {missing!r} are not images of any cell")
        # Cells glued through shared labels must form a connected graph.
        uf = UnionFind(range(len(self.cells)))
        owner = {}
        for i, c in enumerate(self.cells):
            for lab in c.values():
                if lab in owner:
                    uf.union(owner[lab], i)
                else:
                    owner[lab] = i
        if len(uf.groups()) != 1:
            raise StructureError("level-1 cell graph is disconnected")

    def with_r(self, r) -> "PcfStructure":
        return PcfStructure(
            self.boundary, self.cells, r, self.group, self.geometry, self.fixed_words,
            self.name, self.p, self.E0, self._combo,
        )

    def with_group(self, group) -> "PcfStructure":
        return PcfStructure(
            self.boundary, self.cells, self.r, tuple(group), self.geometry, self.fixed_words,
            self.name, self.p, self.E0, self._combo,
        )

    def level_size(self, n: int) -> int:
        return len(self._combo.get(n)[0])

    def default_form(self, p: float) -> StandardForm:
        if self.E0:
            return StandardForm.from_pairs(self.boundary, p, self.E0)
        return StandardForm.complete(self.boundary, p, 1.0)

    def to_dict(self) -> dict:
        labels = self.boundary.labels
        out = {
            "boundary": list(labels),
            "cells": [{"images": dict(c)} for c in self.cells],
            "r": [float(x) for x in self.r],
            "group": [
                {
                    "sigma": {labels[k]: labels[j] for k, j in enumerate(g.sigma)},
                    "cell_perm": [j + 1 for j in g.cell_perm],
                }
                for g in self.group
            ],
        }
        if self.geometry:
            out["geometry"] = {k: list(v) for k, v in self.geometry.items()}
        if self.fixed_words:
            out["fixed_words"] = {k: list(v) for k, v in self.fixed_words.items()}
        if self.p is not None:
            out["p"] = self.p
        if self.E0:
            out["E0"] = [list(t) for t in self.E0]
        return out


def build_level(structure: PcfStructure, n: int) -> LevelGraph:
    """Level-n vertex set, cell incidences and word weights."""
    if n < 0:
        raise DomainError("level must be nonnegative")
    if len(structure.boundary) * structure.N ** n > 50 * VERTEX_GUARD:
        raise GuardError(f"level {n} exceeds the construction guard")
    vs, maps, cell_index = structure._combo.get(n)
    weights = np.ones(1)
    for _ in range(n):
        weights = np.outer(structure.r, weights).ravel()
    return LevelGraph(n, vs, cell_index, weights, maps)


def max_level(structure: PcfStructure, guard: int = VERTEX_GUARD) -> int:
    """Largest n with |V_n| <= guard."""
    n = 0
    while structure.level_size(n + 1) <= guard:
        n += 1
    return n


def refine_form(E: StandardForm, structure: PcfStructure, n: int | None = None) -> StandardForm:
    """``Lambda E(f) = sum_i r_i^{-1} E(f o F_i)`` from ``V_n`` to ``V_{n+1}``."""
    if n is None:
        n = _level_of(E, structure)
    lv, lv1 = build_level(structure, n), build_level(structure, n + 1)
    if E.vertices != lv.vertices:
        raise DomainError(f"form does not live on V_{n} of the structure")
    rows, cols, vals = [], [], []
    for i, mp in enumerate(lv1.maps):
        rows.append(mp[E.rows])
        cols.append(mp[E.cols])
        vals.append(E.coeffs / structure.r[i])
    return StandardForm.from_arrays(
        lv1.vertices, E.p, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def refine_form_iter(E: StandardForm, structure: PcfStructure, m: int, n: int | None = None) -> StandardForm:
    """``Lambda^m E``; from ``V_0`` this is a single pass over the level-m cells."""
    if m < 0:
        raise DomainError("m must be nonnegative")
    if n is None:
        n = _level_of(E, structure)
    if n == 0:
        lv = build_level(structure, m)
        if E.vertices != structure.boundary:
            raise DomainError("form does not live on V_0 of the structure")
        ci = lv.cell_index
        rows = ci[:, E.rows].ravel()
        cols = ci[:, E.cols].ravel()
        vals = np.outer(1.0 / lv.word_weights, E.coeffs).ravel()
        return StandardForm.from_arrays(lv.vertices, E.p, rows, cols, vals)
    out = E
    for k in range(m):
        out = refine_form(out, structure, n + k)
    return out


def _level_of(E: StandardForm, structure: PcfStructure) -> int:
    size = len(E.vertices)
    n = 0
    while True:
        s = structure.level_size(n)
        if s == size:
            if structure._combo.get(n)[0] == E.vertices:
                return n
            raise DomainError("form vertex set does not match the structure's level labels")
        if s > size:
            raise DomainError("form does not live on any level of the structure")
        n += 1


def embed_form(E: StandardForm, structure: PcfStructure, n: int) -> StandardForm:
    """View a form on ``V_m`` (m <= n) as a form on ``V_n`` via the prefix inclusion."""
    target = build_level(structure, n).vertices
    k = len(E.vertices)
    if target.labels[:k] != E.vertices.labels:
        raise DomainError("form vertex set is not a level below n")
    return StandardForm(target, E.p, E.rows, E.cols, E.coeffs)


# -- symmetry ------------------------------------------------------------------


def _v1_permutation(structure: PcfStructure, g: GroupElement) -> dict:
    b = structure.boundary.labels
    cells = structure.cells
    perm = {}
    for i, c in enumerate(cells):
        for k, x in enumerate(b):
            src = c[x]
            dst = cells[g.cell_perm[i]][b[g.sigma[k]]]
            if perm.get(src, dst) != dst:
                raise StructureError(
                    f"symmetry is incompatible with cell {i + 1}: "
                    f"{src!r} would map to both {perm[src]!r} and {dst!r}"
                )
            perm[src] = dst
    if len(set(perm.values())) != len(perm):
        raise StructureError("induced level-1 map is not a permutation")
    for k, x in enumerate(b):
        if perm[x] != b[g.sigma[k]]:
            raise StructureError(f"induced level-1 map disagrees with sigma at {x!r}")
    return perm


def _cell_twist(structure: PcfStructure, g: GroupElement, perm1: dict, i: int) -> tuple:
    """Boundary permutation tau with ``g o F_i = F_{g(i)} o tau`` on V0."""
    b = structure.boundary
    j = g.cell_perm[i]
    inv_j = {v: k for k, v in structure.cells[j].items()}
    out = []
    for x in b.labels:
        y = perm1[structure.cells[i][x]]
        if y not in inv_j:
            raise StructureError(f"symmetry maps cell {i + 1} outside cell {j + 1}")
        out.append(b.index(inv_j[y]))
    return tuple(out)


def group_closure(structure: PcfStructure, generators=None) -> list:
    """All elements generated by the generators (identity first)."""
    gens = list(structure.group if generators is None else generators)
    nb, N = len(structure.boundary), structure.N
    ident = GroupElement(tuple(range(nb)), tuple(range(N)))
    seen = {ident: None}
    order = [ident]
    queue = deque([ident])
    while queue:
        h = queue.popleft()
        for g in gens:
            e = g.compose(h)
            if e not in seen:
                seen[e] = None
                order.append(e)
                queue.append(e)
    return order


@dataclass(frozen=True)
class SymmetryReport:
    valid: bool
    level: int
    elements: tuple  # GroupElement closure
    permutations: tuple  # per element: index array on V_level
    r_symmetric: bool
    messages: tuple = ()


def level_permutation(structure: PcfStructure, g: GroupElement, n: int, _cache=None) -> np.ndarray:
    """Index permutation of ``V_n`` induced by ``g``: ``out[k]`` is the image of vertex k."""
    if _cache is None:
        _cache = {}
    key = (g.sigma, n)
    if key in _cache:
        return _cache[key]
    vs, maps, _ = structure._combo.get(n)
    if n == 0:
        out = np.array(g.sigma, dtype=np.int64)
    else:
        elements = {e.sigma: e for e in group_closure(structure)}
        perm1 = _v1_permutation(structure, g)
        out = np.full(len(vs), -1, dtype=np.int64)
        for i in range(structure.N):
            tau = _cell_twist(structure, g, perm1, i)
            if tau not in elements:
                raise StructureError(f"cell {i + 1}: induced boundary map is not a group element")
            inner = level_permutation(structure, elements[tau], n - 1, _cache)
            img = maps[g.cell_perm[i]][inner]
            src = maps[i]
            prev = out[src]
            clash = (prev >= 0) & (prev != img)
            if clash.any():
                raise StructureError(f"symmetry is not well defined on level {n} at cell {i + 1}")
            out[src] = img
        if (out < 0).any() or np.unique(out).size != out.size:
            raise StructureError(f"symmetry does not induce a permutation of V_{n}")
    _cache[key] = out
    return out


def check_symmetry(structure: PcfStructure, n: int = 1, generators=None) -> SymmetryReport:
    """Verify the generators and build their induced permutations of ``V_n``."""
    gens = list(structure.group if generators is None else generators)
    st = structure if generators is None else structure.with_group(gens)
    for g in gens:
        _v1_permutation(st, g)
    elements = group_closure(st)
    cache = {}
    perms = tuple(level_permutation(st, e, n, cache) for e in elements)
    r_sym = all(np.allclose(st.r, st.r[list(e.cell_perm)], rtol=1e-12, atol=0) for e in elements)
    msgs = () if r_sym else ("weights r are not invariant under the group",)
    return SymmetryReport(True, n, tuple(elements), perms, r_sym, msgs)


def r_preserving_subgroup(structure: PcfStructure) -> list:
    """Group elements whose cell permutation leaves r unchanged."""
    return [
        e for e in group_closure(structure)
        if np.allclose(structure.r, structure.r[list(e.cell_perm)], rtol=1e-12, atol=0)
    ]


# -- geometry ------------------------------------------------------------------


@dataclass(frozen=True)
class WalkReport:
    ell0: float
    walks: dict  # (x, y) -> list of labels or None
    all_connected: bool


def strict_zero_walk(structure: PcfStructure, geometry: Mapping | None = None, rtol: float = 1e-9) -> WalkReport:
    """Paths through V0 using only steps of the minimal pairwise distance."""
    geom = geometry if geometry is not None else structure.geometry
    if not geom:
        raise DomainError("strict_zero_walk needs boundary coordinates")
    labels = structure.boundary.labels
    try:
        pts = np.array([geom[x] for x in labels], dtype=float)
    except KeyError as exc:
        raise DomainError(f"missing coordinates for boundary vertex {exc}") from None
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    n = len(labels)
    off = dist[~np.eye(n, dtype=bool)]
    ell0 = float(off.min())
    adj = np.abs(dist - ell0) <= rtol * ell0
    np.fill_diagonal(adj, False)
    walks = {}
    for s, t in itertools.combinations(range(n), 2):
        prev = {s: None}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.nonzero(adj[u])[0]:
                if v not in prev:
                    prev[v] = u
                    queue.append(v)
        if t in prev:
            path, u = [], t
            while u is not None:
                path.append(labels[u])
                u = prev[u]
            walks[(labels[s], labels[t])] = path[::-1]
        else:
            walks[(labels[s], labels[t])] = None
    return WalkReport(ell0, walks, all(w is not None for w in walks.values()))


def level_coordinates(structure: PcfStructure, n: int) -> np.ndarray | None:
    """Coordinates of ``V_n`` from level-1 geometry, or None if unavailable.

    Each cell map is taken to be the affine map fitting boundary coordinates
    to the coordinates of their images (least squares; exact for similitudes).
    """
    geom = structure.geometry
    if not geom:
        return None
    b = structure.boundary.labels
    try:
        X0 = np.array([geom[x] for x in b], dtype=float)
        imgs = [np.array([geom[c[x]] for x in b], dtype=float) for c in structure.cells]
    except KeyError:
        return None
    A0 = np.hstack([X0, np.ones((len(b), 1))])
    affine = [np.linalg.lstsq(A0, Y, rcond=None)[0] for Y in imgs]
    coords = X0
    for m in range(1, n + 1):
        vs, maps, _ = structure._combo.get(m)
        new = np.zeros((len(vs), X0.shape[1]))
        A = np.hstack([coords, np.ones((len(coords), 1))])
        for i, T in enumerate(affine):
            new[maps[i]] = A @ T
        coords = new
    return coords


# -- I/O and presets -------------------------------------------------------------


def _parse_group(data, boundary: VertexSet, n_cells: int, cells) -> tuple:
    out = []
    for gi, item in enumerate(data or []):
        where = f"group[{gi}]"
        if not isinstance(item, Mapping) or "sigma" not in item or "cell_perm" not in item:
            raise StructureError(f"{where}: expected an object with 'sigma' and 'cell_perm'")
        sig = item["sigma"]
        if not isinstance(sig, Mapping):
            raise StructureError(f"{where}.sigma: expected a label mapping")
        try:
            sigma = tuple(boundary.index(sig.get(x, x)) for x in boundary.labels)
        except Exception:
            raise StructureError(f"{where}.sigma: images must be boundary labels") from None
        if sorted(sigma) != list(range(len(boundary))):
            raise StructureError(f"{where}.sigma: not a permutation of the boundary")
        cp = item["cell_perm"]
        if sorted(cp) != list(range(1, n_cells + 1)):
            raise StructureError(f"{where}.cell_perm: expected a permutation of 1..{n_cells}")
        out.append(GroupElement(sigma, tuple(int(j) - 1 for j in cp)))
    return tuple(out)


def structure_from_dict(data: Mapping, name: str = "custom") -> PcfStructure:
    if not isinstance(data, Mapping):
        raise StructureError("fractal spec must be a JSON object")
    for key in ("boundary", "cells", "r"):
        if key not in data:
            raise StructureError(f"fractal spec: missing field '{key}'")
    boundary = VertexSet(data["boundary"])
    cells = []
    for i, c in enumerate(data["cells"]):
        if not isinstance(c, Mapping) or "images" not in c or not isinstance(c["images"], Mapping):
            raise StructureError(f"cells[{i}]: expected an object with an 'images' mapping")
        cells.append(dict(c["images"]))
    try:
        r = [float(x) for x in data["r"]]
    except (TypeError, ValueError):
        raise StructureError("r: expected a list of numbers") from None
    group = _parse_group(data.get("group"), boundary, len(cells), cells)
    geom = data.get("geometry")
    fixed = data.get("fixed_words")
    if fixed is not None:
        fixed = {k: tuple(int(i) for i in v) for k, v in fixed.items()}
    e0 = data.get("E0")
    if e0 is not None:
        e0 = tuple((x, y, float(c)) for x, y, c in e0)
    p = data.get("p")
    st = PcfStructure(
        boundary, tuple(cells), r, group,
        {k: tuple(v) for k, v in geom.items()} if geom else None,
        fixed, data.get("name", name), None if p is None else float(p), e0,
    )
    for g in st.group:
        _v1_permutation(st, g)
    return st


def load_structure(path) -> PcfStructure:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StructureError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return structure_from_dict(data, name=path.stem)
    except (StructureError, DomainError) as exc:
        raise StructureError(f"{path}: {exc}") from None


def save_structure(structure: PcfStructure, path) -> None:
    Path(path).write_text(json.dumps(structure.to_dict(), indent=2) + "\n")


def _interval(p: float) -> PcfStructure:
    w = 2.0 ** (1.0 - p)
    return PcfStructure(
        VertexSet(["0", "1"]),
        ({"0": "0", "1": "m"}, {"0": "m", "1": "1"}),
        [w, w],
        (GroupElement((1, 0), (1, 0)),),
        {"0": (0.0,), "1": (1.0,), "m": (0.5,)},
        {"0": (1,), "1": (2,)},
        "interval",
    )


def _path3(p: float) -> PcfStructure:
    w = 2.0 ** (1.0 - p)
    return PcfStructure(
        VertexSet(["x", "y", "z"]),
        ({"x": "x", "y": "a", "z": "y"}, {"x": "y", "y": "b", "z": "z"}),
        [w, w],
        (GroupElement((2, 1, 0), (1, 0)),),
        {"x": (0.0,), "y": (0.5,), "z": (1.0,), "a": (0.25,), "b": (0.75,)},
        {"x": (1,), "z": (2,)},
        "path3",
    )


def _sg() -> PcfStructure:
    text = resources.files("penergy").joinpath("data/sg.json").read_text()
    return structure_from_dict(json.loads(text), name="sg")


PRESETS = ("interval", "sg", "path3")


def preset(name: str, p: float = 2.0, r: Sequence[float] | None = None) -> PcfStructure:
    """Built-in structures.  Interval and path3 default to ``r_i = 2^{1-p}``."""
    if name == "interval":
        st = _interval(p)
    elif name == "path3":
        st = _path3(p)
    elif name == "sg":
        st = _sg()
    else:
        raise DomainError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return st if r is None else st.with_r(r)
