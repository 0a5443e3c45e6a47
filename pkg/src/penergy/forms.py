"""Discrete p-energy forms on finite vertex sets.

Two concrete representations are provided:

* :class:`StandardForm` -- ``E(f) = sum_{x<y} c_xy |f(x) - f(y)|^p``.  Each
  unordered pair is stored once and counted once.  The "half the ordered
  sum" convention ``1/2 sum_{x != y}`` is the special case ``c_xy = 1``.
* :class:`TraceForm` -- a standard form on a superset ``V`` restricted to a
  boundary ``B`` by minimizing over the values on ``V \\ B``.

Functions on a vertex set are accepted either as a mapping from labels to
values or as an array in vertex order.  2-D arrays of shape ``(k, n)`` are
evaluated row-wise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import qmc

from .errors import DomainError

DEFAULT_PROBES = 256


class VertexSet:
    """Ordered collection of distinct vertex labels."""

    __slots__ = ("labels", "_index")

    def __init__(self, labels: Iterable[Any]):
        labels = tuple(labels)
        index = {x: i for i, x in enumerate(labels)}
        if len(index) != len(labels):
            raise DomainError("vertex labels must be unique")
        self.labels = labels
        self._index = index

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, x):
        return x in self._index

    def __eq__(self, other):
        if isinstance(other, VertexSet):
            return self.labels == other.labels
        return NotImplemented

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"VertexSet({list(self.labels)!r})"

    def index(self, x) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise DomainError(f"unknown vertex {x!r}") from None

    def indices(self, xs: Iterable[Any]) -> np.ndarray:
        return np.array([self.index(x) for x in xs], dtype=np.int64)

    def same_members(self, other: "VertexSet") -> bool:
        return len(self) == len(other) and all(x in self._index for x in other)


def as_vertex_set(vs) -> VertexSet:
    return vs if isinstance(vs, VertexSet) else VertexSet(vs)


def as_values(vertices: VertexSet, f) -> np.ndarray:
    """Coerce ``f`` to a float array in vertex order (1-D or 2-D)."""
    if isinstance(f, Mapping):
        missing = [x for x in vertices if x not in f]
        if missing:
            raise DomainError(f"missing values for vertices {missing!r}")
        arr = np.array([f[x] for x in vertices], dtype=float)
    else:
        arr = np.asarray(f, dtype=float)
        if arr.shape[-1] != len(vertices):
            raise DomainError(
                f"function has {arr.shape[-1]} values, vertex set has {len(vertices)}"
            )
    if not np.all(np.isfinite(arr)):
        raise DomainError("function values must be finite")
    return arr


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1.0 or not np.isfinite(p):
        raise DomainError(f"exponent p must lie in (1, inf), got {p}")
    return p


@dataclass(frozen=True, eq=False)
class StandardForm:
    """``sum_{x<y} c_xy |f(x)-f(y)|^p`` stored as a sparse list of pairs.

    ``rows[k] < cols[k]`` index into ``vertices``; pairs are unique and every
    stored coefficient is strictly positive.
    """

    vertices: VertexSet
    p: float
    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        for name in ("rows", "cols", "coeffs"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_arrays(cls, vertices, p, rows, cols, coeffs) -> "StandardForm":
        vertices = as_vertex_set(vertices)
        p = _check_p(p)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if not (rows.shape == cols.shape == coeffs.shape):
            raise DomainError("rows, cols and coeffs must have equal length")
        if coeffs.size and (np.any(coeffs < 0) or not np.all(np.isfinite(coeffs))):
            raise DomainError("coefficients must be finite and nonnegative")
        n = len(vertices)
        if rows.size and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
            raise DomainError("pair index out of range")
        keep = (rows != cols) & (coeffs > 0)
        rows, cols, coeffs = rows[keep], cols[keep], coeffs[keep]
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        if lo.size:
            mat = coo_matrix((coeffs, (lo, hi)), shape=(n, n)).tocsr()
            mat.sum_duplicates()
            mat = mat.tocoo()
            order = np.lexsort((mat.col, mat.row))
            lo, hi, coeffs = mat.row[order], mat.col[order], mat.data[order]
        return cls(vertices, p, lo.astype(np.int64), hi.astype(np.int64), coeffs.astype(float))

    @classmethod
    def from_pairs(cls, vertices, p, pairs: Iterable[Sequence]) -> "StandardForm":
        vertices = as_vertex_set(vertices)
        pairs = list(pairs)
        rows = [vertices.index(x) for x, _, _ in pairs]
        cols = [vertices.index(y) for _, y, _ in pairs]
        vals = [float(c) for _, _, c in pairs]
        return cls.from_arrays(vertices, p, rows, cols, vals)

    @classmethod
    def from_matrix(cls, vertices, p, matrix) -> "StandardForm":
        """Build from a symmetric coefficient matrix (upper triangle is read)."""
        vertices = as_vertex_set(vertices)
        m = np.asarray(matrix, dtype=float)
        n = len(vertices)
        if m.shape != (n, n):
            raise DomainError("coefficient matrix shape does not match vertex set")
        if not np.allclose(m, m.T, rtol=1e-12, atol=0):
            raise DomainError("coefficient matrix must be symmetric")
        iu, ju = np.triu_indices(n, k=1)
        return cls.from_arrays(vertices, p, iu, ju, m[iu, ju])

    @classmethod
    def complete(cls, vertices, p, c: float = 1.0) -> "StandardForm":
        vertices = as_vertex_set(vertices)
        iu, ju = np.triu_indices(len(vertices), k=1)
        return cls.from_arrays(vertices, p, iu, ju, np.full(iu.size, float(c)))

    @classmethod
    def zero(cls, vertices, p) -> "StandardForm":
        empty = np.zeros(0)
        return cls.from_arrays(vertices, p, empty, empty, empty)

    @property
    def n_pairs(self) -> int:
        return int(self.coeffs.size)

    def matrix(self) -> np.ndarray:
        n = len(self.vertices)
        m = np.zeros((n, n))
        m[self.rows, self.cols] = self.coeffs
        return m + m.T

    def coeff(self, x, y) -> float:
        i, j = sorted((self.vertices.index(x), self.vertices.index(y)))
        hit = np.nonzero((self.rows == i) & (self.cols == j))[0]
        return float(self.coeffs[hit[0]]) if hit.size else 0.0

    def components(self) -> np.ndarray:
        n = len(self.vertices)
        adj = coo_matrix((np.ones(self.n_pairs), (self.rows, self.cols)), shape=(n, n))
        return connected_components(adj, directed=False)[1]

    @property
    def nondegenerate(self) -> bool:
        return len(self.vertices) >= 2 and np.unique(self.components()).size == 1

    def energy(self, f) -> np.ndarray | float:
        vals = as_values(self.vertices, f)
        d = vals[..., self.rows] - vals[..., self.cols]
        out = np.abs(d) ** self.p @ self.coeffs
        return float(out) if np.ndim(out) == 0 else out

    __call__ = energy

    def scaled(self, s: float) -> "StandardForm":
        return StandardForm(self.vertices, self.p, self.rows, self.cols, self.coeffs * s)

    def permuted(self, perm: Mapping[Any, Any]) -> "StandardForm":
        """Form ``f -> E(f o perm)`` where ``perm`` maps labels to labels."""
        idx = np.array([self.vertices.index(perm[x]) for x in self.vertices])
        inv = np.empty_like(idx)
        inv[idx] = np.arange(idx.size)
        return StandardForm.from_arrays(
            self.vertices, self.p, inv[self.rows], inv[self.cols], self.coeffs
        )

    def relabeled(self, vertices: VertexSet) -> "StandardForm":
        """Same form re-indexed onto a vertex set with the same members."""
        vertices = as_vertex_set(vertices)
        if not vertices.same_members(self.vertices):
            raise DomainError("relabeling requires the same vertex members")
        idx = vertices.indices(self.vertices.labels)
        return StandardForm.from_arrays(vertices, self.p, idx[self.rows], idx[self.cols], self.coeffs)

    def embedded(self, vertices: VertexSet) -> "StandardForm":
        """Same coefficients viewed on a superset of vertices."""
        vertices = as_vertex_set(vertices)
        idx = vertices.indices(self.vertices.labels)
        return StandardForm.from_arrays(vertices, self.p, idx[self.rows], idx[self.cols], self.coeffs)

    def to_dict(self) -> dict:
        labels = self.vertices.labels
        return {
            "vertices": list(labels),
            "p": self.p,
            "coeffs": [
                [labels[i], labels[j], float(c)]
                for i, j, c in zip(self.rows, self.cols, self.coeffs)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "StandardForm":
        try:
            return cls.from_pairs(data["vertices"], data["p"], data["coeffs"])
        except KeyError as exc:
            raise DomainError(f"form document missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "StandardForm":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FormValue:
    energy: float
    minimizer: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class TraceForm:
    """Trace of ``ambient`` onto ``boundary``.

    Evaluation minimizes the ambient energy over all extensions.  When
    ``allow_degenerate`` is set, interior components that do not touch the
    boundary are pinned to zero instead of raising.
    """

    ambient: StandardForm
    boundary: VertexSet
    allow_degenerate: bool = False
    cfg: Any = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boundary", as_vertex_set(self.boundary))
        if len(self.boundary) < 2:
            raise DomainError("trace boundary needs at least two vertices")
        for x in self.boundary:
            if x not in self.ambient.vertices:
                raise DomainError(f"boundary vertex {x!r} not in ambient vertex set")

    @property
    def vertices(self) -> VertexSet:
        return self.boundary

    @property
    def p(self) -> float:
        return self.ambient.p

    @property
    def nondegenerate(self) -> bool:
        return self.ambient.nondegenerate

    @property
    def boundary_index(self) -> np.ndarray:
        return self.ambient.vertices.indices(self.boundary.labels)

    def value(self, f, cfg=None) -> FormValue:
        from .solver import p_harmonic_extend

        vals = as_values(self.boundary, f)
        g = p_harmonic_extend(self, vals, cfg if cfg is not None else self.cfg)
        return FormValue(energy=self.ambient.energy(g), minimizer=g)

    def energy(self, f, cfg=None):
        from .solver import p_harmonic_extend

        vals = as_values(self.boundary, f)
        g = p_harmonic_extend(self, vals, cfg if cfg is not None else self.cfg)
        return self.ambient.energy(g)

    __call__ = energy

    def scaled(self, s: float) -> "TraceForm":
        return TraceForm(self.ambient.scaled(s), self.boundary, self.allow_degenerate, self.cfg)

    def with_cfg(self, cfg) -> "TraceForm":
        return TraceForm(self.ambient, self.boundary, self.allow_degenerate, cfg)


Form = StandardForm | TraceForm


def eval_standard(form: StandardForm, f) -> float:
    return form.energy(f)


def eval_trace(form: TraceForm, f, cfg=None) -> FormValue:
    return form.value(f, cfg)


def sum_forms(forms: Sequence[StandardForm]) -> StandardForm:
    if not forms:
        raise DomainError("sum_forms needs at least one form")
    first = forms[0]
    for g in forms[1:]:
        if g.vertices != first.vertices or g.p != first.p:
            raise DomainError("summed forms must share vertex set and p")
    return StandardForm.from_arrays(
        first.vertices,
        first.p,
        np.concatenate([g.rows for g in forms]),
        np.concatenate([g.cols for g in forms]),
        np.concatenate([g.coeffs for g in forms]),
    )


def scale_form(form, s: float):
    s = float(s)
    if not s > 0 or not np.isfinite(s):
        raise DomainError(f"scale factor must be positive, got {s}")
    return form.scaled(s)


def markov_clamp(f):
    """Pointwise ``(f v 0) ^ 1``; mappings stay mappings."""
    if isinstance(f, Mapping):
        return {x: min(max(float(v), 0.0), 1.0) for x, v in f.items()}
    return np.clip(np.asarray(f, dtype=float), 0.0, 1.0)


def _as_permutation(vertices: VertexSet, perm) -> dict:
    if isinstance(perm, Mapping):
        mapping = {x: perm.get(x, x) for x in vertices}
    else:
        arr = list(perm)
        if len(arr) != len(vertices):
            raise DomainError("permutation length does not match vertex set")
        mapping = {vertices.labels[i]: vertices.labels[int(j)] for i, j in enumerate(arr)}
    image = set(mapping.values())
    if image != set(vertices.labels) or any(x not in vertices for x in image):
        raise DomainError("group element is not a permutation of the vertex set")
    return mapping


def symmetrize(form: StandardForm, group: Sequence) -> StandardForm:
    """Average ``E(f o sigma)`` over the listed permutations.

    Pass the full group, not only generators, to obtain an invariant
    form; the identity is added if missing.
    """
    perms = [_as_permutation(form.vertices, g) for g in group]
    identity = {x: x for x in form.vertices}
    if identity not in perms:
        perms.append(identity)
    parts = [form.permuted(g) for g in perms]
    return scale_form(sum_forms(parts), 1.0 / len(parts))


def oscillation(f) -> np.ndarray | float:
    arr = np.asarray(f, dtype=float)
    out = arr.max(axis=-1) - arr.min(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def indicator_probes(n: int, max_n: int = 12) -> np.ndarray:
    """All nonconstant 0/1 functions on ``n`` points (capped at ``max_n``)."""
    if n > max_n:
        return np.eye(n)
    codes = np.arange(1, 2**n - 1, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


def quasi_random_probes(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled Halton points mapped onto ``{Osc(f) = 1, sum f = 0}``."""
    if count <= 0:
        return np.zeros((0, n))
    pts = qmc.Halton(d=n, scramble=True, seed=seed).random(count + 8)
    pts = pts - pts.mean(axis=1, keepdims=True)
    osc = pts.max(axis=1) - pts.min(axis=1)
    pts = pts[osc > 1e-9][:count]
    osc = pts.max(axis=1) - pts.min(axis=1)
    return pts / osc[:, None]


def probe_set(n: int, count: int = DEFAULT_PROBES, seed: int = 0) -> np.ndarray:
    return np.vstack([indicator_probes(n), quasi_random_probes(n, count, seed)])


def norm_surrogate(form1, form2, probes: np.ndarray | None = None, seed: int = 0) -> float:
    """Probe-set lower bound of ``sup |E1(f) - E2(f)| / Osc(f)^p``."""
    if not form1.vertices.same_members(form2.vertices):
        raise DomainError("forms must live on the same vertex set")
    if form1.p != form2.p:
        raise DomainError("forms must share p")
    n = len(form1.vertices)
    if probes is None:
        probes = probe_set(n, DEFAULT_PROBES, seed)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise DomainError("empty probe set")
    osc = oscillation(probes)
    probes = probes[osc > 0]
    if probes.shape[0] == 0:
        raise DomainError("probe set contains only constants")
    osc = oscillation(probes)
    e1 = form1.energy(probes) if form1.vertices == form2.vertices else form1.energy(
        _reorder(probes, form2.vertices, form1.vertices)
    )
    e2 = form2.energy(probes)
    return float(np.max(np.abs(np.atleast_1d(e1) - np.atleast_1d(e2)) / osc**form1.p))


def _reorder(vals: np.ndarray, src: VertexSet, dst: VertexSet) -> np.ndarray:
    return vals[..., src.indices(dst.labels)]


def form_to_dict(form) -> dict:
    if isinstance(form, StandardForm):
        return form.to_dict()
    return {"trace": {"ambient": form.ambient.to_dict(), "boundary": list(form.boundary)}}
