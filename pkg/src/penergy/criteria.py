"""Equivalence relations on the boundary, degeneracy detection, and the
Sabot-type existence test for eigenforms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateFormError, DomainError, GuardError
from .forms import StandardForm, TraceForm, VertexSet, as_vertex_set, probe_set
from .fractal import GroupElement, PcfStructure, build_level, r_preserving_subgroup
from .renorm import renorm_step
from .solver import ResistanceMatrix, SolverConfig, evaluate, ratio_bounds
from .unionfind import UnionFind

RELATION_GUARD = 8
# Relative gap below which two rho values are treated as tied.
TIE_RTOL = 1e-9
HEURISTIC_MARGIN = 10.0

EXISTS = "EXISTS"
NOT_EXISTS = "NOT_EXISTS"
INCONCLUSIVE = "INCONCLUSIVE"
BOUNDARY = "BOUNDARY"


# -- relations -----------------------------------------------------------------


@dataclass(frozen=True)
class EquivRelation:
    """A partition of ``base``; blocks are stored as sorted index tuples."""

    base: VertexSet
    classes: tuple

    def __post_init__(self):
        base = as_vertex_set(self.base)
        object.__setattr__(self, "base", base)
        blocks = [tuple(sorted(base.index(x) for x in b)) for b in self.classes]
        flat = sorted(i for b in blocks for i in b)
        if any(not b for b in blocks) or flat != list(range(len(base))):
            raise DomainError("classes must partition the base set")
        object.__setattr__(self, "classes", tuple(sorted(blocks)))

    @classmethod
    def from_pairs(cls, base, pairs=()) -> "EquivRelation":
        base = as_vertex_set(base)
        uf = UnionFind(range(len(base)))
        for x, y in pairs:
            uf.union(base.index(x), base.index(y))
        return cls(base, [[base.labels[i] for i in g] for g in uf.groups().values()])

    @classmethod
    def from_labels(cls, base, blocks) -> "EquivRelation":
        """Blocks given by label; unlisted vertices become singletons."""
        base = as_vertex_set(base)
        pairs = [(b[0], x) for b in blocks for x in b[1:]]
        return cls.from_pairs(base, pairs)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def is_zero(self) -> bool:
        return self.n_classes == len(self.base)

    @property
    def is_one(self) -> bool:
        return self.n_classes == 1

    @property
    def trivial(self) -> bool:
        return self.is_zero or self.is_one

    def class_ids(self) -> np.ndarray:
        out = np.empty(len(self.base), dtype=np.int64)
        for k, b in enumerate(self.classes):
            out[list(b)] = k
        return out

    def related(self, x, y) -> bool:
        ids = self.class_ids()
        return bool(ids[self.base.index(x)] == ids[self.base.index(y)])

    def pair_mask(self) -> np.ndarray:
        """Boolean matrix of related pairs (diagonal included)."""
        ids = self.class_ids()
        return ids[:, None] == ids[None, :]

    def __le__(self, other: "EquivRelation") -> bool:
        if not self.base.same_members(other.base):
            raise DomainError("relations live on different sets")
        oid = other.class_ids()
        perm = other.base.indices(self.base.labels)
        return all(len({oid[perm[i]] for i in b}) == 1 for b in self.classes)

    def __lt__(self, other: "EquivRelation") -> bool:
        return self <= other and self.n_classes != other.n_classes

    def block_labels(self) -> list:
        return ["~".join(str(self.base.labels[i]) for i in b) for b in self.classes]

    def to_list(self) -> list:
        return [[self.base.labels[i] for i in b] for b in self.classes]

    def __str__(self) -> str:
        return "{" + ", ".join("{" + ",".join(str(self.base.labels[i]) for i in b) + "}" for b in self.classes) + "}"


def _partitions(n: int):
    """Restricted growth strings of length n."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, m):
        if i == n:
            yield tuple(a)
            return
        for v in range(m + 2):
            a[i] = v
            yield from rec(i + 1, max(m, v))

    a[0] = 0
    yield from rec(1, 0)


def enumerate_relations(V0) -> list:
    """All partitions of ``V0`` (Bell-number many)."""
    V0 = as_vertex_set(V0)
    n = len(V0)
    if n > RELATION_GUARD:
        raise GuardError(f"relation enumeration is limited to {RELATION_GUARD} points, got {n}")
    out = []
    for code in _partitions(n):
        blocks = {}
        for i, c in enumerate(code):
            blocks.setdefault(c, []).append(V0.labels[i])
        out.append(EquivRelation(V0, list(blocks.values())))
    return out


def lift_relation(J: EquivRelation, structure: PcfStructure) -> EquivRelation:
    """The minimal relation on ``V_1`` containing every ``(F_i x, F_i y)`` with ``x J y``."""
    if not J.base.same_members(structure.boundary):
        raise DomainError("relation must live on the boundary of the structure")
    lv = build_level(structure, 1)
    uf = UnionFind(range(len(lv.vertices)))
    perm = J.base.indices(structure.boundary.labels)  # structure order -> J index
    inv = np.argsort(perm)
    for mp in lv.maps:
        for b in J.classes:
            idx = [int(mp[inv[i]]) for i in b]
            for k in idx[1:]:
                uf.union(idx[0], k)
    labels = lv.vertices.labels
    return EquivRelation(lv.vertices, [[labels[i] for i in g] for g in uf.groups().values()])


def push_relation(J: EquivRelation, structure: PcfStructure) -> EquivRelation:
    J1 = lift_relation(J, structure)
    ids = J1.class_ids()
    lv1 = J1.base
    pairs = []
    labs = J.base.labels
    for a, b in itertools.combinations(labs, 2):
        if ids[lv1.index(a)] == ids[lv1.index(b)]:
            pairs.append((a, b))
    return EquivRelation.from_pairs(J.base, pairs)


def is_preserved(J: EquivRelation, structure: PcfStructure) -> bool:
    return push_relation(J, structure) == J


def _group_perms(group, base: VertexSet, structure_boundary: VertexSet | None = None) -> list:
    """Generators as index arrays on ``base``."""
    out = []
    for g in group or ():
        if isinstance(g, GroupElement):
            ref = structure_boundary if structure_boundary is not None else base
            mp = {ref.labels[k]: ref.labels[j] for k, j in enumerate(g.sigma)}
        elif isinstance(g, dict):
            mp = dict(g)
        else:
            seq = list(g)
            mp = {base.labels[k]: base.labels[j] for k, j in enumerate(seq)}
        if set(mp) != set(base.labels) or set(mp.values()) != set(base.labels):
            raise DomainError("group element is not a permutation of the base set")
        out.append(np.array([base.index(mp[x]) for x in base.labels]))
    return out


def is_g_relation(J: EquivRelation, group, boundary: VertexSet | None = None) -> bool:
    """Block invariance under every generator."""
    ids = J.class_ids()
    for pm in _group_perms(group, J.base, boundary):
        for b in J.classes:
            if len({ids[pm[i]] for i in b}) != 1:
                return False
    return True


# -- resistance diagnostics ----------------------------------------------------


def _R_on(R: ResistanceMatrix, base: VertexSet) -> np.ndarray:
    idx = R.vertices.indices(base.labels)
    return R.R[np.ix_(idx, idx)]


def delta_JJ(R: ResistanceMatrix, J: EquivRelation, Jp: EquivRelation | None = None) -> float:
    """``max_{x J y} R / min_{x not-J' y} R`` (``J' = J`` by default)."""
    Jp = J if Jp is None else Jp
    if J.trivial or Jp.trivial:
        raise DomainError("delta_J is defined for non-trivial relations")
    if not J <= Jp:
        raise DomainError("delta_{J,J'} needs J contained in J'")
    M = _R_on(R, J.base)
    n = len(J.base)
    off = ~np.eye(n, dtype=bool)
    inside = J.pair_mask() & off
    outside = ~Jp.pair_mask()
    return float(M[inside].max() / M[outside].min())


def cross_ratio(R: ResistanceMatrix, J: EquivRelation, Jp: EquivRelation) -> float:
    """min/max of ``R`` over pairs related by ``J'`` but not by ``J``."""
    M = _R_on(R, J.base)
    mask = Jp.pair_mask() & ~J.pair_mask()
    if not mask.any():
        raise DomainError("no pairs between the two relations")
    return float(M[mask].min() / M[mask].max())


def cut_floor(n: int, delta: float, p: float) -> float:
    """Lower bound on the cross ratio when no relation in between is delta-degenerate."""
    m = n * (n - 1) / 2
    return float(delta**m * float(n) ** (-m * p))


def product_bound_constant(n: int, delta: float, p: float, M: int, m1: int, m2: int) -> float:
    """``C(delta)`` in the chain product bound: the square of ``cut_floor`` per link."""
    c1 = cut_floor(n, delta, p) ** 2
    return float(c1 ** (M - m2 + m1))


def relations_below(R: ResistanceMatrix, delta: float) -> list:
    """All non-trivial relations with ``delta_J < delta``, in increasing order."""
    out = [J for J in enumerate_relations(R.vertices) if not J.trivial and delta_JJ(R, J) < delta]
    out.sort(key=lambda J: -J.n_classes)
    return out


@dataclass(frozen=True)
class DegeneracyChain:
    relations: tuple
    gaps: tuple  # multiplicative gap at each relation
    deltas: tuple  # delta_J for each relation
    threshold: float


def detect_degeneracy(R: ResistanceMatrix, delta: float) -> DegeneracyChain:
    """Nested relations at the large multiplicative gaps of the resistance values."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    M = np.asarray(R.R, dtype=float)
    if not np.all(np.isfinite(M)):
        raise DegenerateFormError("resistance matrix has infinite entries")
    n = len(R.vertices)
    iu = np.triu_indices(n, 1)
    vals = M[iu]
    if np.any(vals <= 0):
        raise DomainError("off-diagonal resistances must be positive")
    thr = delta ** (-2.0 / (n * (n - 1))) if n > 1 else np.inf
    levels = np.unique(vals)
    rels, gaps, dels = [], [], []
    for k in range(len(levels) - 1):
        gap = levels[k + 1] / levels[k]
        if gap <= thr:
            continue
        below = vals <= levels[k]
        J = EquivRelation.from_pairs(
            R.vertices, [(R.vertices.labels[a], R.vertices.labels[b]) for a, b in zip(iu[0][below], iu[1][below])]
        )
        if J.trivial or (rels and J == rels[-1]):
            continue
        rels.append(J)
        gaps.append(float(gap))
        dels.append(delta_JJ(R, J))
    for a, b in zip(rels, rels[1:]):
        if not a < b:
            raise AssertionError("detected relations are not nested")
    return DegeneracyChain(tuple(rels), tuple(gaps), tuple(dels), float(thr))


@dataclass(frozen=True)
class RelationDiagnostics:
    relation: EquivRelation
    delta_J: float
    delta_JJp: dict  # str(J') -> delta_{J,J'}
    preserved: bool
    g_relation: bool


def relation_diagnostics(R: ResistanceMatrix, J: EquivRelation, structure: PcfStructure,
                         group=None, others=()) -> RelationDiagnostics:
    d = delta_JJ(R, J) if not J.trivial else np.nan
    dj = {str(Jp): delta_JJ(R, J, Jp) for Jp in others if not Jp.trivial and J <= Jp}
    grp = r_preserving_subgroup(structure) if group is None else group
    return RelationDiagnostics(J, d, dj, is_preserved(J, structure), is_g_relation(J, grp, structure.boundary))


# -- quotients -----------------------------------------------------------------


def _contract(form: StandardForm, groups: list, labels: list, keep_labels: list) -> StandardForm:
    """Merge each vertex group into one labelled vertex; other vertices keep their labels."""
    n = len(form.vertices)
    new = np.full(n, -1, dtype=np.int64)
    for k, g in enumerate(groups):
        new[list(g)] = k
    rest = [i for i in range(n) if new[i] < 0]
    new[rest] = len(groups) + np.arange(len(rest))
    vs = VertexSet(list(labels) + [keep_labels[i] for i in rest])
    a, b = new[form.rows], new[form.cols]
    keep = a != b
    lo, hi = np.minimum(a, b)[keep], np.maximum(a, b)[keep]
    return StandardForm.from_arrays(vs, form.p, lo, hi, form.coeffs[keep])


def quotient_form(E, J: EquivRelation):
    """``u -> E(sum_I u(I) 1_I)`` on the classes of ``J``."""
    if not E.vertices.same_members(J.base):
        raise DomainError("form and relation live on different sets")
    if isinstance(E, StandardForm):
        amb, bidx = E, np.arange(len(E.vertices))
        vlab = E.vertices.labels
    elif isinstance(E, TraceForm):
        amb, bidx = E.ambient, E.boundary_index
        vlab = E.boundary.labels
    else:
        raise DomainError(f"unsupported form type {type(E).__name__}")
    pos = {x: int(bidx[k]) for k, x in enumerate(vlab)}
    groups = [[pos[J.base.labels[i]] for i in b] for b in J.classes]
    out = _contract(amb, groups, J.block_labels(), list(amb.vertices.labels))
    if isinstance(E, StandardForm):
        return out
    return TraceForm(out, VertexSet(J.block_labels()), allow_degenerate=E.allow_degenerate, cfg=E.cfg)


def _form_parts(E):
    if isinstance(E, StandardForm):
        return E, np.arange(len(E.vertices)), E.vertices
    if isinstance(E, TraceForm):
        return E.ambient, E.boundary_index, E.boundary
    raise DomainError(f"unsupported form type {type(E).__name__}")


def quotient_renorm(E_quot, structure: PcfStructure, J: EquivRelation, cfg: SolverConfig | None = None) -> TraceForm:
    """``T_{V0/J} E = [Lambda_{V0/J} E]_{V0/J}`` for a form on the classes of ``J``."""
    if J.trivial:
        raise DomainError("quotient renormalization needs a non-trivial relation")
    if not is_preserved(J, structure):
        raise DomainError(f"relation {J} is not preserved")
    qlabels = J.block_labels()
    if set(E_quot.vertices.labels) != set(qlabels):
        raise DomainError(f"form must live on the classes {qlabels}")
    J1 = lift_relation(J, structure)
    ids1 = J1.class_ids()
    lv = build_level(structure, 1)
    # V1 classes: those meeting V0 take the V0 class label, the rest are new.
    Jb = J.base
    cls_label = {}
    for k, b in enumerate(J.classes):
        cls_label[int(ids1[lv.vertices.index(Jb.labels[b[0]])])] = qlabels[k]
    for c, b in enumerate(J1.classes):
        if c not in cls_label:
            cls_label[c] = "~".join(str(lv.vertices.labels[i]) for i in b)
    v1cls = [cls_label[c] for c in range(J1.n_classes)]
    order = qlabels + [x for x in v1cls if x not in qlabels]
    index = {x: i for i, x in enumerate(order)}
    amb, bidx, blabels = _form_parts(E_quot)
    bset = set(int(x) for x in bidx)
    inner = [i for i in range(len(amb.vertices)) if i not in bset]
    labels = list(order)
    sb = structure.boundary
    rows, cols, vals = [], [], []
    for i, mp in enumerate(lv.maps):
        # Class of V0/J -> class of V1/J1 under F_i.
        loc = np.empty(len(amb.vertices), dtype=np.int64)
        for k, lab in enumerate(blabels.labels):
            first = Jb.labels[J.classes[qlabels.index(lab)][0]]
            v1 = int(mp[sb.index(first)])
            loc[int(bidx[k])] = index[cls_label[int(ids1[v1])]]
        for j in inner:
            loc[j] = len(labels)
            labels.append(f"{i + 1}.{amb.vertices.labels[j]}")
        a, b = loc[amb.rows], loc[amb.cols]
        keep = a != b
        rows.append(np.minimum(a, b)[keep])
        cols.append(np.maximum(a, b)[keep])
        vals.append(amb.coeffs[keep] / structure.r[i])
    big = StandardForm.from_arrays(VertexSet(labels), amb.p, np.concatenate(rows), np.concatenate(cols),
                                   np.concatenate(vals))
    return TraceForm(big, VertexSet(qlabels), allow_degenerate=True, cfg=cfg)


# -- growth rates and the Sabot test ---------------------------------------------


@dataclass(frozen=True)
class RelationRecord:
    relation: EquivRelation
    rho_bar_J: float
    rho_under_J: float
    rho_under_quotient: float
    exact: bool
    spread: float = 0.0

    def to_dict(self) -> dict:
        return {
            "relation": self.relation.to_list(),
            "rho_bar_J": self.rho_bar_J,
            "rho_under_J": self.rho_under_J,
            "rho_under_quotient": self.rho_under_quotient,
            "exact": self.exact,
            "spread": self.spread,
        }


@dataclass(frozen=True)
class SabotReport:
    records: tuple
    verdict: str
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "records": [r.to_dict() for r in self.records], "notes": list(self.notes)}


def _block_pairs(J: EquivRelation) -> list:
    return [(b[a], b[c]) for b in J.classes for a in range(len(b)) for c in range(a + 1, len(b))]


def _direct_sum_form(J: EquivRelation, p: float, weights) -> StandardForm:
    pairs = _block_pairs(J)
    rows = np.array([a for a, _ in pairs], dtype=np.int64)
    cols = np.array([b for _, b in pairs], dtype=np.int64)
    return StandardForm(J.base, p, rows, cols, np.asarray(weights, dtype=float))


def _complete_form(labels: list, p: float, weights) -> StandardForm:
    vs = VertexSet(labels)
    iu = np.triu_indices(len(vs), 1)
    return StandardForm(vs, p, iu[0], iu[1], np.asarray(weights, dtype=float))


def _probe_ratio(num, den, probes, cfg, eps=1e-13) -> tuple[float, float]:
    e_den = evaluate(den, probes, cfg)
    e_num = evaluate(num, probes, cfg)
    ok = e_den > eps * np.max(e_den)
    q = e_num[ok] / e_den[ok]
    return float(q.max()), float(q.min())


def _ratio(num, den, cfg, positive: bool) -> tuple[float, float]:
    rb = ratio_bounds(num, den, cfg, restrict_positive=positive)
    return rb.sup_ratio, rb.inf_ratio


def _optimize(fun, dim: int, starts: int, seed: int, sign: float) -> tuple[float, float]:
    """Multi-start Nelder-Mead over log-weights; returns (best, spread of the start optima)."""
    if dim == 0:
        v = fun(np.zeros(0))
        return v, 0.0
    rng = np.random.default_rng(seed)
    vals = []
    for s in range(max(starts, 1)):
        x0 = np.zeros(dim) if s == 0 else rng.normal(0.0, 1.0, dim)
        res = minimize(lambda x: sign * fun(x), x0, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 200 * dim})
        vals.append(sign * res.fun)
    vals = np.array(vals)
    best = vals.max() if sign < 0 else vals.min()
    return float(best), float(vals.max() - vals.min())


def rho_values(J: EquivRelation, structure: PcfStructure, p: float, cfg: SolverConfig | None = None,
               starts: int = 4) -> RelationRecord:
    """Growth rates of degenerate direct-sum forms and of quotient forms for ``J``."""
    cfg = cfg or SolverConfig()
    pairs = _block_pairs(J)
    nq = J.n_classes
    exact = len(pairs) == 1 and nq == 2
    probes = probe_set(len(J.base), 32, cfg.seed)
    if exact:
        E = _direct_sum_form(J, p, [1.0])
        TE = renorm_step(E, structure, cfg)
        sup_, inf_ = _probe_ratio(TE, E, probes, cfg)
        Eq = _complete_form(J.block_labels(), p, [1.0])
        TQ = quotient_renorm(Eq, structure, J, cfg)
        q_sup, q_inf = _probe_ratio(TQ, Eq, probe_set(2, 0), cfg)
        spread = max(sup_ - inf_, 0.0)
        if spread > TIE_RTOL * max(abs(sup_), 1e-300):
            exact = False
        return RelationRecord(J, sup_, inf_, q_inf, exact, spread)

    base_w = np.ones(len(pairs))

    def sup_inf(logw):
        E = _direct_sum_form(J, p, base_w * np.exp(logw))
        TE = renorm_step(E, structure, cfg)
        return _ratio(TE, E, cfg, positive=True)

    rho_bar, s1 = _optimize(lambda w: sup_inf(w)[0], len(pairs), starts, cfg.seed, +1.0)
    rho_under, s2 = _optimize(lambda w: sup_inf(w)[1], len(pairs), starts, cfg.seed + 1, -1.0)
    labels = J.block_labels()
    nqp = nq * (nq - 1) // 2

    def q_inf(logw):
        Eq = _complete_form(labels, p, np.exp(logw))
        TQ = quotient_renorm(Eq, structure, J, cfg)
        return _ratio(TQ, Eq, cfg, positive=False)[1]

    if nq == 2:
        rho_q, s3 = q_inf(np.zeros(1)), 0.0
    else:
        rho_q, s3 = _optimize(q_inf, nqp, starts, cfg.seed + 2, -1.0)
    return RelationRecord(J, rho_bar, rho_under, rho_q, False, float(max(s1, s2, s3)))


def _strict_less(a: float, b: float, margin: float) -> bool:
    return b - a > max(margin, TIE_RTOL * max(abs(a), abs(b)))


def candidate_relations(structure: PcfStructure, group=None) -> list:
    """Non-trivial preserved relations invariant under ``group`` (default: r-preserving subgroup)."""
    grp = r_preserving_subgroup(structure) if group is None else group
    return [
        J for J in enumerate_relations(structure.boundary)
        if not J.trivial and is_g_relation(J, grp, structure.boundary) and is_preserved(J, structure)
    ]


def sabot_test(structure: PcfStructure, p: float | None = None, cfg: SolverConfig | None = None,
               starts: int = 4, group=None) -> SabotReport:
    """Existence / non-existence decision from the growth rates of preserved relations."""
    cfg = cfg or SolverConfig()
    p = structure.p if p is None else p
    if p is None:
        raise DomainError("p must be given")
    rels = candidate_relations(structure, group)
    if not rels:
        return SabotReport((), EXISTS, ("no non-trivial preserved relation; existence follows",))
    recs = tuple(rho_values(J, structure, p, cfg, starts) for J in rels)
    margin = {id(r): (0.0 if r.exact else HEURISTIC_MARGIN * r.spread) for r in recs}
    notes = []
    non_exist = any(
        _strict_less(b.rho_under_quotient, a.rho_under_J, margin[id(a)] + margin[id(b)])
        for a in recs for b in recs
    )
    exist = all(_strict_less(r.rho_bar_J, r.rho_under_quotient, 2 * margin[id(r)]) for r in recs)
    if non_exist and exist:
        notes.append("both conditions fired; numerical values are inconsistent")
        verdict = INCONCLUSIVE
    elif non_exist:
        verdict = NOT_EXISTS
    elif exist:
        verdict = EXISTS
    else:
        verdict = INCONCLUSIVE
    if any(not r.exact for r in recs):
        notes.append("some rates come from heuristic optimization")
    return SabotReport(recs, verdict, tuple(notes))


def sg_closed_forms(p: float, r) -> dict:
    """Closed-form growth rates for the three preserved relations of the gasket."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    r = np.asarray(r, dtype=float)
    if r.shape != (3,) or np.any(r <= 0):
        raise DomainError("r must be a positive triple")
    e = 1.0 / (p - 1.0)
    rho_bar, rho_q = [], []
    for i in range(3):
        j, k = [t for t in range(3) if t != i]
        rho_bar.append((r[j] ** e + r[k] ** e) ** (1.0 - p))
        rho_q.append(((1.0 / r[j] + 1.0 / r[k]) ** (-e) + r[i] ** e) ** (1.0 - p))
    order = np.argsort(-r, kind="stable")
    i, j, k = order
    lhs = r[j] ** e + r[k] ** e
    rhs = (1.0 / r[j] + 1.0 / r[k]) ** (-e) + r[i] ** e
    if np.isclose(lhs, rhs, rtol=TIE_RTOL, atol=0.0):
        cls = BOUNDARY
    elif lhs < rhs:
        cls = NOT_EXISTS
    else:
        cls = EXISTS
    return {
        "rho_bar": rho_bar,
        "rho_quotient": rho_q,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "margin": float((lhs - rhs) / max(lhs, rhs)),
        "classification": cls,
    }


def theta(E, structure: PcfStructure, cfg: SolverConfig | None = None) -> tuple[float, bool]:
    """``sup(TE|E) / inf(TE|E)`` and the heuristic flag."""
    TE = renorm_step(E, structure, cfg)
    rb = ratio_bounds(TE, E, cfg)
    return float(rb.sup_ratio / rb.inf_ratio), rb.heuristic
