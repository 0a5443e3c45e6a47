"""The renormalization map, its orbit, and eigenform construction.

``T^n E`` for a form ``E`` on ``V0`` is always stored as a single trace of
``Lambda^n E`` from ``V_n`` (never as nested traces).  Eigenvalues are first
estimated from boundary resistance ratios ``M_n = max R_0 / R_n``, then
refined on the Cesaro-averaged form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, GuardError, StructureError
from .forms import (
    StandardForm,
    TraceForm,
    oscillation,
    probe_set,
    sum_forms,
)
from .unionfind import UnionFind
from .fractal import (
    VERTEX_GUARD,
    PcfStructure,
    build_level,
    embed_form,
    level_permutation,
    max_level,
    r_preserving_subgroup,
    refine_form_iter,
)
from .solver import (
    ResistanceMatrix,
    SolverConfig,
    delta_from_matrix,
    evaluate,
    p_harmonic_extend,
    resistance_matrix,
)

DEGENERATE_DELTA = 1e-12
EIGEN_PROBES = 128
# Smallest delta along the computed orbit still read as condition (A).
CONDITION_A_FLOOR = 1e-6


def _check_on_v0(E, structure: PcfStructure):
    if not E.vertices.same_members(structure.boundary):
        raise DomainError("form must live on the boundary V0 of the structure")


def _ambient_level(E, structure: PcfStructure) -> tuple[StandardForm, int]:
    """(form on V_m, m) representing E as a trace from V_m."""
    if isinstance(E, StandardForm):
        _check_on_v0(E, structure)
        return E.relabeled(structure.boundary), 0
    if isinstance(E, TraceForm):
        _check_on_v0(E, structure)
        amb = E.ambient
        for m in range(0, 64):
            size = structure.level_size(m)
            if size == len(amb.vertices):
                lv = build_level(structure, m)
                if lv.vertices != amb.vertices:
                    raise DomainError("trace ambient does not match the structure's level labels")
                return amb, m
            if size > len(amb.vertices):
                break
        raise DomainError("trace ambient is not a level of the structure")
    raise DomainError(f"unsupported form type {type(E).__name__}")


def renorm_step(E, structure: PcfStructure, cfg: SolverConfig | None = None, steps: int = 1) -> TraceForm:
    """``T E = [Lambda E]_{V0}`` (``steps`` times), as one trace."""
    amb, m = _ambient_level(E, structure)
    out = refine_form_iter(amb, structure, steps, n=m)
    return TraceForm(out, structure.boundary, allow_degenerate=True, cfg=cfg)


def _guard(structure: PcfStructure, n: int):
    size = structure.level_size(n) if len(structure.boundary) * structure.N ** n <= 50 * VERTEX_GUARD else None
    if size is None or size > VERTEX_GUARD:
        raise GuardError(f"level {n} exceeds the vertex guard of {VERTEX_GUARD}")


@dataclass(frozen=True)
class RenormState:
    n: int
    trace_form: TraceForm
    resistance: ResistanceMatrix
    delta: float
    M_n: float
    lambda_est: float  # M_n^{1/n}; nan at n = 0
    lambda_ratio: float  # M_n / M_{n-1}; nan at n = 0
    degenerate: bool = False

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "M_n": self.M_n,
            "lambda_hat": None if np.isnan(self.lambda_est) else self.lambda_est,
            "lambda_ratio": None if np.isnan(self.lambda_ratio) else self.lambda_ratio,
            "resistances": self.resistance.to_list(),
        }


def iterate(E0: StandardForm, structure: PcfStructure, n_max: int | None = None,
            cfg: SolverConfig | None = None) -> list[RenormState]:
    """States for ``T^n E0``, n = 0..n_max."""
    _check_on_v0(E0, structure)
    E0 = E0.relabeled(structure.boundary)
    if not E0.nondegenerate:
        raise DomainError("initial form must be nondegenerate")
    if n_max is None:
        n_max = max_level(structure)
    _guard(structure, n_max)
    states = []
    R0 = None
    prev_M = np.nan
    for n in range(n_max + 1):
        amb = refine_form_iter(E0, structure, n, n=0)
        tf = TraceForm(amb, structure.boundary, cfg=cfg)
        rm = resistance_matrix(tf, cfg)
        d = delta_from_matrix(rm)
        off = rm.off_diagonal()
        if R0 is None:
            R0 = off
        with np.errstate(divide="ignore", invalid="ignore"):
            M = float(np.max(R0 / off))
        degenerate = d < DEGENERATE_DELTA
        if degenerate:
            warnings.warn(f"T^{n} E0 is nearly degenerate (delta = {d:.3e})", RuntimeWarning, stacklevel=2)
        lam = M ** (1.0 / n) if n > 0 else np.nan
        ratio = M / prev_M if n > 0 else np.nan
        states.append(RenormState(n, tf, rm, d, M, lam, ratio, degenerate))
        prev_M = M
    return states


def kz_average_form(E0: StandardForm, structure: PcfStructure, lam: float, n: int) -> StandardForm:
    """``(1/(n+1)) sum_{m<=n} lam^{-m} Lambda^m E0`` as a standard form on ``V_n``."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if n < 0:
        raise DomainError("n must be nonnegative")
    E0 = E0.relabeled(structure.boundary)
    parts = [
        embed_form(refine_form_iter(E0, structure, m, n=0), structure, n).scaled(lam ** (-m) / (n + 1))
        for m in range(n + 1)
    ]
    return sum_forms(parts)


def kz_average(E0: StandardForm, structure: PcfStructure, lam: float, n: int,
               cfg: SolverConfig | None = None) -> TraceForm:
    """Trace to ``V0`` of the averaged energy."""
    _check_on_v0(E0, structure)
    return TraceForm(kz_average_form(E0, structure, lam, n), structure.boundary, cfg=cfg)


def eigen_probes(n: int, seed: int = 0) -> np.ndarray:
    return probe_set(n, EIGEN_PROBES, seed)


def eigen_ratios(E, structure, probes, cfg=None) -> tuple[np.ndarray, np.ndarray]:
    """``T E(f)`` and ``E(f)`` on the probes."""
    TE = renorm_step(E, structure, cfg)
    return evaluate(TE, probes, cfg), evaluate(E, probes, cfg)


@dataclass(frozen=True)
class EigenReport:
    lam: float
    residual: float
    eigenform: TraceForm
    delta_history: list
    condition_A: bool
    lambda_history: list = field(default_factory=list)
    n_kz: int = 0
    eigenform_level: int = 0
    orbit_steps: int = 0
    converged: bool = False
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "condition_A": self.condition_A,
            "converged": self.converged,
            "n_kz": self.n_kz,
            "orbit_steps": self.orbit_steps,
            "eigenform_level": self.eigenform_level,
            "delta_history": [[n, d] for n, d in self.delta_history],
            "lambda_history": [[n, v] for n, v in self.lambda_history],
            "notes": list(self.notes),
        }


def _pair_orbits(structure: PcfStructure, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pairs of ``V_k`` (upper triangle) and their orbit labels under the r-preserving group."""
    n = structure.level_size(k)
    iu = np.triu_indices(n, 1)
    try:
        elements = r_preserving_subgroup(structure)
        perms = [level_permutation(structure, g, k) for g in elements]
    except StructureError:
        perms = []
    code = iu[0] * n + iu[1]
    pos = {int(c): t for t, c in enumerate(code)}
    uf = UnionFind(range(code.size))
    for pm in perms:
        a, b = pm[iu[0]], pm[iu[1]]
        img = np.minimum(a, b) * n + np.maximum(a, b)
        for t, c in enumerate(img):
            uf.union(t, pos[int(c)])
    labels = np.array([uf.find(t) for t in range(code.size)])
    _, inv = np.unique(labels, return_inverse=True)
    return iu[0], iu[1], inv


def _fit_eigenform(seed_form: StandardForm, structure: PcfStructure, k: int, probes, cfg, max_evals: int):
    """Least-squares fit of orbit-constant pair weights on ``V_k`` to the eigen-equation."""
    rows, cols, inv = _pair_orbits(structure, k)
    M = seed_form.matrix()
    w = M[rows, cols]
    floor = 1e-3 * w[w > 0].mean()
    n_orb = int(inv.max()) + 1
    th0 = np.log(np.maximum(np.bincount(inv, weights=w, minlength=n_orb) / np.bincount(inv, minlength=n_orb), floor))
    vs, p = seed_form.vertices, seed_form.p

    def build(th):
        return StandardForm.from_arrays(vs, p, rows, cols, np.exp(th - th.mean())[inv])

    def resid(th):
        E = TraceForm(build(th), structure.boundary, allow_degenerate=True, cfg=cfg)
        te, e = eigen_ratios(E, structure, probes, cfg)
        q = te / e
        return q / q.mean() - 1.0

    sol = least_squares(resid, th0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_evals)
    return build(sol.x)


def _probe_residual(amb, structure, probes, cfg):
    E = TraceForm(amb, structure.boundary, allow_degenerate=True, cfg=cfg)
    te, e = eigen_ratios(E, structure, probes, cfg)
    q = te / e
    lam = 0.5 * (q.max() + q.min())
    return float(lam), float(np.max(np.abs(te - lam * e) / e)), E


def eigen_solve(E0: StandardForm, structure: PcfStructure, n_max: int | None = None,
                cfg: SolverConfig | None = None, tol: float = 1e-10,
                n_kz: int = 1, fit_evals: int = 100) -> EigenReport:
    """Eigenvalue and eigenform of T.

    The resistance orbit to ``n_max`` gives a first eigenvalue estimate and
    the delta history.  The averaged energy on ``V_{n_kz}`` seeds a
    least-squares fit of symmetric pair weights there (skipped when the seed
    already meets ``tol``), and the result is pushed along ``lam^{-1} T``
    until the probe residual drops below ``tol`` or the horizon is reached.
    The fit matters: the plain orbit contracts slowly in some directions.
    """
    cfg = cfg or SolverConfig()
    if n_max is None:
        n_max = max_level(structure)
    if n_max < 1:
        raise DomainError("eigen_solve needs n_max >= 1")
    if fit_evals < 0:
        raise DomainError("fit_evals must be nonnegative")
    states = iterate(E0, structure, n_max, cfg)
    deltas = [(s.n, s.delta) for s in states]
    lam_hist = [(s.n, s.lambda_ratio) for s in states[1:]]
    lam0 = states[-1].lambda_ratio
    n_kz = min(max(int(n_kz), 0), n_max - 1)
    probes = eigen_probes(len(structure.boundary), cfg.seed)

    notes = []
    amb = kz_average_form(E0, structure, lam0, n_kz)
    level = n_kz
    lam, residual, E = _probe_residual(amb, structure, probes, cfg)
    if residual >= tol and fit_evals > 0:
        fit_probes = probe_set(len(structure.boundary), 32, cfg.seed)
        fitted = _fit_eigenform(amb, structure, n_kz, fit_probes, cfg, fit_evals)
        got = _probe_residual(fitted, structure, probes, cfg)
        if got[1] < residual:
            amb = fitted
            lam, residual, E = got
        else:
            notes.append("fitted seed did not improve the residual; kept the averaged energy")
    best = (lam, residual, E, level)
    steps = 0
    while residual >= tol and level + 2 <= n_max:
        amb = refine_form_iter(amb, structure, 1, n=level).scaled(1.0 / lam)
        level += 1
        steps += 1
        lam, residual, E = _probe_residual(amb, structure, probes, cfg)
        if residual < best[1]:
            best = (lam, residual, E, level)
    lam, residual, E, best_level = best
    converged = residual < tol
    if not converged:
        notes.append(f"residual {residual:.3e} above tolerance {tol:.1e} at horizon n_max={n_max}")
    cond_a = min(d for _, d in deltas) > CONDITION_A_FLOOR
    return EigenReport(float(lam), residual, E, deltas, bool(cond_a), lam_hist, n_kz, best_level,
                       steps, converged, tuple(notes))


@dataclass(frozen=True)
class OscillationReport:
    eta: float
    per_sample: np.ndarray
    cell_osc: np.ndarray  # (samples, N^m) cell oscillations


def harmonic_on_level(structure: PcfStructure, E, m: int, F, cfg: SolverConfig | None = None) -> np.ndarray:
    """Minimizing extension of boundary rows ``F`` for ``Lambda^m E``, restricted to ``V_m``."""
    if m < 0:
        raise DomainError("m must be nonnegative")
    amb, k = _ambient_level(E, structure)
    big = refine_form_iter(amb, structure, m, n=k)
    tf = TraceForm(big, structure.boundary, allow_degenerate=True, cfg=cfg)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    return np.atleast_2d(p_harmonic_extend(tf, F, cfg))[:, : structure.level_size(m)]


def cell_oscillations(structure: PcfStructure, values: np.ndarray, m: int) -> np.ndarray:
    """Oscillation of level-``m`` values on each cell ``F_w(V0)``."""
    lv = build_level(structure, m)
    vals = np.atleast_2d(values)[:, lv.cell_index]
    return vals.max(axis=2) - vals.min(axis=2)


def separation_violation(structure: PcfStructure, m: int):
    """First level-``m`` cell meeting ``V0`` in more than one point, or None."""
    lv = build_level(structure, m)
    hits = (lv.cell_index < len(structure.boundary)).sum(axis=1)
    bad = np.nonzero(hits > 1)[0]
    if not bad.size:
        return None
    return "".join(str(i) for i in cell_word(int(bad[0]), structure.N, m)), int(hits[bad[0]])


def oscillation_decay(structure: PcfStructure, E_eigen, m: int, samples, cfg: SolverConfig | None = None) -> OscillationReport:
    """Largest cell oscillation of harmonic extensions, relative to Osc(f)."""
    if m < 1:
        raise DomainError("m must be at least 1")
    bad = separation_violation(structure, m)
    if bad is not None:
        raise DomainError(f"cell {bad[0]} meets V0 in {bad[1]} points; increase m")
    F = np.atleast_2d(np.asarray(samples, dtype=float))
    osc = oscillation(F)
    U = harmonic_on_level(structure, E_eigen, m, F, cfg)
    cell_osc = cell_oscillations(structure, U, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(osc[:, None] > 0, cell_osc / np.where(osc > 0, osc, 1.0)[:, None], 0.0)
    per = rel.max(axis=1)
    return OscillationReport(float(per.max()) if per.size else 0.0, per, cell_osc)


def cell_word(w: int, N: int, m: int) -> tuple:
    out = []
    for _ in range(m):
        out.append(w % N + 1)
        w //= N
    return tuple(reversed(out))


def random_boundary_functions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Random functions with Osc = 1 (uniform, then affinely normalized)."""
    rng = np.random.default_rng(seed)
    F = rng.random((count, n))
    osc = oscillation(F)
    F = (F - F.min(axis=1, keepdims=True)) / np.where(osc > 0, osc, 1.0)[:, None]
    return F


@dataclass(frozen=True)
class FixedWordCheck:
    label: str
    word: tuple
    r_w: float
    ok: bool


def fixed_word_weight_check(structure: PcfStructure, E_eigen=None, lam: float | None = None) -> tuple[list, list]:
    """Weights of the words fixing annotated boundary points.

    With ``lam`` given the weights are normalized to ``lam * r`` (the
    weights for which ``lam`` becomes 1).  Returns ``(checks, notes)``.
    """
    del E_eigen  # the check only needs the normalized weights
    r = np.asarray(structure.r, dtype=float) * (1.0 if lam is None else float(lam))
    notes = []
    out = []
    fw = structure.fixed_words or {}
    for x in structure.boundary.labels:
        if x not in fw:
            notes.append(f"no fixed word annotated for {x!r}; skipped")
            continue
        word = tuple(int(i) for i in fw[x])
        if not word or any(i < 1 or i > structure.N for i in word):
            raise DomainError(f"fixed word for {x!r} has an invalid letter")
        rw = float(np.prod(r[[i - 1 for i in word]]))
        ok = rw < 1.0
        if not ok:
            warnings.warn(f"r_w = {rw:.6g} >= 1 for the word fixing {x!r}", RuntimeWarning, stacklevel=2)
        out.append(FixedWordCheck(x, word, rw, ok))
    return out, notes
