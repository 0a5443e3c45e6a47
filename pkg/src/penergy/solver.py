"""Convex minimization: p-harmonic extension, p-resistance, energy ratios.

The default minimizer is a damped Newton method run simultaneously on a
batch of boundary data (one block of a block-diagonal sparse Hessian per
row).  It is started from the p = 2 harmonic extension, which is already
exact when p = 2.  A slower cyclic coordinate-descent method is kept for
cross-checking.

Stopping rule, applied per row:

* relative stationarity residual ``max_interior |grad| / flux_scale`` below
  ``grad_inf_tol``, where ``flux_scale`` is the largest total absolute flux
  ``sum_e p c_e |df_e|^{p-1}`` through any vertex, and
* relative energy decrease of the last accepted step below ``rel_energy_tol``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import DegenerateFormError, DomainError, SolverError
from .forms import (
    StandardForm,
    TraceForm,
    VertexSet,
    as_values,
    indicator_probes,
    oscillation,
)

# Energies below this are treated as zero; the matching resistances as +inf.
ZERO_ENERGY = 1e-15
RESISTANCE_CUTOFF = 1e15
# Half-width, relative to Osc, of the value window used by the residual.
TIE_WINDOW = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 500
    rel_energy_tol: float = 1e-12
    grad_inf_tol: float = 1e-10
    ratio_starts: int = 64
    seed: int = 0
    method: str = "newton"
    threads: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if not (self.rel_energy_tol > 0 and self.grad_inf_tol > 0):
            raise DomainError("solver tolerances must be positive")
        if self.ratio_starts < 0:
            raise DomainError("ratio_starts must be nonnegative")
        if self.method not in ("newton", "cd"):
            raise DomainError(f"unknown solver method {self.method!r}")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


DEFAULT_CONFIG = SolverConfig()


def _cfg(cfg):
    return DEFAULT_CONFIG if cfg is None else cfg


class _Graph:
    """Incidence data for a standard form."""

    def __init__(self, form: StandardForm):
        self.form = form
        self.n = len(form.vertices)
        self.p = form.p
        self.a = form.rows
        self.b = form.cols
        self.c = form.coeffs
        m = self.c.size
        self.m = m
        e = np.arange(m)
        self.D = sparse.csr_matrix(
            (np.r_[np.ones(m), -np.ones(m)], (np.r_[e, e], np.r_[self.a, self.b])),
            shape=(m, self.n),
        )
        self.absD = abs(self.D)
        self.Da = sparse.csr_matrix((np.ones(m), (e, self.a)), shape=(m, self.n))
        self.Db = sparse.csr_matrix((np.ones(m), (e, self.b)), shape=(m, self.n))
        adj = sparse.coo_matrix((np.ones(m), (self.a, self.b)), shape=(self.n, self.n))
        self.ncomp, self.comp = connected_components(adj, directed=False)

    def diffs(self, U):
        return (self.D @ U.T).T

    def energy(self, U):
        return np.abs(self.diffs(U)) ** self.p @ self.c

    def grad_parts(self, U):
        d = self.diffs(U)
        flux = self.p * self.c * np.abs(d) ** (self.p - 1)
        G = (flux * np.sign(d)) @ self.D
        return d, G, flux

    def stationarity(self, U, free):
        """Relative residual of each row, tolerant to rounding at ties.

        For an interior vertex x let phi_x be the energy as a function of
        u(x) alone.  The residual is the distance from 0 to
        ``[phi_x'(u_x - h), phi_x'(u_x + h)]`` with ``h = TIE_WINDOW * Osc``,
        divided by the largest total flux through a vertex.  For p >= 2 this
        is the plain gradient norm up to O(h); for p < 2 it keeps edges
        whose two ends agree to rounding from dominating.
        """
        d, G, flux = self.grad_parts(U)
        scale = (flux @ self.absD).max(axis=1)
        h = TIE_WINDOW * oscillation(U)[:, None]
        pc = self.p * self.c
        q = self.p - 1

        def psi(z):
            return np.abs(z) ** q * np.sign(z)

        plus = (pc * psi(d + h)) @ self.Da + (pc * psi(h - d)) @ self.Db
        minus = (pc * psi(d - h)) @ self.Da + (pc * psi(-d - h)) @ self.Db
        gap = np.maximum(np.maximum(minus, -plus), 0.0)
        gap = np.where(free, gap, 0.0).max(axis=1)
        res = np.where(scale > 0, gap / np.where(scale > 0, scale, 1.0), 0.0)
        return res, d, G


def _laplacian(g: _Graph, w):
    n = g.n
    L = sparse.coo_matrix(
        (np.r_[-w, -w], (np.r_[g.a, g.b], np.r_[g.b, g.a])), shape=(n, n)
    ).tocsr()
    L = L + sparse.diags(np.asarray(-L.sum(axis=1)).ravel())
    return L.tocsc()


def _block_hessian(g: _Graph, W, idx, nfree):
    """Block-diagonal interior Hessian from per-row edge weights ``W``."""
    ia = idx[:, g.a]
    ib = idx[:, g.b]
    fa = ia >= 0
    fb = ib >= 0
    both = fa & fb
    rows = np.concatenate([ia[fa], ib[fb], ia[both], ib[both]])
    cols = np.concatenate([ia[fa], ib[fb], ib[both], ia[both]])
    vals = np.concatenate([W[fa], W[fb], -W[both], -W[both]])
    return sparse.csc_matrix((vals, (rows, cols)), shape=(nfree, nfree))


def _solve_rows(g: _Graph, fixed: np.ndarray, values: np.ndarray, cfg: SolverConfig,
                allow_degenerate: bool) -> np.ndarray:
    """Minimize each row's energy subject to ``U[r, fixed[r]] = values[r, fixed[r]]``."""
    k, n = fixed.shape
    U = np.where(fixed, values, 0.0)

    # Components of the ambient graph with no fixed vertex are undetermined.
    comp_fixed = np.zeros((k, g.ncomp), dtype=bool)
    rr, vv = np.nonzero(fixed)
    comp_fixed[rr, g.comp[vv]] = True
    floating = ~comp_fixed[:, g.comp]
    if np.any(floating & ~fixed):
        if not allow_degenerate:
            raise DegenerateFormError(
                "ambient form has an interior component that does not touch the boundary"
            )
    free = ~fixed & ~floating
    if not free.any():
        return U

    # A constant boundary row is its own minimizer; rounding noise would
    # otherwise dominate the relative residual.
    lo = np.where(fixed, values, np.inf).min(axis=1)
    hi = np.where(fixed, values, -np.inf).max(axis=1)
    const = lo == hi
    if const.any():
        U[const] = np.where(free[const], lo[const, None], U[const])
        rest = ~const
        if rest.any():
            U[rest] = _solve_free(g, U[rest], free[rest], cfg)
        return U
    return _solve_free(g, U, free, cfg)


def _solve_free(g: _Graph, U, free, cfg: SolverConfig) -> np.ndarray:
    k, n = U.shape

    idx = np.full((k, n), -1, dtype=np.int64)
    nfree = int(free.sum())
    idx[free] = np.arange(nfree)

    # Harmonic (p = 2) start.  Shared masks reuse one factorization.
    if np.all(free == free[0]):
        L = _laplacian(g, g.c)
        fi = np.nonzero(free[0])[0]
        bi = np.nonzero(~free[0])[0]
        rhs = -(L[fi][:, bi] @ U[:, bi].T)
        sol = splu(L[fi][:, fi].tocsc()).solve(np.asarray(rhs))
        U[:, fi] = sol.T
    else:
        W = np.broadcast_to(g.c, (k, g.m))
        H = _block_hessian(g, 2.0 * W, idx, nfree)
        G = (2.0 * g.c * g.diffs(U)) @ g.D
        step = splu(H).solve(-G[free])
        U[free] += step

    if cfg.method == "cd":
        return _coordinate_descent(g, U, free, cfg)
    if g.p == 2.0:
        _check_residual(g, U, free, cfg)
        return U
    return _newton(g, U, free, idx, nfree, cfg)


def _check_residual(g: _Graph, U, free, cfg):
    res, _, _ = g.stationarity(U, free)
    worst = float(res.max()) if res.size else 0.0
    if worst > cfg.grad_inf_tol:
        raise SolverError("stationarity residual above tolerance", worst)


def _smoothed(g: _Graph, U, eps):
    """Energy, gradient and Hessian weights of sum c (d^2 + eps^2)^{p/2}.

    ``eps`` is per row; rows with ``eps == 0`` get the exact energy, with a
    floored curvature so that every Hessian block stays positive definite.
    """
    p = g.p
    d = g.diffs(U)
    e2 = (eps * eps)[:, None]
    s = d * d + e2
    energy = (s ** (p / 2)) @ g.c
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = np.where(s > 0, p * g.c * d * s ** (p / 2 - 1), 0.0)
    G = flux @ g.D
    scale = np.abs(flux).max(axis=1) if flux.shape[1] else np.zeros(len(U))
    exact = eps == 0
    W = np.empty_like(d)
    if (~exact).any():
        sm = s[~exact]
        W[~exact] = p * g.c * sm ** (p / 2 - 2) * ((p - 1) * d[~exact] ** 2 + e2[~exact])
    if exact.any():
        osc = oscillation(U[exact])
        floor = TIE_WINDOW * np.where(osc > 0, osc, 1.0)[:, None]
        W[exact] = p * (p - 1) * g.c * np.maximum(np.abs(d[exact]), floor) ** (p - 2)
    W = np.maximum(W, 1e-12 * W.max(axis=1, keepdims=True))
    return energy, G, W, scale


def _newton(g: _Graph, U, free, idx, nfree, cfg: SolverConfig):
    """Damped Newton; for p < 2 with continuation in a smoothing parameter.

    Near-ties make the exact Hessian blow up when p < 2, and plain Newton
    then zig-zags across them.  The energy is replaced by
    ``sum c (d^2 + eps^2)^{p/2}`` and ``eps`` is divided by 10 each time the
    smoothed problem is solved, down to exact Newton at ``eps = 0``.
    """
    p = g.p
    k = U.shape[0]
    osc = oscillation(U)
    osc = np.where(osc > 0, osc, 1.0)
    eps = osc.copy() if p < 2 else np.zeros(k)
    E = g.energy(U)
    last_dec = np.full(k, np.inf)
    done = np.zeros(k, dtype=bool)
    for _ in range(cfg.max_iters):
        res, _, _ = g.stationarity(U, free)
        done = (res < cfg.grad_inf_tol) & ((last_dec < cfg.rel_energy_tol) | (E <= 0))
        if done.all():
            return U
        Es, G, W, scale = _smoothed(g, U, eps)
        gmax = np.where(free, np.abs(G), 0.0).max(axis=1)
        stage_ok = gmax <= 1e-10 * np.where(scale > 0, scale, 1.0)
        H = _block_hessian(g, W, idx, nfree)
        step = np.zeros_like(U)
        step[free] = splu(H).solve(-G[free])
        step[done] = 0.0
        gd = np.einsum("ij,ij->i", np.where(free, G, 0.0), step)
        t = np.ones(k)
        accepted = done | (gd >= 0)
        # Below this predicted decrease rounding hides the energy change, so
        # these rows backtrack on the gradient norm instead.
        tiny = ~accepted & (np.abs(gd) <= 1e-12 * np.maximum(Es, ZERO_ENERGY))
        if tiny.any():
            rows = np.nonzero(tiny)[0]
            g0 = np.linalg.norm(np.where(free[rows], G[rows], 0.0), axis=1)
            tt = np.ones(rows.size)
            pend = np.ones(rows.size, dtype=bool)
            for _ in range(30):
                if not pend.any():
                    break
                sub = rows[pend]
                trial = U[sub] + tt[pend, None] * step[sub]
                Gt = _smoothed(g, trial, eps[sub])[1]
                gt = np.linalg.norm(np.where(free[sub], Gt, 0.0), axis=1)
                ok = gt < g0[pend]
                U[sub[ok]] = trial[ok]
                idx_p = np.nonzero(pend)[0]
                pend[idx_p[ok]] = False
                tt[idx_p[~ok]] *= 0.5
            accepted[rows[~pend]] = True
            tiny[rows[pend]] = False
        for _ in range(60):
            rows = np.nonzero(~accepted)[0]
            if rows.size == 0:
                break
            trial = U[rows] + t[rows, None] * step[rows]
            Et = _smoothed_energy(g, trial, eps[rows])
            ok = Et <= Es[rows] + 1e-4 * t[rows] * gd[rows]
            U[rows[ok]] = trial[ok]
            accepted[rows[ok]] = True
            t[rows[~ok]] *= 0.5
        moved = accepted & ~done & (gd < 0)
        stalled = ~moved & ~done
        E_new = g.energy(U)
        with np.errstate(divide="ignore", invalid="ignore"):
            dec = np.where(E_new > 0, np.abs(E - E_new) / np.where(E_new > 0, E_new, 1.0), 0.0)
        last_dec = np.where(done, last_dec, np.where(stalled, 0.0, dec))
        E = E_new
        # Smoothed stage solved (tiny Newton decrement or no progress): tighten.
        decrement = np.abs(gd) <= 1e-15 * np.maximum(Es, ZERO_ENERGY)
        tighten = (eps > 0) & (stalled | decrement | stage_ok)
        eps = np.where(tighten, eps / 10.0, eps)
        eps = np.where(eps < 1e-13 * osc, 0.0, eps)
        if np.all(done | (stalled & (eps == 0))):
            break
    _check_residual(g, U, free, cfg)
    return U


def _smoothed_energy(g: _Graph, U, eps):
    d = g.diffs(U)
    return ((d * d + (eps * eps)[:, None]) ** (g.p / 2)) @ g.c


def _coordinate_descent(g: _Graph, U, free, cfg: SolverConfig):
    """Cyclic per-vertex exact minimization (Brent on the 1-D derivative)."""
    p = g.p
    n = g.n
    nbrs = [[] for _ in range(n)]
    for a, b, c in zip(g.a, g.b, g.c):
        nbrs[a].append((b, c))
        nbrs[b].append((a, c))
    nb_idx = [np.array([y for y, _ in lst], dtype=np.int64) for lst in nbrs]
    nb_c = [np.array([c for _, c in lst]) for lst in nbrs]
    for r in range(U.shape[0]):
        u = U[r].copy()
        order = np.nonzero(free[r])[0]
        E_prev = g.energy(u[None])[0]
        for _ in range(cfg.max_iters):
            for x in order:
                vals = u[nb_idx[x]]
                cs = nb_c[x]
                lo, hi = vals.min(), vals.max()
                if hi - lo <= 0:
                    u[x] = lo
                    continue

                def dphi(t):
                    dd = t - vals
                    return float(np.sum(cs * np.abs(dd) ** (p - 1) * np.sign(dd)))

                u[x] = brentq(dphi, lo, hi, xtol=1e-14 * (hi - lo), rtol=1e-15)
            E_new = g.energy(u[None])[0]
            dec = (E_prev - E_new) / E_new if E_new > 0 else 0.0
            E_prev = E_new
            res, _, _ = g.stationarity(u[None], free[r][None])
            if res[0] < cfg.grad_inf_tol and abs(dec) < cfg.rel_energy_tol:
                break
        else:
            res, _, _ = g.stationarity(u[None], free[r][None])
            if res[0] > cfg.grad_inf_tol:
                raise SolverError("coordinate descent did not converge", float(res[0]))
        U[r] = u
    return U


def _ambient_and_boundary(form):
    if isinstance(form, TraceForm):
        return form.ambient, form.boundary_index, form.allow_degenerate
    if isinstance(form, StandardForm):
        return form, np.arange(len(form.vertices)), False
    raise DomainError(f"unsupported form type {type(form).__name__}")


def p_harmonic_extend(form, f, cfg: SolverConfig | None = None) -> np.ndarray:
    """Minimizing extension of boundary data ``f`` to the ambient vertex set.

    ``f`` may be a mapping, a vector in boundary order, or a ``(k, |B|)``
    array of rows; the result has matching shape over the ambient vertices.
    """
    cfg = _cfg(cfg)
    if not isinstance(form, TraceForm):
        raise DomainError("p_harmonic_extend needs a TraceForm")
    vals = as_values(form.boundary, f)
    single = vals.ndim == 1
    vals = np.atleast_2d(vals)
    amb = form.ambient
    g = _graph(amb)
    k = vals.shape[0]
    fixed = np.zeros((k, g.n), dtype=bool)
    bidx = form.boundary_index
    fixed[:, bidx] = True
    full = np.zeros((k, g.n))
    full[:, bidx] = vals
    U = _solve_rows(g, fixed, full, cfg, form.allow_degenerate)
    return U[0] if single else U


_GRAPH_CACHE: dict[int, tuple[StandardForm, _Graph]] = {}


def _graph(form: StandardForm) -> _Graph:
    key = id(form)
    hit = _GRAPH_CACHE.get(key)
    if hit is not None and hit[0] is form:
        return hit[1]
    if len(_GRAPH_CACHE) > 64:
        _GRAPH_CACHE.clear()
    g = _Graph(form)
    _GRAPH_CACHE[key] = (form, g)
    return g


def evaluate(form, F, cfg: SolverConfig | None = None) -> np.ndarray:
    """Energy of each row of ``F`` (standard or trace form)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if isinstance(form, StandardForm):
        return np.atleast_1d(form.energy(F))
    U = p_harmonic_extend(form, F, cfg)
    return np.atleast_1d(form.ambient.energy(U))


def _pair_energies(form, pairs, cfg) -> np.ndarray:
    amb, bidx, _ = _ambient_and_boundary(form)
    g = _graph(amb)
    k = len(pairs)
    fixed = np.zeros((k, g.n), dtype=bool)
    vals = np.zeros((k, g.n))
    for r, (i, j) in enumerate(pairs):
        fixed[r, bidx[i]] = fixed[r, bidx[j]] = True
        vals[r, bidx[j]] = 1.0
    # The free components away from both endpoints carry no energy.
    U = _solve_rows(g, fixed, vals, cfg, allow_degenerate=True)
    return g.energy(U)


def resistance(form, x, y, cfg: SolverConfig | None = None) -> float:
    """p-resistance between boundary vertices ``x`` and ``y`` (+inf if disconnected)."""
    cfg = _cfg(cfg)
    vs = form.vertices
    i, j = vs.index(x), vs.index(y)
    if i == j:
        return 0.0
    e = float(_pair_energies(form, [(i, j)], cfg)[0])
    return np.inf if e < 1.0 / RESISTANCE_CUTOFF else 1.0 / e


@dataclass(frozen=True)
class ResistanceMatrix:
    vertices: VertexSet
    R: np.ndarray
    degenerate: bool = False
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.R.setflags(write=False)

    def get(self, x, y) -> float:
        return float(self.R[self.vertices.index(x), self.vertices.index(y)])

    def pairs(self):
        n = len(self.vertices)
        for i, j in itertools.combinations(range(n), 2):
            yield self.vertices.labels[i], self.vertices.labels[j], float(self.R[i, j])

    def off_diagonal(self) -> np.ndarray:
        iu = np.triu_indices(len(self.vertices), k=1)
        return self.R[iu]

    def to_list(self):
        return [[x, y, (None if not np.isfinite(v) else v)] for x, y, v in self.pairs()]


def resistance_matrix(form, cfg: SolverConfig | None = None) -> ResistanceMatrix:
    cfg = _cfg(cfg)
    vs = form.vertices
    n = len(vs)
    pairs = list(itertools.combinations(range(n), 2))
    R = np.zeros((n, n))
    notes = []
    if pairs:
        e = _pair_energies(form, pairs, cfg)
        for (i, j), ei in zip(pairs, e):
            if ei < 1.0 / RESISTANCE_CUTOFF:
                val = np.inf
                notes.append(f"R({vs.labels[i]},{vs.labels[j]}) beyond cutoff {RESISTANCE_CUTOFF:g}")
            else:
                val = 1.0 / ei
            R[i, j] = R[j, i] = val
    return ResistanceMatrix(vs, R, degenerate=bool(np.isinf(R).any()), notes=tuple(notes))


def delta_from_matrix(rm: ResistanceMatrix) -> float:
    off = rm.off_diagonal()
    if off.size == 0 or np.isinf(off).any():
        return 0.0
    return float(off.min() / off.max())


def delta(form, cfg: SolverConfig | None = None) -> float:
    """min/max ratio of off-diagonal resistances; 0 when any is infinite."""
    return delta_from_matrix(resistance_matrix(form, cfg))


@dataclass(frozen=True)
class RatioBounds:
    sup_ratio: float
    inf_ratio: float
    argmax_f: np.ndarray
    argmin_f: np.ndarray
    heuristic: bool


def _normalize(F):
    F = F - F.mean(axis=1, keepdims=True)
    osc = oscillation(F)
    return F / np.where(osc > 0, osc, 1.0)[:, None]


def ratio_bounds(E1, E2, cfg: SolverConfig | None = None, restrict_positive: bool = False,
                 eps: float = 1e-13) -> RatioBounds:
    """Multi-start pattern search for sup and inf of ``E1(f)/E2(f)``.

    Functions are parametrized as ``f = (0, z)``; the ratio is invariant
    under constants and scaling, so every iterate is reported on
    ``{Osc = 1, sum f = 0}``.  With ``restrict_positive`` points where
    ``E2(f) <= eps`` are skipped instead of treated as an error.
    """
    from scipy.stats import qmc

    cfg = _cfg(cfg)
    vs = E2.vertices
    if not vs.same_members(E1.vertices):
        raise DomainError("ratio_bounds needs forms on the same vertex set")
    n = len(vs)
    if E1.vertices != vs:
        perm = E1.vertices.indices(vs.labels)
        inv = np.argsort(perm)
    else:
        inv = None

    def ratios(F):
        F1 = F if inv is None else F[:, inv]
        e2 = evaluate(E2, F, cfg)
        e1 = evaluate(E1, F1, cfg)
        scale = np.maximum(oscillation(F), 1e-300) ** E2.p
        bad = e2 <= eps * scale
        if bad.any() and not restrict_positive:
            raise DegenerateFormError("denominator form vanishes on a nonconstant function")
        with np.errstate(divide="ignore", invalid="ignore"):
            q = e1 / e2
        return q, bad

    if n < 2:
        raise DomainError("ratio_bounds needs at least two vertices")
    if n == 2:
        f = np.array([[0.0, 1.0]])
        q, bad = ratios(f)
        if bad[0]:
            raise DegenerateFormError("denominator form vanishes")
        w = _normalize(f)[0]
        return RatioBounds(float(q[0]), float(q[0]), w, w.copy(), heuristic=False)

    starts = indicator_probes(n)
    if cfg.ratio_starts > 0:
        pts = qmc.Halton(d=n - 1, scramble=True, seed=cfg.seed).random(cfg.ratio_starts)
        starts = np.vstack([starts, np.hstack([np.zeros((cfg.ratio_starts, 1)), pts])])
    starts = starts[oscillation(starts) > 0]
    Z0 = (starts - starts[:, :1])[:, 1:]
    Z0 = Z0 / oscillation(np.hstack([np.zeros((len(Z0), 1)), Z0]))[:, None]

    def search(sign):
        Z = Z0.copy()
        F = np.hstack([np.zeros((len(Z), 1)), Z])
        q, bad = ratios(F)
        val = np.where(bad, -np.inf, sign * q)
        step = np.full(len(Z), 0.25)
        dirs = np.vstack([np.eye(n - 1), -np.eye(n - 1)])
        for _ in range(200):
            active = step > 1e-7
            if not active.any():
                break
            ia = np.nonzero(active)[0]
            cand = Z[ia, None, :] + step[ia, None, None] * dirs[None, :, :]
            cand = cand.reshape(-1, n - 1)
            Fc = np.hstack([np.zeros((len(cand), 1)), cand])
            osc = oscillation(Fc)
            Fc = Fc / np.where(osc > 0, osc, 1.0)[:, None]
            qc, badc = ratios(Fc)
            vc = np.where(badc | (osc <= 0), -np.inf, sign * qc).reshape(len(ia), -1)
            best = vc.argmax(axis=1)
            bv = vc[np.arange(len(ia)), best]
            improve = bv > val[ia] + 1e-15 * np.abs(val[ia])
            up = ia[improve]
            Z[up] = Fc.reshape(len(ia), -1, n)[improve, best[improve], 1:]
            val[up] = bv[improve]
            step[ia[~improve]] *= 0.5
        if not np.isfinite(val).any():
            raise DegenerateFormError("denominator vanishes on every start")
        i = int(np.argmax(val))  # first index among ties
        F = np.hstack([[[0.0]], Z[i : i + 1]])
        return _normalize(F)[0]

    fmax = search(1.0)
    fmin = search(-1.0)
    qmax = ratios(fmax[None])[0][0]
    qmin = ratios(fmin[None])[0][0]
    return RatioBounds(float(qmax), float(qmin), fmax, fmin, heuristic=True)
