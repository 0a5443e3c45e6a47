"""Reference computations that share no code with the package solver."""

import itertools

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def laplacian(n, pairs):
    """Dense graph Laplacian for ``sum c (f_x - f_y)^2`` over unordered pairs."""
    L = np.zeros((n, n))
    for x, y, c in pairs:
        L[x, x] += c
        L[y, y] += c
        L[x, y] -= c
        L[y, x] -= c
    return L


def schur_trace(L, keep):
    """Schur complement of ``L`` onto the index list ``keep``."""
    keep = list(keep)
    rest = [i for i in range(L.shape[0]) if i not in keep]
    if not rest:
        return L[np.ix_(keep, keep)]
    A = L[np.ix_(keep, keep)]
    B = L[np.ix_(keep, rest)]
    C = L[np.ix_(rest, rest)]
    return A - B @ np.linalg.solve(C, B.T)


def quad_energy(L, f):
    f = np.asarray(f, dtype=float)
    return float(f @ L @ f)


def schur_resistance(L, i, j):
    """Effective resistance of a connected Laplacian, grounding vertex ``j``."""
    keep = [k for k in range(L.shape[0]) if k != j]
    e = np.zeros(len(keep))
    e[keep.index(i)] = 1.0
    return float(e @ np.linalg.solve(L[np.ix_(keep, keep)], e))


def sg_level_pairs(n):
    """Edges of the level-n gasket graph, built from scratch with coordinates."""
    q = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.5, np.sqrt(3) / 2])]
    tris = [tuple(q)]
    for _ in range(n):
        new = []
        for a, b, c in tris:
            ab, ac, bc = (a + b) / 2, (a + c) / 2, (b + c) / 2
            new += [(a, ab, ac), (ab, b, bc), (ac, bc, c)]
        tris = new
    index = {}

    def key(v):
        k = (round(v[0] * 2**12), round(v[1] * 2**12 / np.sqrt(3)))
        if k not in index:
            index[k] = len(index)
        return index[k]

    for v in q:
        key(v)
    pairs = []
    for a, b, c in tris:
        ia, ib, ic = key(a), key(b), key(c)
        pairs += [(ia, ib, 1.0), (ia, ic, 1.0), (ib, ic, 1.0)]
    return len(index), pairs


def p_energy(pairs, p, u):
    return sum(c * abs(u[x] - u[y]) ** p for x, y, c in pairs)


def p_trace(n, pairs, p, boundary, f, x0=None):
    """Minimize a standard p-energy over the non-boundary values with BFGS."""
    boundary = list(boundary)
    free = [i for i in range(n) if i not in boundary]
    f = np.asarray(f, dtype=float)
    if not free:
        u = np.zeros(n)
        u[boundary] = f
        return p_energy(pairs, p, u), u
    a = np.array([x for x, _, _ in pairs])
    b = np.array([y for _, y, _ in pairs])
    c = np.array([w for _, _, w in pairs])

    def full(z):
        u = np.zeros(n)
        u[boundary] = f
        u[free] = z
        return u

    def fun(z):
        u = full(z)
        d = u[a] - u[b]
        e = float(np.sum(c * np.abs(d) ** p))
        g_edge = p * c * np.abs(d) ** (p - 1) * np.sign(d)
        g = np.zeros(n)
        np.add.at(g, a, g_edge)
        np.add.at(g, b, -g_edge)
        return e, g[free]

    if x0 is None:
        x0 = np.full(len(free), f.mean())
    best = None
    for start in (x0, np.full(len(free), np.median(f))):
        res = minimize(fun, start, jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": 20000})
        if best is None or res.fun < best.fun:
            best = res
    return float(best.fun), full(best.x)


def path_trace_1d(p, w_left, w_right, a, b):
    """``min_t w_left |a - t|^p + w_right |t - b|^p`` by bounded scalar search."""
    lo, hi = min(a, b), max(a, b)
    if lo == hi:
        return 0.0, lo
    res = minimize_scalar(lambda t: w_left * abs(a - t) ** p + w_right * abs(t - b) ** p,
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * (hi - lo)})
    return float(res.fun), float(res.x)


def grid_ratio(e1, e2, n, steps=41):
    """Sup and inf of ``e1/e2`` over a dense grid of ``f = (0, z)``, ``z`` in ``[-1, 1]^{n-1}``."""
    axis = np.linspace(-1.0, 1.0, steps)
    best_hi, best_lo = -np.inf, np.inf
    for z in itertools.product(axis, repeat=n - 1):
        f = np.concatenate([[0.0], z])
        if np.ptp(f) == 0:
            continue
        d = e2(f)
        if d <= 1e-14:
            continue
        q = e1(f) / d
        best_hi, best_lo = max(best_hi, q), min(best_lo, q)
    return best_hi, best_lo


def set_partitions(items):
    """All partitions of a list, by recursion on the first element."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def brute_delta_relations(R, delta):
    """Every non-trivial partition with ``max within / min across < delta``."""
    n = R.shape[0]
    out = []
    for part in set_partitions(range(n)):
        if len(part) in (1, n):
            continue
        lab = np.empty(n, dtype=int)
        for k, block in enumerate(part):
            lab[block] = k
        same = lab[:, None] == lab[None, :]
        off = ~np.eye(n, dtype=bool)
        within = R[same & off].max()
        across = R[~same].min()
        if within / across < delta:
            out.append(sorted(sorted(b) for b in part))
    return out
