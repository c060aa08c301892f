"""Heat kernel of exp(t Delta_s): closed form, eigen-expansion and estimate audits.

Leaves under different root vertices never interact, so the kernel splits
into one block per root vertex v and its t -> infinity limit on that block
is 1 / kappa_v (which is 1 for a single-vertex graph).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ParamOutOfRange, TruncationError
from .measures import annotate_measure, annotate_weight, level_scale
from .spectral import (
    annotate_lambda,
    ball_level_ds,
    delta_s_matrix,
    eigenbasis,
    ext1_kappa_sums,
)

TAIL_TOL = 1e-9
TAIL_MAX_EXTRA_LEVELS = 400


@dataclass
class HeatKernelEval:
    t: float
    x: int
    y: int
    value: float
    truncation_level: int
    tail_bound: float

    def to_row(self):
        return (self.t, self.x, self.y, self.value, self.tail_bound)


@dataclass
class EstimateAudit:
    inequality: str
    grid: str
    worst_margin: float
    c1: float
    c2: float
    pass_: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "inequality": self.inequality,
            "grid": self.grid,
            "worst_margin": self.worst_margin,
            "c1": self.c1,
            "c2": self.c2,
            "pass": self.pass_,
        }
        out.update(self.extra)
        return out


def _chain(tree, node):
    n = int(tree.level[node])
    return tree.ancestors(n)[int(node) - tree.offsets[n]]


def _exp_diff(lam_prev, lam, t):
    """exp(lam_prev t) - exp(lam t) without cancellation."""
    return -np.exp(lam_prev * t) * np.expm1((lam - lam_prev) * t)


def offdiag_from_chain(mu_chain, lam_chain, t):
    """sum_{n=0}^{N} (1/mu_n)(exp(lam_{n-1} t) - exp(lam_n t)) with lam_{-1} = 0."""
    t = np.asarray(t, dtype=float)
    prev = np.concatenate(([0.0], lam_chain[:-1]))
    terms = _exp_diff(prev[:, None], lam_chain[:, None], t[None, :]) / mu_chain[:, None]
    return terms.sum(axis=0)


def ondiag_from_chain(mu_chain, lam_chain, t):
    """1/mu_0 + sum_{n<m} (1/mu_{n+1} - 1/mu_n) exp(lam_n t) for a chain of length m+1."""
    t = np.asarray(t, dtype=float)
    gaps = 1.0 / mu_chain[1:] - 1.0 / mu_chain[:-1]
    return 1.0 / mu_chain[0] + (gaps[:, None] * np.exp(lam_chain[:-1, None] * t[None, :])).sum(axis=0)


def _vertex_level_tables(tree, params, n):
    """mu scale, G per vertex and kappa on level n (closed forms, no tree needed)."""
    kappa = tree.perron.kappa
    sc = level_scale(tree.perron, tree.k, n)
    sc1 = level_scale(tree.perron, tree.k, n + 1)
    pair = ext1_kappa_sums(tree)[n % tree.k]
    w = sc ** (1.0 / params.delta) * kappa
    G = 0.5 * w ** (2.0 - params.s) * sc1 ** 2 * pair
    return sc * kappa, G


def tail_bound(tree, params, node, t, max_extra=TAIL_MAX_EXTRA_LEVELS):
    """Upper bound on sum_{n >= |x|} (1/mu_{n+1} - 1/mu_n) exp(lambda_n t).

    The sup over all continuations of the node is taken level by level:
    lambda along a continuation changes by mu_{n+1}(1/G_n - 1/G_{n+1}),
    which depends only on consecutive vertices, so the largest lambda
    reachable at each vertex follows from a max-plus recursion. Each term is
    bounded by exp(lambda_max_n t) / mu_min_{n+1}.
    """
    lam = annotate_lambda(tree, params)
    n0 = int(tree.level[node])
    kappa_min = float(tree.perron.kappa.min())
    best = np.full(tree.N, -np.inf)
    best[int(tree.source[node])] = float(lam[node])
    _, G_cur = _vertex_level_tables(tree, params, n0)
    total = 0.0
    for n in range(n0, n0 + max_extra):
        lmax = float(best.max())
        log_mu_min = math.log(kappa_min * level_scale(tree.perron, tree.k, n + 1))
        log_term = lmax * t - log_mu_min
        term = math.exp(log_term) if log_term < 700 else math.inf
        total += term
        if n > n0 + 2 and term <= 1e-18 * max(total, 1e-300):
            return total
        if not math.isfinite(total):
            return math.inf
        mu_next, G_next = _vertex_level_tables(tree, params, n + 1)
        adj = tree.vk.matrices[n % tree.k] > 0
        cand = np.where(adj, best[:, None] + mu_next[None, :] * (1.0 / G_cur[:, None] - 1.0 / G_next[None, :]), -np.inf)
        best = cand.max(axis=0)
        G_cur = G_next
    return math.inf


def node_offdiag_values(tree, params, t, top_level=None):
    """p(t, x, y) for x ^ y = gamma, for every node gamma up to top_level.

    Computed by the recurrence off(child) = off(parent) + (e^{lam_p t} - e^{lam_c t}) / mu_c.
    Returns an (n_nodes_up_to_level, len(t)) array.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    top = tree.depth if top_level is None else top_level
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    size = int(tree.offsets[top + 1])
    out = np.empty((size, t.size))
    roots = tree.level_ids(0)
    out[roots] = _exp_diff(0.0, lam[roots, None], t[None, :]) / mu[roots, None]
    for n in range(1, top + 1):
        ids = tree.level_ids(n)
        par = tree.parent[ids]
        out[ids] = out[par] + _exp_diff(lam[par, None], lam[ids, None], t[None, :]) / mu[ids, None]
    return out


def _check_params(params):
    params.require_divergent()


def heat_closed(tree, params, t, x, y, tail_tol=TAIL_TOL):
    """Closed-form kernel between two cylinders of the same level.

    Off-diagonal values are exact finite sums. The on-diagonal value is the
    sum truncated at the cylinder's level; tail_bound bounds the omitted
    (positive, for s < 2) terms, and evaluation is refused when it exceeds
    tail_tol.
    """
    _check_params(params)
    if not t > 0:
        raise ParamOutOfRange("t must be positive")
    x, y = int(x), int(y)
    if tree.level[x] != tree.level[y]:
        raise ValueError("x and y must lie on the same level")
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    level = int(tree.level[x])
    if x != y:
        if tree.root[x] != tree.root[y]:
            return HeatKernelEval(t, x, y, 0.0, level, 0.0)
        from .bratteli import common_prefix
        meet = common_prefix(tree, x, y)
        chain = _chain(tree, meet)
        val = float(offdiag_from_chain(mu[chain], lam[chain], [t])[0])
        return HeatKernelEval(t, x, y, val, level, 0.0)
    chain = _chain(tree, x)
    val = float(ondiag_from_chain(mu[chain], lam[chain], [t])[0])
    tb = tail_bound(tree, params, x, t)
    if tail_tol is not None and tb > tail_tol:
        raise TruncationError(f"on-diagonal tail bound {tb:.3g} exceeds {tail_tol:g} at t={t!r}")
    return HeatKernelEval(t, x, x, val, level, tb)


def heat_matrix(tree, params, t, m):
    """Closed-form kernel on all level-m cylinder pairs (diagonal truncated at m)."""
    _check_params(params)
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    off = node_offdiag_values(tree, params, [t], top_level=m)[:, 0]
    from .bratteli import meet_matrix
    meet = meet_matrix(tree, m)
    P = np.where(meet >= 0, off[np.maximum(meet, 0)], 0.0)
    ids = tree.level_ids(m)
    np.fill_diagonal(P, off[ids] + np.exp(lam[ids] * t) / mu[ids])
    return P


def heat_eigen_matrix(tree, params, t, m):
    """sum over the eigenbasis up to level m of exp(lambda t) psi(x) psi(y)."""
    basis = eigenbasis(tree, params, m)
    Psi, lams = basis.matrix(tree)
    return (Psi.T * np.exp(lams * t)) @ Psi


def heat_eigen(tree, params, t, x, y, m):
    """Eigen-expansion truncated to |gamma| < m, evaluated at the level-m ancestors of x, y."""
    if not t > 0:
        raise ParamOutOfRange("t must be positive")
    ax = tree.ancestor_at(x, m) - tree.offsets[m]
    ay = tree.ancestor_at(y, m) - tree.offsets[m]
    basis = eigenbasis(tree, params, m)
    Psi, lams = basis.matrix(tree)
    return float(np.sum(np.exp(lams * t) * Psi[:, ax] * Psi[:, ay]))


def heat_expm_matrix(tree, params, t, m):
    """exp(t M)[alpha, beta] / mu[beta] from the level-m Delta_s matrix."""
    M = delta_s_matrix(tree, params, m)
    mu = annotate_measure(tree)[tree.level_ids(m)]
    return expm(t * M) / mu[None, :]


def semigroup_apply(tree, params, t, f, m=None):
    """(p_t f)(alpha) = sum_beta p(t, alpha, beta) f_beta mu_beta on level-m cylinders."""
    f = np.asarray(f, dtype=float)
    if m is None:
        m = next(n for n in range(tree.depth + 1) if tree.level_sizes()[n] == f.size)
    if t < 0:
        raise ParamOutOfRange("t must be nonnegative")
    if t == 0:
        return f.copy()
    mu = annotate_measure(tree)[tree.level_ids(m)]
    return heat_matrix(tree, params, t, m) @ (f * mu)


def _pairs_by_meet(tree, pair_sample):
    """Distinct same-root leaf pairs grouped by meet node: {node: count}."""
    from .bratteli import common_prefix
    counts = {}
    if pair_sample is None:
        n_under = _leaves_under(tree)
        for node in range(int(tree.offsets[tree.depth])):
            kids = tree.children(node)
            if kids.size < 2:
                continue
            c = n_under[kids]
            counts[node] = int(c.sum() ** 2 - (c ** 2).sum())
        return counts
    for x, y in pair_sample:
        if int(x) == int(y):
            continue
        meet = common_prefix(tree, x, y)
        if meet is not None:
            counts[meet] = counts.get(meet, 0) + 1
    return counts


def _leaves_under(tree):
    def build():
        cnt = np.zeros(tree.n_nodes, dtype=np.int64)
        cnt[tree.leaves()] = 1
        for n in range(tree.depth - 1, -1, -1):
            ids = tree.level_ids(n)
            kids_total = np.add.reduceat(cnt[tree.offsets[n + 1]:tree.offsets[n + 2]],
                                         tree.child_start[ids] - tree.offsets[n + 1])
            cnt[ids] = kids_total
        cnt.setflags(write=False)
        return cnt
    return tree.cache("leaves_under", build)


def _ball_mass(dist_chain, mu_chain, t):
    n = ball_level_ds(dist_chain, t)
    if n >= len(dist_chain):
        return None
    return mu_chain[n]


def _diag_leaves(tree, pair_sample):
    if pair_sample is None:
        return tree.leaves()
    return np.array(sorted({int(x) for x, y in pair_sample if int(x) == int(y)}), dtype=np.int64)


def audit_pbound(tree, params, t_grid, pair_sample=None, tol=1e-9):
    """Check p(t,x,x) >= e^{-1}/mu(B_s(x,t)) and, for t <= d_s(x,y), p <= 1/(d_s mu[x^y]).

    Diagonal values are the truncated sums, which are lower bounds of the
    full series, so (a) is checked conservatively. Radii below the leaf
    resolution are skipped and counted.
    """
    params.require_below_two()
    t_grid = np.asarray(t_grid, dtype=float)
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    dist = -1.0 / lam

    worst_a = math.inf
    skipped_a = 0
    checked_a = 0
    for x in _diag_leaves(tree, pair_sample):
        chain = _chain(tree, x)
        vals = ondiag_from_chain(mu[chain], lam[chain], t_grid)
        for t, p in zip(t_grid, vals):
            mass = _ball_mass(dist[chain], mu[chain], t)
            if mass is None:
                skipped_a += 1
                continue
            bound = math.exp(-1.0) / mass
            worst_a = min(worst_a, p / bound - 1.0)
            checked_a += 1

    worst_b = math.inf
    checked_b = 0
    groups = _pairs_by_meet(tree, pair_sample)
    nodes = np.array(sorted(groups), dtype=np.int64)
    if nodes.size:
        off = node_offdiag_values(tree, params, t_grid, top_level=tree.depth - 1)
        for node in nodes:
            d = dist[node]
            sel = t_grid <= d
            if not sel.any():
                continue
            bound = 1.0 / (d * mu[node])
            worst_b = min(worst_b, float(np.min(1.0 - off[node, sel] / bound)))
            checked_b += int(sel.sum())
    worst = min(worst_a, worst_b)
    return EstimateAudit(
        inequality="pointwise_bounds",
        grid=f"{t_grid.size} times x {'all' if pair_sample is None else len(pair_sample)} pairs",
        worst_margin=float(worst),
        c1=float("nan"),
        c2=float("nan"),
        pass_=bool(worst >= -tol),
        extra={"worst_margin_a": float(worst_a), "worst_margin_b": float(worst_b),
               "checked_a": checked_a, "checked_b": checked_b, "skipped_a": skipped_a},
    )


def asymp_ratios(tree, params, t_grid, pair_sample=None, tail_tol=TAIL_TOL):
    """Ratios p / comparison for the two-regime estimate in terms of d_s.

    comparison = t / (d_s(x,y) mu[x^y]) if t <= d_s(x,y), else 1/mu(B_s(x,t)).
    For x != y the ball B_s(x,t) with t > d_s(x,y) is an ancestor of x^y, so
    both sides depend on the meet node only.
    """
    params.require_below_two()
    t_grid = np.asarray(t_grid, dtype=float)
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    dist = -1.0 / lam
    ratios = []
    groups = _pairs_by_meet(tree, pair_sample)
    if groups:
        off = node_offdiag_values(tree, params, t_grid, top_level=tree.depth - 1)
        for node in sorted(groups):
            chain = _chain(tree, node)
            d = dist[node]
            for j, t in enumerate(t_grid):
                if t <= d:
                    comp = t / (d * mu[node])
                else:
                    comp = 1.0 / mu[chain[ball_level_ds(dist[chain], t)]]
                ratios.append(off[node, j] / comp)
    skipped = 0
    for x in _diag_leaves(tree, pair_sample):
        chain = _chain(tree, x)
        vals = ondiag_from_chain(mu[chain], lam[chain], t_grid)
        for t, p in zip(t_grid, vals):
            mass = _ball_mass(dist[chain], mu[chain], t)
            if mass is None or tail_bound(tree, params, x, t) > tail_tol * p:
                skipped += 1
                continue
            ratios.append(p * mass)
    return np.array(ratios), skipped


def audit_asymp(tree, params, t_grid, pair_sample=None):
    r, skipped = asymp_ratios(tree, params, t_grid, pair_sample)
    c1 = float(r.min()) if r.size else float("nan")
    c2 = float(r.max()) if r.size else float("nan")
    ok = bool(r.size and 0 < c1 <= c2 < math.inf)
    return EstimateAudit(
        inequality="two_regime",
        grid=f"{len(t_grid)} times, depth {tree.depth}",
        worst_margin=c1,
        c1=c1,
        c2=c2,
        pass_=ok,
        extra={"band_width": c2 / c1 if ok else float("nan"), "n_ratios": int(r.size),
               "skipped_unresolved": skipped},
    )


def asymp_band_stability(coarse, fine, params, t_grid, tol=0.2):
    """Compare band widths c2/c1 of two depths; pass if they differ by < tol."""
    a = audit_asymp(coarse, params, t_grid)
    b = audit_asymp(fine, params, t_grid)
    change = abs(b.extra["band_width"] / a.extra["band_width"] - 1.0)
    return {
        "depths": [coarse.depth, fine.depth],
        "bands": [[a.c1, a.c2], [b.c1, b.c2]],
        "widths": [a.extra["band_width"], b.extra["band_width"]],
        "relative_change": change,
        "pass": bool(a.pass_ and b.pass_ and change < tol),
    }


def regress_exponent(tree, params, pair_sample=None):
    """Least-squares slope of log d_s against log d_w over distinct-leaf pairs.

    Each meet node contributes one point weighted by the number of ordered
    leaf pairs meeting there. Reports distances to 2+delta-s and (2+delta-s)/delta.
    """
    s, delta = params.s, params.delta
    if not 1.0 < s < 2.0 + delta:
        raise ParamOutOfRange(f"needs 1 < s < 2 + delta, got s={s!r}")
    lam = annotate_lambda(tree, params)
    w = annotate_weight(tree, params.weight)
    groups = _pairs_by_meet(tree, pair_sample)
    nodes = np.array(sorted(groups), dtype=np.int64)
    if nodes.size == 0 or np.unique(tree.level[nodes]).size < 2:
        raise ValueError("regression needs pairs meeting at >= 2 distinct prefix depths")
    if np.any(lam[nodes] >= 0):
        raise ParamOutOfRange("nonnegative eigenvalue at a meet node; d_s undefined")
    x = np.log(w[nodes])
    y = np.log(-1.0 / lam[nodes])
    wt = np.array([groups[int(n)] for n in nodes], dtype=float)
    slope, intercept, resid = _wls(x, y, wt)
    node_slope, _, node_resid = _wls(x, y, np.ones_like(x))
    cands = {"2+delta-s": 2.0 + delta - s, "(2+delta-s)/delta": (2.0 + delta - s) / delta}
    return {
        "slope": slope,
        "intercept": intercept,
        "residual": resid,
        "node_slope": node_slope,
        "node_residual": node_resid,
        "n_pairs": int(wt.sum()),
        "n_meet_nodes": int(nodes.size),
        "candidates": cands,
        "distance_to_candidates": {k: abs(slope - v) for k, v in cands.items()},
    }


def _wls(x, y, wt):
    W = wt / wt.sum()
    xm, ym = np.sum(W * x), np.sum(W * y)
    sxx = np.sum(W * (x - xm) ** 2)
    slope = float(np.sum(W * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = float(np.sqrt(np.sum(W * (y - intercept - slope * x) ** 2)))
    return slope, intercept, resid
