"""Laplace-Beltrami eigenvalues, Haar-type eigenbasis and the intrinsic metric.

Sign convention: Delta_s has the nonpositive spectrum {0} U {lambda_{s,gamma}}
and the Dirichlet form is Q_s(f, g) = <f, -Delta_s g> in L^2(mu), so that
exp(t Delta_s) is a Markov contraction semigroup.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bratteli import meet_level_matrix
from .errors import NotBranching, ParamOutOfRange
from .measures import VdReport, WeightParams, annotate_measure, annotate_weight, level_scale


@dataclass(frozen=True)
class SpectralParams:
    s: float
    delta: float

    def __post_init__(self):
        WeightParams(self.delta)

    @property
    def weight(self):
        return WeightParams(self.delta)

    def require_below_two(self):
        if not self.s < 2.0:
            raise ParamOutOfRange(f"needs s < 2, got s={self.s!r}")

    def require_divergent(self):
        if not self.s < 2.0 + self.delta:
            raise ParamOutOfRange(f"needs s < 2 + delta = {2 + self.delta!r}, got s={self.s!r}")


def ext1_kappa_sums(tree):
    """Per (matrix index, vertex): sum over ordered distinct child-edge pairs of kappa kappa'."""
    kappa = tree.perron.kappa
    out = []
    for a in tree.vk.matrices:
        af = a.astype(float)
        first = af @ kappa
        out.append(first ** 2 - af @ kappa ** 2)
    return np.array(out)


def annotate_ext1_mass(tree):
    """sum_{(e,e') in ext_1(gamma)} mu[gamma e] mu[gamma e'] for every node."""
    def build():
        pair = ext1_kappa_sums(tree)
        nxt = np.array([level_scale(tree.perron, tree.k, n + 1) for n in range(tree.depth + 1)])
        mat = tree.level % tree.k
        out = nxt[tree.level] ** 2 * pair[mat, tree.source]
        bad = np.nonzero(~(out > 0))[0]
        if bad.size:
            node = int(bad[0])
            count = int(tree.vk.matrices[mat[node]][tree.source[node]].sum())
            raise NotBranching(node, count)
        out.setflags(write=False)
        return out
    return tree.cache("ext1mass", build)


def annotate_G(tree, params):
    """G_s(eta) = 1/2 w(eta)^{2-s} sum_{ext_1(eta)} mu[eta e] mu[eta e']."""
    def build():
        w = annotate_weight(tree, params.weight)
        g = 0.5 * w ** (2.0 - params.s) * annotate_ext1_mass(tree)
        g.setflags(write=False)
        return g
    return tree.cache(("G", params), build)


def _neumaier_add(total, comp, term):
    t = total + term
    comp = comp + np.where(np.abs(total) >= np.abs(term), (total - t) + term, (term - t) + total)
    return t, comp


def annotate_lambda(tree, params):
    """lambda_{s,gamma} by the root-to-node prefix recurrence.

    lambda = sum_{k<n} (mu[gamma_{k+1}] - mu[gamma_k]) / G(gamma_k) - mu[gamma] / G(gamma),
    with the prefix sum carried down the tree in compensated arithmetic.
    """
    def build():
        mu = annotate_measure(tree)
        G = annotate_G(tree, params)
        total = np.zeros(tree.n_nodes)
        comp = np.zeros(tree.n_nodes)
        for n in range(1, tree.depth + 1):
            ids = tree.level_ids(n)
            par = tree.parent[ids]
            term = (mu[ids] - mu[par]) / G[par]
            total[ids], comp[ids] = _neumaier_add(total[par], comp[par], term)
        lam = (total + comp) - mu / G
        lam.setflags(write=False)
        return lam
    return tree.cache(("lambda", params), build)


def lambda_rearranged(tree, params):
    """Rearranged form: sum_k mu[gamma_{k+1}] (1/G(gamma_k) - 1/G(gamma_{k+1})) - mu[r]/G(r)."""
    mu = annotate_measure(tree)
    G = annotate_G(tree, params)
    out = np.empty(tree.n_nodes)
    roots = tree.level_ids(0)
    out[roots] = -mu[roots] / G[roots]
    for n in range(1, tree.depth + 1):
        ids = tree.level_ids(n)
        par = tree.parent[ids]
        out[ids] = out[par] + mu[ids] * (1.0 / G[par] - 1.0 / G[ids])
    return out


def lambda_direct(tree, params, node):
    """Prefix-sum eigenvalue formula summed term by term along one path, without shared state."""
    mu = annotate_measure(tree)
    G = annotate_G(tree, params)
    chain = tree.ancestors(int(tree.level[node]))[int(node) - tree.offsets[int(tree.level[node])]]
    terms = [(mu[chain[j + 1]] - mu[chain[j]]) / G[chain[j]] for j in range(len(chain) - 1)]
    return math.fsum(terms) - mu[node] / G[node]


def level_min_lambda(tree, params):
    lam = annotate_lambda(tree, params)
    return np.array([lam[tree.level_ids(n)].min() for n in range(tree.depth + 1)])


def delta_s_matrix(tree, params, m):
    """Matrix of Delta_s on functions constant on level-m cylinders.

    Column alpha holds Delta_s(chi_alpha) evaluated on each level-m cylinder,
    expanded from
        Delta_s(chi_g) = -sum_{k<n} (1/G(g_k)) ((mu[g_k] - mu[g_{k+1}]) chi_g
                                                - mu[g] (chi_{g_k} - chi_{g_{k+1}})).
    So (Delta_s f)(beta) = sum_alpha M[beta, alpha] f_alpha.
    """
    if m > tree.depth:
        raise ValueError("m exceeds tree depth")
    mu = annotate_measure(tree)
    G = annotate_G(tree, params)
    anc = tree.ancestors(m)
    lev = meet_level_matrix(tree, m)      # lev[beta, alpha] = |alpha ^ beta|
    size = anc.shape[0]
    M = np.zeros((size, size))
    eye = np.eye(size)
    mu_alpha = mu[anc[:, m]]
    for k in range(m):
        gk = G[anc[:, k]]
        drop = mu[anc[:, k]] - mu[anc[:, k + 1]]
        in_k = (lev >= k).astype(float)           # chi_{alpha_k}(beta)
        in_k1 = (lev >= k + 1).astype(float)      # chi_{alpha_{k+1}}(beta)
        M -= (drop * eye - mu_alpha[None, :] * (in_k - in_k1)) / gk[None, :]
    return M


def symmetrized(tree, M, m):
    """D^{1/2} M D^{-1/2} with D = diag(mu); symmetric iff M is mu-self-adjoint."""
    mu = annotate_measure(tree)[tree.level_ids(m)]
    r = np.sqrt(mu)
    return r[:, None] * M / r[None, :]


@dataclass
class EigenBasis:
    """Haar-type orthonormal eigenfunctions up to level m.

    ``entries`` holds (node, lambda, coeffs) where coeffs has shape
    (children - 1, children): values of each psi on the child cylinders.
    ``zero_modes`` lists the root vertices; chi_v / sqrt(kappa_v) spans the
    kernel of Delta_s.
    """

    m: int
    entries: list
    zero_modes: list

    @property
    def n_vectors(self):
        return len(self.zero_modes) + sum(c.shape[0] for _, _, c in self.entries)

    def matrix(self, tree, level=None):
        """Rows: basis functions; columns: values on cylinders of ``level`` (default m)."""
        level = self.m if level is None else level
        anc = tree.ancestors(level)
        mu = annotate_measure(tree)
        rows, lams = [], []
        for v in self.zero_modes:
            rows.append((anc[:, 0] == v) / math.sqrt(mu[v]))
            lams.append(0.0)
        for node, lam, coeffs in self.entries:
            n = int(tree.level[node])
            inside = anc[:, n] == node
            child_of = anc[:, n + 1]
            kids = tree.children(node)
            pos = np.searchsorted(kids, child_of)
            pos = np.clip(pos, 0, kids.size - 1)
            for c in coeffs:
                rows.append(np.where(inside, c[pos], 0.0))
                lams.append(lam)
        return np.array(rows), np.array(lams)


def gram_schmidt_children(child_mu):
    """Orthonormal (in sum_j a_j b_j mu_j) basis of span{e_j/mu_j - e_{j+1}/mu_{j+1}}."""
    p = child_mu.size
    out = []
    for j in range(p - 1):
        v = np.zeros(p)
        v[j] = 1.0 / child_mu[j]
        v[j + 1] = -1.0 / child_mu[j + 1]
        for u in out:
            v = v - np.sum(u * v * child_mu) * u
        v = v / math.sqrt(np.sum(v * v * child_mu))
        out.append(v)
    return np.array(out).reshape(p - 1, p)


def eigenbasis(tree, params, m):
    if m > tree.depth:
        raise ValueError("m exceeds tree depth")
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    entries = []
    for n in range(m):
        for node in tree.level_ids(n):
            kids = tree.children(node)
            if kids.size < 2:
                continue
            entries.append((int(node), float(lam[node]), gram_schmidt_children(mu[kids])))
    return EigenBasis(m=m, entries=entries, zero_modes=[int(v) for v in tree.level_ids(0)])


def closed_form_spectrum(tree, params, m):
    """{0 (x N)} U {lambda_gamma with multiplicity m_gamma : |gamma| < m}, sorted."""
    lam = annotate_lambda(tree, params)
    vals = [0.0] * tree.N
    for n in range(m):
        ids = tree.level_ids(n)
        mult = tree.child_count[ids] - 1
        vals.extend(np.repeat(lam[ids], mult).tolist())
    return np.sort(np.array(vals))


def _laplacian_ldl(W):
    """Symmetric elimination of a graph Laplacian given by its edge weights.

    Pivots are recomputed as positive sums of the current edge weights and
    Schur-complement updates only add positive terms, so no cancellation
    occurs. Returns (X, d) with L = X diag(d) X^T; zero pivots mark the
    last vertex of each connected component.
    """
    W = np.array(W, dtype=float)
    n = W.shape[0]
    active = np.ones(n, dtype=bool)
    X = np.zeros((n, n))
    d = np.zeros(n)
    for step in range(n):
        deg = np.where(active, W.sum(axis=1), -1.0)
        k = int(np.argmax(deg))
        col = np.where(active, W[:, k], 0.0)
        col[k] = 0.0
        X[k, step] = 1.0
        d[step] = deg[k]
        active[k] = False
        if d[step] > 0:
            X[:, step] -= col / d[step]
            upd = np.outer(col, col) / d[step]
            np.fill_diagonal(upd, 0.0)
            W += upd
        W[k, :] = 0.0
        W[:, k] = 0.0
    return X, d


def matrix_spectrum(tree, params, m):
    """Eigenvalues of the level-m Delta_s matrix to high relative accuracy.

    -diag(mu) M is a weighted graph Laplacian whose edge weights
    mu_a mu_b / G(a ^ b) are each known to full relative precision. Dense
    eigensolvers lose relative accuracy on its small eigenvalues (absolute
    error ~ eps ||M||), so the spectrum is taken from a cancellation-free
    LDL^T factorization followed by a preconditioned Jacobi SVD of
    D^{-1/2} X d^{1/2}. Returns the sorted (nonpositive) eigenvalues and the
    number of zero pivots (= number of connected components).
    """
    from scipy.linalg import lapack

    M = delta_s_matrix(tree, params, m)
    mu = annotate_measure(tree)[tree.level_ids(m)]
    W = mu[:, None] * M
    np.fill_diagonal(W, 0.0)
    if W.min() < 0:
        raise ValueError("negative off-diagonal entry; not a generator")
    X, d = _laplacian_ldl(0.5 * (W + W.T))
    keep = d > 0
    C = X[:, keep] * np.sqrt(d[keep]) / np.sqrt(mu)[:, None]
    n_zero = int(np.count_nonzero(~keep))
    if C.shape[1] == 0:
        return np.zeros(n_zero), n_zero
    sva, _, _, work, _, info = lapack.dgejsv(C, joba=1, jobu=3, jobv=3)
    if info != 0:
        raise ArithmeticError(f"dgejsv failed with info={info}")
    sv = sva * (work[0] / work[1])
    vals = np.concatenate([np.zeros(n_zero), -(sv ** 2)])
    return np.sort(vals), n_zero


CROSS_SEPARATE = "separate"
CROSS_VIRTUAL_ROOT = "virtual_root"


def cross_component_distance(tree, params, cross=CROSS_SEPARATE):
    if cross == CROSS_SEPARATE:
        return math.inf
    if cross == CROSS_VIRTUAL_ROOT:
        lam = annotate_lambda(tree, params)
        return float(np.max(-1.0 / lam[tree.level_ids(0)]))
    raise ValueError(f"unknown cross-component convention {cross!r}")


def d_s(tree, params, x, y, cross=CROSS_SEPARATE):
    """Intrinsic metric -1 / lambda_{s, x^y}."""
    from .bratteli import common_prefix
    params.require_below_two()
    if int(x) == int(y):
        return 0.0
    meet = common_prefix(tree, x, y)
    if meet is None:
        return cross_component_distance(tree, params, cross)
    return float(-1.0 / annotate_lambda(tree, params)[meet])


def ds_matrix(tree, params, n, cross=CROSS_SEPARATE):
    from .bratteli import meet_matrix
    params.require_below_two()
    lam = annotate_lambda(tree, params)
    meet = meet_matrix(tree, n)
    far = cross_component_distance(tree, params, cross)
    out = np.where(meet >= 0, -1.0 / lam[np.maximum(meet, 0)], far)
    np.fill_diagonal(out, 0.0)
    return out


def ball_level_ds(chain_d, a, whole_above=math.inf):
    """n with -1/lambda_n < a <= -1/lambda_{n-1}; -1 for the whole space."""
    if a > whole_above:
        return -1
    below = np.nonzero(chain_d < a)[0]
    return int(below[0]) if below.size else len(chain_d)


def ball_ds(tree, params, x, a, cross=CROSS_SEPARATE):
    """Cylinder [x(0,n)] equal to B_s(x, a); None if the ball is the whole space."""
    params.require_below_two()
    if not a > 0:
        raise ValueError("radius must be positive")
    lam = annotate_lambda(tree, params)
    n_top = int(tree.level[x])
    chain = tree.ancestors(n_top)[int(x) - tree.offsets[n_top]]
    far = cross_component_distance(tree, params, cross)
    n = ball_level_ds(-1.0 / lam[chain], a, far)
    if n < 0:
        return None
    return int(chain[min(n, n_top)])


def doubling_constants(tree, params, max_lag=3):
    """c_1 = min mu[x(0,n)]/mu[x(0,n-1)], c_2(m) = max lambda_n / lambda_{n+m}."""
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    anc = tree.ancestors(tree.depth)
    c1 = float(np.min(mu[anc[:, 1:]] / mu[anc[:, :-1]]))
    c2 = {}
    for lag in range(1, min(max_lag, tree.depth) + 1):
        c2[lag] = float(np.max(lam[anc[:, :-lag]] / lam[anc[:, lag:]]))
    return c1, c2


def vd_audit_ds(tree, params, grid=None, cross=CROSS_SEPARATE, rows_out=None):
    """Empirical doubling constant of mu for d^(s) over all leaves.

    The bound c_1^{-L} uses the smallest lag L with c_2(L) < 1/2: then
    the 2a-ball sits at most L levels above the a-ball.
    """
    from .measures import _doubling_ratios, breakpoint_radii
    params.require_below_two()
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    dist = -1.0 / lam
    anc = tree.ancestors(tree.depth)
    floor = float(dist[tree.leaves()].max())
    if grid is None:
        radii = breakpoint_radii(np.unique(dist), floor)
        grid_desc = "all ratio breakpoints above leaf resolution"
    else:
        radii = np.asarray(grid, dtype=float)
        radii = radii[radii > floor]
        grid_desc = f"{radii.size} supplied radii above leaf resolution"
    far = cross_component_distance(tree, params, cross)

    def level_of(chain_vals, a):
        return ball_level_ds(chain_vals, a, far)

    best = 0.0
    for row in anc:
        b, rows = _doubling_ratios(dist[row], mu[row], radii, level_of)
        best = max(best, b)
        if rows_out is not None:
            rows_out.extend((int(row[-1]), r, ratio) for r, ratio in rows)
    c1, c2 = doubling_constants(tree, params, max_lag=tree.depth)
    lag = next((m for m in sorted(c2) if c2[m] < 0.5), None)
    bound = c1 ** (-lag) if lag is not None else math.inf
    return VdReport(
        metric_name="d_s",
        empirical_constant=float(best),
        theoretical_bound=float(bound),
        grid=grid_desc,
        pass_=bool(best <= bound + 1e-9),
        extra={"c1": c1, "c2": {str(k): v for k, v in c2.items() if k <= 3},
               "lag": lag, "n_radii": int(radii.size)},
    )


def zeta_partial(tree, params, s_grid):
    """Level-truncated sums of w_delta(lambda)^s over all finite paths.

    Returns {s: {"increments", "partial_sums", "ratios"}}; the per-level
    ratio of increments brackets the abscissa of convergence.
    """
    w = annotate_weight(tree, params.weight if hasattr(params, "weight") else params)
    out = {}
    for s in s_grid:
        inc = np.array([math.fsum(w[tree.level_ids(n)] ** s) for n in range(tree.depth + 1)])
        out[float(s)] = {
            "increments": inc,
            "partial_sums": np.cumsum(inc),
            "ratios": inc[1:] / inc[:-1],
        }
    return out
