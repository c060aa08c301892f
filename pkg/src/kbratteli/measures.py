"""Perron-Frobenius measure, weights w_delta and the ultrametric d_w."""

import math
from dataclasses import dataclass, field

import numpy as np

from .bratteli import common_prefix

LOG_DOMAIN_LEVEL = 200


@dataclass(frozen=True)
class WeightParams:
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")


@dataclass
class VdReport:
    metric_name: str
    empirical_constant: float
    theoretical_bound: float
    grid: str
    pass_: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "metric": self.metric_name,
            "empirical_constant": self.empirical_constant,
            "theoretical_bound": self.theoretical_bound,
            "grid": self.grid,
            "pass": self.pass_,
        }
        out.update(self.extra)
        return out


def _delta(params):
    return params.delta if hasattr(params, "delta") else float(params)


def level_log_scale(perron, k, n):
    """sum_{j<n} log rho_{(j mod k)+1}; mu on level n is exp(-this) * kappa."""
    logs = [math.log(r) for r in perron.rho]
    q, t = divmod(n, k)
    return math.fsum([q * sum(logs)] + logs[:t])


def level_scale(perron, k, n):
    """1 / (rho^q rho_1 ... rho_t) for n = qk + t."""
    if n > LOG_DOMAIN_LEVEL:
        return math.exp(-level_log_scale(perron, k, n))
    prod = 1.0
    for j in range(n):
        prod *= perron.rho[j % k]
    return 1.0 / prod


def level_weight_scale(perron, k, n, delta):
    if n > LOG_DOMAIN_LEVEL:
        return math.exp(-level_log_scale(perron, k, n) / delta)
    return level_scale(perron, k, n) ** (1.0 / delta)


def annotate_measure(tree):
    """mu[eta] = kappa_{s(eta)} / (rho^q rho_1...rho_t) for every node."""
    def build():
        scales = np.array([level_scale(tree.perron, tree.k, n) for n in range(tree.depth + 1)])
        mu = scales[tree.level] * tree.perron.kappa[tree.source]
        mu.setflags(write=False)
        return mu
    return tree.cache("mu", build)


def annotate_weight(tree, params):
    delta = _delta(params)

    def build():
        scales = np.array([level_weight_scale(tree.perron, tree.k, n, delta)
                           for n in range(tree.depth + 1)])
        w = scales[tree.level] * tree.perron.kappa[tree.source]
        w.setflags(write=False)
        return w
    return tree.cache(("w", delta), build)


def d_w(tree, x, y, params):
    if int(x) == int(y):
        return 0.0
    meet = common_prefix(tree, x, y)
    if meet is None:
        return 1.0
    return float(annotate_weight(tree, params)[meet])


def dw_matrix(tree, params, n):
    """d_w between all pairs of level-n cylinders (distance of their meets)."""
    from .bratteli import meet_matrix
    w = annotate_weight(tree, params)
    meet = meet_matrix(tree, n)
    out = np.where(meet >= 0, w[np.maximum(meet, 0)], 1.0)
    np.fill_diagonal(out, 0.0)
    return out


def ball_dw(tree, x, r, params):
    """Cylinder equal to {y : d_w(x, y) < r} at the tree's resolution.

    Walks up from x while the parent's weight is < r. If even the leaf
    weight is >= r the leaf itself is returned (the true ball is finer than
    the tree). Returns None when r > 1: the ball is then the whole space,
    since leaves under different root vertices are at distance 1.
    """
    if r > 1.0:
        return None
    w = annotate_weight(tree, params)
    node = int(x)
    while tree.level[node] > 0 and w[tree.parent[node]] < r:
        node = int(tree.parent[node])
    return node


def ball_level_dw(chain_w, r):
    """Level n of B(x, r) = [x(0,n)] given the weights along x's chain.

    n = min{j : w_j < r}; -1 means the whole space (r > 1); len(chain)
    means the ball is finer than the tree resolution.
    """
    if r > 1.0:
        return -1
    below = np.nonzero(chain_w < r)[0]
    return int(below[0]) if below.size else len(chain_w)


def vd_constant_dw(perron, delta):
    """rho^{-R} * Y with R = -delta ln 2 / ln rho - 2 and Y = max kappa_v / kappa_w."""
    rho = float(np.prod(perron.rho))
    R = -delta * math.log(2.0) / math.log(rho) - 2.0
    Y = float(perron.kappa.max() / perron.kappa.min())
    return rho ** (-R) * Y, {"R": R, "Y": Y, "X": float(perron.kappa.min()), "rho": rho}


def _doubling_ratios(chain_vals, chain_mu, radii, ball_level, total_mass=1.0):
    """Max of mu(B(x,2r)) / mu(B(x,r)) over radii for one center, plus rows."""
    depth = len(chain_vals) - 1
    rows = []
    best = 0.0
    for r in radii:
        n1 = ball_level(chain_vals, r)
        n2 = ball_level(chain_vals, 2.0 * r)
        if n1 > depth or n2 > depth:
            continue
        m1 = total_mass if n1 < 0 else chain_mu[n1]
        m2 = total_mass if n2 < 0 else chain_mu[n2]
        ratio = m2 / m1
        rows.append((r, ratio))
        best = max(best, ratio)
    return best, rows


def breakpoint_radii(values, floor):
    """Right endpoints of all pieces on which the doubling ratio is constant."""
    v = np.unique(np.concatenate([values, values / 2.0, [1.0, 0.5, 2.0]]))
    return v[v > floor]


def vd_audit_dw(tree, params, radius_grid=None, center_set=None, rows_out=None):
    """Empirical volume-doubling constant of mu for d_w against the closed-form bound.

    By default centers are all leaves and radii are every breakpoint of the
    ratio (ancestor weights and their halves) above the leaf resolution, so
    the maximum is exact for the truncated tree.
    """
    delta = _delta(params)
    w = annotate_weight(tree, params)
    mu = annotate_measure(tree)
    anc = tree.ancestors(tree.depth)
    centers = np.arange(anc.shape[0]) if center_set is None else (
        np.asarray(center_set) - tree.offsets[tree.depth])
    floor = float(w[tree.leaves()].max())
    if radius_grid is None:
        radii = breakpoint_radii(np.unique(w), floor)
        grid_desc = "all ratio breakpoints above leaf resolution"
    else:
        radii = np.asarray(radius_grid, dtype=float)
        radii = radii[radii > floor]
        grid_desc = f"{radii.size} supplied radii above leaf resolution"
    best = 0.0
    for c in centers:
        chain = anc[c]
        b, rows = _doubling_ratios(w[chain], mu[chain], radii, ball_level_dw)
        best = max(best, b)
        if rows_out is not None:
            rows_out.extend((int(chain[-1]), r, ratio) for r, ratio in rows)
    bound, consts = vd_constant_dw(tree.perron, delta)
    return VdReport(
        metric_name="d_w",
        empirical_constant=float(best),
        theoretical_bound=float(bound),
        grid=grid_desc,
        pass_=bool(best <= bound + 1e-9),
        extra={"constants": consts, "n_centers": int(len(centers)), "n_radii": int(radii.size)},
    )


def diam_check(tree, params, max_level=None):
    """Compare sup of pairwise leaf distances inside each cylinder with w.

    Returns a list of (node, diameter, weight) for every violation.
    """
    from .bratteli import meet_matrix
    w = annotate_weight(tree, params)
    meet = meet_matrix(tree, tree.depth)
    d = np.where(meet >= 0, w[np.maximum(meet, 0)], 1.0)
    np.fill_diagonal(d, 0.0)
    anc = tree.ancestors(tree.depth)
    bad = []
    top = tree.depth - 1 if max_level is None else min(max_level, tree.depth - 1)
    for n in range(top + 1):
        for node in tree.level_ids(n):
            members = np.nonzero(anc[:, n] == node)[0]
            diam = float(d[np.ix_(members, members)].max())
            if not math.isclose(diam, float(w[node]), rel_tol=1e-15, abs_tol=0.0):
                bad.append((int(node), diam, float(w[node])))
    return bad
