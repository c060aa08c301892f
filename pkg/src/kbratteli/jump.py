"""Jump kernel J_s, the jump-type Dirichlet form, CTMC simulation and moments."""

from dataclasses import dataclass

import numpy as np

from .bratteli import meet_matrix
from .errors import NotAGenerator, ParamOutOfRange
from .heat import node_offdiag_values, ondiag_from_chain, tail_bound
from .measures import annotate_measure, annotate_weight
from .spectral import annotate_G, annotate_lambda, delta_s_matrix
from .spectral import annotate_ext1_mass

CHUNK = 8192


def annotate_jump(tree, params):
    """J_s(gamma) = w(gamma)^{s-2} / sum_{ext_1(gamma)} mu[gamma e] mu[gamma e']."""
    def build():
        w = annotate_weight(tree, params.weight)
        J = w ** (params.s - 2.0) / annotate_ext1_mass(tree)
        J.setflags(write=False)
        return J
    return tree.cache(("J", params), build)


def jump_identity_residual(tree, params):
    """max |J_s * 2 G_s - 1| over all nodes."""
    return float(np.max(np.abs(annotate_jump(tree, params) * 2.0 * annotate_G(tree, params) - 1.0)))


def jump_weight_matrix(tree, params, m):
    """W_J(alpha, beta) = J_s(alpha ^ beta) on level-m cylinders; 0 on the diagonal and across roots."""
    J = annotate_jump(tree, params)
    meet = meet_matrix(tree, m)
    W = np.where(meet >= 0, J[np.maximum(meet, 0)], 0.0)
    np.fill_diagonal(W, 0.0)
    return W


def dirichlet_jump(tree, params, f, g, m):
    """Double sum of J(a^b)(f_a - f_b)(g_a - g_b) mu_a mu_b over ordered cylinder pairs."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    mu = annotate_measure(tree)[tree.level_ids(m)]
    W = jump_weight_matrix(tree, params, m)
    df = f[:, None] - f[None, :]
    dg = g[:, None] - g[None, :]
    return float(np.sum(W * df * dg * mu[:, None] * mu[None, :]))


def dirichlet_spectral(tree, params, f, g, m):
    """<f, -Delta_s g> in L^2(mu) on level-m cylinder functions."""
    mu = annotate_measure(tree)[tree.level_ids(m)]
    M = delta_s_matrix(tree, params, m)
    return float(-np.sum(np.asarray(f) * (M @ np.asarray(g)) * mu))


def dirichlet_equivalence(tree, params, m):
    """Compare both forms on all pairs of level-m cylinder indicators.

    Returns the max relative deviation and the least-squares proportionality
    factor Q_jump / Q_spectral (1 when the forms coincide).
    """
    size = int(tree.level_sizes()[m])
    mu = annotate_measure(tree)[tree.level_ids(m)]
    W = jump_weight_matrix(tree, params, m)
    # Q_J(chi_a, chi_b): closed form of the double sum for indicator pairs
    WM = W * mu[:, None] * mu[None, :]
    Qj = -2.0 * WM
    np.fill_diagonal(Qj, 2.0 * WM.sum(axis=1))
    M = delta_s_matrix(tree, params, m)
    Qs = -(M * mu[:, None]).T
    scale = np.max(np.abs(Qs))
    rel = float(np.max(np.abs(Qj - Qs)) / scale)
    factor = float(np.sum(Qj * Qs) / np.sum(Qs * Qs))
    return {"level": m, "size": size, "max_relative_deviation": rel, "fitted_factor": factor}


@dataclass(frozen=True)
class SimConfig:
    x0: int
    horizon: float
    n_paths: int
    seed: int
    level: int
    record_events: bool = True

    def __post_init__(self):
        if not self.horizon > 0:
            raise ParamOutOfRange("horizon must be positive")


@dataclass
class SimResult:
    terminal: np.ndarray
    n_jumps: np.ndarray
    events: dict

    def terminal_counts(self, size):
        return np.bincount(self.terminal, minlength=size)


def generator(tree, params, m, tol=1e-12):
    M = delta_s_matrix(tree, params, m)
    off = M - np.diag(np.diag(M))
    if off.min() < -tol:
        raise NotAGenerator(f"off-diagonal entry {off.min():.3g} < 0")
    return M


def _chunk_rng(seed, chunk):
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def _simulate_chunk(rates, cdf, x0, horizon, n, rng, record):
    state = np.full(n, x0, dtype=np.int64)
    clock = np.zeros(n)
    jumps = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    logs = []
    while alive.size:
        r = rates[state[alive]]
        hold = rng.standard_exponential(alive.size) / np.where(r > 0, r, 1.0)
        hold = np.where(r > 0, hold, np.inf)
        clock[alive] += hold
        go = clock[alive] <= horizon
        movers = alive[go]
        u = rng.random(movers.size)
        nxt = (cdf[state[movers]] < u[:, None]).sum(axis=1)
        nxt = np.minimum(nxt, cdf.shape[1] - 1)
        if record and movers.size:
            logs.append((movers, clock[movers].copy(), state[movers].copy(), nxt.copy()))
        state[movers] = nxt
        jumps[movers] += 1
        alive = movers
    return state, jumps, logs


def ctmc_simulate(tree, params, cfg):
    """Gillespie simulation of the chain generated by the level-m Delta_s matrix.

    Paths are processed in fixed chunks, each with its own Philox stream
    keyed by (seed, chunk index), so results do not depend on scheduling.
    """
    M = generator(tree, params, cfg.level)
    rates = -np.diag(M)
    jump = M / np.where(rates > 0, rates, 1.0)[:, None]
    np.fill_diagonal(jump, 0.0)
    cdf = np.cumsum(jump, axis=1)
    cdf[:, -1] = 1.0
    x0 = int(cfg.x0)
    if tree.level[x0] != cfg.level:
        x0 = tree.ancestor_at(x0, cfg.level)
    x0 -= int(tree.offsets[cfg.level])

    terminal, njumps = [], []
    ev = {"path": [], "time": [], "from": [], "to": []}
    for c, start in enumerate(range(0, cfg.n_paths, CHUNK)):
        n = min(CHUNK, cfg.n_paths - start)
        st, jp, logs = _simulate_chunk(rates, cdf, x0, cfg.horizon, n, _chunk_rng(cfg.seed, c),
                                       cfg.record_events)
        terminal.append(st)
        njumps.append(jp)
        for movers, times, frm, to in logs:
            ev["path"].append(movers + start)
            ev["time"].append(times)
            ev["from"].append(frm)
            ev["to"].append(to)
    events = None
    if cfg.record_events:
        if ev["path"]:
            events = {k: np.concatenate(v) for k, v in ev.items()}
            order = np.lexsort((events["time"], events["path"]))
            events = {k: v[order] for k, v in events.items()}
        else:
            events = {k: np.array([]) for k in ev}
    return SimResult(terminal=np.concatenate(terminal), n_jumps=np.concatenate(njumps), events=events)


def predicted_moment_slope(gamma):
    return 1.0 if gamma >= 1.0 else float(gamma)


def _fit(logt, logE):
    A = np.vstack([logt, np.ones_like(logt)]).T
    coef, *_ = np.linalg.lstsq(A, logE, rcond=None)
    resid = float(np.sqrt(np.mean((logE - A @ coef) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def moment_values(tree, params, x, t_grid, exponent):
    """E_x[d_w(x, Y_t)^exponent] by exact summation over level-depth cylinders.

    Displacement inside x's own leaf cylinder counts as zero.
    """
    mu = annotate_measure(tree)
    w = annotate_weight(tree, params.weight)
    D = int(tree.level[x])
    chain = tree.ancestors(D)[int(x) - tree.offsets[D]]
    t_grid = np.asarray(t_grid, dtype=float)
    off = node_offdiag_values(tree, params, t_grid, top_level=D)
    mass = mu[chain[:-1]] - mu[chain[1:]]
    return (w[chain[:-1], None] ** exponent * off[chain[:-1]] * mass[:, None]).sum(axis=0)


def moments(tree, params, x, t_grid, gamma_list, tail_tol=1e-9):
    """Moment table for d_w(x, Y_t)^(beta gamma) with slope fits in log t.

    Two exponents are tabulated: "scaled" beta = (2+delta-s)/delta and
    "unscaled" beta' = 2+delta-s. For gamma = 1 the fit of E/(|log t|+1)
    is given next to the plain fit.
    """
    s, delta = params.s, params.delta
    if not 1.0 <= s < 2.0 + delta:
        raise ParamOutOfRange(f"needs 1 <= s < 2 + delta, got s={s!r}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(t_grid > 1):
        raise ParamOutOfRange("t_grid must lie in (0, 1]")
    x = int(x)
    mu = annotate_measure(tree)
    lam = annotate_lambda(tree, params)
    w = annotate_weight(tree, params.weight)
    D = int(tree.level[x])
    chain = tree.ancestors(D)[x - tree.offsets[D]]
    tails = np.array([tail_bound(tree, params, x, t) for t in t_grid])
    ok = tails < tail_tol
    stay = ondiag_from_chain(mu[chain], lam[chain], t_grid) * mu[x]
    logt = np.log(t_grid[ok])

    betas = {"scaled": (2.0 + delta - s) / delta, "unscaled": 2.0 + delta - s}
    table = {}
    for name, beta in betas.items():
        rows = {}
        for g in gamma_list:
            E = moment_values(tree, params, x, t_grid, beta * g)
            slope, icpt, resid = _fit(logt, np.log(E[ok]))
            row = {"E": E, "slope": slope, "intercept": icpt, "residual": resid,
                   "predicted_slope": predicted_moment_slope(g),
                   "within_cylinder_bound": w[x] ** (beta * g) * stay}
            if g == 1.0:
                lc = np.log(E[ok]) - np.log(np.abs(logt) + 1.0)
                row["log_corrected_slope"], _, row["log_corrected_residual"] = _fit(logt, lc)
            rows[float(g)] = row
        table[name] = {"beta": beta, "rows": rows}
    return {"t": t_grid, "tail_bound": tails, "fit_mask": ok, "x": x, "table": table}
