"""Command-line front end: validate, audit, heat, simulate, regress.

Exit codes: 0 ok, 1 audit failure, 2 invalid input.
"""

import argparse
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import io
from .bratteli import build_tree, derive_seed
from .errors import BudgetExceeded, KGraphError, ParamOutOfRange
from .heat import (
    asymp_band_stability,
    audit_asymp,
    audit_pbound,
    heat_closed,
    heat_eigen_matrix,
    heat_matrix,
    regress_exponent,
)
from .jump import SimConfig, ctmc_simulate, dirichlet_equivalence, jump_identity_residual, moments
from .kgraph import KGraphSpec, validate
from .measures import WeightParams, annotate_measure, diam_check, dw_matrix, vd_audit_dw
from .spectral import (
    CROSS_SEPARATE,
    CROSS_VIRTUAL_ROOT,
    SpectralParams,
    annotate_lambda,
    closed_form_spectrum,
    ds_matrix,
    lambda_rearranged,
    matrix_spectrum,
    vd_audit_ds,
)

EXIT_OK = 0
EXIT_AUDIT_FAILURE = 1
EXIT_INVALID = 2


class ConfigError(ValueError):
    reason = "ConfigError"


@dataclass
class RunConfig:
    graph: list
    delta: float
    s: list
    depth: int
    t_grid: list = field(default_factory=lambda: np.logspace(-3, 0, 30).tolist())
    gamma_list: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    seed: int = 0
    node_budget: int = 5_000_000
    sample_count: int = 100_000
    threads: int = 1
    cross: str = CROSS_SEPARATE
    heat_level: int = 4
    heat_x: int = 0
    sim_level: int = 3
    sim_times: list = field(default_factory=lambda: [0.05, 0.2])
    sim_x0: int = 0
    sim_log_paths: int = 1000

    def __post_init__(self):
        if not isinstance(self.delta, (int, float)) or not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not isinstance(self.depth, int) or self.depth < 2:
            raise ConfigError(f"depth must be an integer >= 2, got {self.depth!r}")
        if not self.s or any(not isinstance(v, (int, float)) or not v > 0 for v in self.s):
            raise ConfigError("s must be a positive number or a nonempty list of them")
        if any(not t > 0 for t in self.t_grid):
            raise ConfigError("t_grid entries must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.cross not in (CROSS_SEPARATE, CROSS_VIRTUAL_ROOT):
            raise ConfigError(f"unknown cross convention {self.cross!r}")
        self.heat_level = min(self.heat_level, self.depth)
        self.sim_level = min(self.sim_level, self.depth)

    def resolved(self):
        return asdict(self)


_FLOAT_LISTS = ("s", "t_grid", "gamma_list", "sim_times")


def parse_config(data):
    """Build a RunConfig from a parsed key-value tree."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    graph = data.pop("graph", None)
    if isinstance(graph, dict):
        graph = graph.get("matrices")
    if not isinstance(graph, list) or not graph:
        raise ConfigError("graph must be a nonempty list of integer matrices")
    budgets = data.pop("budgets", {}) or {}
    for src, dst in (("nodes", "node_budget"), ("samples", "sample_count")):
        if src in budgets:
            data[dst] = budgets[src]
    for block, prefix in (("heat", "heat_"), ("simulate", "sim_")):
        for key, val in (data.pop(block, {}) or {}).items():
            data[prefix + key] = val
    data.pop("out", None)
    if "s" in data and not isinstance(data["s"], list):
        data["s"] = [data["s"]]
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("delta",):
        if key in data and isinstance(data[key], int) and not isinstance(data[key], bool):
            data[key] = float(data[key])
    for key in _FLOAT_LISTS:
        if key in data:
            try:
                data[key] = [float(v) for v in data[key]]
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a list of numbers") from None
    missing = [k for k in ("delta", "s", "depth") if k not in data]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")
    try:
        return RunConfig(graph=graph, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable config: {exc}") from None
    return data


# audit helpers -------------------------------------------------------------

def _entry(name, hard, **kw):
    out = {"name": name, "hard": hard}
    out.update(kw)
    return out


def _skip(name, hard, reason, **kw):
    return _entry(name, hard, status="skipped", reason=reason, **kw)


def _run(name, hard, fn, **kw):
    """Run one audit; exceptions become a failed entry instead of aborting."""
    try:
        status, details = fn()
    except (ParamOutOfRange, ValueError, ArithmeticError) as exc:
        return _entry(name, hard, status="error", error=f"{type(exc).__name__}: {exc}", **kw)
    return _entry(name, hard, status=status, details=details, **kw)


def _status(ok):
    return "pass" if ok else "fail"


def _perron_checks(vk):
    kappa = vk.perron.kappa
    res = [float(np.max(np.abs(a.astype(float) @ kappa - r * kappa)) / r)
           for a, r in zip(vk.matrices, vk.perron.rho)]
    ksum = abs(math.fsum(kappa) - 1.0)
    ok = max(res) <= 1e-10 and ksum <= 1e-12
    return _status(ok), {"relative_residuals": res, "kappa_sum_error": ksum}


def _additivity(tree):
    mu = annotate_measure(tree)
    worst = 0.0
    for n in range(tree.depth):
        ids = tree.level_ids(n)
        sums = np.add.reduceat(mu[tree.level_ids(n + 1)], tree.child_start[ids] - tree.offsets[n + 1])
        worst = max(worst, float(np.max(np.abs(sums - mu[ids]) / mu[ids])))
    return _status(worst <= 1e-12), {"max_relative_error": worst}


def ultrametric_violations(D):
    """Count triples with D[i,k] > max(D[i,j], D[j,k])."""
    bad = 0
    for j in range(D.shape[0]):
        bad += int(np.count_nonzero(D > np.maximum(D[:, j][:, None], D[j, :][None, :])))
    return bad


def _ultrametric(matrix):
    bad = ultrametric_violations(matrix)
    return _status(bad == 0), {"violations": bad, "points": int(matrix.shape[0])}


def _spectrum(tree, params, m):
    eig, n_zero = matrix_spectrum(tree, params, m)
    ref = closed_form_spectrum(tree, params, m)
    nz = ref != 0
    err = float(np.max(np.abs(eig[nz] - ref[nz]) / np.abs(ref[nz]))) if nz.any() else 0.0
    ok = err <= 1e-8 and n_zero == tree.N and eig.size == ref.size
    return _status(ok), {"level": m, "size": int(eig.size), "zero_pivots": n_zero,
                         "max_relative_error": err}, eig, ref


def _ev_agreement(tree, params):
    lam = annotate_lambda(tree, params)
    lam2 = lambda_rearranged(tree, params)
    err = float(np.max(np.abs(lam - lam2) / np.abs(lam)))
    return _status(err <= 1e-10), {"max_relative_error": err}


def _dirichlet(tree, params, m):
    rep = [dirichlet_equivalence(tree, params, j) for j in range(1, m + 1)]
    jres = jump_identity_residual(tree, params)
    dev = max(r["max_relative_deviation"] for r in rep)
    return _status(dev <= 1e-9 and jres <= 1e-12), {"levels": rep, "jump_identity_residual": jres}


def _heat_consistency(tree, params, m, t_grid):
    mu = annotate_measure(tree)[tree.level_ids(m)]
    worst_eig = worst_stoch = worst_sym = 0.0
    for t in t_grid:
        P = heat_matrix(tree, params, t, m)
        E = heat_eigen_matrix(tree, params, t, m)
        worst_eig = max(worst_eig, float(np.max(np.abs(P - E) / np.maximum(np.abs(E), 1.0))))
        worst_stoch = max(worst_stoch, float(np.max(np.abs(P @ mu - 1.0))))
        worst_sym = max(worst_sym, float(np.max(np.abs(P - P.T))))
    ok = worst_eig <= 1e-8 and worst_stoch <= 1e-10 and worst_sym <= 1e-12
    return _status(ok), {"level": m, "closed_vs_eigen": worst_eig,
                         "stochasticity": worst_stoch, "symmetry": worst_sym}


def _moment_details(res):
    out = {"x": res["x"], "n_fit_points": int(np.count_nonzero(res["fit_mask"]))}
    for name, block in res["table"].items():
        rows = {}
        for g, row in block["rows"].items():
            keep = {k: v for k, v in row.items() if k not in ("E", "within_cylinder_bound")}
            keep["max_within_cylinder_bound"] = float(np.max(row["within_cylinder_bound"]))
            rows[format(g, "g")] = keep
        out[name] = {"beta": block["beta"], "rows": rows}
    return out


def _moment_rows(s, res):
    for name, block in res["table"].items():
        for g, row in block["rows"].items():
            for t, e, b in zip(res["t"], row["E"], row["within_cylinder_bound"]):
                yield (s, name, block["beta"], g, t, e, b)


# subcommands ---------------------------------------------------------------

def _graph(cfg):
    return validate(KGraphSpec(cfg.graph))


def cmd_validate(cfg):
    vk = _graph(cfg)
    report = {"command": "validate", "status": "ok", "k": vk.k, "N": vk.N,
              "perron": vk.perron.to_dict()}
    return EXIT_OK, report, {}


def cmd_audit(cfg):
    vk = _graph(cfg)
    tree = build_tree(vk, depth=cfg.depth, budget=cfg.node_budget)
    wp = WeightParams(cfg.delta)
    t_grid = np.asarray(cfg.t_grid, dtype=float)
    audits = []
    csvs = {}

    # measure and weight invariants
    audits.append(_run("perron_residuals", True, lambda: _perron_checks(vk)))
    audits.append(_run("measure_additivity", True, lambda: _additivity(tree)))
    audits.append(_run("weight_diameter", True, lambda: (
        lambda bad: (_status(not bad), {"violations": len(bad)}))(diam_check(tree, wp))))
    um_level = min(cfg.depth, 5)
    audits.append(_run("ultrametric_d_w", True, lambda: _ultrametric(dw_matrix(tree, wp, um_level)),
                       level=um_level))

    # volume doubling for d_w
    vd_rows = []
    audits.append(_run("volume_doubling_d_w", True, lambda: (
        lambda r: (_status(r.pass_), r.to_dict()))(vd_audit_dw(tree, wp, rows_out=vd_rows))))
    csvs["vd_dw.csv"] = (["center", "radius", "ratio"], vd_rows)

    spec_rows, mom_rows, ds_rows = [], [], []
    for s in cfg.s:
        p = SpectralParams(s=s, delta=cfg.delta)
        tag = {"s": s}
        below_two = s < 2.0
        divergent = s < 2.0 + cfg.delta
        if below_two:
            rows = []
            audits.append(_run("volume_doubling_d_s", True, lambda: (
                lambda r: (_status(r.pass_), r.to_dict()))(
                    vd_audit_ds(tree, p, cross=cfg.cross, rows_out=rows)), **tag))
            ds_rows.extend((s,) + r for r in rows)
            audits.append(_run("ultrametric_d_s", True, lambda: _ultrametric(
                ds_matrix(tree, p, um_level, cross=cfg.cross)), level=um_level, **tag))
        else:
            reason = "d_s needs s < 2"
            audits.append(_skip("volume_doubling_d_s", True, reason, **tag))
            audits.append(_skip("ultrametric_d_s", True, reason, **tag))

        m = min(cfg.depth, 5)

        def spectrum():
            status, det, eig, ref = _spectrum(tree, p, m)
            spec_rows.extend((s, i, a, b) for i, (a, b) in enumerate(zip(eig, ref)))
            return status, det
        audits.append(_run("spectrum_match", True, spectrum, **tag))
        audits.append(_run("eigenvalue_recurrences", True, lambda: _ev_agreement(tree, p), **tag))
        audits.append(_run("dirichlet_equivalence", True,
                           lambda: _dirichlet(tree, p, min(cfg.depth - 1, 4)), **tag))

        if divergent:
            audits.append(_run("heat_consistency", True, lambda: _heat_consistency(
                tree, p, min(cfg.depth, 4), t_grid), **tag))
        else:
            audits.append(_skip("heat_consistency", True, "needs s < 2 + delta", **tag))
        if below_two:
            audits.append(_run("heat_pointwise_bounds", True, lambda: (
                lambda r: (_status(r.pass_), r.to_dict()))(audit_pbound(tree, p, t_grid)), **tag))
            audits.append(_run("heat_asymp_band", True, lambda: (
                lambda r: (_status(r.pass_), r.to_dict()))(audit_asymp(tree, p, t_grid)), **tag))
            if cfg.depth >= 4:
                coarse = build_tree(vk, depth=cfg.depth - 2, budget=cfg.node_budget)
                audits.append(_run("heat_asymp_band_stability", False, lambda: (
                    "report", asymp_band_stability(coarse, tree, p, t_grid)), **tag))
        else:
            for name in ("heat_pointwise_bounds", "heat_asymp_band"):
                audits.append(_skip(name, True, "needs s < 2", **tag))
            audits.append(_skip("heat_asymp_band_stability", False, "needs s < 2", **tag))

        if 1.0 < s < 2.0 + cfg.delta:
            audits.append(_run("exponent_regression", False,
                               lambda: ("report", regress_exponent(tree, p)), **tag))
        else:
            audits.append(_skip("exponent_regression", False, "needs 1 < s < 2 + delta", **tag))
        mt = t_grid[t_grid <= 1.0]
        if 1.0 <= s < 2.0 + cfg.delta and mt.size >= 2:
            def moment_fit():
                res = moments(tree, p, int(tree.leaves()[0]), mt, cfg.gamma_list)
                mom_rows.extend(_moment_rows(s, res))
                return "report", _moment_details(res)
            audits.append(_run("moment_fits", False, moment_fit, **tag))
        else:
            audits.append(_skip("moment_fits", False,
                                "needs 1 <= s < 2 + delta and two times in (0, 1]", **tag))

    csvs["vd_ds.csv"] = (["s", "center", "radius", "ratio"], ds_rows)
    csvs["spectrum.csv"] = (["s", "index", "matrix_eigenvalue", "closed_form"], spec_rows)
    csvs["moments.csv"] = (["s", "beta_name", "beta", "gamma", "t", "moment", "within_cylinder_bound"],
                           mom_rows)
    failed = [a["name"] for a in audits if a["hard"] and a["status"] in ("fail", "error")]
    report = {
        "command": "audit",
        "status": "fail" if failed else "pass",
        "failed_hard": failed,
        "tree": {"k": tree.k, "N": tree.N, "depth": tree.depth,
                 "level_sizes": tree.level_sizes()},
        "perron": vk.perron.to_dict(),
        "audits": audits,
    }
    return (EXIT_AUDIT_FAILURE if failed else EXIT_OK), report, csvs


def cmd_heat(cfg):
    vk = _graph(cfg)
    tree = build_tree(vk, depth=cfg.depth, budget=cfg.node_budget)
    m = cfg.heat_level
    ids = tree.level_ids(m)
    x = int(ids[cfg.heat_x])
    rows, skipped = [], []
    for s in cfg.s:
        p = SpectralParams(s=s, delta=cfg.delta)
        if not s < 2.0 + cfg.delta:
            skipped.append({"s": s, "reason": "needs s < 2 + delta"})
            continue
        for t in cfg.t_grid:
            for y in ids:
                ev = heat_closed(tree, p, t, x, int(y), tail_tol=None)
                rows.append((s, t, x, int(y), ev.value, ev.tail_bound))
    report = {"command": "heat", "status": "ok", "level": m, "x": x, "n_rows": len(rows),
              "skipped": skipped}
    return EXIT_OK, report, {"heat.csv": (["s", "t", "x", "y", "p", "tail_bound"], rows)}


def terminal_check(tree, params, x0_local, t, counts, m):
    """z-scores of terminal counts against p(t, x0, .) mu[.] from the eigen-expansion."""
    mu = annotate_measure(tree)[tree.level_ids(m)]
    prob = heat_eigen_matrix(tree, params, t, m)[x0_local] * mu
    n = counts.sum()
    sd = np.sqrt(n * prob * (1.0 - prob))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (counts - n * prob) / sd, np.where(counts == n * prob, 0.0, np.inf))
    return prob, z


def cmd_simulate(cfg):
    vk = _graph(cfg)
    tree = build_tree(vk, depth=cfg.depth, budget=cfg.node_budget)
    m = cfg.sim_level
    ids = tree.level_ids(m)
    x0 = int(ids[cfg.sim_x0])
    ev_rows, term_rows, runs = [], [], []
    ok = True
    for i, s in enumerate(cfg.s):
        p = SpectralParams(s=s, delta=cfg.delta)
        if not s < 2.0 + cfg.delta:
            runs.append({"s": s, "status": "skipped", "reason": "needs s < 2 + delta"})
            continue
        for j, t in enumerate(cfg.sim_times):
            seed = derive_seed(cfg.seed, i * 1000 + j)
            res = ctmc_simulate(tree, p, SimConfig(x0=x0, horizon=t, n_paths=cfg.sample_count,
                                                   seed=seed, level=m))
            counts = res.terminal_counts(ids.size)
            prob, z = terminal_check(tree, p, cfg.sim_x0, t, counts, m)
            zmax = float(np.max(np.abs(z)))
            ok &= zmax <= 4.0
            runs.append({"s": s, "t": t, "seed": seed, "n_paths": cfg.sample_count,
                         "max_abs_z": zmax, "pass": zmax <= 4.0,
                         "zero_jump_fraction": float(np.mean(res.n_jumps == 0))})
            term_rows.extend((s, t, int(ids[a]), int(c), float(q), float(zz))
                             for a, (c, q, zz) in enumerate(zip(counts, prob, z)))
            keep = res.events["path"] < cfg.sim_log_paths
            ev_rows.extend((s, t, int(a), float(b), int(ids[c]), int(ids[d])) for a, b, c, d in zip(
                res.events["path"][keep], res.events["time"][keep],
                res.events["from"][keep], res.events["to"][keep]))
    report = {"command": "simulate", "status": "pass" if ok else "fail", "level": m, "x0": x0,
              "logged_paths": cfg.sim_log_paths, "runs": runs}
    csvs = {
        "trajectories.csv": (["s", "horizon", "path", "time", "from", "to"], ev_rows),
        "terminal.csv": (["s", "horizon", "state", "count", "probability", "z"], term_rows),
    }
    return (EXIT_OK if ok else EXIT_AUDIT_FAILURE), report, csvs


def cmd_regress(cfg):
    vk = _graph(cfg)
    tree = build_tree(vk, depth=cfg.depth, budget=cfg.node_budget)
    results, mom_rows = [], []
    mt = np.asarray([t for t in cfg.t_grid if t <= 1.0])
    for s in cfg.s:
        p = SpectralParams(s=s, delta=cfg.delta)
        entry = {"s": s}
        if 1.0 < s < 2.0 + cfg.delta:
            entry["regression"] = regress_exponent(tree, p)
        else:
            entry["regression"] = {"status": "skipped", "reason": "needs 1 < s < 2 + delta"}
        if 1.0 <= s < 2.0 + cfg.delta and mt.size >= 2:
            res = moments(tree, p, int(tree.leaves()[0]), mt, cfg.gamma_list)
            entry["moments"] = _moment_details(res)
            mom_rows.extend(_moment_rows(s, res))
        else:
            entry["moments"] = {"status": "skipped",
                                "reason": "needs 1 <= s < 2 + delta and two times in (0, 1]"}
        results.append(entry)
    report = {"command": "regress", "status": "ok", "results": results}
    csvs = {"moments.csv": (["s", "beta_name", "beta", "gamma", "t", "moment",
                             "within_cylinder_bound"], mom_rows)}
    return EXIT_OK, report, csvs


COMMANDS = {
    "validate": cmd_validate,
    "audit": cmd_audit,
    "heat": cmd_heat,
    "simulate": cmd_simulate,
    "regress": cmd_regress,
}


def write_bundle(out, report, resolved, csvs):
    os.makedirs(out, exist_ok=True)
    io.write_json(os.path.join(out, "report.json"), report)
    io.write_json(os.path.join(out, "resolved_config.json"), resolved)
    for name, (header, rows) in csvs.items():
        io.write_csv(os.path.join(out, name), header, rows)


def run(command, config, out=None, seed=None, threads=None):
    """Execute a subcommand on a parsed config mapping; returns (exit code, report)."""
    try:
        data = dict(config) if isinstance(config, dict) else config
        if isinstance(data, dict):
            if seed is not None:
                data["seed"] = seed
            if threads is not None:
                data["threads"] = threads
        cfg = parse_config(data)
    except ConfigError as exc:
        return EXIT_INVALID, {"command": command, "status": "invalid", "reason": exc.reason,
                              "message": str(exc)}
    try:
        code, report, csvs = COMMANDS[command](cfg)
    except KGraphError as exc:
        report = {"command": command, "status": "invalid"}
        report.update(exc.to_dict())
        code, csvs = EXIT_INVALID, {}
    except (BudgetExceeded, ParamOutOfRange) as exc:
        code, csvs = EXIT_INVALID, {}
        report = {"command": command, "status": "invalid", "reason": type(exc).__name__,
                  "message": str(exc)}
    if out is not None:
        write_bundle(out, report, cfg.resolved(), csvs)
    return code, report


def build_parser():
    parser = argparse.ArgumentParser(prog="kbratteli", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML or JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: from config)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config)
    except (OSError, ConfigError) as exc:
        sys.stdout.write(io.dumps({"command": args.command, "status": "invalid",
                                   "reason": "ConfigError", "message": str(exc)}))
        return EXIT_INVALID
    out = args.out
    if out is None and isinstance(data, dict):
        out = data.get("out")
    code, report = run(args.command, data, out=out, seed=args.seed, threads=args.threads)
    summary = {k: report[k] for k in ("command", "status") if k in report}
    for key in ("reason", "message", "failed_hard", "perron"):
        if key in report:
            summary[key] = report[key]
    sys.stdout.write(io.dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
