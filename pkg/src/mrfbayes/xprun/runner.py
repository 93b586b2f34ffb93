"""End-to-end experiment execution, artifact writing, sweep audit and the oracle harness."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..abc import abc_smc_run
from ..gibbs import count_sweeps, set_workers
from ..models import Dataset, ErgmModel, IsingModel, ModelError, Prior, load_dataset, simulate_dataset
from ..pmcmc import run_chain
from .config import ConfigError, build_da, build_exchange, build_pmcmc, dump
from .data import load_florentine
from .svg import emit_scatter_svg, emit_trace_svg

log = logging.getLogger(__name__)

CHAIN_KINDS = ("da", "empmcmc", "marginal", "is_pseudo", "exchange")


@dataclass
class RunReport:
    name: str
    algorithm: str
    seed: int
    wall_time_s: float
    sweeps: int
    expected_sweeps: int
    audit_pass: bool
    analytic_sweeps: int | None
    acceptance_rate: float
    iterations: int
    n_in_support: int = 0
    stats: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    # posterior draws (one row per kept iteration or final particle); not serialised
    samples: np.ndarray | None = None

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "samples"}
        return json.loads(json.dumps(d, default=float))


def build_model(cfg):
    m = cfg["model"]
    if m["kind"] == "ising":
        return IsingModel(m["rows"], m["cols"], latent=m["latent"])
    n = 16 if cfg["data"]["source"] == "florentine" else m["node_count"]
    return ErgmModel(n, latent=m["latent"], two_star=m["two_star"])


def build_dataset(cfg) -> Dataset:
    d = cfg["data"]
    try:
        if d["source"] == "florentine":
            return load_florentine(latent=cfg["model"]["latent"], two_star=cfg["model"]["two_star"])
        if d["source"] == "file":
            ds = load_dataset(d["path"])
            if ds.model.describe() != build_model(cfg).describe():
                raise ConfigError(f"dataset {d['path']} does not match the configured model")
            return ds
        return simulate_dataset(d["theta"], build_model(cfg), d["sweeps"], np.random.default_rng(d["seed"]))
    except ModelError as exc:
        raise ConfigError(f"data: {exc}") from exc


def initial_x(cfg, model, y):
    how = cfg["init"]["x"]
    if how == "y":
        return np.array(y, dtype=np.int8)
    lo, hi = model.mrf.values
    return np.full(model.n_vars, hi if how == "ones" else lo, dtype=np.int8)


def _iters(cfg) -> int:
    return cfg["chain"]["n_burn"] + cfg["chain"]["n_keep"]


def expected_sweeps(cfg, model, iterations: int, n_in_support: int, sims: int = 0) -> int:
    """Sweep total implied by the config and the run's realised counts.

    Proposals outside the prior support are rejected before any simulation,
    so only in-support proposals pay for the auxiliary route or an estimate.
    """
    alg = cfg["algorithm"]
    if alg == "abc_smc":
        return sims * cfg["abc"]["M_sim"]
    aux = build_exchange(cfg).sweeps_per_proposal
    if alg == "da":
        return iterations * build_da(cfg).L + n_in_support * aux
    if alg in ("exchange", "is_pseudo"):
        return n_in_support * aux
    smc = build_pmcmc(cfg, model).sweeps_per_estimate(model)
    if alg == "marginal":
        return (n_in_support + 1) * smc
    return (n_in_support + 1) * smc + n_in_support * aux


def analytic_sweeps(cfg, model) -> int | None:
    """Budget formula assuming every proposal lands in the support (ABC: expected iteration count)."""
    if cfg["algorithm"] == "abc_smc":
        a = cfg["abc"]
        n = a["expected_iterations"]
        return None if n is None else int(n) * a["P"] * a["M_sim"]
    it = _iters(cfg)
    return expected_sweeps(cfg, model, it, it)


def sweep_audit(report: RunReport, cfg) -> tuple[bool, str]:
    ok = report.sweeps == report.expected_sweeps
    msg = f"counted {report.sweeps} sweeps, expected {report.expected_sweeps}"
    return ok, ("ok: " if ok else "MISMATCH: ") + msg


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, names) -> None:
    files = [{"path": n, "sha256": _sha256(out / n), "bytes": (out / n).stat().st_size} for n in names]
    (out / "manifest.json").write_text(json.dumps({"files": files}, indent=2) + "\n")


def run_experiment(cfg, out_dir) -> RunReport:
    """Run the configured pipeline and write its artifacts into ``out_dir``."""
    t0 = time.perf_counter()
    set_workers(cfg["workers"])
    ds = build_dataset(cfg)
    model, y = ds.model, ds.y
    prior = Prior(cfg["prior"])
    rng = np.random.default_rng(cfg["seed"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    alg = cfg["algorithm"]
    stats = {"observed_summary": model.summary(y).tolist(), "theta_names": list(model.theta_names)}
    if ds.truth_theta is not None:
        stats["truth_theta"] = ds.truth_theta.tolist()

    with count_sweeps() as counter:
        if alg == "abc_smc":
            a = cfg["abc"]
            res = abc_smc_run(y, model, prior, rng, P=a["P"], eps1=float(a["eps1"]),
                              alive_fraction=a["alive_fraction"], adapt_cov=a["adapt_cov"],
                              proposal_var=a["proposal_var"], M_sim=a["M_sim"], max_iter=a["max_iter"],
                              final_moves=a["final_moves"], sim_start=a["sim_start"])
        else:
            if alg == "da":
                config = build_da(cfg)
            elif alg == "exchange":
                config = build_exchange(cfg)
            else:
                config = build_pmcmc(cfg, model)
            x0 = initial_x(cfg, model, y) if alg == "da" else None
            trace = run_chain(alg, cfg["init"]["theta"], y, config, cfg["chain"]["n_burn"],
                              cfg["chain"]["n_keep"], rng, model, prior, x0)

    if alg == "abc_smc":
        fin = res.final
        samples = fin.theta
        res.write_population(out / "trace.csv")
        res.write_iterations(out / "abc_iterations.csv")
        files += ["trace.csv", "abc_iterations.csv"]
        rates = [p.acceptance_rate for p in res.history if np.isfinite(p.acceptance_rate)]
        iterations, n_in, acc = res.n_iterations, 0, float(rates[-1]) if rates else float("nan")
        expected = expected_sweeps(cfg, model, iterations, 0, res.sims)
        stats.update(final_epsilon=fin.epsilon, simulations=res.sims,
                     epsilons=[p.epsilon for p in res.history],
                     fallback_iterations=[p.n for p in res.history if p.fallback],
                     distinct_final_particles=int(len(np.unique(fin.theta, axis=0))))
    else:
        samples = trace.theta
        trace.to_csv(out / "trace.csv")
        files.append("trace.csv")
        iterations, n_in, acc = _iters(cfg), trace.n_in_support, trace.acceptance_rate
        expected = expected_sweeps(cfg, model, iterations, n_in)
        stats.update(estimator_failures=trace.failures, s1_x_min=float(np.min(trace.s1_x)) if len(trace) else None,
                     s1_x_max=float(np.max(trace.s1_x)) if len(trace) else None)
        if alg in ("empmcmc", "marginal", "is_pseudo"):
            c = build_pmcmc(cfg, model)
            stats.update(P=c.P, targets=c.n_targets(model), K=c.exchange.K, M=c.exchange.M)
        if model.latent and len(trace):
            emit_trace_svg(trace.s1_x, "S1(x)", out / "trace_s1.svg")
            files.append("trace_s1.svg")
    if len(samples):
        stats["posterior_mean"] = samples.mean(axis=0).tolist()
        stats["posterior_sd"] = samples.std(axis=0, ddof=1).tolist() if len(samples) > 1 else None
        emit_scatter_svg(samples[:, :2], model.theta_names[:2], out / "posterior.svg")
        files.append("posterior.svg")
    (out / "config.json").write_text(dump(cfg))
    files.append("config.json")

    report = RunReport(cfg["name"] or "", alg, cfg["seed"], 0.0, counter.total, expected,
                       counter.total == expected, analytic_sweeps(cfg, model), acc, iterations, n_in,
                       stats, files + ["report.json"], samples)
    report.wall_time_s = time.perf_counter() - t0
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n")
    write_manifest(out, files + ["report.json"])
    return report


def run_oracle(cfg, out_dir) -> dict:
    """Run each configured method on a tiny model and compare its theta marginals with enumeration."""
    from ..oracle import MAX_VARS, binned_posterior, marginal_tv

    ds = build_dataset(cfg)
    if ds.model.n_vars > MAX_VARS:
        raise ConfigError(f"oracle harness needs at most {MAX_VARS} latent variables")
    o = cfg["oracle"]
    prior = Prior(cfg["prior"])
    edges = [np.linspace(o["lo"], o["hi"], o["bins"] + 1)] * ds.model.n_theta
    mass = binned_posterior(ds.y, ds.model, prior, edges, o["refine"])
    out = Path(out_dir)
    rows = []
    for method in o["methods"]:
        sub = copy.deepcopy(cfg)
        sub["algorithm"] = method
        rep = run_experiment(sub, out / method)
        tv = marginal_tv(rep.samples, None, mass, edges)
        rows.append({"method": method, "tv": tv, "n_samples": int(len(rep.samples)),
                     "pass": bool(max(tv) <= o["tolerance"]), "wall_time_s": rep.wall_time_s})
    table = {"tolerance": o["tolerance"], "bins": o["bins"], "theta_names": list(ds.model.theta_names),
             "rows": rows}
    (out / "oracle.json").write_text(json.dumps(table, indent=2) + "\n")
    return table


def format_oracle_table(table) -> str:
    names = table["theta_names"]
    head = f"{'method':<10}" + "".join(f"{'TV ' + n:>14}" for n in names) + f"{'samples':>10}  result"
    lines = [head]
    for r in table["rows"]:
        lines.append(f"{r['method']:<10}" + "".join(f"{v:>14.4f}" for v in r["tv"])
                     + f"{r['n_samples']:>10}  {'PASS' if r['pass'] else 'FAIL'}")
    return "\n".join(lines)
