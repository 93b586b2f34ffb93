"""Experiment configuration: JSON files, bundled presets, overrides and validation."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np

from ..da import DaConfig
from ..exchange import ExchangeConfig
from ..models import ModelError, Prior
from ..pmcmc import PmcmcConfig, particles_for_budget
from ..smc import ResamplePolicy


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


ALGORITHMS = ("da", "empmcmc", "marginal", "is_pseudo", "abc_smc", "exchange")

# allowed keys per section, with defaults
SCHEMA = {
    "name": None,
    "description": "",
    "algorithm": None,
    "seed": 0,
    "workers": 1,
    "model": {"kind": None, "rows": None, "cols": None, "node_count": None, "latent": True,
              "two_star": "standard"},
    "data": {"source": None, "theta": None, "sweeps": 1000, "seed": 0, "path": None},
    "prior": None,
    "init": {"theta": None, "x": "y"},
    "chain": {"n_burn": 500, "n_keep": 4500},
    "exchange": {"M": 1000, "K": 0, "s": 1.0, "u_init": "y"},
    "smc": {"sequence": "hot_coupling", "T": None, "P": None, "L_budget": None, "ess_fraction": 0.5, "N": 10000},
    "da": {"L": 1000},
    "abc": {"P": 10000, "eps1": 20.0, "alive_fraction": 0.7, "adapt_cov": False, "proposal_var": 0.1,
            "M_sim": 1000, "final_moves": 0, "sim_start": "y", "max_iter": 200, "expected_iterations": None},
    "oracle": {"methods": ["empmcmc", "da", "abc_smc"], "bins": 30, "lo": 0.0, "hi": 3.0, "refine": 5,
               "tolerance": 0.05},
    "paper_scale": {},
}


def preset_names() -> list[str]:
    d = resources.files("mrfbayes.xprun").joinpath("presets")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def load_raw(path_or_name: str) -> dict:
    """Read a config file, or a bundled preset when no such file exists."""
    p = Path(path_or_name)
    try:
        if p.is_file():
            return json.loads(p.read_text())
        name = p.name[:-5] if p.name.endswith(".json") else p.name
        if name in preset_names():
            return json.loads(resources.files("mrfbayes.xprun").joinpath("presets", name + ".json").read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path_or_name}: invalid JSON ({exc})") from exc
    raise ConfigError(f"no config file or preset named {path_or_name!r} (presets: {', '.join(preset_names())})")


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown key {where}{k!r}")
        if isinstance(base[k], dict) and k != "paper_scale":
            if not isinstance(v, dict):
                raise ConfigError(f"{where}{k} must be an object")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_set(raw: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override (value parsed as JSON when possible)."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, val = assignment.split("=", 1)
    parts = key.strip().split(".")
    out = copy.deepcopy(raw)
    node, schema = out, SCHEMA
    for p in parts[:-1]:
        if not isinstance(schema, dict) or p not in schema or not isinstance(schema[p], dict):
            raise ConfigError(f"unknown config section {p!r} in --set {key}")
        schema = schema[p]
        node = node.setdefault(p, {})
    if parts[-1] not in schema:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(val)
    return out


def resolve(raw: dict, paper_scale: bool = False, seed: int | None = None, sets=()) -> dict:
    """Fill defaults, apply the paper-scale block and overrides, then validate."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for s in sets:
        raw = apply_set(raw, s)
    cfg = _merge(SCHEMA, raw, "")
    if paper_scale:
        cfg = _merge(cfg, {k: v for k, v in cfg["paper_scale"].items()}, "paper_scale.")
    cfg["paper_scale_applied"] = bool(paper_scale)
    if seed is not None:
        cfg["seed"] = int(seed)
    validate(cfg)
    return cfg


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> None:
    _need(cfg["algorithm"] in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}")
    _need(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed must be a non-negative integer")
    _need(isinstance(cfg["workers"], int) and cfg["workers"] >= 1, "workers must be >= 1")
    m = cfg["model"]
    _need(m["kind"] in ("ising", "ergm"), "model.kind must be 'ising' or 'ergm'")
    if m["kind"] == "ising":
        _need(isinstance(m["rows"], int) and isinstance(m["cols"], int) and m["rows"] >= 1 and m["cols"] >= 1,
              "ising model needs positive integer rows and cols")
    else:
        src = cfg["data"]["source"]
        _need(src == "florentine" or (isinstance(m["node_count"], int) and m["node_count"] >= 2),
              "ergm model needs node_count >= 2")
        _need(m["two_star"] in ("standard", "literal"), "model.two_star must be 'standard' or 'literal'")
    d = cfg["data"]
    _need(d["source"] in ("simulate", "file", "florentine"), "data.source must be simulate, file or florentine")
    if d["source"] == "simulate":
        _need(isinstance(d["theta"], list) and all(isinstance(t, (int, float)) for t in d["theta"]),
              "data.theta must be a list of numbers")
        _need(isinstance(d["sweeps"], int) and d["sweeps"] >= 1, "data.sweeps must be >= 1")
    if d["source"] == "file":
        _need(isinstance(d["path"], str), "data.path is required for file data")
    if d["source"] == "florentine":
        _need(m["kind"] == "ergm", "florentine data needs an ergm model")
    _need(isinstance(cfg["prior"], list) and cfg["prior"], "prior must be a non-empty list")
    try:
        prior = Prior(cfg["prior"])
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"prior: {exc}") from exc
    n_theta = (1 if m["kind"] == "ising" else 2) + (1 if m["latent"] else 0)
    _need(prior.dim == n_theta, f"prior has {prior.dim} components, model needs {n_theta}")
    if d["source"] == "simulate":
        _need(len(d["theta"]) == n_theta, f"data.theta needs {n_theta} entries")
    init = cfg["init"]["theta"]
    if cfg["algorithm"] != "abc_smc":
        _need(isinstance(init, list) and len(init) == n_theta, f"init.theta needs {n_theta} entries")
        _need(np.isfinite(prior.logpdf(np.asarray(init, float))), "init.theta lies outside the prior support")
    _need(cfg["init"]["x"] in ("y", "ones", "zeros"), "init.x must be y, ones or zeros")
    c = cfg["chain"]
    _need(all(isinstance(c[k], int) and c[k] >= 0 for k in ("n_burn", "n_keep")), "chain counts must be >= 0")
    if cfg["algorithm"] in ("da", "empmcmc", "marginal", "is_pseudo", "exchange"):
        build_exchange(cfg)
    if cfg["algorithm"] in ("empmcmc", "marginal", "is_pseudo"):
        build_pmcmc(cfg, None)
    if cfg["algorithm"] == "da":
        build_da(cfg)
    if cfg["algorithm"] == "abc_smc":
        a = cfg["abc"]
        _need(isinstance(a["P"], int) and a["P"] >= 1, "abc.P must be >= 1")
        _need(0 < a["alive_fraction"] < 1, "abc.alive_fraction must lie in (0, 1)")
        _need(isinstance(a["M_sim"], int) and a["M_sim"] >= 1, "abc.M_sim must be >= 1")
        _need(a["sim_start"] in ("y", "random"), "abc.sim_start must be y or random")
        _need(float(a["eps1"]) > 0, "abc.eps1 must be > 0")


def build_exchange(cfg) -> ExchangeConfig:
    e = cfg["exchange"]
    s = tuple(e["s"]) if isinstance(e["s"], list) else e["s"]
    try:
        return ExchangeConfig(M=int(e["M"]), K=int(e["K"]), s=s, u_init=e["u_init"])
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"exchange: {exc}") from exc


def n_targets(cfg, model_pairs: int | None = None, n_vars: int | None = None) -> int:
    s = cfg["smc"]
    if s["sequence"] == "tempering":
        return int(s["T"])
    return model_pairs - n_vars + 2


def build_pmcmc(cfg, model) -> PmcmcConfig:
    s = cfg["smc"]
    try:
        if s["sequence"] == "tempering" and not (isinstance(s["T"], int) and s["T"] >= 2):
            raise ConfigError("smc.T must be an integer >= 2 for tempering")
        P = s["P"]
        if P is None and cfg["algorithm"] == "is_pseudo":
            P = 1
        if P is None:
            if s["L_budget"] is None:
                raise ConfigError("set smc.P or smc.L_budget")
            if model is None:
                P = 1
            else:
                P = particles_for_budget(int(s["L_budget"]), n_targets(cfg, len(model.mrf.pairs), model.n_vars))
        return PmcmcConfig(P=int(P), sequence=s["sequence"], T=int(s["T"] or 2), exchange=build_exchange(cfg),
                           estimator="importance" if cfg["algorithm"] == "is_pseudo" else "smc",
                           N=int(s["N"]), policy=ResamplePolicy("ess_threshold", float(s["ess_fraction"])))
    except (ModelError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"smc: {exc}") from exc


def build_da(cfg) -> DaConfig:
    try:
        return DaConfig(L=int(cfg["da"]["L"]), exchange=build_exchange(cfg))
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"da: {exc}") from exc


def dump(cfg: dict) -> str:
    """Canonical JSON text of a resolved config (round-trips through ``resolve``)."""
    out = {k: v for k, v in cfg.items() if k != "paper_scale_applied"}
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
