"""Command-line front end: ``epifilter generate|calibrate|smooth|forecast``.

Every command reads a YAML run configuration (see ``docs/formats.md``) and
writes its outputs into the configured output directory. Exit status is 0 on
success, 1 for invalid configuration or data and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, EpiFilterError, NumericalError, WorkflowError
from .filtering import InitialBeliefConfig, initial_belief, run_filter
from .forecast import forecast, forecast_ensemble
from .inference import PriorSpec, calibrate, posterior_summary, tmcmc
from .io import (
    ingest,
    read_json,
    read_posterior_samples,
    write_dataset,
    write_forecast,
    write_json,
    write_posterior_samples,
    write_states,
    write_truth,
)
from .model import DEFAULT_DT, DEFAULT_GAMMA, DEFAULT_Q_EPS, SAMPLED_PARAMS, StaticParams
from .synthgen import ScenarioConfig, generate

log = logging.getLogger("epifilter")

DEFAULT_POPULATION = 14_734_000
TMCMC_KEYS = ("n_samples", "cov_target", "proposal_scale", "n_mh_steps", "max_stages")
TOP_KEYS = (
    "seed", "out", "population", "dt", "gamma", "q_eps", "scenario", "data", "priors",
    "fixed", "tmcmc", "initial_belief", "params", "posterior", "forecast",
)


@dataclass
class RunConfig:
    """Parsed run configuration; relative paths are resolved against the config file."""

    seed: int = 0
    out: Path = Path("results")
    population: float = DEFAULT_POPULATION
    dt: float = DEFAULT_DT
    gamma: float = DEFAULT_GAMMA
    q_eps: float = DEFAULT_Q_EPS
    scenario: dict = field(default_factory=dict)
    data: Path | None = None
    priors: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    tmcmc: dict = field(default_factory=dict)
    initial_belief: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    posterior: Path | None = None
    forecast: dict = field(default_factory=dict)

    @property
    def data_path(self) -> Path:
        return self.data if self.data is not None else self.out / "data.csv"

    @property
    def summary_path(self) -> Path:
        return self.posterior if self.posterior is not None else self.out / "summary.json"

    def base_params(self, values: dict | None = None) -> StaticParams:
        values = dict(values or {})
        unknown = set(values) - set(SAMPLED_PARAMS)
        if unknown:
            raise ConfigError(f"unknown parameter(s) {sorted(unknown)}; expected {list(SAMPLED_PARAMS)}")
        full = {"rho": 0.5, "q_xi": 0.5, "beta0_mean": 0.5, "i0_mean": 0.5, **values}
        return StaticParams(**full, gamma=self.gamma, q_eps=self.q_eps, dt=self.dt)

    def init_cfg(self) -> InitialBeliefConfig:
        try:
            return InitialBeliefConfig(**self.initial_belief)
        except TypeError as exc:
            raise ConfigError(f"initial_belief: {exc}") from None

    def prior(self) -> PriorSpec:
        if not self.priors:
            return PriorSpec.default()
        unknown = set(self.priors) - set(SAMPLED_PARAMS)
        if unknown:
            raise ConfigError(f"priors: unknown parameter(s) {sorted(unknown)}")
        spec = {n: self.priors.get(n, {"dist": "uniform", "low": 0.0, "high": 1.0}) for n in SAMPLED_PARAMS}
        return PriorSpec.from_config(spec)

    def scenario_config(self) -> ScenarioConfig:
        values = dict(self.scenario)
        if "start_date" in values and isinstance(values["start_date"], str):
            try:
                values["start_date"] = datetime.date.fromisoformat(values["start_date"])
            except ValueError:
                raise ConfigError(f"scenario.start_date: bad date {values['start_date']!r}") from None
        known = {f.name for f in dataclasses.fields(ScenarioConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"scenario: unknown key(s) {sorted(unknown)}")
        values.setdefault("gamma", self.gamma)
        values.setdefault("dt", self.dt)
        values["seed"] = self.seed
        return ScenarioConfig(**values)


def load_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    for key in ("scenario", "priors", "fixed", "tmcmc", "initial_belief", "params", "forecast"):
        if not isinstance(raw.get(key, {}), dict):
            raise ConfigError(f"{key}: expected a mapping")
    bad_tmcmc = set(raw.get("tmcmc", {})) - set(TMCMC_KEYS)
    if bad_tmcmc:
        raise ConfigError(f"tmcmc: unknown key(s) {sorted(bad_tmcmc)}")

    root = path.parent
    cfg = RunConfig(**{k: v for k, v in raw.items() if k not in ("out", "data", "posterior")})
    cfg.out = root / raw.get("out", "results")
    if raw.get("data") is not None:
        cfg.data = root / raw["data"]
    if raw.get("posterior") is not None:
        cfg.posterior = root / raw["posterior"]
        if not cfg.posterior.is_file():
            raise ConfigError(f"posterior: {cfg.posterior} does not exist")
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = Path(out)
    if not (isinstance(cfg.population, (int, float)) and cfg.population > 0):
        raise ConfigError(f"population must be positive, got {cfg.population!r}")
    if not (isinstance(cfg.seed, int) and cfg.seed >= 0):
        raise ConfigError(f"seed must be a non-negative integer, got {cfg.seed!r}")
    return cfg


def _load_data(cfg: RunConfig):
    if not cfg.data_path.is_file():
        raise ConfigError(f"data: {cfg.data_path} does not exist")
    return ingest(cfg.data_path, cfg.population)


def _chosen_params(cfg: RunConfig, use_map: bool) -> StaticParams:
    if use_map:
        if not cfg.summary_path.is_file():
            raise WorkflowError(f"--map requested but {cfg.summary_path} does not exist; run calibrate first")
        summary = read_json(cfg.summary_path)
        values = {n: v["map"] for n, v in summary["parameters"].items()}
        values.update(summary.get("fixed", {}))
        return cfg.base_params(values)
    missing = [n for n in SAMPLED_PARAMS if n not in cfg.params]
    if missing:
        raise WorkflowError(f"params: missing {missing}; give all parameters or pass --map")
    return cfg.base_params(cfg.params)


def cmd_generate(cfg: RunConfig, args) -> list[Path]:
    scen = cfg.scenario_config()
    truth = generate(scen)
    meta = {
        "scenario": scen.to_dict(),
        "seed": cfg.seed,
        "population": cfg.population,
        "n_clipped": truth.n_clipped,
        "true_params": {
            "rho": scen.rho_true,
            "q_xi": scen.q_xi_true if scen.kind == "random_walk" else 0.0,
            "beta0_mean": float(truth.states[0, 3]),
            "i0_mean": scen.i0,
        },
        "version": __version__,
    }
    return [
        write_dataset(cfg.out / "data.csv", truth.observations, cfg.population),
        write_truth(cfg.out / "truth.csv", truth),
        write_json(cfg.out / "meta.json", meta),
    ]


def cmd_calibrate(cfg: RunConfig, args) -> list[Path]:
    obs = _load_data(cfg)
    base = cfg.base_params(cfg.fixed)
    tmcmc_kw = dict(cfg.tmcmc)
    n_samples = tmcmc_kw.pop("n_samples", 2000)
    prior = cfg.prior()
    if args.prior_only:
        prior = prior.subset([n for n in prior.names if n not in cfg.fixed])
        ens = tmcmc(prior, lambda theta: np.zeros(len(theta)), n_samples=n_samples, seed=cfg.seed, **tmcmc_kw)
    else:
        ens, _ = calibrate(
            obs, base, prior, n_samples=n_samples, seed=cfg.seed, fixed=cfg.fixed,
            init_cfg=cfg.init_cfg(), **tmcmc_kw,
        )
    summary = posterior_summary(ens).to_dict()
    summary["fixed"] = {k: float(v) for k, v in cfg.fixed.items()}
    summary["prior_only"] = bool(args.prior_only)
    summary["n_observations"] = len(obs)
    return [
        write_posterior_samples(cfg.out / "posterior_samples.csv", ens),
        write_json(cfg.out / "summary.json", summary),
    ]


def cmd_smooth(cfg: RunConfig, args) -> list[Path]:
    obs = _load_data(cfg)
    p = _chosen_params(cfg, args.map)
    run = run_filter(p, obs, initial_belief(p, cfg.init_cfg()))
    log.info("log-likelihood at chosen parameters: %.6f", run.loglik)
    return [write_states(cfg.out / "states.csv", run, p.gamma, obs.start_date)]


def cmd_forecast(cfg: RunConfig, args) -> list[Path]:
    obs = _load_data(cfg)
    horizon = args.horizon if args.horizon is not None else cfg.forecast.get("horizon", 21)
    members = int(cfg.forecast.get("ensemble", 0))
    init_cfg = cfg.init_cfg()
    if members > 0:
        sample_path = cfg.summary_path.with_name("posterior_samples.csv")
        if not sample_path.is_file():
            raise WorkflowError(f"forecast.ensemble needs {sample_path}; run calibrate first")
        names, samples, _ = read_posterior_samples(sample_path)
        pick = np.linspace(0, len(samples) - 1, min(members, len(samples))).round().astype(int)
        fixed = read_json(cfg.summary_path).get("fixed", {}) if cfg.summary_path.is_file() else cfg.fixed
        pairs = []
        for row in samples[pick]:
            p = cfg.base_params({**fixed, **dict(zip(names, row))})
            pairs.append((run_filter(p, obs, initial_belief(p, init_cfg)).final_belief, p))
        result = forecast_ensemble(pairs, horizon)
    else:
        p = _chosen_params(cfg, args.map)
        run = run_filter(p, obs, initial_belief(p, init_cfg))
        result = forecast(run.final_belief, p, horizon)
    return [write_forecast(cfg.out / "forecast.csv", result, obs.start_date)]


COMMANDS = {
    "generate": cmd_generate,
    "calibrate": cmd_calibrate,
    "smooth": cmd_smooth,
    "forecast": cmd_forecast,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epifilter",
        description="SIR state and parameter estimation with an EKF inside TMCMC.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--map", action="store_true", help="use the MAP parameters from summary.json")
    parser.add_argument("--prior-only", action="store_true", help="calibrate with a flat likelihood")
    parser.add_argument("--horizon", type=int, default=None, help="forecast horizon in days")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        written = COMMANDS[args.command](cfg, args)
    except (NumericalError, ArithmeticError) as exc:
        print(f"epifilter: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (EpiFilterError, ValueError, OSError) as exc:
        print(f"epifilter: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
