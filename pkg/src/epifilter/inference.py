"""Static-parameter inference: priors, filter likelihood and TMCMC sampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import stats

from .errors import ConfigError, DegeneratePosteriorError, EpiFilterError, ParameterError
from .filtering import InitialBeliefConfig, batch_log_likelihood, initial_belief, run_filter
from .model import SAMPLED_PARAMS, StaticParams
from .observations import ObservationSeries

log = logging.getLogger(__name__)

_DISTRIBUTIONS = {
    "uniform": lambda low=0.0, high=1.0: stats.uniform(loc=low, scale=high - low),
    "normal": lambda mean=0.0, std=1.0: stats.norm(loc=mean, scale=std),
    "lognormal": lambda median=1.0, sigma=1.0: stats.lognorm(s=sigma, scale=median),
    "truncnormal": lambda mean=0.0, std=1.0, low=-np.inf, high=np.inf: stats.truncnorm(
        (low - mean) / std, (high - mean) / std, loc=mean, scale=std
    ),
}


@dataclass
class PriorSpec:
    """Independent per-parameter priors, keyed by parameter name (order matters)."""

    dists: dict  # name -> frozen scipy.stats distribution
    descriptors: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def default(cls, names: Iterable[str] = SAMPLED_PARAMS) -> "PriorSpec":
        return cls.from_config({n: {"dist": "uniform", "low": 0.0, "high": 1.0} for n in names})

    @classmethod
    def from_config(cls, cfg: Mapping[str, Mapping]) -> "PriorSpec":
        dists, desc = {}, {}
        for name, spec in cfg.items():
            spec = dict(spec)
            kind = spec.pop("dist", "uniform")
            if kind not in _DISTRIBUTIONS:
                raise ConfigError(f"prior.{name}: unknown distribution {kind!r}")
            try:
                dists[name] = _DISTRIBUTIONS[kind](**spec)
            except TypeError as exc:
                raise ConfigError(f"prior.{name}: {exc}") from None
            desc[name] = {"dist": kind, **spec}
        return cls(dists, desc)

    @property
    def names(self) -> list[str]:
        return list(self.dists)

    @property
    def dim(self) -> int:
        return len(self.dists)

    def subset(self, names: Iterable[str]) -> "PriorSpec":
        names = list(names)
        return PriorSpec({n: self.dists[n] for n in names}, {n: self.descriptors.get(n, {}) for n in names})

    def logpdf(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        with np.errstate(divide="ignore"):
            return sum(d.logpdf(theta[:, j]) for j, d in enumerate(self.dists.values()))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.column_stack([d.rvs(size=n, random_state=rng) for d in self.dists.values()])


def log_prior(phi: StaticParams, prior: PriorSpec | None = None) -> float:
    prior = prior or PriorSpec.default()
    theta = np.array([[getattr(phi, n) for n in prior.names]])
    return float(prior.logpdf(theta)[0])


def log_likelihood(
    phi: StaticParams,
    obs: ObservationSeries,
    init_cfg: InitialBeliefConfig | None = None,
    printed_form: bool = False,
) -> float:
    """Marginal data log-likelihood from one filter pass; ``-inf`` when the filter fails."""
    try:
        init = initial_belief(phi, init_cfg)
        return run_filter(phi, obs, init, printed_form=printed_form).loglik
    except (EpiFilterError, FloatingPointError) as exc:
        log.debug("log-likelihood -inf at %s: %s", phi, exc)
        return -np.inf


def make_log_likelihood(
    obs: ObservationSeries,
    base: StaticParams,
    names: Iterable[str],
    fixed: Mapping[str, float] | None = None,
    init_cfg: InitialBeliefConfig | None = None,
    printed_form: bool = False,
) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized log-likelihood over rows of the sampled parameters ``names``.

    Parameters not sampled take their value from ``fixed`` and then from ``base``.
    """
    names = list(names)
    fixed = dict(fixed or {})
    unknown = set(names) - set(SAMPLED_PARAMS)
    if unknown:
        raise ConfigError(f"cannot sample {sorted(unknown)}; choose from {SAMPLED_PARAMS}")
    template = base.to_vector()
    for k, v in fixed.items():
        if k not in SAMPLED_PARAMS:
            raise ConfigError(f"cannot fix unknown parameter {k!r}")
        template[SAMPLED_PARAMS.index(k)] = v
    cols = [SAMPLED_PARAMS.index(n) for n in names]

    def loglik(theta):
        theta = np.atleast_2d(theta)
        full = np.tile(template, (len(theta), 1))
        full[:, cols] = theta
        return batch_log_likelihood(full, obs, base, init_cfg, printed_form)

    return loglik


@dataclass
class StageInfo:
    exponent: float
    log_mean_weight: float
    acceptance_rate: float
    unique_fraction: float
    n_alive: int

    def to_dict(self) -> dict:
        return {k: float(v) if k != "n_alive" else int(v) for k, v in self.__dict__.items()}


@dataclass
class PosteriorEnsemble:
    names: list[str]
    samples: np.ndarray
    logliks: np.ndarray
    log_priors: np.ndarray
    log_evidence: float
    exponents: list[float]
    stages: list[StageInfo]

    def __len__(self):
        return len(self.samples)

    @property
    def map_index(self) -> int:
        return int(np.argmax(self.log_priors + self.logliks))

    def map_values(self) -> dict[str, float]:
        row = self.samples[self.map_index]
        return {n: float(v) for n, v in zip(self.names, row)}


def _cov_of_weights(ll_alive: np.ndarray, dp: float) -> float:
    w = np.exp(dp * (ll_alive - ll_alive.max()))
    return float(np.std(w) / np.mean(w))


def _next_exponent(ll: np.ndarray, p: float, cov_target: float, tol: float = 1e-12) -> float:
    alive = ll[np.isfinite(ll)]
    if alive.size == 0:
        raise DegeneratePosteriorError("no sample has a finite log-likelihood")
    remaining = 1.0 - p
    if _cov_of_weights(alive, remaining) <= cov_target:
        return 1.0
    lo, hi = 0.0, remaining
    while hi - lo > tol * max(remaining, 1e-300):
        mid = 0.5 * (lo + hi)
        if _cov_of_weights(alive, mid) > cov_target:
            hi = mid
        else:
            lo = mid
    dp = lo if lo > 0 else hi
    return min(p + dp, 1.0)


def _proposal_factor(cov: np.ndarray) -> np.ndarray:
    d = len(cov)
    jitter = 0.0
    scale = max(np.trace(cov) / d, 1e-300)
    for _ in range(10):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 if jitter == 0 else jitter * 100
    raise DegeneratePosteriorError("proposal covariance is not positive definite")


def tmcmc(
    prior: PriorSpec,
    loglik: Callable,
    n_samples: int = 2000,
    seed: int = 0,
    *,
    vectorized: bool = True,
    executor=None,
    cov_target: float = 1.0,
    proposal_scale: float = 0.2,
    n_mh_steps: int = 25,
    max_stages: int = 500,
) -> PosteriorEnsemble:
    """Transitional MCMC from the prior to the posterior.

    ``loglik`` maps an ``(n, d)`` array to ``(n,)`` log-likelihoods when
    ``vectorized`` is true, otherwise it takes a single ``(d,)`` row; in the
    latter case rows are fanned out through ``executor.map`` when an
    executor is given. Results are merged in sample order, so the output
    depends only on ``seed``.
    """
    if n_samples < 100:
        raise ParameterError(f"n_samples must be >= 100, got {n_samples}")
    rng = np.random.default_rng(seed)
    d = prior.dim

    def evaluate(theta):
        if len(theta) == 0:
            return np.empty(0)
        if vectorized:
            out = np.asarray(loglik(theta), dtype=float).reshape(len(theta))
        else:
            mapper = executor.map if executor is not None else map
            out = np.fromiter(mapper(loglik, list(theta)), dtype=float, count=len(theta))
        return np.where(np.isnan(out), -np.inf, out)

    theta = prior.sample(n_samples, rng).reshape(n_samples, d)
    lp = prior.logpdf(theta)
    ll = evaluate(theta)

    p = 0.0
    exponents = [p]
    stages: list[StageInfo] = []
    log_evidence = 0.0
    while p < 1.0:
        if len(stages) >= max_stages:
            raise DegeneratePosteriorError(f"no convergence after {max_stages} stages", stages)
        try:
            p_new = _next_exponent(ll, p, cov_target)
        except DegeneratePosteriorError as exc:
            raise DegeneratePosteriorError(str(exc), stages) from None
        dp = p_new - p
        finite = np.isfinite(ll)
        log_w = np.full(n_samples, -np.inf)
        log_w[finite] = dp * ll[finite]
        shift = log_w.max()
        w = np.exp(log_w - shift)
        if not np.any(w > 0):
            raise DegeneratePosteriorError(f"all plausibility weights vanish at exponent {p_new}", stages)
        log_mean_w = shift + np.log(np.mean(w))
        log_evidence += log_mean_w
        wn = w / w.sum()

        mu = wn @ theta
        dev = theta - mu
        prop_cov = proposal_scale**2 * (dev * wn[:, None]).T @ dev
        chol = _proposal_factor(prop_cov)

        idx = rng.choice(n_samples, size=n_samples, p=wn)
        unique_fraction = np.unique(idx).size / n_samples
        theta, lp, ll = theta[idx], lp[idx], ll[idx]

        accepted = 0
        for _ in range(n_mh_steps):
            cand = theta + rng.standard_normal((n_samples, d)) @ chol.T
            lp_cand = prior.logpdf(cand)
            ll_cand = np.full(n_samples, -np.inf)
            inside = np.isfinite(lp_cand)
            ll_cand[inside] = evaluate(cand[inside])
            ok = inside & np.isfinite(ll_cand)
            log_ratio = np.full(n_samples, -np.inf)
            log_ratio[ok] = (lp_cand[ok] + p_new * ll_cand[ok]) - (lp[ok] + p_new * ll[ok])
            take = np.log(rng.uniform(size=n_samples)) < log_ratio
            theta[take], lp[take], ll[take] = cand[take], lp_cand[take], ll_cand[take]
            accepted += int(take.sum())

        info = StageInfo(
            exponent=p_new,
            log_mean_weight=float(log_mean_w),
            acceptance_rate=accepted / (n_samples * n_mh_steps),
            unique_fraction=unique_fraction,
            n_alive=int(finite.sum()),
        )
        stages.append(info)
        log.info(
            "stage %d: p=%.6g acceptance=%.3f unique=%.3f",
            len(stages), p_new, info.acceptance_rate, unique_fraction,
        )
        p = p_new
        exponents.append(p)

    return PosteriorEnsemble(prior.names, theta, ll, lp, float(log_evidence), exponents, stages)


@dataclass
class PosteriorSummary:
    names: list[str]
    map: dict[str, float]
    mean: dict[str, float]
    std: dict[str, float]
    log_evidence: float
    n_samples: int
    stages: list[dict]
    pairs: dict[tuple[str, str], np.ndarray] = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameters": {
                n: {"map": self.map[n], "mean": self.mean[n], "std": self.std[n]} for n in self.names
            },
            "log_evidence": self.log_evidence,
            "n_samples": self.n_samples,
            "stages": self.stages,
        }


def posterior_summary(ens: PosteriorEnsemble, prior: PriorSpec | None = None) -> PosteriorSummary:
    """MAP (best prior x likelihood sample), mean and standard deviation per parameter."""
    if len(ens) == 0:
        raise ParameterError("empty ensemble")
    if prior is not None:
        lp = prior.logpdf(ens.samples)
    else:
        lp = ens.log_priors
    best = int(np.argmax(lp + ens.logliks))
    mean = ens.samples.mean(axis=0)
    std = ens.samples.std(axis=0)
    pairs = {(a, b): ens.samples[:, [i, j]] for (i, a), (j, b) in combinations(enumerate(ens.names), 2)}
    return PosteriorSummary(
        names=list(ens.names),
        map={n: float(v) for n, v in zip(ens.names, ens.samples[best])},
        mean={n: float(v) for n, v in zip(ens.names, mean)},
        std={n: float(v) for n, v in zip(ens.names, std)},
        log_evidence=ens.log_evidence,
        n_samples=len(ens),
        stages=[s.to_dict() for s in ens.stages],
        pairs=pairs,
    )


def calibrate(
    obs: ObservationSeries,
    base: StaticParams,
    prior: PriorSpec | None = None,
    n_samples: int = 2000,
    seed: int = 0,
    fixed: Mapping[str, float] | None = None,
    init_cfg: InitialBeliefConfig | None = None,
    **tmcmc_kw,
) -> tuple[PosteriorEnsemble, StaticParams]:
    """Sample the static-parameter posterior; returns the ensemble and the MAP parameters.

    Parameters listed in ``fixed`` are held at the given values and dropped
    from the prior.
    """
    fixed = dict(fixed or {})
    prior = prior or PriorSpec.default()
    names = [n for n in prior.names if n not in fixed]
    if not names:
        raise ConfigError("every parameter is fixed; nothing to calibrate")
    prior = prior.subset(names)
    ll = make_log_likelihood(obs, base, names, fixed, init_cfg)
    ens = tmcmc(prior, ll, n_samples=n_samples, seed=seed, **tmcmc_kw)
    return ens, base.with_values(**fixed, **ens.map_values())
