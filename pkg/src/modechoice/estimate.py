"""Maximum simulated likelihood estimation and significance-based term retention."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .choice_data import ChoiceObservation
from .halton import DEFAULT_SKIP, DrawMatrix, build_draws
from .likelihood import ChoiceData, ModelSpecification, SimulatedLogLik, null_loglik

log = logging.getLogger(__name__)

SCHEMA_VERSION = "modechoice.result/1"
CRITICAL_T = 1.96


@dataclass
class EstimationOptions:
    n_draws: int = 200
    skip: int = DEFAULT_SKIP
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    hessian_method: str = "numerical"
    hessian_step: float = 1e-4
    start: list | None = None
    warm_start: bool = False
    sd_start: float = 0.1
    per_trip_draws: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        if self.skip < 0:
            raise ValueError("skip must be >= 0")
        if not self.gradient_tolerance > 0 or not self.hessian_step > 0:
            raise ValueError("tolerances must be positive")
        if self.hessian_method not in ("numerical", "outer-product"):
            raise ValueError(f"unknown hessian_method {self.hessian_method!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimationOptions":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown estimation option {unknown[0]!r}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def p_value(t: float) -> float:
    """Two-sided standard-normal tail probability."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    return math.erfc(abs(t) / math.sqrt(2.0))


def pseudo_r2(ll_zero: float, ll_beta: float) -> float:
    if ll_zero == 0:
        raise ValueError("ll_zero must be nonzero")
    return 1.0 - ll_beta / ll_zero


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------

@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    evaluations: int


def bfgs_maximize(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], x0,
                  gtol: float = 1e-6, max_iterations: int = 500, max_step: float = 5.0,
                  c1: float = 1e-4) -> OptimizeResult:
    """Maximise ``f`` by BFGS with a backtracking (Armijo) line search.

    Convergence is declared when the gradient's infinity norm drops below
    ``gtol``.  The sufficient-increase test tolerates round-off in ``f`` of a
    few ulps, which lets the last iterations proceed on gradient information
    once function differences are below machine resolution.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the start point")
    n = x.size
    H = np.eye(n)
    fresh = True
    it = 0
    while True:
        if np.max(np.abs(g), initial=0.0) < gtol:
            return OptimizeResult(x, f, g, it, True, "gradient below tolerance", evals)
        if it >= max_iterations:
            return OptimizeResult(x, f, g, it, False, "iteration limit reached", evals)
        d = H @ g
        slope = g @ d
        if slope <= 0:
            H, fresh = np.eye(n), True
            d, slope = g.copy(), g @ g
        biggest = np.max(np.abs(d))
        if biggest > max_step:
            d *= max_step / biggest
            slope = g @ d
        noise = 8 * np.finfo(float).eps * max(1.0, abs(f))
        alpha = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + alpha * d
            f_new, g_new = fun_grad(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new >= f + c1 * alpha * slope - noise:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if not fresh:
                H, fresh = np.eye(n), True
                continue
            return OptimizeResult(x, f, g, it, False, "line search failed", evals)
        s = x_new - x
        y = g - g_new  # gradient of -f
        sy = s @ y
        if fresh and sy > 0:
            H = np.eye(n) * (sy / (y @ y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            fresh = False
        x, f, g = x_new, f_new, g_new
        it += 1


def numerical_hessian(grad: Callable[[np.ndarray], np.ndarray], x, rel_step: float = 1e-4) -> np.ndarray:
    """Central differences of an analytic gradient, step ``rel_step * (1 + |x_k|)``, symmetrised."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for k in range(n):
        h = rel_step * (1.0 + abs(x[k]))
        e = np.zeros(n)
        e[k] = h
        H[:, k] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def covariance_from_information(info: np.ndarray) -> tuple[np.ndarray | None, str]:
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None, "information matrix is singular"
    if not np.all(np.isfinite(cov)):
        return None, "information matrix is singular"
    if np.any(np.diag(cov) <= 0):
        return cov, "information matrix is not positive definite"
    return cov, ""


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

def _stat(est: float, se: float | None) -> tuple[float | None, float | None]:
    if se is None or not math.isfinite(se) or se <= 0:
        return None, None
    t = est / se
    return t, p_value(t)


@dataclass
class TermEstimate:
    name: str
    covariate: str
    alternative: str
    kind: str
    estimate: float
    se: float | None
    t: float | None
    p: float | None
    sd: float | None = None
    sd_se: float | None = None
    sd_t: float | None = None
    sd_p: float | None = None

    @property
    def is_random(self) -> bool:
        return self.sd is not None


@dataclass
class EstimationResult:
    spec: ModelSpecification
    params: np.ndarray
    se: np.ndarray
    n_observations: int
    n_dropped: int
    ll_zero: float
    ll_beta: float
    ll_start: float
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""
    covariance_note: str = ""
    options: dict = field(default_factory=dict)

    @property
    def pseudo_r2(self) -> float:
        return pseudo_r2(self.ll_zero, self.ll_beta)

    @property
    def param_names(self) -> list[str]:
        return self.spec.param_names

    def terms(self) -> list[TermEstimate]:
        rows = []
        for t, (i, j) in zip(self.spec.terms, self.spec.term_slices()):
            se_i = _finite_or_none(self.se[i])
            est = float(self.params[i])
            row = TermEstimate(t.name, t.covariate, t.alternative.label, t.kind.value, est, se_i, *_stat(est, se_i))
            if j is not None:
                sd = abs(float(self.params[j]))
                sd_se = _finite_or_none(self.se[j])
                row.sd, row.sd_se = sd, sd_se
                row.sd_t, row.sd_p = _stat(sd, sd_se)
            rows.append(row)
        return rows

    def coefficients(self) -> np.ndarray:
        """Parameter vector with random-term sds reported as ``|sd|``."""
        x = self.params.copy()
        for _, j in self.spec.term_slices():
            if j is not None:
                x[j] = abs(x[j])
        return x

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "param_names": self.param_names,
            "params": [float(v) for v in self.params],
            "se": [_finite_or_none(v) for v in self.se],
            "terms": [asdict(r) for r in self.terms()],
            "n_observations": self.n_observations,
            "n_dropped": self.n_dropped,
            "ll_zero": self.ll_zero,
            "ll_beta": self.ll_beta,
            "ll_start": self.ll_start,
            "pseudo_r2": self.pseudo_r2,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
            "covariance_note": self.covariance_note,
            "options": self.options,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimationResult":
        if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
            found = doc.get("schema_version") if isinstance(doc, dict) else None
            raise ValueError(f"unsupported result schema {found!r}; expected {SCHEMA_VERSION!r}")
        try:
            spec = ModelSpecification.from_dict(doc["spec"])
            params = np.array(doc["params"], dtype=float)
            se = np.array([math.nan if v is None else v for v in doc["se"]], dtype=float)
            if params.shape != (spec.n_params,) or se.shape != params.shape:
                raise ValueError("parameter vector does not match specification")
            return cls(spec=spec, params=params, se=se,
                       n_observations=int(doc["n_observations"]), n_dropped=int(doc["n_dropped"]),
                       ll_zero=float(doc["ll_zero"]), ll_beta=float(doc["ll_beta"]),
                       ll_start=float(doc["ll_start"]), converged=bool(doc["converged"]),
                       iterations=int(doc["iterations"]), gradient_norm=float(doc["gradient_norm"]),
                       message=doc.get("message", ""), covariance_note=doc.get("covariance_note", ""),
                       options=doc.get("options", {}))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed result document: {exc}") from exc


def _finite_or_none(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def prepare(spec: ModelSpecification, observations: Sequence[ChoiceObservation] | ChoiceData,
            options: EstimationOptions) -> tuple[ChoiceData, DrawMatrix | None]:
    """Pack the estimation sample and build its draws."""
    if isinstance(observations, ChoiceData):
        data = observations
    else:
        data = ChoiceData.from_observations(observations, spec, per_trip_draws=options.per_trip_draws)
    if len(data) == 0:
        raise ValueError("no complete observations for this specification")
    draws = None
    if spec.n_random:
        draws = build_draws(data.n_individuals, options.n_draws, spec.n_random, options.skip)
    return data, draws


def maximize(spec: ModelSpecification, data: Sequence[ChoiceObservation] | ChoiceData,
             options: EstimationOptions | None = None) -> EstimationResult:
    """Fit ``spec`` by maximum simulated likelihood.

    Observations missing any covariate the specification uses are dropped
    (the count is kept on the result).  Standard errors come from the
    inverse of the negative numerical Hessian, or from the outer product of
    per-observation scores when ``hessian_method='outer-product'``.
    """
    options = options or EstimationOptions()
    data, draws = prepare(spec, data, options)
    sll = SimulatedLogLik(spec, data, draws, workers=options.workers)

    if options.start is not None:
        x0 = np.asarray(options.start, dtype=float)
        if x0.shape != (spec.n_params,):
            raise ValueError(f"start vector needs {spec.n_params} entries")
    else:
        x0 = spec.start_vector(options.sd_start)
        if options.warm_start and spec.n_random:
            x0 = _warm_start(spec, data, options, x0)

    ll_start = sll.value(x0)
    if not math.isfinite(ll_start):
        raise ValueError("log-likelihood is not finite at the start point")
    opt = bfgs_maximize(sll.value_and_gradient, x0, gtol=options.gradient_tolerance,
                        max_iterations=options.max_iterations)
    log.info("optimiser: %s after %d iterations (LL=%.4f)", opt.message, opt.iterations, opt.fun)

    if options.hessian_method == "numerical":
        info = -numerical_hessian(sll.gradient, opt.x, options.hessian_step)
    else:
        _, scores = sll.per_observation(opt.x)
        info = scores.T @ scores
    cov, note = covariance_from_information(info)
    if cov is None:
        se = np.full(spec.n_params, np.nan)
    else:
        diag = np.diag(cov)
        se = np.where(diag > 0, np.sqrt(np.where(diag > 0, diag, 1.0)), np.nan)

    return EstimationResult(
        spec=spec, params=opt.x, se=se,
        n_observations=len(data), n_dropped=data.n_dropped,
        ll_zero=null_loglik(data), ll_beta=opt.fun, ll_start=ll_start,
        converged=opt.converged, iterations=opt.iterations,
        gradient_norm=float(np.max(np.abs(opt.grad), initial=0.0)),
        message=opt.message, covariance_note=note,
        options=options.to_dict(),
    )


def _warm_start(spec, data, options, x0):
    fixed = spec.as_fixed()
    sll = SimulatedLogLik(fixed, data, None, workers=options.workers)
    opt = bfgs_maximize(sll.value_and_gradient, np.zeros(fixed.n_params),
                        gtol=options.gradient_tolerance, max_iterations=options.max_iterations)
    x = x0.copy()
    for (i, _), b in zip(spec.term_slices(), opt.x):
        x[i] = b
    return x


@dataclass
class RetentionStep:
    action: str  # "drop" or "demote"
    term: str
    t: float | None


def stepwise_retain(spec: ModelSpecification, data: Sequence[ChoiceObservation],
                    options: EstimationOptions | None = None, critical: float = CRITICAL_T,
                    max_rounds: int | None = None
                    ) -> tuple[ModelSpecification, EstimationResult, list[RetentionStep]]:
    """Greedy backward elimination at the two-sided 95% level.

    Each round refits and removes the single least significant term: a fixed
    term whose ``|t| < critical`` is dropped, a random term whose sd has
    ``|t| < critical`` is demoted to fixed.  Constants are never removed.  A
    missing standard error counts as ``|t| = 0``.
    """
    options = options or EstimationOptions()
    history: list[RetentionStep] = []
    rounds = 0
    while True:
        result = maximize(spec, data, options)
        worst = None
        for row, term in zip(result.terms(), spec.terms):
            if term.is_constant:
                continue
            if term.is_random:
                stat, action = row.sd_t, "demote"
            else:
                stat, action = row.t, "drop"
            mag = 0.0 if stat is None else abs(stat)
            if mag < critical and (worst is None or mag < worst[0]):
                worst = (mag, action, term.name, stat)
        if worst is None or (max_rounds is not None and rounds >= max_rounds):
            return spec, result, history
        _, action, name, stat = worst
        log.info("stepwise: %s %s (t=%s)", action, name, stat)
        history.append(RetentionStep(action, name, stat))
        spec = spec.without(name) if action == "drop" else spec.demoted(name)
        if not spec.terms:
            raise ValueError("stepwise selection removed every term")
        rounds += 1


__all__ = [
    "EstimationOptions", "EstimationResult", "OptimizeResult", "RetentionStep", "TermEstimate",
    "bfgs_maximize", "maximize", "normal_cdf", "null_loglik", "numerical_hessian", "p_value",
    "prepare", "pseudo_r2", "stepwise_retain",
]
