"""Multinomial and simulated mixed logit probabilities, log-likelihood and gradient.

Utilities are linear in coefficients.  Each :class:`Term` binds one covariate
(or the constant) to one alternative's utility with either a fixed
coefficient or a normally distributed one, ``mean + |sd| * z`` with ``z`` a
standard normal draw.  The parameter vector lists terms in specification
order; a fixed term contributes one entry and a random term two
(``mean`` then ``sd``).

Utilities are always accumulated the same way, in both the per-observation
helpers and the vectorised :class:`SimulatedLogLik`: first every term's
fixed coefficient (or random mean) times its covariate, in term order, then
the ``|sd| * z * x`` deviations of the random terms.  With all ``sd`` at
zero the second stage adds exact zeros, so simulated probabilities reproduce
plain logit probabilities bit for bit.
"""
from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .choice_data import ALTERNATIVES, N_ALTERNATIVES, Alternative, ChoiceObservation
from .halton import DrawMatrix

CONSTANT = "CONSTANT"
PROBABILITY_FLOOR = 1e-300
DEFAULT_CHUNK_SIZE = 1024


class Kind(enum.Enum):
    FIXED = "Fixed"
    RANDOM_NORMAL = "RandomNormal"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        key = str(value).replace("_", "").replace(" ", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        if key in ("random", "normal"):
            return cls.RANDOM_NORMAL
        raise ValueError(f"unknown term kind {value!r}")


@dataclass(frozen=True)
class Term:
    name: str
    covariate: str
    alternative: Alternative
    kind: Kind = Kind.FIXED

    def __post_init__(self):
        object.__setattr__(self, "alternative", Alternative.parse(self.alternative))
        object.__setattr__(self, "kind", Kind.parse(self.kind))

    @property
    def is_random(self) -> bool:
        return self.kind is Kind.RANDOM_NORMAL

    @property
    def is_constant(self) -> bool:
        return self.covariate == CONSTANT


class SpecificationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpecification:
    terms: tuple[Term, ...]
    reference_alternative: Alternative = Alternative.OTHER_MODE

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "reference_alternative", Alternative.parse(self.reference_alternative))
        names = [t.name for t in self.terms]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SpecificationError(f"duplicate term name {dupes[0]!r}")
        for t in self.terms:
            if t.is_constant and t.alternative == self.reference_alternative:
                raise SpecificationError(
                    f"term {t.name!r}: constant on the reference alternative {t.alternative.label}")
        if len(self.random_terms) > 10:
            raise SpecificationError("at most 10 random terms are supported")

    # ---- layout -------------------------------------------------------
    @property
    def random_terms(self) -> list[Term]:
        return [t for t in self.terms if t.is_random]

    @property
    def n_random(self) -> int:
        return len(self.random_terms)

    @property
    def covariates(self) -> list[str]:
        seen = []
        for t in self.terms:
            if not t.is_constant and t.covariate not in seen:
                seen.append(t.covariate)
        return seen

    @property
    def param_names(self) -> list[str]:
        names = []
        for t in self.terms:
            if t.is_random:
                names += [f"{t.name}:mean", f"{t.name}:sd"]
            else:
                names.append(t.name)
        return names

    @property
    def n_params(self) -> int:
        return len(self.terms) + self.n_random

    def term_slices(self) -> list[tuple[int, int | None]]:
        """Per term: (index of fixed coefficient or mean, index of sd or None)."""
        out, i = [], 0
        for t in self.terms:
            if t.is_random:
                out.append((i, i + 1))
                i += 2
            else:
                out.append((i, None))
                i += 1
        return out

    def term(self, name: str) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"no term named {name!r}")

    def start_vector(self, sd_start: float = 0.1) -> np.ndarray:
        x = np.zeros(self.n_params)
        for _, sd in self.term_slices():
            if sd is not None:
                x[sd] = sd_start
        return x

    # ---- edits used by stepwise selection -------------------------------
    def without(self, name: str) -> "ModelSpecification":
        self.term(name)
        return replace(self, terms=tuple(t for t in self.terms if t.name != name))

    def demoted(self, name: str) -> "ModelSpecification":
        self.term(name)
        return replace(self, terms=tuple(replace(t, kind=Kind.FIXED) if t.name == name else t
                                         for t in self.terms))

    def as_fixed(self) -> "ModelSpecification":
        return replace(self, terms=tuple(replace(t, kind=Kind.FIXED) for t in self.terms))

    # ---- JSON ----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "reference_alternative": self.reference_alternative.label,
            "terms": [{"name": t.name, "covariate": t.covariate,
                       "alternative": t.alternative.label, "kind": t.kind.value}
                      for t in self.terms],
        }

    @classmethod
    def from_dict(cls, doc) -> "ModelSpecification":
        if isinstance(doc, list):
            doc = {"terms": doc}
        if not isinstance(doc, Mapping) or "terms" not in doc:
            raise SpecificationError("specification must be a list of terms or an object with 'terms'")
        terms = []
        for i, item in enumerate(doc["terms"]):
            try:
                terms.append(Term(name=str(item["name"]), covariate=str(item["covariate"]),
                                  alternative=item["alternative"], kind=item.get("kind", "Fixed")))
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecificationError(f"term {i}: {exc}") from exc
        kw = {}
        if "reference_alternative" in doc:
            kw["reference_alternative"] = doc["reference_alternative"]
        return cls(terms=tuple(terms), **kw)

    @classmethod
    def load(cls, path) -> "ModelSpecification":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Single-observation evaluation
# ---------------------------------------------------------------------------

def _covariate_value(term: Term, obs: ChoiceObservation) -> float:
    if term.is_constant:
        return 1.0
    value = obs.covariates.get(term.covariate)
    if value is None or np.isnan(value):
        raise KeyError(f"observation {obs.obs_id}: term {term.name!r} needs missing covariate {term.covariate!r}")
    return float(value)


def utilities(spec: ModelSpecification, params, obs: ChoiceObservation, draw=None) -> np.ndarray:
    """Systematic utility of each alternative; unavailable alternatives get -inf.

    ``draw`` holds one standard-normal value per random term, in term order.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    draw = np.zeros(spec.n_random) if draw is None else np.asarray(draw, dtype=float)
    if draw.shape != (spec.n_random,):
        raise ValueError(f"expected {spec.n_random} draws, got {draw.shape}")
    v = np.zeros(N_ALTERNATIVES)
    xs = [_covariate_value(t, obs) for t in spec.terms]
    slices = spec.term_slices()
    for t, x, (i, _) in zip(spec.terms, xs, slices):
        v[t.alternative] += params[i] * x
    d = 0
    for t, x, (_, j) in zip(spec.terms, xs, slices):
        if j is not None:
            v[t.alternative] += abs(params[j]) * draw[d] * x
            d += 1
    return np.where(np.asarray(obs.available, dtype=bool), v, -np.inf)


def _softmax(v: np.ndarray) -> np.ndarray:
    m = np.max(v, axis=-1, keepdims=True)
    e = np.exp(v - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def mnl_probabilities(utilities, available=None) -> np.ndarray:
    """Logit choice probabilities, zero for unavailable alternatives."""
    v = np.asarray(utilities, dtype=float)
    if available is not None:
        avail = np.asarray(available, dtype=bool)
        if not avail.any():
            raise ValueError("no available alternatives")
        v = np.where(avail, v, -np.inf)
    elif not np.isfinite(v).any():
        raise ValueError("no available alternatives")
    return _softmax(v)


def simulated_probability(spec: ModelSpecification, params, obs: ChoiceObservation, draws=None) -> float:
    """Average over draws of the logit probability of the chosen alternative.

    ``draws`` is an ``(R, n_random)`` array for this observation's individual.
    With no random terms the draws are ignored.
    """
    if spec.n_random == 0:
        return float(mnl_probabilities(utilities(spec, params, obs))[obs.chosen])
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != spec.n_random:
        raise ValueError(f"draws must have shape (R, {spec.n_random})")
    p = [mnl_probabilities(utilities(spec, params, obs, z))[obs.chosen] for z in draws]
    return float(np.mean(p))


# ---------------------------------------------------------------------------
# Packed data and vectorised evaluation
# ---------------------------------------------------------------------------

@dataclass
class ChoiceData:
    """Observations packed against a specification's terms.

    ``X[:, k]`` holds term ``k``'s covariate (1 for constants) and
    ``individual`` indexes rows of the draw matrix.
    """

    X: np.ndarray
    chosen: np.ndarray
    available: np.ndarray
    weight: np.ndarray
    individual: np.ndarray
    obs_ids: list = field(default_factory=list)
    n_individuals: int = 0
    n_dropped: int = 0

    def __len__(self) -> int:
        return self.X.shape[0]

    @classmethod
    def from_observations(cls, observations: Sequence[ChoiceObservation], spec: ModelSpecification,
                          per_trip_draws: bool = False) -> "ChoiceData":
        """Pack complete observations; rows missing any needed covariate are dropped and counted.

        Draw rows are assigned per person (first appearance order) unless
        ``per_trip_draws`` is set or the person id is absent.
        """
        needed = spec.covariates
        kept = [o for o in observations if o.is_complete_for(needed)]
        n = len(kept)
        X = np.empty((n, len(spec.terms)))
        for k, t in enumerate(spec.terms):
            X[:, k] = 1.0 if t.is_constant else [o.covariates[t.covariate] for o in kept]
        individual = np.empty(n, dtype=np.int64)
        ids: dict = {}
        for i, o in enumerate(kept):
            key = ("trip", i) if per_trip_draws or o.person_id is None else ("person", o.person_id)
            individual[i] = ids.setdefault(key, len(ids))
        return cls(
            X=X,
            chosen=np.array([int(o.chosen) for o in kept], dtype=np.int64),
            available=np.array([o.available for o in kept], dtype=bool).reshape(n, N_ALTERNATIVES),
            weight=np.array([o.weight for o in kept], dtype=float),
            individual=individual,
            obs_ids=[o.obs_id for o in kept],
            n_individuals=len(ids),
            n_dropped=len(observations) - n,
        )

    def subset(self, idx) -> "ChoiceData":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], chosen=self.chosen[idx], available=self.available[idx],
                       weight=self.weight[idx], individual=self.individual[idx],
                       obs_ids=[self.obs_ids[i] for i in np.arange(len(self))[idx]] if self.obs_ids else [])

    def with_column(self, k: int, value) -> "ChoiceData":
        X = self.X.copy()
        X[:, k] = value
        return replace(self, X=X)


def null_loglik(data) -> float:
    """Log-likelihood of equal shares over each observation's available alternatives."""
    if isinstance(data, ChoiceData):
        avail, weight = data.available, data.weight
    else:
        avail = np.array([o.available for o in data], dtype=bool).reshape(-1, N_ALTERNATIVES)
        weight = np.array([o.weight for o in data], dtype=float)
    return float(np.sum(weight * np.log(1.0 / avail.sum(axis=1))))


class SimulatedLogLik:
    """Simulated log-likelihood of a specification over packed data and fixed draws.

    Evaluation is split into observation chunks, optionally run on a thread
    pool; chunk results are always combined in chunk order so results do
    not depend on ``workers``.
    """

    def __init__(self, spec: ModelSpecification, data: ChoiceData, draws: DrawMatrix | None = None,
                 chunk_size: int = DEFAULT_CHUNK_SIZE, workers: int = 1):
        if len(data) == 0:
            raise ValueError("no observations to evaluate")
        if data.X.shape[1] != len(spec.terms):
            raise ValueError("data was packed for a different specification")
        self.spec = spec
        self.data = data
        self.n_random = spec.n_random
        if self.n_random:
            if draws is None:
                raise ValueError("random terms require a draw matrix")
            if draws.n_dims != self.n_random:
                raise ValueError(f"draw matrix has {draws.n_dims} dimensions, need {self.n_random}")
            if draws.n_individuals < data.n_individuals:
                raise ValueError("draw matrix has fewer individuals than the data")
        self.draws = draws
        self.chunk_size = chunk_size
        self.workers = workers
        self._alt = np.array([int(t.alternative) for t in spec.terms])
        slices = spec.term_slices()
        self._loc = np.array([i for i, _ in slices])
        self._rand_k = np.array([k for k, (_, j) in enumerate(slices) if j is not None], dtype=int)
        self._rand_sd = np.array([j for _, j in slices if j is not None], dtype=int)

    # ---- core -----------------------------------------------------------
    def _chunks(self):
        n = len(self.data)
        return [(lo, min(lo + self.chunk_size, n)) for lo in range(0, n, self.chunk_size)]

    def _map(self, fn, chunks):
        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(fn, chunks))
        return [fn(c) for c in chunks]

    def chunk_probabilities(self, params, lo: int, hi: int, data: ChoiceData | None = None):
        """Per-draw probabilities ``(n, R, J)`` for rows ``lo:hi`` plus the draws used.

        Without random terms R is 1 and the draws are ``None``.
        """
        data = self.data if data is None else data
        X = data.X[lo:hi]
        vbar = np.zeros((hi - lo, N_ALTERNATIVES))
        for k in range(len(self._alt)):
            vbar[:, self._alt[k]] += params[self._loc[k]] * X[:, k]
        if self.n_random == 0:
            v = vbar[:, None, :]
            z = None
        else:
            z = self.draws.values[data.individual[lo:hi]]
            v = np.repeat(vbar[:, None, :], z.shape[1], axis=1)
            for d, (k, j) in enumerate(zip(self._rand_k, self._rand_sd)):
                v[:, :, self._alt[k]] += abs(params[j]) * z[:, :, d] * X[:, k, None]
        v = np.where(data.available[lo:hi, None, :], v, -np.inf)
        return _softmax(v), z

    def _chunk(self, params, lo, hi, want_grad, per_obs):
        d = self.data
        P, z = self.chunk_probabilities(params, lo, hi)
        n, R = P.shape[0], P.shape[1]
        ch = d.chosen[lo:hi]
        p_r = P[np.arange(n), :, ch]
        psim = p_r.mean(axis=1)
        w = d.weight[lo:hi]
        floored = psim < PROBABILITY_FLOOR
        ll_obs = w * np.log(np.maximum(psim, PROBABILITY_FLOOR))
        if not want_grad:
            return ll_obs if per_obs else ll_obs.sum()

        share = np.where(floored[:, None], 0.0, p_r / (R * np.where(floored, 1.0, psim))[:, None])
        resid = -P
        resid[np.arange(n), :, ch] += 1.0
        rbar = np.einsum("nr,nra->na", share, resid)
        X = d.X[lo:hi]
        g = np.zeros((n, self.spec.n_params))
        for k in range(len(self._alt)):
            g[:, self._loc[k]] += X[:, k] * rbar[:, self._alt[k]]
        for dd, (k, j) in enumerate(zip(self._rand_k, self._rand_sd)):
            a = self._alt[k]
            inner = np.einsum("nr,nr,nr->n", share, z[:, :, dd], resid[:, :, a])
            g[:, j] += np.sign(params[j]) * X[:, k] * inner
        g *= w[:, None]
        if per_obs:
            return ll_obs, g
        return ll_obs.sum(), g.sum(axis=0)

    def _check(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.spec.n_params,):
            raise ValueError(f"expected {self.spec.n_params} parameters, got {params.shape}")
        return params

    # ---- public API -----------------------------------------------------
    def value(self, params) -> float:
        params = self._check(params)
        parts = self._map(lambda c: self._chunk(params, *c, False, False), self._chunks())
        return float(sum(parts))

    def value_and_gradient(self, params) -> tuple[float, np.ndarray]:
        params = self._check(params)
        parts = self._map(lambda c: self._chunk(params, *c, True, False), self._chunks())
        ll = 0.0
        g = np.zeros(self.spec.n_params)
        for v, gr in parts:
            ll += v
            g += gr
        return float(ll), g

    def gradient(self, params) -> np.ndarray:
        return self.value_and_gradient(params)[1]

    def per_observation(self, params) -> tuple[np.ndarray, np.ndarray]:
        """Weighted log-probability and score of every observation."""
        params = self._check(params)
        parts = self._map(lambda c: self._chunk(params, *c, True, True), self._chunks())
        return np.concatenate([p[0] for p in parts]), np.vstack([p[1] for p in parts])

    def probabilities(self, params, data: ChoiceData | None = None) -> np.ndarray:
        """Simulated probability of every alternative, shape ``(N, J)``."""
        params = self._check(params)
        data = self.data if data is None else data
        n = len(data)
        chunks = [(lo, min(lo + self.chunk_size, n)) for lo in range(0, n, self.chunk_size)]
        parts = self._map(lambda c: self.chunk_probabilities(params, *c, data=data)[0].mean(axis=1), chunks)
        return np.vstack(parts) if parts else np.empty((0, N_ALTERNATIVES))

    def chosen_probabilities(self, params) -> np.ndarray:
        P = self.probabilities(params)
        return P[np.arange(len(self.data)), self.data.chosen]


def simulated_loglik(spec: ModelSpecification, params, data: ChoiceData,
                     draws: DrawMatrix | None = None) -> float:
    return SimulatedLogLik(spec, data, draws).value(params)


def simulated_loglik_gradient(spec: ModelSpecification, params, data: ChoiceData,
                              draws: DrawMatrix | None = None) -> np.ndarray:
    return SimulatedLogLik(spec, data, draws).gradient(params)


__all__ = [
    "ALTERNATIVES", "CONSTANT", "ChoiceData", "Kind", "ModelSpecification", "SimulatedLogLik",
    "SpecificationError", "Term", "mnl_probabilities", "null_loglik", "simulated_loglik",
    "simulated_loglik_gradient", "simulated_probability", "utilities",
]
