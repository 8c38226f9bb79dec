"""Average marginal effects and sign shares of random coefficients."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .choice_data import ALTERNATIVES, ChoiceObservation
from .estimate import EstimationOptions, EstimationResult, normal_cdf, prepare
from .halton import DrawMatrix
from .likelihood import ChoiceData, ModelSpecification, SimulatedLogLik

ALT_HEADINGS = {
    "PersonalVehicle": "Personal Vehicle",
    "PublicTransport": "Public Transport",
    "Walk": "Walk",
    "OtherMode": "Other Mode",
}


def share_below_zero(mean: float, sd: float) -> float:
    """Mass of N(mean, sd^2) below zero."""
    if not sd > 0:
        raise ValueError("sd must be positive")
    return normal_cdf(-mean / sd)


@dataclass
class MarginalEffectsTable:
    """Average change in each alternative's probability, one row per term."""

    terms: list[str] = field(default_factory=list)
    alternatives: list[str] = field(default_factory=list)
    methods: list[str] = field(default_factory=list)
    effects: np.ndarray = field(default_factory=lambda: np.empty((0, len(ALTERNATIVES))))

    def row(self, term: str) -> np.ndarray:
        return self.effects[self.terms.index(term)]

    def as_dict(self) -> dict[str, list[float]]:
        return {t: [float(v) for v in e] for t, e in zip(self.terms, self.effects)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "defined_for", "method", *(a.label for a in ALTERNATIVES)])
        for t, a, m, e in zip(self.terms, self.alternatives, self.methods, self.effects):
            w.writerow([t, a, m, *(f"{v:.6f}" for v in e)])
        return buf.getvalue()

    def render(self, decimals: int = 4) -> str:
        """Text table grouped by the alternative each term is defined for."""
        name_w = max([len("Variable")] + [len(t) + 2 for t in self.terms])
        col_w = max(decimals + 5, 18)
        head = "Variable".ljust(name_w) + "".join(ALT_HEADINGS[a.label].rjust(col_w) for a in ALTERNATIVES)
        lines = [head, "-" * len(head)]
        for alt in ALTERNATIVES:
            idx = [i for i, a in enumerate(self.alternatives) if a == alt.label]
            if not idx:
                continue
            lines.append(f"Defined for {ALT_HEADINGS[alt.label]}")
            for i in idx:
                cells = "".join(f"{v:.{decimals}f}".rjust(col_w) for v in self.effects[i])
                lines.append(("  " + self.terms[i]).ljust(name_w) + cells)
        return "\n".join(lines) + "\n"


def _is_binary(col: np.ndarray) -> bool:
    return bool(np.all((col == 0.0) | (col == 1.0)))


def marginal_effects(result: EstimationResult, spec: ModelSpecification | None,
                     data: Sequence[ChoiceObservation] | ChoiceData, draws: DrawMatrix | None = None,
                     terms: Sequence[str] | None = None) -> MarginalEffectsTable:
    """Sample-average marginal effects of each term on all four probabilities.

    A 0/1 covariate is switched between 1 and 0 inside the one term's
    utility contribution; any other covariate uses the analytic derivative of
    the simulated probabilities.  Probabilities average over the same draws
    the model was estimated with (rebuilt from the result's options when
    ``draws`` is not given).  ``spec=None`` uses the result's specification.
    """
    spec = spec or result.spec
    if spec.n_params != len(result.params):
        raise ValueError("result does not match the specification")
    options = EstimationOptions.from_dict(result.options) if result.options else EstimationOptions()
    if isinstance(data, ChoiceData):
        packed = data
        if draws is None and spec.n_random:
            _, draws = prepare(spec, packed, options)
    else:
        packed, built = prepare(spec, data, options)
        draws = draws if draws is not None else built

    names = [t.name for t in spec.terms if not t.is_constant] if terms is None else list(terms)
    index = {t.name: k for k, t in enumerate(spec.terms)}
    for name in names:
        if name not in index:
            raise KeyError(f"term {name!r} is not in the specification")
        if spec.terms[index[name]].is_constant:
            raise ValueError(f"term {name!r} is a constant")

    sll = SimulatedLogLik(spec, packed, draws, workers=options.workers)
    params = result.params
    w = packed.weight / packed.weight.sum()
    table = MarginalEffectsTable()
    rows = []
    for name in names:
        k = index[name]
        term = spec.terms[k]
        if _is_binary(packed.X[:, k]):
            p1 = sll.probabilities(params, packed.with_column(k, 1.0))
            p0 = sll.probabilities(params, packed.with_column(k, 0.0))
            rows.append(w @ (p1 - p0))
            method = "discrete"
        else:
            rows.append(w @ _derivative(sll, params, k))
            method = "derivative"
        table.terms.append(name)
        table.alternatives.append(term.alternative.label)
        table.methods.append(method)
    table.effects = np.array(rows).reshape(len(rows), len(ALTERNATIVES))
    return table


def _derivative(sll: SimulatedLogLik, params: np.ndarray, k: int) -> np.ndarray:
    """Per-observation d P(alt) / d x_k, averaged over draws."""
    spec = sll.spec
    a_k = int(spec.terms[k].alternative)
    i, j = spec.term_slices()[k]
    d = [kk for kk, t in enumerate(spec.terms) if t.is_random].index(k) if j is not None else None
    n = len(sll.data)
    out = np.empty((n, len(ALTERNATIVES)))
    for lo in range(0, n, sll.chunk_size):
        hi = min(lo + sll.chunk_size, n)
        P, z = sll.chunk_probabilities(params, lo, hi)
        beta = params[i] if d is None else params[i] + abs(params[j]) * z[:, :, d]
        # dP_a/dx = beta * P_a * (1[a == a_k] - P_{a_k})
        dP = -P * P[:, :, a_k, None]
        dP[:, :, a_k] += P[:, :, a_k]
        dP *= np.broadcast_to(beta, P.shape[:2])[:, :, None] if np.ndim(beta) else beta
        out[lo:hi] = dP.mean(axis=1)
    return out


def sign_shares(result: EstimationResult) -> dict[str, float]:
    """Share of the population whose random coefficient is negative, per random term."""
    out = {}
    for row in result.terms():
        if row.is_random and row.sd and row.sd > 0:
            out[row.name] = share_below_zero(row.estimate, row.sd)
    return out


def max_row_sum(table: MarginalEffectsTable) -> float:
    if len(table.terms) == 0:
        return 0.0
    return float(np.max(np.abs(table.effects.sum(axis=1))))


__all__ = ["MarginalEffectsTable", "marginal_effects", "max_row_sum", "share_below_zero",
           "sign_shares"]
