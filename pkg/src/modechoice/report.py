"""Text and CSV rendering of estimation results.

Output depends only on the result document, so rendering the same JSON
twice yields identical bytes.
"""
from __future__ import annotations

import csv
import io

from .choice_data import ALTERNATIVES
from .effects import ALT_HEADINGS
from .estimate import EstimationResult, TermEstimate

PLACEHOLDER = "—"


def _num(v, fmt: str) -> str:
    return PLACEHOLDER if v is None else format(v, fmt)


def _p(v) -> str:
    if v is None:
        return PLACEHOLDER
    return "<0.001" if v < 0.0005 else f"{v:.3f}"


def _cells(row: TermEstimate) -> tuple[str, str, str, str]:
    coef = f"{row.estimate:.3f}"
    se, t, p = _num(row.se, ".3f"), _num(row.t, ".2f"), _p(row.p)
    if row.is_random:
        coef += f" ({row.sd:.3f})"
        se += f" ({_num(row.sd_se, '.3f')})"
        t += f" ({_num(row.sd_t, '.2f')})"
        p += f" ({_p(row.sd_p)})"
    return coef, se, t, p


def render_table(result: EstimationResult) -> str:
    """Coefficient table grouped by alternative, followed by model statistics.

    Random terms show ``mean (sd)`` with their statistics in the same form.
    """
    rows = result.terms()
    cells = [_cells(r) for r in rows]
    header = ("Variable", "Coefficient", "Std. error", "t-statistic", "p-value")
    name_w = max([len(header[0])] + [len(r.name) + 2 for r in rows] + [34])
    widths = [max(len(h), *(len(c[i]) for c in cells)) + 2 if cells else len(h) + 2
              for i, h in enumerate(header[1:])]
    head = header[0].ljust(name_w) + "".join(h.rjust(w) for h, w in zip(header[1:], widths))
    out = [head, "-" * len(head)]
    for alt in ALTERNATIVES:
        group = [(r, c) for r, c in zip(rows, cells) if r.alternative == alt.label]
        if not group:
            continue
        out.append(f"Defined for {ALT_HEADINGS[alt.label]}")
        for r, c in group:
            out.append(("  " + r.name).ljust(name_w) + "".join(v.rjust(w) for v, w in zip(c, widths)))
    out.append("Model statistics")
    stats = [
        ("Number of observations", f"{result.n_observations:,}"),
        ("Observations dropped (missing covariates)", f"{result.n_dropped:,}"),
        ("Log-likelihood at zero, LL(0)", f"{result.ll_zero:,.2f}"),
        ("Log-likelihood at convergence, LL(beta)", f"{result.ll_beta:,.2f}"),
        ("rho^2 = 1 - LL(beta)/LL(0)", f"{result.pseudo_r2:.4f}"),
        ("Converged", "yes" if result.converged else f"no ({result.message})"),
        ("Iterations", str(result.iterations)),
        ("Gradient max-norm", f"{result.gradient_norm:.2e}"),
    ]
    if result.options:
        stats.append(("Halton draws", str(result.options.get("n_draws"))))
    if result.covariance_note:
        stats.append(("Covariance", result.covariance_note))
    label_w = max(len(s[0]) for s in stats) + 4
    out += ["  " + k.ljust(label_w) + v for k, v in stats]
    return "\n".join(out) + "\n"


def render_csv(result: EstimationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["name", "covariate", "alternative", "kind", "estimate", "se", "t", "p",
            "sd", "sd_se", "sd_t", "sd_p"]
    w.writerow(cols)
    for r in result.terms():
        w.writerow(["" if getattr(r, c) is None else
                    (repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c))
                    for c in cols])
    return buf.getvalue()
