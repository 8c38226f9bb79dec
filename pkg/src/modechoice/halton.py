"""Halton draws transformed to standard normals for simulated likelihood."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)
MAX_DIMS = len(PRIMES)
DEFAULT_SKIP = 100


def radical_inverse(index: int, base: int) -> float:
    """Reverse the base-``base`` digits of ``index`` about the radix point.

    >>> radical_inverse(3, 2)
    0.75
    """
    if index < 1:
        raise ValueError("index must be >= 1")
    if base < 2:
        raise ValueError("base must be >= 2")
    result, f = 0.0, 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * f
        f /= base
    return result


def halton_sequence(indices: np.ndarray, base: int) -> np.ndarray:
    """Vectorised :func:`radical_inverse` over an array of indices (all >= 1)."""
    n = np.asarray(indices, dtype=np.int64).copy()
    if n.size and n.min() < 1:
        raise ValueError("indices must be >= 1")
    out = np.zeros(n.shape, dtype=float)
    f = 1.0 / base
    while np.any(n > 0):
        n, digit = np.divmod(n, base)
        out += digit * f
        f /= base
    return out


# Wichura (1988) AS 241, PPND16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coef, x):
    acc = np.zeros_like(x) + coef[-1]
    for c in coef[-2::-1]:
        acc = acc * x + c
    return acc


def inverse_normal_cdf(u):
    """Standard normal quantile, accurate to ~1e-15 relative over (0, 1).

    Accepts a scalar or array; raises ``ValueError`` unless every value lies
    strictly inside (0, 1).
    """
    scalar = np.ndim(u) == 0
    p = np.asarray(u, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ValueError("inverse_normal_cdf requires 0 < u < 1")
    q = p - 0.5
    z = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        z[central] = qc * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        # 1 - p is exact for p > 0.5, so upper-tail accuracy is preserved.
        r = np.where(qt < 0, p[tail], 1.0 - p[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly(_E, rf) / _poly(_F, rf)
        z[tail] = np.where(qt < 0, -val, val)

    return float(z) if scalar else z


@dataclass(frozen=True)
class DrawMatrix:
    """Standard-normal draws of shape ``(n_individuals, n_draws, n_dims)``."""

    values: np.ndarray
    skip: int
    bases: tuple[int, ...]

    @property
    def n_individuals(self) -> int:
        return self.values.shape[0]

    @property
    def n_draws(self) -> int:
        return self.values.shape[1]

    @property
    def n_dims(self) -> int:
        return self.values.shape[2]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["individual", "draw", *(f"dim{d}_base{b}" for d, b in enumerate(self.bases))])
            for n in range(self.n_individuals):
                for r in range(self.n_draws):
                    w.writerow([n, r, *(repr(float(v)) for v in self.values[n, r])])


def halton_uniforms(n_individuals: int, n_draws: int, n_dims: int, skip: int = DEFAULT_SKIP) -> np.ndarray:
    """Uniform Halton points laid out in consecutive per-individual blocks."""
    _check_counts(n_individuals, n_draws, n_dims, skip)
    idx = skip + 1 + np.arange(n_individuals * n_draws, dtype=np.int64)
    out = np.empty((n_individuals * n_draws, n_dims))
    for d in range(n_dims):
        out[:, d] = halton_sequence(idx, PRIMES[d])
    return out.reshape(n_individuals, n_draws, n_dims)


def build_draws(n_individuals: int, n_draws: int, n_dims: int, skip: int = DEFAULT_SKIP) -> DrawMatrix:
    """Individual ``n`` (0-based) gets sequence indices ``skip + n*R + 1 .. skip + (n+1)*R``."""
    values = inverse_normal_cdf(halton_uniforms(n_individuals, n_draws, n_dims, skip))
    values.setflags(write=False)
    return DrawMatrix(values=values, skip=skip, bases=PRIMES[:n_dims])


def _check_counts(n_individuals, n_draws, n_dims, skip):
    if n_individuals < 1 or n_draws < 1:
        raise ValueError("n_individuals and n_draws must be positive")
    if n_dims < 0:
        raise ValueError("n_dims must be nonnegative")
    if n_dims > MAX_DIMS:
        raise ValueError(f"at most {MAX_DIMS} Halton dimensions are supported, got {n_dims}")
    if skip < 0:
        raise ValueError("skip must be nonnegative")
