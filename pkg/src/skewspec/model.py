"""Quartic double-well model: potential, weight evaluators, global parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuarticModel",
    "potential",
    "potential_deriv",
    "log_weight",
    "half_weight",
]


@dataclass(frozen=True)
class QuarticModel:
    """Couplings of V(x) = g x^4/4 + t x^2/2 and the damping scale.

    ``bigN`` is half the matrix size 2N; the full weight is exp(-2N V(x)).
    ``lambda_cr`` = t^2/(4g) separates the two-cut regime (index ratio
    below it) from the one-cut regime.
    """

    g: float
    t: float
    bigN: int
    lambda_cr: float = field(init=False)

    def __post_init__(self):
        if not (self.g > 0.0 and math.isfinite(self.g)):
            raise ValueError(f"coupling g must be positive and finite, got {self.g!r}")
        if not (self.t < 0.0 and math.isfinite(self.t)):
            raise ValueError(f"coupling t must be negative and finite, got {self.t!r}")
        if int(self.bigN) != self.bigN or self.bigN < 1:
            raise ValueError(f"bigN must be a positive integer, got {self.bigN!r}")
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "bigN", int(self.bigN))
        object.__setattr__(self, "lambda_cr", self.t * self.t / (4.0 * self.g))

    @property
    def two_cut_valid(self) -> bool:
        """True iff indices up to the matrix size stay in the two-cut regime."""
        return self.lambda_cr > 1.0

    @property
    def x_well(self) -> float:
        """Positive location of the potential minimum, x^2 = -t/g."""
        return math.sqrt(-self.t / self.g)

    @property
    def v_min(self) -> float:
        """Minimum value of V, equal to -lambda_cr."""
        return -self.lambda_cr

    def lam(self, m: int) -> float:
        """Index ratio lambda = m/(2N) used throughout."""
        return m / (2.0 * self.bigN)


def potential(model: QuarticModel, x):
    """V(x) = g x^4/4 + t x^2/2, an even function of x."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    return 0.25 * model.g * x2 * x2 + 0.5 * model.t * x2


def potential_deriv(model: QuarticModel, x):
    """V'(x) = g x^3 + t x."""
    x = np.asarray(x, dtype=float)
    return model.g * x ** 3 + model.t * x


def log_weight(model: QuarticModel, x):
    """log of the full weight, -2N V(x).

    Kept in log form: for N of order tens the weight spans hundreds of
    orders of magnitude, so callers exponentiate as late as possible.
    """
    return -2.0 * model.bigN * potential(model, x)


def half_weight(model: QuarticModel, x):
    """exp(-N V(x)), the wavefunction damping factor.

    Underflow is clamped to exactly 0 (numpy semantics of exp on large
    negative arguments).
    """
    with np.errstate(under="ignore"):
        return np.exp(0.5 * log_weight(model, x))
