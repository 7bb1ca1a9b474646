"""Orthonormal wavefunctions of the quartic weight and their recurrence data.

The family phi_j(x) = p_j(x) exp(-N V(x)) / sqrt(h_j) is built by a
discretized Stieltjes procedure on the quadrature grid.  The recurrence
ratios R_j = h_j/h_{j-1} drive everything downstream: evaluation, the
banded derivative matrix, and the consistency ("string") identity
R_k (t + g (R_{k-1} + R_k + R_{k+1})) = k/(2N).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import QuarticModel, log_weight
from .quad import ConstructionError, QuadratureRule, _log_integral, fsum_weighted

__all__ = [
    "RecurrenceTable",
    "OpFamily",
    "DerivOpMatrix",
    "build_recurrence",
    "string_residual",
    "eval_op",
    "op_at_zero",
    "deriv_matrix",
    "table_to_csv",
    "table_from_csv",
    "table_to_json",
    "table_from_json",
]


@dataclass(frozen=True)
class RecurrenceTable:
    """Recurrence ratios R_j (R[0] = 0) plus the weight mass h0 in log form."""

    R: np.ndarray
    log_h0: float
    M: int
    method_tag: str
    g: float
    t: float
    bigN: int

    @property
    def h0(self) -> float:
        return math.exp(self.log_h0)

    def log_h(self, j: int) -> float:
        """log h_j = log h0 + sum_{i<=j} log R_i."""
        if j < 0 or j > self.M:
            raise IndexError(f"h index {j} outside [0, {self.M}]")
        return self.log_h0 + float(np.sum(np.log(self.R[1 : j + 1])))


def string_residual(table: RecurrenceTable, model: QuarticModel, k: int) -> float:
    """R_k (t + g (R_{k-1}+R_k+R_{k+1})) - k/(2N); zero for the exact family."""
    if not (1 <= k <= table.M - 1):
        raise IndexError(f"string residual needs 1 <= k <= M-1, got k={k}")
    r = table.R
    return float(
        r[k] * (model.t + model.g * (r[k - 1] + r[k] + r[k + 1])) - k / (2.0 * model.bigN)
    )


def _stieltjes(model: QuarticModel, M: int, rule: QuadratureRule, reorth: bool = True):
    """Node-space Stieltjes iteration; returns (R array, node value matrix)."""
    x = rule.nodes
    w = rule.weights
    log_h0 = _log_integral(w, rule.log_w_nodes)
    n = x.size
    phi = np.zeros((M + 1, n))
    with np.errstate(under="ignore"):
        phi[0] = np.exp(0.5 * rule.log_w_nodes - 0.5 * log_h0)
    R = np.zeros(M + 1)
    for j in range(1, M + 1):
        y = x * phi[j - 1]
        if j >= 2:
            y = y - math.sqrt(R[j - 1]) * phi[j - 2]
        if reorth and j >= 3:
            # same-parity reprojection keeps Lanczos orthogonality losses
            # at rounding level; corrections are O(1e-14) in exact terms
            prev = phi[j - 3 :: -2] if j >= 3 else phi[0:0]
            if prev.size:
                corr = (prev * w) @ y
                y = y - corr @ prev
        rj = fsum_weighted(w, y * y)
        if not math.isfinite(rj) or rj <= 1e-280:
            raise ConstructionError(
                f"Stieltjes stagnated at index {j}: norm {rj!r} (rule too coarse?)"
            )
        R[j] = rj
        phi[j] = y / math.sqrt(rj)
    return R, log_h0, phi


def build_recurrence(
    model: QuarticModel, M: int, rule: QuadratureRule, reorth: bool = True
) -> RecurrenceTable:
    """Recurrence table via discretized Stieltjes on the rule's nodes.

    The string identity is used afterwards as a residual check, never as
    a forward recursion (forward iteration is exponentially unstable off
    the attracting branch).
    """
    if M < 3:
        raise ValueError("M must be >= 3")
    if rule.max_degree < M:
        raise ValueError(f"rule built for max_degree {rule.max_degree} < M = {M}")
    R, log_h0, _ = _stieltjes(model, M, rule, reorth=reorth)
    table = RecurrenceTable(
        R=R, log_h0=log_h0, M=M, method_tag="stieltjes",
        g=model.g, t=model.t, bigN=model.bigN,
    )
    worst = max(
        abs(string_residual(table, model, k)) / max(1.0, k / (2.0 * model.bigN))
        for k in range(1, M)
    )
    if worst > 1e-6:
        raise ConstructionError(
            f"string-equation residual {worst:.3e} exceeds 1e-6; quadrature too coarse"
        )
    return table


@dataclass
class OpFamily:
    """Recurrence table plus cached node values and evaluators."""

    model: QuarticModel
    table: RecurrenceTable
    rule: QuadratureRule
    node_values: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, model: QuarticModel, M: int, rule: QuadratureRule,
              reorth: bool = True) -> "OpFamily":
        R, log_h0, phi = _stieltjes(model, M, rule, reorth=reorth)
        table = RecurrenceTable(
            R=R, log_h0=log_h0, M=M, method_tag="stieltjes",
            g=model.g, t=model.t, bigN=model.bigN,
        )
        return cls(model=model, table=table, rule=rule, node_values=phi)

    @property
    def M(self) -> int:
        return self.table.M

    def eval_batch(self, jmax: int, x) -> np.ndarray:
        """Values of phi_j for all j <= jmax at x; shape (jmax+1, len(x))."""
        if jmax > self.M:
            raise IndexError(f"index {jmax} beyond table maximum {self.M}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((jmax + 1, x.size))
        lw = log_weight(self.model, x)
        with np.errstate(under="ignore"):
            out[0] = np.exp(0.5 * lw - 0.5 * self.table.log_h0)
        sq = np.sqrt(self.table.R)
        if jmax >= 1:
            out[1] = x * out[0] / sq[1]
        for j in range(2, jmax + 1):
            out[j] = (x * out[j - 1] - sq[j - 1] * out[j - 2]) / sq[j]
        return out

    def eval(self, j: int, x):
        vals = self.eval_batch(j, x)[j]
        return float(vals[0]) if np.ndim(x) == 0 else vals


def eval_op(family: OpFamily, j: int, x):
    """phi_j(x) by upward three-term recurrence from phi_0."""
    if j < 0:
        raise IndexError("index must be non-negative")
    return family.eval(j, x)


def op_at_zero(table: RecurrenceTable, m: int) -> float:
    """phi_{2m}(0) = (-1)^m sqrt(R_{2m-1}...R_1 / (R_{2m}...R_2)) phi_0(0).

    The ratio is accumulated in log space with the sign tracked
    separately; odd-index values at 0 vanish by parity.
    """
    if 2 * m > table.M:
        raise IndexError(f"index 2m={2*m} beyond table maximum {table.M}")
    log_mag = -0.5 * table.log_h0
    for k in range(1, m + 1):
        log_mag += 0.5 * (math.log(table.R[2 * k - 1]) - math.log(table.R[2 * k]))
    sign = -1.0 if m % 2 else 1.0
    return sign * math.exp(log_mag)


@dataclass(frozen=True)
class DerivOpMatrix:
    """Banded expansion of d/dx phi_j over phi_{j-3..j+3} (parity kills j, j+-2).

    Rows j <= valid_max carry all four bands; beyond that the j+3 band
    would need ratios outside the table.
    """

    matrix: np.ndarray
    valid_max: int

    def entry(self, j: int, k: int) -> float:
        return float(self.matrix[j, k])

    def row(self, j: int) -> np.ndarray:
        if j > self.valid_max:
            raise IndexError(
                f"derivative row {j} is truncated; table needs margin past {self.valid_max}"
            )
        return self.matrix[j]

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficient vector of the derivative of sum_j coeffs[j] phi_j."""
        coeffs = np.asarray(coeffs, dtype=float)
        support = np.nonzero(coeffs)[0]
        if support.size and support[-1] > self.valid_max:
            raise IndexError(
                f"coefficient support {support[-1]} exceeds valid rows {self.valid_max}"
            )
        return coeffs @ self.matrix


def deriv_matrix(table: RecurrenceTable, model: QuarticModel) -> DerivOpMatrix:
    """Closed-form bands: exact algebraic functions of the ratio table.

    P[j, j+3] = -N g sqrt(R_{j+1} R_{j+2} R_{j+3}),
    P[j, j+1] = -(j+1)/(2 sqrt(R_{j+1})),
    P[j, j-1] = +j/(2 sqrt(R_j)),
    P[j, j-3] = +N g sqrt(R_{j-2} R_{j-1} R_j).
    """
    M = table.M
    R = table.R
    ng = model.bigN * model.g
    logR = np.full(M + 1, -np.inf)
    logR[1:] = np.log(R[1:])
    P = np.zeros((M + 1, M + 1))
    for j in range(M + 1):
        if j + 3 <= M:
            P[j, j + 3] = -ng * math.exp(0.5 * (logR[j + 1] + logR[j + 2] + logR[j + 3]))
        if j + 1 <= M:
            P[j, j + 1] = -(j + 1) / (2.0 * math.sqrt(R[j + 1]))
        if j - 1 >= 0:
            P[j, j - 1] = j / (2.0 * math.sqrt(R[j]))
        if j - 3 >= 0:
            P[j, j - 3] = ng * math.exp(0.5 * (logR[j - 2] + logR[j - 1] + logR[j]))
    return DerivOpMatrix(matrix=P, valid_max=M - 3)


# ---------------------------------------------------------------------------
# table export / import; floats go through repr, which round-trips exactly

def table_to_csv(table: RecurrenceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "R_j"])
        for j in range(table.M + 1):
            writer.writerow([j, repr(float(table.R[j]))])


def table_from_csv(path, log_h0: float, model: QuarticModel,
                   method_tag: str = "import") -> RecurrenceTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["j", "R_j"]:
            raise ValueError(f"unexpected CSV header {header!r}")
        for row in reader:
            rows.append(float(row[1]))
    R = np.array(rows)
    return RecurrenceTable(
        R=R, log_h0=log_h0, M=len(rows) - 1, method_tag=method_tag,
        g=model.g, t=model.t, bigN=model.bigN,
    )


def table_to_json(table: RecurrenceTable, path) -> None:
    payload = {
        "g": repr(table.g),
        "t": repr(table.t),
        "bigN": table.bigN,
        "M": table.M,
        "method_tag": table.method_tag,
        "log_h0": repr(table.log_h0),
        "R": [repr(float(v)) for v in table.R],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def table_from_json(path) -> RecurrenceTable:
    with open(path) as fh:
        payload = json.load(fh)
    return RecurrenceTable(
        R=np.array([float(v) for v in payload["R"]]),
        log_h0=float(payload["log_h0"]),
        M=int(payload["M"]),
        method_tag=str(payload["method_tag"]),
        g=float(payload["g"]),
        t=float(payload["t"]),
        bigN=int(payload["bigN"]),
    )
