"""Composite Gauss-Legendre quadrature for integrands damped by exp(-2NV).

The rule lives on a symmetric interval [-x_max, x_max] chosen so that the
truncated tail is below double-precision relevance even after multiplying
by the highest polynomial degree in play.  Accuracy is established by
panel doubling until probe integrals are self-consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import QuarticModel, log_weight

__all__ = [
    "ConstructionError",
    "QuadratureRule",
    "build_rule",
    "integrate",
    "integrate_values",
    "epsilon_kernel",
    "epsilon_transform",
    "EpsilonTransform",
    "fsum_weighted",
]

# exp(-x) for x beyond this is irrelevant next to any O(1) double
TAIL_EXPONENT = 750.0


class ConstructionError(RuntimeError):
    """A numerical construction could not reach its accuracy target."""


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def fsum_weighted(weights: np.ndarray, values: np.ndarray) -> float:
    """Compensated (exact) sum of weights*values via math.fsum."""
    return math.fsum((weights * values).tolist())


def _log_integral(weights, log_values):
    """log of sum(w * exp(log_values)), shifted to avoid overflow."""
    m = float(np.max(log_values))
    with np.errstate(under="ignore"):
        s = fsum_weighted(weights, np.exp(log_values - m))
    if s <= 0.0:
        raise ConstructionError("probe integral lost all significance")
    return m + math.log(s)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule on [-x_max, x_max].

    Nodes are ascending and exactly symmetric about 0 (panel layout is
    mirrored), weights are positive.  ``boundaries`` holds the panel
    edges, ``panels`` their count.
    """

    model: QuarticModel
    nodes: np.ndarray
    weights: np.ndarray
    boundaries: np.ndarray
    x_max: float
    panels: int
    order: int
    max_degree: int
    rel_tol: float
    log_w_nodes: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.log_w_nodes is None:
            object.__setattr__(self, "log_w_nodes", log_weight(self.model, self.nodes))

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def integrate_values(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != self.nodes.shape:
            raise ValueError("values must be sampled on the rule's nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite integrand values")
        return fsum_weighted(self.weights, values)

    def integrate_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if not np.all(np.isfinite(rows)):
            raise ValueError("non-finite integrand values")
        wr = rows * self.weights
        return np.array([math.fsum(r.tolist()) for r in wr])

    def panel_index(self, x: np.ndarray) -> np.ndarray:
        """Panel containing each x, clipped to the rule's range."""
        idx = np.searchsorted(self.boundaries, x, side="right") - 1
        return np.clip(idx, 0, self.panels - 1)


def _panelize(model, x_max, n_half, order, max_degree, rel_tol):
    pos_edges = np.linspace(0.0, x_max, n_half + 1)
    tg, wg = _gauss_legendre(order)
    a = pos_edges[:-1][:, None]
    b = pos_edges[1:][:, None]
    h = 0.5 * (b - a)
    pos_nodes = (a + h * (tg + 1.0)).ravel()
    pos_weights = (h * wg[None, :] * np.ones_like(a)).ravel()
    # mirror bit-exactly so that even/odd symmetry survives in floats
    nodes = np.concatenate([-pos_nodes[::-1], pos_nodes])
    weights = np.concatenate([pos_weights[::-1], pos_weights])
    boundaries = np.concatenate([-pos_edges[::-1], pos_edges[1:]])
    return QuadratureRule(
        model=model,
        nodes=nodes,
        weights=weights,
        boundaries=boundaries,
        x_max=x_max,
        panels=2 * n_half,
        order=order,
        max_degree=max_degree,
        rel_tol=rel_tol,
    )


def _choose_x_max(model, degree_pad: int) -> float:
    """Radius where 2N V(x) - D log x clears its minimum by TAIL_EXPONENT."""
    g, t, n2 = model.g, model.t, 2.0 * model.bigN
    d = float(degree_pad)
    # stationary point of W(x) = n2*V(x) - d*log(x):  n2*g*x^4 + n2*t*x^2 = d
    u = (-n2 * t + math.sqrt((n2 * t) ** 2 + 4.0 * n2 * g * d)) / (2.0 * n2 * g)
    x_star = math.sqrt(max(u, -t / g))

    def w_eff(x):
        v = 0.25 * g * x ** 4 + 0.5 * t * x * x
        return n2 * v - d * math.log(max(x, 1e-300))

    target = w_eff(x_star) + TAIL_EXPONENT
    lo, hi = x_star, x_star + 1.0
    while w_eff(hi) < target:
        hi *= 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if w_eff(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _probes(rule: QuadratureRule, k_probe: int):
    lw = rule.log_w_nodes
    x = rule.nodes
    log_h0 = _log_integral(rule.weights, lw)
    with np.errstate(under="ignore"):
        mu2 = fsum_weighted(rule.weights, x * x * np.exp(lw - log_h0))
    log_high = _log_integral(rule.weights, lw + 2.0 * k_probe * np.log(np.abs(x)))
    return log_h0, mu2, log_high


def build_rule(
    model: QuarticModel,
    max_degree: int,
    rel_tol: float = 1e-11,
    order: int = 40,
    max_doublings: int = 6,
) -> QuadratureRule:
    """Build a rule accurate for poly(deg <= 2*max_degree+8) times the weight.

    Panels are doubled until three probe integrals (the weight mass, its
    second moment, and the moment of degree 2*(max_degree+4)) agree with
    the previous refinement level to ``rel_tol`` relative.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if not (0.0 < rel_tol < 1.0):
        raise ValueError("rel_tol must lie in (0, 1)")
    degree_pad = 2 * max_degree + 8
    x_max = _choose_x_max(model, degree_pad)
    k_probe = max_degree + 4

    n_half = max(16, int(math.ceil(max_degree / 6.0)))
    if model.two_cut_valid:
        lam_ref = 1.0
        x1 = math.sqrt((-model.t - 2.0 * math.sqrt(lam_ref * model.g)) / model.g)
        x2 = math.sqrt((-model.t + 2.0 * math.sqrt(lam_ref * model.g)) / model.g)
        n_half = max(n_half, int(math.ceil(model.bigN * (x2 - x1))))

    rule = _panelize(model, x_max, n_half, order, max_degree, rel_tol)
    prev = _probes(rule, k_probe)
    for _ in range(max_doublings):
        n_half *= 2
        finer = _panelize(model, x_max, n_half, order, max_degree, rel_tol)
        cur = _probes(finer, k_probe)
        ok = (
            abs(cur[0] - prev[0]) < rel_tol
            and abs(cur[1] - prev[1]) < rel_tol * max(1.0, abs(cur[1]))
            and abs(cur[2] - prev[2]) < rel_tol
        )
        rule, prev = finer, cur
        if ok:
            return rule
    raise ConstructionError(
        f"quadrature did not reach rel_tol={rel_tol:g} after {max_doublings} doublings"
    )


def integrate(rule: QuadratureRule, f) -> float:
    """Sum of weights * f(nodes); f must be vectorized and finite on nodes."""
    return rule.integrate_values(np.asarray(f(rule.nodes), dtype=float))


def integrate_values(rule: QuadratureRule, values: np.ndarray) -> float:
    return rule.integrate_values(values)


def epsilon_kernel(r):
    """The half-sign kernel |r|/(2r), with value 0 at r = 0."""
    return 0.5 * np.sign(r)


def partial_geometry(rule: QuadratureRule, xs, inner_order: int = 12):
    """Inner Gauss-Legendre geometry for integrals from panel edges to xs.

    Returns (panel_idx, points, weights) such that for any integrand f
    sampled at ``points[i]``, sum(weights[i] * f(points[i])) equals the
    integral of f from boundaries[panel_idx[i]] to xs[i].
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    xs_c = np.clip(xs, -rule.x_max, rule.x_max)
    pidx = rule.panel_index(xs_c)
    a = rule.boundaries[pidx]
    tg, wg = _gauss_legendre(inner_order)
    h = 0.5 * (xs_c - a)
    pts = a[:, None] + h[:, None] * (tg[None, :] + 1.0)
    wts = h[:, None] * wg[None, :]
    return pidx, pts, wts


def panel_prefix_rows(rule: QuadratureRule, rows: np.ndarray) -> np.ndarray:
    """Cumulative integrals of each row at panel boundaries, shape (K, panels+1)."""
    rows = np.atleast_2d(rows)
    k = rows.shape[0]
    v2 = rows.reshape(k, rule.panels, rule.order)
    w2 = rule.weights.reshape(rule.panels, rule.order)
    per_panel = np.einsum("kpo,po->kp", v2, w2)
    out = np.zeros((k, rule.panels + 1))
    np.cumsum(per_panel, axis=1, out=out[:, 1:])
    return out


class EpsilonTransform:
    """The map f -> (x |-> integral of f(y) eps(x-y) dy) for decaying f.

    Equals F(x) - T/2 with F the cumulative integral from -x_max and T
    the total mass.  Node values are computed with exact per-panel inner
    quadrature; between nodes the default call path re-integrates the
    partial panel on demand, so there is no interpolation error.  A
    linearly interpolated fast path over the node cumulative is exposed
    as :meth:`interp`.
    """

    def __init__(self, rule: QuadratureRule, f, inner_order: int = 12):
        self.rule = rule
        self.f = f
        vals = np.asarray(f(rule.nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite integrand in epsilon_transform")
        self._prefix = panel_prefix_rows(rule, vals)[0]
        pidx, pts, wts = partial_geometry(rule, rule.nodes, inner_order)
        fresh = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
        self.cum_nodes = self._prefix[pidx] + np.einsum("iq,iq->i", wts, fresh)
        self.total = self._prefix[-1]
        self._inner_order = inner_order

    def cumulative(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        pidx, pts, wts = partial_geometry(self.rule, xv, self._inner_order)
        fresh = np.asarray(self.f(pts.ravel()), dtype=float).reshape(pts.shape)
        out = self._prefix[pidx] + np.einsum("iq,iq->i", wts, fresh)
        out = np.where(xv <= -self.rule.x_max, 0.0, out)
        out = np.where(xv >= self.rule.x_max, self.total, out)
        return float(out[0]) if scalar else out

    def __call__(self, x):
        return self.cumulative(x) - 0.5 * self.total

    @property
    def at_nodes(self) -> np.ndarray:
        return self.cum_nodes - 0.5 * self.total

    def interp(self, x):
        """Linear interpolation of the node cumulative (fast, approximate)."""
        x = np.asarray(x, dtype=float)
        cum = np.interp(x, self.rule.nodes, self.cum_nodes, left=0.0, right=self.total)
        return cum - 0.5 * self.total


def epsilon_transform(rule: QuadratureRule, f, inner_order: int = 12) -> EpsilonTransform:
    """Build the epsilon transform of a decaying vectorized integrand."""
    return EpsilonTransform(rule, f, inner_order=inner_order)
