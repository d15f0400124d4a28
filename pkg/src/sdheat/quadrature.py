"""Time quadrature on (0, t): graded composite rules and Volterra weights.

The integrands met here (kernel convolutions in time) are smooth inside
(0, t) but lose derivatives at both endpoints on the dx^2 time scale, so
the composite rules grade their panels toward 0 and t with a power-law
map s = (t/2) * u^g applied from each end.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on (-1, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _graded_breakpoints(t: float, panels_per_half: int, grading: float,
                        layer: float | None = None) -> np.ndarray:
    """Panel boundaries on (0, t), graded toward both endpoints, split at t/2.

    With a ``layer`` scale (the width of the integrand's endpoint
    boundary layers, dx^2/(2 cbar) for lattice kernels) the panels grow
    geometrically from a first panel of that width, which resolves the
    layer without starving the interior; otherwise the power map
    s = (t/2) u^grading applies.
    """
    if layer is not None and panels_per_half >= 2 and layer < t / 4.0:
        rho = (0.5 * t / layer) ** (1.0 / (panels_per_half - 1))
        left = np.concatenate([[0.0], layer * rho ** np.arange(panels_per_half)])
        left[-1] = 0.5 * t
    else:
        u = (np.arange(panels_per_half + 1) / panels_per_half) ** grading
        left = 0.5 * t * u
    right = t - left[::-1]
    return np.concatenate([left, right[1:]])


@dataclass(frozen=True)
class TimeQuadrature:
    """Composite quadrature recipe for integrals over (0, t).

    ``nodes`` is the total node budget; the Gauss rule places eight
    points per graded panel, the midpoint rule one per panel.  All nodes
    are strictly interior and all weights positive.
    """

    nodes: int = 96
    rule: str = "gauss-legendre-graded"
    grading: float = 2.0

    def __post_init__(self):
        if self.nodes < 4:
            raise ValueError(f"need at least 4 nodes, got {self.nodes}")
        if self.rule not in ("gauss-legendre-graded", "midpoint-graded"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.grading < 1.0:
            raise ValueError("grading exponent must be >= 1")

    def points(self, t: float, layer: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Ascending nodes and positive weights integrating over (0, t)."""
        s, w, _, _ = self.points_with_panels(t, layer)
        return s, w

    def points_with_panels(self, t: float, layer: float | None = None
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        """Nodes, weights, panel breakpoints, and nodes-per-panel."""
        if not t > 0:
            raise ValueError(f"horizon must be positive, got {t}")
        if self.rule == "midpoint-graded":
            per_half = max(2, self.nodes // 2)
            bp = _graded_breakpoints(t, per_half, self.grading, layer)
            s = 0.5 * (bp[1:] + bp[:-1])
            w = np.diff(bp)
            return s, w, bp, 1
        ppp = 8
        per_half = max(1, self.nodes // (2 * ppp))
        bp = _graded_breakpoints(t, per_half, self.grading, layer)
        x, wx = gauss_legendre(ppp)
        s_list, w_list = [], []
        for a, b in zip(bp[:-1], bp[1:]):
            half = 0.5 * (b - a)
            s_list.append(a + half * (x + 1.0))
            w_list.append(half * wx)
        return np.concatenate(s_list), np.concatenate(w_list), bp, ppp


def _quadratic_integrals(z: np.ndarray, a: float, b: float) -> np.ndarray:
    """Integrals over [a, b] of the three Lagrange basis polynomials on z."""
    out = np.empty(3)
    for j in range(3):
        others = [z[k] for k in range(3) if k != j]
        denom = (z[j] - others[0]) * (z[j] - others[1])
        p, q = others
        def anti(x):
            return x**3 / 3.0 - (p + q) * x**2 / 2.0 + p * q * x
        out[j] = (anti(b) - anti(a)) / denom
    return out


def product_weights(nodes: np.ndarray, t: float) -> np.ndarray:
    """Product-integration weights for int_0^t g from samples at ``nodes``.

    Interior gaps integrate the local parabola through three neighbouring
    nodes (third order); the end segments (0, s_0) and (s_last, t) use
    constant extension, which the grading keeps harmless because the end
    gaps are the finest.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    w = np.zeros(n)
    if n == 0:
        return w
    w[0] += nodes[0]
    w[n - 1] += t - nodes[n - 1]
    if n == 1:
        return w
    if n == 2:
        w[0] += 0.5 * (nodes[1] - nodes[0])
        w[1] += 0.5 * (nodes[1] - nodes[0])
        return w
    for q in range(n - 1):
        lo = q - 1 if q >= 1 else 0
        lo = min(lo, n - 3)
        stencil = np.array([lo, lo + 1, lo + 2])
        w[stencil] += _quadratic_integrals(nodes[stencil], nodes[q], nodes[q + 1])
    return w


def volterra_weights(times: np.ndarray) -> list[np.ndarray]:
    """Per-target product weights on a fixed ascending node set.

    ``W[i]`` has length i and approximates int_0^{s_i} g(u) du from the
    samples g(s_0 .. s_{i-1}) via ``product_weights``.
    """
    times = np.asarray(times, dtype=float)
    return [product_weights(times[:i], float(times[i])) for i in range(times.size)]


@lru_cache(maxsize=16)
def collocation_rule(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spectral Volterra collocation data on the reference panel [0, 1].

    Returns (x, inner, interp): collocation nodes x (Gauss points mapped
    to (0,1)), for each node r the inner Gauss nodes of (0, x_r) as the
    flattened array ``inner`` of shape (p, p), and ``interp`` of shape
    (p, p, p) with interp[r, q, m] the Lagrange weight of the sample at
    x_m when evaluating at inner[r, q].
    """
    xg, wg = gauss_legendre(p)
    x = 0.5 * (xg + 1.0)
    inner = 0.5 * x[:, None] * (xg[None, :] + 1.0)
    interp = np.empty((p, p, p))
    for r in range(p):
        for q in range(p):
            interp[r, q] = _lagrange_weights(x, inner[r, q])
    for arr in (x, inner, interp):
        arr.setflags(write=False)
    return x, inner, interp


def _lagrange_weights(nodes: np.ndarray, point: float) -> np.ndarray:
    n = nodes.size
    w = np.ones(n)
    for m in range(n):
        for k in range(n):
            if k != m:
                w[m] *= (point - nodes[k]) / (nodes[m] - nodes[k])
    return w


def collocation_inner_weights(p: int) -> np.ndarray:
    """Gauss weights for the inner integrals of ``collocation_rule``,
    already scaled to (0, x_r): shape (p, p) with row sums x_r."""
    xg, wg = gauss_legendre(p)
    x = 0.5 * (xg + 1.0)
    return 0.5 * x[:, None] * wg[None, :]


def panel_error_decay(values: list[float]) -> bool:
    """True when successive refinement errors are non-increasing."""
    return all(b <= a * (1.0 + 1e-12) for a, b in zip(values, values[1:]))
