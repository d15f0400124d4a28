"""Right-hand sides of the kernel estimates, and empirical constant fitting.

The semi-discrete kernels admit no Gaussian bound near t = 0; the
central estimates here are Lorentzian,

    rhs = (1/sqrt(2 cbar)  ^  sqrt(t)/dx)^{Z(a)}
          * t^{-(d+m)/2}
          * prod_j (1 + |x_j|^2/(2 cbar t) [+ |x_j|^3/(2 cbar t)^{3/2}])^{-1},

with the min-factor active on the zero components of the offset (Z
counts them) and the cubic tail present for the kernel bound but not for
the fundamental-solution variants.  A genuine Gaussian bound with fully
explicit constants (prefactor pi^{d/2} prod (4 c_j t)^{-1/2}, rate
constant C0 = 252) holds on the region t >= max_j |a_j| dx^2 / (2 C0
min_j c_j); and a classical two-regime bound driven by the function
F(g) = -log(g + sqrt(g^2+1)) + (sqrt(g^2+1) - 1)/g covers the unit-grid
kernel away from the origin.

``fit_bound`` extracts the implicit constants empirically: it reports
the supremum of quantity/rhs over a sample set, its location, and
per-spacing constants when the samples span several grid spacings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .heat_const import ConstCoeffs
from .lattice import zeros_count

#: Rate constant of the explicit Gaussian bound.
C0_GAUSSIAN = 252.0


@dataclass(frozen=True)
class LorentzBoundParams:
    """Shape parameters of the Lorentzian right-hand side."""

    cbar: float
    dx: float
    d: int
    m: int = 0
    cubic_tail: bool = True

    def __post_init__(self):
        if not (self.cbar > 0 and self.dx > 0 and self.d >= 1):
            raise ValueError("cbar, dx must be positive and d >= 1")
        if self.m < 0 or (self.cubic_tail and self.m > 2):
            raise ValueError("difference order m must be in {0,1,2} for kernel bounds, >= 0 otherwise")


@dataclass(frozen=True)
class BoundReport:
    """Empirical constants of one bound over a sample sweep."""

    sup_ratio: float
    argmax_alpha: tuple[int, ...]
    argmax_t: float
    samples: int
    per_dx_constants: tuple[tuple[float, float], ...] = ()
    t_range: tuple[float, float] = (math.nan, math.nan)

    @property
    def fitted_constant(self) -> float:
        return self.sup_ratio

    @property
    def dx_spread(self) -> float:
        """Relative spread of the per-spacing constants, 0 if fewer than two."""
        consts = [c for _, c in self.per_dx_constants]
        if len(consts) < 2:
            return 0.0
        return (max(consts) - min(consts)) / max(max(consts), 1e-300)


def small_time_factor(t: float, cbar: float, dx: float) -> float:
    """The factor min(1/sqrt(2 cbar), sqrt(t)/dx) entering all bounds."""
    return min(1.0 / math.sqrt(2.0 * cbar), math.sqrt(t) / dx)


def lorentz_tail_axis(n: np.ndarray, t: float, cbar: float, dx: float,
                      cubic_tail: bool) -> np.ndarray:
    """Per-direction tail factor (1 + u^2 [+ u^3])^{-1}, u = |n dx|/sqrt(2 cbar t)."""
    u2 = (np.asarray(n, dtype=float) * dx) ** 2 / (2.0 * cbar * t)
    tail = 1.0 + u2
    if cubic_tail:
        tail = tail + u2**1.5
    return 1.0 / tail


def lorentz_rhs(alpha: Sequence[int], t: float, params: LorentzBoundParams) -> float:
    """Lorentzian bound at offset alpha and time t.  Strictly positive."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != params.d:
        raise ValueError(f"offset has {len(alpha)} components, bound is {params.d}-d")
    z = zeros_count(alpha)
    out = small_time_factor(t, params.cbar, params.dx) ** z
    out *= t ** (-(params.d + params.m) / 2.0)
    for a in alpha:
        out *= float(lorentz_tail_axis(np.array([a]), t, params.cbar, params.dx,
                                       params.cubic_tail)[0])
    return out


def k_rhs(alpha: Sequence[int], beta: Sequence[int], t: float, cbar: float, dx: float) -> float:
    """Bound for the frozen-coefficient correction kernel: the Lorentzian
    with one extra half power of t and no cubic tail, at offset alpha-beta."""
    offset = tuple(int(a) - int(b) for a, b in zip(alpha, beta))
    params = LorentzBoundParams(cbar=cbar, dx=dx, d=len(offset), m=1, cubic_tail=False)
    return lorentz_rhs(offset, t, params)


def gaussian_region(alpha: Sequence[int], t: float, coeffs: ConstCoeffs, dx: float) -> bool:
    """Validity region of the explicit Gaussian bound."""
    amax = max((abs(int(a)) for a in alpha), default=0)
    return t >= amax * dx**2 / (2.0 * C0_GAUSSIAN * min(coeffs.c))


def gaussian_log_rhs(alpha: Sequence[int], t: float, coeffs: ConstCoeffs, dx: float) -> float:
    """Log of the Gaussian right-hand side (finite even when exp underflows)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    alpha = tuple(int(a) for a in alpha)
    out = 0.5 * len(alpha) * math.log(math.pi)
    for a, c in zip(alpha, coeffs.c):
        out -= 0.5 * math.log(4.0 * c * t)
        out -= (a * dx) ** 2 / (2.0 * C0_GAUSSIAN * c * t)
    return out


def gaussian_rhs(alpha: Sequence[int], t: float, coeffs: ConstCoeffs, dx: float) -> tuple[float, bool]:
    """Explicit-constant Gaussian bound and its validity flag."""
    return math.exp(gaussian_log_rhs(alpha, t, coeffs, dx)), gaussian_region(alpha, t, coeffs, dx)


def gaussian_rhs_b(alpha: Sequence[int], t: float, coeffs: ConstCoeffs, dx: float,
                   b: Sequence[float]) -> float:
    """Free-parameter form of the Gaussian bound, for |b_j| <= 1/2.

    Minimised over admissible b at b_j = a_j dx^2 / (C0 c_j t), where it
    coincides with ``gaussian_rhs``.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    alpha = tuple(int(a) for a in alpha)
    b = tuple(float(v) for v in b)
    if len(b) != len(alpha):
        raise ValueError("b must have one component per direction")
    if any(abs(v) > 0.5 for v in b):
        raise ValueError(f"components of b must lie in [-1/2, 1/2], got {b}")
    out = 0.5 * len(alpha) * math.log(math.pi)
    for a, c, bj in zip(alpha, coeffs.c, b):
        out -= 0.5 * math.log(4.0 * c * t)
        out += C0_GAUSSIAN * c * t / (2.0 * dx**2) * bj**2 - a * bj
    return math.exp(out)


def pang_F(gamma: float) -> float:
    """The exponent profile F(g) = -log(g + sqrt(g^2+1)) + (sqrt(g^2+1)-1)/g.

    Written via asinh and a rationalised second term so that the
    cancellation near g = 0 (both terms vanish linearly) costs no digits.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return -math.asinh(gamma) + gamma / (1.0 + math.sqrt(1.0 + gamma * gamma))


def pang_rhs(n: int, t: float) -> float:
    """Two-regime bound profile for the unit-grid kernel, n != 0.

    The estimate deliberately has no n = 0 member; the kernel is instead
    bounded at the origin by the Lorentzian small-time factor.
    """
    n = int(n)
    if n == 0:
        raise ValueError("the two-regime bound does not address n = 0")
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    an = abs(n)
    log_pref = -0.5 * math.log(an) if t <= an else -0.5 * math.log(t)
    return math.exp(log_pref + an * pang_F(an / (2.0 * t)))


def lorentz_tilde(tau: float, z: float) -> float:
    """The normalised Lorentz profile tau^{-1/2} (1 + z^2/tau)^{-1}."""
    return 1.0 / (math.sqrt(tau) * (1.0 + z * z / tau))


def lorentz_closed_form(x: float, y: float, s: float, t: float) -> float:
    """Closed form of int_R Ltilde(t-s, x-z) Ltilde(s, z-y) dz.

    Equals pi * Ltilde((sqrt(t-s) + sqrt(s))^2, x-y); bounded above by
    sqrt(2) pi Ltilde(t, x-y).
    """
    if not (0 < s < t):
        raise ValueError(f"need 0 < s < t, got s={s}, t={t}")
    tau = (math.sqrt(t - s) + math.sqrt(s)) ** 2
    return math.pi * lorentz_tilde(tau, x - y)


def lorentz_conv_quadrature(x: float, y: float, s: float, t: float) -> float:
    """Adaptive quadrature of the defining Lorentz-convolution integral."""
    if not (0 < s < t):
        raise ValueError(f"need 0 < s < t, got s={s}, t={t}")

    def integrand(z: float) -> float:
        return lorentz_tilde(t - s, x - z) * lorentz_tilde(s, z - y)

    lo, hi = sorted((x, y))
    total = 0.0
    for a, b in ((-np.inf, lo), (lo, hi), (hi, np.inf)):
        if a == b:
            continue
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


def prop53_f(t: float, alpha: Sequence[int], dx: float, c1: float = 1.0) -> float:
    """The self-reproducing Lorentz-product profile of the convolution
    estimate: (1 ^ c1 t/dx^2)^{Z(a)/2} t^{-1/2} prod_j Ltilde(c1 t, a_j dx)."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    alpha = tuple(int(a) for a in alpha)
    out = min(1.0, c1 * t / dx**2) ** (zeros_count(alpha) / 2.0) / math.sqrt(t)
    for a in alpha:
        out *= lorentz_tilde(c1 * t, a * dx)
    return out


def fit_bound(points: Sequence[tuple], quantities: Sequence[float],
              rhs: Callable[..., float] | Sequence[float]) -> BoundReport:
    """Fit the implicit constant of a bound over a sample sweep.

    ``points`` are (alpha, t) or (alpha, t, dx) tuples; ``rhs`` is either
    an evaluator called with the point components or a matching sequence
    of precomputed positive values.  The fitted constant is the supremum
    of |quantity| / rhs; per-dx constants are reported when the points
    carry spacings.
    """
    points = list(points)
    if not points:
        raise ValueError("empty sample set")
    quantities = np.asarray(quantities, dtype=float)
    if quantities.shape != (len(points),):
        raise ValueError("quantities must align with points")
    if not np.all(np.isfinite(quantities)):
        raise ValueError("quantities must be finite")
    if callable(rhs):
        rhs_vals = np.array([rhs(*pt) for pt in points], dtype=float)
    else:
        rhs_vals = np.asarray(rhs, dtype=float)
        if rhs_vals.shape != (len(points),):
            raise ValueError("rhs values must align with points")
    if not np.all(rhs_vals > 0):
        raise ValueError("every sampled rhs must be positive")

    ratios = np.abs(quantities) / rhs_vals
    best = int(np.argmax(ratios))
    alpha = tuple(int(a) for a in np.atleast_1d(points[best][0]))
    times = np.array([pt[1] for pt in points], dtype=float)

    per_dx: list[tuple[float, float]] = []
    if len(points[0]) >= 3:
        spacings = sorted({float(pt[2]) for pt in points})
        if len(spacings) > 1:
            for dx in spacings:
                mask = np.array([float(pt[2]) == dx for pt in points])
                per_dx.append((dx, float(ratios[mask].max())))

    return BoundReport(
        sup_ratio=float(ratios[best]),
        argmax_alpha=alpha,
        argmax_t=float(points[best][1]),
        samples=len(points),
        per_dx_constants=tuple(per_dx),
        t_range=(float(times.min()), float(times.max())),
    )
