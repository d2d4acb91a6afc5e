"""Jacobi fields along geodesics, conjugate points, and the maximal
minimizing time.

In two dimensions a normal Jacobi field is J = j(t) * (unit normal), with
the scalar amplitude solving

    j'' + K(gamma(t)) j = 0,

K the Gauss curvature along the path.  A nontrivial solution vanishing at
two times makes those points conjugate; the geodesic stops minimizing past
the pair (Jacobi's theorem, one direction only).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain
from .metric import gauss_curvature


@dataclass
class JacobiSolution:
    times: np.ndarray
    j: np.ndarray
    jp: np.ndarray
    curvature: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "j", "jp", "K"])
            for row in zip(self.times, self.j, self.jp, self.curvature):
                writer.writerow([f"{v:.12g}" for v in row])

    def interp_j(self, t):
        """Cubic Hermite value of j at t (j' is stored, so the interpolant
        is one order better than linear)."""
        i = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        h = self.times[i + 1] - self.times[i]
        s = (t - self.times[i]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (
            h00 * self.j[i]
            + h10 * h * self.jp[i]
            + h01 * self.j[i + 1]
            + h11 * h * self.jp[i + 1]
        )


def curvature_along(field, path, times=None):
    """Gauss curvature at path positions; linearly interpolated into the
    Jacobi integrator so second derivatives are not re-evaluated per stage."""
    if times is None:
        times = path.times
    pts = np.array([path.position(t) for t in times])
    return np.asarray(times, dtype=float), gauss_curvature(field, pts)


def _k_interpolator(times, kvals):
    def k_of_t(t):
        return float(np.interp(t, times, kvals))

    return k_of_t


def jacobi_integrate(field, path, t0, j0, jp0, t_end, step=None, k_samples=None):
    """RK4 on j'' + K j = 0 from t0 to t_end along the path.

    ``k_samples`` may carry precomputed (times, K) arrays to share curvature
    evaluations across solves on the same path.
    """
    if t0 < path.t_min - 1e-12 or t_end > path.t_max + 1e-12:
        raise OutOfDomain("Jacobi window outside the path horizon")
    if step is None:
        step = path.step
    if k_samples is None:
        k_samples = curvature_along(field, path)
    k_of_t = _k_interpolator(*k_samples)

    n = max(2, int(np.ceil((t_end - t0) / step)))
    h = (t_end - t0) / n
    times = t0 + h * np.arange(n + 1)
    j = np.empty(n + 1)
    jp = np.empty(n + 1)
    kv = np.empty(n + 1)
    y, yp = float(j0), float(jp0)
    for i, t in enumerate(times):
        j[i] = y
        jp[i] = yp
        kv[i] = k_of_t(t)
        if i == n:
            break

        def rhs(tt, yy, yyp):
            return yyp, -k_of_t(tt) * yy

        k1, k1p = rhs(t, y, yp)
        k2, k2p = rhs(t + 0.5 * h, y + 0.5 * h * k1, yp + 0.5 * h * k1p)
        k3, k3p = rhs(t + 0.5 * h, y + 0.5 * h * k2, yp + 0.5 * h * k2p)
        k4, k4p = rhs(t + h, y + h * k3, yp + h * k3p)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        yp = yp + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    return JacobiSolution(times, j, jp, kv)


def wronskian(sol_a, sol_b):
    """Abel identity check: j_a j_b' - j_b j_a' is constant for solutions of
    the same equation."""
    return sol_a.j * sol_b.jp - sol_b.j * sol_a.jp


def first_conjugate_point(field, path, t_end, t0=0.0, step=None, k_samples=None, n_bisect=40):
    """First t* > t0 with a sign change of the Jacobi amplitude started as
    j(t0) = 0, j'(t0) = 1; None if no conjugate point by t_end."""
    sol = jacobi_integrate(field, path, t0, 0.0, 1.0, t_end, step, k_samples)
    j = sol.j
    # skip the trivial zero at t0 itself
    start = 1
    sign_change = None
    for i in range(start, len(j) - 1):
        if j[i] == 0.0 and i > start:
            return float(sol.times[i])
        if j[i] * j[i + 1] < 0.0:
            sign_change = i
            break
    if sign_change is None:
        return None
    lo, hi = sol.times[sign_change], sol.times[sign_change + 1]
    flo = j[sign_change]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        fm = sol.interp_j(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo = mid
            flo = fm
    return float(0.5 * (lo + hi))


@dataclass
class TStarEstimate:
    time: float
    at_horizon: bool


def t_star(dmap, path, t_max, tol=None, n_bisect=40):
    """sup of minimizing times in [0, t_max] by bisection on the (monotone,
    clamped) minimizing predicate; flagged AtHorizon when still minimizing
    at t_max."""
    from .distance import is_minimizing

    if t_max > path.t_max + 1e-9:
        raise OutOfDomain("t_max beyond path horizon")
    if is_minimizing(dmap, path, t_max, tol):
        return TStarEstimate(float(t_max), True)
    eps = max(path.step, 1e-6)
    if not is_minimizing(dmap, path, eps, tol):
        return TStarEstimate(0.0, False)
    lo, hi = eps, t_max
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if is_minimizing(dmap, path, mid, tol):
            lo = mid
        else:
            hi = mid
    return TStarEstimate(float(0.5 * (lo + hi)), False)
