"""Bump metrics: normal-coordinate charts, the curvature-plateau surface,
cones, assembly, and the bump event.

Construction, for a metric with small fluctuation at the origin
(Z_0(g) <= 2h):

1. A normal-coordinate chart adapted to the geodesic from (0, e1): the
   point (t, n) is reached by riding the geodesic for time t, then a
   g-normal unit-speed geodesic for time n.  The chart's third-order
   Taylor polynomial Psi is computed in closed form from the 2-jet of g at
   the origin, and validated against the numerically integrated chart
   (base geodesic plus normal shoots).
2. A chart metric f with prescribed Gauss curvature K(t) along the axis:
   f11 = 1 - K(t) q(n), f12 = 0, f22 = 1, where q(n) = n^2 on the triangle
   and saturates (C^2) at 1/(2 K_max) so f11 >= 1/2 everywhere.  The
   profile K rises linearly from K0(g) to the plateau K_plus = 4 pi^2/tau^2
   at tau/4.  The axis is then an exact unit-speed geodesic of f with
   curvature exactly K(t), so the pushed-forward geodesic is gamma_b(t) =
   Psi(t, 0) = the cubic Taylor path, and the Jacobi amplitude started at
   (tau/4) as (0, 2 pi/tau) is sin((2 pi/tau)(t - tau/4)) on the plateau:
   conjugate points at tau/4 and 3 tau/4, and j(tau) = -1.
3. The bump metric b = (1 - w) Psi_* f + w delta with a C-infinity radial
   smoothstep w vanishing through the image of the triangle and reaching 1
   before the chart's covered radius (and before radius 1), evaluated with
   analytic first and second derivatives through the Newton-inverted chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChartFailure, OutOfRange, OutOfRegion, PreconditionZ
from .fluctuation import Cone, c21_distance, z_point
from .geodesic import UnitTangentState, integrate
from .jacobi import jacobi_integrate
from .metric import (
    MetricField,
    christoffel_from_jets,
    christoffel_gradient,
    gauss_curvature,
    inverse_metric,
)

_R90 = np.array([[0.0, -1.0], [1.0, 0.0]])

# monomial exponents (t^a n^b) of the cubic chart polynomial
_MONO = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]


# ---------------------------------------------------------------------------
# cones


def in_hinterland_cone(point, theta):
    """HC = {y1 <= 0 and |y2| <= -tan(theta) y1}: where old origins live."""
    y = np.asarray(point, dtype=float)
    return bool(y[0] <= 0.0 and abs(y[1]) <= -math.tan(theta) * y[0])


def in_frontier_cone(point, phi):
    """FC = {0 <= x1 <= cos(phi) and |x2| <= tan(phi) x1}."""
    x = np.asarray(point, dtype=float)
    return bool(0.0 <= x[0] <= math.cos(phi) and abs(x[1]) <= math.tan(phi) * x[0])


def in_lens(point, y):
    """D^y = B(0, 2) cap B(y, |y|), the lens seen from old origin y."""
    x = np.asarray(point, dtype=float)
    y = np.asarray(y, dtype=float)
    return bool(np.linalg.norm(x) <= 2.0 and np.linalg.norm(x - y) <= np.linalg.norm(y))


def cone_tests(point, spec, y=None):
    """Membership flags for the hinterland cone, frontier cone, and (if an
    old origin y is given) the lens D^y."""
    flags = {
        "in_HC": in_hinterland_cone(point, spec.theta),
        "in_FC": in_frontier_cone(point, spec.phi_angle),
    }
    if y is not None:
        flags["in_lens"] = in_lens(point, y)
    return flags


# ---------------------------------------------------------------------------
# the chart polynomial


class ChartPolynomial:
    """Cubic map Psi: (t, n) -> R^2 with analytic derivatives and Newton
    inversion; coefficients indexed by the _MONO exponent list."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)  # (10, 2)

    def _powers(self, u):
        t, n = u[..., 0], u[..., 1]
        cols = [t**a * n**b for a, b in _MONO]
        return np.stack(cols, axis=-1)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self._powers(u) @ self.coeffs

    def jacobian(self, u):
        """J[..., i, a] = d Psi^i / d u_a."""
        u = np.asarray(u, dtype=float)
        t, n = u[..., 0], u[..., 1]
        zero = np.zeros_like(t)
        one = np.ones_like(t)
        dt = np.stack(
            [zero, one, zero, 2 * t, n, zero, 3 * t * t, 2 * t * n, n * n, zero], axis=-1
        )
        dn = np.stack(
            [zero, zero, one, zero, t, 2 * n, zero, t * t, 2 * t * n, 3 * n * n], axis=-1
        )
        jt = dt @ self.coeffs
        jn = dn @ self.coeffs
        return np.stack([jt, jn], axis=-1)

    def second(self, u):
        """DJ[..., c, i, a] = d_c J[..., i, a] = d^2 Psi^i / d u_a d u_c."""
        u = np.asarray(u, dtype=float)
        t, n = u[..., 0], u[..., 1]
        zero = np.zeros_like(t)
        two = 2.0 * np.ones_like(t)
        dtt = np.stack([zero, zero, zero, two, zero, zero, 6 * t, 2 * n, zero, zero], axis=-1)
        dtn = np.stack([zero, zero, zero, zero, np.ones_like(t), zero, zero, 2 * t, 2 * n, zero], axis=-1)
        dnn = np.stack([zero, zero, zero, zero, zero, two, zero, zero, 2 * t, 6 * n], axis=-1)
        ptt = dtt @ self.coeffs
        ptn = dtn @ self.coeffs
        pnn = dnn @ self.coeffs
        out = np.empty(u.shape[:-1] + (2, 2, 2))
        out[..., 0, :, 0] = ptt
        out[..., 0, :, 1] = ptn
        out[..., 1, :, 0] = ptn
        out[..., 1, :, 1] = pnn
        return out

    def third(self):
        """DDJ[c, d, i, a] = d^3 Psi^i / du_a du_c du_d (constant)."""
        c = self.coeffs
        out = np.zeros((2, 2, 2, 2))
        ttt = 6.0 * c[6]
        ttn = 2.0 * c[7]
        tnn = 2.0 * c[8]
        nnn = 6.0 * c[9]
        for (cd, dd, ad), val in (
            ((0, 0, 0), ttt),
            ((0, 0, 1), ttn),
            ((0, 1, 0), ttn),
            ((1, 0, 0), ttn),
            ((0, 1, 1), tnn),
            ((1, 0, 1), tnn),
            ((1, 1, 0), tnn),
            ((1, 1, 1), nnn),
        ):
            out[cd, dd, :, ad] = val
        return out

    def invert(self, x, u0=None, iters=60, tol=1e-12):
        """Batched damped Newton inversion of Psi (backtracking halves any
        step that does not shrink the residual); ChartFailure on stall."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.array(x if u0 is None else np.atleast_2d(u0), dtype=float, copy=True)
        res = self(u) - x
        rnorm = np.linalg.norm(res, axis=-1)
        for _ in range(iters):
            if float(rnorm.max()) < tol:
                break
            jac = self.jacobian(u)
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            if np.any(np.abs(det) < 1e-12):
                raise ChartFailure("chart Jacobian singular during inversion")
            inv = np.empty_like(jac)
            inv[..., 0, 0] = jac[..., 1, 1]
            inv[..., 1, 1] = jac[..., 0, 0]
            inv[..., 0, 1] = -jac[..., 0, 1]
            inv[..., 1, 0] = -jac[..., 1, 0]
            inv = inv / det[..., None, None]
            step = np.einsum("...ai,...i->...a", np.swapaxes(inv, -1, -2), res)
            scale = np.ones(len(u))
            for _ in range(10):
                trial = u - scale[:, None] * step
                res_t = self(trial) - x
                rn_t = np.linalg.norm(res_t, axis=-1)
                improved = rn_t <= rnorm * (1.0 - 1e-4 * scale) + 1e-15
                if improved.all():
                    break
                scale = np.where(improved, scale, 0.5 * scale)
            u = u - scale[:, None] * step
            res = self(u) - x
            rnorm = np.linalg.norm(res, axis=-1)
        bad = rnorm > 1e-8
        if bad.any() and u0 is None:
            # grid-seeded rescue: plain Newton from u0 = x can wander into a
            # wrong basin near the chart edge, so reseed from the closest
            # point of a polar lattice, then from a local refinement
            th = np.linspace(0.0, 2 * np.pi, 96, endpoint=False)
            rr = np.linspace(0.0, 1.3, 36)
            cand = np.stack(
                [np.outer(rr, np.cos(th)).ravel(), np.outer(rr, np.sin(th)).ravel()], axis=1
            )
            imgs = self(cand)
            for j in np.where(bad)[0]:
                seed = cand[np.argmin(np.linalg.norm(imgs - x[j], axis=1))]
                for half in (None, 0.08):
                    if half is not None:
                        uu, vv = np.meshgrid(
                            np.linspace(seed[0] - half, seed[0] + half, 40),
                            np.linspace(seed[1] - half, seed[1] + half, 40),
                        )
                        local = np.stack([uu.ravel(), vv.ravel()], axis=1)
                        seed = local[np.argmin(np.linalg.norm(self(local) - x[j], axis=1))]
                    try:
                        u[j] = self.invert(x[j][None], u0=seed[None])[0]
                        break
                    except ChartFailure:
                        continue
            res = self(u) - x
            rnorm = np.linalg.norm(res, axis=-1)
        if float(rnorm.max()) > 1e-8:
            raise ChartFailure(f"Newton inversion stalled (residual {rnorm.max():.2e})")
        return u


# ---------------------------------------------------------------------------
# chart construction


def _taylor_data(field):
    """Geodesic and normal-field Taylor data at the origin from the 2-jet."""
    origin = np.zeros(2)
    g, dg, ddg = field.jets(origin)
    gam = christoffel_from_jets(g, dg)
    dgam = christoffel_gradient(field, origin)

    lam0 = 1.0 / math.sqrt(g[0, 0])
    T = np.array([lam0, 0.0])
    B = -np.einsum("kij,i,j->k", gam, T, T)  # gamma''(0)
    C = -np.einsum("mkij,m,i,j->k", dgam, T, T, T) - 2.0 * np.einsum(
        "kij,i,j->k", gam, B, T
    )  # gamma'''(0)

    DG_T = np.einsum("kij,k->ij", dg, T)
    DG_B = np.einsum("kij,k->ij", dg, B)
    DDG_TT = np.einsum("klij,k,l->ij", ddg, T, T)

    N0 = _R90 @ (g @ T)
    Ndot = _R90 @ (DG_T @ T + g @ B)
    Nddot = _R90 @ ((DDG_TT + DG_B) @ T + 2.0 * (DG_T @ B) + g @ C)

    Q0 = N0 @ g @ N0
    Qdot = 2.0 * (Ndot @ g @ N0) + N0 @ DG_T @ N0
    Qddot = (
        2.0 * (Nddot @ g @ N0)
        + 2.0 * (Ndot @ g @ Ndot)
        + 4.0 * (Ndot @ DG_T @ N0)
        + N0 @ (DDG_TT + DG_B) @ N0
    )
    s = math.sqrt(Q0)
    sdot = Qdot / (2.0 * s)
    sddot = Qddot / (2.0 * s) - Qdot * Qdot / (4.0 * s**3)

    n0 = N0 / s
    ndot = Ndot / s - N0 * sdot / s**2
    nddot = (
        Nddot / s
        - 2.0 * Ndot * sdot / s**2
        - N0 * sddot / s**2
        + 2.0 * N0 * sdot * sdot / s**3
    )

    acc0 = -np.einsum("kij,i,j->k", gam, n0, n0)
    dgam_T = np.einsum("mkij,m->kij", dgam, T)
    accdot = -np.einsum("kij,i,j->k", dgam_T, n0, n0) - 2.0 * np.einsum(
        "kij,i,j->k", gam, ndot, n0
    )
    jerk0 = -np.einsum("mkij,m,i,j->k", dgam, n0, n0, n0) - 2.0 * np.einsum(
        "kij,i,j->k", gam, acc0, n0
    )
    return {
        "T": T,
        "B": B,
        "C": C,
        "n0": n0,
        "ndot": ndot,
        "nddot": nddot,
        "acc0": acc0,
        "accdot": accdot,
        "jerk0": jerk0,
    }


def chart_polynomial(field):
    """Third-order Taylor polynomial of the normal-coordinate chart at the
    origin, in closed form from the 2-jet of the metric (so identical for
    all metrics with the same 2-jet)."""
    d = _taylor_data(field)
    coeffs = np.zeros((10, 2))
    coeffs[1] = d["T"]
    coeffs[3] = 0.5 * d["B"]
    coeffs[6] = d["C"] / 6.0
    coeffs[2] = d["n0"]
    coeffs[4] = d["ndot"]
    coeffs[7] = 0.5 * d["nddot"]
    coeffs[5] = 0.5 * d["acc0"]
    coeffs[8] = 0.5 * d["accdot"]
    coeffs[9] = d["jerk0"] / 6.0
    return ChartPolynomial(coeffs)


class FermiChart:
    """Numerically integrated chart samples plus the cubic Taylor map.

    raw_pos[i, j] is the chart point of (raw_t[i], raw_n[j]); raw_dn is the
    exact n-velocity (the normal shoot's xdot); axis_tangent the exact
    t-velocity on the axis.
    """

    def __init__(self, psi, raw_t, raw_n, raw_pos, raw_dn, axis_tangent, normals):
        self.psi = psi
        self.raw_t = raw_t
        self.raw_n = raw_n
        self.raw_pos = raw_pos
        self.raw_dn = raw_dn
        self.axis_tangent = axis_tangent
        self.normals = normals

    def fit_residual(self):
        """Max |Psi - integrated chart| over the sampled window."""
        tt, nn = np.meshgrid(self.raw_t, self.raw_n, indexing="ij")
        uu = np.stack([tt, nn], axis=-1).reshape(-1, 2)
        pred = self.psi(uu).reshape(self.raw_pos.shape)
        return float(np.max(np.linalg.norm(pred - self.raw_pos, axis=-1)))


def unit_normal(field, x, xdot):
    """g-unit normal to xdot at x, oriented so det[xdot | n] > 0."""
    g = field.metric(np.asarray(x, dtype=float))
    raw = _R90 @ (g @ np.asarray(xdot, dtype=float))
    n = raw / math.sqrt(raw @ g @ raw)
    if xdot[0] * n[1] - xdot[1] * n[0] < 0:
        n = -n
    return n


def fermi_chart(field, h_threshold=None, t_chart=0.18, n_chart=0.04, nt=37, nn=17,
                h_step=1e-3, spacing=None):
    """Numeric chart (base geodesic + g-normal shoots) and the closed-form
    cubic Psi, gated by the admissibility estimate when a threshold is given."""
    if h_threshold is not None:
        z0 = z_point(field, (0.0, 0.0), spacing)
        if z0 > 2.0 * h_threshold:
            raise PreconditionZ(f"Z_0 = {z0:.4g} > 2h = {2 * h_threshold:.4g}")
    psi = chart_polynomial(field)

    base = integrate(field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, t_chart), h_step)
    raw_t = np.linspace(0.0, t_chart, nt)
    raw_n = np.linspace(-n_chart, n_chart, nn)
    raw_pos = np.empty((nt, nn, 2))
    raw_dn = np.empty((nt, nn, 2))
    axis_tangent = np.empty((nt, 2))
    normals = np.empty((nt, 2))
    for i, t in enumerate(raw_t):
        x = base.position(t)
        xdot = base.velocity(t)
        axis_tangent[i] = xdot
        nvec = unit_normal(field, x, xdot)
        normals[i] = nvec
        shoot = integrate(field, UnitTangentState(x, nvec), (-n_chart, n_chart), h_step)
        for j, nval in enumerate(raw_n):
            raw_pos[i, j] = shoot.position(nval)
            raw_dn[i, j] = shoot.velocity(nval)
    return FermiChart(psi, raw_t, raw_n, raw_pos, raw_dn, axis_tangent, normals)


def chart_pullback_grid(field, chart):
    """Pull-back metric on the chart sample grid: g~ = J^T g(Phi) J with the
    n-column of J exact (shoot velocity) and the t-column by 4th-order
    finite differences across shoots."""
    nt, nn = chart.raw_pos.shape[:2]
    dt = chart.raw_t[1] - chart.raw_t[0]
    gtilde = np.full((nt, nn, 2, 2), np.nan)
    pos = chart.raw_pos
    for i in range(2, nt - 2):
        dphi_dt = (-pos[i + 2] + 8 * pos[i + 1] - 8 * pos[i - 1] + pos[i - 2]) / (12 * dt)
        g = field.metric(pos[i], check=False)
        for j in range(nn):
            J = np.stack([dphi_dt[j], chart.raw_dn[i, j]], axis=-1)
            gtilde[i, j] = J.T @ g[j] @ J
    return gtilde


# ---------------------------------------------------------------------------
# the spec (constants and regions)


@dataclass
class BumpSpec:
    """All constants of one bump construction; the constructor re-derives
    the four bounds on tau and refuses a hand-violated spec."""

    k0: float
    tau: float
    k_plus: float
    k_max: float
    m_taylor: float
    lipschitz: float
    delta_chart: float
    theta: float
    phi_angle: float
    h_threshold: float
    epsilon: float
    rho_blend: float
    rho_end: float

    def __post_init__(self):
        bounds = self.tau_bounds()
        for name, val in bounds.items():
            if not self.tau < val:
                raise ValueError(f"tau={self.tau:.6g} violates bound {name}={val:.6g}")
        if not self.tau <= 0.5:
            raise ValueError("tau must be <= 1/2 (implied by M >= 1)")
        if not math.isclose(self.k_plus, 4.0 * math.pi**2 / self.tau**2, rel_tol=1e-12):
            raise ValueError("k_plus must equal 4 pi^2 / tau^2 exactly")
        if abs(self.k0) > self.k_max or self.k_plus > self.k_max:
            raise ValueError("curvatures must be bounded by k_max")
        if not (0.0 < self.rho_blend < self.rho_end <= 1.0):
            raise ValueError("need 0 < rho_blend < rho_end <= 1")

    def tau_bounds(self):
        m, lip = self.m_taylor, self.lipschitz
        return {
            "delta/sqrt2": self.delta_chart / math.sqrt(2.0),
            "1/(2M)": 1.0 / (2.0 * m),
            "cos(phi)/(L sqrt2 + 3M)": math.cos(self.phi_angle) / (lip * math.sqrt(2.0) + 3.0 * m),
            "tan(phi)/(L sqrt2 + 10M^2)": math.tan(self.phi_angle)
            / (lip * math.sqrt(2.0) + 10.0 * m * m),
        }

    @property
    def width(self):
        """Transverse half-width of the chart triangle at t = tau."""
        return self.tau / math.sqrt(self.k_max)

    def in_triangle(self, u):
        t, n = float(u[0]), float(u[1])
        return 0.0 <= t <= self.tau and abs(n) <= t / math.sqrt(self.k_max)

    def record(self):
        return {
            "record": "bump_spec",
            "k0": self.k0,
            "tau": self.tau,
            "k_plus": self.k_plus,
            "k_max": self.k_max,
            "M": self.m_taylor,
            "L": self.lipschitz,
            "delta_chart": self.delta_chart,
            "theta": self.theta,
            "phi": self.phi_angle,
            "h": self.h_threshold,
            "epsilon": self.epsilon,
            "rho_blend": self.rho_blend,
            "rho_end": self.rho_end,
        }


def curvature_profile(spec):
    """K(t): linear ramp K0 -> K_plus on [0, tau/4], plateau K_plus after."""

    def profile(t):
        if t < -1e-12 or t > spec.tau + 1e-12:
            raise OutOfRange(f"t={t} outside [0, tau={spec.tau}]")
        return _profile_extended(spec, float(t))

    return profile


def _profile_extended(spec, t):
    quarter = 0.25 * spec.tau
    if t <= 0.0:
        return spec.k0
    if t >= quarter:
        return spec.k_plus
    return spec.k0 + (spec.k_plus - spec.k0) * t / quarter


def _profile_slope(spec, t):
    quarter = 0.25 * spec.tau
    if 0.0 < t < quarter:
        return (spec.k_plus - spec.k0) / quarter
    return 0.0


def fermi_metric(spec):
    """The chart metric on the triangle: f11 = 1 - K(t) n^2, f12 = 0,
    f22 = 1 (OutOfRegion outside the triangle); f11 >= 1/2 there.

    The prescribed profile is the Gauss curvature along the axis, so the
    coefficient of n^2 is the full curvature (the second-order canonical
    form g~11 = 1 - K n^2 of normal-coordinate charts).
    """

    def metric_at(t, n):
        if not spec.in_triangle((t, n)):
            raise OutOfRegion(f"(t={t}, n={n}) outside the chart triangle")
        f11 = 1.0 - _profile_extended(spec, float(t)) * float(n) ** 2
        return np.array([[f11, 0.0], [0.0, 1.0]])

    return metric_at


def _taper_params(spec):
    u0 = spec.width**2
    cap = 1.0 / (2.0 * spec.k_max)
    return u0, cap - u0


def _fermi_extended_jets(spec, u):
    """f~ and its u-derivatives on all of R^2: profile clamped in t and the
    transverse n^2 saturated C^2-smoothly so f~11 in [1/2, 1] everywhere
    while f~ = f exactly on the triangle."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    t = u[:, 0]
    n = u[:, 1]
    p = len(u)

    kc = np.array([_profile_extended(spec, tv) for tv in t])
    kslope = np.array([_profile_slope(spec, tv) for tv in t])

    u0, a = _taper_params(spec)
    un = n * n
    inside = un <= u0
    arg = np.where(inside, 0.0, (un - u0) / a)
    th = np.tanh(arg)
    sech2 = 1.0 - th * th
    q = np.where(inside, un, u0 + a * th)
    dq_du = np.where(inside, 1.0, sech2)
    ddq_du = np.where(inside, 0.0, -2.0 / a * sech2 * th)
    Q = q
    Qp = dq_du * 2.0 * n
    Qpp = ddq_du * 4.0 * n * n + 2.0 * dq_du

    f = np.zeros((p, 2, 2))
    df = np.zeros((p, 2, 2, 2))
    ddf = np.zeros((p, 2, 2, 2, 2))
    f[:, 0, 0] = 1.0 - kc * Q
    f[:, 1, 1] = 1.0
    df[:, 0, 0, 0] = -kslope * Q
    df[:, 1, 0, 0] = -kc * Qp
    # d^2/dt^2 f11 = 0 a.e. (piecewise-linear profile)
    ddf[:, 0, 1, 0, 0] = -kslope * Qp
    ddf[:, 1, 0, 0, 0] = -kslope * Qp
    ddf[:, 1, 1, 0, 0] = -kc * Qpp
    return f, df, ddf


# ---------------------------------------------------------------------------
# C-infinity radial smoothstep


def _sigma(s):
    out = np.zeros_like(s)
    pos = s > 1e-12
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _smoothstep_jets(r, rho0, rho1):
    """(w, w', w'') of the exp-based smoothstep rising 0 -> 1 on [rho0, rho1]."""
    r = np.asarray(r, dtype=float)
    span = rho1 - rho0
    s = np.clip((r - rho0) / span, 0.0, 1.0)
    A = _sigma(s)
    B = _sigma(1.0 - s)
    denom = A + B
    w = np.where(denom > 0, A / np.where(denom > 0, denom, 1.0), 0.0)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        Ap = np.where(s > 1e-12, A / s**2, 0.0)
        Bp = np.where(1.0 - s > 1e-12, -B / (1.0 - s) ** 2, 0.0)
        App = np.where(s > 1e-12, A / s**4 - 2.0 * A / s**3, 0.0)
        Bpp = np.where(1.0 - s > 1e-12, B / (1.0 - s) ** 4 - 2.0 * B / (1.0 - s) ** 3, 0.0)
    interior = (s > 1e-12) & (s < 1.0 - 1e-12)
    N = Ap * B - A * Bp
    wp = np.where(interior, N / denom**2, 0.0)
    Np = App * B - A * Bpp
    wpp = np.where(interior, Np / denom**2 - 2.0 * N * (Ap + Bp) / denom**3, 0.0)
    return w, wp / span, wpp / span**2


# ---------------------------------------------------------------------------
# the assembled bump metric


class BumpMetricField(MetricField):
    """b = (1 - w) Psi_* f~ + w delta with analytic jets everywhere.

    Equal to Psi_* f on the image of the chart triangle, and exactly the
    Euclidean metric outside radius rho_end (hence outside B(0, 1))."""

    def __init__(self, chart, spec):
        self.chart = chart
        self.spec = spec
        self._ddj = chart.psi.third()

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones(len(pts), dtype=bool)
        return out if np.asarray(points).ndim > 1 else bool(out[0])

    def _pushforward_jets(self, pts, order=2):
        psi = self.chart.psi
        u = psi.invert(pts)
        J = psi.jacobian(u)
        DJ = psi.second(u)

        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        A = np.empty_like(J)  # A[p, a, i] = d u_a / d x_i
        A[:, 0, 0] = J[:, 1, 1]
        A[:, 1, 1] = J[:, 0, 0]
        A[:, 0, 1] = -J[:, 0, 1]
        A[:, 1, 0] = -J[:, 1, 0]
        A = A / det[:, None, None]

        F, DF, DDF = _fermi_extended_jets(self.spec, u)

        DA = -np.einsum("pam,pcmb,pbi->pcai", A, DJ, A)
        M = np.einsum("pai,pab,pbj->pij", A, F, A)
        DM = (
            np.einsum("pcai,pab,pbj->pcij", DA, F, A)
            + np.einsum("pai,pcab,pbj->pcij", A, DF, A)
            + np.einsum("pai,pab,pcbj->pcij", A, F, DA)
        )
        dm = np.einsum("pcij,pck->pkij", DM, A)
        if order == 1:
            return M, dm, None

        DDJ = np.broadcast_to(self._ddj, (len(pts),) + self._ddj.shape)
        DDA = -(
            np.einsum("pdam,pcmb,pbi->pcdai", DA, DJ, A)
            + np.einsum("pam,pcdmb,pbi->pcdai", A, DDJ, A)
            + np.einsum("pam,pcmb,pdbi->pcdai", A, DJ, DA)
        )
        DDM = (
            np.einsum("pcdai,pab,pbj->pcdij", DDA, F, A)
            + np.einsum("pcai,pdab,pbj->pcdij", DA, DF, A)
            + np.einsum("pcai,pab,pdbj->pcdij", DA, F, DA)
            + np.einsum("pdai,pcab,pbj->pcdij", DA, DF, A)
            + np.einsum("pai,pcdab,pbj->pcdij", A, DDF, A)
            + np.einsum("pai,pcab,pdbj->pcdij", A, DF, DA)
            + np.einsum("pdai,pab,pcbj->pcdij", DA, F, DA)
            + np.einsum("pai,pdab,pcbj->pcdij", A, DF, DA)
            + np.einsum("pai,pab,pcdbj->pcdij", A, F, DDA)
        )

        ddm = np.einsum("pcdij,pck,pdl->pklij", DDM, A, A) + np.einsum(
            "pcij,pdck,pdl->pklij", DM, DA, A
        )
        return M, dm, ddm

    def first_jets(self, points, check=True):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None]
        p = len(pts)
        eye = np.eye(2)
        g = np.tile(eye, (p, 1, 1))
        dg = np.zeros((p, 2, 2, 2))
        r = np.linalg.norm(pts, axis=1)
        inner = r < self.spec.rho_end - 1e-12
        if inner.any():
            pin = pts[inner]
            m, dm, _ = self._pushforward_jets(pin, order=1)
            rr = r[inner]
            w, wp, _ = _smoothstep_jets(rr, self.spec.rho_blend, self.spec.rho_end)
            xhat = pin / np.maximum(rr, 1e-12)[:, None]
            grad_w = wp[:, None] * xhat
            dev = m - eye
            g[inner] = m - w[:, None, None] * dev
            dg[inner] = (1.0 - w)[:, None, None, None] * dm - np.einsum(
                "pk,pij->pkij", grad_w, dev
            )
        if single:
            return g[0], dg[0]
        return g, dg

    def _jets(self, pts):
        p = len(pts)
        eye = np.eye(2)
        g = np.tile(eye, (p, 1, 1))
        dg = np.zeros((p, 2, 2, 2))
        ddg = np.zeros((p, 2, 2, 2, 2))

        r = np.linalg.norm(pts, axis=1)
        inner = r < self.spec.rho_end - 1e-12
        if not inner.any():
            return g, dg, ddg
        pin = pts[inner]
        m, dm, ddm = self._pushforward_jets(pin)

        rr = r[inner]
        w, wp, wpp = _smoothstep_jets(rr, self.spec.rho_blend, self.spec.rho_end)
        safe_r = np.maximum(rr, 1e-12)
        xhat = pin / safe_r[:, None]
        grad_w = wp[:, None] * xhat
        hess_w = (
            wpp[:, None, None] * np.einsum("pk,pl->pkl", xhat, xhat)
            + (wp / safe_r)[:, None, None]
            * (np.eye(2)[None] - np.einsum("pk,pl->pkl", xhat, xhat))
        )

        dev = m - eye
        g[inner] = m - w[:, None, None] * dev
        dg[inner] = (1.0 - w)[:, None, None, None] * dm - np.einsum(
            "pk,pij->pkij", grad_w, dev
        )
        ddg[inner] = (
            (1.0 - w)[:, None, None, None, None] * ddm
            - np.einsum("pl,pkij->pklij", grad_w, dm)
            - np.einsum("pk,plij->pklij", grad_w, dm)
            - np.einsum("pkl,pij->pklij", hess_w, dev)
        )
        return g, dg, ddg


# ---------------------------------------------------------------------------
# constants estimation and assembly


def _lipschitz_estimates(psi):
    """Numeric Lipschitz constants: L1 = max |J Psi|_2 over B(0, sqrt 2);
    L2 = max |grad(Psi^2/Psi^1)| over a sector clear of the apex (the ratio
    is not Lipschitz at the origin; its role is the cone containment, which
    is verified directly on the triangle image)."""
    th = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
    rad = np.linspace(0.05, math.sqrt(2.0), 24)
    pts = np.stack(
        [np.outer(rad, np.cos(th)).ravel(), np.outer(rad, np.sin(th)).ravel()], axis=1
    )
    J = psi.jacobian(pts)
    l1 = float(np.linalg.norm(J, ord=2, axis=(1, 2)).max())

    ts = np.linspace(0.1, 1.0, 24)
    frac = np.linspace(-0.5, 0.5, 11)
    tt, ff = np.meshgrid(ts, frac, indexing="ij")
    sector = np.stack([tt.ravel(), (tt * ff).ravel()], axis=1)
    vals = psi(sector)
    Js = psi.jacobian(sector)
    p1 = vals[:, 0]
    ok = p1 > 0.02
    grad = (Js[ok, 1, :] * p1[ok, None] - vals[ok, 1, None] * Js[ok, 0, :]) / (
        p1[ok, None] ** 2
    )
    l2 = float(np.linalg.norm(grad, axis=1).max()) if ok.any() else 1.0
    return max(1.0, l1, l2)


def _diffeo_radius(psi, cap=1.2):
    """Largest sampled radius on which Psi stays an orientation-preserving
    local diffeomorphism with a margin, plus a coarse fold check."""
    radii = np.linspace(0.1, cap, 23)
    th = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    best = 0.0
    for rho in radii:
        rr = np.linspace(0.0, rho, 12)
        pts = np.stack(
            [np.outer(rr, np.cos(th)).ravel(), np.outer(rr, np.sin(th)).ravel()], axis=1
        )
        J = psi.jacobian(pts)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if det.min() <= 0.2:
            break
        ring = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1)
        img = psi(ring)
        # fold check: boundary image must wind once, monotonically
        ang = np.unwrap(np.arctan2(img[:, 1], img[:, 0]))
        if not (np.all(np.diff(ang) > 0) or np.all(np.diff(ang) < 0)):
            break
        best = rho
    if best == 0.0:
        raise ChartFailure("chart is not a diffeomorphism on any sampled disk")
    return float(best)


def make_bump_spec(field, theta=math.pi / 4, h_threshold=1.0, epsilon=0.05,
                   safety=0.9, chart=None, spacing=None):
    """Per-sample constants: K0 and the geodesic Taylor bound M from the
    2-jet, Lipschitz and diffeomorphism constants from the realized chart,
    then tau strictly below all four bounds (the paper's suprema over the
    whole admissibility class are not numerically accessible; per-sample
    values give valid, smaller, scales)."""
    z0 = z_point(field, (0.0, 0.0), spacing)
    if z0 > 2.0 * h_threshold:
        raise PreconditionZ(f"Z_0 = {z0:.4g} > 2h = {2 * h_threshold:.4g}")
    if chart is None:
        chart = fermi_chart(field)
    psi = chart.psi
    data = _taylor_data(field)
    k0 = float(gauss_curvature(field, np.zeros(2)))
    m_taylor = max(1.0, float(np.abs(data["B"]).max()), float(np.abs(data["C"]).max()))
    lip = _lipschitz_estimates(psi)
    delta = _diffeo_radius(psi)
    phi = 0.5 * (math.pi / 2.0 - theta)
    bounds = [
        delta / math.sqrt(2.0),
        1.0 / (2.0 * m_taylor),
        math.cos(phi) / (lip * math.sqrt(2.0) + 3.0 * m_taylor),
        math.tan(phi) / (lip * math.sqrt(2.0) + 10.0 * m_taylor**2),
    ]
    tau = safety * min(bounds)
    k_plus = 4.0 * math.pi**2 / tau**2
    k_max = max(1.0, k_plus, abs(k0))

    # triangle image and blend window
    ts = np.linspace(0.0, tau, 40)
    width = tau / math.sqrt(k_max)
    fr = np.linspace(-1.0, 1.0, 9)
    tt, ff = np.meshgrid(ts, fr, indexing="ij")
    tri = np.stack([tt.ravel(), (ff * tt / math.sqrt(k_max) * (tau > 0)).ravel()], axis=1)
    img = psi(tri)
    rho_blend = float(np.linalg.norm(img, axis=1).max()) + 0.05

    ring = np.stack(
        [0.98 * delta * np.cos(np.linspace(0, 2 * np.pi, 128, endpoint=False)),
         0.98 * delta * np.sin(np.linspace(0, 2 * np.pi, 128, endpoint=False))], axis=1
    )
    rho_cov = float(np.linalg.norm(psi(ring), axis=1).min())
    rho_end = min(0.95, rho_cov - 0.02)
    if rho_end <= rho_blend + 0.02:
        raise ChartFailure(
            f"blend window empty: covered radius {rho_cov:.3f}, triangle reach {rho_blend:.3f}"
        )

    spec = BumpSpec(
        k0=k0,
        tau=tau,
        k_plus=k_plus,
        k_max=k_max,
        m_taylor=m_taylor,
        lipschitz=lip,
        delta_chart=delta,
        theta=theta,
        phi_angle=phi,
        h_threshold=h_threshold,
        epsilon=epsilon,
        rho_blend=rho_blend,
        rho_end=rho_end,
    )
    # frontier-cone containment of the triangle image (the Lemma the tau
    # bounds exist to guarantee); checked directly on the samples
    x1 = img[:, 0]
    x2 = img[:, 1]
    pos = x1 > 1e-9
    if x1.max() > math.cos(phi) or np.any(np.abs(x2[pos]) > math.tan(phi) * x1[pos] + 1e-9):
        raise ChartFailure("triangle image escapes the frontier cone")
    return spec, chart


def build_bump(field, theta=math.pi / 4, h_threshold=1.0, epsilon=0.05,
               safety=0.9, chart=None, spacing=None):
    """Bump metric b(g) for an admissible field; raises PreconditionZ or
    ChartFailure (callers report and skip such samples)."""
    spec, chart = make_bump_spec(
        field, theta=theta, h_threshold=h_threshold, epsilon=epsilon,
        safety=safety, chart=chart, spacing=spacing,
    )
    return BumpMetricField(chart, spec)


def frontier_cone_region(spec):
    return Cone(spec.phi_angle, math.cos(spec.phi_angle))


def bump_event(field, theta=math.pi / 4, h_threshold=1.0, epsilon=0.05,
               spacing=None, bump=None):
    """Event U: Z_0(g) < 2h and |g - b(g)|_{C^{2,1}(FC)} < epsilon.

    Returns (flag, record); construction failures fold into False.
    """
    record = {"record": "bump_event", "theta": theta, "h": h_threshold, "epsilon": epsilon}
    z0 = z_point(field, (0.0, 0.0), spacing)
    record["z0"] = z0
    if z0 >= 2.0 * h_threshold:
        record.update({"event": False, "reason": "precondition_z"})
        return False, record
    try:
        b = bump if bump is not None else build_bump(
            field, theta=theta, h_threshold=h_threshold, epsilon=epsilon, spacing=spacing
        )
    except (PreconditionZ, ChartFailure) as exc:
        record.update({"event": False, "reason": type(exc).__name__})
        return False, record
    dist = c21_distance(field, b, frontier_cone_region(b.spec), spacing=spacing)
    record["distance_c21_fc"] = dist
    record["tau"] = b.spec.tau
    flag = dist < epsilon
    record["event"] = bool(flag)
    return bool(flag), record


def bump_jacobi_check(bump_field, h_step=None, horizon=None):
    """Integrate the bump geodesic from (0, e1) and the Jacobi amplitude
    from tau/4 with slope 2 pi / tau; returns (solution, conjugate time,
    j(tau)) for the plateau-sine verification."""
    spec = bump_field.spec
    tau = spec.tau
    if h_step is None:
        h_step = tau / 1500.0
    if horizon is None:
        horizon = 1.05 * tau
    path = integrate(bump_field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, horizon), h_step)
    sol = jacobi_integrate(
        bump_field, path, 0.25 * tau, 0.0, 2.0 * math.pi / tau, tau, step=h_step
    )
    from .jacobi import first_conjugate_point

    conj = first_conjugate_point(bump_field, path, tau, t0=0.25 * tau, step=h_step)
    return sol, conj, float(sol.j[-1])
