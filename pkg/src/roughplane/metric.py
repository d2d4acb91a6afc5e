"""Metric fields on the plane: the SPD transform, evaluators, and local geometry.

A metric field exposes 2-jets: for a batch of points it returns

    g    (p, 2, 2)        the metric,
    dg   (p, 2, 2, 2)     dg[:, k] = d_k g,
    ddg  (p, 2, 2, 2, 2)  ddg[:, k, l] = d_k d_l g (symmetric in k, l),

from which Christoffel symbols and the Gauss curvature are computed
generically.  Grid fields obtained as g = phi(xi) of a sampled tensor field
interpolate bicubically; analytic fields evaluate closed forms; rigid-motion
wrappers conjugate a base field (used by the point-of-view transform).

The eigenvalue map is phi(u) = u + sqrt(u^2 + 1): smooth, increasing,
positive, with phi(u) ~ 2u as u -> +inf and phi(u) ~ 1/(2|u|) as u -> -inf
(growth exponents eta_1 = eta_2 = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain
from .field import GridSpec
from .interpolate import BicubicStack

# ---------------------------------------------------------------------------
# phi: symmetric -> SPD via closed-form 2x2 spectral calculus


def phi_scalar(u):
    u = np.asarray(u, dtype=float)
    return u + np.sqrt(u * u + 1.0)


def phi_scalar_deriv(u):
    u = np.asarray(u, dtype=float)
    return 1.0 + u / np.sqrt(u * u + 1.0)


def phi_grids(x11, x12, x22):
    """Apply phi spectrally to a grid of symmetric matrices given by
    component grids; returns (g11, g12, g22) grids.

    Eigenvalues of [[a, b], [b, c]] are m +/- d with m = (a+c)/2 and
    d = sqrt(((a-c)/2)^2 + b^2); phi(xi) = alpha I + beta (xi - m I) with
    alpha = (phi(m+d) + phi(m-d))/2 and beta = (phi(m+d) - phi(m-d))/(2d),
    falling back to beta = phi'(m) when d ~ 0 (the divided difference limit).
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (x11, x12, x22))
    m = 0.5 * (a + c)
    d = np.hypot(0.5 * (a - c), b)
    hi = phi_scalar(m + d)
    lo = phi_scalar(m - d)
    alpha = 0.5 * (hi + lo)
    small = d < 1e-12
    dsafe = np.where(small, 1.0, d)
    beta = np.where(small, phi_scalar_deriv(m), (hi - lo) / (2.0 * dsafe))
    g11 = alpha + beta * (a - m)
    g12 = beta * b
    g22 = alpha + beta * (c - m)
    return g11, g12, g22


def phi_transform(xi):
    """phi of a single symmetric 2x2 matrix; eigenvectors preserved."""
    xi = np.asarray(xi, dtype=float)
    g11, g12, g22 = phi_grids(xi[0, 0], xi[0, 1], xi[1, 1])
    return np.array([[g11, g12], [g12, g22]])


# ---------------------------------------------------------------------------
# evaluator base


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    return (pts[None] if single else pts), single


class MetricField:
    """Base class: subclasses implement _jets(points) and contains(points)."""

    def contains(self, points):
        pts, single = _as_points(points)
        out = np.ones(len(pts), dtype=bool)
        return bool(out[0]) if single else out

    def jets(self, points, check=True):
        pts, single = _as_points(points)
        if check:
            ok = np.atleast_1d(self.contains(pts))
            if not ok.all():
                bad = pts[~ok][0]
                raise OutOfDomain(f"point {bad} outside metric domain")
        g, dg, ddg = self._jets(pts)
        if single:
            return g[0], dg[0], ddg[0]
        return g, dg, ddg

    def metric(self, points, check=True):
        pts, single = _as_points(points)
        g, _, _ = self.jets(pts, check)
        return g[0] if single else g

    def first_jets(self, points, check=True):
        """(g, dg) only; overridden where skipping ddg assembly matters
        (the geodesic flow's inner loop)."""
        pts, single = _as_points(points)
        if check:
            ok = np.atleast_1d(self.contains(pts))
            if not ok.all():
                raise OutOfDomain(f"point {pts[~ok][0]} outside metric domain")
        g, dg, _ = self._jets(pts)
        if single:
            return g[0], dg[0]
        return g, dg


# ---------------------------------------------------------------------------
# local geometric quantities (generic over any MetricField)


def inverse_metric(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1]
    inv[..., 1, 1] = g[..., 0, 0]
    inv[..., 0, 1] = -g[..., 0, 1]
    inv[..., 1, 0] = -g[..., 1, 0]
    return inv / det[..., None, None]


def christoffel_from_jets(g, dg):
    """Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij).

    Shapes: g (..., 2, 2), dg (..., 2, 2, 2) with dg[..., k] = d_k g.
    Returns (..., 2, 2, 2) indexed [k, i, j], symmetric in (i, j).
    """
    ginv = inverse_metric(g)
    # dg indexed [p, l, i, j] = d_l g_ij
    bracket = (
        np.einsum("...ilj->...lij", dg)  # d_i g_lj
        + np.einsum("...jli->...lij", dg)  # d_j g_li
        - dg  # d_l g_ij
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, bracket)


def christoffel(field, points):
    pts, single = _as_points(points)
    g, dg, _ = field.jets(pts)
    gam = christoffel_from_jets(g, dg)
    return gam[0] if single else gam


def christoffel_gradient(field, points):
    """d_m Gamma^k_ij by analytic differentiation of the Christoffel formula.

    Returns (..., 2, 2, 2, 2) indexed [m, k, i, j].
    """
    pts, single = _as_points(points)
    g, dg, ddg = field.jets(pts)
    ginv = inverse_metric(g)
    bracket = (
        np.einsum("...ilj->...lij", dg)
        + np.einsum("...jli->...lij", dg)
        - dg
    )
    # d_m bracket from second derivatives: ddg[p, m, l, i, j] = d_m d_l g_ij
    dbracket = (
        np.einsum("...milj->...mlij", ddg)
        + np.einsum("...mjli->...mlij", ddg)
        - ddg
    )
    # d_m ginv = -ginv (d_m g) ginv
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
    out = 0.5 * (
        np.einsum("...mkl,...lij->...mkij", dginv, bracket)
        + np.einsum("...kl,...mlij->...mkij", ginv, dbracket)
    )
    return out[0] if single else out


def gauss_curvature(field, points):
    """Gauss curvature via the Brioschi formula (any coordinates).

    K = (det M1 - det M2) / det(g)^2 with the classical bordered matrices
    built from g and its first two derivatives.
    """
    pts, single = _as_points(points)
    g, dg, ddg = field.jets(pts)
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    E1, E2 = dg[..., 0, 0, 0], dg[..., 1, 0, 0]
    F1, F2 = dg[..., 0, 0, 1], dg[..., 1, 0, 1]
    G1, G2 = dg[..., 0, 1, 1], dg[..., 1, 1, 1]
    E22 = ddg[..., 1, 1, 0, 0]
    G11 = ddg[..., 0, 0, 1, 1]
    F12 = ddg[..., 0, 1, 0, 1]

    def det3(a11, a12, a13, a21, a22, a23, a31, a32, a33):
        return (
            a11 * (a22 * a33 - a23 * a32)
            - a12 * (a21 * a33 - a23 * a31)
            + a13 * (a21 * a32 - a22 * a31)
        )

    m1 = det3(
        -0.5 * E22 + F12 - 0.5 * G11,
        0.5 * E1,
        F1 - 0.5 * E2,
        F2 - 0.5 * G1,
        E,
        F,
        0.5 * G2,
        F,
        G,
    )
    m2 = det3(0.0 * E, 0.5 * E2, 0.5 * G1, 0.5 * E2, E, F, 0.5 * G1, F, G)
    det = E * G - F * F
    K = (m1 - m2) / (det * det)
    return K[0] if single else K


def log_det_gradient(field, points):
    """grad log det g via Jacobi's formula: d_k log det g = tr(g^{-1} d_k g)."""
    pts, single = _as_points(points)
    g, dg, _ = field.jets(pts)
    ginv = inverse_metric(g)
    out = np.einsum("...ij,...kji->...k", ginv, dg)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# grid-backed field


class GridMetricField(MetricField):
    """g = phi(xi) of a sampled tensor field, bicubically interpolated.

    The metric component grids are computed nodewise by the closed-form
    spectral calculus; their first and second derivative grids come from
    FFT differentiation of the (smooth, periodic) metric grids, so the
    stored derivative channels are spectrally accurate derivatives of the
    same realization.  Each of the 18 channels is interpolated
    independently; the (small, O(h^2)) mismatch between the interpolated
    derivative and the derivative of the interpolant is bounded in tests.

    The valid domain is the sampled square shrunk by ``margin_cells`` so
    trajectories never straddle the periodic seam.
    """

    def __init__(self, grid, g11, g12, g22, margin_cells=2, label="grid"):
        self.grid = grid
        self.label = label
        chans = [g11, g12, g22]
        for comp in (g11, g12, g22):
            d1, d2, d11, d12, d22 = _spectral_grid_derivatives(comp, grid)
            chans.extend([d1, d2, d11, d12, d22])
        # channel layout: [g(3) | per-comp (d1, d2, d11, d12, d22)(5x3)]
        self._stack = BicubicStack(np.stack(chans), grid.offset, grid.h)
        self._bound = grid.extent / 2.0 - margin_cells * grid.h
        node_min = np.minimum(g11 * g22 - g12 * g12, np.minimum(g11, g22))
        self.min_node_eigen_proxy = float(node_min.min())

    @classmethod
    def from_sample(cls, sample, margin_cells=2):
        g11, g12, g22 = phi_grids(
            sample.values["11"], sample.values["12"], sample.values["22"]
        )
        fld = cls(sample.grid, g11, g12, g22, margin_cells, label="phi-field")
        fld.sample = sample
        return fld

    def contains(self, points):
        pts, single = _as_points(points)
        ok = np.max(np.abs(pts), axis=1) <= self._bound
        return bool(ok[0]) if single else ok

    def flow_channels(self, x):
        """Raw channel vector at one point for the geodesic inner loop."""
        if abs(x[0]) > self._bound or abs(x[1]) > self._bound:
            raise OutOfDomain(f"point {x} outside metric domain")
        return self._stack._point(float(x[0]), float(x[1]))

    def first_jets(self, points, check=True):
        pts, single = _as_points(points)
        if check:
            ok = np.max(np.abs(pts), axis=1) <= self._bound
            if not ok.all():
                raise OutOfDomain(f"point {pts[~ok][0]} outside metric domain")
        vals = self._stack(pts)
        p = len(pts)
        g = np.empty((p, 2, 2))
        dg = np.empty((p, 2, 2, 2))
        for ci, (i, j) in enumerate(((0, 0), (0, 1), (1, 1))):
            base = 3 + 5 * ci
            g[:, i, j] = g[:, j, i] = vals[:, ci]
            dg[:, 0, i, j] = dg[:, 0, j, i] = vals[:, base + 0]
            dg[:, 1, i, j] = dg[:, 1, j, i] = vals[:, base + 1]
        if single:
            return g[0], dg[0]
        return g, dg

    def _jets(self, pts):
        vals = self._stack(pts)
        p = len(pts)
        g = np.empty((p, 2, 2))
        dg = np.empty((p, 2, 2, 2))
        ddg = np.empty((p, 2, 2, 2, 2))
        for ci, (i, j) in enumerate(((0, 0), (0, 1), (1, 1))):
            base = 3 + 5 * ci
            g[:, i, j] = g[:, j, i] = vals[:, ci]
            dg[:, 0, i, j] = dg[:, 0, j, i] = vals[:, base + 0]
            dg[:, 1, i, j] = dg[:, 1, j, i] = vals[:, base + 1]
            ddg[:, 0, 0, i, j] = ddg[:, 0, 0, j, i] = vals[:, base + 2]
            ddg[:, 0, 1, i, j] = ddg[:, 0, 1, j, i] = vals[:, base + 3]
            ddg[:, 1, 0, i, j] = ddg[:, 1, 0, j, i] = vals[:, base + 3]
            ddg[:, 1, 1, i, j] = ddg[:, 1, 1, j, i] = vals[:, base + 4]
        return g, dg, ddg


def _spectral_grid_derivatives(arr, grid):
    om = grid.angular_frequencies()
    coeff = np.fft.fft2(arr)
    iw1 = 1j * om[:, None]
    iw2 = 1j * om[None, :]

    def inv(c):
        return np.real(np.fft.ifft2(c))

    return (
        inv(coeff * iw1),
        inv(coeff * iw2),
        inv(coeff * iw1 * iw1),
        inv(coeff * iw1 * iw2),
        inv(coeff * iw2 * iw2),
    )


def spd_audit(field):
    """Min eigenvalue of g over the field's grid nodes (phi output is SPD;
    this audits the realized grids)."""
    sample_grid = field.grid
    ax = sample_grid.axis()
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    inside = field.contains(pts)
    g = field.metric(pts[inside], check=False)
    tr = g[:, 0, 0] + g[:, 1, 1]
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    disc = np.sqrt(np.maximum((0.5 * tr) ** 2 - det, 0.0))
    return float((0.5 * tr - disc).min())


# ---------------------------------------------------------------------------
# analytic fields


class FlatMetric(MetricField):
    def _jets(self, pts):
        p = len(pts)
        g = np.broadcast_to(np.eye(2), (p, 2, 2)).copy()
        return g, np.zeros((p, 2, 2, 2)), np.zeros((p, 2, 2, 2, 2))


class ConstantMetric(MetricField):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def _jets(self, pts):
        p = len(pts)
        g = np.broadcast_to(self.matrix, (p, 2, 2)).copy()
        return g, np.zeros((p, 2, 2, 2)), np.zeros((p, 2, 2, 2, 2))


class ConformalMetric(MetricField):
    """g = exp(2 lam(x)) * delta for a user-provided conformal factor.

    ``lam_jets(points) -> (lam, grad, hess)`` with shapes (p,), (p,2), (p,2,2).
    """

    def __init__(self, lam_jets, domain_radius=np.inf):
        self._lam_jets = lam_jets
        self._radius = domain_radius

    def contains(self, points):
        pts, single = _as_points(points)
        ok = np.linalg.norm(pts, axis=1) < self._radius
        return bool(ok[0]) if single else ok

    def _jets(self, pts):
        lam, grad, hess = self._lam_jets(pts)
        p = len(pts)
        factor = np.exp(2.0 * lam)
        eye = np.eye(2)
        g = factor[:, None, None] * eye
        dg = 2.0 * grad[:, :, None, None] * g[:, None, :, :]
        dd = 2.0 * hess + 4.0 * np.einsum("pk,pl->pkl", grad, grad)
        ddg = dd[:, :, :, None, None] * g[:, None, None, :, :]
        return g, dg, ddg


def constant_curvature_metric(k0):
    """Stereographic constant-curvature metric g = (1 + k0 |x|^2 / 4)^-2 delta.

    Gauss curvature is k0 everywhere; k0 > 0 is the round sphere of radius
    2/sqrt(k0) minus the point at infinity, k0 < 0 the Poincare-type disk of
    radius 2/sqrt(-k0).
    """

    def lam_jets(pts):
        q = 1.0 + 0.25 * k0 * np.einsum("pk,pk->p", pts, pts)
        lam = -np.log(q)
        grad = -0.5 * k0 * pts / q[:, None]
        hess = (
            -0.5 * k0 * np.eye(2)[None] / q[:, None, None]
            + 0.25 * k0 * k0 * np.einsum("pk,pl->pkl", pts, pts) / (q * q)[:, None, None]
        )
        return lam, grad, hess

    radius = np.inf if k0 >= 0 else 2.0 / np.sqrt(-k0) - 1e-9
    return ConformalMetric(lam_jets, domain_radius=radius)


def linear_conformal_metric(a):
    """g = exp(2 a x^1) delta; closed-form Christoffels for oracle tests."""

    def lam_jets(pts):
        lam = a * pts[:, 0]
        grad = np.zeros_like(pts)
        grad[:, 0] = a
        hess = np.zeros((len(pts), 2, 2))
        return lam, grad, hess

    return ConformalMetric(lam_jets)


# ---------------------------------------------------------------------------
# rigid motions and conjugated fields


@dataclass(frozen=True)
class RigidMotion:
    """Orientation-preserving isometry u -> translation + rotation @ u."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if not np.allclose(rot @ rot.T, np.eye(2), atol=1e-12):
            raise ValueError("rotation must be orthogonal")
        if np.linalg.det(rot) < 0:
            raise ValueError("rotation must preserve orientation (det = +1)")

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))

    def apply(self, points):
        pts, single = _as_points(points)
        out = self.translation + pts @ self.rotation.T
        return out[0] if single else out

    def inverse(self):
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other):
        """Motion equal to applying ``other`` first, then self."""
        return RigidMotion(
            self.rotation @ other.rotation,
            self.translation + self.rotation @ other.translation,
        )


class PerturbedMetricField(MetricField):
    """Base plus Gaussian-bump tensor modes with analytic jets.

    Each mode is (amplitude, center, width, comp) adding
    amplitude * exp(-|x-c|^2 / (2 width^2)) to one symmetric component
    (comp in {(0,0), (0,1), (1,1)}); used for perturbation-stability sweeps.
    """

    def __init__(self, base, modes):
        self.base = base
        self.modes = list(modes)

    def contains(self, points):
        return self.base.contains(points)

    def _jets(self, pts):
        g, dg, ddg = self.base.jets(pts, check=False)
        g, dg, ddg = g.copy(), dg.copy(), ddg.copy()
        for amp, center, width, comp in self.modes:
            c = np.asarray(center, dtype=float)
            d = pts - c
            r2 = np.einsum("pk,pk->p", d, d)
            w2 = width * width
            val = amp * np.exp(-0.5 * r2 / w2)
            grad = -val[:, None] * d / w2
            hess = (
                val[:, None, None] * (np.einsum("pk,pl->pkl", d, d) / (w2 * w2))
                - val[:, None, None] * np.eye(2)[None] / w2
            )
            i, j = comp
            g[:, i, j] += val
            dg[:, :, i, j] += grad
            ddg[:, :, :, i, j] += hess
            if i != j:
                g[:, j, i] += val
                dg[:, :, j, i] += grad
                ddg[:, :, :, j, i] += hess
        return g, dg, ddg


class TransformedMetricField(MetricField):
    """Pull-back of a base field under a rigid motion:

        (sigma g)(u) = O^T g(c + O u) O,

    evaluated lazily, so the transform is an exact isometry with no
    resampling loss.  Derivatives conjugate accordingly.
    """

    def __init__(self, base, motion):
        self.base = base
        self.motion = motion

    def contains(self, points):
        return self.base.contains(self.motion.apply(points))

    def _jets(self, pts):
        O = self.motion.rotation
        g0, dg0, ddg0 = self.base.jets(self.motion.apply(pts), check=False)
        g = np.einsum("ai,pab,bj->pij", O, g0, O)
        # d_k (sigma g) = sum_m O_mk * O^T (d_m g) O
        rot = np.einsum("ai,pmab,bj->pmij", O, dg0, O)
        dg = np.einsum("mk,pmij->pkij", O, rot)
        rot2 = np.einsum("ai,pmnab,bj->pmnij", O, ddg0, O)
        ddg = np.einsum("mk,nl,pmnij->pklij", O, O, rot2)
        return g, dg, ddg
