"""The fluctuation functional Z_D and compact region descriptors.

    Z_D(g) = max( |g - delta|_{C^{2,1}(D)},  |g^{-1} - delta|_{C^{1,1}(D)} )

where the C^{alpha,1} seminorm over a node set is the max of the
component-wise Frobenius norms of the tensor and its derivatives up to
order alpha, plus the discrete Lipschitz constant of the order-alpha
derivatives over adjacent nodes.  Frobenius norms make Z invariant under
rigid motions, so Z computed in point-of-view coordinates equals Z of the
corresponding lens set in the original chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import inverse_metric


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def contains(self, pts):
        c = np.asarray(self.center, dtype=float)
        return np.linalg.norm(pts - c, axis=1) <= self.radius

    def bounding_box(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Lens:
    """Intersection of two balls, e.g. B(exit point, 2) cap B(0, r)."""

    center1: tuple
    radius1: float
    center2: tuple
    radius2: float

    def contains(self, pts):
        c1 = np.asarray(self.center1, dtype=float)
        c2 = np.asarray(self.center2, dtype=float)
        return (np.linalg.norm(pts - c1, axis=1) <= self.radius1) & (
            np.linalg.norm(pts - c2, axis=1) <= self.radius2
        )

    def bounding_box(self):
        c1 = np.asarray(self.center1, dtype=float)
        c2 = np.asarray(self.center2, dtype=float)
        lo = np.maximum(c1 - self.radius1, c2 - self.radius2)
        hi = np.minimum(c1 + self.radius1, c2 + self.radius2)
        return lo, hi


@dataclass(frozen=True)
class Cone:
    """Truncated cone from the origin along +x1 of half-angle ``half_angle``
    and axial extent ``length`` (the frontier cone is Cone(phi, cos(phi)))."""

    half_angle: float
    length: float

    def contains(self, pts):
        x1 = pts[:, 0]
        x2 = pts[:, 1]
        return (x1 >= 0.0) & (x1 <= self.length) & (np.abs(x2) <= np.tan(self.half_angle) * x1)

    def bounding_box(self):
        half = np.tan(self.half_angle) * self.length
        return np.array([0.0, -half]), np.array([self.length, half])


@dataclass(frozen=True)
class Point:
    """Infinitesimal neighborhood of a point: realized as the 3x3 lattice
    patch around it so the local Lipschitz part is measurable."""

    location: tuple

    def contains(self, pts):
        return np.ones(len(pts), dtype=bool)

    def bounding_box(self):
        p = np.asarray(self.location, dtype=float)
        return p, p


@dataclass(frozen=True)
class FluctuationValue:
    value: float
    region: object


def region_lattice(region, spacing):
    """Axis-aligned lattice covering the region at the given spacing.

    Returns (points (m, 2), rows (m,), cols (m,)) with lattice indices used
    for adjacency; Point regions get a 3x3 patch.
    """
    if isinstance(region, Point):
        p = np.asarray(region.location, dtype=float)
        offs = spacing * np.arange(-1, 2)
        px, py = np.meshgrid(p[0] + offs, p[1] + offs, indexing="ij")
        pts = np.stack([px.ravel(), py.ravel()], axis=1)
        rows, cols = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
        return pts, rows.ravel(), cols.ravel()
    lo, hi = region.bounding_box()
    if np.any(hi < lo):
        raise ValueError("empty region")
    for attempt in range(4):
        step = spacing / 2**attempt
        nx = max(int(np.ceil((hi[0] - lo[0]) / step)) + 1, 2)
        ny = max(int(np.ceil((hi[1] - lo[1]) / step)) + 1, 2)
        ax = lo[0] + step * np.arange(nx)
        ay = lo[1] + step * np.arange(ny)
        px, py = np.meshgrid(ax, ay, indexing="ij")
        pts = np.stack([px.ravel(), py.ravel()], axis=1)
        rows, cols = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        rows, cols = rows.ravel(), cols.ravel()
        mask = region.contains(pts)
        if mask.any():
            return pts[mask], rows[mask], cols[mask]
    # region thinner than the finest lattice: collapse to its box center
    center = 0.5 * (lo + hi)
    return center[None, :], np.zeros(1, dtype=int), np.zeros(1, dtype=int)


def _frob(mats):
    return np.sqrt(np.einsum("...ij,...ij->...", mats, mats))


def _frob_order(tensors):
    """Frobenius norm of the full derivative tensor per node: contraction
    over every index except the leading node axis.  One norm per derivative
    order keeps Z invariant under rigid motions (per-direction matrix norms
    would not be: rotations mix the derivative directions)."""
    flat = tensors.reshape(len(tensors), -1)
    return np.linalg.norm(flat, axis=1)


def _lipschitz(pts, rows, cols, tensors):
    """Max Frobenius difference quotient over lattice-adjacent node pairs,
    normalized by the actual node distances."""
    index = {(r, c): i for i, (r, c) in enumerate(zip(rows, cols))}
    best = 0.0
    flat = tensors.reshape(len(tensors), -1)
    for dr, dc in ((1, 0), (0, 1)):
        pairs = [
            (i, index[(r + dr, c + dc)])
            for (r, c), i in index.items()
            if (r + dr, c + dc) in index
        ]
        if not pairs:
            continue
        ii, jj = np.array(pairs).T
        dist = np.linalg.norm(pts[ii] - pts[jj], axis=1)
        diff = np.linalg.norm(flat[ii] - flat[jj], axis=1) / np.maximum(dist, 1e-300)
        best = max(best, float(diff.max()))
    return best


def z_fluctuation(field, region, spacing=None, lattice=None):
    """Z_D(g) over the region, sampled on a lattice of the given spacing
    (default: the field's own grid spacing, else 0.02).

    ``lattice`` injects explicit (points, rows, cols) sample nodes; rigid
    motions of a field then compare over the same physical nodes, which is
    what makes the rotation-invariance of Z exact rather than
    lattice-placement-dependent.
    """
    if spacing is None:
        spacing = getattr(getattr(field, "grid", None), "h", 0.02)
    if lattice is not None:
        pts, rows, cols = lattice
    else:
        pts, rows, cols = region_lattice(region, spacing)
    g, dg, ddg = field.jets(pts)

    eye = np.eye(2)
    dev = g - eye
    stats = [float(_frob(dev).max())]
    stats.append(float(_frob_order(dg).max()))
    # full (k, l) tensor: the symmetric mixed slot must count twice for the
    # norm to be rotation invariant
    stats.append(float(_frob_order(ddg).max()))
    stats.append(_lipschitz(pts, rows, cols, ddg))
    z_direct = max(stats)

    ginv = inverse_metric(g)
    dev_inv = ginv - eye
    # d_k g^{-1} = -g^{-1} (d_k g) g^{-1}
    dginv = -np.einsum("pia,pkab,pbj->pkij", ginv, dg, ginv)
    stats_inv = [float(_frob(dev_inv).max())]
    stats_inv.append(float(_frob_order(dginv).max()))
    stats_inv.append(_lipschitz(pts, rows, cols, dginv))
    z_inv = max(stats_inv)

    return FluctuationValue(max(z_direct, z_inv), region)


def z_point(field, location, spacing=None):
    """Z at a single point: the jet-value seminorm

        max(|g - delta|, |dg|, |ddg|, |g^{-1} - delta|, |d(g^{-1})|)

    at the point (Frobenius norms, no Lipschitz term).  This is the
    admissibility gate of the bump construction: boundedness of the 2-jet
    at the origin, which is what makes the admissible class compact.  The
    discrete Lipschitz term of the region-based Z is a neighborhood
    quantity and would blow up on metrics whose second derivatives ramp at
    the bump's own scale.
    """
    pts = np.atleast_1d(np.asarray(location, dtype=float))[None, :]
    g, dg, ddg = field.jets(pts)
    eye = np.eye(2)
    ginv = inverse_metric(g)
    dginv = -np.einsum("pia,pkab,pbj->pkij", ginv, dg, ginv)
    return float(
        max(
            _frob(g - eye).max(),
            _frob_order(dg).max(),
            _frob_order(ddg).max(),
            _frob(ginv - eye).max(),
            _frob_order(dginv).max(),
        )
    )


def c21_distance(field_a, field_b, region, spacing=None):
    """|a - b|_{C^{2,1}(region)}: max Frobenius deviation of the difference
    tensor and its derivatives up to order 2, plus the discrete Lipschitz
    constant of the second derivatives (the norm in the bump event)."""
    if spacing is None:
        spacing = getattr(getattr(field_a, "grid", None), "h", 0.02)
    pts, rows, cols = region_lattice(region, spacing)
    ga, dga, ddga = field_a.jets(pts)
    gb, dgb, ddgb = field_b.jets(pts)
    dev = ga - gb
    ddev = dga - dgb
    dddev = ddga - ddgb
    stats = [float(_frob(dev).max())]
    stats.append(float(_frob_order(ddev).max()))
    stats.append(float(_frob_order(dddev).max()))
    stats.append(_lipschitz(pts, rows, cols, dddev))
    return max(stats)
