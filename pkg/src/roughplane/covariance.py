"""Compactly supported radial covariance for the Gaussian tensor field.

The scalar profile ``c(r)`` generates the 4-index covariance tensor

    c_ijkl(x, y) = c(|x - y|) * (delta_ik delta_jl + delta_il delta_jk)

of a mean-zero Gaussian symmetric 2-tensor field.  Expanding the Kronecker
deltas shows the three stored components decouple into independent scalar
fields:

    Cov(xi_11, xi_11) = 2 c,   Cov(xi_22, xi_22) = 2 c,
    Cov(xi_12, xi_12) =   c,   all cross-covariances = 0,

which is what the sampler in :mod:`roughplane.field` relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORT_RADIUS = 1.0

# Relative tolerance below which a negative Fourier coefficient of the
# discretized kernel is treated as roundoff rather than indefiniteness.
SPECTRUM_RTOL = 1e-10


def wendland_profile(r, amplitude=1.0):
    """Wendland C^6 radial function, positive definite in dimension <= 3.

    c(r) = amplitude * (1-r)^8 (32 r^3 + 25 r^2 + 8 r + 1) for 0 <= r < 1,
    and identically 0 for r >= 1.
    """
    r = np.abs(np.asarray(r, dtype=float))
    inside = r < SUPPORT_RADIUS
    rr = np.where(inside, r, 0.0)
    poly = 32.0 * rr**3 + 25.0 * rr**2 + 8.0 * rr + 1.0
    vals = amplitude * (1.0 - rr) ** 8 * poly
    out = np.where(inside, vals, 0.0)
    if np.isscalar(r) or out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CovarianceModel:
    """Radial covariance c(r), compactly supported on [0, 1).

    Parameters
    ----------
    amplitude : float
        Variance scale; c(0) = amplitude.  amplitude = 0 gives the
        degenerate (identically flat) model.
    """

    amplitude: float = 1.0
    support_radius: float = SUPPORT_RADIUS

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.support_radius != SUPPORT_RADIUS:
            raise ValueError("support radius is fixed at 1")

    def profile(self, r):
        """Evaluate c(r)."""
        return wendland_profile(r, self.amplitude)

    @property
    def c0(self):
        """c(0) = single-point variance scale."""
        return float(self.amplitude)


def cov_tensor(x, y, model):
    """Covariance 4-tensor c_ijkl(x, y), shape (2, 2, 2, 2).

    c_ijkl = c(|x-y|) (delta_ik delta_jl + delta_il delta_jk).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = model.profile(np.linalg.norm(x - y))
    eye = np.eye(2)
    return c * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))


def component_covariance(model, r):
    """Covariance of the three stored components at lag r.

    Returns (cov_11, cov_12, cov_22) = (2c(r), c(r), 2c(r)); cross terms
    between distinct components vanish identically.
    """
    c = model.profile(r)
    return 2.0 * c, c, 2.0 * c


def kernel_grid(model, n, extent, scale=1.0):
    """Sample ``scale * c`` at periodic wrap-around distances on an n x n grid.

    Entry [j, k] holds the kernel at the minimum-image lag between node
    (j, k) and node (0, 0) on the periodic domain of physical size
    ``extent`` x ``extent``.
    """
    h = extent / n
    idx = np.arange(n)
    wrapped = np.minimum(idx, n - idx) * h
    dx, dy = np.meshgrid(wrapped, wrapped, indexing="ij")
    return scale * model.profile(np.hypot(dx, dy))


def spectral_density(model, n, extent, scale=1.0):
    """2-D DFT eigenvalues of the periodized kernel (circulant embedding).

    For a compactly supported kernel and extent >= 2 * support radius the
    periodization does not overlap, so these are the exact covariance
    eigenvalues of the stationary field on the torus.
    """
    lam = np.fft.fft2(kernel_grid(model, n, extent, scale))
    return lam.real


def check_spectrum(model, n, extent, rtol=SPECTRUM_RTOL):
    """Return the spectral density, raising NonPositiveSpectrum if any
    eigenvalue is negative beyond ``rtol`` relative to the maximum."""
    from .errors import NonPositiveSpectrum

    lam = spectral_density(model, n, extent)
    floor = -rtol * max(lam.max(), 1e-300)
    if lam.min() < floor:
        raise NonPositiveSpectrum(
            f"min spectral coefficient {lam.min():.3e} < tolerance {floor:.3e} "
            f"(n={n}, extent={extent})"
        )
    return np.clip(lam, 0.0, None)
