"""Sampling Gaussian symmetric 2-tensor fields on a periodic grid.

Circulant embedding: on a periodic n x n grid of physical extent E >= 2
(twice the covariance support radius), the covariance matrix of a
stationary scalar field is block-circulant and is diagonalized by the 2-D
DFT with eigenvalues Lambda = FFT2(kernel grid).  A sample is

    X = sqrt(N) * Re( IFFT2( sqrt(Lambda) * (eps1 + i eps2) ) ),

with eps1, eps2 independent standard normal grids and N = n^2; the grid
covariance is then exactly the wrapped kernel.  Three independent scalar
fields with kernels (2c, c, 2c) give the components (xi_11, xi_12, xi_22);
see roughplane.covariance for why the tensor covariance forces this
decomposition.

Derivative grids are spectral: the same Fourier coefficients multiplied by
(i omega), so they are exact derivatives of the band-limited sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, check_spectrum

_COMPONENTS = ("11", "12", "22")
_MAGIC = b"RPFIELD1"


@dataclass(frozen=True)
class GridSpec:
    """Square periodic grid: physical extent and node count per side.

    Nodes sit at coordinates offset + j*h, j = 0..n-1, h = extent/n, with
    ``offset = -extent/2`` so the origin is a node for even n.
    """

    extent: float
    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("grid too coarse (n >= 8 required)")
        if self.extent < 2.0:
            raise ValueError("grid extent must be >= 2 x covariance support radius")

    @property
    def h(self):
        return self.extent / self.n

    @property
    def offset(self):
        return -self.extent / 2.0

    def axis(self):
        return self.offset + self.h * np.arange(self.n)

    def angular_frequencies(self):
        """Angular frequencies 2*pi*fftfreq for spectral differentiation."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)


def derive_seeds(master_seed, count):
    """Counter-based seed splitting: child i is SeedSequence(master, spawn_key=(i,)).

    Independent of thread schedule, so parallel Monte Carlo runs are
    reproducible for a fixed master seed.
    """
    return [np.random.SeedSequence(entropy=master_seed, spawn_key=(i,)) for i in range(count)]


def _sample_scalar(lam, rng, n):
    """One stationary scalar sample from spectral eigenvalues ``lam``."""
    eps = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    coeff = np.sqrt(lam) * eps
    return n * np.real(np.fft.ifft2(coeff)), coeff


def _spectral_derivatives(coeff, grid, n):
    """First and second derivative grids of Re(sqrt(N) IFFT2(coeff))."""
    om = grid.angular_frequencies()
    iw1 = 1j * om[:, None]
    iw2 = 1j * om[None, :]
    scale = n  # sqrt(N) with N = n^2

    def inv(c):
        return scale * np.real(np.fft.ifft2(c))

    d1 = inv(coeff * iw1)
    d2 = inv(coeff * iw2)
    d11 = inv(coeff * iw1 * iw1)
    d12 = inv(coeff * iw1 * iw2)
    d22 = inv(coeff * iw2 * iw2)
    return (d1, d2), (d11, d12, d22)


class TensorFieldSample:
    """One Gaussian realization of the symmetric tensor field on a grid.

    Attributes
    ----------
    values : dict
        Component name ("11", "12", "22") -> (n, n) grid.
    d1, d2 : dict
        First-derivative grids per component (d/dx1, d/dx2).
    dd : dict
        Second-derivative grids per component, keys "11", "12", "22" of the
        derivative multi-index (d^2/dx1^2, d^2/dx1 dx2, d^2/dx2^2).
    """

    def __init__(self, model, grid, seed, values, d1, d2, dd):
        self.model = model
        self.grid = grid
        self.seed = seed
        self.values = values
        self.d1 = d1
        self.d2 = d2
        self.dd = dd

    def xi_at_node(self, j, k):
        """Symmetric 2x2 matrix at grid node (j, k)."""
        return np.array(
            [
                [self.values["11"][j, k], self.values["12"][j, k]],
                [self.values["12"][j, k], self.values["22"][j, k]],
            ]
        )

    def component_stack(self):
        """(3, n, n) array ordered (xi_11, xi_12, xi_22)."""
        return np.stack([self.values[c] for c in _COMPONENTS])


def sample_field(model, grid, seed):
    """Draw one TensorFieldSample.

    Deterministic in (model, grid, seed): the same inputs give bit-identical
    grids.  Raises NonPositiveSpectrum for indefinite discretized kernels.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(entropy=int(seed))
    rng = np.random.Generator(np.random.Philox(ss))
    n = grid.n

    values, d1g, d2g, ddg = {}, {}, {}, {}
    if model.amplitude == 0.0:
        zero = np.zeros((n, n))
        for comp in _COMPONENTS:
            values[comp] = zero.copy()
            d1g[comp] = zero.copy()
            d2g[comp] = zero.copy()
            ddg[comp] = {k: zero.copy() for k in _COMPONENTS}
        return TensorFieldSample(model, grid, seed, values, d1g, d2g, ddg)

    # Diagonal components carry kernel 2c, the off-diagonal carries c.
    lam_diag = check_spectrum(model, n, grid.extent) * 2.0
    lam_off = lam_diag / 2.0
    for comp, lam in (("11", lam_diag), ("12", lam_off), ("22", lam_diag)):
        vals, coeff = _sample_scalar(lam, rng, n)
        (da, db), (daa, dab, dbb) = _spectral_derivatives(coeff, grid, n)
        values[comp] = vals
        d1g[comp] = da
        d2g[comp] = db
        ddg[comp] = {"11": daa, "12": dab, "22": dbb}
    return TensorFieldSample(model, grid, seed, values, d1g, d2g, ddg)


def save_field(sample, path):
    """Binary container: magic, JSON header, little-endian float64 payload.

    Payload order: values, d1, d2, dd("11","12","22") per component, each
    row-major.
    """
    header = {
        "extent": sample.grid.extent,
        "n": sample.grid.n,
        "seed": _seed_repr(sample.seed),
        "amplitude": sample.model.amplitude,
        "components": list(_COMPONENTS),
    }
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(len(raw)).tobytes())
        fh.write(raw)
        for comp in _COMPONENTS:
            for arr in _payload_arrays(sample, comp):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a roughplane field container")
        hlen = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(hlen).decode())
        grid = GridSpec(header["extent"], header["n"])
        model = CovarianceModel(header["amplitude"])
        n = grid.n
        values, d1g, d2g, ddg = {}, {}, {}, {}
        for comp in header["components"]:
            arrs = [
                np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
                for _ in range(6)
            ]
            values[comp] = arrs[0]
            d1g[comp] = arrs[1]
            d2g[comp] = arrs[2]
            ddg[comp] = {"11": arrs[3], "12": arrs[4], "22": arrs[5]}
    return TensorFieldSample(model, grid, header["seed"], values, d1g, d2g, ddg)


def field_metadata(sample):
    """NDJSON-ready metadata record for a sample."""
    return {
        "record": "field",
        "extent": sample.grid.extent,
        "n": sample.grid.n,
        "h": sample.grid.h,
        "seed": _seed_repr(sample.seed),
        "amplitude": sample.model.amplitude,
        "component_max": {c: float(np.abs(sample.values[c]).max()) for c in _COMPONENTS},
    }


def _payload_arrays(sample, comp):
    yield sample.values[comp]
    yield sample.d1[comp]
    yield sample.d2[comp]
    for key in _COMPONENTS:
        yield sample.dd[comp][key]


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed
