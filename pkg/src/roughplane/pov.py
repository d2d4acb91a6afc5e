"""Point-of-view transform, its density, and the change-of-variables verifier.

sigma_t re-centers the environment on the traveling particle: with
O_t = [v_t | v_t_perp] the tangent frame and gamma(t) the position,

    (sigma_t g)(u) = O_t^T g(gamma(t) + O_t u) O_t,

so the geodesic always sits at the origin pointing along e_1, and
(sigma_t g)(0) = O_t^T g(gamma(t)) O_t.  The law of sigma_t g is absolutely
continuous with respect to the law of g with density

    rho_t(g) = exp( int_{-t}^0 [ <grad log det g(gamma), gammadot>
                                 + 2 <gammaddot, gammadot>/<gammadot, gammadot> ] ds )
             = exp( -int_{-t}^0 div U_g ds ),

the Liouville Jacobian of the geodesic flow on R^2 x S^1 along the
backward path (see geodesic.divergence_U for the coefficient).  The Monte
Carlo verifier checks  E f(sigma_t g) = E f(g) rho_t(g)  for bounded
functionals.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy.integrate import simpson

from .errors import HorizonExceeded, LeftDomain
from .field import GridSpec, derive_seeds, sample_field
from .fluctuation import Ball, z_fluctuation
from .geodesic import UnitTangentState, divergence_U, integrate
from .metric import (
    GridMetricField,
    RigidMotion,
    TransformedMetricField,
    christoffel_from_jets,
    gauss_curvature,
    inverse_metric,
)
from .runners import parallel_map

PovMetric = TransformedMetricField


def pov_transform(field, path, t):
    """sigma_t g as a lazy rigid-motion conjugation of the base field."""
    if t < path.t_min - 1e-12 or t > path.t_max + 1e-12:
        raise HorizonExceeded(f"t={t} outside path horizon")
    state = path.state(t)
    motion = RigidMotion(path.frame(t), state.x)
    return PovMetric(field, motion)


def _integrand_samples(field, path, t, n_nodes):
    ts = np.linspace(-t, 0.0, n_nodes)
    xs = np.array([path.position(s) for s in ts])
    raw_v = np.array([path.velocity(s) for s in ts])
    vs = raw_v / np.linalg.norm(raw_v, axis=1, keepdims=True)
    g, dg, _ = field.jets(xs)
    lam = 1.0 / np.sqrt(np.einsum("pi,pij,pj->p", vs, g, vs))
    gam = christoffel_from_jets(g, dg)
    acc = -lam[:, None] * np.einsum("pkij,pi,pj->pk", gam, vs, vs)
    ginv = inverse_metric(g)
    grad_logdet = np.einsum("pij,pkji->pk", ginv, dg)
    return ts, vs, lam, acc, grad_logdet


def rho_density(field, path, t, method="gradient", n_nodes=None):
    """rho_t(g) by composite Simpson quadrature along the backward path.

    method="gradient" uses the explicit metric-gradient integrand with
    gammadot = lambda v, gammaddot = lambda a; method="divergence" uses
    -div U_g via divergence_U.  The two agree to quadrature roundoff.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 1.0
    if -t < path.t_min - 1e-12:
        raise HorizonExceeded(f"backward path does not reach -t={-t}")
    if n_nodes is None:
        n_nodes = max(9, 2 * int(math.ceil(t / path.step)) + 1)
    if n_nodes % 2 == 0:
        n_nodes += 1
    from .geodesic import DIV_TANGENT_COEFF

    ts, vs, lam, acc, grad_logdet = _integrand_samples(field, path, t, n_nodes)
    xdot = lam[:, None] * vs
    if method == "gradient":
        xddot = lam[:, None] * acc
        integrand = np.einsum("pk,pk->p", grad_logdet, xdot) + DIV_TANGENT_COEFF * np.einsum(
            "pk,pk->p", xddot, xdot
        ) / np.einsum("pk,pk->p", xdot, xdot)
    elif method == "divergence":
        integrand = -(
            -np.einsum("pk,pk->p", grad_logdet, xdot)
            - DIV_TANGENT_COEFF * np.einsum("pk,pk->p", acc, vs)
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.exp(simpson(integrand, x=ts)))


def log_rho_derivative(field, path, t):
    """d/dt log rho_t = -div U_g at the state gamma(-t) (chain rule of the
    moving lower limit)."""
    state = path.state(-t)
    return -divergence_U(field, state)


# ---------------------------------------------------------------------------
# bounded functionals for the verifier


def functional_g11_origin(field, spacing=None):
    return float(field.metric(np.zeros(2))[0, 0])


def functional_tanh_curvature(field, spacing=None):
    return float(np.tanh(gauss_curvature(field, np.zeros(2))))


def functional_z_ball_clipped(field, spacing=0.03, radius=0.5, clip=1e4):
    z = z_fluctuation(field, Ball((0.0, 0.0), radius), spacing=spacing).value
    return float(min(z, clip))


FUNCTIONALS = {
    "g11_origin": functional_g11_origin,
    "tanh_curvature": functional_tanh_curvature,
    "z_ball_clipped": functional_z_ball_clipped,
}


def _pov_pair_multi(seed_seq, model, grid, t, h_step, functional_names):
    """One paired draw per functional, sharing the realization, path and
    density: {name: (f(sigma_t g), f(g) rho_t(g))}, or None if the path
    leaves the sampled grid."""
    sample = sample_field(model, grid, seed_seq)
    field = GridMetricField.from_sample(sample)
    span = max(t, h_step)  # t = 0 still needs a nonempty path for the transform
    try:
        path = integrate(field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (-span, span), h_step)
    except LeftDomain:
        return None
    pov = pov_transform(field, path, t)
    rho = rho_density(field, path, t)
    out = {}
    for name in functional_names:
        func = functools.partial(FUNCTIONALS[name], spacing=grid.h)
        out[name] = (func(pov), func(field) * rho)
    return out


def _pov_pair(seed_seq, model, grid, t, h_step, functional_name):
    res = _pov_pair_multi(seed_seq, model, grid, t, h_step, (functional_name,))
    return None if res is None else res[functional_name]


def verify_change_of_variables_multi(
    model,
    functionals,
    t,
    n_samples,
    seed,
    grid=None,
    h_step=0.002,
    workers=1,
    max_excluded_fraction=0.01,
):
    """Monte Carlo check of E f(sigma_t g) = E f(g) rho_t(g) for several
    functionals over one shared set of realizations.

    Paired sampling: the same realizations feed both estimators, so the
    degenerate cases (t = 0 or amplitude 0) agree exactly sample by sample.
    The reported SE is the pooled independent-samples standard error, which
    is conservative for the paired design.  PASS iff |A - B| <= 3 SE.
    """
    for functional in functionals:
        if functional not in FUNCTIONALS:
            raise ValueError(f"unknown functional {functional!r}; have {sorted(FUNCTIONALS)}")
    if grid is None:
        grid = GridSpec(4.0, 128)
    seeds = derive_seeds(seed, n_samples)
    job = functools.partial(
        _pov_pair_multi, model=model, grid=grid, t=t, h_step=h_step,
        functional_names=tuple(functionals),
    )
    results = parallel_map(job, seeds, workers)
    kept = [r for r in results if r is not None]
    excluded = n_samples - len(kept)
    if excluded > max_excluded_fraction * n_samples:
        raise LeftDomain(t, f"{excluded}/{n_samples} samples left the grid; enlarge extent")
    reports = []
    for functional in functionals:
        fa = np.array([r[functional][0] for r in kept])
        fb = np.array([r[functional][1] for r in kept])
        a_mean, b_mean = float(fa.mean()), float(fb.mean())
        n_eff = len(kept)
        se = float(np.sqrt(fa.var(ddof=1) / n_eff + fb.var(ddof=1) / n_eff)) if n_eff > 1 else 0.0
        diff = a_mean - b_mean
        dust = 1e-12 * (1.0 + abs(a_mean) + abs(b_mean))  # degenerate-model roundoff floor
        if abs(diff) <= dust:
            diff = 0.0
        if se == 0.0:
            z = 0.0 if diff == 0.0 else math.inf
        else:
            z = diff / se
        reports.append({
            "record": "pov_verify",
            "functional": functional,
            "t": t,
            "N": n_samples,
            "A": a_mean,
            "B": b_mean,
            "SE": se,
            "z": z,
            "excluded": excluded,
            "passed": bool(abs(diff) <= 3.0 * se or diff == 0.0),
        })
    return reports


def verify_change_of_variables(
    model,
    functional,
    t,
    n_samples,
    seed,
    grid=None,
    h_step=0.002,
    workers=1,
    max_excluded_fraction=0.01,
):
    """Single-functional wrapper around verify_change_of_variables_multi."""
    return verify_change_of_variables_multi(
        model, [functional], t, n_samples, seed, grid=grid, h_step=h_step,
        workers=workers, max_excluded_fraction=max_excluded_fraction,
    )[0]


# ---------------------------------------------------------------------------
# historical exit times


def _first_crossing(path, center, r, after_time, n_bisect=40):
    """First time u > after_time with |gamma(u) - center| > r, or None
    within the stored horizon."""
    idx = np.searchsorted(path.times, after_time, side="right")
    radii = np.linalg.norm(path.xs[idx:] - center, axis=1)
    above = radii > r
    if not above.any():
        return None
    j = int(np.argmax(above)) + idx
    if j == idx and radii[0] > r:
        # already outside at the first stored node after after_time: bracket
        # against after_time itself
        lo, hi = after_time, path.times[j]
    else:
        lo, hi = path.times[j - 1], path.times[j]
        lo = max(lo, after_time)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(path.position(mid) - center) > r:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def historical_exit_times(field, r, t_max, resolution, h_step=0.002, path=None):
    """Atoms of the history measure at horizon r found at this resolution:
    times t in [0, t_max] with tau_r(sigma_{-t} g) = t.

    Equivalently, zeros of psi(t) = first time u > -t at which the geodesic
    leaves B(gamma(-t), r), which vanishes exactly when that exit happens at
    absolute time 0.  psi is scanned on a resolution grid and each sign
    change is refined by bisection; returned atoms are separated by more
    than the resolution.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    forward = min(1.5 * r, max(1.0, r))
    if path is None:
        path = integrate(
            field,
            UnitTangentState((0.0, 0.0), (1.0, 0.0)),
            (-(t_max + 2 * h_step), forward),
            h_step,
        )
    if -(t_max) < path.t_min - 1e-9:
        raise HorizonExceeded("path does not cover the scan window")

    def psi(t):
        y = path.position(-t)
        u = _first_crossing(path, y, r, after_time=-t + 1e-12)
        return math.inf if u is None else u

    ts = np.arange(0.0, t_max + 0.5 * resolution, resolution)
    vals = np.array([psi(t) for t in ts])
    atoms = []
    for i in range(len(ts) - 1):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a > 0 >= b or a >= 0 > b or (a == 0.0):
            lo, hi = ts[i], ts[i + 1]
            if a == 0.0:
                atoms.append(float(ts[i]))
                continue
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if psi(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            atoms.append(float(0.5 * (lo + hi)))
        elif abs(a) <= 0.5 * resolution and a <= min(
            vals[max(i - 1, 0)], vals[min(i + 1, len(ts) - 1)]
        ):
            atoms.append(float(ts[i]))
    # dedupe: atoms closer than the resolution are one atom at this scale
    atoms.sort()
    merged = []
    for t in atoms:
        if not merged or t - merged[-1] > resolution:
            merged.append(t)
    return merged
