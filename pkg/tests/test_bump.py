import math

import numpy as np
import pytest

from roughplane.bump import (
    BumpSpec,
    bump_event,
    bump_jacobi_check,
    build_bump,
    chart_polynomial,
    chart_pullback_grid,
    cone_tests,
    curvature_profile,
    fermi_chart,
    fermi_metric,
    in_frontier_cone,
    in_hinterland_cone,
    in_lens,
    make_bump_spec,
)
from roughplane.errors import ChartFailure, OutOfRange, OutOfRegion, PreconditionZ
from roughplane.fluctuation import Cone, c21_distance
from roughplane.geodesic import UnitTangentState, integrate
from roughplane.jacobi import jacobi_integrate
from roughplane.metric import FlatMetric, MetricField, PerturbedMetricField, gauss_curvature


@pytest.fixture(scope="module")
def flat_bump():
    return build_bump(FlatMetric(), theta=math.pi / 4, h_threshold=1.0)


@pytest.fixture(scope="module")
def mild_bump(mild_field):
    return build_bump(mild_field, theta=math.pi / 4, h_threshold=1.0)


def _spec_kwargs(spec, **overrides):
    kw = dict(
        k0=spec.k0, tau=spec.tau, k_plus=spec.k_plus, k_max=spec.k_max,
        m_taylor=spec.m_taylor, lipschitz=spec.lipschitz, delta_chart=spec.delta_chart,
        theta=spec.theta, phi_angle=spec.phi_angle, h_threshold=spec.h_threshold,
        epsilon=spec.epsilon, rho_blend=spec.rho_blend, rho_end=spec.rho_end,
    )
    kw.update(overrides)
    return kw


class TestSpec:
    def test_tau_bounds_enforced(self, flat_bump):
        spec = flat_bump.spec
        for name, val in spec.tau_bounds().items():
            assert spec.tau < val, name
        assert spec.tau <= 0.5

    def test_hand_violated_tau_trips(self, flat_bump):
        spec = flat_bump.spec
        bad_tau = 2.0 * min(spec.tau_bounds().values())
        with pytest.raises(ValueError):
            BumpSpec(**_spec_kwargs(spec, tau=bad_tau,
                                    k_plus=4 * math.pi**2 / bad_tau**2,
                                    k_max=max(1.0, 4 * math.pi**2 / bad_tau**2)))

    def test_k_plus_exact(self, flat_bump):
        spec = flat_bump.spec
        assert spec.k_plus == pytest.approx(4 * math.pi**2 / spec.tau**2, rel=1e-14)
        with pytest.raises(ValueError):
            BumpSpec(**_spec_kwargs(spec, k_plus=spec.k_plus * 1.001))


class TestProfile:
    def test_endpoints_and_plateau(self, mild_bump):
        spec = mild_bump.spec
        prof = curvature_profile(spec)
        assert prof(0.0) == pytest.approx(spec.k0)
        assert prof(spec.tau / 2) == pytest.approx(4 * math.pi**2 / spec.tau**2)
        assert prof(spec.tau / 8) == pytest.approx(0.5 * (spec.k0 + spec.k_plus))
        with pytest.raises(OutOfRange):
            prof(1.1 * spec.tau)
        ts = np.linspace(0, spec.tau, 100)
        assert max(abs(prof(t)) for t in ts) <= spec.k_max + 1e-9


class TestFermiMetric:
    def test_identity_on_axis(self, flat_bump):
        f = fermi_metric(flat_bump.spec)
        assert np.allclose(f(0.5 * flat_bump.spec.tau, 0.0), np.eye(2))

    def test_region_guard(self, flat_bump):
        spec = flat_bump.spec
        with pytest.raises(OutOfRegion):
            fermi_metric(spec)(spec.tau / 2, spec.tau)  # far off the needle

    def test_f11_lower_bound(self, flat_bump):
        spec = flat_bump.spec
        f = fermi_metric(spec)
        vals = []
        for t in np.linspace(0, spec.tau, 30):
            for frac in np.linspace(-1, 1, 9):
                n = frac * t / math.sqrt(spec.k_max)
                vals.append(f(t, n)[0, 0])
        assert min(vals) >= 0.5

    def test_curvature_of_chart_metric_is_profile(self, mild_bump):
        """Gauss curvature of the extended chart metric along the axis
        equals the prescribed profile (evaluated through an analytic
        wrapper field)."""
        from roughplane.bump import _fermi_extended_jets

        spec = mild_bump.spec

        class ChartField(MetricField):
            def _jets(self, pts):
                return _fermi_extended_jets(spec, pts)

        fld = ChartField()
        prof = curvature_profile(spec)
        for t in (0.05 * spec.tau, 0.5 * spec.tau, 0.9 * spec.tau):
            got = gauss_curvature(fld, np.array([t, 0.0]))
            assert got == pytest.approx(prof(t), rel=1e-10)


class TestCones:
    def test_origin_in_both(self, flat_bump):
        flags = cone_tests((0.0, 0.0), flat_bump.spec, y=(-1.0, 0.0))
        assert flags["in_HC"] and flags["in_FC"] and flags["in_lens"]

    def test_theta_zero_degenerate_ray(self):
        assert in_hinterland_cone((-2.0, 0.0), 0.0)
        assert not in_hinterland_cone((-2.0, 0.01), 0.0)
        assert not in_hinterland_cone((0.5, 0.0), 0.0)

    def test_lens_meets_frontier_cone_only_at_origin(self):
        """Randomized check of the cone lemma: for y in HC, points of
        D^y = B(0,2) cap B(y,|y|) never lie in FC minus the origin."""
        theta = math.pi / 4
        phi = 0.5 * (math.pi / 2 - theta)
        rng = np.random.default_rng(12)
        found = 0
        for _ in range(10_000):
            y1 = -rng.uniform(0.1, 3.0)
            y2 = rng.uniform(-1.0, 1.0) * (-math.tan(theta) * y1)
            y = np.array([y1, y2])
            x = y + np.linalg.norm(y) * rng.uniform(-1, 1, 2)
            if not in_lens(x, y):
                continue
            found += 1
            in_fc = in_frontier_cone(x, phi)
            assert not in_fc or np.linalg.norm(x) < 1e-12
        assert found > 1000  # the rejection sampler actually exercised the lens


class TestChart:
    def test_flat_chart_is_identity(self, flat):
        psi = chart_polynomial(flat)
        coeffs = psi.coeffs.copy()
        coeffs[1, 0] -= 1.0  # t -> x1
        coeffs[2, 1] -= 1.0  # n -> x2
        assert np.abs(coeffs).max() < 1e-14

    def test_taylor_matches_integrated_chart(self, mild_field):
        ch = fermi_chart(mild_field, t_chart=0.12, n_chart=0.03, nt=25, nn=13)
        # cubic Taylor vs the true chart: residual is quartic in the window size
        assert ch.fit_residual() < 5e-4
        ch_small = fermi_chart(mild_field, t_chart=0.06, n_chart=0.015, nt=25, nn=13)
        assert ch_small.fit_residual() < ch.fit_residual()

    def test_axis_is_cubic_taylor_path(self, mild_field):
        ch = fermi_chart(mild_field)
        mid = len(ch.raw_n) // 2
        axis = ch.psi(np.stack([ch.raw_t, np.zeros_like(ch.raw_t)], axis=1))
        for t, pt, raw in zip(ch.raw_t, axis, ch.raw_pos[:, mid]):
            # the cubic Taylor matches the integrated geodesic to 4th order
            assert np.linalg.norm(pt - raw) < 1e-8 + 5.0 * t**4

    def test_pullback_flat_on_axis(self, mild_field):
        ch = fermi_chart(mild_field)
        mid = len(ch.raw_n) // 2
        for i in range(len(ch.raw_t)):
            x = ch.raw_pos[i, mid]
            g = mild_field.metric(x)
            tang = ch.axis_tangent[i]
            nrm = ch.normals[i]
            gt = np.array([[tang @ g @ tang, tang @ g @ nrm], [nrm @ g @ tang, nrm @ g @ nrm]])
            assert np.abs(gt - np.eye(2)).max() < 1e-5

    def test_pullback_christoffels_vanish_on_axis_analytic(self):
        """FD Christoffels of the pull-back metric at (t, 0) vanish within
        1e-5 on an analytic field (exact derivatives)."""
        from roughplane.metric import linear_conformal_metric

        fld = linear_conformal_metric(0.02)
        ch = fermi_chart(fld, t_chart=0.12, n_chart=0.004, nt=25, nn=9)
        gt = chart_pullback_grid(fld, ch)
        dt = ch.raw_t[1] - ch.raw_t[0]
        dn = ch.raw_n[1] - ch.raw_n[0]
        mid = len(ch.raw_n) // 2
        i = len(ch.raw_t) // 2
        dgdt = (gt[i + 1, mid] - gt[i - 1, mid]) / (2 * dt)
        dgdn = (
            -gt[i, mid + 2] + 8 * gt[i, mid + 1] - 8 * gt[i, mid - 1] + gt[i, mid - 2]
        ) / (12 * dn)
        assert np.abs(dgdt).max() < 1e-5
        assert np.abs(dgdn).max() < 1e-5

    def test_pullback_second_normal_derivative(self, mild_field):
        """Second normal derivative of g~11 at (t, 0) recovers -2K (the
        canonical form 1 - K n^2, K the Gauss curvature); grid fields carry
        the interpolation-inconsistency floor in the first derivatives."""
        ch = fermi_chart(mild_field, t_chart=0.12, n_chart=0.004, nt=25, nn=9)
        gt = chart_pullback_grid(mild_field, ch)
        dt = ch.raw_t[1] - ch.raw_t[0]
        dn = ch.raw_n[1] - ch.raw_n[0]
        mid = len(ch.raw_n) // 2
        i = len(ch.raw_t) // 2
        dgdt = (gt[i + 1, mid] - gt[i - 1, mid]) / (2 * dt)
        dgdn = (
            -gt[i, mid + 2] + 8 * gt[i, mid + 1] - 8 * gt[i, mid - 1] + gt[i, mid - 2]
        ) / (12 * dn)
        assert np.abs(dgdt).max() < 1e-4
        assert np.abs(dgdn).max() < 1e-3
        d2n_g11 = (gt[i, mid + 1, 0, 0] - 2 * gt[i, mid, 0, 0] + gt[i, mid - 1, 0, 0]) / dn**2
        k = gauss_curvature(mild_field, ch.raw_pos[i, mid])
        assert d2n_g11 == pytest.approx(-2.0 * k, abs=0.02 * max(1.0, abs(k)))

    def test_precondition_gate(self):
        from roughplane.covariance import CovarianceModel
        from roughplane.field import GridSpec, sample_field
        from roughplane.metric import GridMetricField

        rough = GridMetricField.from_sample(
            sample_field(CovarianceModel(0.05), GridSpec(4.0, 128), 0)
        )
        with pytest.raises(PreconditionZ):
            fermi_chart(rough, h_threshold=1.0)
        with pytest.raises(PreconditionZ):
            make_bump_spec(rough, h_threshold=1.0)


class TestBuild:
    def test_flat_bump_conjugate_pair(self, flat_bump):
        sol, conj, jtau = bump_jacobi_check(flat_bump)
        tau = flat_bump.spec.tau
        assert conj == pytest.approx(0.75 * tau, abs=1e-3)
        assert jtau == pytest.approx(-1.0, abs=1e-3)
        ideal = np.sin(2 * np.pi / tau * (sol.times - tau / 4))
        assert np.abs(sol.j - ideal).max() < 1e-4

    def test_curvature_match_at_origin(self, mild_field, mild_bump):
        k_g = gauss_curvature(mild_field, np.zeros(2))
        k_b = gauss_curvature(mild_bump, np.zeros(2))
        assert k_b == pytest.approx(k_g, abs=1e-4)

    def test_c2_agreement_at_origin(self, mild_field, mild_bump):
        g1, dg1, ddg1 = mild_field.jets(np.zeros((1, 2)))
        g2, dg2, ddg2 = mild_bump.jets(np.zeros((1, 2)))
        assert np.abs(g1 - g2).max() < 1e-5
        assert np.abs(dg1 - dg2).max() < 1e-5
        assert np.abs(ddg1 - ddg2).max() < 1e-5

    def test_flat_outside_unit_ball(self, mild_bump):
        pts = np.array([[1.0, 0.2], [0.0, 1.5], [-2.0, 0.3]])
        g, dg, ddg = mild_bump.jets(pts)
        assert np.abs(g - np.eye(2)).max() == 0.0
        assert np.abs(dg).max() == 0.0
        assert np.abs(ddg).max() == 0.0

    def test_triangle_image_in_frontier_cone(self, mild_bump):
        spec = mild_bump.spec
        psi = mild_bump.chart.psi
        ts = np.linspace(0, spec.tau, 25)
        for t in ts:
            for frac in (-1.0, -0.5, 0.0, 0.5, 1.0):
                u = np.array([t, frac * t / math.sqrt(spec.k_max)])
                x = psi(u)
                assert x[0] <= math.cos(spec.phi_angle) + 1e-9
                if x[0] > 1e-9:
                    assert abs(x[1]) <= math.tan(spec.phi_angle) * x[0] + 1e-9

    def test_spd_everywhere(self, mild_bump):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-1.1, 1.1, (300, 2))
        g = mild_bump.metric(pts)
        tr = g[:, 0, 0] + g[:, 1, 1]
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        assert (det > 0).all() and (tr > 0).all()

    def test_jets_match_finite_differences_in_blend(self, mild_bump):
        """Chain-rule first and second derivatives vs FD at a macroscopic
        blend-region point."""
        x = np.array([0.55 * mild_bump.spec.rho_end + 0.45 * mild_bump.spec.rho_blend, 0.03])
        _, dg, ddg = mild_bump.jets(x[None])
        step = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            fd = (mild_bump.metric(x + e) - mild_bump.metric(x - e)) / (2 * step)
            assert np.abs(fd - dg[0, k]).max() < 1e-5 * max(1.0, np.abs(dg).max())
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            _, dgp, _ = mild_bump.jets((x + e)[None])
            _, dgm, _ = mild_bump.jets((x - e)[None])
            fd2 = (dgp[0] - dgm[0]) / (2 * step)
            assert np.abs(fd2[k] - ddg[0, k, k]).max() < 1e-4 * max(1.0, np.abs(ddg).max())


class TestEvent:
    def test_bump_of_bump_is_event(self, flat_bump):
        flag, rec = bump_event(
            flat_bump, theta=math.pi / 4, h_threshold=1.0, epsilon=0.05, spacing=0.01
        )
        assert flag
        assert rec["distance_c21_fc"] == 0.0  # the construction is 2-jet determined

    def test_flat_is_not_event_and_threshold_reported(self, flat, flat_bump):
        flag, rec = bump_event(flat, theta=math.pi / 4, h_threshold=1.0, epsilon=0.05,
                               spacing=0.01, bump=flat_bump)
        assert not flag
        dist = c21_distance(
            flat, flat_bump, Cone(flat_bump.spec.phi_angle, math.cos(flat_bump.spec.phi_angle)),
            spacing=0.01,
        )
        print(f"\n  ||delta - b(delta)||_C21(FC) = {dist:.3e} (meaningful epsilon must stay below)")
        assert rec["distance_c21_fc"] == pytest.approx(dist)
        assert dist > 0.05

    def test_event_true_implies_negative_jacobi(self, flat_bump):
        """On true events, j started at (tau/4, 2 pi/tau) is negative at tau."""
        _, conj, jtau = bump_jacobi_check(flat_bump)
        assert jtau < 0

    def test_perturbation_stability(self, flat_bump):
        """j(g, tau) < 0 persists under perturbation directions measured in
        the C^{2,1}(FC) norm at a calibrated epsilon."""
        spec = flat_bump.spec
        tau = spec.tau
        fc = Cone(spec.phi_angle, math.cos(spec.phi_angle))
        rng = np.random.default_rng(3)
        comps = [(0, 0), (0, 1), (1, 1)]
        directions = []
        for k in range(10):
            center = (rng.uniform(0.05, 0.6), rng.uniform(-0.1, 0.1))
            width = rng.uniform(0.05, 0.2)
            directions.append((1.0, center, width, comps[k % 3]))
        epsilon = 0.5  # calibrated: well below ||delta - b||, well above noise
        for mode in directions:
            probe = PerturbedMetricField(flat_bump, [mode])
            norm = c21_distance(flat_bump, probe, fc, spacing=0.02)
            scale = 0.5 * epsilon / norm
            pert = PerturbedMetricField(
                flat_bump, [(scale, mode[1], mode[2], mode[3])]
            )
            path = integrate(pert, UnitTangentState((0.0, 0.0), (1.0, 0.0)),
                             (0.0, 1.05 * tau), tau / 800.0)
            sol = jacobi_integrate(pert, path, tau / 4, 0.0, 2 * np.pi / tau, tau,
                                   step=tau / 800.0)
            assert sol.j[-1] < 0.0
