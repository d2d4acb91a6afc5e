import numpy as np
import pytest

from roughplane.covariance import CovarianceModel
from roughplane.errors import HorizonExceeded
from roughplane.field import GridSpec
from roughplane.geodesic import UNBOUNDED, UnitTangentState, exit_time, integrate
from roughplane.metric import FlatMetric
from roughplane.pov import (
    historical_exit_times,
    log_rho_derivative,
    pov_transform,
    rho_density,
    verify_change_of_variables,
)


@pytest.fixture(scope="module")
def path(random_field):
    return integrate(random_field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (-0.8, 0.8), 0.002)


class TestTransform:
    def test_identity_at_zero(self, random_field, path):
        pv = pov_transform(random_field, path, 0.0)
        pts = np.array([[0.1, 0.2], [-0.3, 0.5]])
        assert np.allclose(pv.metric(pts), random_field.metric(pts), atol=1e-12)

    def test_flat_fixed(self, flat):
        p = integrate(flat, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, 2.0), 0.01)
        pv = pov_transform(flat, p, 1.3)
        pts = np.array([[0.4, -0.2], [1.0, 1.0]])
        assert np.allclose(pv.metric(pts), np.eye(2), atol=1e-12)

    def test_origin_represents_current_point(self, random_field, path):
        t = 0.55
        pv = pov_transform(random_field, path, t)
        O = path.frame(t)
        want = O.T @ random_field.metric(path.position(t)) @ O
        assert np.abs(pv.metric(np.zeros(2)) - want).max() < 1e-10

    def test_geodesic_coincides_with_shifted_original(self, random_field, path):
        t = 0.5
        pv = pov_transform(random_field, path, t)
        O = path.frame(t)
        x = path.position(t)
        pv_path = integrate(pv, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, 0.25), 0.002)
        for s in (0.05, 0.1, 0.2, 0.25):
            want = O.T @ (path.position(s + t) - x)
            assert np.linalg.norm(pv_path.position(s) - want) < 1e-6

    def test_horizon_guard(self, random_field, path):
        with pytest.raises(HorizonExceeded):
            pov_transform(random_field, path, 5.0)

    def test_invertibility(self, random_field, path):
        t = 0.5
        pv = pov_transform(random_field, path, t)
        pv_path = integrate(pv, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (-t - 0.05, 0.05), 0.002)
        back = pov_transform(pv, pv_path, -t)
        pts = np.random.default_rng(0).uniform(-0.4, 0.4, (10, 2))
        assert np.abs(back.metric(pts) - random_field.metric(pts)).max() < 1e-8

    def test_boundedness_preserved_statistic(self, random_field, path):
        """sigma_t preserves boundedness of the forward path within the
        computed horizon (reported, not asserted: finite horizon)."""
        t = 0.3
        pv = pov_transform(random_field, path, t)
        pv_path = integrate(pv, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, 0.4), 0.002)
        r = 0.35
        base_exit = exit_time(path, r) != UNBOUNDED
        # the pov path covers [t, t+0.4] of the original; compare its exits
        pov_exit = exit_time(pv_path, r) != UNBOUNDED
        print(f"\n  boundedness flags (base, pov): {base_exit}, {pov_exit}")


class TestRho:
    def test_flat_is_one(self, flat):
        p = integrate(flat, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (-1.0, 1.0), 0.01)
        for t in (0.2, 0.5, 0.9):
            assert rho_density(flat, p, t) == pytest.approx(1.0, abs=1e-12)

    def test_t_zero_is_one(self, random_field, path):
        assert rho_density(random_field, path, 0.0) == 1.0

    def test_two_forms_agree(self, random_field, path):
        for t in (0.2, 0.5, 0.75):
            a = rho_density(random_field, path, t, method="gradient")
            b = rho_density(random_field, path, t, method="divergence")
            assert abs(a - b) < 1e-8

    def test_positive(self, random_field, path):
        assert rho_density(random_field, path, 0.6) > 0.0

    def test_time_derivative_matches_divergence(self, random_field, path):
        t = 0.5
        eps = 1e-4
        fd = (
            np.log(rho_density(random_field, path, t + eps))
            - np.log(rho_density(random_field, path, t - eps))
        ) / (2 * eps)
        assert fd == pytest.approx(log_rho_derivative(random_field, path, t), abs=1e-3)

    def test_horizon_guard(self, random_field, path):
        with pytest.raises(HorizonExceeded):
            rho_density(random_field, path, 2.0)

    def test_stability_over_thousand_samples(self):
        """rho_t > 0 with no NaN/Inf across 1000 independent realizations."""
        from roughplane.field import derive_seeds, sample_field
        from roughplane.metric import GridMetricField
        from roughplane.errors import LeftDomain

        model = CovarianceModel(0.1)
        grid = GridSpec(4.0, 64)
        kept = 0
        for seed in derive_seeds(2468, 1000):
            fld = GridMetricField.from_sample(sample_field(model, grid, seed))
            try:
                p = integrate(fld, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (-0.3, 0.3), 0.005)
            except LeftDomain:
                continue
            rho = rho_density(fld, p, 0.3)
            assert np.isfinite(rho) and rho > 0.0
            kept += 1
        assert kept >= 990


class TestVerifier:
    def test_degenerate_amplitude_zero(self):
        rep = verify_change_of_variables(
            CovarianceModel(0.0), "g11_origin", 0.5, 12, seed=1, grid=GridSpec(4.0, 64),
            h_step=0.01,
        )
        assert rep["A"] == rep["B"]
        assert rep["z"] == 0.0
        assert rep["passed"]

    def test_degenerate_t_zero(self):
        rep = verify_change_of_variables(
            CovarianceModel(0.1), "tanh_curvature", 0.0, 12, seed=2, grid=GridSpec(4.0, 64),
            h_step=0.01,
        )
        assert rep["A"] == rep["B"]
        assert rep["passed"]

    def test_small_run_passes(self):
        rep = verify_change_of_variables(
            CovarianceModel(0.1), "g11_origin", 0.5, 150, seed=7, grid=GridSpec(4.0, 128),
            h_step=0.004,
        )
        assert rep["excluded"] <= 1
        assert rep["passed"], rep

    def test_unknown_functional_rejected(self):
        with pytest.raises(ValueError):
            verify_change_of_variables(CovarianceModel(0.1), "nope", 0.5, 4, seed=0)


class TestHistory:
    def test_flat_single_atom(self, flat):
        atoms = historical_exit_times(flat, 0.8, t_max=2.0, resolution=0.05, h_step=0.01)
        assert len(atoms) == 1
        assert atoms[0] == pytest.approx(0.8, abs=1e-6)

    def test_membership_at_exit_pov(self, random_field):
        """tau_r is a historical exit time of sigma_{tau_r} g."""
        r = 0.6
        p = integrate(random_field, UnitTangentState((0.0, 0.0), (1.0, 0.0)), (0.0, 1.6), 0.002)
        tau = exit_time(p, r)
        assert tau != UNBOUNDED
        pv = pov_transform(random_field, p, tau)
        atoms = historical_exit_times(pv, r, t_max=tau + 0.2, resolution=0.02, h_step=0.002)
        assert any(abs(a - tau) <= 0.02 for a in atoms), (atoms, tau)

    def test_atoms_separated_by_resolution(self, random_field):
        atoms = historical_exit_times(random_field, 0.5, t_max=1.2, resolution=0.02, h_step=0.002)
        assert all(b - a > 0.02 for a, b in zip(atoms, atoms[1:]))
