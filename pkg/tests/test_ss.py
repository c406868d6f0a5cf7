import numpy as np
import pytest

from spectramech import _kernels
from spectramech.distributions import UniformType, virtual_type
from spectramech.errors import DomainError, SolverError, ValidationError
from spectramech.rates import SsPhysical, interference_rates
from spectramech.ss import (
    SsScenario,
    build_starts,
    ss_allocate,
    ss_payment,
)


class TestSimplexProjection:
    def test_interior_point_unchanged(self):
        got = _kernels.project_budget(np.array([0.5, 0.3]), 2.0)
        np.testing.assert_allclose(got, [0.5, 0.3], atol=1e-15)

    def test_negative_parts_clipped(self):
        got = _kernels.project_budget(np.array([0.4, -0.7]), 2.0)
        np.testing.assert_allclose(got, [0.4, 0.0], atol=1e-15)

    def test_known_shift_case(self):
        # excess 0.4 spread over both coordinates
        got = _kernels.project_budget(np.array([1.5, 0.9]), 2.0)
        np.testing.assert_allclose(got, [1.3, 0.7], atol=1e-12)

    def test_uneven_case_drops_a_coordinate(self):
        got = _kernels.project_budget(np.array([3.0, 1.0]), 2.0)
        np.testing.assert_allclose(got, [2.0, 0.0], atol=1e-12)

    def test_idempotent_and_feasible(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            v = rng.normal(0.0, 2.0, size=4)
            p = _kernels.project_budget(v.copy(), 1.5)
            assert np.all(p >= 0.0)
            assert p.sum() <= 1.5 + 1e-12
            np.testing.assert_allclose(
                _kernels.project_budget(p.copy(), 1.5), p, atol=1e-12
            )

    def test_minimizes_distance_against_grid(self):
        v = np.array([0.9, 0.8])
        p = _kernels.project_budget(v.copy(), 1.0)
        xs = np.linspace(0.0, 1.0, 401)
        g1, g2 = np.meshgrid(xs, xs, indexing="ij")
        ok = g1 + g2 <= 1.0
        d2 = (g1 - v[0]) ** 2 + (g2 - v[1]) ** 2
        best = d2[ok].min()
        got = float((p[0] - v[0]) ** 2 + (p[1] - v[1]) ** 2)
        assert got <= best + 1e-9


class TestStartPoints:
    def test_labels_and_count(self, ss_pair):
        starts, labels = build_starts(ss_pair, 3, seed=0)
        assert labels[0] == "origin"
        assert labels[1] == "uniform"
        assert labels[2] == "single:0"
        assert labels[3] == "single:1"
        assert [l for l in labels if l.startswith("random:")] == [
            "random:0",
            "random:1",
            "random:2",
        ]
        assert starts.shape == (len(labels), 2)

    def test_all_starts_feasible(self, ss_pair):
        starts, _ = build_starts(ss_pair, 8, seed=5)
        assert np.all(starts >= 0.0)
        assert np.all(starts.sum(axis=1) <= ss_pair.total_power + 1e-12)

    def test_start_sets_nest_by_count(self, ss_pair):
        few, _ = build_starts(ss_pair, 2, seed=9)
        many, _ = build_starts(ss_pair, 6, seed=9)
        np.testing.assert_array_equal(many[: few.shape[0]], few)

    def test_seed_changes_random_starts_only(self, ss_pair):
        a, _ = build_starts(ss_pair, 4, seed=1)
        b, _ = build_starts(ss_pair, 4, seed=2)
        np.testing.assert_array_equal(a[:4], b[:4])
        assert np.any(a[4:] != b[4:])


class TestSsSolver:
    def test_deterministic_given_seed(self, ss_pair):
        theta = [0.9, 0.8]
        a = ss_allocate(ss_pair, theta, restarts=8, seed=3)
        b = ss_allocate(ss_pair, theta, restarts=8, seed=3)
        np.testing.assert_array_equal(a.allocation, b.allocation)
        assert a.objective == b.objective
        assert a.best_start == b.best_start

    def test_feasible_and_stationary(self, ss_pair):
        out = ss_allocate(ss_pair, [0.9, 0.8], restarts=8, seed=0)
        assert np.all(out.allocation >= 0.0)
        assert out.allocation.sum() <= ss_pair.total_power + 1e-9
        assert out.kkt_residual_projected <= 1e-8

    def test_objective_is_weighted_virtual_rates(self, ss_pair):
        theta = np.array([0.9, 0.8])
        out = ss_allocate(ss_pair, theta, restarts=8, seed=0)
        w = np.array(
            [virtual_type(d, t) for d, t in zip(ss_pair.type_dists, theta)]
        )
        rates = interference_rates(ss_pair.physical, out.allocation)
        want = float((np.maximum(w, 0.0) * rates).sum())
        assert out.objective == pytest.approx(want, rel=1e-12)

    def test_matches_dense_grid_oracle(self, ss_pair):
        theta = np.array([1.0, 0.9])
        w = np.array(
            [virtual_type(d, t) for d, t in zip(ss_pair.type_dists, theta)]
        )
        out = ss_allocate(ss_pair, theta, restarts=16, seed=0)
        p = ss_pair.total_power
        xs = np.linspace(0.0, p, 301)
        g1, g2 = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        ok = pts.sum(axis=1) <= p + 1e-12
        pts = pts[ok]
        G = ss_pair.physical.gain_matrix
        own = pts * np.diag(G)
        received = pts @ G
        rates = ss_pair.physical.bandwidth * np.log1p(
            own / (ss_pair.physical.noise_power + received - own)
        )
        grid_best = float((rates @ w).max())
        assert out.objective >= grid_best - 1e-6

    def test_more_restarts_never_worse(self, ss_pair):
        theta = [0.95, 0.7]
        few = ss_allocate(ss_pair, theta, restarts=2, seed=7)
        many = ss_allocate(ss_pair, theta, restarts=16, seed=7)
        assert many.objective >= few.objective - 1e-12

    def test_all_nonpositive_virtual_types_idle(self, ss_pair):
        out = ss_allocate(ss_pair, [0.2, 0.1], restarts=4, seed=0)
        np.testing.assert_array_equal(out.allocation, np.zeros(2))
        assert out.objective == 0.0

    def test_iteration_cap_is_a_solver_error(self):
        # weak coupling puts the optimum strictly inside the simplex, away
        # from every deterministic start, so one iteration cannot converge
        phys = SsPhysical(
            gain_matrix=np.array([[1.0, 0.05], [0.05, 0.9]]),
            bandwidth=1.0,
            noise_density=1.0,
        )
        scen = SsScenario(
            physical=phys,
            total_power=2.0,
            type_dists=(UniformType(0.0, 1.0), UniformType(0.0, 1.0)),
        )
        with pytest.raises(SolverError):
            ss_allocate(scen, [0.9, 0.8], restarts=4, seed=0, _max_iterations=1)

    def test_report_validation(self, ss_pair):
        with pytest.raises(DomainError):
            ss_allocate(ss_pair, [0.9])
        with pytest.raises(DomainError):
            ss_allocate(ss_pair, [0.9, 1.4])

    def test_uncertified_refused(self, nonregular_dist):
        phys = SsPhysical(
            gain_matrix=np.array([[1.0, 0.1], [0.1, 1.0]]),
            bandwidth=1.0,
            noise_density=1.0,
        )
        scen = SsScenario(
            physical=phys,
            total_power=1.0,
            type_dists=(nonregular_dist, UniformType(0.0, 1.0)),
        )
        with pytest.raises(ValidationError):
            ss_allocate(scen, [0.5, 0.5])


class TestSsPayment:
    def test_bottom_report_pays_nothing_from_zero_support(self, ss_pair):
        out = ss_payment(ss_pair, [0.0, 0.9], grid_m=8, restarts=4, seed=0)
        assert out.payments[0] == 0.0

    def test_error_bounds_nonnegative_when_monotone(self, ss_pair):
        out = ss_payment(ss_pair, [0.9, 0.8], grid_m=16, restarts=8, seed=0)
        flags = np.asarray(out.nonmonotone_flags)
        for i in range(2):
            if flags[i] == 0:
                assert out.tax_errors[i] >= -1e-12

    def test_flags_are_reported_not_hidden(self, ss_pair):
        out = ss_payment(ss_pair, [0.9, 0.8], grid_m=16, restarts=8, seed=0)
        assert len(out.nonmonotone_flags) == 2
        assert all(int(f) >= 0 for f in out.nonmonotone_flags)

    def test_grid_validated(self, ss_pair):
        with pytest.raises(DomainError):
            ss_payment(ss_pair, [0.9, 0.8], grid_m=0)

    def test_record_has_solver_provenance(self, ss_pair):
        out = ss_allocate(ss_pair, [0.9, 0.8], restarts=4, seed=0)
        rec = out.to_record()
        assert rec["best_start"] in {"origin", "uniform", "single:0", "single:1"} or rec[
            "best_start"
        ].startswith("random:")
        assert rec["restarts_used"] == len(build_starts(ss_pair, 4, 0)[1])
        assert rec["optimality"] == "up to local optimality"
