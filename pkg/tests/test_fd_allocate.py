import json

import numpy as np
import pytest

from spectramech.distributions import UniformType, virtual_type
from spectramech.errors import DomainError, ValidationError
from spectramech.fd import BUDGET_RTOL, FdScenario, FdUser, fd_allocate
from spectramech.rates import expected_rate, expected_rate_derivative

from conftest import det_user, two_point_user


class TestSingleUser:
    def test_positive_virtual_type_gets_whole_band(self, fd_single):
        out = fd_allocate(fd_single, [0.9])
        assert out.allocation[0] == pytest.approx(1.0, rel=1e-12)
        assert out.active_set == (0,)
        assert out.kkt_residual <= 1e-9

    def test_nonpositive_virtual_type_gets_nothing(self, fd_single):
        out = fd_allocate(fd_single, [0.25])
        assert out.allocation[0] == 0.0
        assert out.multiplier == 0.0
        assert out.active_set == ()


class TestFeasibility:
    def test_budget_met_and_exhausted(self, fd_mixed):
        rng = np.random.default_rng(3)
        for _ in range(25):
            theta = np.array(
                [d.lo + rng.random() * (d.hi - d.lo) for d in fd_mixed.type_dists]
            )
            out = fd_allocate(fd_mixed, theta)
            assert np.all(out.allocation >= 0.0)
            total = out.allocation.sum()
            assert total <= fd_mixed.bandwidth * (1.0 + BUDGET_RTOL)
            if out.active_set:
                assert total == pytest.approx(fd_mixed.bandwidth, rel=1e-8)

    def test_all_inactive_profile_allocates_nothing(self, fd_pair):
        out = fd_allocate(fd_pair, [0.1, 0.2])
        np.testing.assert_array_equal(out.allocation, np.zeros(2))
        assert out.multiplier == 0.0


class TestOptimality:
    def test_marginals_equalized_at_multiplier(self, fd_mixed):
        theta = np.array([0.8, 1.2, 1.9])
        out = fd_allocate(fd_mixed, theta)
        marginals = []
        for i, (user, d) in enumerate(zip(fd_mixed.users, fd_mixed.type_dists)):
            if out.allocation[i] <= 0.0:
                continue
            w = virtual_type(d, theta[i])
            marginals.append(w * expected_rate_derivative(user.physical, out.allocation[i]))
        marginals = np.array(marginals)
        assert marginals.size >= 2
        spread = marginals.max() - marginals.min()
        assert spread <= 2.0 * out.kkt_residual + 1e-10 * abs(out.multiplier)
        assert out.multiplier == pytest.approx(marginals.mean(), rel=1e-6)

    def test_matches_dense_grid_oracle_two_users(self, fd_pair):
        theta = np.array([0.9, 0.8])
        w = np.array(
            [virtual_type(d, t) for d, t in zip(fd_pair.type_dists, theta)]
        )
        out = fd_allocate(fd_pair, theta)
        xs = np.linspace(0.0, 1.0, 20001)
        obj = np.array(
            [
                w[0] * expected_rate(fd_pair.users[0].physical, x)
                + w[1] * expected_rate(fd_pair.users[1].physical, 1.0 - x)
                for x in xs[:: 100]
            ]
        )
        # coarse pass to bracket, fine pass near the winner
        k = int(np.argmax(obj)) * 100
        lo, hi = max(k - 100, 0), min(k + 100, 20000)
        fine = np.array(
            [
                w[0] * expected_rate(fd_pair.users[0].physical, x)
                + w[1] * expected_rate(fd_pair.users[1].physical, 1.0 - x)
                for x in xs[lo : hi + 1]
            ]
        )
        best = float(fine.max())
        got = w[0] * expected_rate(fd_pair.users[0].physical, out.allocation[0]) + w[
            1
        ] * expected_rate(fd_pair.users[1].physical, out.allocation[1])
        assert got >= best - 1e-10
        assert abs(out.allocation[0] - xs[lo + int(np.argmax(fine))]) <= 1e-4

    def test_identical_users_split_evenly(self):
        users = (det_user(), det_user())
        scen = FdScenario(bandwidth=2.0, users=users)
        out = fd_allocate(scen, [0.9, 0.9])
        assert out.allocation[0] == pytest.approx(out.allocation[1], rel=1e-9)
        assert out.allocation.sum() == pytest.approx(2.0, rel=1e-9)

    def test_allocation_monotone_in_own_report(self, fd_pair):
        grid = np.linspace(0.55, 1.0, 12)
        prev = -1.0
        for t in grid:
            x = fd_allocate(fd_pair, [t, 0.8]).allocation[0]
            assert x >= prev - 1e-10
            prev = x

    def test_stronger_channel_wins_at_equal_reports(self, fd_pair):
        # user 1's gain doubles user 0's, so it earns the bigger slice
        out = fd_allocate(fd_pair, [0.9, 0.9])
        assert out.allocation[1] > out.allocation[0]


class TestValidationPaths:
    def test_report_count_checked(self, fd_pair):
        with pytest.raises(DomainError):
            fd_allocate(fd_pair, [0.5])

    def test_report_support_checked(self, fd_pair):
        with pytest.raises(DomainError):
            fd_allocate(fd_pair, [0.5, 1.5])

    def test_uncertified_scenario_refused(self, nonregular_dist):
        scen = FdScenario(
            bandwidth=1.0,
            users=(det_user(types=nonregular_dist), det_user()),
        )
        with pytest.raises(ValidationError) as err:
            fd_allocate(scen, [0.5, 0.5])
        assert "user 0" in " ".join(err.value.failures)

    def test_override_lets_uncertified_run(self, nonregular_dist):
        scen = FdScenario(
            bandwidth=1.0,
            users=(det_user(types=nonregular_dist), det_user()),
            allow_uncertified=True,
        )
        out = fd_allocate(scen, [0.8, 0.8])
        assert out.allocation.sum() == pytest.approx(1.0, rel=1e-8)

    def test_validation_report_names_the_problem(self, nonregular_dist):
        scen = FdScenario(
            bandwidth=1.0,
            users=(det_user(types=nonregular_dist),),
            allow_uncertified=True,
        )
        rows = scen.validation_report()
        reg = [r for r in rows if r["check"].endswith("regularity")]
        assert len(reg) == 1 and not reg[0]["passed"]
        assert "decreases" in reg[0]["detail"]

    def test_scenario_construction_checks(self):
        with pytest.raises(DomainError):
            FdScenario(bandwidth=0.0, users=(det_user(),))
        with pytest.raises(DomainError):
            FdScenario(bandwidth=1.0, users=())
        with pytest.raises(DomainError):
            FdScenario(bandwidth=1.0, users=(object(),))


class TestOutcomeShape:
    def test_record_is_json_ready(self, fd_pair):
        rec = fd_allocate(fd_pair, [0.9, 0.7]).to_record()
        text = json.dumps(rec, sort_keys=True)
        assert "allocation" in rec and "kkt_residual" in rec
        assert json.loads(text) == rec

    def test_mixture_gain_user_active(self):
        scen = FdScenario(bandwidth=1.0, users=(two_point_user(), det_user()))
        out = fd_allocate(scen, [0.95, 0.6])
        assert out.allocation[0] > 0.0
        assert out.active_set == (0, 1)
