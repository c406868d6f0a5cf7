import numpy as np
import pytest

from spectramech.distributions import (
    TabulatedType,
    TruncatedLinearType,
    TruncatedPowerType,
    UniformType,
    VirtualTypeProfile,
    certify_regularity,
    sample_types,
    virtual_type,
)
from spectramech.errors import DomainError, ValidationError

ALL_FAMILIES = [
    UniformType(0.0, 1.0),
    UniformType(0.5, 2.5),
    TruncatedPowerType(1.0, 2.0, -2.0),
    TruncatedPowerType(0.5, 1.5, 1.0),
    TruncatedPowerType(1.0, 3.0, -1.0),
    TruncatedLinearType(0.0, 1.0, 3.0),
    TruncatedLinearType(1.0, 2.0, 0.5),
    TabulatedType([0.0, 0.4, 1.0], [0.0, 0.3, 1.0]),
]


class TestVirtualType:
    def test_uniform_closed_form(self):
        d = UniformType(0.0, 1.0)
        # w = theta - (1 - theta) so 2 theta - 1
        for theta in (0.0, 0.25, 0.5, 1.0):
            assert virtual_type(d, theta) == pytest.approx(2.0 * theta - 1.0, abs=1e-15)
        d2 = UniformType(1.0, 2.0)
        assert virtual_type(d2, 1.5) == pytest.approx(1.0, abs=1e-15)

    def test_power_law_closed_form(self):
        # density 2 / theta^2 on [1, 2]: F = 2 - 2/theta, w = theta^2 / 2
        d = TruncatedPowerType(1.0, 2.0, -2.0)
        grid = np.linspace(1.0, 2.0, 17)
        np.testing.assert_allclose(virtual_type(d, grid), grid * grid / 2.0, atol=1e-13)

    def test_scalar_and_array_agree(self):
        for d in ALL_FAMILIES:
            grid = np.linspace(d.lo, d.hi, 7)
            arr = virtual_type(d, grid)
            for k, theta in enumerate(grid):
                one = virtual_type(d, float(theta))
                assert isinstance(one, float)
                assert one == arr[k]

    def test_top_type_has_no_markdown(self):
        for d in ALL_FAMILIES:
            assert virtual_type(d, d.hi) == pytest.approx(d.hi, abs=1e-12)

    def test_outside_support_rejected(self):
        with pytest.raises(DomainError):
            virtual_type(UniformType(0.0, 1.0), 1.5)


class TestRegularity:
    def test_standard_families_certify(self):
        for d in ALL_FAMILIES:
            res = certify_regularity(d, 512)
            assert res.certified, type(d).__name__
            assert res.witness_types is None

    def test_nonregular_tabulated_witnessed(self, nonregular_dist):
        res = certify_regularity(nonregular_dist, 1024)
        assert not res.certified
        a, b = res.witness_types
        # the virtual type drops across the density knot at 0.5
        assert a <= 0.5 <= b
        wa, wb = res.witness_values
        assert wb <= wa

    def test_result_record(self, nonregular_dist):
        rec = certify_regularity(nonregular_dist, 64).to_record()
        assert rec["certified"] is False
        assert rec["grid_points"] == 64
        assert len(rec["witness_types"]) == 2

    def test_grid_size_checked(self):
        with pytest.raises(DomainError):
            certify_regularity(UniformType(0.0, 1.0), 1)

    def test_profile_collects_users(self, nonregular_dist):
        prof = VirtualTypeProfile.build([UniformType(0.0, 1.0), nonregular_dist], 256)
        assert prof.n_users == 2
        assert not prof.all_certified
        assert prof.uncertified_users() == [1]
        assert prof.virtual(0, 0.75) == pytest.approx(0.5)


class TestDistributionConsistency:
    def test_ppf_inverts_cdf(self):
        for d in ALL_FAMILIES:
            grid = np.linspace(d.lo, d.hi, 33)
            back = d.ppf(d.cdf(grid))
            np.testing.assert_allclose(back, grid, atol=1e-12)

    def test_cdf_inverts_ppf(self):
        for d in ALL_FAMILIES:
            u = np.linspace(0.0, 1.0, 33)
            np.testing.assert_allclose(d.cdf(d.ppf(u)), u, atol=1e-12)

    def test_self_check_clean(self):
        for d in ALL_FAMILIES:
            assert d.self_check() == [], type(d).__name__

    def test_linear_density_endpoint_ratio(self):
        d = TruncatedLinearType(0.0, 2.0, 3.0)
        assert float(d.pdf(2.0)) / float(d.pdf(0.0)) == pytest.approx(3.0, rel=1e-13)

    def test_spec_dict_round_describes(self):
        d = TruncatedPowerType(1.0, 2.0, -2.0)
        spec = d.spec_dict()
        assert spec["lo"] == 1.0 and spec["hi"] == 2.0


class TestSampling:
    def test_reproducible_bit_for_bit(self):
        dists = [UniformType(0.0, 1.0), TruncatedPowerType(1.0, 2.0, -2.0)]
        a = sample_types(dists, 256, seed=42)
        b = sample_types(dists, 256, seed=42)
        assert a.shape == (256, 2)
        np.testing.assert_array_equal(a, b)
        c = sample_types(dists, 256, seed=43)
        assert np.any(a != c)

    def test_samples_inside_support(self):
        for d in ALL_FAMILIES:
            draws = sample_types([d], 500, seed=5)[:, 0]
            assert np.all(draws >= d.lo) and np.all(draws <= d.hi)

    def test_empirical_cdf_tracks_model(self):
        # Kolmogorov distance well under the ~0.031 critical value at n=4000
        for d in ALL_FAMILIES:
            draws = np.sort(sample_types([d], 4000, seed=17)[:, 0])
            emp = np.arange(1, 4001) / 4000.0
            gap = np.max(np.abs(np.asarray(d.cdf(draws)) - emp))
            assert gap < 0.04, type(d).__name__

    def test_negative_count_rejected(self):
        with pytest.raises(DomainError):
            sample_types([UniformType(0.0, 1.0)], -1, seed=0)


class TestConstructionErrors:
    def test_bad_support(self):
        with pytest.raises(DomainError):
            UniformType(1.0, 1.0)
        with pytest.raises(DomainError):
            UniformType(2.0, 1.0)

    def test_power_needs_positive_lo(self):
        with pytest.raises(DomainError):
            TruncatedPowerType(0.0, 1.0, -2.0)
        # exponent zero degenerates to uniform, any support fine
        TruncatedPowerType(0.0, 1.0, 0.0)

    def test_linear_ratio_positive(self):
        with pytest.raises(DomainError):
            TruncatedLinearType(0.0, 1.0, 0.0)

    def test_tabulated_needs_increasing_cdf(self):
        with pytest.raises(ValidationError):
            TabulatedType([0.0, 0.5, 1.0], [0.0, 0.5, 0.5])
        with pytest.raises(ValidationError):
            TabulatedType([0.0, 0.5, 0.5], [0.0, 0.5, 1.0])
        with pytest.raises(ValidationError):
            TabulatedType([0.0, 1.0], [0.1, 1.0])
