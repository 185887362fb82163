import numpy as np
import pytest

from lmakit.errors import ConfigurationError, DimensionError, UnsupportedActivationError
from lmakit.model import MLP, ArchSpec
from lmakit.regions import (
    arrangement_max_regions,
    count_regions_1d,
    count_regions_2d,
    generic_model,
    hidden_breakpoints_1d,
    maxout_region_bound,
    relu_region_bound,
)


def one_d(kind, width, k, seed):
    arch = ArchSpec(input_dim=1, hidden=(width,), output_dim=1, activation=kind, segments=k)
    model, degenerate = generic_model(arch, seed)
    assert not degenerate
    return model


def span(kinks):
    return float(kinks.min()) - 1.0, float(kinks.max()) + 1.0


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_relu_layer_has_n_plus_one_regions(n):
    for seed in range(3):
        model = one_d("relu", n, 2, seed)
        kinks = hidden_breakpoints_1d(model)
        rc = count_regions_1d(model, span(kinks))
        assert rc.regions == n + 1
        np.testing.assert_allclose(rc.breakpoints, kinks, atol=1e-7)


@pytest.mark.parametrize("kind,width,k", [
    ("lma", 1, 4), ("lma", 1, 8), ("lma", 3, 6), ("aplu", 2, 5), ("maxout", 2, 4), ("prelu", 3, 2),
])
def test_matches_brute_force_breakpoints(kind, width, k):
    for seed in range(3):
        model = one_d(kind, width, k, seed)
        kinks = hidden_breakpoints_1d(model)
        rc = count_regions_1d(model, span(kinks))
        assert rc.regions == len(kinks) + 1
        np.testing.assert_allclose(rc.breakpoints, kinks, atol=1e-7)


@pytest.mark.parametrize("k", [2, 4, 8, 12])
def test_single_lma_unit_has_k_regions(k):
    model = one_d("lma", 1, k, 11)
    rc = count_regions_1d(model, span(hidden_breakpoints_1d(model)))
    assert rc.regions == k


def test_discontinuity_is_a_boundary():
    model = MLP(ArchSpec(input_dim=1, hidden=(1,), output_dim=1, activation="lma", segments=2))
    model.layers[0].weight.data[:] = 1.0
    model.layers[1].alpha.data = np.array([1.0, 1.0])
    model.layers[1].beta.data = np.array([0.0, 1.0])
    model.layers[1].set_buffer("cuts_ema", np.array([0.5]))
    model.layers[2].weight.data[:] = 1.0
    rc = count_regions_1d(model, (-2.0, 2.0))
    assert rc.regions == 2
    assert rc.breakpoints[0] == pytest.approx(0.5, abs=1e-7)


def test_collinear_pieces_are_one_region():
    model = MLP(ArchSpec(input_dim=1, hidden=(2,), output_dim=1))
    model.layers[0].weight.data = np.array([[1.0, 1.0]])
    model.layers[0].bias.data = np.array([0.0, 0.0])
    model.layers[2].weight.data = np.array([[1.0], [-1.0]])
    assert count_regions_1d(model).regions == 1


def test_rejects_swish_and_wrong_dimension():
    with pytest.raises(UnsupportedActivationError):
        count_regions_1d(MLP(ArchSpec(input_dim=1, hidden=(2,), activation="swish")))
    with pytest.raises(DimensionError):
        count_regions_1d(MLP(ArchSpec(input_dim=2, hidden=(2,))))
    with pytest.raises(UnsupportedActivationError):
        count_regions_2d(MLP(ArchSpec(input_dim=2, hidden=(2,), activation="swish")))


def test_median_lma_count_grows_with_k():
    def median(kind, k):
        counts = []
        for seed in range(20):
            model = one_d(kind, 2, k, seed)
            counts.append(count_regions_1d(model, span(hidden_breakpoints_1d(model))).regions)
        return np.median(counts)

    relu = median("relu", 2)
    lma4, lma8 = median("lma", 4), median("lma", 8)
    assert lma8 > relu
    assert lma8 >= lma4


class TestTwoD:
    def test_affine_model(self):
        model = MLP(ArchSpec(input_dim=2, hidden=(), output_dim=1))
        assert count_regions_2d(model).regions == 1

    def test_one_relu_unit(self):
        model, _ = generic_model(ArchSpec(input_dim=2, hidden=(1,), output_dim=1), 0)
        assert count_regions_2d(model, ((-6, 6), (-6, 6))).regions == 2

    def test_two_relu_units_cross(self):
        for seed in range(5):
            model, _ = generic_model(ArchSpec(input_dim=2, hidden=(2,), output_dim=1), seed)
            w, c = model.layers[0].weight.data, model.layers[0].bias.data
            corner = np.linalg.solve(w.T, -c)
            half = max(4.0, 2 * np.abs(corner).max())
            assert count_regions_2d(model, ((-half, half), (-half, half)), grid=400).regions == 4

    def test_refinement_never_loses_regions(self):
        for seed in range(4):
            model, _ = generic_model(ArchSpec(input_dim=2, hidden=(4,), output_dim=1, activation="lma",
                                              segments=4), seed)
            coarse = count_regions_2d(model, grid=50).regions
            fine = count_regions_2d(model, grid=100).regions
            assert fine >= coarse

    def test_single_maxout_layer_within_arrangement_max(self):
        n, k = 3, 3
        for seed in range(4):
            model, _ = generic_model(ArchSpec(input_dim=2, hidden=(n,), output_dim=1, activation="maxout",
                                              segments=k), seed)
            rc = count_regions_2d(model, ((-3, 3), (-3, 3)), grid=200)
            assert rc.regions <= arrangement_max_regions(n * k * (k - 1) // 2, 2)


class TestBounds:
    def test_values(self):
        assert maxout_region_bound(1, 2, 2).bound == 4
        assert maxout_region_bound(1, 1, 5).bound == 5
        assert maxout_region_bound(3, 40, 7).bound == 7**42

    def test_relu_is_rank_two_maxout(self):
        assert relu_region_bound(2, 5) == maxout_region_bound(2, 5, 2)

    def test_cross_check_with_counter(self):
        model, _ = generic_model(ArchSpec(input_dim=2, hidden=(2,), output_dim=1), 3)
        empirical = count_regions_2d(model, ((-8, 8), (-8, 8)), grid=400).regions
        assert empirical == maxout_region_bound(1, 2, 2).bound

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            maxout_region_bound(0, 2, 2)
        with pytest.raises(ConfigurationError):
            maxout_region_bound(1, 2, 1)

    def test_arrangement(self):
        assert arrangement_max_regions(2, 2) == 4
        assert arrangement_max_regions(3, 2) == 7
        assert arrangement_max_regions(5, 1) == 6
