import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convnorm import (
    BRANCHES,
    Filter4D,
    branch_matrix,
    compute_bound,
    exact_norm_fft,
    random_filter,
    reshape_flat_in,
    reshape_flat_out,
    reshape_hw,
    reshape_to_filter,
    reshape_wh,
)


@pytest.fixture
def abcd_filter():
    return Filter4D(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))


class TestReshapeLayouts:
    def test_single_channel_hw_is_spatial_matrix(self, abcd_filter):
        np.testing.assert_array_equal(reshape_hw(abcd_filter), [[1, 2], [3, 4]])

    def test_single_channel_wh_is_spatial_transpose(self, abcd_filter):
        np.testing.assert_array_equal(reshape_wh(abcd_filter), [[1, 3], [2, 4]])

    def test_single_channel_flat_in_row(self, abcd_filter):
        np.testing.assert_array_equal(reshape_flat_in(abcd_filter), [[1, 2, 3, 4]])

    def test_single_channel_flat_out_column(self, abcd_filter):
        np.testing.assert_array_equal(reshape_flat_out(abcd_filter), [[1], [2], [3], [4]])

    def test_column_filter(self):
        filt = Filter4D(np.array([5.0, 7.0]).reshape(2, 1, 1, 1))
        np.testing.assert_array_equal(reshape_hw(filt), [[5.0], [7.0]])

    def test_tap_filter_row(self, tap_filter):
        np.testing.assert_array_equal(reshape_hw(tap_filter), [[1.0, 2.0, -1.0]])
        np.testing.assert_array_equal(reshape_wh(tap_filter), [[1.0], [2.0], [-1.0]])
        np.testing.assert_array_equal(reshape_flat_in(tap_filter), [[1.0, 2.0, -1.0]])

    def test_block_layout_against_index_oracle(self, arange_filter):
        # brute-force block placement rules for all four reshapes
        c_out, c_in, h, w = arange_filter.dims
        vals = arange_filter.values
        m_hw = reshape_hw(arange_filter)
        m_wh = reshape_wh(arange_filter)
        m_fi = reshape_flat_in(arange_filter)
        m_fo = reshape_flat_out(arange_filter)
        assert m_hw.shape == (c_out * h, c_in * w)
        assert m_wh.shape == (c_out * w, c_in * h)
        assert m_fi.shape == (c_out, c_in * h * w)
        assert m_fo.shape == (c_out * h * w, c_in)
        for k in range(h):
            for l in range(w):
                block = vals[:, :, k, l]
                np.testing.assert_array_equal(
                    m_hw[k * c_out : (k + 1) * c_out, l * c_in : (l + 1) * c_in], block
                )
                np.testing.assert_array_equal(
                    m_wh[l * c_out : (l + 1) * c_out, k * c_in : (k + 1) * c_in], block
                )
                j = k * w + l
                np.testing.assert_array_equal(
                    m_fi[:, j * c_in : (j + 1) * c_in], block
                )
                np.testing.assert_array_equal(
                    m_fo[j * c_out : (j + 1) * c_out, :], block
                )

    def test_single_channel_wh_is_hw_transposed(self):
        for seed in range(5):
            filt = random_filter((1, 1, 3, 4), seed)
            np.testing.assert_array_equal(reshape_wh(filt), reshape_hw(filt).T)

    def test_inverse_reshape_round_trip(self, arange_filter):
        for branch in BRANCHES:
            recovered = reshape_to_filter(
                branch_matrix(arange_filter, branch), branch, arange_filter.dims
            )
            np.testing.assert_array_equal(recovered, arange_filter.values)

    def test_inverse_reshape_rejects_unknown_branch(self, arange_filter):
        with pytest.raises(ValueError):
            reshape_to_filter(np.zeros((2, 2)), "nope", arange_filter.dims)


class TestComputeBound:
    def test_scalar_filter(self):
        report = compute_bound(Filter4D(np.array([[[[-2.5]]]])))
        assert report.bound == pytest.approx(2.5, rel=1e-12)
        for name in BRANCHES:
            assert report.norms[name] == pytest.approx(2.5, rel=1e-12)
        assert report.argmin == "hw"

    def test_tap_filter_rank_one_norms(self, tap_filter):
        report = compute_bound(tap_filter)
        for name in BRANCHES:
            assert report.norms[name] == pytest.approx(np.sqrt(6), rel=1e-10)
        assert report.scale == pytest.approx(np.sqrt(3))
        assert report.bound == pytest.approx(np.sqrt(18), rel=1e-10)
        assert report.argmin == "hw"  # exact four-way tie broken in fixed order

    def test_all_ones_2x2_equals_exact(self):
        filt = Filter4D(np.ones((1, 1, 2, 2)))
        report = compute_bound(filt)
        for name in BRANCHES:
            assert report.norms[name] == pytest.approx(2.0, rel=1e-10)
        assert report.bound == pytest.approx(4.0, rel=1e-10)
        assert exact_norm_fft(filt, 4) == pytest.approx(4.0, rel=1e-10)

    def test_report_invariants(self):
        filt = random_filter((3, 2, 3, 3), 9)
        report = compute_bound(filt)
        assert report.bound == pytest.approx(
            report.scale * min(report.norms.values()), rel=1e-15
        )
        for name in BRANCHES:
            assert report.bound <= report.scale * report.norms[name] * (1 + 1e-12)
        assert report.norms[report.argmin] == min(report.norms.values())
        assert report.scaled_norms[report.argmin] == pytest.approx(report.bound)

    @pytest.mark.parametrize("alpha", [3.0, -2.0, 0.125])
    def test_scale_equivariance(self, alpha):
        filt = random_filter((2, 3, 3, 3), 17)
        base = compute_bound(filt)
        scaled = compute_bound(Filter4D(alpha * filt.values))
        assert scaled.bound == pytest.approx(abs(alpha) * base.bound, rel=1e-12)
        assert scaled.argmin == base.argmin

    def test_frobenius_norm_preserved_by_all_reshapes(self):
        filt = random_filter((3, 4, 2, 5), 23)
        entries = np.sort(filt.values.ravel())
        target = np.linalg.norm(filt.values)
        for name in BRANCHES:
            mat = branch_matrix(filt, name)
            # exact permutation of the same entries ...
            np.testing.assert_array_equal(np.sort(mat.ravel()), entries)
            # ... so the Frobenius norms agree to reduction-order rounding
            assert np.linalg.norm(mat) == pytest.approx(target, rel=1e-15)

    def test_channel_swap_duality(self):
        # flat_in of L has the same spectral norm as flat_out of the
        # channel-swapped filter: they are transposes up to a block permutation
        for seed in range(4):
            filt = random_filter((2, 3, 2, 2), seed)
            swapped = Filter4D(filt.values.transpose(1, 0, 2, 3))
            a = np.linalg.svd(reshape_flat_in(filt), compute_uv=False)[0]
            b = np.linalg.svd(reshape_flat_out(swapped), compute_uv=False)[0]
            assert a == pytest.approx(b, rel=1e-12)
            # row/column sets match exactly: same rows, permuted
            rows_a = sorted(map(tuple, reshape_flat_in(filt).T))
            rows_b = sorted(map(tuple, reshape_flat_out(swapped)))
            assert rows_a == rows_b

    def test_soundness_on_small_sweep(self):
        for shape in [(1, 1, 2, 2), (2, 2, 3, 3), (3, 1, 2, 3)]:
            for seed in range(3):
                filt = random_filter(shape, seed)
                report = compute_bound(filt)
                for n in (4, 6):
                    if n <= max(shape[2:]):
                        continue
                    exact = exact_norm_fft(filt, n)
                    assert report.bound >= exact - 1e-6 * report.bound

    def test_reshape_norms_spread_at_scale(self):
        # the four scaled norms genuinely differ for a realistic filter: the
        # min over them is strictly better than any single reshape heuristic
        report = compute_bound(random_filter((64, 64, 3, 3), 0))
        scaled = [report.scaled_norms[name] for name in BRANCHES]
        assert max(scaled) - min(scaled) > 1.0

    def test_exactness_for_1x1_kernels(self):
        for seed in range(5):
            filt = random_filter((4, 3, 1, 1), seed)
            report = compute_bound(filt)
            values = list(report.norms.values())
            for val in values[1:]:
                assert val == pytest.approx(values[0], rel=1e-10)
            exact = exact_norm_fft(filt, 3)
            assert abs(report.bound - exact) <= 1e-8 * exact


@settings(max_examples=20, deadline=None)
@given(
    dims=st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)),
    seed=st.integers(0, 10_000),
)
def test_property_bound_dominates_every_reshape(dims, seed):
    filt = random_filter(dims, seed)
    report = compute_bound(filt)
    scale = math.sqrt(dims[2] * dims[3])
    assert report.scale == pytest.approx(scale)
    smallest = min(report.norms.values())
    assert report.bound == pytest.approx(scale * smallest, rel=1e-15)
    oracle = {
        name: np.linalg.svd(branch_matrix(filt, name), compute_uv=False)[0]
        for name in BRANCHES
    }
    for name in BRANCHES:
        assert report.norms[name] == pytest.approx(oracle[name], rel=1e-7)
