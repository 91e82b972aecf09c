"""Tests for the eps-expansion, the quasi-polynomial split and the flux decomposition."""

import numpy as np
import pytest

from app.errors import BoxTooSmall, HorizonTooShort
from app.expansion_lab import (
    ScaledBox,
    corrector_error,
    expansion_error,
    expansion_errors,
    flux_decomposition,
    growth_exponent,
    periodic_remainder,
    quasi_poly_decompose,
    reconstruct_v1,
    reconstruction_error,
    residuals,
    solve_hierarchy,
    solve_v0,
    solve_vm,
    tile,
    time_averages,
    time_weights,
    v00_of,
)
from app.homog_ref import solve_cell
from app.kernels import construct_kernel
from app.media import catalog
from pipeline.rates import fit_slope

EPS_LEVELS = [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7]
ALPHAS = [2.0**-2, 2.0**-3, 2.0**-4, 2.0**-5]


@pytest.fixture
def fig2_field():
    return catalog("fig2-1d")


@pytest.fixture(scope="module")
def cell_terms():
    """Cell histories for the locally periodic medium, long enough for every alpha."""
    return quasi_poly_decompose(catalog("locally-periodic-1d"), [1.0], 0.5 / min(ALPHAS), 32)


# --- Box solves ---


class TestBoxSolves:
    def test_constant_medium_has_no_corrections(self, constant_1d):
        v0, v1, v2 = solve_hierarchy(constant_1d, [1.0], 2, 2.0, 1.0, 16)
        np.testing.assert_array_equal(v00_of(v0, [1.0]), 0.0)
        np.testing.assert_array_equal(v1.values, 0.0)
        np.testing.assert_array_equal(v2.values, 0.0)

    def test_v0_starts_linear(self, fig2_field):
        v0 = solve_v0(fig2_field, [2.0], 2.0, 1.0, 16)
        np.testing.assert_allclose(v0.values[0], 2.0 * v0.axes[0])
        assert v0.times[-1] == pytest.approx(1.0)

    def test_x_independent_medium_has_no_slow_terms(self, periodic_1d):
        v1 = solve_vm(periodic_1d, [1.0], 1, 2.0, 1.0, 16)
        np.testing.assert_array_equal(v1.values, 0.0)

    def test_vm_needs_positive_order(self, fig2_field):
        with pytest.raises(ValueError):
            solve_vm(fig2_field, [1.0], 0, 2.0, 1.0, 16)

    def test_order_limit(self, fig2_field):
        with pytest.raises(ValueError):
            solve_hierarchy(fig2_field, [1.0], 3, 2.0, 1.0, 16)

    def test_box_inside_domain_of_dependence(self, fig2_field):
        with pytest.raises(BoxTooSmall):
            solve_v0(fig2_field, [1.0], 1.0, 1.0, 16)

    def test_box_must_hold_whole_cells(self, fig2_field):
        with pytest.raises(ValueError):
            ScaledBox(fig2_field, 3.01, 1.0, 32)

    def test_growth_exponents(self, fig2_field):
        radii = [12.0, 16.0, 20.0, 24.0]
        _, v1, v2 = solve_hierarchy(fig2_field, [1.0], 2, 26.0, 1.0, 32)
        assert growth_exponent(v1, radii) == pytest.approx(1.0, abs=0.3)
        assert growth_exponent(v2, radii) == pytest.approx(2.0, abs=0.3)

    def test_remainder_drops_the_periodic_offset(self, fig2_field):
        _, v1 = solve_hierarchy(fig2_field, [1.0], 1, 6.0, 1.0, 32)
        remainder = periodic_remainder(v1)
        y = v1.axes[0]
        base_cell = (y >= 0.0) & (y < 1.0)
        np.testing.assert_array_equal(remainder[base_cell], 0.0)
        # v1 carries a constant offset of about pi t^2 / 2 that the remainder removes
        assert abs(float(np.mean(v1.final()[base_cell]))) > 1.0
        assert np.max(np.abs(remainder[np.abs(y) <= 1.0])) < 0.5

    def test_growth_radii_inside_seam_free_region(self, fig2_field):
        _, v1 = solve_hierarchy(fig2_field, [1.0], 1, 6.0, 1.0, 32)
        assert v1.valid_radius == pytest.approx(6.0 - np.sqrt(fig2_field.c2))
        with pytest.raises(BoxTooSmall, match="seam-free"):
            growth_exponent(v1, [2.0, 4.0, 6.0])


# --- Expansion errors ---


class TestExpansionErrors:
    def test_constant_medium_is_exact(self, constant_1d):
        errors = expansion_errors(constant_1d, [1.0], [0, 1], [0.1, 0.05], n_per_unit=16)
        assert errors == {0: [0.0, 0.0], 1: [0.0, 0.0]}

    def test_window_shielded_from_seam(self, fig2_field):
        with pytest.raises(BoxTooSmall):
            expansion_errors(fig2_field, [1.0], [0], [0.1], L=2.0)

    def test_single_order_matches_batch(self, fig2_field):
        batch = expansion_errors(fig2_field, [1.0], [0, 1], [0.1], n_per_unit=16)
        single = expansion_error(fig2_field, [1.0], 1, [0.1], n_per_unit=16)
        assert single == pytest.approx(batch[1], rel=1e-12)

    def test_taylor_rates(self, fig2_field):
        errors = expansion_errors(fig2_field, [1.0], [0, 1, 2], EPS_LEVELS)
        for m in (0, 1, 2):
            assert fit_slope(EPS_LEVELS, errors[m]).slope == pytest.approx(m + 1, abs=0.4)
        # Higher orders are more accurate at every level
        for i in range(len(EPS_LEVELS)):
            assert errors[2][i] < errors[1][i] < errors[0][i]


# --- Quasi-polynomial decomposition ---


class TestQuasiPolynomial:
    def test_cell_means_stay_zero(self, cell_terms):
        assert cell_terms.max_cell_mean < 1e-10
        assert abs(float(np.mean(cell_terms.v00[-1]))) < 1e-10

    def test_x_independent_medium(self, periodic_1d):
        terms = quasi_poly_decompose(periodic_1d, [1.0], 1.0, 32)
        np.testing.assert_array_equal(terms.v11[0], 0.0)
        np.testing.assert_array_equal(terms.v10_tilde, 0.0)
        np.testing.assert_array_equal(terms.g, 0.0)

    def test_mean_offset_grows_at_most_cubically(self, cell_terms):
        t = np.asarray(cell_terms.times)
        envelope = np.maximum.accumulate(np.abs(cell_terms.g))
        late = t >= 0.25 * t[-1]
        assert np.all(envelope[late] > 0.0)
        assert fit_slope(t[late], envelope[late]).slope <= 3.3

    def test_tile_is_periodic(self):
        cell = np.arange(4.0)
        axes = [np.arange(-8, 8) / 4.0]
        np.testing.assert_array_equal(tile(cell, axes, 4), np.tile(cell, 4))

    def test_reconstruction_matches_direct_solve(self, locally_periodic_1d):
        assert reconstruction_error(locally_periodic_1d, [1.0], 4.0, 1.0, 32) < 1e-3

    def test_reconstruct_shape(self, locally_periodic_1d):
        terms = quasi_poly_decompose(locally_periodic_1d, [1.0], 0.5, 32)
        axes = [np.arange(-64, 64) / 32.0]
        assert reconstruct_v1(terms, axes).shape == (128,)


# --- Time averages ---


class TestTimeAverages:
    def test_horizon_too_short(self, locally_periodic_1d, kernel):
        terms = quasi_poly_decompose(locally_periodic_1d, [1.0], 1.0, 32)
        with pytest.raises(HorizonTooShort):
            time_weights(terms, kernel, 0.1, 1.0)

    def test_weights_have_unit_mass(self, cell_terms, kernel):
        weights = time_weights(cell_terms, kernel, 0.125, 1.0)
        # Mirrored weights: w_0 + 2 sum w_n approximates the full symmetric integral
        assert float(np.sum(weights)) == pytest.approx(1.0, abs=1e-10)

    def test_residual_and_corrector_decay(self, cell_terms, locally_periodic_1d):
        kernel = construct_kernel(3, 4)
        cell = solve_cell(locally_periodic_1d, [0.0], 32)
        res, res11, res10, corr = [], [], [], []
        for alpha in ALPHAS:
            avg = time_averages(cell_terms, kernel, alpha, 1.0)
            values = residuals(avg, cell_terms)
            res.append(values["d00"])
            res11.append(values["d11"])
            res10.append(values["d10"])
            corr.append(corrector_error(avg, cell, [1.0]))
        assert fit_slope(ALPHAS, res).slope >= kernel.q - 0.5
        # the slow equations lose up to one and two powers of alpha
        assert fit_slope(ALPHAS, res11).slope >= kernel.q - 1.5
        assert fit_slope(ALPHAS, res10).slope >= kernel.q - 2.5
        # The finest alpha reaches the cell-solver tolerance
        assert fit_slope(ALPHAS[:3], corr[:3]).slope >= kernel.q - 0.5

    def test_residual_keys(self, cell_terms, kernel):
        avg = time_averages(cell_terms, kernel, 0.25, 1.0)
        assert set(residuals(avg, cell_terms)) == {"d00", "d11", "d10"}


# --- Flux decomposition ---


class TestFluxDecomposition:
    def test_constant_medium(self, constant_1d, kernel):
        dec = flux_decomposition(constant_1d, [1.0], 0.0025, 0.01, kernel)
        assert dec.f0[0] == pytest.approx(1.0, abs=1e-8)
        assert dec.eps_f1 == [0.0]
        assert dec.delta == [0.0]
        assert abs(dec.tail[0]) < 1e-10

    def test_x_independent_medium_is_all_leading_order(self, periodic_1d, kernel):
        dec = flux_decomposition(periodic_1d, [1.0], 0.0025, 0.01, kernel)
        assert dec.eps_f1 == [0.0]
        assert dec.delta == [0.0]
        assert abs(dec.tail[0]) < 1e-10
        assert dec.f0[0] == pytest.approx(dec.reference[0], rel=5e-2)

    @pytest.mark.slow
    def test_one_dimensional_rates(self, cell_terms):
        kernel = construct_kernel(3, 4)
        field = catalog("locally-periodic-1d")
        eta = 0.001
        f0_errors, f1_values = [], []
        for alpha in ALPHAS:
            eps = alpha * eta
            dec = flux_decomposition(field, [1.0], eps, eta, kernel, terms=cell_terms, n=32)
            f0_errors.append(abs(dec.f0[0] - dec.reference[0]))
            f1_values.append(abs(dec.eps_f1[0]) / eps)
        assert fit_slope(ALPHAS[:3], f0_errors[:3]).slope >= kernel.q - 0.5
        assert fit_slope(ALPHAS, f1_values).slope >= kernel.q - 1.5
