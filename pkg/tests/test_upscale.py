"""Tests for the HMM flux and the upscaling error."""

import math

import pytest

from app.errors import MetadataMismatch
from app.homog_ref import homogenized_flux, homogenized_tensor
from app.kernels import construct_kernel
from app.media import catalog
from app.models import FluxMode, FluxVector
from app.upscale import effective_matrix, flux_cap, hmm_flux, upscaling_error
from tests.test_micro_sim import make_problem


def make_flux(value, r0=None, slope=None) -> FluxVector:
    d = len(value)
    return FluxVector(value=value, r0=r0 or [0.0] * d, slope=slope or [1.0] * d)


# --- HMM flux ---


class TestHmmFlux:
    def test_constant_medium(self, kernel):
        problem = make_problem(field=catalog("constant", 1, 2.0), s=[0.5])
        flux = hmm_flux(problem, kernel)
        assert flux.value[0] == pytest.approx(1.0, abs=1e-8)
        assert flux.source == FluxMode.HMM
        assert (flux.eps, flux.eta, flux.p, flux.q) == (0.0025, 0.01, 3, 6)

    def test_linear_in_slope(self, kernel):
        single = hmm_flux(make_problem(s=[1.0]), kernel)
        triple = hmm_flux(make_problem(s=[3.0]), kernel)
        assert triple.value[0] == pytest.approx(3.0 * single.value[0], rel=1e-12)

    def test_within_sanity_cap(self, kernel):
        problem = make_problem()
        flux = hmm_flux(problem, kernel)
        assert abs(flux.value[0]) <= flux_cap(problem)

    def test_periodic_error_shrinks_with_alpha(self, periodic_1d):
        kernel = construct_kernel(3, 6)
        reference = homogenized_flux(homogenized_tensor(periodic_1d, [0.0], 32), [1.0])
        errors = []
        for eps in (0.005, 0.00125):
            flux = hmm_flux(make_problem(eps=eps), kernel)
            errors.append(upscaling_error(flux, reference))
        assert errors[1] < 0.1 * errors[0]

    def test_nodal_sampling_is_close_to_staggered(self, kernel):
        staggered = hmm_flux(make_problem(), kernel)
        nodal = hmm_flux(make_problem(flux_sampling="nodal"), kernel)
        assert nodal.value[0] == pytest.approx(staggered.value[0], rel=5e-2)


# --- Resolution and box size ---


class TestMicroResolution:
    def test_grid_refinement_is_second_order(self, kernel):
        field = catalog("locally-periodic-1d")
        fluxes = []
        for n in (16, 32, 64):
            problem = make_problem(field=field, r0=[0.3], eps=0.005, pts_per_eps=n)
            fluxes.append(hmm_flux(problem, kernel).value[0])
        rate = math.log2(abs(fluxes[0] - fluxes[1]) / abs(fluxes[1] - fluxes[2]))
        assert rate >= 1.5

    def test_box_margin_does_not_reach_the_window(self, kernel):
        field = catalog("locally-periodic-1d")
        problem = make_problem(field=field, r0=[0.3])
        wide = hmm_flux(problem.model_copy(update={"L": problem.min_half_width + 0.005}), kernel)
        narrow = hmm_flux(
            problem.model_copy(update={"L": problem.min_half_width + 0.0025}), kernel
        )
        assert narrow.value[0] == pytest.approx(wide.value[0], rel=1e-8)


# --- Effective matrix ---


class TestEffectiveMatrix:
    def test_swap_symmetric_medium(self):
        field = catalog("periodic-2d")
        kernel = construct_kernel(3, 2)
        problem = make_problem(field=field, eps=0.05, eta=0.1, tau=0.1, pts_per_eps=16)
        matrix = effective_matrix(problem, kernel)
        assert matrix.shape == (2, 2)
        # a(y1, y2) is invariant under swapping the coordinates
        assert matrix[0, 0] == pytest.approx(matrix[1, 1], rel=1e-10)
        assert matrix[0, 1] == pytest.approx(matrix[1, 0], abs=1e-10)


# --- Upscaling error ---


class TestUpscalingError:
    def test_max_norm(self):
        assert upscaling_error(make_flux([1.0, 2.0]), make_flux([1.5, 1.0])) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(MetadataMismatch):
            upscaling_error(make_flux([1.0]), make_flux([1.0, 2.0]))

    def test_point_mismatch(self):
        with pytest.raises(MetadataMismatch):
            upscaling_error(make_flux([1.0], r0=[0.0]), make_flux([1.0], r0=[0.5]))

    def test_slope_mismatch(self):
        with pytest.raises(MetadataMismatch):
            upscaling_error(make_flux([1.0], slope=[1.0]), make_flux([1.0], slope=[2.0]))

    def test_identical_fluxes(self):
        assert upscaling_error(make_flux([0.3]), make_flux([0.3])) == 0.0
