import math

import numpy as np
import pytest

from serrinlab import Annulus, Ball, DegenerateSphere, InadmissibleDomain, SpaceForm
from serrinlab.geometry import (
    ball_measures,
    conformal_factor,
    gauss_legendre,
    sphere_mean_curvature,
    unit_sphere_area,
    warp,
    warp_deriv,
    warp_deriv2,
)

KS = (-1.0, 0.0, 1.0)


@pytest.mark.parametrize("k,t,expected", [(0, 2, 2.0), (1, math.pi / 2, 1.0), (-1, 1, math.sinh(1.0))])
def test_warp_examples(k, t, expected):
    assert warp(k, t) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("k,t,expected", [(0, 5, 1.0), (1, math.pi / 3, 0.5), (-1, 0, 1.0)])
def test_conformal_factor_examples(k, t, expected):
    assert conformal_factor(k, t) == pytest.approx(expected, abs=1e-14)


def test_warp_scaled_curvature():
    # k = 4 is the sphere of radius 1/2
    assert warp(4.0, 0.3) == pytest.approx(math.sin(0.6) / 2)
    assert warp(-4.0, 0.3) == pytest.approx(math.sinh(0.6) / 2)


@pytest.mark.parametrize("k", KS)
def test_warp_ode_by_finite_differences(k, rng):
    t = rng.uniform(0.1, 1.4, 20)
    d = 1e-4
    h2 = (warp(k, t + d) - 2 * warp(k, t) + warp(k, t - d)) / d**2
    assert np.abs(h2 + k * warp(k, t)).max() < 1e-6
    assert np.allclose(warp_deriv2(k, t), -k * warp(k, t))
    assert warp(k, 0.0) == 0.0
    assert warp_deriv(k, 0.0) == 1.0
    dh = (warp(k, t + d) - warp(k, t - d)) / (2 * d)
    assert np.abs(dh - warp_deriv(k, t)).max() < 1e-8


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("k", KS)
def test_conformal_factor_eigenfunction(n, k, rng):
    # phi'' + (n-1)(h'/h) phi' = -n k phi for radial phi = h'
    t = rng.uniform(0.2, 1.4, 20)
    d = 1e-4
    phi = lambda s: conformal_factor(k, s)
    p1 = (phi(t + d) - phi(t - d)) / (2 * d)
    p2 = (phi(t + d) - 2 * phi(t) + phi(t - d)) / d**2
    lap = p2 + (n - 1) * warp_deriv(k, t) / warp(k, t) * p1
    assert np.abs(lap + n * k * phi(t)).max() < 1e-6


@pytest.mark.parametrize("n,k,R,expected", [
    (3, 0.0, 2.0, 1.0),
    (2, 1.0, math.pi / 4, 1.0),
    (3, -1.0, 1.0, 2.0 / math.tanh(1.0)),
])
def test_sphere_mean_curvature_examples(n, k, R, expected):
    assert sphere_mean_curvature(SpaceForm(n, k), R) == pytest.approx(expected, rel=1e-14)


def test_sphere_mean_curvature_euclidean_scaling():
    for n in (2, 3, 7):
        for R in (0.1, 1.0, 13.0):
            assert sphere_mean_curvature(SpaceForm(n, 0.0), R) * R == pytest.approx(n - 1, rel=1e-15)


def test_degenerate_spheres_rejected():
    with pytest.raises(DegenerateSphere):
        sphere_mean_curvature(SpaceForm(2, 0.0), 0.0)
    with pytest.raises(DegenerateSphere):
        sphere_mean_curvature(SpaceForm(2, 1.0), math.pi)


@pytest.mark.parametrize("n,k,dom,expected", [
    (2, 0.0, Ball(1.0), (math.pi, (2 * math.pi,))),
    (3, 0.0, Ball(2.0), (32 * math.pi / 3, (16 * math.pi,))),
    (2, 1.0, Ball(math.pi / 2), (2 * math.pi, (2 * math.pi,))),
    (2, 0.0, Annulus(0.5, 1.0), (0.75 * math.pi, (2 * math.pi, math.pi))),
])
def test_ball_measures_examples(n, k, dom, expected):
    vol, areas = ball_measures(SpaceForm(n, k), dom)
    assert vol == pytest.approx(expected[0], rel=1e-12)
    assert areas == pytest.approx(expected[1], rel=1e-12)


def test_unit_sphere_areas():
    assert unit_sphere_area(1) == pytest.approx(2 * math.pi)
    assert unit_sphere_area(2) == pytest.approx(4 * math.pi)
    assert unit_sphere_area(3) == pytest.approx(2 * math.pi**2)


def test_quadrature_order_at_least_four():
    # Richardson-style check with a low-order rule so the error is above round-off
    f = lambda t: np.sinh(t) ** 2
    exact = (math.sinh(2 * 1.3) / 2 - 1.3) / 2
    errs = [abs(gauss_legendre(f, 0.0, 1.3, panels=m, order=2) - exact) for m in (2, 4, 8)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert orders.min() >= 3.7


def test_inadmissible_radius():
    with pytest.raises(InadmissibleDomain):
        ball_measures(SpaceForm(2, 1.0), Ball(4.0))


@pytest.mark.parametrize("args", [(1, 0.0), (2, float("nan"))])
def test_space_form_validation(args):
    with pytest.raises(ValueError):
        SpaceForm(*args)


@pytest.mark.parametrize("args", [(-1.0,), (0.0,)])
def test_ball_validation(args):
    with pytest.raises(ValueError):
        Ball(*args)


def test_annulus_validation():
    with pytest.raises(ValueError):
        Annulus(1.0, 0.5)
