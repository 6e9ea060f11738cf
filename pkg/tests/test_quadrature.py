"""
Tests for per-site rules and tensor grids
"""

import numpy as np
import pytest
from scipy.special import erf

from clusterexp.errors import ResourceError
from clusterexp.utils.quadrature import SiteRegion, gauss_legendre, site_rule, tensor_product


def gaussian_mass(rule) -> float:
    return float(rule.weights @ np.exp(-0.5 * np.sum(rule.nodes ** 2, axis=1))) / np.sqrt(2.0 * np.pi)


class TestSiteRule:
    def test_panel_width_reproduces_the_default_ball(self):
        default = site_rule(1, SiteRegion(0.0, 5.0), 8, 2)
        scaled = site_rule(1, SiteRegion(0.0, 5.0), 8, 2, panel_width=2.5)
        assert scaled.size == default.size == 4 * 8
        assert scaled.nodes == pytest.approx(default.nodes)

    def test_annulus_panels_scale_with_width(self):
        # (2, 5] is 3 wide on each side
        assert site_rule(1, SiteRegion(2.0, 5.0), 8, 2, panel_width=1.0).size == 2 * 3 * 8
        assert site_rule(1, SiteRegion(2.0, 5.0), 8, 2, panel_width=2.5).size == 2 * 2 * 8
        assert site_rule(1, SiteRegion(2.0, 5.0), 8, 2).size == 2 * 2 * 8

    def test_radial_panels_in_two_components(self):
        rule = site_rule(2, SiteRegion(0.0, 4.0), 4, 1, angular_order=4, panel_width=1.0)
        # 4 radial panels of 4 nodes, 8 azimuths
        assert rule.size == 4 * 4 * 8

    def test_split_regions_add_up_to_the_ball(self):
        ball = site_rule(1, SiteRegion(0.0, 2.0), 16, 2, panel_width=1.25)
        annulus = site_rule(1, SiteRegion(2.0, 5.0), 16, 2, panel_width=1.25)
        assert gaussian_mass(ball) == pytest.approx(erf(2.0 / np.sqrt(2.0)), rel=1e-12)
        assert gaussian_mass(ball) + gaussian_mass(annulus) == pytest.approx(erf(5.0 / np.sqrt(2.0)), rel=1e-12)

    def test_empty_region(self):
        assert site_rule(1, SiteRegion(3.0, 3.0)).size == 0


class TestGrids:
    def test_gauss_legendre_panels(self):
        nodes, weights = gauss_legendre(-1.0, 3.0, 5, 4)
        assert len(nodes) == 20
        assert weights.sum() == pytest.approx(4.0)
        assert weights @ nodes ** 3 == pytest.approx((3.0 ** 4 - 1.0) / 4.0)

    def test_tensor_product_is_site_major(self):
        rule = site_rule(1, SiteRegion(0.0, 1.0), 2, 1)
        points, weights = tensor_product([rule, rule])
        assert points.shape == (16, 2)
        assert weights.sum() == pytest.approx(4.0)
        assert points[1, 0] == points[0, 0]

    def test_node_budget(self):
        rule = site_rule(1, SiteRegion(0.0, 1.0), 4, 1)
        with pytest.raises(ResourceError):
            tensor_product([rule, rule, rule], node_budget=100)
