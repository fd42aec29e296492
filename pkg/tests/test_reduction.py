"""Peak ansatz evaluation, reduced-energy quadrature, and expansion fits.

The quadrature oracle is the constants module: on any boundary the energy of
the transplanted spike must approach the half-space constant C with slope
-alpha*H in eps.  The Gram entry of the tangential basis function has the
closed radial form (p-1) * (pi/2) * int V^{p-2} V'^2 r dr in the plane.
"""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from spikelab import geometry as G
from spikelab import reduction as R
from spikelab.errors import ChartOverflow, DegenerateH, DegenerateLandscape
from spikelab.profile import compute_constants

FIT_EPS = [0.0025, 0.00375, 0.005, 0.0075, 0.01]


@pytest.fixture(scope="module")
def circle():
    return G.disk(1.0)


@pytest.fixture(scope="module")
def ell21():
    return G.ellipse(2.0, 1.0)


@pytest.fixture(scope="module")
def constants(townes):
    return compute_constants(townes)


class TestEvalAnsatz:
    def test_peak_value(self, townes, circle):
        a = R.PeakAnsatz(eps=0.05, xi=0.0, R_cut=0.8, profile=townes)
        val = R.eval_ansatz(a, circle, circle.boundary_point(0.0))
        assert val == pytest.approx(townes.v[0], rel=1e-8)

    def test_zero_far_from_boundary(self, townes, circle):
        a = R.PeakAnsatz(eps=0.05, xi=0.0, R_cut=0.5, profile=townes)
        assert R.eval_ansatz(a, circle, np.array([0.1, 0.0])) == 0.0

    def test_disk_normal_ray(self, townes, circle):
        eps = 0.05
        a = R.PeakAnsatz(eps=eps, xi=0.0, R_cut=0.8, profile=townes)
        for r in (0.5, 2.0, 4.0):
            x = np.array([1.0 - eps * r, 0.0])
            v, _ = townes(r)
            assert R.eval_ansatz(a, circle, x) == pytest.approx(float(v), rel=1e-7)

    def test_cutoff_gradient_bound(self):
        from spikelab._numutil import cutoff, cutoff_d1

        rho = np.linspace(0, 1.0, 2001)
        chi = cutoff(rho, 0.8)
        assert np.all(chi[rho <= 0.4] == 1.0)
        assert np.all(chi[rho >= 0.8] == 0.0)
        assert np.max(np.abs(cutoff_d1(rho, 2.0))) <= 2.0


class TestBasisFunction:
    def test_zero_at_peak(self, townes, circle):
        a = R.PeakAnsatz(eps=0.05, xi=0.0, R_cut=0.8, profile=townes)
        assert R.basis_function(a, 1, circle, circle.boundary_point(0.0)) == 0.0

    def test_odd_symmetry(self, townes, circle):
        eps = 0.05
        a = R.PeakAnsatz(eps=eps, xi=0.0, R_cut=0.8, profile=townes)
        ch = G.FermiChart(circle, 0.0)
        for s, t in [(0.05, 0.02), (0.1, 0.0), (0.02, 0.08)]:
            plus = R.basis_function(a, 1, circle, ch.map([s], t))
            minus = R.basis_function(a, 1, circle, ch.map([-s], t))
            assert plus == pytest.approx(-minus, rel=1e-6, abs=1e-12)

    def test_index_range(self, townes, circle):
        a = R.PeakAnsatz(eps=0.05, xi=0.0, R_cut=0.8, profile=townes)
        with pytest.raises(ValueError):
            R.basis_function(a, 2, circle, np.array([0.9, 0.0]))

    def test_gram_approaches_halfspace_value(self, townes, circle):
        # closed radial oracle for <Z,Z>: the basis member solves the
        # linearized half-space problem, so its H^1 norm equals the
        # potential-weighted square integral
        r, v, dv = townes.r_grid, townes.v, townes.dv
        oracle = (townes.p - 1) * (math.pi / 2.0) * simpson(v ** (townes.p - 2) * dv**2 * r, x=r)
        vals = [R.basis_gram(circle, townes, e, 0.0) for e in (0.1, 0.05, 0.025)]
        rel = [abs(g - oracle) / oracle for g in vals]
        assert rel[0] < 0.01
        assert rel[2] < rel[0]
        assert rel[2] < 2e-3


class TestReducedEnergy:
    def test_disk_xi_independent(self, townes, circle):
        vals = [
            R.reduced_energy(circle, townes, 0.05, xi, want_gradient=False).J
            for xi in np.linspace(0, 2 * math.pi, 8, endpoint=False)
        ]
        spread = (max(vals) - min(vals)) / abs(vals[0])
        assert spread < 1e-6

    def test_disk_approaches_C(self, townes, circle, constants):
        diffs = []
        for eps in (0.04, 0.02, 0.01):
            s = R.reduced_energy(circle, townes, eps, 0.0, want_gradient=False)
            diffs.append(abs(s.J - constants.C))
        assert diffs[2] < diffs[1] < diffs[0]
        # fitted linear rate: |J - C| / eps within 10% of alpha (H=1)
        for eps, d in zip((0.04, 0.02, 0.01), diffs):
            assert abs(d / eps - constants.alpha) / constants.alpha < 0.10

    def test_ellipse_energy_ordering(self, townes, ell21):
        for eps in (0.02, 0.04):
            j_max = R.reduced_energy(ell21, townes, eps, 0.0, want_gradient=False).J
            j_min = R.reduced_energy(ell21, townes, eps, math.pi / 2, want_gradient=False).J
            assert j_max < j_min

    def test_rate_at_least_linear(self, townes, ell21, constants):
        eps = np.array([0.04, 0.02, 0.01, 0.005])
        dev = [
            abs(R.reduced_energy(ell21, townes, e, 0.0, want_gradient=False).J - constants.C)
            for e in eps
        ]
        slope = np.polyfit(np.log(eps), np.log(dev), 1)[0]
        assert slope >= 1.0 - 0.05

    def test_cutoff_insensitivity(self, townes, circle):
        # +-25% around R_cut=0.8; exponentially small influence
        for eps, bound in ((0.04, math.exp(-0.8 / 0.08)), (0.02, 1e-8)):
            j_base = R.reduced_energy(circle, townes, eps, 0.0, R_cut=0.8, want_gradient=False).J
            j_low = R.reduced_energy(circle, townes, eps, 0.0, R_cut=0.6, want_gradient=False).J
            j_high = R.reduced_energy(circle, townes, eps, 0.0, R_cut=1.0, want_gradient=False).J
            assert abs(j_low - j_base) < bound
            assert abs(j_high - j_base) < bound

    def test_eps_precondition(self, townes, circle):
        with pytest.raises(ValueError):
            R.reduced_energy(circle, townes, 0.09, 0.0, R_cut=0.8)

    def test_chart_overflow(self, townes):
        squashed = G.ellipse(4.0, 0.5)  # reach 1/64 at the tip
        with pytest.raises(ChartOverflow):
            R.reduced_energy(squashed, townes, 0.05, 0.0, R_cut=0.8)


class TestFitExpansion:
    def test_exact_linear_data(self, townes):
        samples = [
            R.ReducedEnergySample(eps=e, xi=0.0, J=7.0 - 2.0 * e, gradJ=np.zeros(1),
                                  quad_error=0.0, H=1.0)
            for e in (0.01, 0.02, 0.03, 0.04, 0.05)
        ]
        fit = R.fit_expansion(samples)
        assert fit.C_hat == pytest.approx(7.0, abs=1e-12)
        assert fit.slope_hat == pytest.approx(-2.0, abs=1e-12)
        assert fit.alpha_hat == pytest.approx(2.0, abs=1e-12)

    def test_ellipse_alpha_within_5pc(self, townes, ell21, constants):
        samples = [
            R.reduced_energy(ell21, townes, e, 0.0, want_gradient=False) for e in FIT_EPS
        ]
        fit = R.fit_expansion(samples)
        assert fit.r_squared > 0.999
        assert abs(fit.alpha_hat - constants.alpha) / constants.alpha < 0.05

    def test_disk_alpha_within_5pc(self, townes, circle, constants):
        samples = [
            R.reduced_energy(circle, townes, e, 0.0, want_gradient=False) for e in FIT_EPS
        ]
        fit = R.fit_expansion(samples)
        assert fit.r_squared > 0.999
        assert abs(fit.alpha_hat - constants.alpha) / constants.alpha < 0.05

    def test_disjoint_subranges_consistent(self, townes, circle):
        low = [
            R.reduced_energy(circle, townes, e, 0.0, want_gradient=False)
            for e in (0.0025, 0.00375, 0.005, 0.0075, 0.01)
        ]
        high = [
            R.reduced_energy(circle, townes, e, 0.0, want_gradient=False)
            for e in (0.01, 0.015, 0.02, 0.03, 0.04)
        ]
        a_low = R.fit_expansion(low).alpha_hat
        a_high = R.fit_expansion(high).alpha_hat
        assert abs(a_low - a_high) / a_low < 0.05

    def test_degenerate_H(self):
        samples = [
            R.ReducedEnergySample(eps=e, xi=0.0, J=1.0 - e, gradJ=np.zeros(1),
                                  quad_error=0.0, H=0.0)
            for e in (0.01, 0.02, 0.03, 0.04)
        ]
        with pytest.raises(DegenerateH):
            R.fit_expansion(samples)

    def test_span_precondition(self):
        samples = [
            R.ReducedEnergySample(eps=e, xi=0.0, J=1.0 - e, gradJ=np.zeros(1),
                                  quad_error=0.0, H=1.0)
            for e in (0.01, 0.015, 0.02, 0.03)
        ]
        with pytest.raises(ValueError):
            R.fit_expansion(samples)


class TestGradientCheck:
    def test_ellipse_generic_point(self, townes, ell21):
        out = R.gradient_check(ell21, townes, 0.02, math.pi / 4)
        assert out["relative_deviation"] < 0.10

    def test_deviation_shrinks_with_eps(self, townes, ell21):
        d1 = R.gradient_check(ell21, townes, 0.02, math.pi / 4)["relative_deviation"]
        d2 = R.gradient_check(ell21, townes, 0.01, math.pi / 4)["relative_deviation"]
        assert d2 < d1

    def test_critical_point_gradient_small(self, townes, ell21):
        # symmetry axis: the raw gradient must vanish at eps^2 scale
        s = R.reduced_energy(ell21, townes, 0.02, 0.0)
        assert abs(s.gradJ[0]) < 10.0 * 0.02**2
        with pytest.raises(DegenerateH):
            R.gradient_check(ell21, townes, 0.02, 0.0)


class TestPredictPeaks:
    def test_ellipse_top_candidates(self, townes, ell21):
        out = R.predict_peaks(ell21, 0.02, townes)
        assert len(out) == 4
        top_two = [cp for cp, _ in out[:2]]
        for cp in top_two:
            assert abs(abs(cp.location[0]) - 2.0) < 1e-6
        assert out[0][1] == "lowest-energy candidate"
        assert out[-1][1] == "higher-energy candidate"

    def test_matches_critical_point_search(self, townes, ell21):
        out = R.predict_peaks(ell21, 0.02)
        cps = G.find_critical_points(ell21)
        assert len(out) == len(cps)

    def test_disk_degenerate(self, circle):
        with pytest.raises(DegenerateLandscape):
            R.predict_peaks(circle, 0.02)
