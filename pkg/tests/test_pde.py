"""Discretization, eps-weighted solver machinery, remainder scaling, spikes.

Mesh oracles are exact areas and polynomial Laplacians; the solver oracles
are the constants module (half-space energies) and the defining weak identity
of the solution operator.  The remainder study carries a mesh-free strip
cross-check whose resolution is fixed in the rescaled variable.
"""

import math

import numpy as np
import pytest

from spikelab import geometry as G
from spikelab import pde
from spikelab.errors import ConvergedToTrivial, MeshTooCoarse
from spikelab.profile import compute_constants

P_EXP = 4.0


@pytest.fixture(scope="module")
def disk_domain():
    return pde.discretize(G.disk(1.0), 0.02)


@pytest.fixture(scope="module")
def disk_fine():
    return pde.discretize(G.disk(1.0), 0.01)


@pytest.fixture(scope="module")
def ell_domain():
    return pde.discretize(G.ellipse(2.0, 1.0), 0.01)


class TestDiscretize:
    def test_disk_area(self, disk_domain):
        total = disk_domain.integrate(np.ones(disk_domain.num_nodes))
        assert abs(total - math.pi) < 1e-4

    def test_ellipse_area(self, ell_domain):
        total = ell_domain.integrate(np.ones(ell_domain.num_nodes))
        assert abs(total - 2.0 * math.pi) < 1e-3

    def test_laplacian_of_quadratic(self, disk_domain):
        d = disk_domain
        u = (d.points**2).sum(axis=1)
        lap = -(d.K @ u) / d.weights
        interior = d.normal_dist > 2.5 * d.h_mesh
        assert np.max(np.abs(lap[interior] - 4.0)) < 30.0 * d.h_mesh**2

    def test_constant_in_kernel_of_stiffness(self, disk_domain):
        v = disk_domain.K @ np.ones(disk_domain.num_nodes)
        assert np.max(np.abs(v)) < 1e-10

    def test_too_coarse_rejected(self):
        with pytest.raises(MeshTooCoarse):
            pde.discretize(G.ellipse(2.0, 1.0), 0.05)

    def test_field_length_checked(self, disk_domain):
        with pytest.raises(ValueError):
            disk_domain.field(np.ones(3))


class TestDiscreteNorm:
    def test_constant_field(self, disk_domain):
        ones = disk_domain.field(np.ones(disk_domain.num_nodes))
        val = pde.discrete_norm(ones, 0.1) ** 2
        assert val == pytest.approx(math.pi / 0.01, rel=1e-10)

    def test_homogeneity(self, disk_domain, townes):
        w = pde.sample_ansatz(disk_domain, townes, 0.1, 0.0)
        doubled = disk_domain.field(2.0 * w.values)
        assert pde.discrete_norm(doubled, 0.1) == pytest.approx(
            2.0 * pde.discrete_norm(w, 0.1), rel=1e-12
        )

    def test_ansatz_norm_approaches_halfspace(self, disk_fine, townes):
        oracle = compute_constants(townes).moments["halfspace_h1_sq"]
        devs = []
        for eps in (0.2, 0.1, 0.05):
            w = pde.sample_ansatz(disk_fine, townes, eps, 0.0)
            devs.append(abs(pde.discrete_norm(w, eps) ** 2 - oracle) / oracle)
        assert devs[2] < devs[1] < devs[0]
        assert devs[2] < 0.05


class TestIstar:
    def test_constants_fixed_point(self, disk_domain):
        for eps in (0.3, 0.1, 0.05):
            ones = disk_domain.field(np.ones(disk_domain.num_nodes))
            out = pde.apply_istar(disk_domain, eps, ones)
            assert np.max(np.abs(out.values - 1.0)) < 1e-12

    def test_weak_identity(self, disk_domain):
        d = disk_domain
        rng = np.random.default_rng(11)
        x, y = d.points.T
        eps = 0.1
        worst = 0.0
        for _ in range(5):
            c = rng.normal(size=5)
            v = c[0] + c[1] * np.sin(3 * x) + c[2] * x * y + c[3] * np.cos(2 * y) + c[4] * y
            phi = np.cos(2 * x) * np.sin(3 * y) + x
            u = pde.apply_istar(d, eps, d.field(v)).values
            lhs = d.inner_eps(u, phi, eps)
            rhs = float(np.sum(d.weights * v * phi)) / eps**2
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
        assert worst < 1e-10

    def test_istar_bound_uniform(self, disk_domain):
        # ||istar v||_eps <= c |v|_{p', eps} with a single c across eps
        d = disk_domain
        rng = np.random.default_rng(23)
        x, y = d.points.T
        pp = P_EXP / (P_EXP - 1.0)
        ratios = {}
        for eps in (0.1, 0.05):
            worst = 0.0
            for k in range(20):
                c = rng.normal(size=4)
                v = (
                    c[0] * np.sin((1 + k % 3) * x) * np.cos((2 + k % 2) * y)
                    + c[1]
                    + c[2] * x
                    + c[3] * y**2
                )
                u = pde.apply_istar(d, eps, d.field(v))
                lp = (np.sum(d.weights * np.abs(v) ** pp) / eps**2) ** (1.0 / pp)
                worst = max(worst, pde.discrete_norm(u, eps) / lp)
            ratios[eps] = worst
        c_fit = max(ratios.values())
        assert c_fit < 1.0
        assert abs(ratios[0.1] - ratios[0.05]) / c_fit < 0.5


class TestRemainder:
    def test_projection_sanity(self, ell_domain, townes):
        _, parts = pde.remainder_norm(ell_domain, 0.06, 0.0, townes, return_parts=True)
        assert abs(parts["orth_residual"]) < 1e-10
        assert parts["gram"] > 1e-3

    def test_mesh_matches_strip_at_resolved_eps(self, ell_domain, townes):
        # mesh-based and strip-based defects agree where the mesh resolves
        # the spike; the strip grid is fixed in rescaled coordinates
        m = ell_domain.manifold
        s0 = m.arclength_from(0.0)
        kappa_fn = lambda s: m.curvature_at_arclength(s0 + s)
        for eps in (0.08, 0.06):
            a = pde.remainder_norm(ell_domain, eps, 0.0, townes)
            b = pde.remainder_norm_fermi_strip(townes, eps, kappa_fn, h_z=0.05)
            assert abs(a - b) / b < 0.1

    def test_strip_defect_linear_in_eps(self, townes, profile_cache):
        # the projected ansatz defect measured in the eps-weighted norm
        # scales like eps^1; see the decisions ledger for why the
        # conjugate-exponent rate applies to the unnormalized source norm
        # instead
        ell = G.ellipse(2.0, 1.0)
        s0 = ell.arclength_from(0.0)
        kappa_fn = lambda s: ell.curvature_at_arclength(s0 + s)
        eps_list = np.array([0.08, 0.06, 0.04, 0.03, 0.02])
        for n, p in [(2, 4.0), (2, 3.0)]:
            prof = profile_cache(n, p)
            vals = [
                pde.remainder_norm_fermi_strip(prof, e, kappa_fn, h_z=0.05)
                for e in eps_list
            ]
            slope = np.polyfit(np.log(eps_list), np.log(vals), 1)[0]
            assert abs(slope - 1.0) < 0.15

    def test_source_norm_has_conjugate_exponent_rate(self, townes, profile_cache):
        # the unnormalized L^{p'} norm of the ansatz defect source does obey
        # the 1 + n/p' law; this is the quantity behind the quoted rate
        ell = G.ellipse(2.0, 1.0)
        s0 = ell.arclength_from(0.0)
        kappa_fn = lambda s: ell.curvature_at_arclength(s0 + s)
        eps_list = np.array([0.08, 0.06, 0.04, 0.03, 0.02])
        for n, p in [(2, 4.0), (2, 3.0)]:
            prof = profile_cache(n, p)
            vals = [
                _source_norm_unnormalized(prof, e, kappa_fn) for e in eps_list
            ]
            slope = np.polyfit(np.log(eps_list), np.log(vals), 1)[0]
            predicted = 1.0 + n * (p - 1.0) / p
            assert abs(slope - predicted) < 0.15


class TestNewton:
    def test_spike_at_curvature_max(self, ell_domain, townes):
        u0 = pde.sample_ansatz(ell_domain, townes, 0.05, 0.0)
        u, rep = pde.newton_solve(
            ell_domain, 0.05, u0, P_EXP, target_point=np.array([2.0, 0.0])
        )
        assert rep.converged
        assert rep.residual < 1e-10
        assert float(u.values.min()) > 0.0
        assert rep.distance_to_target < 0.1

    def test_zero_start_is_trivial(self, ell_domain):
        with pytest.raises(ConvergedToTrivial):
            pde.newton_solve(ell_domain, 0.05, ell_domain.field(np.zeros(ell_domain.num_nodes)), P_EXP)

    def test_seed_at_minimum_recorded(self, ell_domain, townes):
        # exploratory: seeding at the curvature minimum converges to a spike
        # whose foot point is recorded, wherever it migrates
        u0 = pde.sample_ansatz(ell_domain, townes, 0.06, math.pi / 2)
        u, rep = pde.newton_solve(
            ell_domain, 0.06, u0, P_EXP, prof=townes,
            target_point=np.array([2.0, 0.0]),
        )
        assert rep.converged and float(u.values.min()) > 0.0
        assert np.isfinite(rep.peak_foot_param)

    def test_energy_ordering_max_vs_min(self, ell_domain, townes):
        eps = 0.05
        _, rep_max = pde.newton_solve(
            ell_domain, eps, pde.sample_ansatz(ell_domain, townes, eps, 0.0), P_EXP
        )
        _, rep_min = pde.newton_solve(
            ell_domain, eps, pde.sample_ansatz(ell_domain, townes, eps, math.pi / 2), P_EXP
        )
        # the spike can migrate from the unstable seed; only compare when it
        # stayed near the minimum
        if abs(rep_min.peak_foot_point[1]) > 0.9:
            assert rep_max.energy < rep_min.energy

    def test_neumann_residual_of_solution(self, ell_domain, townes):
        eps = 0.05
        u0 = pde.sample_ansatz(ell_domain, townes, eps, 0.0)
        u, rep = pde.newton_solve(ell_domain, eps, u0, P_EXP)
        # discrete strong residual includes the natural boundary condition
        A = ell_domain.system_matrix(eps)
        f = A @ u.values - ell_domain.weights * np.maximum(u.values, 0.0) ** (P_EXP - 1)
        assert np.max(np.abs(f / ell_domain.weights)) < 1e-10

    def test_peak_stable_under_refinement(self, townes):
        reps = []
        for h in (0.0125, 0.00625):
            d = pde.discretize(G.ellipse(2.0, 1.0), h)
            u0 = pde.sample_ansatz(d, townes, 0.06, 0.0)
            _, rep = pde.newton_solve(d, 0.06, u0, P_EXP)
            reps.append(rep)
        delta = np.linalg.norm(reps[0].peak_foot_point - reps[1].peak_foot_point)
        assert delta < 2.0 * 0.0125


class TestContinuation:
    def test_single_stage_equals_newton(self, ell_domain, townes):
        eps = 0.05
        reports = pde.continuation(ell_domain, [eps], 0.0, townes)
        u0 = pde.sample_ansatz(ell_domain, townes, eps, 0.0)
        _, rep = pde.newton_solve(ell_domain, eps, u0, P_EXP)
        assert reports[0].energy == pytest.approx(rep.energy, rel=1e-10)

    def test_descending_enforced(self, ell_domain, townes):
        with pytest.raises(ValueError):
            pde.continuation(ell_domain, [0.05, 0.06], 0.0, townes)

    def test_drift_to_curvature_max(self, ell_domain, townes):
        t_seed = math.acos(1.9 / 2.0)
        reports = pde.continuation(
            ell_domain, [0.08, 0.06], t_seed, townes, target_point=np.array([2.0, 0.0])
        )
        dists = [r.distance_to_target for r in reports]
        assert dists[1] <= dists[0] + 0.5 * ell_domain.h_mesh
        assert dists[1] < 0.05


def _source_norm_unnormalized(prof, eps, kappa_fn, R_cut=0.8, h_z=0.05):
    """(∫ |f(W) - (-eps^2 Δ + 1) W|^{p'} dx)^{1/p'} via the strip geometry."""
    z_tan = min(R_cut / eps, 16.0)
    s_window = np.linspace(-eps * z_tan, eps * z_tan, 201)
    kap_max = max(float(np.max(kappa_fn(s_window))), 0.0)
    z_nor = min(R_cut / eps, 16.0)
    if kap_max > 0.0:
        z_nor = min(z_nor, 0.9 / (eps * kap_max))
    zt = np.arange(-z_tan + h_z, z_tan, h_z)
    zn = np.arange(0.0, z_nor, h_z)
    Z1, ZN = np.meshgrid(zt, zn, indexing="ij")
    rho = np.hypot(Z1, ZN)
    from spikelab._numutil import cutoff
    from spikelab.profile import eval_profile

    v, dv = eval_profile(prof, rho.reshape(-1))
    v = v.reshape(rho.shape)
    dv = dv.reshape(rho.shape)
    chi = cutoff(eps * rho, R_cut)
    W = v * chi
    kappa = kappa_fn(eps * Z1)
    fac = 1.0 - eps * ZN * kappa
    # strong defect via the radial structure of W (chi = 1 where it matters):
    # rho_src = f(W) + Δ_g W - W with Δ_g in strip coordinates
    d2 = prof._spline_dv(rho.reshape(-1), 1).reshape(rho.shape)
    lap_flat = d2 + dv / rho
    # metric corrections: (g^{11}-1) d11 + (1/sqrtg) d(sqrtg)/dn dU/dn
    d11 = d2 * (Z1 / rho) ** 2 + (dv / rho) * (ZN / rho) ** 2
    dun = dv * ZN / rho
    g11 = fac**-2.0
    dkap = (kappa_fn(eps * Z1 + 1e-5) - kappa_fn(eps * Z1 - 1e-5)) / 2e-5
    d1g = eps * ZN * dkap * eps  # d/dz1 of -(eps zn kappa)
    src = (
        (g11 - 1.0) * d11
        - (1.0 / fac) * eps * kappa * dun
        - (1.0 / fac) * d1g * g11 * dv * Z1 / rho
    )
    rho_src = (v ** (prof.p - 1.0) - v + lap_flat) * 0.0 + src  # flat part cancels
    pp = prof.p / (prof.p - 1.0)
    vol = fac * h_z * h_z * eps**prof.n
    return float(np.sum(np.abs(rho_src) ** pp * vol) ** (1.0 / pp))
