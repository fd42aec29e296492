"""Half-box spectrum of the linearized operator: kernel structure and gap.

The analytic kernel members are the tangential derivatives of the ground
state; the normal derivative is excluded by the mirror face.  Eigenvalue
accuracy of the compact scheme is fourth order, so the near-kernel cluster
separates cleanly at the working resolution.
"""

import numpy as np
import pytest

from spikelab import linearized_spectrum as LS
from spikelab.errors import DimensionMismatch


@pytest.fixture(scope="module")
def op14(townes):
    grid = LS.HalfBoxGrid(2, 14.0, 0.1)
    return LS.assemble_linearized(townes, grid)


@pytest.fixture(scope="module")
def report14(op14, townes):
    return LS.kernel_report(op14, townes, k=6)


class TestGrid:
    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            LS.HalfBoxGrid(2, 10.0, 0.1)
        with pytest.raises(ValueError):
            LS.HalfBoxGrid(2, 12.0, 0.5)
        LS.HalfBoxGrid(2, 12.0, 0.2)

    def test_shapes(self):
        grid = LS.HalfBoxGrid(2, 12.0, 0.2)
        assert grid.shape == (119, 60)
        assert grid.normal_coords[0] == 0.0
        assert grid.tangential_coords[0] == pytest.approx(-11.8)


class TestAssembly:
    def test_exact_symmetry(self, op14):
        asym = op14.K - op14.K.T
        assert asym.nnz == 0 or np.max(np.abs(asym.data)) == 0.0
        masym = op14.M - op14.M.T
        assert masym.nnz == 0 or np.max(np.abs(masym.data)) == 0.0

    def test_dimension_mismatch(self, townes):
        grid = LS.HalfBoxGrid(3, 15.0, 0.25)
        with pytest.raises(DimensionMismatch):
            LS.assemble_linearized(townes, grid)

    def test_laplacian_part_annihilates_constants(self, op14, townes):
        # the stencil part of K is exactly zero on constants away from the
        # Dirichlet faces; only the potential term remains
        pot_part = LS._potential_part(op14)
        lap = (op14.K - pot_part) @ np.ones(op14.K.shape[0])
        shape = op14.grid.shape
        mask = np.zeros(shape, bool)
        mask[1:-1, :-1] = True
        assert np.max(np.abs(lap[mask.reshape(-1)])) < 1e-10

    def test_constant_field_sees_potential(self, op14):
        # compact scheme: M^{-1} K (1) = potential + O(h^2) off the faces
        vals = op14.apply_strong(np.ones(op14.K.shape[0]))
        pot = op14.potential.reshape(-1)
        shape = op14.grid.shape
        mask = np.zeros(shape, bool)
        mask[5:-5, :-5] = True
        err = np.abs(vals - pot)[mask.reshape(-1)]
        assert err.max() < 10.0 * op14.grid.h**2

    def test_kernel_member_residual_second_order(self, townes):
        prev = None
        for h in (0.2, 0.1):
            grid = LS.HalfBoxGrid(2, 14.0, h)
            op = LS.assemble_linearized(townes, grid)
            tang, _ = LS._tangential_derivative_samples(townes, grid)
            res = op.norm(op.apply_strong(tang[0]))
            if prev is not None:
                assert res < prev / 3.0  # at least O(h^2)
            prev = res
        assert res < 0.05

    def test_normal_derivative_rejected(self, op14, townes):
        # mirror closure contradicts the odd extension of dU/dz_n
        _, norm_d = LS._tangential_derivative_samples(townes, op14.grid)
        res = op14.apply_strong(norm_d)
        assert op14.norm(res) > 1.0


class TestKernelReport:
    def test_exactly_one_kernel_eigenvalue(self, report14):
        assert len(report14.kernel_indices) == 1
        lam0 = report14.eigenvalues[report14.kernel_indices[0]]
        assert abs(lam0) < 5e-3

    def test_kernel_overlap_tangential(self, report14):
        j = report14.kernel_indices[0]
        assert report14.overlaps_tangential[j, 0] > 0.99

    def test_kernel_overlap_normal_small(self, report14):
        j = report14.kernel_indices[0]
        assert report14.overlaps_normal[j] < 0.2

    def test_overlaps_are_cosines(self, report14):
        assert np.all(report14.overlaps_tangential >= 0.0)
        assert np.all(report14.overlaps_tangential <= 1.0 + 1e-12)
        assert np.all(report14.overlaps_normal >= 0.0)
        assert np.all(report14.overlaps_normal <= 1.0 + 1e-12)

    def test_kernel_count_stable_under_refinement(self, townes):
        for grid in (LS.HalfBoxGrid(2, 14.0, 0.05), LS.HalfBoxGrid(2, 16.0, 0.1)):
            op = LS.assemble_linearized(townes, grid)
            rep = LS.kernel_report(op, townes, k=4)
            assert len(rep.kernel_indices) == 1

    def test_kernel_eigenvalue_rate(self, townes):
        hs = np.array([0.2, 0.1, 0.05])
        vals = []
        for h in hs:
            grid = LS.HalfBoxGrid(2, 14.0, h)
            op = LS.assemble_linearized(townes, grid)
            rep = LS.kernel_report(op, townes, k=4, kernel_tol=5e-2)
            lam = rep.eigenvalues[np.argmin(np.abs(rep.eigenvalues))]
            vals.append(abs(lam))
        slope = np.polyfit(np.log(hs), np.log(vals), 1)[0]
        assert slope >= 1.9

    def test_kernel_vector_parity(self, op14, townes):
        rep = LS.kernel_report(op14, townes, k=4)
        # near-kernel eigenvector is odd in z_1: reflecting the tangential
        # axis flips its sign
        lam, vec = LS._eig_lowest(op14, townes, 4, 1e-7)
        j = int(np.argmin(np.abs(lam)))
        v = vec[:, j].reshape(op14.grid.shape)
        odd_defect = np.max(np.abs(v + v[::-1, :])) / np.max(np.abs(v))
        assert odd_defect < 1e-6

    def test_k_floor(self, op14, townes):
        with pytest.raises(ValueError):
            LS.kernel_report(op14, townes, k=2)


class TestCoercivityGap:
    def test_gap_positive_and_stable(self, report14, townes):
        assert report14.gap > 0.05
        grid = LS.HalfBoxGrid(2, 14.0, 0.05)
        op = LS.assemble_linearized(townes, grid)
        rep = LS.kernel_report(op, townes, k=6)
        assert abs(rep.gap - report14.gap) / report14.gap < 0.2

    def test_empty_projection_gives_smallest_magnitude(self, op14, townes):
        val = LS.coercivity_gap(op14, townes, k=4, kernel_tol=0.0)
        rep = LS.kernel_report(op14, townes, k=4)
        assert val == pytest.approx(float(np.min(np.abs(rep.eigenvalues))), rel=1e-12)

    @pytest.mark.xfail(
        reason="the first spectrum point outside the kernel is the truncated "
        "continuum edge at 1 + O(L^-2); moving L from 12 to 16 shifts it by "
        "~9e-3, so the 1e-3 insensitivity bound cannot hold (see decisions "
        "ledger); the kernel eigenvalue itself is L-stable to 1e-9",
        strict=True,
    )
    def test_gap_insensitive_to_L(self, townes):
        gaps = []
        for L in (12.0, 16.0):
            op = LS.assemble_linearized(townes, LS.HalfBoxGrid(2, L, 0.1))
            gaps.append(LS.kernel_report(op, townes, k=6).gap)
        assert abs(gaps[1] - gaps[0]) < 1e-3

    def test_kernel_eigenvalue_insensitive_to_L(self, townes):
        vals = []
        for L in (12.0, 16.0):
            op = LS.assemble_linearized(townes, LS.HalfBoxGrid(2, L, 0.1))
            rep = LS.kernel_report(op, townes, k=4)
            vals.append(rep.eigenvalues[rep.kernel_indices[0]])
        assert abs(vals[1] - vals[0]) < 1e-8


@pytest.mark.slow
class TestThreeDimensional:
    def test_kernel_pair(self, profile_cache):
        prof = profile_cache(3, 3.0)
        grid = LS.HalfBoxGrid(3, 15.0, 0.25)
        op = LS.assemble_linearized(prof, grid)
        asym = op.K - op.K.T
        assert asym.nnz == 0 or np.max(np.abs(asym.data)) == 0.0
        rep = LS.kernel_report(op, prof, k=6, kernel_tol=1e-2, eig_tol=1e-6)
        assert len(rep.kernel_indices) == 2
        for j in rep.kernel_indices:
            combined = float(np.sum(rep.overlaps_tangential[j] ** 2))
            assert combined > 0.95
            assert rep.overlaps_normal[j] < 0.2
        assert rep.gap > 0.05
