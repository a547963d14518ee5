import numpy as np
import pytest

from krflow.discretization import (
    FiberSlice,
    HermitianField,
    SpectralGrid,
    relative_eigen_bounds,
    restrict_to_fiber,
    trace_with,
    wedge_density,
)
from krflow.errors import ConfigInvalid, OutOfDomain
from krflow import oracle

TP = 2.0 * np.pi
PI2 = np.pi * np.pi


def band_limited_field(grid, seed=12345, kmax=3, amp=0.5):
    rng = np.random.default_rng(seed)
    x, y, u, v = grid.coords
    f = np.zeros(grid.shape)
    for _ in range(8):
        k = rng.integers(-kmax, kmax + 1, size=4)
        c = rng.normal(size=2)
        phase = TP * (k[0] * x + k[1] * y + k[2] * u + k[3] * v)
        f = f + amp * (c[0] * np.cos(phase) + c[1] * np.sin(phase))
    return f


class TestGridValidation:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ConfigInvalid):
            SpectralGrid(12, 16)

    def test_rejects_too_small(self):
        with pytest.raises(ConfigInvalid):
            SpectralGrid(16, 4)

    def test_rejects_bad_modulus(self):
        with pytest.raises(ConfigInvalid):
            SpectralGrid(16, 16, tau=0.5 - 1j)


class TestHessianAnalytic:
    """Closed-form targets computed by hand for single Fourier modes."""

    def test_base_mode(self):
        grid = SpectralGrid(16, 8)
        x, y, u, v = grid.coords
        h = grid.hessian(np.cos(TP * x) + 0.0 * u)
        target = -PI2 * np.cos(TP * x)
        assert np.max(np.abs(h.bb - target)) < 1e-11
        assert np.max(np.abs(h.bf)) < 1e-12
        assert np.max(np.abs(h.ff)) < 1e-12

    def test_fiber_mode_square_torus(self):
        grid = SpectralGrid(8, 16)
        x, y, u, v = grid.coords
        h = grid.hessian(np.cos(TP * u) + 0.0 * x)
        target = -PI2 * np.cos(TP * u)
        assert np.max(np.abs(h.ff - target)) < 1e-11
        assert np.max(np.abs(h.bb)) < 1e-12

    def test_mixed_mode_real_bf(self):
        grid = SpectralGrid(16, 16)
        x, y, u, v = grid.coords
        phase = np.cos(TP * (x + u))
        h = grid.hessian(phase)
        target = -PI2 * phase
        for block in (h.bb, h.ff):
            assert np.max(np.abs(block - target)) < 1e-10
        assert np.max(np.abs(h.bf - target)) < 1e-10

    def test_mixed_mode_imaginary_bf(self):
        grid = SpectralGrid(16, 16)
        x, y, u, v = grid.coords
        f = np.cos(TP * (x + v))
        h = grid.hessian(f)
        target = -1j * PI2 * np.cos(TP * (x + v))
        assert np.max(np.abs(h.bf - target)) < 1e-10

    def test_fiber_modes_general_modulus(self):
        tau = 0.3 + 1.2j
        grid = SpectralGrid(8, 16, tau)
        x, y, u, v = grid.coords
        a, b = tau.real, tau.imag
        h_u = grid.hessian(np.cos(TP * u) + 0.0 * x)
        h_v = grid.hessian(np.cos(TP * v) + 0.0 * x)
        tgt_u = -PI2 * (1.0 + a * a / (b * b)) * np.cos(TP * u)
        tgt_v = -(PI2 / (b * b)) * np.cos(TP * v)
        assert np.max(np.abs(h_u.ff - tgt_u)) < 1e-10
        assert np.max(np.abs(h_v.ff - tgt_v)) < 1e-10


class TestHessianStructure:
    def test_mean_vanishes_exactly(self):
        grid = SpectralGrid(16, 16, tau=0.25 + 0.9j)
        h = grid.hessian(band_limited_field(grid, seed=7))
        assert abs(grid.mean(h.bb)) < 1e-13
        assert abs(grid.mean(h.ff)) < 1e-13
        assert abs(np.mean(h.bf)) < 1e-13

    def test_real_blocks_are_real_dtype(self):
        grid = SpectralGrid(8, 8)
        h = grid.hessian(band_limited_field(grid, seed=3))
        assert h.bb.dtype == np.float64
        assert h.ff.dtype == np.float64
        assert h.bf.dtype == np.complex128

    def test_rfft_path_matches_full_transform_path(self):
        grid = SpectralGrid(16, 16, tau=0.4 + 1.1j)
        phi = band_limited_field(grid, seed=11)
        h = grid.hessian(phi)
        bb = grid.deriv(grid.deriv(phi, "holo", "b"), "anti", "b")
        ff = grid.deriv(grid.deriv(phi, "holo", "f"), "anti", "f")
        bf = grid.deriv(grid.deriv(phi, "anti", "f"), "holo", "b")
        assert np.max(np.abs(h.bb - bb)) < 1e-11
        assert np.max(np.abs(h.ff - ff)) < 1e-11
        assert np.max(np.abs(h.bf - bf)) < 1e-11

    def test_base_only_field_matches_2d_operator(self):
        grid = SpectralGrid(16, 8)
        xb = np.arange(16) / 16.0
        f2 = np.cos(TP * xb)[:, None] * np.sin(TP * xb)[None, :]
        h = grid.hessian(f2[:, :, None, None])
        bb2 = grid.base_hessian(f2)
        assert np.max(np.abs(h.bb - bb2[:, :, None, None])) < 1e-11
        assert np.max(np.abs(h.ff)) < 1e-12
        assert np.max(np.abs(h.bf)) < 1e-12


class TestFiniteDifferenceHessian:
    def test_fourth_order_truncation_floor_single_mode(self):
        # At n=32 and wavenumber 2*pi the classical fourth-order truncation
        # bound is (2*pi/32)^4 / 90 ~ 1.65e-5 relative; allow modest headroom.
        grid = SpectralGrid(32, 8)
        x, y, u, v = grid.coords
        phi = np.cos(TP * x) + 0.0 * u
        fd = grid.fd_hessian(phi)
        sp = grid.hessian(phi)
        rel = np.max(np.abs(fd.bb - sp.bb)) / np.max(np.abs(sp.bb))
        assert rel < 2e-5

    def test_mixed_blocks_converge_at_order_four(self):
        errs = []
        for n in (8, 16):
            grid = SpectralGrid(n, n, tau=0.3 + 1.2j)
            x, y, u, v = grid.coords
            phi = np.cos(TP * (x + v)) + np.sin(TP * (y + u))
            fd = grid.fd_hessian(phi)
            sp = grid.hessian(phi)
            errs.append(max(np.max(np.abs(fd.bf - sp.bf)), np.max(np.abs(fd.ff - sp.ff))))
        order = oracle.refinement_order(errs[0], errs[1])
        assert abs(order - 4.0) < 0.4


class TestWedgeAlgebra:
    def _random_pair(self, seed):
        rng = np.random.default_rng(seed)
        shape = (5, 5, 4, 4)
        ref = HermitianField(
            2.0 + 0.3 * rng.normal(size=shape),
            0.2 * (rng.normal(size=shape) + 1j * rng.normal(size=shape)),
            1.5 + 0.2 * rng.normal(size=shape),
        )
        g = HermitianField(
            1.0 + 0.4 * rng.normal(size=shape),
            0.3 * (rng.normal(size=shape) + 1j * rng.normal(size=shape)),
            0.8 + 0.3 * rng.normal(size=shape),
        )
        return g, ref

    def test_wedge_self_is_twice_det(self):
        g, _ = self._random_pair(21)
        assert np.allclose(wedge_density(g, g), 2.0 * g.det())

    def test_wedge_symmetric(self):
        g, ref = self._random_pair(22)
        assert np.allclose(wedge_density(g, ref), wedge_density(ref, g))

    def test_trace_of_self_is_dimension(self):
        _, ref = self._random_pair(23)
        assert np.allclose(trace_with(ref, ref), 2.0)

    def test_eigen_bounds_match_dense_solver(self):
        from scipy.linalg import eigh

        g, ref = self._random_pair(24)
        lo, hi = relative_eigen_bounds(g, ref)
        idx = [(0, 0, 0, 0), (2, 3, 1, 2), (4, 4, 3, 3)]
        for ix in idx:
            gm = np.array([[g.bb[ix], g.bf[ix]], [np.conj(g.bf[ix]), g.ff[ix]]])
            rm = np.array([[ref.bb[ix], ref.bf[ix]], [np.conj(ref.bf[ix]), ref.ff[ix]]])
            w = eigh(gm, rm, eigvals_only=True)
            assert abs(lo[ix] - w[0]) < 1e-10
            assert abs(hi[ix] - w[1]) < 1e-10

    def test_eigen_bounds_identity(self):
        _, ref = self._random_pair(25)
        lo, hi = relative_eigen_bounds(ref, ref)
        assert np.allclose(lo, 1.0)
        assert np.allclose(hi, 1.0)


class TestFiberOps:
    def test_poisson_recovers_known_solution(self):
        grid = SpectralGrid(8, 16)
        uf = np.arange(16) / 16.0
        psi_true = np.cos(TP * uf)[:, None] + 0.0 * uf[None, :]
        rhs = grid.fiber_hessian(psi_true)
        psi = grid.fiber_poisson(rhs)
        assert np.max(np.abs(psi - psi_true)) < 1e-12

    def test_poisson_residual_and_mean(self):
        grid = SpectralGrid(8, 16, tau=0.2 + 0.8j)
        rng = np.random.default_rng(31)
        uf = np.arange(16) / 16.0
        rhs = np.cos(TP * uf)[:, None] * np.sin(TP * uf)[None, :] + 0.3 * np.cos(
            TP * 2 * uf
        )[None, :] * np.ones((16, 1))
        psi = grid.fiber_poisson(rhs)
        assert abs(psi.mean()) < 1e-14
        res = grid.fiber_hessian(psi) - (rhs - rhs.mean())
        assert np.max(np.abs(res)) < 1e-12

    def test_restrict_to_fiber(self):
        grid = SpectralGrid(8, 8)
        f = band_limited_field(grid, seed=5)
        sl = restrict_to_fiber(f, grid, 3, 6)
        assert isinstance(sl, FiberSlice)
        assert np.array_equal(sl.values, f[3, 6])
        with pytest.raises(OutOfDomain):
            restrict_to_fiber(f, grid, 8, 0)

    def test_restrict_broadcastable_input(self):
        grid = SpectralGrid(8, 8)
        base_only = np.cos(TP * np.arange(8) / 8.0)[:, None, None, None] * np.ones((1, 8, 1, 1))
        sl = restrict_to_fiber(base_only, grid, 2, 1)
        assert sl.values.shape == (8, 8)
        assert np.allclose(sl.values, np.cos(TP * 2 / 8.0))


class TestOracleBattery:
    def test_all_green(self):
        reports = oracle.run_battery(n_base=16, n_fiber=16, tau=0.3 + 1.1j)
        for r in reports:
            assert r.passed, r.line()
