"""Periodic spectral discretization of the product of two real 2-tori.

Coordinates are (x, y, u, v) on [0,1)^4, axes in that order.  The base torus
carries the complex coordinate z_b = x + i y; the fiber torus carries
z_f = u + tau v with Im(tau) > 0.  Fields are plain numpy arrays over the
(n_base, n_base, n_fiber, n_fiber) grid; broadcastable shapes such as
(n_base, n_base, 1, 1) are accepted everywhere.

Hermitian (1,1)-form fields are stored as the three independent coefficient
blocks of their 2x2 Hermitian matrix: bb (real), bf (complex), ff (real),
with the fb block implied by conjugation.  The wedge pairing of two such
forms and the determinant of one are the only algebra the solver needs; both
are provided here as closed 2x2 formulas.

Derivatives are Fourier-spectral.  First-derivative symbols are zeroed at
the Nyquist frequency of each axis, and every second-order symbol is built
as a product of first-order ones, so the discrete mixed Hessian of any real
field has exactly zero grid mean and maps real fields to Hermitian fields.
A fourth-order centered finite-difference Hessian on the same grid is
provided as an independent discretization of the same operator.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigInvalid, OutOfDomain

_FFT_KW = {"workers": os.cpu_count() or 1}


def _wavenumbers(n: int) -> np.ndarray:
    """Angular wavenumbers 2*pi*m for a unit-period grid of n points."""
    return 2.0 * np.pi * sfft.fftfreq(n, d=1.0 / n)


def _odd_wavenumbers(n: int) -> np.ndarray:
    """Wavenumbers with the (sign-ambiguous) Nyquist mode zeroed.

    Used in every first-derivative symbol so that odd-order operators stay
    real-to-real and compositions are symbols of genuine products.
    """
    k = _wavenumbers(n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


@dataclass
class HermitianField:
    """Coefficient blocks of a Hermitian 2x2 matrix field: bb, bf, ff.

    bb and ff are real arrays, bf is complex; the fb block is conj(bf).
    Supports addition, subtraction, and scaling by real scalars/arrays,
    all with numpy broadcasting.
    """

    bb: np.ndarray
    bf: np.ndarray
    ff: np.ndarray

    def __add__(self, other: "HermitianField") -> "HermitianField":
        return HermitianField(self.bb + other.bb, self.bf + other.bf, self.ff + other.ff)

    def __sub__(self, other: "HermitianField") -> "HermitianField":
        return HermitianField(self.bb - other.bb, self.bf - other.bf, self.ff - other.ff)

    def __mul__(self, s) -> "HermitianField":
        return HermitianField(self.bb * s, self.bf * s, self.ff * s)

    __rmul__ = __mul__

    def det(self) -> np.ndarray:
        return self.bb * self.ff - np.abs(self.bf) ** 2

    def copy(self) -> "HermitianField":
        return HermitianField(self.bb.copy(), self.bf.copy(), self.ff.copy())

    def broadcast(self, shape) -> "HermitianField":
        return HermitianField(
            np.broadcast_to(self.bb, shape),
            np.broadcast_to(self.bf, shape),
            np.broadcast_to(self.ff, shape),
        )


def wedge_density(a: HermitianField, b: HermitianField) -> np.ndarray:
    """Top-degree coefficient of the wedge a ^ b, as a real field.

    Symmetric in its arguments; wedge_density(a, a) == 2 * a.det().
    """
    return a.bb * b.ff + a.ff * b.bb - 2.0 * np.real(a.bf * np.conj(b.bf))


def trace_with(g: HermitianField, ref: HermitianField) -> np.ndarray:
    """Trace of g against ref (contraction with the inverse of ref)."""
    return wedge_density(g, ref) / ref.det()


def relative_eigen_bounds(g: HermitianField, ref: HermitianField):
    """Pointwise generalized eigenvalue fields of g relative to ref.

    Solves det(g - lam * ref) = 0 in closed form; ref must be positive.
    Returns (lam_min, lam_max) as real arrays.
    """
    a = ref.det()
    b = wedge_density(g, ref)
    c = g.det()
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    root = np.sqrt(disc)
    return (b - root) / (2.0 * a), (b + root) / (2.0 * a)


@dataclass
class FiberSlice:
    """A single fiber's worth of a field: base grid indices plus 2D values."""

    ib: int
    jb: int
    values: np.ndarray


@dataclass
class SpectralGrid:
    """Fourier discretization data for the product torus.

    Parameters
    ----------
    n_base, n_fiber : points per direction on base/fiber (powers of two, >= 8)
    tau : fiber modulus, Im(tau) > 0
    """

    n_base: int
    n_fiber: int
    tau: complex = 1j

    def __post_init__(self):
        for name, n in (("n_base", self.n_base), ("n_fiber", self.n_fiber)):
            if n < 8 or (n & (n - 1)) != 0:
                raise ConfigInvalid(f"{name} must be a power of two >= 8, got {n}")
        self.tau = complex(self.tau)
        if self.tau.imag <= 0.0:
            raise ConfigInvalid(f"fiber modulus must satisfy Im(tau) > 0, got {self.tau}")

    # -- shapes and coordinates -------------------------------------------

    @property
    def shape(self):
        return (self.n_base, self.n_base, self.n_fiber, self.n_fiber)

    @cached_property
    def coords(self):
        """Broadcastable coordinate arrays (x, y, u, v) on [0,1)."""
        nb, nf = self.n_base, self.n_fiber
        x = (np.arange(nb) / nb).reshape(nb, 1, 1, 1)
        y = (np.arange(nb) / nb).reshape(1, nb, 1, 1)
        u = (np.arange(nf) / nf).reshape(1, 1, nf, 1)
        v = (np.arange(nf) / nf).reshape(1, 1, 1, nf)
        return x, y, u, v

    def mean(self, f: np.ndarray) -> float:
        """Grid mean == integral over the unit-coordinate-volume torus."""
        return float(np.mean(np.broadcast_to(f, self.shape)))

    # -- first-derivative symbols -----------------------------------------

    @cached_property
    def _fiber_coeffs(self):
        # d/dz_f = c d/du + d d/dv in the (u, v) frame for z_f = u + tau v.
        a, b = self.tau.real, self.tau.imag
        c = 0.5 + 0.5j * a / b
        d = -0.5j / b
        return c, d

    @cached_property
    def _k4(self):
        """Full-spectrum broadcastable wavenumber arrays (Nyquist-zeroed)."""
        nb, nf = self.n_base, self.n_fiber
        kx = _odd_wavenumbers(nb).reshape(nb, 1, 1, 1)
        ky = _odd_wavenumbers(nb).reshape(1, nb, 1, 1)
        ku = _odd_wavenumbers(nf).reshape(1, 1, nf, 1)
        kv = _odd_wavenumbers(nf).reshape(1, 1, 1, nf)
        return kx, ky, ku, kv

    def _first_symbols(self, kx, ky, ku, kv):
        c, d = self._fiber_coeffs
        s_b = 0.5 * (1j * kx + ky)
        s_bbar = 0.5 * (1j * kx - ky)
        s_f = c * (1j * ku) + d * (1j * kv)
        s_fbar = np.conj(c) * (1j * ku) + np.conj(d) * (1j * kv)
        return s_b, s_bbar, s_f, s_fbar

    @cached_property
    def sym_full(self):
        """dict of full-spectrum first-derivative symbols.

        Keys: ('holo','b'), ('holo','f'), ('anti','b'), ('anti','f').
        """
        s_b, s_bbar, s_f, s_fbar = self._first_symbols(*self._k4)
        return {
            ("holo", "b"): s_b,
            ("anti", "b"): s_bbar,
            ("holo", "f"): s_f,
            ("anti", "f"): s_fbar,
        }

    @cached_property
    def sym_half(self):
        """First-derivative symbols on the rfft half-spectrum.

        Keys as in sym_full.  All four symbols are odd under k -> -k with
        the Nyquist rows zeroed, so products of n of them are even/odd
        according to the parity of n; consumers rely on this to split
        complex-output operators into two real irfft passes.
        """
        nb, nf = self.n_base, self.n_fiber
        kx = _odd_wavenumbers(nb).reshape(nb, 1, 1, 1)
        ky = _odd_wavenumbers(nb).reshape(1, nb, 1, 1)
        ku = _odd_wavenumbers(nf).reshape(1, 1, nf, 1)
        kv = _odd_wavenumbers(nf)[: nf // 2 + 1].reshape(1, 1, 1, nf // 2 + 1)
        s_b, s_bbar, s_f, s_fbar = self._first_symbols(kx, ky, ku, kv)
        return {
            ("holo", "b"): s_b,
            ("anti", "b"): s_bbar,
            ("holo", "f"): s_f,
            ("anti", "f"): s_fbar,
        }

    @cached_property
    def _half_hessian_syms(self):
        """Real symbol arrays for the rfft half-spectrum Hessian path.

        Returns (s_bb, s_ff, s_bf_re, s_bf_im); each multiplies rfftn(phi).
        The bf symbol is even under k -> -k (product of two odd symbols),
        so its real and imaginary parts are separately Hermitian-symmetric
        and each yields a real field under irfftn.
        """
        nb, nf = self.n_base, self.n_fiber
        kx = _odd_wavenumbers(nb).reshape(nb, 1, 1, 1)
        ky = _odd_wavenumbers(nb).reshape(1, nb, 1, 1)
        ku = _odd_wavenumbers(nf).reshape(1, 1, nf, 1)
        kv = _odd_wavenumbers(nf)[: nf // 2 + 1].reshape(1, 1, 1, nf // 2 + 1)
        s_b, s_bbar, s_f, s_fbar = self._first_symbols(kx, ky, ku, kv)
        s_bf = s_b * s_fbar
        return (
            np.real(s_b * s_bbar),
            np.real(s_f * s_fbar),
            np.real(s_bf),
            np.imag(s_bf),
        )

    # -- spectral operators ------------------------------------------------

    def rfft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(np.broadcast_to(f, self.shape), **_FFT_KW)

    def irfft(self, spec: np.ndarray) -> np.ndarray:
        return sfft.irfftn(spec, s=self.shape, **_FFT_KW)

    def fft_c(self, f: np.ndarray) -> np.ndarray:
        return sfft.fftn(np.broadcast_to(f, self.shape), **_FFT_KW)

    def ifft_c(self, spec: np.ndarray) -> np.ndarray:
        return sfft.ifftn(spec, **_FFT_KW)

    def hessian(self, phi: np.ndarray) -> HermitianField:
        """Mixed complex Hessian of a real field, as a HermitianField.

        This is the coefficient matrix of the (1,1)-form i*ddbar(phi) in the
        stored-block convention; its grid mean vanishes identically.
        """
        s_bb, s_ff, s_bf_re, s_bf_im = self._half_hessian_syms
        spec = self.rfft(phi)
        bb = self.irfft(s_bb * spec)
        ff = self.irfft(s_ff * spec)
        bf = self.irfft(s_bf_re * spec) + 1j * self.irfft(s_bf_im * spec)
        return HermitianField(bb, bf, ff)

    def deriv(self, f: np.ndarray, kind: str, direction: str) -> np.ndarray:
        """Complex derivative of a (possibly complex) field.

        kind is 'holo' or 'anti'; direction is 'b' or 'f'.  Full complex
        transform path — intended for analysis-time use, not the inner loop.
        """
        sym = self.sym_full[(kind, direction)]
        return self.ifft_c(sym * self.fft_c(f))

    # -- fiber-only operators ---------------------------------------------

    @cached_property
    def _fiber_syms(self):
        nf = self.n_fiber
        ku = _odd_wavenumbers(nf).reshape(nf, 1)
        kv = _odd_wavenumbers(nf).reshape(1, nf)
        c, d = self._fiber_coeffs
        s_f = c * (1j * ku) + d * (1j * kv)
        s_fbar = np.conj(c) * (1j * ku) + np.conj(d) * (1j * kv)
        return s_f, s_fbar, np.real(s_f * s_fbar)

    def fiber_hessian(self, f2: np.ndarray) -> np.ndarray:
        """ff-block of the mixed Hessian of a real field on one fiber."""
        _, _, s_ff = self._fiber_syms
        return np.real(sfft.ifft2(s_ff * sfft.fft2(f2)))

    def fiber_poisson(self, rhs2: np.ndarray) -> np.ndarray:
        """Solve (mixed fiber Hessian) psi = rhs on one fiber, zero-mean psi.

        The rhs mean is projected out (the periodic problem is only solvable
        up to it); callers that care check compatibility themselves.
        """
        _, _, s_ff = self._fiber_syms
        spec = sfft.fft2(rhs2)
        # The discrete operator kills the mean and the Nyquist-corner modes;
        # project the solve onto its range.
        dead = s_ff == 0.0
        out = np.where(dead, 0.0, spec / np.where(dead, 1.0, s_ff))
        return np.real(sfft.ifft2(out))

    def fiber_deriv(self, f2: np.ndarray, kind: str) -> np.ndarray:
        s_f, s_fbar, _ = self._fiber_syms
        sym = s_f if kind == "holo" else s_fbar
        return sfft.ifft2(sym * sfft.fft2(f2))

    # -- base-only operators ----------------------------------------------

    @cached_property
    def _base_syms(self):
        nb = self.n_base
        kx = _odd_wavenumbers(nb).reshape(nb, 1)
        ky = _odd_wavenumbers(nb).reshape(1, nb)
        s_b = 0.5 * (1j * kx + ky)
        s_bbar = 0.5 * (1j * kx - ky)
        return s_b, s_bbar, np.real(s_b * s_bbar)

    def base_hessian(self, f2: np.ndarray) -> np.ndarray:
        """bb-block of the mixed Hessian of a real field on the base torus."""
        _, _, s_bb = self._base_syms
        return np.real(sfft.ifft2(s_bb * sfft.fft2(f2)))

    def base_deriv(self, f2: np.ndarray, kind: str) -> np.ndarray:
        s_b, s_bbar, _ = self._base_syms
        sym = s_b if kind == "holo" else s_bbar
        return sfft.ifft2(sym * sfft.fft2(f2))

    # -- finite-difference operators --------------------------------------

    def fd_hessian(self, phi: np.ndarray) -> HermitianField:
        """Fourth-order centered finite-difference mixed Hessian.

        Same operator as hessian() under an independent discretization;
        pure second derivatives use the 5-point fourth-order stencil and
        mixed ones compose fourth-order first-derivative stencils.
        """
        phi = np.broadcast_to(phi, self.shape)
        hb = 1.0 / self.n_base
        hf = 1.0 / self.n_fiber
        d2x = _fd_d2(phi, 0, hb)
        d2y = _fd_d2(phi, 1, hb)
        d2u = _fd_d2(phi, 2, hf)
        d2v = _fd_d2(phi, 3, hf)
        dx = _fd_d1(phi, 0, hb)
        dy = _fd_d1(phi, 1, hb)
        dxu = _fd_d1(dx, 2, hf)
        dxv = _fd_d1(dx, 3, hf)
        dyu = _fd_d1(dy, 2, hf)
        dyv = _fd_d1(dy, 3, hf)
        duv = _fd_d1(_fd_d1(phi, 2, hf), 3, hf)
        c, d = self._fiber_coeffs
        bb = 0.25 * (d2x + d2y)
        ff = (abs(c) ** 2) * d2u + 2.0 * np.real(c * np.conj(d)) * duv + (abs(d) ** 2) * d2v
        cc, dc = np.conj(c), np.conj(d)
        bf = 0.5 * (cc * dxu + dc * dxv) - 0.5j * (cc * dyu + dc * dyv)
        return HermitianField(bb, bf, ff)


def _fd_d1(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered first derivative along a periodic axis."""
    fp1 = np.roll(f, -1, axis)
    fm1 = np.roll(f, 1, axis)
    fp2 = np.roll(f, -2, axis)
    fm2 = np.roll(f, 2, axis)
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)


def _fd_d2(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered second derivative along a periodic axis."""
    fp1 = np.roll(f, -1, axis)
    fm1 = np.roll(f, 1, axis)
    fp2 = np.roll(f, -2, axis)
    fm2 = np.roll(f, 2, axis)
    return (-fp2 + 16.0 * fp1 - 30.0 * f + 16.0 * fm1 - fm2) / (12.0 * h * h)


def restrict_to_fiber(f: np.ndarray, grid: SpectralGrid, ib: int, jb: int) -> FiberSlice:
    """Extract the fiber over base grid point (ib, jb) as a 2D field."""
    nb = grid.n_base
    if not (0 <= ib < nb and 0 <= jb < nb):
        raise OutOfDomain(f"base index ({ib}, {jb}) outside grid of size {nb}")
    vals = np.broadcast_to(f, grid.shape)[ib, jb]
    return FiberSlice(ib, jb, np.ascontiguousarray(vals))
