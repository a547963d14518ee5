"""Monitors, tensor norms, and decay-rate fits for flow runs.

All curvature-type quantities are computed relative to the product
comparison family: its connection is time-independent, with the single
nonzero Christoffel symbol  gamma = d/dz_b log(chi)  on the base.  Index
convention for stacked arrays: trailing axes of length 2 index (base,
fiber) = (0, 1); for a mixed tensor the positional order in the array name
comments tells which slots are holomorphic and which are conjugated.

Monitored quantities per sample:

* sup |phi|, sup |phi_dot|
* volume ratio  e^t det(g) / Omega  (min / max over the grid)
* eigenvalues of g relative to the comparison form (min / max)
* trace of g against the comparison form (min / max)
* s_max:    sup of |Psi|^2, Psi the connection deviation tensor
            Psi^p_{ik} = g^{lbar p} (nabla~_i g)_{k lbar}
* rm2_max:  sup of |Rm|^2 for the Chern curvature
            R_{i jbar k lbar} = -dd g + g^{qbar p} (d g)(dbar g)
* grad2_max: sup of |nabla~^2 g|^2 over both second-derivative types
            (holomorphic-holomorphic and mixed), doubled for the
            conjugate blocks
* fiber_dev[k], k = 0,1,2: sup over 8 strided sample fibers of the squared
            g_E-norm of nabla_E^k (e^t g|_fiber - g_flat)
* delta_psi_residual: sup over sample fibers of the defect in
            Lap_E psi = tr_E(e^t g|_fiber - g_flat),  psi = e^t phi - rho
* distance_to_limit: sup |g_bb - chi|

The fast per-sample path expresses every derivative of g through one rfft
of  w = e^{-t} psi_0 + phi  (whose Hessian carries all non-product content
of g) plus closed-form derivatives of the base form; a slow generic path
using full complex transforms implements the same tensors independently
and is cross-checked in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .discretization import (
    HermitianField,
    SpectralGrid,
    relative_eigen_bounds,
    restrict_to_fiber,
    trace_with,
)
from .errors import ConfigInvalid, InsufficientSamples


# -- stacked 2x2 helpers ---------------------------------------------------


def _stack(g: HermitianField, shape) -> np.ndarray:
    out = np.empty(shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = np.broadcast_to(g.bb, shape)
    out[..., 0, 1] = np.broadcast_to(g.bf, shape)
    out[..., 1, 0] = np.conj(out[..., 0, 1])
    out[..., 1, 1] = np.broadcast_to(g.ff, shape)
    return out


def _stack_inv(g: HermitianField, shape) -> np.ndarray:
    det = g.det()
    inv = HermitianField(g.ff / det, -g.bf / det, g.bb / det)
    return _stack(inv, shape)


# -- tensor assembly (shared by fast and generic paths) --------------------


def _assemble_w(d_stack, g_stack, gamma):
    """Covariant first derivative W[i,k,l] = d_i g_{k lbar} - corrections."""
    w = d_stack.copy()
    for l in range(2):
        w[..., 0, 0, l] -= gamma * g_stack[..., 0, l]
    return w


def _assemble_t(dh, d_stack, w, g_stack, gamma, dgamma):
    """Holomorphic second derivative T[i,j,k,l] = nabla~_i W[j,k,l]."""
    t = np.empty(dh.shape[:-4] + (2, 2, 2, 2), dtype=np.complex128)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    val = dh[..., i, j, k, l].copy()
                    if j == 0 and k == 0:
                        # d_i of the correction term gamma * g_{0 lbar}
                        if i == 0:
                            val -= dgamma * g_stack[..., 0, l]
                        val -= gamma * d_stack[..., i, 0, l]
                    if i == 0 and j == 0:
                        val -= gamma * w[..., 0, k, l]
                    if i == 0 and k == 0:
                        val -= gamma * w[..., j, 0, l]
                    t[..., i, j, k, l] = val
    return t


def _assemble_m2(da, d_stack, w, g_stack, gamma, dgamma_a):
    """Mixed second derivative M2[i,j,k,l] = nabla~_{ibar} W[j,k,l]."""
    m = np.empty(da.shape[:-4] + (2, 2, 2, 2), dtype=np.complex128)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    val = da[..., i, j, k, l].copy()
                    if j == 0 and k == 0:
                        if i == 0:
                            val -= dgamma_a * g_stack[..., 0, l]
                        val -= gamma * np.conj(d_stack[..., i, l, 0])
                    if i == 0 and l == 0:
                        val -= np.conj(gamma) * w[..., j, k, 0]
                    m[..., i, j, k, l] = val
    return m


def _contract_s(g_stack, ginv, w):
    psi = np.einsum("...lp,...ikl->...pik", ginv, w, optimize=True)
    s = np.einsum(
        "...pik,...qjl,...ji,...lk,...pq->...",
        psi,
        np.conj(psi),
        ginv,
        ginv,
        g_stack,
        optimize=True,
    )
    return np.real(s), psi


def _contract_rm2(ginv, d_stack, dd):
    quad = np.einsum(
        "...qp,...kiq,...ljp->...ijkl", ginv, d_stack, np.conj(d_stack), optimize=True
    )
    rm = quad - dd
    rm2 = np.einsum(
        "...ijkl,...abcd,...ai,...jb,...ck,...ld->...",
        rm,
        np.conj(rm),
        ginv,
        ginv,
        ginv,
        ginv,
        optimize=True,
    )
    return np.real(rm2), rm


def _contract_hh_norm(ginv, t):
    out = np.einsum(
        "...ijkl,...abcd,...ai,...bj,...ck,...ld->...",
        t,
        np.conj(t),
        ginv,
        ginv,
        ginv,
        ginv,
        optimize=True,
    )
    return np.real(out)


def _contract_ha_norm(ginv, m):
    out = np.einsum(
        "...ijkl,...abcd,...ia,...bj,...ck,...ld->...",
        m,
        np.conj(m),
        ginv,
        ginv,
        ginv,
        ginv,
        optimize=True,
    )
    return np.real(out)


# -- generic (slow, transform-per-derivative) tensor builders --------------


def _generic_stacks(grid: SpectralGrid, g: HermitianField):
    """D, DD, DH, DA stacks via full complex transforms of the g blocks."""
    shape = grid.shape
    g_stack = _stack(g, shape)
    spec = [[grid.fft_c(g_stack[..., k, l]) for l in range(2)] for k in range(2)]
    sh = grid.sym_full[("holo", "b")], grid.sym_full[("holo", "f")]
    sa = grid.sym_full[("anti", "b")], grid.sym_full[("anti", "f")]

    d = np.empty(shape + (2, 2, 2), dtype=np.complex128)
    dd = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)
    dh = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)
    da = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)
    for i in range(2):
        for q in range(2):
            for m in range(2):
                d[..., m, i, q] = grid.ifft_c(sh[m] * spec[i][q])
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    dd[..., i, j, k, l] = grid.ifft_c(sh[k] * sa[l] * spec[i][j])
                    dh[..., i, j, k, l] = grid.ifft_c(sh[i] * sh[j] * spec[k][l])
                    da[..., i, j, k, l] = grid.ifft_c(sa[i] * sh[j] * spec[k][l])
    return g_stack, d, dd, dh, da


def _gamma_tables(grid: SpectralGrid, gamma4: np.ndarray, dgamma_h=None, dgamma_a=None):
    """gamma plus its holomorphic and antiholomorphic base derivatives.

    Derivatives default to spectral differentiation of the supplied table;
    callers holding exact (quotient-rule) tables pass them in instead.
    """
    g2 = gamma4[:, :, 0, 0]
    if dgamma_h is None:
        dgamma_h = grid.base_deriv(g2, "holo")[:, :, None, None]
    if dgamma_a is None:
        dgamma_a = grid.base_deriv(g2, "anti")[:, :, None, None]
    return gamma4, dgamma_h, dgamma_a


def christoffel_deviation(grid: SpectralGrid, g: HermitianField, gamma4: np.ndarray):
    """Connection deviation tensor Psi and its squared norm field.

    Generic-path implementation; returns (s_field, psi) with psi stacked as
    [p, i, k] on the trailing axes.
    """
    g_stack, d, _, _, _ = _generic_stacks(grid, g)
    ginv = _stack_inv(g, grid.shape)
    gamma, _, _ = _gamma_tables(grid, gamma4)
    w = _assemble_w(d, g_stack, gamma)
    s, psi = _contract_s(g_stack, ginv, w)
    return s, psi


def curvature_squared(grid: SpectralGrid, g: HermitianField) -> np.ndarray:
    """|Rm|^2 of the Chern curvature of g, generic path."""
    _, d, dd, _, _ = _generic_stacks(grid, g)
    ginv = _stack_inv(g, grid.shape)
    rm2, _ = _contract_rm2(ginv, d, dd)
    return rm2


def covariant_hessian_squared(
    grid: SpectralGrid,
    g: HermitianField,
    gamma4: np.ndarray,
    dgamma_h=None,
    dgamma_a=None,
) -> np.ndarray:
    """|nabla~^2 g|^2 over both derivative types, generic path."""
    g_stack, d, _, dh, da = _generic_stacks(grid, g)
    ginv = _stack_inv(g, grid.shape)
    gamma, dg_h, dg_a = _gamma_tables(grid, gamma4, dgamma_h, dgamma_a)
    w = _assemble_w(d, g_stack, gamma)
    t = _assemble_t(dh, d, w, g_stack, gamma, dg_h)
    m2 = _assemble_m2(da, d, w, g_stack, gamma, dg_a)
    return 2.0 * (_contract_hh_norm(ginv, t) + _contract_ha_norm(ginv, m2))


# -- monitor record --------------------------------------------------------


@dataclass
class MonitorRecord:
    t: float
    sup_phi: float
    sup_phidot: float
    vol_ratio_min: float
    vol_ratio_max: float
    rel_eig_min: float
    rel_eig_max: float
    trace_min: float
    trace_max: float
    s_max: float
    rm2_max: float
    grad2_max: float
    fiber_dev0: float
    fiber_dev1: float
    fiber_dev2: float
    delta_psi_residual: float
    distance_to_limit: float

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, n) for n in self.field_names()]


class MonitorEngine:
    """Per-sample monitor evaluation for one FlowProblem.

    Precomputes base-form derivative tables and the half-spectrum symbol
    products that turn derivatives of g into two real inverse transforms of
    the single rfft of  w = e^{-t} psi_0 + phi  per field.
    """

    def __init__(self, problem, n_sample_fibers: int = 8):
        self.problem = problem
        geometry = problem.geometry
        grid: SpectralGrid = geometry.grid
        self.grid = grid
        self.geometry = geometry

        chi2 = geometry.chi2
        self.chi = geometry.chi
        dchi2 = grid.base_deriv(chi2, "holo")
        self.dchi = dchi2[:, :, None, None]
        self.ddbar_chi = np.real(grid.base_deriv(dchi2, "anti"))[:, :, None, None]
        self.dd_chi = grid.base_deriv(dchi2, "holo")[:, :, None, None]

        # gamma = dchi/chi; its derivatives by the quotient rule.  chi's own
        # derivative tables are band-limited, so these are alias-free, unlike
        # a spectral derivative of the (non-band-limited) quotient itself.
        self.gamma = geometry.gamma_b
        self.dgamma_h = self.dd_chi / self.chi - (self.dchi / self.chi) ** 2
        self.dgamma_a = self.ddbar_chi / self.chi - np.abs(self.dchi / self.chi) ** 2

        # Strided fiber sample points, spread over both base axes.
        nb = grid.n_base
        self.fiber_points = []
        for r in range(n_sample_fibers):
            ib = (r * nb) // n_sample_fibers
            jb = (ib * 3 + r) % nb
            self.fiber_points.append((ib, jb))
        self.rho_slices = [
            restrict_to_fiber(geometry.flat_fiber.rho, grid, ib, jb).values
            for ib, jb in self.fiber_points
        ]
        self.gflat_slices = [
            float(geometry.flat_fiber.g_flat[ib, jb, 0, 0]) for ib, jb in self.fiber_points
        ]

        self._symbols = self._build_symbol_products()

    # .. symbol machinery .................................................

    def _key(self, holo, anti):
        return (tuple(sorted(holo)), tuple(sorted(anti)))

    def _build_symbol_products(self):
        sh = self.grid.sym_half
        s1 = {0: sh[("holo", "b")], 1: sh[("holo", "f")]}
        s1b = {0: sh[("anti", "b")], 1: sh[("anti", "f")]}
        needed = set()
        for m in range(2):
            for i in range(2):
                for q in range(2):
                    needed.add(self._key((m, i), (q,)))
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    for d in range(2):
                        needed.add(self._key((a, b), (c, d)))   # DD and DA shapes
                        needed.add(self._key((a, b, c), (d,)))  # DH shapes
        table = {}
        for holo, anti in needed:
            sym = np.ones((1, 1, 1, 1), dtype=np.complex128)
            for m in holo:
                sym = sym * s1[m]
            for q in anti:
                sym = sym * s1b[q]
            parity = (len(holo) + len(anti)) % 2
            table[(holo, anti)] = (np.ascontiguousarray(sym), parity)
        return table

    def _field(self, w_spec, holo, anti):
        """Complex derivative field for the given symbol product applied to w."""
        sym, parity = self._symbols[self._key(holo, anti)]
        if parity == 0:
            s_re, s_im = sym.real, sym.imag
        else:
            s_re, s_im = 1j * sym.imag, -1j * sym.real
        re = self.grid.irfft(s_re * w_spec)
        im = self.grid.irfft(s_im * w_spec)
        return re + 1j * im

    # .. fast derivative stacks ...........................................

    def _fast_stacks(self, w_spec, a_t):
        shape = self.grid.shape
        d = np.empty(shape + (2, 2, 2), dtype=np.complex128)
        dd = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)
        dh = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)
        da = np.empty(shape + (2, 2, 2, 2), dtype=np.complex128)

        # Mixed partials coincide after sorting the index multisets, so only
        # 23 of the 56 requested fields are distinct; memoize per call.
        cache = {}

        def field(holo, anti):
            key = self._key(holo, anti)
            if key not in cache:
                cache[key] = self._field(w_spec, *key)
            return cache[key]

        for m in range(2):
            for i in range(2):
                for q in range(2):
                    d[..., m, i, q] = field((m, i), (q,))
        d[..., 0, 0, 0] += a_t * self.dchi
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        dd[..., i, j, k, l] = field((k, i), (l, j))
                        dh[..., i, j, k, l] = field((i, j, k), (l,))
                        da[..., i, j, k, l] = field((j, k), (i, l))
        dd[..., 0, 0, 0, 0] += a_t * self.ddbar_chi
        dh[..., 0, 0, 0, 0] += a_t * self.dd_chi
        da[..., 0, 0, 0, 0] += a_t * self.ddbar_chi
        return d, dd, dh, da

    # .. per-sample record ................................................

    def curvature_fields(self, t: float, phi: np.ndarray, g: HermitianField):
        """Pointwise (s, rm2, grad2) fields via the folded-derivative path."""
        grid = self.grid
        geom = self.geometry
        shape = grid.shape
        a_t = 1.0 + (geom.spec.base_scale - 1.0) * math.exp(-t)
        w = math.exp(-t) * geom.psi0 + phi
        w_spec = grid.rfft(w)
        d, dd, dh, da = self._fast_stacks(w_spec, a_t)

        g_stack = _stack(g, shape)
        ginv = _stack_inv(g, shape)
        w_cov = _assemble_w(d, g_stack, self.gamma)
        s_field, _ = _contract_s(g_stack, ginv, w_cov)
        rm2_field, _ = _contract_rm2(ginv, d, dd)
        t_tensor = _assemble_t(dh, d, w_cov, g_stack, self.gamma, self.dgamma_h)
        m2_tensor = _assemble_m2(da, d, w_cov, g_stack, self.gamma, self.dgamma_a)
        grad2_field = 2.0 * (
            _contract_hh_norm(ginv, t_tensor) + _contract_ha_norm(ginv, m2_tensor)
        )
        return s_field, rm2_field, grad2_field

    def record(self, problem, t: float, phi: np.ndarray, rhs: np.ndarray,
               g: HermitianField) -> MonitorRecord:
        grid = self.grid
        geom = self.geometry
        shape = grid.shape
        e_t = math.exp(t)

        tilde = geom.tilde(t)
        lo, hi = relative_eigen_bounds(g, tilde)
        tr = trace_with(g, tilde)
        ratio = e_t * g.det() / geom.volume.density

        s_field, rm2_field, grad2_field = self.curvature_fields(t, phi, g)

        dev0 = dev1 = dev2 = resid = 0.0
        g_ff_full = np.broadcast_to(g.ff, shape)
        phi_full = np.broadcast_to(phi, shape)
        for (ib, jb), rho2, ge in zip(self.fiber_points, self.rho_slices,
                                      self.gflat_slices):
            dev = e_t * g_ff_full[ib, jb] - ge
            dev0 = max(dev0, float(np.max(dev**2)) / ge**2)
            d1 = grid.fiber_deriv(dev, "holo")
            dev1 = max(dev1, 2.0 * float(np.max(np.abs(d1) ** 2)) / ge**3)
            d2h = grid.fiber_deriv(d1, "holo")
            d2m = grid.fiber_deriv(d1, "anti")
            dev2 = max(
                dev2,
                2.0 * float(np.max(np.abs(d2h) ** 2 + np.abs(d2m) ** 2)) / ge**4,
            )
            psi = e_t * phi_full[ib, jb] - rho2
            lhs = grid.fiber_hessian(psi)
            resid = max(resid, float(np.max(np.abs(lhs - dev))) / ge)

        return MonitorRecord(
            t=t,
            sup_phi=float(np.max(np.abs(phi))),
            sup_phidot=float(np.max(np.abs(rhs))),
            vol_ratio_min=float(np.min(ratio)),
            vol_ratio_max=float(np.max(ratio)),
            rel_eig_min=float(np.min(lo)),
            rel_eig_max=float(np.max(hi)),
            trace_min=float(np.min(tr)),
            trace_max=float(np.max(tr)),
            s_max=float(np.max(s_field)),
            rm2_max=float(np.max(rm2_field)),
            grad2_max=float(np.max(grad2_field)),
            fiber_dev0=dev0,
            fiber_dev1=dev1,
            fiber_dev2=dev2,
            delta_psi_residual=resid,
            distance_to_limit=float(
                np.max(np.abs(np.broadcast_to(g.bb, shape) - self.chi))
            ),
        )


# -- decay fitting ---------------------------------------------------------


def log_slope_fit(times, values, t_min: float, t_max: float, min_points: int = 4):
    """Least-squares slope of log(value) against t on [t_min, t_max].

    Returns (slope, intercept, n_points).  Non-positive values cannot enter
    the log and are dropped; fewer than `min_points` surviving points raises
    InsufficientSamples.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (times >= t_min - 1e-12) & (times <= t_max + 1e-12) & (values > 0.0)
    tt, vv = times[keep], np.log(values[keep])
    if tt.size < min_points:
        raise InsufficientSamples(
            f"need at least {min_points} positive samples in "
            f"[{t_min}, {t_max}], got {tt.size}"
        )
    coeffs = np.polyfit(tt, vv, 1)
    return float(coeffs[0]), float(coeffs[1]), int(tt.size)


@dataclass
class DecayFit:
    """Envelope fit of a sup|phi| series against C (1 + t) e^{-t}."""

    t0: float
    t1: float
    constant: float       # max over the window of value / ((1+t) e^{-t})
    log_slope: float      # least-squares slope of log(value); nan if all zero
    ratio_min: float
    ratio_max: float
    passed: bool          # constant finite and ratio_max / ratio_min <= 4
    n_points: int


def decay_fit(times, values, t_min: float = 2.0, t_max: float = 6.0,
              ratio_bound: float = 4.0) -> DecayFit:
    """Fit a monitor series against the decaying envelope (1 + t) e^{-t}.

    The window must satisfy t_max > t_min >= 1 and contain at least 20
    samples (InsufficientSamples otherwise).  A series that is identically
    zero on the window passes trivially with constant 0.  The fit is
    scale-equivariant: scaling the series scales `constant` and leaves the
    ratio spread and the pass flag unchanged.
    """
    if not (t_max > t_min >= 1.0):
        raise ConfigInvalid(
            f"fit window must satisfy t_max > t_min >= 1, got [{t_min}, {t_max}]"
        )
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (times >= t_min - 1e-12) & (times <= t_max + 1e-12)
    tt, vv = times[keep], values[keep]
    if tt.size < 20:
        raise InsufficientSamples(
            f"need at least 20 samples in [{t_min}, {t_max}], got {tt.size}"
        )
    envelope = (1.0 + tt) * np.exp(-tt)
    ratios = vv / envelope
    constant = float(np.max(ratios))
    if np.all(vv <= 0.0):
        # Nothing decaying to rate-fit; the envelope bound holds trivially.
        return DecayFit(t_min, t_max, constant, float("nan"),
                        0.0, 0.0, True, int(tt.size))
    try:
        slope, _, _ = log_slope_fit(tt, vv, t_min, t_max)
    except InsufficientSamples:
        slope = float("nan")
    pos = ratios[vv > 0.0]
    ratio_min = float(np.min(pos))
    ratio_max = float(np.max(pos))
    passed = bool(np.isfinite(constant) and ratio_max <= ratio_bound * ratio_min)
    return DecayFit(t_min, t_max, constant, slope, ratio_min, ratio_max,
                    passed, int(tt.size))


@dataclass
class FiberFlatnessReport:
    """Log-slopes of the squared fiber deviation norms and the identity defect."""

    slopes: dict          # k -> slope of log fiber_dev[k]; nan when all zero
    residual_max: float   # worst delta_psi identity residual on the window
    n_points: int


def fiber_flatness_rates(records, t_min: float = 2.0, t_max: float = 6.0
                         ) -> FiberFlatnessReport:
    """Decay rates of the (already squared) fiber deviation monitors.

    Orders with no positive samples on the window (a stationary run) get a
    nan slope rather than an error; a window with fewer than 4 records
    raises InsufficientSamples.
    """
    window = [r for r in records if t_min - 1e-12 <= r.t <= t_max + 1e-12]
    if len(window) < 4:
        raise InsufficientSamples(
            f"need at least 4 records in [{t_min}, {t_max}], got {len(window)}"
        )
    ts = [r.t for r in window]
    slopes = {}
    for k in range(3):
        vals = [getattr(r, f"fiber_dev{k}") for r in window]
        try:
            slopes[k], _, _ = log_slope_fit(ts, vals, t_min, t_max)
        except InsufficientSamples:
            slopes[k] = float("nan")
    resid = max(r.delta_psi_residual for r in window)
    return FiberFlatnessReport(slopes=slopes, residual_max=resid,
                               n_points=len(window))


def drift_stats(records, t_min: float, t_max: float):
    """Conditioning C(t) = max(eig_max, 1/eig_min) over a window.

    Returns (c_values, times); boundedness of C certifies uniform
    equivalence of g to the comparison family on the window.
    """
    window = [r for r in records if t_min - 1e-12 <= r.t <= t_max + 1e-12]
    if len(window) < 2:
        raise InsufficientSamples(f"need at least 2 samples in [{t_min}, {t_max}]")
    cs = np.array([max(r.rel_eig_max, 1.0 / r.rel_eig_min) for r in window])
    ts = np.array([r.t for r in window])
    return cs, ts


# Monitors subject to the no-blow-up check; vol_ratio_min guards collapse,
# so it enters through its reciprocal.
BOUNDED_MONITOR_FIELDS = (
    "sup_phidot",
    "vol_ratio_max",
    "vol_ratio_min",
    "s_max",
    "rm2_max",
    "grad2_max",
)


def bounded_monitor_check(records, fields=BOUNDED_MONITOR_FIELDS,
                          factor: float = 2.0, split_t: float = 1.0,
                          atol: float = 1e-12):
    """No-blow-up property: late maxima at most `factor` times early maxima.

    For each field the max over t <= split_t is compared against the max
    over t >= split_t; reciprocal-type fields (vol_ratio_min) are inverted
    first.  Returns ({field: (early, late, ok)}, all_ok).
    """
    early = [r for r in records if r.t <= split_t + 1e-12]
    late = [r for r in records if r.t >= split_t - 1e-12]
    if not early or not late:
        raise InsufficientSamples(
            f"need samples on both sides of t = {split_t} for the bound check"
        )
    results = {}
    all_ok = True
    for name in fields:
        def pick(rec):
            v = getattr(rec, name)
            return 1.0 / v if name == "vol_ratio_min" else v
        e = max(pick(r) for r in early)
        l = max(pick(r) for r in late)
        ok = l <= factor * e + atol
        results[name] = (e, l, ok)
        all_ok = all_ok and ok
    return results, all_ok
