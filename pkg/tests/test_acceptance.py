"""Acceptance gate: one test per shipped guarantee, at its stated tolerance.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line per
guarantee.  The three module fixtures push the shipped configuration files
through the CLI driver exactly as a user would (preflight oracles, flow run,
CSV round-trip), so every check below reads the same artifacts a production
run would produce.

These are end-to-end runs at production resolution; the whole module takes a
few minutes.  Everything is deterministic — no seeds, no retries.

Known expected failure: ``test_criterion_5_fiber_flatness_decay_rate``
asserts a decay rate for the rescaled fiber deviation that the continuous
dynamics do not realize: the initial fiber perturbation can be absorbed by
an exact change of variables (phi -> phi + e^{-t} * psi0 maps the run onto
an unperturbed run), after which any fiber inhomogeneity dies faster than
exponentially.  What the monitor sees on [2, 6] is the time-stepper's
residual, which is flat in time for the default scheme.  The check is kept
at its stated tolerance rather than loosened; see README (limitations).
"""

import math
import pathlib

import numpy as np
import pytest

from krflow.analysis import (
    bounded_monitor_check,
    decay_fit,
    drift_stats,
    fiber_flatness_rates,
)
from krflow.cli import cmd_simulate, parse_config
from krflow.discretization import SpectralGrid
from krflow.flow import FlowOptions, FlowProblem
from krflow.geometry import GeometrySpec, SurrogateGeometry
from krflow.octagon import OctagonGrid, run_base_flow
from krflow.oracle import run_battery
from krflow.persistence import read_monitor_csv

CONFIG_DIR = pathlib.Path(__file__).resolve().parents[1] / "configs"


def _run_shipped_config(name, tmp_path_factory):
    cfg = parse_config((CONFIG_DIR / f"{name}.ini").read_text())
    out = tmp_path_factory.mktemp(name)
    rc = cmd_simulate(cfg, str(out), quiet=True)
    assert rc == 0, f"shipped config {name!r} did not complete cleanly"
    return read_monitor_csv(str(out / "monitors.csv"))


@pytest.fixture(scope="module")
def stationary_records(tmp_path_factory):
    return _run_shipped_config("stationary", tmp_path_factory)


@pytest.fixture(scope="module")
def generic_records(tmp_path_factory):
    return _run_shipped_config("generic", tmp_path_factory)


@pytest.fixture(scope="module")
def homogeneous_records(tmp_path_factory):
    return _run_shipped_config("homogeneous", tmp_path_factory)


# -- 1: unperturbed initial data is an exact fixed point ---------------------


def test_criterion_1_stationary_zero_potential():
    """Zero initial perturbation at 32^4, t_end = 10: sup|phi| < 1e-8."""
    grid = SpectralGrid(32, 32, 1j)
    geometry = SurrogateGeometry(grid, GeometrySpec(psi0_preset="zero"))
    problem = FlowProblem(geometry)
    result = problem.run(
        FlowOptions(t_end=10.0, dt_max=0.0125, sample_interval=0.1)
    )
    worst = max(s.sup_phi for s in result.states)
    assert result.final_t == pytest.approx(10.0, abs=1e-12)
    assert worst < 1e-8, f"sup|phi| reached {worst:.3e}"


# -- 2: homogeneous run tracks the closed-form class coefficients ------------


def test_criterion_2_homogeneous_fiber_collapse_coefficients():
    """omega_0 = chi + 3 omega_E: a(t) = 1 and b(t) = 3 e^{-t} to 1e-6 at t=5."""
    grid = SpectralGrid(16, 16, 1j)
    geometry = SurrogateGeometry(
        grid, GeometrySpec(fiber_scale=3.0, psi0_preset="zero")
    )
    problem = FlowProblem(geometry)
    result = problem.run(FlowOptions(t_end=5.0, dt_max=0.025, sample_interval=0.5))
    _, g = problem.rhs(result.final_phi, result.final_t)

    unit = geometry.tilde(0.0)
    a_hat = float(np.mean(g.bb)) / float(np.mean(unit.bb))
    b_hat = float(np.mean(g.ff)) / float(np.mean(unit.ff))
    assert abs(a_hat - 1.0) < 1e-6, f"base coefficient {a_hat!r}"
    assert abs(b_hat - 3.0 * math.exp(-5.0)) < 1e-6, f"fiber coefficient {b_hat!r}"


# -- 3: perturbed potential decays like (1 + t) e^{-t} -----------------------


def _decay_run(n):
    grid = SpectralGrid(n, n, 1j)
    geometry = SurrogateGeometry(
        grid, GeometrySpec(psi0_preset="mixed", psi0_amplitude=0.05)
    )
    problem = FlowProblem(geometry)
    result = problem.run(
        FlowOptions(t_end=6.0, dt_max=0.0125, sample_interval=0.05)
    )
    times = [s.t for s in result.states]
    values = [s.sup_phi for s in result.states]
    return decay_fit(times, values, t_min=2.0, t_max=6.0)


def test_criterion_3_potential_decay_envelope_and_resolution_stability():
    """sup|phi| / ((1+t) e^{-t}) stays in a 4:1 band on [2, 6]; the fitted
    envelope constant moves < 10% when the resolution doubles."""
    fit_16 = _decay_run(16)
    fit_32 = _decay_run(32)
    assert fit_16.passed, (
        f"envelope ratio band {fit_16.ratio_min:.3e}..{fit_16.ratio_max:.3e}"
    )
    assert fit_32.passed, (
        f"envelope ratio band {fit_32.ratio_min:.3e}..{fit_32.ratio_max:.3e}"
    )
    rel_change = abs(fit_32.constant - fit_16.constant) / fit_16.constant
    assert rel_change < 0.10, (
        f"C moved {100 * rel_change:.1f}%: {fit_16.constant:.4e} -> "
        f"{fit_32.constant:.4e}"
    )


# -- 4: uniform metric equivalence along the run -----------------------------


def test_criterion_4_metric_equivalence_band_and_drift(generic_records):
    """Relative eigenvalues against the comparison family stay in a fixed
    band for the whole run and the band constant drifts < 5% over [2, 8]."""
    lo = min(r.rel_eig_min for r in generic_records)
    hi = max(r.rel_eig_max for r in generic_records)
    assert 0.5 < lo <= hi < 2.0, f"eigenvalue band [{lo:.4f}, {hi:.4f}]"
    c_band = max(hi, 1.0 / lo)
    assert math.isfinite(c_band)

    cs, _ = drift_stats(generic_records, 2.0, 8.0)
    drift = float(cs.max() / cs.min()) - 1.0
    assert drift < 0.05, f"equivalence constant drifted {100 * drift:.2f}%"


# -- 5: fiber deviation decay rate (expected failure, kept honest) -----------


def test_criterion_5_fiber_flatness_decay_rate(generic_records):
    """Rescaled fiber deviation: squared sup-norm log-slope -2 +/- 0.2 on
    [2, 6]; first-derivative deviation decays at least as fast."""
    report = fiber_flatness_rates(generic_records, 2.0, 6.0)
    slope0 = report.slopes[0]
    slope1 = report.slopes[1]
    assert -2.2 <= slope0 <= -1.8, (
        f"fiber_dev0 log-slope {slope0:.4f} (fiber_dev1 {slope1:.4f}); the "
        "perturbation is absorbed exactly and the series sits on the "
        "integrator floor here — see README"
    )
    assert slope1 <= slope0 + 1e-9, (
        f"fiber_dev1 slope {slope1:.4f} slower than fiber_dev0 {slope0:.4f}"
    )


# -- 6: two computations of the fiber potential agree ------------------------


def test_criterion_6_fiber_poisson_identity_residual(
    stationary_records, generic_records, homogeneous_records
):
    """The fiber-restricted potential recomputed through the fiber Poisson
    operator matches the metric deviation to 1e-8 at every sample."""
    for name, records in (
        ("stationary", stationary_records),
        ("generic", generic_records),
        ("homogeneous", homogeneous_records),
    ):
        worst = max(r.delta_psi_residual for r in records)
        assert worst < 1e-8, f"{name}: identity residual {worst:.3e}"


# -- 7: no monitored quantity blows up ---------------------------------------


def test_criterion_7_bounded_monitors_no_blowup(
    stationary_records, generic_records, homogeneous_records
):
    """Late-run maxima of every bounded monitor stay within a factor 2 of
    the early-run maxima on all shipped configurations."""
    for name, records in (
        ("stationary", stationary_records),
        ("generic", generic_records),
        ("homogeneous", homogeneous_records),
    ):
        results, all_ok = bounded_monitor_check(records)
        bad = {k: v for k, v in results.items() if not v[2]}
        assert all_ok, f"{name}: monitors exceeded the factor-2 bound: {bad}"


# -- 8: derivative operators are accurate and converge at design order -------


def test_criterion_8_hessian_accuracy_and_refinement():
    """Spectral Hessian matches the closed form of a band-limited field to
    1e-6 at 32^4, and the independent-oracle battery passes with the dense
    comparison refining at second order (+/- 0.4)."""
    grid = SpectralGrid(32, 32, 1j)
    x, y, u, v = grid.coords
    modes = [
        (1, 0, 0, 0, 0.030, 0.20),
        (0, 2, 0, 0, 0.020, 1.10),
        (0, 0, 1, 0, 0.025, 2.30),
        (0, 0, 0, 3, 0.015, 0.70),
        (1, 0, 1, 0, 0.020, 0.00),
        (2, 1, 0, 1, 0.010, 1.90),
        (1, 2, 2, 1, 0.008, 2.70),
    ]
    field = np.zeros(grid.shape)
    bb = np.zeros(grid.shape)
    ff = np.zeros(grid.shape)
    bf = np.zeros(grid.shape, dtype=complex)
    for kx, ky, ku, kv, amp, ph in modes:
        arg = 2.0 * np.pi * (kx * x + ky * y + ku * u + kv * v) + ph
        field += amp * np.cos(arg)
        c2 = -amp * (2.0 * np.pi) ** 2 * np.cos(arg)
        bb += c2 * (kx * kx + ky * ky) / 4.0
        ff += c2 * (ku * ku + kv * kv) / 4.0
        bf += c2 * ((kx * ku + ky * kv) + 1j * (kx * kv - ky * ku)) / 4.0
    h = grid.hessian(field)
    err = max(
        float(np.max(np.abs(h.bb - bb))),
        float(np.max(np.abs(h.bf - bf))),
        float(np.max(np.abs(h.ff - ff))),
    )
    assert err < 1e-6, f"spectral Hessian vs closed form: {err:.3e}"

    reports = run_battery(32, 32, 1j, seed=0)
    failed = [r.line() for r in reports if not r.passed]
    assert not failed, "oracle battery failures:\n" + "\n".join(failed)
    order = reports[0].measured
    assert abs(order - 2.0) < 0.4, f"refinement order {order:.3f}"


# -- 9: curved-base backend reaches the constant-curvature limit -------------


def test_criterion_9_octagon_base_flow_reaches_constant_curvature():
    """Base-only flow on the octagon surface converges to the hyperbolic
    metric: relative sup deviation <= 1e-3 at t = 10 and curvature spatially
    constant to 1e-3."""
    grid = OctagonGrid(64)
    result = run_base_flow(grid, t_end=10.0)
    assert result.final_rel_dev <= 1e-3, f"rel dev {result.final_rel_dev:.3e}"
    assert result.curvature_spread <= 1e-3, (
        f"curvature spread {result.curvature_spread:.3e}"
    )
    assert abs(result.curvature_mean + 2.0) <= 1e-3, (
        f"curvature mean {result.curvature_mean:.8f}"
    )
