"""Self-consistency checks run by ``collapse-bounds validate``.

Each check returns a plain dict (name, passed, measured, tolerance, detail)
so the report can be dumped to JSON as is.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .collapse_models import (DcslParams, DdpParams, dcsl_eta_granular, dcsl_eta_sphere_quadrature,
                              dcsl_gamma_closed_form, dcsl_rates, ddp_eta_granular,
                              ddp_rates_uniform)
from .core import (CODATA, MICROMAGNET, GasSpec, MassPolicy, PhysicalConstants, RegimeWarning,
                   SphereSpec)
from .lattice_oracle import LatticeSpec, dcsl_eta_lattice, ddp_eta_lattice, enumerate_sites
from .measurement import epstein_linewidth, fit_ringdown, synthetic_ringdown, trap_frequency

# value quoted alongside the damping formula for the same sphere and gas
QUOTED_EPSTEIN_HZ_PER_MBAR = 1.9


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _check(name, measured, tolerance, detail=None, passed=None):
    if passed is None:
        passed = bool(measured <= tolerance)
    return {"name": name, "passed": passed, "measured": measured, "tolerance": tolerance,
            "detail": detail or {}}


def check_quadrature_grid(sphere: SphereSpec = MICROMAGNET, constants: PhysicalConstants = CODATA):
    """Numerical momentum integral vs closed-form eta over chi x r_c/R."""
    m_a = 100 * constants.atomic_mass_unit
    worst = 0.0
    for chi in (0.0, 1e-3, 1.0, 10.0):
        for ratio in np.geomspace(1e-2, 1e2, 9):
            r_c = ratio * sphere.radius
            if chi == 0.0:
                T_c = math.inf
            else:
                T_c = (constants.hbar / r_c) ** 2 / (8.0 * m_a * constants.k_B * chi)
            p = DcslParams(1.0, r_c, T_c, m_a)
            worst = max(worst, _rel(dcsl_eta_sphere_quadrature(sphere, p, constants),
                                    dcsl_rates(sphere, p, constants).eta))
    return _check("dcsl_quadrature_vs_closed_form", worst, 1e-6)


def _lattice_dcsl(n_max: int, constants: PhysicalConstants):
    m_a = 100 * constants.atomic_mass_unit
    p = DcslParams(1.0, 1e-12, 1e-3, m_a)
    a = 20.0 * p.r_c_prime(constants)
    spec = LatticeSpec(a, n_max, m_a)
    sites = enumerate_sites(spec)
    lattice = dcsl_eta_lattice(spec, p, constants, sites=sites)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        closed = dcsl_eta_granular(p, len(sites) * m_a, constants, lattice_constant=a)
    return _rel(lattice, closed)


def _lattice_ddp(n_max: int, constants: PhysicalConstants):
    m_a = 100 * constants.atomic_mass_unit
    p = DdpParams(1e-12, 1e-3, MassPolicy.fixed_nuclear(m_a))
    state = p.resolve(constants)
    spec = LatticeSpec(20.0 * state.R0_prime, n_max, m_a)
    sites = enumerate_sites(spec)
    lattice = ddp_eta_lattice(spec, p, constants, sites=sites)
    closed = ddp_eta_granular(p, len(sites) * m_a, constants, state)
    return _rel(lattice, closed)


def check_lattice_dcsl(n_values=(2, 4, 8), constants: PhysicalConstants = CODATA):
    errs = {n: _lattice_dcsl(n, constants) for n in n_values}
    return _check("dcsl_lattice_vs_granular", max(errs.values()), 1e-10,
                  {f"n_max={n}": e for n, e in errs.items()})


def check_lattice_ddp(n_values=(2, 4, 8), constants: PhysicalConstants = CODATA):
    errs = {n: _lattice_ddp(n, constants) for n in n_values}
    return _check("ddp_lattice_vs_granular", max(errs.values()), 1e-6,
                  {f"n_max={n}": e for n, e in errs.items()})


def ddp_limit_error(sphere: SphereSpec = MICROMAGNET, ratio: float = 1e-2,
                    constants: PhysicalConstants = CODATA) -> float:
    """Uniform-sphere eta with R/R0' = ``ratio`` vs the granular form with m_a = m."""
    R0 = sphere.radius / ratio
    p = DdpParams(R0, math.inf, MassPolicy.fixed_nuclear(sphere.mass))
    uniform = ddp_rates_uniform(sphere, p, constants).eta
    granular = ddp_eta_granular(p, sphere.mass, constants)
    return _rel(uniform, granular)


def check_ddp_limit(sphere: SphereSpec = MICROMAGNET, constants: PhysicalConstants = CODATA):
    return _check("ddp_uniform_to_granular_limit", ddp_limit_error(sphere, 1e-2, constants), 1e-3)


def check_dcsl_gamma_forms(sphere: SphereSpec = MICROMAGNET, constants: PhysicalConstants = CODATA):
    worst = 0.0
    for r_c in np.geomspace(1e-9, 1e-3, 13):
        for T_c in (1.0, 1e-3, 1e-6, 1e-9):
            p = DcslParams(1.0, float(r_c), T_c, 100 * constants.atomic_mass_unit)
            worst = max(worst, _rel(dcsl_rates(sphere, p, constants).gamma,
                                    dcsl_gamma_closed_form(sphere, p, constants)))
    return _check("dcsl_gamma_composed_vs_temperature_form", worst, 1e-12)


def check_trap_frequency(sphere: SphereSpec = MICROMAGNET, constants: PhysicalConstants = CODATA):
    f0, z0 = trap_frequency(sphere, constants)
    return _check("trap_frequency_hz", abs(f0 - 59.0), 0.2, {"f0_hz": f0, "z0_m": z0})


def check_ringdown(constants: PhysicalConstants = CODATA):
    fit = fit_ringdown(synthetic_ringdown(1.19e4))
    err = _rel(fit.tau, 1.19e4)
    return _check("ringdown_noiseless_tau_recovery", err, 1e-10,
                  {"tau_s": fit.tau, "gamma_per_s": fit.gamma,
                   "linewidth_uhz": fit.gamma_linewidth_hz * 1e6})


def check_epstein(sphere: SphereSpec = MICROMAGNET, gas: GasSpec = GasSpec(),
                  constants: PhysicalConstants = CODATA):
    """The as-printed damping formula gives ~3.8 Hz/mbar; the accompanying text quotes 1.9.

    The check passes on the formula value and always reports the ratio to the
    quoted number with an explicit discrepancy flag.
    """
    slope = epstein_linewidth(1.0, sphere, gas, constants)
    ratio = slope / QUOTED_EPSTEIN_HZ_PER_MBAR
    return _check("epstein_hz_per_mbar", _rel(slope, 3.8), 0.02,
                  {"formula_hz_per_mbar": slope, "quoted_hz_per_mbar": QUOTED_EPSTEIN_HZ_PER_MBAR,
                   "ratio_to_quoted": ratio,
                   "discrepancy_flag": bool(abs(ratio - 1.0) > 0.1),
                   "note": "formula value is about twice the quoted value; the quoted number "
                           "is not reproduced by the formula as written"})


CHECKS = (check_quadrature_grid, check_lattice_dcsl, check_lattice_ddp, check_ddp_limit,
          check_dcsl_gamma_forms, check_trap_frequency, check_ringdown, check_epstein)


def run_all(constants: PhysicalConstants = CODATA) -> list:
    return [chk(constants=constants) for chk in CHECKS]
