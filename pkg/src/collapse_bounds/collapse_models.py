"""Diffusion and dissipation rates of the dCSL, dDP and CGF collapse models.

All closed forms are evaluated through dimensionless groupings (R/r_c, chi,
m/m_0, ...) before multiplying by dimensional prefactors, so that tiny
intermediates such as hbar**2 never have to be formed on their own.

Standard (non-dissipative) CSL/DP are the T -> infinity limits and are
represented by passing ``math.inf`` as the collapse-field temperature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import erf

from .core import (CODATA, DEFAULT_NUCLEAR_MASS_U, MassPolicy, NumericalError,
                   PhysicalConstants, RatePrediction, RegimeWarning, SphereSpec,
                   ValidationError, _require_positive, reference_mass)

SQRT_PI = math.sqrt(math.pi)

# Below these arguments the closed forms of K and I lose digits to cancellation
# and the power series are used instead.
K_SERIES_MAX = 0.5
I_SERIES_MAX = 0.35

# K(y) = sum_{k>=2} (-1)^k (k-1) y^(2k) / (k+1)!
_K_COEFFS = tuple((-1) ** k * (k - 1) / math.factorial(k + 1) for k in range(2, 16))
# I(y) = sum_{k>=1} c_k y^(2k+1)
_I_COEFFS = tuple(
    (-1) ** k * (2.0 / (math.factorial(k) * (2 * k + 1))
                 - 1.0 / math.factorial(k + 1) - 2.0 / math.factorial(k + 2))
    for k in range(1, 16))
# 3 j1(x)/x = 3 sum_n (-x^2/2)^n / (n! (2n+3)!!)
_J1X_COEFFS = tuple(3.0 * (-0.5) ** n / (math.factorial(n) * math.prod(range(2 * n + 3, 0, -2)))
                    for n in range(8))


class QuadratureError(NumericalError):
    pass


class FixedPointError(NumericalError):
    pass


def _horner(coeffs, s):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


def shape_K(y: float) -> float:
    """Sphere geometry factor of the dCSL rates, 1 - 2/y^2 + exp(-y^2) (1 + 2/y^2).

    Behaves as y**4/6 for small y and tends to 1 for large y.
    """
    y = float(y)
    if y < 0 or math.isnan(y):
        raise ValidationError("y", f"must be >= 0, got {y!r}")
    s = y * y
    if y < K_SERIES_MAX:
        return s * s * _horner(_K_COEFFS, s)
    inv = 2.0 / s
    return 1.0 - inv + math.exp(-s) * (1.0 + inv)


def shape_I(y: float) -> float:
    """Sphere geometry factor of the uniform dDP rate; ~ y**3/6 for small y, -> sqrt(pi) for large y."""
    y = float(y)
    if y < 0 or math.isnan(y):
        raise ValidationError("y", f"must be >= 0, got {y!r}")
    s = y * y
    if y < I_SERIES_MAX:
        return y * s * _horner(_I_COEFFS, s)
    if math.isinf(y):
        return SQRT_PI
    e = math.exp(-s)
    return SQRT_PI * erf(y) + (e - 3.0) / y + 2.0 * (1.0 - e) / (y * s)


def _three_j1_over_x(x):
    """3 j1(x)/x for x >= 0, array-aware."""
    x = np.asarray(x, dtype=float)
    small = x < 0.1
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    series = np.polynomial.polynomial.polyval(xs * xs, _J1X_COEFFS)
    closed = 3.0 * (np.sin(xl) - xl * np.cos(xl)) / xl**3
    out = np.where(small, series, closed)
    return out if out.ndim else float(out)


def sphere_form_factor(q, sphere: SphereSpec, constants: PhysicalConstants = CODATA):
    """Fourier transform of the mass density of a homogeneous sphere at momentum ``q`` (kg m/s).

    Returns ``3 m j1(x)/x`` with ``x = q R / hbar``; equals the total mass at q = 0.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValidationError("q", "must be >= 0")
    out = sphere.mass * _three_j1_over_x(q * sphere.radius / constants.hbar)
    return out


# --------------------------------------------------------------------------- dCSL

@dataclass(frozen=True)
class DcslParams:
    """Dissipative CSL parameters; ``T_c = math.inf`` gives standard CSL (chi = 0)."""

    lambda_rate: float
    r_c: float
    T_c: float = math.inf
    m_a: float = DEFAULT_NUCLEAR_MASS_U * CODATA.atomic_mass_unit

    def __post_init__(self):
        _require_positive("lambda_rate", self.lambda_rate)
        _require_positive("r_c", self.r_c)
        _require_positive("T_c", self.T_c)
        _require_positive("m_a", self.m_a)

    def chi(self, constants: PhysicalConstants = CODATA) -> float:
        if math.isinf(self.T_c):
            return 0.0
        return (constants.hbar / self.r_c) ** 2 / (8.0 * self.m_a * constants.k_B * self.T_c)

    def r_c_prime(self, constants: PhysicalConstants = CODATA) -> float:
        return self.r_c * (1.0 + self.chi(constants))


def dcsl_rates(sphere: SphereSpec, p: DcslParams,
               constants: PhysicalConstants = CODATA) -> RatePrediction:
    """Diffusion constant and energy damping rate of a homogeneous sphere under dCSL.

    The damping rate is obtained as ``4 eta r_c^2 chi (1 + chi) m_a / m``
    applied to the closed-form eta; see :func:`dcsl_gamma_closed_form` for
    the equivalent temperature-explicit expression.
    """
    chi = p.chi(constants)
    R = sphere.radius
    m = sphere.mass
    y = R / (p.r_c * (1.0 + chi))
    mass_ratio = m / constants.m_nucleon
    eta = (3.0 * p.lambda_rate * mass_ratio**2 * (p.r_c / R) ** 2 * shape_K(y)
           / ((1.0 + chi) * R**2))
    gamma = 4.0 * eta * p.r_c**2 * chi * (1.0 + chi) * (p.m_a / m)
    return RatePrediction(eta=eta, gamma=gamma, chi=chi)


def dcsl_gamma_closed_form(sphere: SphereSpec, p: DcslParams,
                           constants: PhysicalConstants = CODATA) -> float:
    """gamma = 3 lambda hbar^2 m r_c^2 K / (2 k_B T_c m_0^2 R^4), independent of m_a except through chi."""
    if math.isinf(p.T_c):
        return 0.0
    chi = p.chi(constants)
    R = sphere.radius
    m = sphere.mass
    y = R / (p.r_c * (1.0 + chi))
    thermal = (constants.hbar / R) ** 2 / (constants.k_B * p.T_c)
    return (1.5 * p.lambda_rate * thermal * (m / constants.m_nucleon)
            * (p.r_c / R) ** 2 / constants.m_nucleon * shape_K(y))


def _radial_moment(integrand: Callable, u_max: float, panel: float,
                   max_panels: int, limit: int = 200) -> float:
    """Integrate ``integrand`` over [0, u_max] on fixed panels with adaptive quad on each."""
    n = int(math.ceil(u_max / panel))
    if n > max_panels:
        raise QuadratureError(f"needs {n} panels, budget is {max_panels}")
    edges = np.linspace(0.0, u_max, n + 1)
    parts = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            try:
                val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=limit)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"panel [{a:.4g}, {b:.4g}]: {exc}") from exc
            parts.append(val)
    return math.fsum(parts)


def dcsl_eta_quadrature(form_factor: Callable, p: DcslParams,
                        constants: PhysicalConstants = CODATA,
                        length_scale: Optional[float] = None,
                        u_max: float = 9.0, max_panels: int = 20000) -> float:
    """Diffusion constant of an isotropic body by direct numerical integration over momentum.

    ``form_factor(q)`` returns the Fourier-transformed mass density (kg) at
    momentum magnitude ``q``. The momentum integral is reduced to a radial one
    in ``u = q r_c (1 + chi) / hbar`` (the q_x^2 weight averages to q^2/3).
    ``length_scale`` (the body size) sets the panel width so that each panel
    spans at most half an oscillation of the form factor.
    """
    chi = p.chi(constants)
    rcp = p.r_c * (1.0 + chi)
    q_unit = constants.hbar / rcp
    m0 = constants.m_nucleon

    def integrand(u):
        f = form_factor(q_unit * u) / m0
        return u**4 * f * f * math.exp(-u * u)

    panel = 0.5
    if length_scale is not None:
        panel = min(panel, math.pi * rcp / length_scale)
    moment = _radial_moment(integrand, u_max, panel, max_panels)
    return 4.0 / (3.0 * SQRT_PI) * p.lambda_rate * (p.r_c / rcp) ** 3 / rcp**2 * moment


def dcsl_eta_sphere_quadrature(sphere: SphereSpec, p: DcslParams,
                               constants: PhysicalConstants = CODATA) -> float:
    return dcsl_eta_quadrature(lambda q: sphere_form_factor(q, sphere, constants), p,
                               constants, length_scale=sphere.radius)


def dcsl_eta_granular(p: DcslParams, m: float, constants: PhysicalConstants = CODATA,
                      lattice_constant: Optional[float] = None) -> float:
    """Diffusion constant when r_c (1 + chi) is much smaller than the lattice constant.

    Linear in the total mass ``m``. Issues a :class:`RegimeWarning` when
    ``lattice_constant`` is given and is below 10 r_c (1 + chi).
    """
    chi = p.chi(constants)
    if lattice_constant is not None and lattice_constant < 10.0 * p.r_c * (1.0 + chi):
        warnings.warn(f"lattice constant {lattice_constant:.3g} m < 10 r_c' "
                      f"({10 * p.r_c * (1 + chi):.3g} m); granular limit not valid",
                      RegimeWarning, stacklevel=2)
    m0 = constants.m_nucleon
    return p.lambda_rate * (p.m_a / m0) * (m / m0) / (2.0 * (1.0 + chi) ** 5 * p.r_c**2)


# --------------------------------------------------------------------------- dDP

@dataclass(frozen=True)
class DdpState:
    """Resolved reference mass and dissipation parameter of a dDP parameter set."""

    m_a: float
    chi: float
    R0_prime: float
    iterations: int = 0


@dataclass(frozen=True)
class DdpParams:
    """Dissipative Diosi-Penrose parameters; ``T_DP = math.inf`` gives standard DP."""

    R0: float
    T_DP: float = math.inf
    mass_policy: MassPolicy = field(default_factory=MassPolicy.fixed_nuclear)
    lattice_constant: Optional[float] = None

    def __post_init__(self):
        _require_positive("R0", self.R0)
        _require_positive("T_DP", self.T_DP)
        if self.lattice_constant is not None:
            _require_positive("lattice_constant", self.lattice_constant)

    def resolve(self, constants: PhysicalConstants = CODATA) -> DdpState:
        if not self.mass_policy.self_consistent:
            m_a = reference_mass(self.mass_policy, constants=constants)
            if math.isinf(self.T_DP):
                return DdpState(m_a, 0.0, self.R0)
            chi = (constants.hbar / self.R0) ** 2 / (8.0 * m_a * constants.k_B * self.T_DP)
            return DdpState(m_a, chi, self.R0 * (1.0 + chi))
        return _solve_sphere_policy(self, constants)

    def chi_dp(self, constants: PhysicalConstants = CODATA) -> float:
        return self.resolve(constants).chi

    def R0_prime(self, constants: PhysicalConstants = CODATA) -> float:
        return self.resolve(constants).R0_prime

    def reference_mass(self, constants: PhysicalConstants = CODATA) -> float:
        return self.resolve(constants).m_a


def _solve_sphere_policy(p: DdpParams, constants: PhysicalConstants,
                         max_iter: int = 200) -> DdpState:
    """Solve chi(1+chi)^3 = A with A = hbar^2 / (8 (4pi/3) rho R0^5 k_B T).

    This is the joint condition chi = hbar^2/(8 m_a R0^2 k_B T) and
    m_a = (4pi/3) rho (R0 (1+chi))^3. Newton iteration in log(chi).
    """
    density = p.mass_policy.density
    if math.isinf(p.T_DP):
        return DdpState(reference_mass(p.mass_policy, p.R0, constants), 0.0, p.R0)
    cell = 4.0 * math.pi / 3.0 * density * p.R0**3
    A = (constants.hbar / p.R0) ** 2 / (8.0 * cell * constants.k_B * p.T_DP)
    if A == 0.0:
        return DdpState(cell, 0.0, p.R0)
    log_a = math.log(A)
    t = log_a if A < 1.0 else 0.25 * log_a
    for it in range(1, max_iter + 1):
        chi = math.exp(t)
        g = t + 3.0 * math.log1p(chi) - log_a
        step = g / (1.0 + 3.0 * chi / (1.0 + chi))
        t -= step
        if abs(step) < 1e-15 * max(1.0, abs(t)):
            break
    else:
        raise FixedPointError(f"reference-mass fixed point did not converge in {max_iter} iterations "
                              f"(R0={p.R0:.3g}, T_DP={p.T_DP:.3g})")
    chi = math.exp(t)
    R0p = p.R0 * (1.0 + chi)
    m_a = 4.0 * math.pi / 3.0 * density * R0p**3
    chi_check = (constants.hbar / p.R0) ** 2 / (8.0 * m_a * constants.k_B * p.T_DP)
    if abs(chi_check - chi) > 1e-12 * chi:
        raise FixedPointError(f"fixed-point residual {abs(chi_check - chi) / chi:.2e} too large")
    return DdpState(m_a, chi, R0p, it)


def _ddp_gamma_from_eta(eta: float, p: DdpParams, state: DdpState, m: float) -> float:
    return 4.0 * eta * p.R0**2 * state.chi * (1.0 + state.chi) * (state.m_a / m)


def ddp_rates_uniform(sphere: SphereSpec, p: DdpParams,
                      constants: PhysicalConstants = CODATA) -> RatePrediction:
    """dDP rates for a homogeneous sphere whose R0' exceeds the interatomic distance.

    eta = G m^2 I(R/R0') / (sqrt(pi) hbar R^3).
    """
    state = p.resolve(constants)
    notes = ()
    if p.lattice_constant is not None and state.R0_prime < p.lattice_constant:
        notes = (f"R0'={state.R0_prime:.3g} m below lattice constant; uniform-density limit not valid",)
    R = sphere.radius
    m = sphere.mass
    eta = (constants.G * m / constants.hbar) * (m / R**3) * shape_I(R / state.R0_prime) / SQRT_PI
    gamma = _ddp_gamma_from_eta(eta, p, state, m)
    return RatePrediction(eta=eta, gamma=gamma, chi=state.chi, warnings=notes)


def ddp_eta_granular(p: DdpParams, m: float, constants: PhysicalConstants = CODATA,
                     state: Optional[DdpState] = None) -> float:
    """Granular-limit dDP diffusion constant, G m_a m / (6 hbar sqrt(pi) R0'^3)."""
    state = state or p.resolve(constants)
    if p.lattice_constant is not None and p.lattice_constant < 10.0 * state.R0_prime:
        warnings.warn(f"lattice constant {p.lattice_constant:.3g} m < 10 R0' "
                      f"({10 * state.R0_prime:.3g} m); granular limit not valid",
                      RegimeWarning, stacklevel=2)
    return (constants.G * state.m_a / constants.hbar) * m / (6.0 * SQRT_PI * state.R0_prime**3)


def ddp_gamma(p: DdpParams, sphere: SphereSpec, regime: str = "uniform",
              constants: PhysicalConstants = CODATA) -> float:
    """Energy damping rate of the dDP model with eta from the chosen matter regime."""
    if regime == "uniform":
        return ddp_rates_uniform(sphere, p, constants).gamma
    if regime == "granular":
        state = p.resolve(constants)
        eta = ddp_eta_granular(p, sphere.mass, constants, state)
        return _ddp_gamma_from_eta(eta, p, state, sphere.mass)
    raise ValidationError("regime", f"expected 'uniform' or 'granular', got {regime!r}")


def ddp_rates(sphere: SphereSpec, p: DdpParams, regime: str = "uniform",
              constants: PhysicalConstants = CODATA) -> RatePrediction:
    if regime == "uniform":
        return ddp_rates_uniform(sphere, p, constants)
    state = p.resolve(constants)
    eta = ddp_eta_granular(p, sphere.mass, constants, state)
    return RatePrediction(eta=eta, gamma=_ddp_gamma_from_eta(eta, p, state, sphere.mass),
                          chi=state.chi)


# --------------------------------------------------------------------------- CGF

@dataclass(frozen=True)
class CgfParams:
    """Complex-gravity-fluctuation parameters.

    ``corr_rate`` is the exponential time-correlation rate (1/s). ``None``
    selects the light-speed mode where the rate is c / r_c.
    """

    xi: float
    r_c: float
    corr_rate: Optional[float] = None

    def __post_init__(self):
        if not self.xi >= 0:
            raise ValidationError("xi", f"must be >= 0, got {self.xi!r}")
        _require_positive("r_c", self.r_c)
        if self.corr_rate is not None:
            _require_positive("corr_rate", self.corr_rate)

    @property
    def light_speed(self) -> bool:
        return self.corr_rate is None

    def rate(self, constants: PhysicalConstants = CODATA) -> float:
        if self.corr_rate is None:
            return constants.c / self.r_c
        return self.corr_rate


def cgf_gamma(sphere: SphereSpec, p: CgfParams, constants: PhysicalConstants = CODATA) -> float:
    """Dissipation rate from the imaginary part of the metric-fluctuation correlator.

    gamma = 6 r_c^2 c^2 xi^2 m c^2 K(R/r_c) / ((4 pi)^(3/2) R^4 rate^2 hbar)
    """
    R = sphere.radius
    rate = p.rate(constants)
    rest_rate = sphere.mass * constants.c**2 / constants.hbar
    geometry = (p.r_c / R) ** 2 * (constants.c / (rate * R)) ** 2
    return 6.0 * p.xi**2 * rest_rate * geometry * shape_K(R / p.r_c) / (4.0 * math.pi) ** 1.5
