"""From ringdown and linewidth-vs-pressure data to a zero-pressure damping bound.

Also holds the auxiliary estimates used to sanity-check the experiment: free
molecular (Epstein) gas damping, thermomolecular pressure correction, and the
image-method trap frequency of a levitated dipole.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .core import CODATA, GasSpec, NumericalError, PhysicalConstants, SphereSpec, ValidationError

MBAR = 100.0  # Pa


class FitError(NumericalError):
    pass


@dataclass(frozen=True)
class RingdownSeries:
    t: np.ndarray
    amplitude: np.ndarray
    sigma: np.ndarray
    noise_floor: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        a = np.asarray(self.amplitude, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if not (t.shape == a.shape == s.shape) or t.ndim != 1:
            raise ValidationError("samples", "t, amplitude and sigma must be 1-D and equally long")
        if len(t) < 2:
            raise ValidationError("samples", "need at least 2 samples")
        if np.any(np.diff(t) <= 0):
            i = int(np.argmax(np.diff(t) <= 0)) + 1
            raise ValidationError("t", f"times must be strictly increasing (sample {i})")
        if np.any(s <= 0):
            raise ValidationError("sigma", "all sigmas must be > 0")
        if np.any(a < 0):
            raise ValidationError("amplitude", "amplitudes must be >= 0")
        if self.noise_floor < 0:
            raise ValidationError("noise_floor", "must be >= 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "sigma", s)

    @property
    def effective_sigma(self) -> np.ndarray:
        return np.hypot(self.sigma, self.noise_floor)


@dataclass(frozen=True)
class RingdownFit:
    amplitude0: float
    tau: float
    tau_sigma: float
    chi2_reduced: float
    iterations: int
    warnings: tuple = field(default=())

    @property
    def gamma(self) -> float:
        return 2.0 / self.tau

    @property
    def gamma_sigma(self) -> float:
        return 2.0 * self.tau_sigma / self.tau**2

    @property
    def gamma_linewidth_hz(self) -> float:
        return self.gamma / (2.0 * math.pi)


def _log_linear_start(t, a, s):
    pos = a > 0
    if pos.sum() < 2:
        raise FitError("need at least two positive amplitudes to initialise the fit")
    # weights for log(a): sigma_log = sigma/a
    w = (a[pos] / s[pos]) ** 2
    X = np.column_stack([np.ones(pos.sum()), t[pos]])
    coef = np.linalg.solve((X.T * w) @ X, (X.T * w) @ np.log(a[pos]))
    return math.exp(coef[0]), -coef[1]


def fit_ringdown(series: RingdownSeries, max_iter: int = 200, tau_cap: float = 1e12,
                 scale_covariance: bool = True) -> RingdownFit:
    """Weighted least-squares fit of A(t) = A0 exp(-t/tau).

    Levenberg-Marquardt on (A0, k = 1/tau) from a weighted log-linear start;
    the damping factor is multiplied by 10 when a step increases chi^2 and
    divided by 10 otherwise. The tau uncertainty comes from the inverse
    normal matrix, optionally scaled by the reduced chi^2.
    """
    t, a = series.t, series.amplitude
    s = series.effective_sigma
    notes = []
    snr = float(np.max(a) / np.median(s))
    if snr < 2.0:
        raise FitError(f"series is noise dominated (peak SNR {snr:.2f} < 2)")
    # work in units of the peak amplitude so the fit does not depend on the amplitude scale
    scale = float(np.max(a))
    a, s = a / scale, s / scale

    # time origin at the first sample keeps A0 and k weakly correlated
    t0 = t[0]
    tt = t - t0
    A0, k = _log_linear_start(tt, a, s)
    w = 1.0 / s**2

    def chi2(A0, k):
        r = a - A0 * np.exp(-k * tt)
        return float(np.sum(w * r * r))

    lam = 1e-3
    cur = chi2(A0, k)
    it = 0
    for it in range(1, max_iter + 1):
        e = np.exp(-k * tt)
        r = a - A0 * e
        J = np.column_stack([e, -A0 * tt * e])
        JTJ = (J.T * w) @ J
        g = (J.T * w) @ r
        while True:
            step = np.linalg.solve(JTJ + lam * np.diag(np.diag(JTJ)), g)
            nA0, nk = A0 + step[0], k + step[1]
            new = chi2(nA0, nk)
            if new <= cur:
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if lam > 1e15:
                break
        converged = (abs(step[1]) <= 1e-14 * abs(nk) + 1e-300
                     and abs(step[0]) <= 1e-14 * abs(nA0))
        if new <= cur:
            A0, k, cur = nA0, nk, new
        if converged or lam > 1e15:
            break
    else:
        raise FitError(f"ringdown fit did not converge in {max_iter} iterations")
    # chi^2 comparisons only resolve the minimum to ~sqrt(eps); polish with plain Gauss-Newton
    for _ in range(3):
        e = np.exp(-k * tt)
        J = np.column_stack([e, -A0 * tt * e])
        step = np.linalg.solve((J.T * w) @ J, (J.T * w) @ (a - A0 * e))
        if not (abs(step[1]) < 1e-6 * abs(k) and abs(step[0]) < 1e-6 * abs(A0)):
            break
        A0, k = A0 + step[0], k + step[1]
    cur = chi2(A0, k)

    if not k > 0 or 1.0 / k > tau_cap:
        raise FitError("series shows no decay (flat or growing); tau exceeds cap")
    tau = 1.0 / k
    e = np.exp(-k * tt)
    J = np.column_stack([e, -A0 * tt * e])
    cov = np.linalg.inv((J.T * w) @ J)
    dof = len(t) - 2
    chi2_red = cur / dof if dof > 0 else math.nan
    if scale_covariance and dof > 0:
        cov = cov * chi2_red
    tau_sigma = math.sqrt(cov[1, 1]) / k**2
    A0 = A0 * math.exp(k * t0) * scale
    if len(t) < 4:
        notes.append(f"only {len(t)} samples; at least 4 recommended")
    if (t[-1] - t[0]) < 0.3 * tau:
        notes.append(f"samples span {(t[-1] - t[0]) / tau:.2f} tau; at least 0.3 tau recommended")
    return RingdownFit(A0, tau, tau_sigma, chi2_red, it, tuple(notes))


def thermomolecular_correct(gauge_pressure, gas: GasSpec):
    """Pressure at the cold particle from a warm gauge reading: P = P0 sqrt(T/T0)."""
    p = np.asarray(gauge_pressure, dtype=float)
    if np.any(p < 0):
        raise ValidationError("gauge_pressure", "must be >= 0")
    out = p * math.sqrt(gas.temperature / gas.gauge_temperature)
    return out if out.ndim else float(out)


def thermal_velocity(gas: GasSpec, constants: PhysicalConstants = CODATA) -> float:
    return math.sqrt(8.0 * constants.k_B * gas.temperature / (math.pi * gas.molecular_mass))


def epstein_linewidth(pressure_mbar, sphere: SphereSpec, gas: GasSpec,
                      constants: PhysicalConstants = CODATA):
    """Free-molecular gas damping linewidth in Hz: (1/pi)(1 + 8/pi) P / (rho R v_th)."""
    p = np.asarray(pressure_mbar, dtype=float)
    if np.any(p < 0):
        raise ValidationError("pressure", "must be >= 0")
    v = thermal_velocity(gas, constants)
    out = (1.0 + 8.0 / math.pi) / math.pi * (p * MBAR) / (sphere.density * sphere.radius * v)
    return out if out.ndim else float(out)


def trap_frequency(sphere: SphereSpec, constants: PhysicalConstants = CODATA):
    """Image-method estimate (f0 in Hz, equilibrium height z0 in m) for a dipole above a superconducting plane."""
    if sphere.saturation_field is None:
        raise ValidationError("saturation_field", "required for the trap-frequency estimate")
    moment = sphere.saturation_field / constants.mu_0 * sphere.volume
    z0 = (3.0 * constants.mu_0 * moment**2 / (64.0 * math.pi * sphere.mass * constants.g)) ** 0.25
    f0 = math.sqrt(constants.g / z0) / math.pi
    return f0, z0


# ----------------------------------------------------------------- pressure fit

@dataclass(frozen=True)
class PressureSeries:
    pressure: np.ndarray        # mbar, at the particle
    linewidth: np.ndarray       # Hz
    sigma: np.ndarray           # Hz
    confidence_level: float = 0.90

    def __post_init__(self):
        p = np.asarray(self.pressure, dtype=float)
        y = np.asarray(self.linewidth, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if not (p.shape == y.shape == s.shape) or p.ndim != 1:
            raise ValidationError("points", "pressure, linewidth and sigma must be 1-D and equally long")
        if np.any(p <= 0):
            raise ValidationError("pressure", "all pressures must be > 0")
        if np.any(s <= 0):
            raise ValidationError("sigma", "all sigmas must be > 0")
        if not 0.5 < self.confidence_level < 1.0:
            raise ValidationError("confidence_level", "must lie in (0.5, 1)")
        object.__setattr__(self, "pressure", p)
        object.__setattr__(self, "linewidth", y)
        object.__setattr__(self, "sigma", s)


@dataclass(frozen=True)
class DampingBound:
    gamma0_linewidth_hz: float
    confidence_level: float
    fit_coefficients: tuple
    covariance: np.ndarray
    quantile: float
    chi2_reduced: float
    quantile_family: str = "normal"
    dof: int = 0

    @property
    def gamma0(self) -> float:
        """Bound as an angular damping rate (1/s)."""
        return 2.0 * math.pi * self.gamma0_linewidth_hz

    def band(self, pressure) -> tuple:
        """Fitted linewidth and two-sided band half-width at the bound's confidence level."""
        p = np.asarray(pressure, dtype=float)
        X = np.stack([np.ones_like(p), p, p * p], axis=-1)
        fit = X @ np.asarray(self.fit_coefficients)
        var = np.einsum("...i,ij,...j->...", X, self.covariance, X)
        z2 = _quantile(0.5 + 0.5 * self.confidence_level, self.quantile_family, self.dof)
        return fit, z2 * np.sqrt(var)


def _quantile(level: float, family: str, dof: int) -> float:
    if family == "normal":
        return float(stats.norm.ppf(level))
    if family == "t":
        return float(stats.t.ppf(level, dof))
    raise ValidationError("quantile_family", f"expected 'normal' or 't', got {family!r}")


def fit_pressure_extrapolation(series: PressureSeries, quantile_family: str = "normal",
                               scale_covariance: bool = True) -> DampingBound:
    """Weighted quadratic fit linewidth = c0 + c1 P + c2 P^2 and a one-sided upper bound at P = 0.

    The bound is c0 + z sigma(c0), floored at zero, with z the one-sided
    quantile of ``series.confidence_level``. With ``scale_covariance`` the
    coefficient covariance is multiplied by the reduced chi^2.
    """
    p, y, s = series.pressure, series.linewidth, series.sigma
    if len(p) < 4:
        raise ValidationError("points", f"need at least 4 points, got {len(p)}")
    # scale pressure so the normal matrix is well conditioned
    ps = float(np.max(p))
    X = np.column_stack([np.ones_like(p), p / ps, (p / ps) ** 2])
    Xw = X / s[:, None]
    if np.linalg.matrix_rank(Xw) < 3:
        raise ValidationError("pressure", "design matrix is rank deficient (need >= 3 distinct pressures)")
    coef_s, *_ = np.linalg.lstsq(Xw, y / s, rcond=None)
    cov_s = np.linalg.inv(Xw.T @ Xw)
    scale = np.array([1.0, 1.0 / ps, 1.0 / ps**2])
    coef = coef_s * scale
    cov = cov_s * np.outer(scale, scale)
    resid = (y - X @ coef_s) / s
    dof = len(p) - 3
    chi2_red = float(resid @ resid / dof) if dof > 0 else math.nan
    if scale_covariance and dof > 0:
        cov = cov * chi2_red
    z = _quantile(series.confidence_level, quantile_family, dof)
    upper = max(0.0, float(coef[0] + z * math.sqrt(cov[0, 0])))
    return DampingBound(upper, series.confidence_level, tuple(float(c) for c in coef), cov, z,
                        chi2_red, quantile_family, dof)


def synthetic_ringdown(tau: float = 1.19e4, amplitude0: float = 1.0, duration: Optional[float] = None,
                       n: int = 200, rel_noise: float = 0.0, noise_floor: float = 0.0,
                       seed: int = 0) -> RingdownSeries:
    """Exponential decay sampled on a uniform grid with optional relative Gaussian noise."""
    duration = 2.0 * tau if duration is None else duration
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, duration, n)
    clean = amplitude0 * np.exp(-t / tau)
    sigma = np.maximum(rel_noise * clean, 1e-12 * amplitude0) if rel_noise > 0 else 1e-3 * clean + 1e-12
    a = clean + (rng.normal(0.0, 1.0, n) * sigma if rel_noise > 0 else 0.0)
    return RingdownSeries(t, np.abs(a), sigma, noise_floor)


def synthetic_pressure(coefficients: Sequence[float] = (5e-6, 2.1, 0.05),
                       pressures: Optional[Sequence[float]] = None, rel_sigma: float = 0.03,
                       abs_sigma: float = 2e-6, seed: int = 0,
                       confidence_level: float = 0.90) -> PressureSeries:
    """Linewidth-vs-pressure points drawn from a known quadratic with Gaussian errors."""
    if pressures is None:
        pressures = np.geomspace(1e-5, 1e-3, 12)
    p = np.asarray(pressures, dtype=float)
    c0, c1, c2 = coefficients
    clean = c0 + c1 * p + c2 * p * p
    sigma = np.hypot(rel_sigma * clean, abs_sigma)
    rng = np.random.default_rng(seed)
    y = clean + rng.normal(0.0, 1.0, len(p)) * sigma
    return PressureSeries(p, y, sigma, confidence_level)
