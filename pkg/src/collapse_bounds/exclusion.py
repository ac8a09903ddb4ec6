"""Exclusion curves: invert model damping rates against a measured bound gamma0.

A curve point (x, y) lies on the boundary where the predicted damping equals
gamma0; parameters predicting more damping are excluded. Grid points where
no parameter value in range is excluded carry ``y = None``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .collapse_models import (CgfParams, DcslParams, DdpParams, cgf_gamma, dcsl_rates,
                              ddp_gamma)
from .core import (CODATA, MassPolicy, NumericalError, PhysicalConstants, SphereSpec,
                   ValidationError, _require_positive)

T_RANGE = (1e-30, 1e10)


class NonMonotoneError(NumericalError):
    pass


@dataclass(frozen=True)
class ExclusionCurve:
    model: str
    abscissa_name: str
    ordinate_name: str
    points: tuple
    bound_gamma0: float
    fixed_params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValidationError("points", "abscissa must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return np.array([x for x, _ in self.points])

    @property
    def y(self) -> np.ndarray:
        """Ordinates with missing bounds as NaN."""
        return np.array([math.nan if y is None else y for _, y in self.points])


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if not 0 < lo < hi or n < 2:
        raise ValidationError("grid", f"need 0 < min < max and n >= 2, got ({lo}, {hi}, {n})")
    return np.geomspace(lo, hi, int(n))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_sorted(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(grid <= 0):
        raise ValidationError("grid", "must be a non-empty 1-D array of positive values")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid", "must be sorted ascending without duplicates")
    return grid


# ------------------------------------------------------------------------ dCSL

def dcsl_lambda_bound(r_c: float, T_c: float, gamma0: float, sphere: SphereSpec,
                      m_a: float, constants: PhysicalConstants = CODATA) -> Optional[float]:
    """Largest allowed collapse rate at (r_c, T_c); None when gamma does not depend on lambda."""
    _require_positive("gamma0", gamma0)
    per_lambda = dcsl_rates(sphere, DcslParams(1.0, r_c, T_c, m_a), constants).gamma
    if per_lambda == 0.0:
        return None
    return gamma0 / per_lambda


def dcsl_curve(r_c_grid, T_c: float, gamma0: float, sphere: SphereSpec, m_a: float,
               constants: PhysicalConstants = CODATA, workers: int = 1) -> ExclusionCurve:
    grid = _check_sorted(r_c_grid)
    ys = _map(lambda rc: dcsl_lambda_bound(float(rc), T_c, gamma0, sphere, m_a, constants),
              grid, workers)
    points = tuple((float(x), y) for x, y in zip(grid, ys))
    meta = {}
    finite = [(i, y) for i, y in enumerate(ys) if y is not None]
    if finite:
        i_min = min(finite, key=lambda iy: iy[1])[0]
        lo = grid[max(i_min - 1, 0)]
        hi = grid[min(i_min + 1, len(grid) - 1)]
        rc_min, lam_min = float(grid[i_min]), float(ys[i_min])
        if lo < hi and 0 < i_min < len(grid) - 1:
            res = optimize.minimize_scalar(
                lambda lr: math.log(dcsl_lambda_bound(math.exp(lr), T_c, gamma0, sphere, m_a,
                                                      constants)),
                bounds=(math.log(lo), math.log(hi)), method="bounded",
                options={"xatol": 1e-10})
            rc_min, lam_min = math.exp(res.x), math.exp(res.fun)
        meta = {"min_r_c": rc_min, "min_lambda": lam_min, "min_r_c_over_R": rc_min / sphere.radius,
                "grid_min_r_c": float(grid[i_min]), "grid_min_lambda": float(ys[i_min])}
    return ExclusionCurve(
        model="dcsl", abscissa_name="r_c [m]", ordinate_name="lambda [1/s]", points=points,
        bound_gamma0=gamma0,
        fixed_params={"T_c": T_c, "m_a": m_a, "sphere": sphere.to_dict()}, metadata=meta)


# ------------------------------------------------------------------------- dDP

def ddp_damping(R0: float, T_DP: float, sphere: SphereSpec, mass_policy: MassPolicy,
                regime: str = "uniform", constants: PhysicalConstants = CODATA,
                require_fit: bool = True) -> float:
    """dDP damping rate at (R0, T_DP).

    With the sphere reference-mass policy and ``require_fit``, parameter
    points whose reference sphere (radius R0') does not fit inside the particle
    predict nothing and return 0.
    """
    p = DdpParams(R0, T_DP, mass_policy)
    if require_fit and mass_policy.self_consistent:
        if p.resolve(constants).R0_prime > sphere.radius:
            return 0.0
    return ddp_gamma(p, sphere, regime, constants)


def ddp_temperature_bound(R0: float, gamma0: float, sphere: SphereSpec, mass_policy: MassPolicy,
                          regime: str = "uniform", constants: PhysicalConstants = CODATA,
                          t_range: tuple = T_RANGE, scan_per_decade: int = 4,
                          log_tol: float = 1e-12, require_fit: bool = True) -> Optional[float]:
    """Largest collapse-field temperature excluded at regularisation length ``R0``.

    The temperature range is scanned downward on a log grid until the damping
    first reaches ``gamma0``; the crossing is then bisected in log T to
    ``log_tol``. The damping must grow monotonically as T decreases over the
    scanned part above the crossing, otherwise :class:`NonMonotoneError` is
    raised. Returns None when no temperature in ``t_range`` is excluded.
    """
    _require_positive("R0", R0)
    _require_positive("gamma0", gamma0)
    t_lo, t_hi = t_range
    if not 0 < t_lo < t_hi:
        raise ValidationError("t_range", "need 0 < min < max")

    def excess(log_t: float) -> float:
        g = ddp_damping(R0, math.exp(log_t), sphere, mass_policy, regime, constants, require_fit)
        return g / gamma0 - 1.0

    n = int(math.ceil(math.log10(t_hi / t_lo) * scan_per_decade))
    log_ts = np.linspace(math.log(t_hi), math.log(t_lo), n + 1)
    values = []
    bracket = None
    for i, lt in enumerate(log_ts):
        v = excess(float(lt))
        values.append(v)
        if v >= 0.0:
            if i == 0:
                return t_hi
            bracket = (float(lt), float(log_ts[i - 1]))
            break
    vals = np.array(values)
    # damping must not decrease as T decreases above the crossing
    decreasing = np.diff(vals) < -1e-12 * np.maximum(np.abs(vals[1:]), 1.0)
    if bracket is not None and np.any(decreasing[:-1]):
        raise NonMonotoneError(f"damping is not monotone in T above the crossing at R0={R0:.3g} m")
    if bracket is None:
        if not np.any(decreasing):
            return None
        # a local maximum was passed: make sure it does not poke above gamma0
        k = int(np.argmax(vals))
        a = float(log_ts[min(k + 1, n)])
        b = float(log_ts[max(k - 1, 0)])
        res = optimize.minimize_scalar(lambda lt: -excess(lt), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-8})
        if -res.fun < 0.0:
            return None
        bracket = (float(res.x), b)
    lo, hi = bracket  # excess(lo) >= 0 > excess(hi)
    for _ in range(400):
        if hi - lo <= log_tol:
            break
        mid = 0.5 * (lo + hi)
        if excess(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalError("temperature bisection did not converge")
    return math.exp(0.5 * (lo + hi))


def ddp_curve(R0_grid, gamma0: float, sphere: SphereSpec, mass_policy: MassPolicy,
              regime: str = "uniform", constants: PhysicalConstants = CODATA,
              workers: int = 1, require_fit: bool = True,
              t_range: tuple = T_RANGE) -> ExclusionCurve:
    grid = _check_sorted(R0_grid)
    ys = _map(lambda r0: ddp_temperature_bound(float(r0), gamma0, sphere, mass_policy, regime,
                                               constants, t_range=t_range,
                                               require_fit=require_fit),
              grid, workers)
    points = tuple((float(x), y) for x, y in zip(grid, ys))
    finite = [(x, y) for x, y in points if y is not None]
    meta = {}
    if finite:
        x_max, y_max = max(finite, key=lambda xy: xy[1])
        meta = {"ceiling_T": y_max, "ceiling_R0": x_max,
                "largest_bounded_R0": max(x for x, _ in finite)}
    return ExclusionCurve(
        model="ddp", abscissa_name="R0 [m]", ordinate_name="T_DP [K]", points=points,
        bound_gamma0=gamma0,
        fixed_params={"mass_policy": mass_policy.to_dict(), "regime": regime,
                      "require_fit": require_fit, "sphere": sphere.to_dict()},
        metadata=meta)


# ------------------------------------------------------------------------- CGF

def cgf_xi_bound(r_c: float, gamma0: float, sphere: SphereSpec,
                 corr_rate: Optional[float] = None,
                 constants: PhysicalConstants = CODATA) -> Optional[float]:
    """Largest allowed fluctuation magnitude; ``corr_rate=None`` is the light-speed mode."""
    _require_positive("gamma0", gamma0)
    unit = cgf_gamma(sphere, CgfParams(1.0, r_c, corr_rate), constants)
    if unit == 0.0:
        return None
    return math.sqrt(gamma0 / unit)


def cgf_curve(r_c_grid, gamma0: float, sphere: SphereSpec, corr_rate: Optional[float] = None,
              constants: PhysicalConstants = CODATA, workers: int = 1) -> ExclusionCurve:
    grid = _check_sorted(r_c_grid)
    ys = _map(lambda rc: cgf_xi_bound(float(rc), gamma0, sphere, corr_rate, constants),
              grid, workers)
    return ExclusionCurve(
        model="cgf", abscissa_name="r_c [m]", ordinate_name="xi [1]",
        points=tuple((float(x), y) for x, y in zip(grid, ys)), bound_gamma0=gamma0,
        fixed_params={"corr_rate": "light_speed" if corr_rate is None else corr_rate,
                      "sphere": sphere.to_dict()})
