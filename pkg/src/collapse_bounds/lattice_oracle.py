"""Brute-force lattice sums for the granular limits of dCSL and dDP.

The body is a ball of point masses on a simple cubic lattice. Both
diffusion constants are evaluated as explicit double sums over all site
pairs, with exactly rounded summation (``math.fsum``), so they serve as an
independent check of the granular closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import roots_legendre, spherical_jn

from .collapse_models import DcslParams, DdpParams, QuadratureError
from .core import CODATA, NumericalError, PhysicalConstants, ValidationError, _require_positive

DEFAULT_MAX_SITES = 1_000_000
DEFAULT_MAX_PAIRS = 50_000_000


class BudgetExceeded(NumericalError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    lattice_constant: float
    n_max: int
    cell_mass: float
    max_sites: int = DEFAULT_MAX_SITES

    def __post_init__(self):
        _require_positive("lattice_constant", self.lattice_constant)
        _require_positive("cell_mass", self.cell_mass)
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError("n_max", f"must be an integer >= 1, got {self.n_max!r}")

    @property
    def radius(self) -> float:
        return self.lattice_constant * self.n_max


def enumerate_sites(spec: LatticeSpec) -> np.ndarray:
    """Integer triples with n_x^2 + n_y^2 + n_z^2 <= n_max^2, in lexicographic order."""
    n = int(spec.n_max)
    if 4.0 * math.pi / 3.0 * n**3 > 1.1 * spec.max_sites:
        raise BudgetExceeded(f"n_max={n} gives ~{4.19 * n**3:.3g} sites, cap is {spec.max_sites}")
    r = np.arange(-n, n + 1)
    grid = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = grid[(grid**2).sum(axis=1) <= n * n]
    if len(sites) > spec.max_sites:
        raise BudgetExceeded(f"{len(sites)} sites exceed cap {spec.max_sites}")
    return sites


def _pair_sum(sites: np.ndarray, term, max_pairs: int) -> float:
    """fsum of ``term(delta)`` over all ordered site pairs; ``delta`` is an (N, 3) int array."""
    n = len(sites)
    if n * n > max_pairs:
        raise BudgetExceeded(f"{n}^2 = {n * n} pairs exceed budget {max_pairs}; use a smaller n_max")
    chunks = [term(sites - s) for s in sites]
    return math.fsum(np.concatenate(chunks))


def dcsl_eta_lattice(spec: LatticeSpec, p: DcslParams, constants: PhysicalConstants = CODATA,
                     sites: Optional[np.ndarray] = None,
                     max_pairs: int = DEFAULT_MAX_PAIRS) -> float:
    """dCSL diffusion constant of the lattice ball from the full Gaussian pair sum.

    eta = lambda (m_a/m_0)^2 r_c^3 / (4 r_c'^5) * sum_pairs (2 - alpha^2 dn_x^2) exp(-alpha^2 |dn|^2 / 4)
    with alpha = a / r_c' and r_c' = r_c (1 + chi). ``sites`` overrides the
    enumerated ball (e.g. a single site at the origin).
    """
    if sites is None:
        sites = enumerate_sites(spec)
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 3)
    rcp = p.r_c_prime(constants)
    alpha2 = (spec.lattice_constant / rcp) ** 2

    def term(d):
        dx2 = d[:, 0] ** 2
        return (2.0 - alpha2 * dx2) * np.exp(-0.25 * alpha2 * (d**2).sum(axis=1))

    total = _pair_sum(sites, term, max_pairs)
    mass_ratio = spec.cell_mass / constants.m_nucleon
    return p.lambda_rate * mass_ratio**2 * (p.r_c / rcp) ** 3 / (4.0 * rcp**2) * total


# ---------------------------------------------------------------- dDP pair kernel

def _gl_panels(u_max: float, n_panels: int, order: int):
    x, w = roots_legendre(order)
    edges = np.linspace(0.0, u_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _kernel_moments(delta: np.ndarray, u_max: float, n_panels: int, order: int):
    nodes, weights = _gl_panels(u_max, n_panels, order)
    base = weights * nodes**2 * np.exp(-nodes**2)
    A = np.empty(len(delta))
    B = np.empty(len(delta))
    for i, d in enumerate(delta):
        z = nodes * d
        A[i] = math.fsum(base * (spherical_jn(1, z) / z))
        B[i] = -math.fsum(base * spherical_jn(2, z))
    return 4.0 * math.pi * A, 4.0 * math.pi * B


def ddp_kernel_moments(delta, u_max: float = 9.0, order: int = 20,
                       rtol: float = 1e-12, max_refine: int = 4):
    """Radial integrals A(delta), B(delta) of the dDP pair kernel.

    For a dimensionless separation vector d (units of R0'), the kernel
    k(d) = int d^3u exp(i u.d) exp(-u^2) u_x^2/u^2 equals A(|d|) + B(|d|) d_x^2/|d|^2
    after the angular integration. Panels of Gauss-Legendre nodes are refined
    until two successive levels agree to ``rtol`` relative to the diagonal
    value pi^(3/2)/3.
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if np.any(delta <= 0):
        raise ValidationError("delta", "separations must be > 0")
    n_panels = max(8, int(math.ceil(u_max * delta.max() / math.pi)))
    scale = math.pi**1.5 / 3.0
    prev = _kernel_moments(delta, u_max, n_panels, order)
    for _ in range(max_refine):
        n_panels *= 2
        cur = _kernel_moments(delta, u_max, n_panels, order)
        err = max(np.max(np.abs(cur[0] - prev[0])), np.max(np.abs(cur[1] - prev[1]))) / scale
        if err < rtol:
            return cur
        prev = cur
    bad = float(delta[np.argmax(np.abs(cur[0] - prev[0]) + np.abs(cur[1] - prev[1]))])
    raise QuadratureError(f"pair kernel did not converge (|delta|={bad:.4g}, err={err:.2e})")


def ddp_pair_kernel(d) -> float:
    """k(d) for a single dimensionless separation vector (0 gives pi^(3/2)/3)."""
    d = np.asarray(d, dtype=float)
    r2 = float(d @ d)
    if r2 == 0.0:
        return math.pi**1.5 / 3.0
    A, B = ddp_kernel_moments(math.sqrt(r2))
    return float(A[0] + B[0] * d[0] ** 2 / r2)


def ddp_eta_lattice(spec: LatticeSpec, p: DdpParams, constants: PhysicalConstants = CODATA,
                    sites: Optional[np.ndarray] = None,
                    max_pairs: int = DEFAULT_MAX_PAIRS) -> float:
    """dDP diffusion constant of the lattice ball from the full pair sum.

    eta = G m_a^2 / (2 pi^2 hbar R0'^3) * sum_pairs k(a dn / R0'), where the
    diagonal k(0) = pi^(3/2)/3 is exact and off-diagonal kernels come from
    :func:`ddp_kernel_moments`. The resolved chi of ``p`` sets R0'; the cell
    mass comes from ``spec``.
    """
    if sites is None:
        sites = enumerate_sites(spec)
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 3)
    R0p = p.resolve(constants).R0_prime
    alpha = spec.lattice_constant / R0p

    n = len(sites)
    if n * n > max_pairs:
        raise BudgetExceeded(f"{n}^2 = {n * n} pairs exceed budget {max_pairs}; use a smaller n_max")
    span = sites.max(axis=0) - sites.min(axis=0)
    s_max = min(int((span**2).sum()), 4 * int((sites**2).sum(axis=1).max()))
    A = np.zeros(s_max + 1)
    B = np.zeros(s_max + 1)
    if s_max > 0:
        shells = np.arange(1, s_max + 1)
        A[1:], B[1:] = ddp_kernel_moments(alpha * np.sqrt(shells))
    diag = math.pi**1.5 / 3.0

    def term(d):
        s = (d**2).sum(axis=1)
        safe = np.where(s == 0, 1, s)
        out = A[s] + B[s] * d[:, 0] ** 2 / safe
        out[s == 0] = diag
        return out

    total = _pair_sum(sites, term, max_pairs)
    return (constants.G * spec.cell_mass / constants.hbar) * spec.cell_mass / (2.0 * math.pi**2 * R0p**3) * total
