import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapse_bounds.collapse_models import (DcslParams, DdpParams, dcsl_eta_granular,
                                             ddp_eta_granular)
from collapse_bounds.core import CODATA, MassPolicy, RegimeWarning, ValidationError
from collapse_bounds.lattice_oracle import (BudgetExceeded, LatticeSpec, dcsl_eta_lattice,
                                            ddp_eta_lattice, ddp_kernel_moments, ddp_pair_kernel,
                                            enumerate_sites)

M_A = 100 * CODATA.atomic_mass_unit


def brute_sites(n):
    return sorted((x, y, z) for x in range(-n, n + 1) for y in range(-n, n + 1)
                  for z in range(-n, n + 1) if x * x + y * y + z * z <= n * n)


def test_site_enumeration():
    spec = LatticeSpec(1.0, 1, 1.0)
    assert len(enumerate_sites(spec)) == 7
    sites = enumerate_sites(LatticeSpec(1.0, 10, 1.0))
    assert len(sites) == 4169
    assert [tuple(s) for s in sites] == brute_sites(10)


def test_lattice_spec_validation():
    with pytest.raises(ValidationError):
        LatticeSpec(1.0, 0, 1.0)
    with pytest.raises(ValidationError):
        LatticeSpec(1.0, 2.5, 1.0)
    with pytest.raises(BudgetExceeded):
        enumerate_sites(LatticeSpec(1.0, 100, 1.0, max_sites=1000))
    with pytest.raises(BudgetExceeded):
        dcsl_eta_lattice(LatticeSpec(1.0, 6, 1.0), DcslParams(1.0, 1e-9), max_pairs=1000)


def _dcsl_case(n_max, ratio):
    p = DcslParams(1.0, 1e-12, 1e-3, M_A)
    a = ratio * p.r_c_prime()
    spec = LatticeSpec(a, n_max, M_A)
    sites = enumerate_sites(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        closed = dcsl_eta_granular(p, len(sites) * M_A, lattice_constant=a)
    return dcsl_eta_lattice(spec, p, sites=sites), closed


@pytest.mark.parametrize("n_max", [2, 4, 8])
@pytest.mark.parametrize("ratio", [20, 50])
def test_dcsl_lattice_matches_granular(n_max, ratio):
    lattice, closed = _dcsl_case(n_max, ratio)
    assert lattice == pytest.approx(closed, rel=1e-10)


def _ddp_case(n_max, ratio):
    p = DdpParams(1e-12, 1e-3, MassPolicy.fixed_nuclear(M_A))
    st_ = p.resolve()
    spec = LatticeSpec(ratio * st_.R0_prime, n_max, M_A)
    sites = enumerate_sites(spec)
    return ddp_eta_lattice(spec, p, sites=sites), ddp_eta_granular(p, len(sites) * M_A, state=st_)


@pytest.mark.parametrize("n_max", [2, 4, 8])
@pytest.mark.parametrize("ratio", [20, 50])
def test_ddp_lattice_matches_granular(n_max, ratio):
    lattice, closed = _ddp_case(n_max, ratio)
    assert lattice == pytest.approx(closed, rel=1e-6)


def test_single_site_hooks():
    origin = np.zeros((1, 3), dtype=int)
    p = DcslParams(1.0, 1e-9, 1e-3, M_A)
    spec = LatticeSpec(1e-9, 1, M_A)
    ref = M_A**2 / (2 * (1 + p.chi()) ** 5 * p.r_c**2 * CODATA.m_nucleon**2)
    assert dcsl_eta_lattice(spec, p, sites=origin) == pytest.approx(ref, rel=1e-14)

    q = DdpParams(1e-9, 1e-3, MassPolicy.fixed_nuclear(M_A))
    R0p = q.R0_prime()
    ref = CODATA.G * M_A**2 / (6 * CODATA.hbar * math.sqrt(math.pi) * R0p**3)
    assert ddp_eta_lattice(spec, q, sites=origin) == pytest.approx(ref, rel=1e-14)


def test_dense_lattice_exceeds_diagonal():
    p = DcslParams(1.0, 1e-9, math.inf, M_A)
    spec = LatticeSpec(p.r_c_prime(), 2, M_A)
    sites = enumerate_sites(spec)
    diag = len(sites) * dcsl_eta_lattice(spec, p, sites=np.zeros((1, 3), dtype=int))
    assert dcsl_eta_lattice(spec, p, sites=sites) > diag


def test_cell_mass_scaling():
    p = DcslParams(1.0, 1e-9, 1e-2, M_A)
    a = LatticeSpec(2e-9, 3, M_A)
    b = LatticeSpec(2e-9, 3, 2 * M_A)
    assert dcsl_eta_lattice(b, p) / dcsl_eta_lattice(a, p) == pytest.approx(4.0, rel=1e-14)
    q = DdpParams(1e-9, 1e-2, MassPolicy.fixed_nuclear(M_A))
    assert ddp_eta_lattice(b, q) / ddp_eta_lattice(a, q) == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_permutation_invariance(seed):
    spec = LatticeSpec(1.5e-9, 3, M_A)
    sites = enumerate_sites(spec)
    perm = np.random.default_rng(seed).permutation(len(sites))
    p = DcslParams(1.0, 1e-9, math.inf, M_A)
    a = dcsl_eta_lattice(spec, p, sites=sites)
    b = dcsl_eta_lattice(spec, p, sites=sites[perm])
    assert abs(a - b) <= 1e-13 * abs(a)
    q = DdpParams(1e-9, math.inf, MassPolicy.fixed_nuclear(M_A))
    a = ddp_eta_lattice(spec, q, sites=sites)
    b = ddp_eta_lattice(spec, q, sites=sites[perm])
    assert abs(a - b) <= 1e-13 * abs(a)


def _closed_kernel(d):
    """k(d) = -d^2/dx^2 [2 pi^2 erf(|d|/2)/|d|], the Fourier transform of exp(-u^2) u_x^2/u^2."""
    mp.mp.dps = 30
    y, z = mp.mpf(d[1]), mp.mpf(d[2])

    def phi(x):
        r = mp.sqrt(x * x + y * y + z * z)
        return 2 * mp.pi**2 * mp.erf(r / 2) / r

    return float(-mp.diff(phi, mp.mpf(d[0]), 2))


@pytest.mark.parametrize("d", [(0.3, 0.0, 0.0), (0.0, 0.7, 0.2), (1.0, 1.0, 1.0),
                               (2.5, -1.0, 0.5), (0.1, 4.0, 0.0), (6.0, 0.0, 3.0)])
def test_pair_kernel_against_closed_form(d):
    assert ddp_pair_kernel(d) == pytest.approx(_closed_kernel(d), rel=1e-9, abs=1e-12)


def test_pair_kernel_symmetry_and_origin():
    assert ddp_pair_kernel((0.0, 0.0, 0.0)) == pytest.approx(math.pi**1.5 / 3, rel=1e-15)
    assert ddp_pair_kernel((0.4, 0.2, -0.1)) == ddp_pair_kernel((-0.4, -0.2, 0.1))
    # small separation approaches the diagonal value continuously
    assert ddp_pair_kernel((1e-3, 0.0, 0.0)) == pytest.approx(math.pi**1.5 / 3, rel=1e-5)
    with pytest.raises(ValidationError):
        ddp_kernel_moments([0.0])
