"""
Brute-force correlator oracle.
Evaluates lattice correlators directly from the functional integral, either by
a tensor-product Gauss-Legendre rule contracted along the bond graph or by
Monte-Carlo sampling of the decoupled lattice with bond reweighting.
"""

import logging
import math
import string
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_trapezoid

from src.config import ORACLE_CONFIG
from src.lattice import LatticeSpec, MultiIndex, truncation_radius

logger = logging.getLogger(__name__)

METHODS = ('tensor', 'monte-carlo')


class DimensionTooLargeError(ValueError):
    pass


class NonIntegrableActionError(ValueError):
    pass


@dataclass
class OracleConfig:
    method: str = field(default_factory=lambda: ORACLE_CONFIG['method'])
    nodes: int = field(default_factory=lambda: ORACLE_CONFIG['nodes'])
    samples: int = field(default_factory=lambda: ORACLE_CONFIG['samples'])
    radius: Optional[float] = None
    seed: int = field(default_factory=lambda: ORACLE_CONFIG['seed'])
    tol: float = field(default_factory=lambda: ORACLE_CONFIG['tol'])

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown oracle method '{self.method}'")


@dataclass
class OracleResult:
    value: float
    normalized: float
    error: float
    normalized_error: float
    method: str
    detail: Dict = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return {
            'value': self.value,
            'normalized': self.normalized,
            'error': self.error,
            'normalized_error': self.normalized_error,
            'method': self.method,
            **self.detail,
        }


# ============== Checks ==============

def check_integrable(spec: LatticeSpec):
    if not spec.is_numeric:
        raise ValueError("the oracle needs numeric couplings")
    quartic = [p.lam for p in spec.site_potentials]
    if any(lam < 0 for lam in quartic):
        raise NonIntegrableActionError("non-integrable action: negative quartic coupling")
    if all(lam > 0 for lam in quartic):
        return
    if any(p.g != 0 for p in spec.site_potentials):
        raise NonIntegrableActionError("non-integrable action: cubic term without quartic confinement")
    if np.min(np.linalg.eigvalsh(spec.kinetic_matrix())) <= 0:
        raise NonIntegrableActionError("non-integrable action: kinetic form is not positive definite")


def box_radius(spec: LatticeSpec, nu: MultiIndex, tol: float) -> float:
    """Common truncation radius for every axis, bonds absorbed into the mass term."""
    coupling = {site: 0.0 for site in spec.sites}
    for (s1, s2), w in zip(spec.bonds, spec.bond_couplings):
        coupling[s1] += abs(float(w))
        coupling[s2] += abs(float(w))
    top = max((v for _, v in nu.items()), default=0)
    radius = 0.0
    for site in spec.sites:
        pot = spec.potential(site)
        extra = coupling[site] if pot.lam == 0 else 0.0
        radius = max(radius, truncation_radius(pot, top, tol, extra_mass=extra))
    return radius


def _site_log_weight(spec: LatticeSpec, site, x: np.ndarray) -> np.ndarray:
    p = spec.potential(site)
    a, k, g, lam = float(p.a), float(p.k), float(p.g), float(p.lam)
    return -(a * x + k * x ** 2 / 2 + g * x ** 3 / 3 + lam * x ** 4 / 4)


# ============== Tensor-product rule ==============

def tensor_integral(spec: LatticeSpec, nu: MultiIndex, nodes: int, radius: float) -> float:
    """
    Tensor-product Gauss-Legendre sum over [-radius, radius]^sites, contracted site by
    site with einsum so the full grid is never formed.
    """
    x, v = leggauss(nodes)
    x = x * radius
    v = v * radius
    letters = string.ascii_letters
    operands: List = []
    for position, site in enumerate(spec.sites):
        factor = v * np.exp(_site_log_weight(spec, site, x)) * x ** nu.get(site)
        operands.extend([factor, [position]])
    for (s1, s2), w in zip(spec.bonds, spec.bond_couplings):
        w = float(w)
        if w:
            operands.extend([np.exp(w * np.outer(x, x)), [spec.position(s1), spec.position(s2)]])
    operands.append([])
    if len(spec.sites) > len(letters):
        raise DimensionTooLargeError("dimension too large for the tensor rule")
    return float(np.einsum(*operands, optimize='greedy'))


def _tensor_correlator(spec: LatticeSpec, nu: MultiIndex, cfg: OracleConfig) -> OracleResult:
    radius = cfg.radius or box_radius(spec, nu, cfg.tol)
    coarse = tensor_integral(spec, nu, cfg.nodes, radius)
    fine = tensor_integral(spec, nu, 2 * cfg.nodes, radius)
    vacuum_coarse = tensor_integral(spec, MultiIndex.vacuum(), cfg.nodes, radius)
    vacuum_fine = tensor_integral(spec, MultiIndex.vacuum(), 2 * cfg.nodes, radius)

    error = abs(fine - coarse) + cfg.tol
    vacuum_error = abs(vacuum_fine - vacuum_coarse) + cfg.tol
    normalized = fine / vacuum_fine
    normalized_error = error / abs(vacuum_fine) + abs(normalized) * vacuum_error / abs(vacuum_fine)
    logger.debug(f"Tensor rule {nu.key() or 'vacuum'}: {2 * cfg.nodes} nodes, radius {radius:.3f}")
    return OracleResult(value=fine, normalized=normalized, error=error, normalized_error=normalized_error,
                        method='tensor', detail={'nodes': 2 * cfg.nodes, 'radius': radius})


# ============== Monte Carlo ==============

def _site_sampler(spec: LatticeSpec, site, radius: float, grid_size: int):
    grid = np.linspace(-radius, radius, grid_size)
    log_density = _site_log_weight(spec, site, grid)
    density = np.exp(log_density - log_density.max())
    scale = math.exp(log_density.max())
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    mass = cdf[-1]
    return grid, cdf / mass, mass * scale


def _monte_carlo_correlator(spec: LatticeSpec, nu: MultiIndex, cfg: OracleConfig) -> OracleResult:
    for p in spec.site_potentials:
        if p.lam <= 0:
            raise NonIntegrableActionError("non-integrable action: Monte-Carlo sampling needs lambda > 0 on every site")
    radius = cfg.radius or box_radius(spec, nu, cfg.tol)
    rng = np.random.default_rng(cfg.seed)
    logger.info(f"Monte-Carlo oracle: {cfg.samples} samples, seed {cfg.seed}")

    sites = spec.sites
    draws = np.empty((cfg.samples, len(sites)))
    z0 = 1.0
    for position, site in enumerate(sites):
        grid, cdf, mass = _site_sampler(spec, site, radius, ORACLE_CONFIG['cdf_grid'])
        draws[:, position] = np.interp(rng.random(cfg.samples), cdf, grid)
        z0 *= mass

    log_weight = np.zeros(cfg.samples)
    for (s1, s2), w in zip(spec.bonds, spec.bond_couplings):
        log_weight += float(w) * draws[:, spec.position(s1)] * draws[:, spec.position(s2)]
    weight = np.exp(log_weight)
    observable = np.ones(cfg.samples)
    for site, occupation in nu.items():
        observable *= draws[:, spec.position(site)] ** occupation

    a = observable * weight
    mean_a, mean_w = a.mean(), weight.mean()
    n = cfg.samples
    value = z0 * mean_a
    error = z0 * a.std(ddof=1) / math.sqrt(n)
    ratio = mean_a / mean_w
    normalized_error = float(np.std(a - ratio * weight, ddof=1) / (math.sqrt(n) * mean_w))

    ess = weight.sum() ** 2 / np.sum(weight ** 2)
    if ess < 0.1 * n:
        logger.warning(f"Monte-Carlo effective sample size {ess:.0f} of {n}")
    return OracleResult(value=float(value), normalized=float(ratio), error=float(error),
                        normalized_error=normalized_error, method='monte-carlo',
                        detail={'samples': n, 'seed': cfg.seed, 'ess': float(ess), 'radius': radius})


# ============== Entry point ==============

def direct_correlator(spec: LatticeSpec, nu: MultiIndex, cfg: Optional[OracleConfig] = None) -> OracleResult:
    """G(nu) straight from the lattice integral, with an error estimate."""
    cfg = cfg or OracleConfig()
    check_integrable(spec)
    sites = spec.site_count
    if cfg.method == 'tensor' and sites > ORACLE_CONFIG['max_tensor_sites']:
        raise DimensionTooLargeError(f"dimension too large: tensor rule limited to {ORACLE_CONFIG['max_tensor_sites']} sites")
    if cfg.method == 'monte-carlo' and sites > ORACLE_CONFIG['max_mc_sites']:
        raise DimensionTooLargeError(f"dimension too large: Monte-Carlo limited to {ORACLE_CONFIG['max_mc_sites']} sites")

    if spec.is_even and nu.weight % 2:
        return OracleResult(value=0.0, normalized=0.0, error=0.0, normalized_error=0.0,
                            method=cfg.method, detail={'parity': 'odd'})
    if cfg.method == 'tensor':
        return _tensor_correlator(spec, nu, cfg)
    return _monte_carlo_correlator(spec, nu, cfg)


def direct_correlators(spec: LatticeSpec, indices: Sequence[MultiIndex],
                       cfg: Optional[OracleConfig] = None) -> Dict[MultiIndex, OracleResult]:
    return {nu: direct_correlator(spec, nu, cfg) for nu in indices}
