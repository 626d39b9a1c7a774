"""
Free propagator module.
Closed forms and series for the gaussian two-point function on the line, the
circle, the infinite lattice and the circular lattice, plus the effective
mass and pole residue of the lattice theory.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence

import numpy as np
from scipy import integrate

from src.config import PROPAGATOR_CONFIG

logger = logging.getLogger(__name__)

SPACES = ('line', 'circle', 'lattice', 'circular')


class ToleranceUnachievableError(ValueError):
    pass


def _check_positive(**values):
    for name, value in values.items():
        if value is None or value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")


def propagator_line(m: float, t: float) -> float:
    """exp(-m|t|)/(2m)."""
    _check_positive(m=m)
    return math.exp(-m * abs(t)) / (2.0 * m)


def propagator_circle_closed(m: float, T: float, t: float) -> float:
    """Resummed circle propagator cosh(m(t' - T/2)) / (2m sinh(mT/2)), t' = t mod T."""
    _check_positive(m=m, T=T)
    reduced = t % T
    return math.cosh(m * (reduced - T / 2.0)) / (2.0 * m * math.sinh(m * T / 2.0))


def circle_terms_needed(m: float, T: float, tol: float) -> int:
    """Terms after which the subtracted series' tail is below tol."""
    c2 = (m * T) ** 2
    bound = 2.0 * T * c2 / (3.0 * (2.0 * math.pi) ** 4 * tol)
    return max(16, int(math.ceil(bound ** (1.0 / 3.0))))


def propagator_circle(m: float, T: float, t: float, tol: float = None) -> float:
    """
    Fourier series T * sum_n cos(2 pi n t/T) / ((2 pi n)^2 + (mT)^2).

    The 1/n^2 part of every term is summed in closed form, so the remainder
    decays as 1/n^4 and its tail is bounded analytically.
    """
    _check_positive(m=m, T=T)
    tol = tol or PROPAGATOR_CONFIG['tol']
    scale = 1.0 / (m * m * T) + T / 12.0
    floor = PROPAGATOR_CONFIG['rounding_floor'] * scale
    if tol < floor:
        raise ToleranceUnachievableError(f"tolerance unachievable: {tol:g} is below the rounding bound {floor:g}")

    x = (2.0 * math.pi * t / T) % (2.0 * math.pi)
    c2 = (m * T) ** 2
    n_max = circle_terms_needed(m, T, tol)
    n = np.arange(1, n_max + 1, dtype=float)
    q = (2.0 * math.pi * n) ** 2
    remainder = np.sum(np.cos(n * x) / (q * (q + c2)))
    # sum_{n>=1} cos(nx)/n^2 on [0, 2 pi]
    clausen = math.pi ** 2 / 6.0 - math.pi * x / 2.0 + x * x / 4.0
    series = clausen / (4.0 * math.pi ** 2) - c2 * remainder
    value = T * (1.0 / c2 + 2.0 * series)
    logger.debug(f"Circle series m={m} T={T} t={t}: {n_max} terms")
    return float(value)


@dataclass(frozen=True)
class EffectiveParams:
    m_eff: float
    Z_eff: float

    def as_dict(self) -> Dict[str, float]:
        return {'m_eff': self.m_eff, 'Z_eff': self.Z_eff}


def lattice_effective_params(m: float, a: float) -> EffectiveParams:
    """Effective mass and pole residue of the infinite-lattice propagator, eta = (ma)^2/2."""
    _check_positive(m=m, a=a)
    eta = (m * a) ** 2 / 2.0
    root = math.sqrt(2.0 * eta + eta * eta)
    return EffectiveParams(
        m_eff=-math.log(1.0 + eta - root) / a,
        Z_eff=a / (2.0 * root),
    )


def effective_params_series(m: float, a: float) -> EffectiveParams:
    """Leading small-spacing expansions of m_eff and Z_eff."""
    _check_positive(m=m, a=a)
    x = (m * a) ** 2
    return EffectiveParams(
        m_eff=m * (1.0 - x / 24.0),
        Z_eff=(1.0 - x / 8.0) / (2.0 * m),
    )


def propagator_infinite_lattice(m: float, a: float, n: int) -> float:
    params = lattice_effective_params(m, a)
    return params.Z_eff * math.exp(-params.m_eff * abs(int(n)) * a)


def lattice_spectrum(m: float, a: float, energy):
    """Momentum-space lattice propagator 1/((2/a^2)(1 - cos(Ea)) + m^2)."""
    return 1.0 / ((2.0 / a ** 2) * (1.0 - np.cos(energy * a)) + m * m)


def brillouin_integral(m: float, a: float, n: int, tol: float = None) -> float:
    """Integral of the momentum-space propagator over the first Brillouin zone."""
    _check_positive(m=m, a=a)
    tol = tol or PROPAGATOR_CONFIG['tol']
    edge = math.pi / a
    value, error = integrate.quad(
        lambda e: lattice_spectrum(m, a, e) * math.cos(e * n * a) / (2.0 * math.pi),
        -edge, edge, epsabs=tol, epsrel=tol, limit=400)
    logger.debug(f"Brillouin integral n={n}: {value} +/- {error}")
    return value


def brillouin_window(extent: int) -> np.ndarray:
    """Momentum labels floor(-N/2)+1 .. floor(N/2)."""
    return np.arange(math.floor(-extent / 2) + 1, math.floor(extent / 2) + 1)


def propagator_circular_lattice(m: float, N: int, a: float, n: int) -> float:
    """Finite DFT sum (1/(Na)) sum_e a^2 cos(2 pi n e/N) / (2(1 - cos(2 pi e/N)) + (ma)^2)."""
    _check_positive(m=m, a=a)
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    e = brillouin_window(N)
    theta = 2.0 * math.pi * e / N
    terms = a * a * np.cos(theta * (int(n) % N)) / (2.0 * (1.0 - np.cos(theta)) + (m * a) ** 2)
    return float(np.sum(terms) / (N * a))


def propagator_value(space: str, params: Mapping[str, float], t: float, tol: float = None) -> float:
    """Dispatch on space; lattice spaces read t as the integer site separation."""
    m = params['m']
    if space == 'line':
        return propagator_line(m, t)
    if space == 'circle':
        return propagator_circle(m, params['T'], t, tol)
    if space == 'lattice':
        return propagator_infinite_lattice(m, params['a'], int(round(t)))
    if space == 'circular':
        N = int(params['N']) if 'N' in params else int(round(params['T'] / params['a']))
        return propagator_circular_lattice(m, N, params['a'], int(round(t)))
    raise ValueError(f"Unknown space '{space}'")


def propagator_series(space: str, params: Mapping[str, float], grid: Sequence[float], tol: float = None) -> np.ndarray:
    """Propagator values over a grid of evaluation points."""
    if space not in SPACES:
        raise ValueError(f"Unknown space '{space}'")
    values = np.array([propagator_value(space, params, t, tol) for t in grid])
    logger.info(f"Evaluated {space} propagator on {len(values)} points")
    return values


def parse_params(text: str) -> Dict[str, float]:
    """'m=1;T=8' -> {'m': 1.0, 'T': 8.0}."""
    params = {}
    for chunk in text.replace(',', ';').split(';'):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, value = chunk.partition('=')
        params[key.strip()] = float(value)
    return params
