"""
Lattice model for the workbench.
Defines periodic hypercubic lattices, site potentials, bond couplings and
multi-indices, together with the combinatorial measures (weight, sparsity,
norms, primitivity) every other module consumes.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.coefficients import Coefficient, to_fraction

logger = logging.getLogger(__name__)

CouplingValue = Union[str, Fraction]


class LatticeError(ValueError):
    """Raised for inconsistent lattice descriptions."""


# ============== Sites and multi-indices ==============

@dataclass(frozen=True, order=True)
class Site:
    """A lattice point; coordinates are always reduced modulo the extent."""

    coords: Tuple[int, ...]

    @classmethod
    def of(cls, coords: Union[int, Sequence[int]], extent: int) -> 'Site':
        if isinstance(coords, int):
            coords = (coords,)
        return cls(tuple(int(c) % extent for c in coords))

    def normalize(self, extent: int) -> 'Site':
        return Site.of(self.coords, extent)

    def shifted(self, axis: int, step: int, extent: int) -> 'Site':
        coords = list(self.coords)
        coords[axis] = (coords[axis] + step) % extent
        return Site(tuple(coords))

    def neighbors(self, extent: int) -> List['Site']:
        """Nearest neighbours; a 2-site axis yields one neighbour, a 1-site axis none."""
        found = []
        for axis in range(len(self.coords)):
            for step in (1, -1):
                other = self.shifted(axis, step, extent)
                if other != self and other not in found:
                    found.append(other)
        return found

    def flat_index(self, extent: int) -> int:
        """Row-major position of the site."""
        index = 0
        for c in self.coords:
            index = index * extent + c
        return index

    def __str__(self) -> str:
        return ','.join(str(c) for c in self.coords)


class MultiIndex:
    """
    Sparse occupation numbers nu_i over lattice sites.
    Only positive occupations are stored; absent sites have occupation zero.
    """

    __slots__ = ('_entries', '_hash', '_weight')

    def __init__(self, entries: Union[Mapping[Site, int], Iterable[Tuple[Site, int]]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        merged: Dict[Site, int] = {}
        for site, occupation in items:
            occupation = int(occupation)
            if occupation < 0:
                raise LatticeError(f"Negative occupation {occupation} at site {site}")
            if occupation:
                merged[site] = merged.get(site, 0) + occupation
        self._entries: Tuple[Tuple[Site, int], ...] = tuple(sorted(merged.items()))
        self._hash = hash(self._entries)
        self._weight = sum(merged.values())

    @classmethod
    def vacuum(cls) -> 'MultiIndex':
        return cls()

    @classmethod
    def from_dense(cls, occupations: Sequence[int], extent: int, dimension: int = 1) -> 'MultiIndex':
        """Build from a row-major dense tuple of length extent**dimension."""
        if len(occupations) != extent ** dimension:
            raise LatticeError(f"Dense index has {len(occupations)} entries, lattice has {extent ** dimension} sites")
        sites = list(iter_sites(dimension, extent))
        return cls(zip(sites, occupations))

    @classmethod
    def from_sites(cls, mapping: Mapping[Union[int, Sequence[int]], int], extent: int) -> 'MultiIndex':
        return cls({Site.of(coords, extent): value for coords, value in mapping.items()})

    def to_dense(self, extent: int, dimension: int = 1) -> Tuple[int, ...]:
        dense = [0] * (extent ** dimension)
        for site, occupation in self._entries:
            dense[site.flat_index(extent)] = occupation
        return tuple(dense)

    def get(self, site: Site) -> int:
        for s, occupation in self._entries:
            if s == site:
                return occupation
        return 0

    def __getitem__(self, site: Site) -> int:
        return self.get(site)

    def items(self) -> Tuple[Tuple[Site, int], ...]:
        return self._entries

    def sites(self) -> List[Site]:
        return [s for s, _ in self._entries]

    def shifted(self, deltas: Mapping[Site, int]) -> 'MultiIndex':
        """Apply occupation shifts; raises LatticeError if any occupation goes negative."""
        merged = dict(self._entries)
        for site, delta in deltas.items():
            value = merged.get(site, 0) + delta
            if value < 0:
                raise LatticeError(f"occupation underflow at site {site}")
            merged[site] = value
        return MultiIndex(merged)

    def mapped(self, site_map) -> 'MultiIndex':
        return MultiIndex((site_map(s), v) for s, v in self._entries)

    @property
    def weight(self) -> int:
        return self._weight

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self._entries == other._entries

    def __lt__(self, other: 'MultiIndex') -> bool:
        return self._entries < other._entries

    def __hash__(self) -> int:
        return self._hash

    def key(self) -> str:
        """Stable text key, e.g. '0:3|1:2' (coordinates joined by ',')."""
        return '|'.join(f"{site}:{occ}" for site, occ in self._entries)

    @classmethod
    def from_key(cls, key: str) -> 'MultiIndex':
        if not key:
            return cls()
        entries = []
        for chunk in key.split('|'):
            coords, occ = chunk.split(':')
            entries.append((Site(tuple(int(c) for c in coords.split(','))), int(occ)))
        return cls(entries)

    def __repr__(self) -> str:
        return f"MultiIndex({{{', '.join(f'{s}: {v}' for s, v in self._entries)}}})"


def weight(nu: MultiIndex) -> int:
    """Sum of all occupation numbers."""
    return nu.weight


def tau(nu: MultiIndex) -> int:
    """Number of sites with nonzero occupation."""
    return len(nu)


@dataclass(frozen=True)
class IndexNorms:
    inf_norm: int
    one_norm: int
    distance_to_Hc: int


def norms(nu: MultiIndex) -> IndexNorms:
    """Infinity norm, one norm and one-distance to the primitive hypercube."""
    values = [v for _, v in nu.items()]
    return IndexNorms(
        inf_norm=max(values, default=0),
        one_norm=sum(values),
        distance_to_Hc=sum(max(v - 2, 0) for v in values),
    )


def index_distance(nu: MultiIndex, mu: MultiIndex) -> int:
    """One-norm distance between two points of index space."""
    sites = set(nu.sites()) | set(mu.sites())
    return sum(abs(nu.get(s) - mu.get(s)) for s in sites)


def is_primitive(nu: MultiIndex, m_anh: int) -> bool:
    if not 2 <= m_anh <= 4:
        raise LatticeError(f"m_anh must lie in 2..4, got {m_anh}")
    top = m_anh - 2
    return all(v <= top for _, v in nu.items())


def iter_sites(dimension: int, extent: int) -> Iterator[Site]:
    """All sites in row-major order."""
    for coords in itertools.product(range(extent), repeat=dimension):
        yield Site(coords)


# ============== Couplings ==============

def _coupling(value) -> CouplingValue:
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        raise LatticeError(f"Couplings must be exact; got float {value}")
    text = str(value).strip()
    try:
        return Fraction(text)
    except ValueError:
        if not text.replace('_', '').isalnum():
            raise LatticeError(f"Bad coupling symbol '{text}'")
        return text


def _is_zero(value: CouplingValue) -> bool:
    return isinstance(value, Fraction) and value == 0


@dataclass(frozen=True)
class PotentialCoefficients:
    """Site potential a*phi + k*phi^2/2 + g*phi^3/3 + lambda*phi^4/4."""

    a: CouplingValue = Fraction(0)
    k: CouplingValue = 'k'
    g: CouplingValue = Fraction(0)
    lam: CouplingValue = 'lambda'

    def __post_init__(self):
        for name in ('a', 'k', 'g', 'lam'):
            object.__setattr__(self, name, _coupling(getattr(self, name)))

    @property
    def m_anh(self) -> int:
        if not _is_zero(self.lam):
            return 4
        if not _is_zero(self.g):
            return 3
        return 2

    @property
    def is_even(self) -> bool:
        return _is_zero(self.a) and _is_zero(self.g)

    @property
    def is_numeric(self) -> bool:
        return all(isinstance(getattr(self, n), Fraction) for n in ('a', 'k', 'g', 'lam'))

    def coefficient(self, name: str) -> Coefficient:
        return Coefficient.coerce(getattr(self, name))

    def top(self) -> Tuple[int, Coefficient]:
        """Highest power and its coupling (lambda for quartic, g for cubic)."""
        order = self.m_anh
        if order == 4:
            return 4, self.coefficient('lam')
        if order == 3:
            return 3, self.coefficient('g')
        return 2, self.coefficient('k')

    def numeric_values(self) -> Dict[str, Fraction]:
        if not self.is_numeric:
            raise LatticeError("Potential has symbolic coefficients")
        return {'a': self.a, 'k': self.k, 'g': self.g, 'lam': self.lam}

    def substituted(self, assignment: Mapping[str, Fraction]) -> 'PotentialCoefficients':
        def sub(value):
            if isinstance(value, str) and value in assignment:
                return to_fraction(assignment[value])
            return value
        return PotentialCoefficients(a=sub(self.a), k=sub(self.k), g=sub(self.g), lam=sub(self.lam))


def truncation_radius(pot: PotentialCoefficients, nu_i: int, tol: float, extra_mass: float = 0.0) -> float:
    """
    Radius beyond which |phi|^nu exp(-V(phi)) is below tol. extra_mass lowers k
    to absorb bond terms when the site sits inside an interacting lattice.
    """
    a, k, g, lam = (float(pot.a), float(pot.k) - extra_mass, float(pot.g), float(pot.lam))

    def decay(phi: float) -> float:
        if lam > 0:
            return lam * phi ** 4 / 8 - abs(a) * phi - abs(g) * phi ** 3 / 3 - max(-k, 0.0) * phi ** 2 / 2
        return k * phi ** 2 / 4 - abs(a) * phi

    if lam <= 0 and k <= 0:
        raise LatticeError("potential is not confining")
    target = math.log(1.0 / tol)
    phi = 2.0
    while decay(phi) - nu_i * math.log(phi) < target:
        phi *= 1.2
    return phi


Bond = Tuple[Site, Site]


def lattice_bonds(dimension: int, extent: int) -> List[Bond]:
    """Nearest-neighbour bonds, each unordered pair once; extent 2 collapses the doubled bond."""
    if extent < 2:
        return []
    bonds = set()
    for site in iter_sites(dimension, extent):
        for axis in range(dimension):
            neighbour = site.shifted(axis, 1, extent)
            bonds.add(tuple(sorted((site, neighbour))))
    return sorted(bonds)


def bond_axis(bond: Bond) -> int:
    first, second = bond
    for axis, (c1, c2) in enumerate(zip(first.coords, second.coords)):
        if c1 != c2:
            return axis
    raise LatticeError(f"Degenerate bond {bond}")


@dataclass(frozen=True)
class LatticeSpec:
    """
    Periodic hypercubic lattice with per-site potentials and per-bond couplings.
    site_potentials is row-major over sites; bond_couplings follows lattice_bonds().
    """

    dimension: int
    extent: int
    site_potentials: Tuple[PotentialCoefficients, ...]
    bond_couplings: Tuple[CouplingValue, ...]

    def __post_init__(self):
        if self.dimension < 1 or self.extent < 1:
            raise LatticeError("dimension and extent must be positive")
        if len(self.site_potentials) != self.extent ** self.dimension:
            raise LatticeError("one potential per site is required")
        if len(self.bond_couplings) != len(lattice_bonds(self.dimension, self.extent)):
            raise LatticeError("one coupling per bond is required")
        object.__setattr__(self, 'bond_couplings', tuple(_coupling(w) for w in self.bond_couplings))

    # ============== Constructors ==============

    @classmethod
    def uniform(cls, dimension: int = 1, extent: int = 2, k='k', lam='lambda', w='w',
                a=0, g=0) -> 'LatticeSpec':
        potential = PotentialCoefficients(a=a, k=k, g=g, lam=lam)
        n_bonds = len(lattice_bonds(dimension, extent))
        return cls(dimension, extent, (potential,) * extent ** dimension, (w,) * n_bonds)

    @classmethod
    def per_site(cls, dimension: int = 1, extent: int = 2, a=0, g=0) -> 'LatticeSpec':
        """Distinct symbols k_i, lambda_i per site and w_b per bond (b in bond order)."""
        n_sites = extent ** dimension
        potentials = tuple(PotentialCoefficients(a=a, k=f'k_{i}', g=g, lam=f'lambda_{i}')
                           for i in range(n_sites))
        n_bonds = len(lattice_bonds(dimension, extent))
        return cls(dimension, extent, potentials, tuple(f'w_{b}' for b in range(n_bonds)))

    @classmethod
    def numeric(cls, dimension: int = 1, extent: int = 2, k=1, lam=Fraction(1, 2), w=Fraction(1, 4),
                a=0, g=0) -> 'LatticeSpec':
        return cls.uniform(dimension, extent, k=Fraction(k), lam=Fraction(lam), w=Fraction(w),
                           a=Fraction(a), g=Fraction(g))

    def with_bond_couplings(self, couplings: Sequence) -> 'LatticeSpec':
        return LatticeSpec(self.dimension, self.extent, self.site_potentials, tuple(couplings))

    def with_couplings(self, assignment: Mapping[str, Fraction]) -> 'LatticeSpec':
        """Substitute rationals for the named symbols."""
        potentials = tuple(p.substituted(assignment) for p in self.site_potentials)
        bonds = tuple(to_fraction(assignment[w]) if isinstance(w, str) and w in assignment else w
                      for w in self.bond_couplings)
        return LatticeSpec(self.dimension, self.extent, potentials, bonds)

    # ============== Structure ==============

    @cached_property
    def sites(self) -> List[Site]:
        return list(iter_sites(self.dimension, self.extent))

    @property
    def site_count(self) -> int:
        return self.extent ** self.dimension

    @cached_property
    def bonds(self) -> List[Bond]:
        return lattice_bonds(self.dimension, self.extent)

    @cached_property
    def _site_position(self) -> Dict[Site, int]:
        return {site: i for i, site in enumerate(self.sites)}

    @cached_property
    def _incident(self) -> Dict[Site, List[Tuple[Site, int]]]:
        incident: Dict[Site, List[Tuple[Site, int]]] = {s: [] for s in self.sites}
        for b, (s1, s2) in enumerate(self.bonds):
            incident[s1].append((s2, b))
            incident[s2].append((s1, b))
        return incident

    def site(self, coords: Union[int, Sequence[int]]) -> Site:
        site = Site.of(coords, self.extent)
        if len(site.coords) != self.dimension:
            raise LatticeError(f"Site {coords} does not have {self.dimension} coordinates")
        return site

    def potential(self, site: Site) -> PotentialCoefficients:
        return self.site_potentials[self._site_position[site]]

    def neighbours(self, site: Site) -> List[Tuple[Site, int]]:
        """Neighbouring sites with the index of the connecting bond."""
        return self._incident[site]

    def bond_coefficient(self, bond_index: int) -> Coefficient:
        return Coefficient.coerce(self.bond_couplings[bond_index])

    def bond_index(self, s1: Site, s2: Site) -> int:
        key = tuple(sorted((s1, s2)))
        try:
            return self.bonds.index(key)
        except ValueError:
            raise LatticeError(f"Sites {s1} and {s2} are not nearest neighbours")

    # ============== Properties ==============

    @property
    def m_anh(self) -> int:
        return max(p.m_anh for p in self.site_potentials)

    @property
    def is_numeric(self) -> bool:
        return (all(p.is_numeric for p in self.site_potentials)
                and all(isinstance(w, Fraction) for w in self.bond_couplings))

    @property
    def mode(self) -> str:
        return 'numeric' if self.is_numeric else 'symbolic'

    @property
    def is_even(self) -> bool:
        return all(p.is_even for p in self.site_potentials)

    @property
    def is_random_field(self) -> bool:
        return all(_is_zero(w) for w in self.bond_couplings)

    def is_uniform(self) -> bool:
        return len(set(self.site_potentials)) <= 1 and len(set(self.bond_couplings)) <= 1

    def uniform_per_axis(self) -> bool:
        """Uniform potentials, bonds uniform along each axis (values may differ between axes)."""
        if len(set(self.site_potentials)) > 1:
            return False
        per_axis: Dict[int, set] = {}
        for bond, w in zip(self.bonds, self.bond_couplings):
            per_axis.setdefault(bond_axis(bond), set()).add(w)
        return all(len(values) == 1 for values in per_axis.values())

    def symbols(self) -> List[str]:
        found = set()
        for p in self.site_potentials:
            for name in ('a', 'k', 'g', 'lam'):
                value = getattr(p, name)
                if isinstance(value, str):
                    found.add(value)
        found.update(w for w in self.bond_couplings if isinstance(w, str))
        return sorted(found)

    def kinetic_matrix(self) -> np.ndarray:
        """Quadratic form K of the action, S = phi.K.phi/2 + ..., numeric mode only."""
        if not self.is_numeric:
            raise LatticeError("kinetic matrix needs numeric couplings")
        n = self.site_count
        matrix = np.zeros((n, n))
        for i, p in enumerate(self.site_potentials):
            matrix[i, i] = float(p.k)
        for (s1, s2), w in zip(self.bonds, self.bond_couplings):
            i, j = self._site_position[s1], self._site_position[s2]
            matrix[i, j] -= float(w)
            matrix[j, i] -= float(w)
        return matrix

    def exact_kinetic_entries(self) -> List[List[Fraction]]:
        n = self.site_count
        entries = [[Fraction(0)] * n for _ in range(n)]
        for i, p in enumerate(self.site_potentials):
            entries[i][i] = to_fraction(p.k)
        for (s1, s2), w in zip(self.bonds, self.bond_couplings):
            i, j = self._site_position[s1], self._site_position[s2]
            entries[i][j] -= to_fraction(w)
            entries[j][i] -= to_fraction(w)
        return entries

    def position(self, site: Site) -> int:
        return self._site_position[site]

    def index(self, occupations: Union[Sequence[int], Mapping]) -> MultiIndex:
        """Convenience: dense row-major tuple or {coords: occupation} mapping."""
        if isinstance(occupations, Mapping):
            return MultiIndex({self.site(c): v for c, v in occupations.items()})
        return MultiIndex.from_dense(tuple(occupations), self.extent, self.dimension)

    def dense(self, nu: MultiIndex) -> Tuple[int, ...]:
        return nu.to_dense(self.extent, self.dimension)

    def describe(self) -> Dict:
        def text(value):
            return str(value)
        return {
            'dimension': self.dimension,
            'extent': self.extent,
            'mode': self.mode,
            'sites': [{'site': str(s), 'a': text(p.a), 'k': text(p.k), 'g': text(p.g), 'lambda': text(p.lam)}
                      for s, p in zip(self.sites, self.site_potentials)],
            'bonds': [{'bond': f"{s1}-{s2}", 'w': text(w)} for (s1, s2), w in zip(self.bonds, self.bond_couplings)],
        }

    def key(self) -> str:
        """Stable text key identifying the lattice and its couplings."""
        potentials = ';'.join(f"{p.a},{p.k},{p.g},{p.lam}" for p in self.site_potentials)
        bonds = ','.join(str(w) for w in self.bond_couplings)
        return f"d={self.dimension}|N={self.extent}|V={potentials}|W={bonds}"


# ============== Primitive basis ==============

def primitive_basis(spec: LatticeSpec, parity: Optional[bool] = None) -> List[MultiIndex]:
    """
    All primitive multi-indices (occupations 0..m_anh-2) ordered by weight and then
    by dense tuple. Odd-weight members are dropped when the action is even.
    """
    if parity is None:
        parity = spec.is_even
    top = spec.m_anh - 2
    basis = []
    for dense in itertools.product(range(top + 1), repeat=spec.site_count):
        if parity and sum(dense) % 2:
            continue
        basis.append((sum(dense), dense))
    basis.sort()
    return [MultiIndex.from_dense(dense, spec.extent, spec.dimension) for _, dense in basis]


def continuum_couplings(m: float, a: float, extent: int) -> Dict[str, float]:
    """
    Lattice couplings reproducing the free continuum action with mass m at spacing a,
    from the forward-difference discretization of the time derivative.
    """
    if m <= 0 or a <= 0:
        raise LatticeError("mass and spacing must be positive")
    if extent == 1:
        return {'k': m * m * a, 'w': 0.0}
    k = (2.0 + (m * a) ** 2) / a
    w = 2.0 / a if extent == 2 else 1.0 / a
    return {'k': k, 'w': w}
