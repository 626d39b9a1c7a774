"""
Lattice symmetry module.
Handles the hypercubic point group acting on multi-indices (dihedral D_N in one
dimension), orbit canonicalization, the Z2 parity filter, and counting of the
primitive basis with and without symmetry compression.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SYMMETRY_CONFIG
from src.lattice import LatticeSpec, MultiIndex, Site, bond_axis, iter_sites
from src.reduction import LinearCombination

logger = logging.getLogger(__name__)

LEVELS = ('none', 'parity', 'full')


class ParityNotSymmetryError(ValueError):
    pass


class EnumerationTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class GroupElement:
    """
    x_a -> sign_a * x_{perm(a)} + rotation_a (mod extent), per axis a.
    reflection_flags[a] set means sign_a = -1.
    """

    extent: int
    rotation: Tuple[int, ...]
    reflection_flags: Tuple[bool, ...]
    axis_permutation: Tuple[int, ...]

    @classmethod
    def identity(cls, dimension: int, extent: int) -> 'GroupElement':
        return cls(extent, (0,) * dimension, (False,) * dimension, tuple(range(dimension)))

    @property
    def dimension(self) -> int:
        return len(self.rotation)

    def signs(self) -> Tuple[int, ...]:
        return tuple(-1 if flag else 1 for flag in self.reflection_flags)

    def act(self, site: Site) -> Site:
        coords = site.coords
        return Site(tuple(
            (s * coords[p] + r) % self.extent
            for s, p, r in zip(self.signs(), self.axis_permutation, self.rotation)
        ))

    def __call__(self, site: Site) -> Site:
        return self.act(site)

    def compose(self, other: 'GroupElement') -> 'GroupElement':
        """self after other."""
        signs_g, signs_h = self.signs(), other.signs()
        perm, flags, rotation = [], [], []
        for a in range(self.dimension):
            pg = self.axis_permutation[a]
            perm.append(other.axis_permutation[pg])
            flags.append(signs_g[a] * signs_h[pg] < 0)
            rotation.append((signs_g[a] * other.rotation[pg] + self.rotation[a]) % self.extent)
        return GroupElement(self.extent, tuple(rotation), tuple(flags), tuple(perm))

    def __mul__(self, other: 'GroupElement') -> 'GroupElement':
        return self.compose(other)

    def inverse(self) -> 'GroupElement':
        n = self.dimension
        signs = self.signs()
        back = [0] * n
        for a, p in enumerate(self.axis_permutation):
            back[p] = a
        perm, flags, rotation = [], [], []
        for b in range(n):
            a = back[b]
            perm.append(a)
            flags.append(self.reflection_flags[a])
            rotation.append((-signs[a] * self.rotation[a]) % self.extent)
        return GroupElement(self.extent, tuple(rotation), tuple(flags), tuple(perm))

    def site_permutation(self, dimension: int) -> np.ndarray:
        """Row-major position of the image of every site."""
        return np.array([self.act(site).flat_index(self.extent) for site in iter_sites(dimension, self.extent)])


def group_closure(generators: Sequence[GroupElement], maxsize: Optional[int] = None) -> List[GroupElement]:
    """All products of the generators."""
    elements = set(generators)
    boundary = list(elements)
    while boundary:
        grown = []
        for a in generators:
            for b in boundary:
                c = a * b
                if c not in elements:
                    elements.add(c)
                    grown.append(c)
                    if maxsize and len(elements) >= maxsize:
                        return sorted(elements, key=_element_key)
        boundary = grown
    return sorted(elements, key=_element_key)


def _element_key(g: GroupElement):
    return (g.axis_permutation, g.reflection_flags, g.rotation)


def generators(dimension: int, extent: int, permutable_axes: Optional[Sequence[Sequence[int]]] = None) -> List[GroupElement]:
    """Unit rotation and reflection per axis, plus transpositions inside each interchangeable axis class."""
    identity = GroupElement.identity(dimension, extent)
    found = [identity]
    for axis in range(dimension):
        rotation = list(identity.rotation)
        rotation[axis] = 1 % extent
        found.append(GroupElement(extent, tuple(rotation), identity.reflection_flags, identity.axis_permutation))
        flags = list(identity.reflection_flags)
        flags[axis] = True
        found.append(GroupElement(extent, identity.rotation, tuple(flags), identity.axis_permutation))
    if permutable_axes is None:
        permutable_axes = [list(range(dimension))]
    for group in permutable_axes:
        for a, b in zip(group, group[1:]):
            perm = list(range(dimension))
            perm[a], perm[b] = perm[b], perm[a]
            found.append(GroupElement(extent, identity.rotation, identity.reflection_flags, tuple(perm)))
    return found


@lru_cache(maxsize=64)
def hypercubic_group(dimension: int, extent: int) -> Tuple[GroupElement, ...]:
    return tuple(group_closure(generators(dimension, extent)))


@lru_cache(maxsize=64)
def symmetry_group(spec: LatticeSpec) -> Tuple[GroupElement, ...]:
    """
    Generated symmetry group of the lattice: trivial for site-dependent
    potentials, without axis exchanges between axes whose bonds differ.
    """
    identity = GroupElement.identity(spec.dimension, spec.extent)
    if len(set(spec.site_potentials)) > 1 or not spec.uniform_per_axis():
        return (identity,)
    if spec.is_uniform():
        return hypercubic_group(spec.dimension, spec.extent)
    per_axis: Dict[object, List[int]] = {}
    axis_value = {}
    for bond, w in zip(spec.bonds, spec.bond_couplings):
        axis_value[bond_axis(bond)] = w
    for axis in range(spec.dimension):
        per_axis.setdefault(axis_value.get(axis), []).append(axis)
    return tuple(group_closure(generators(spec.dimension, spec.extent, list(per_axis.values()))))


# ============== Actions on indices ==============

def apply_group(g: GroupElement, nu: MultiIndex) -> MultiIndex:
    return nu.mapped(g.act)


@dataclass(frozen=True)
class OrbitSummary:
    canonical: MultiIndex
    orbit_size: int
    group_order: int

    @property
    def stabilizer_size(self) -> int:
        return self.group_order // self.orbit_size


def canonicalize(nu: MultiIndex, spec: LatticeSpec) -> OrbitSummary:
    """Orbit member whose dense row-major tuple is lexicographically smallest."""
    group = symmetry_group(spec)
    images = {}
    for g in group:
        image = apply_group(g, nu)
        images[spec.dense(image)] = image
    smallest = min(images)
    return OrbitSummary(canonical=images[smallest], orbit_size=len(images), group_order=len(group))


def canonical_index(nu: MultiIndex, spec: LatticeSpec) -> MultiIndex:
    return canonicalize(nu, spec).canonical


def canonicalize_combination(lc: LinearCombination, spec: LatticeSpec) -> LinearCombination:
    """Merge terms lying on the same orbit onto the orbit's canonical index."""
    cache: Dict[MultiIndex, MultiIndex] = {}

    def canonical(nu: MultiIndex) -> MultiIndex:
        if nu not in cache:
            cache[nu] = canonical_index(nu, spec)
        return cache[nu]
    return lc.map_indices(canonical)


def is_parity_zero(nu: MultiIndex, spec: LatticeSpec) -> bool:
    if not spec.is_even:
        raise ParityNotSymmetryError("parity not a symmetry: an odd potential coefficient (a or g) is nonzero")
    return nu.weight % 2 == 1


# ============== Counting ==============

def _parity_signature(m_anh: int) -> int:
    """#even minus #odd occupation values in 0..m_anh-2."""
    values = range(m_anh - 1)
    return sum(1 if v % 2 == 0 else -1 for v in values)


def _has_parity(m_anh: int) -> bool:
    # a cubic top term breaks phi -> -phi
    return m_anh % 2 == 0


def _check_args(n_extent: int, dimension: int, m_anh: int, level: str):
    if n_extent < 1 or dimension < 1:
        raise ValueError("extent and dimension must be positive")
    if not 2 <= m_anh <= 4:
        raise ValueError(f"m_anh must lie in 2..4, got {m_anh}")
    if level not in LEVELS:
        raise ValueError(f"Unknown counting level '{level}'")


def count_primitive_basis(n_extent: int, dimension: int = 1, m_anh: int = 4, level: str = 'parity') -> int:
    """
    Size of the primitive basis: raw ('none'), parity-even ('parity') or the number
    of parity-even orbits of the generated hypercubic group ('full').
    Odd m_anh has no parity, so 'parity' equals 'none' and 'full' counts all orbits.
    """
    _check_args(n_extent, dimension, m_anh, level)
    sites = n_extent ** dimension
    values = m_anh - 1
    parity = _has_parity(m_anh)
    if level == 'none' or (level == 'parity' and not parity):
        return values ** sites
    if level == 'parity':
        return (values ** sites + _parity_signature(m_anh) ** sites) // 2

    total = values ** sites
    limit = SYMMETRY_CONFIG['max_enumeration']
    if total > limit:
        raise EnumerationTooLargeError(f"enumeration too large: {total} indices exceed the limit of {limit}")

    codes = np.arange(total, dtype=np.int64)
    # digits[:, p] is the occupation at row-major site p, most significant first
    powers = values ** np.arange(sites - 1, -1, -1, dtype=np.int64)
    digits = (codes[:, None] // powers[None, :]) % values
    if parity:
        digits = digits[digits.sum(axis=1) % 2 == 0]

    canonical = np.full(len(digits), np.iinfo(np.int64).max, dtype=np.int64)
    for g in hypercubic_group(dimension, n_extent):
        targets = g.site_permutation(dimension)
        image = np.empty_like(digits)
        image[:, targets] = digits
        canonical = np.minimum(canonical, image @ powers)
    count = int(np.unique(canonical).size)
    logger.debug(f"Orbit sweep N={n_extent} d={dimension} m_anh={m_anh}: {count} orbits")
    return count


def burnside_orbit_count(n_extent: int, dimension: int = 1, m_anh: int = 4, parity: bool = True) -> int:
    """Orbit count by averaging fixed points over the group, tracking weight parity per cycle."""
    _check_args(n_extent, dimension, m_anh, 'full')
    values = m_anh - 1
    signature = _parity_signature(m_anh)
    group = hypercubic_group(dimension, n_extent)
    total = Fraction(0)
    for g in group:
        targets = g.site_permutation(dimension)
        cycles = _cycle_lengths(targets)
        fixed_all = values ** len(cycles)
        if not parity or not _has_parity(m_anh):
            total += fixed_all
            continue
        signed = 1
        for length in cycles:
            signed *= values if length % 2 == 0 else signature
        total += Fraction(fixed_all + signed, 2)
    result = total / len(group)
    if result.denominator != 1:
        raise ArithmeticError(f"Non-integral orbit average {result}")
    return int(result)


def _cycle_lengths(targets: np.ndarray) -> List[int]:
    seen = [False] * len(targets)
    lengths = []
    for start in range(len(targets)):
        if seen[start]:
            continue
        length = 0
        p = start
        while not seen[p]:
            seen[p] = True
            p = int(targets[p])
            length += 1
        lengths.append(length)
    return lengths


def count_table(n_values: Iterable[int], dimension: int = 1, m_anh: int = 4,
                levels: Sequence[str] = LEVELS, strict: bool = False) -> List[Dict]:
    """
    Rows of {N, none, parity, full, group_order, lower_bound} for the counting report.
    Oversize full counts are left empty unless strict.
    """
    rows = []
    for n in n_values:
        row = {'N': n, 'd': dimension, 'm_anh': m_anh}
        for level in levels:
            try:
                row[level] = count_primitive_basis(n, dimension, m_anh, level)
            except EnumerationTooLargeError as e:
                if strict:
                    raise
                logger.warning(f"Skipping full count for N={n}: {e}")
                row[level] = None
        order = len(hypercubic_group(dimension, n))
        row['group_order'] = order
        # orbits are at most |G| long; parity halves again when it is a symmetry
        halving = 2 if _has_parity(m_anh) else 1
        row['lower_bound'] = float((m_anh - 1) ** (n ** dimension)) / (halving * order)
        rows.append(row)
    return rows
