"""
Reduction engine for lattice correlators.
Handles the Dyson-Schwinger solve step, memoized reduction to the primitive
basis, the random-field and gaussian regimes, and the elementary N/D/L/R
operators together with their commutation checks.
"""

import logging
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy

from src.coefficients import Coefficient, ONE, ZERO
from src.config import REDUCTION_CONFIG
from src.lattice import LatticeSpec, MultiIndex, Site

logger = logging.getLogger(__name__)


class ReductionError(ValueError):
    """Base class for reduction failures."""


class SiteNotReducibleError(ReductionError):
    pass


class VanishingCouplingError(ReductionError):
    pass


class OccupationUnderflowError(ReductionError):
    pass


class NonzeroBondError(ReductionError):
    pass


class SingularKineticError(ReductionError):
    pass


# ============== Linear combinations ==============

def _accumulate(target: Dict[MultiIndex, Coefficient], terms: Iterable[Tuple[MultiIndex, Coefficient]],
                scale: Coefficient = ONE):
    """In-place target += scale * terms, dropping cancelled entries."""
    for nu, c in terms:
        value = c if scale is ONE else c * scale
        total = target.get(nu, ZERO) + value
        if total:
            target[nu] = total
        else:
            target.pop(nu, None)


class LinearCombination:
    """Finite sum of Coefficient x correlator; zero coefficients are never stored."""

    __slots__ = ('_terms',)

    def __init__(self, terms: Union[Mapping[MultiIndex, Coefficient], Iterable[Tuple[MultiIndex, Coefficient]], None] = None):
        cleaned: Dict[MultiIndex, Coefficient] = {}
        if terms:
            items = terms.items() if isinstance(terms, Mapping) else terms
            _accumulate(cleaned, ((nu, Coefficient.coerce(c)) for nu, c in items))
        self._terms = cleaned

    @classmethod
    def _raw(cls, terms: Dict[MultiIndex, Coefficient]) -> 'LinearCombination':
        obj = cls.__new__(cls)
        obj._terms = terms
        return obj

    @classmethod
    def of(cls, nu: MultiIndex, coefficient=ONE) -> 'LinearCombination':
        return cls({nu: coefficient})

    @classmethod
    def zero(cls) -> 'LinearCombination':
        return cls._raw({})

    def items(self) -> List[Tuple[MultiIndex, Coefficient]]:
        return sorted(self._terms.items(), key=lambda item: (item[0].weight, item[0]))

    def indices(self) -> List[MultiIndex]:
        return [nu for nu, _ in self.items()]

    def coefficient(self, nu: MultiIndex) -> Coefficient:
        return self._terms.get(nu, ZERO)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __contains__(self, nu: MultiIndex) -> bool:
        return nu in self._terms

    def __add__(self, other: 'LinearCombination') -> 'LinearCombination':
        result = dict(self._terms)
        _accumulate(result, other._terms.items())
        return LinearCombination._raw(result)

    def __neg__(self) -> 'LinearCombination':
        return LinearCombination._raw({nu: -c for nu, c in self._terms.items()})

    def __sub__(self, other: 'LinearCombination') -> 'LinearCombination':
        return self + (-other)

    def scaled(self, factor) -> 'LinearCombination':
        factor = Coefficient.coerce(factor)
        if not factor:
            return LinearCombination.zero()
        result: Dict[MultiIndex, Coefficient] = {}
        _accumulate(result, self._terms.items(), factor)
        return LinearCombination._raw(result)

    def __mul__(self, factor) -> 'LinearCombination':
        return self.scaled(factor)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, LinearCombination) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def map_indices(self, mapping: Callable[[MultiIndex], MultiIndex]) -> 'LinearCombination':
        """Relabel correlators, merging terms that land on the same index."""
        result: Dict[MultiIndex, Coefficient] = {}
        _accumulate(result, ((mapping(nu), c) for nu, c in self._terms.items()))
        return LinearCombination._raw(result)

    def tensor(self, other: 'LinearCombination') -> 'LinearCombination':
        """Product of two combinations over disjoint site sets."""
        result: Dict[MultiIndex, Coefficient] = {}
        for nu, c in self._terms.items():
            for mu, d in other._terms.items():
                merged = MultiIndex(list(nu.items()) + list(mu.items()))
                _accumulate(result, [(merged, c * d)])
        return LinearCombination._raw(result)

    def substitute(self, assignment: Mapping[str, Fraction]) -> 'LinearCombination':
        result: Dict[MultiIndex, Coefficient] = {}
        _accumulate(result, ((nu, c.substitute(assignment)) for nu, c in self._terms.items()))
        return LinearCombination._raw(result)

    def evaluate_coefficients(self, assignment: Mapping[str, Fraction]) -> Dict[MultiIndex, Fraction]:
        return {nu: c.evaluate(assignment) for nu, c in self.items()}

    def symbols(self) -> List[str]:
        found = set()
        for c in self._terms.values():
            found.update(c.symbols())
        return sorted(found)

    def max_weight(self) -> int:
        return max((nu.weight for nu in self._terms), default=0)

    def to_terms(self, spec: Optional[LatticeSpec] = None) -> List[Dict]:
        """JSON-friendly term list; dense tuples are included when the lattice is known."""
        rows = []
        for nu, c in self.items():
            row = {'index': nu.key(), 'coefficient': c.to_terms()}
            if spec is not None:
                row['dense'] = list(spec.dense(nu))
            rows.append(row)
        return rows

    @classmethod
    def from_terms(cls, rows: Iterable[Mapping]) -> 'LinearCombination':
        return cls({MultiIndex.from_key(row['index']): Coefficient.from_terms(row['coefficient']) for row in rows})

    def __repr__(self) -> str:
        return f"LinearCombination({self})"

    def __str__(self) -> str:
        if not self._terms:
            return '0'
        return ' + '.join(f"({c})*G[{nu.key()}]" for nu, c in self.items())


@dataclass(frozen=True)
class ReductionTrace:
    steps: int
    visited: int
    max_branching: int

    def as_dict(self) -> Dict[str, int]:
        return {'steps': self.steps, 'visited': self.visited, 'max_branching': self.max_branching}


# ============== Solve step ==============

def _site_powers(spec: LatticeSpec, site: Site) -> Dict[int, Coefficient]:
    """Nonzero coefficients c_q of phi^(q-1) in dS/dphi_i, keyed by q."""
    potential = spec.potential(site)
    powers = {}
    for q, name in ((1, 'a'), (2, 'k'), (3, 'g'), (4, 'lam')):
        c = potential.coefficient(name)
        if c:
            powers[q] = c
    return powers


def lds_solve_step(nu: MultiIndex, site: Site, spec: LatticeSpec) -> LinearCombination:
    """
    Solve one Dyson-Schwinger equation at `site` for the top-power correlator.

    With p = m_anh and c_p the top coupling at the site:
        c_p G(nu) = (nu_i - p + 1) G(nu - p e_i) - sum_{q<p} c_q G(nu - (p - q) e_i)
                    + sum_j w_ij G(nu - (p - 1) e_i + e_j)
    """
    order = spec.m_anh
    occupation = nu.get(site)
    if occupation < order - 1:
        raise SiteNotReducibleError(f"site not reducible: occupation {occupation} at {site} is below {order - 1}")

    powers = _site_powers(spec, site)
    top = powers.get(order)
    if top is None:
        raise VanishingCouplingError(f"vanishing quartic coupling at reduced site {site}" if order == 4
                                     else f"vanishing top coupling at reduced site {site}")
    inverse = top.inverse()

    terms: Dict[MultiIndex, Coefficient] = {}
    base = order - 1
    lead = occupation - base
    if lead:
        _accumulate(terms, [(nu.shifted({site: -order}), inverse * lead)])
    for q, c in powers.items():
        if q < order:
            _accumulate(terms, [(nu.shifted({site: -(order - q)}), -(c * inverse))])
    for neighbour, bond in spec.neighbours(site):
        w = spec.bond_coefficient(bond)
        if w:
            _accumulate(terms, [(nu.shifted({site: -base, neighbour: 1}), w * inverse)])
    return LinearCombination._raw(terms)


SiteStrategy = Callable[[MultiIndex, List[Site]], Site]


def smallest_site(nu: MultiIndex, candidates: List[Site]) -> Site:
    return candidates[0]


def random_site_strategy(seed: int) -> SiteStrategy:
    """Uniformly random choice among reducible sites, reproducible from the seed."""
    rng = random.Random(seed)

    def choose(nu: MultiIndex, candidates: List[Site]) -> Site:
        return rng.choice(candidates)
    return choose


# ============== Reducer ==============

class Reducer:
    """
    Memoized reduction of correlators to primitives for one lattice.
    The memo table is flushed once it reaches memo_limit entries; the one-step
    expansion graph backs ReductionTrace and survives nothing but the same cap.
    """

    def __init__(self, spec: LatticeSpec, strategy: Optional[SiteStrategy] = None,
                 memo_limit: Optional[int] = None):
        if spec.m_anh < 3 and not spec.is_random_field:
            raise ReductionError("gaussian lattices with bonds reduce through gaussian_reduce")
        self.spec = spec
        self.order = spec.m_anh
        self.strategy = strategy or smallest_site
        self.memo_limit = memo_limit or REDUCTION_CONFIG['memo_limit']
        self._memo: Dict[MultiIndex, LinearCombination] = {}
        self._graph: Dict[MultiIndex, Tuple[MultiIndex, ...]] = {}
        self._lock = threading.Lock()
        self.flushes = 0

    def reducible_sites(self, nu: MultiIndex) -> List[Site]:
        threshold = self.order - 1
        return [site for site, occupation in nu.items() if occupation >= threshold]

    def select_site(self, nu: MultiIndex) -> Optional[Site]:
        candidates = self.reducible_sites(nu)
        if not candidates:
            return None
        return self.strategy(nu, candidates)

    def expand(self, nu: MultiIndex) -> LinearCombination:
        """One solve step at the selected site; primitives expand to themselves."""
        site = self.select_site(nu)
        if site is None:
            return LinearCombination.of(nu)
        step = lds_solve_step(nu, site, self.spec)
        with self._lock:
            self._graph.setdefault(nu, tuple(step.indices()))
        return step

    def reduce(self, nu: MultiIndex) -> LinearCombination:
        cached = self._memo.get(nu)
        if cached is not None:
            return cached
        if not self.reducible_sites(nu):
            result = LinearCombination.of(nu)
        else:
            terms: Dict[MultiIndex, Coefficient] = {}
            for mu, c in self.expand(nu).items():
                _accumulate(terms, self.reduce(mu)._terms.items(), c)
            result = LinearCombination._raw(terms)
        self._store(nu, result)
        return result

    def _store(self, nu: MultiIndex, result: LinearCombination):
        with self._lock:
            if len(self._memo) >= self.memo_limit:
                logger.warning(f"Memo table reached {self.memo_limit} entries; flushing")
                self._memo.clear()
                self._graph.clear()
                self.flushes += 1
            self._memo.setdefault(nu, result)

    def children(self, nu: MultiIndex) -> Tuple[MultiIndex, ...]:
        if not self.reducible_sites(nu):
            return ()
        found = self._graph.get(nu)
        if found is None:
            self.expand(nu)
            found = self._graph.get(nu, ())
        return found

    def trace(self, nu: MultiIndex) -> ReductionTrace:
        """Walk the expansion graph below nu."""
        seen = {nu}
        stack = [nu]
        steps = 0
        branching = 0
        while stack:
            node = stack.pop()
            kids = self.children(node)
            if not kids:
                continue
            steps += 1
            branching = max(branching, len(kids))
            for kid in kids:
                if kid not in seen:
                    seen.add(kid)
                    stack.append(kid)
        return ReductionTrace(steps=steps, visited=len(seen), max_branching=branching)

    def reduce_many(self, indices: Sequence[MultiIndex], threads: Optional[int] = None) -> List[LinearCombination]:
        threads = threads or REDUCTION_CONFIG['threads']
        if threads <= 1 or len(indices) < 2:
            return [self.reduce(nu) for nu in indices]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(self.reduce, indices))

    @property
    def memo_size(self) -> int:
        return len(self._memo)


@lru_cache(maxsize=32)
def get_reducer(spec: LatticeSpec) -> Reducer:
    """Reducer for a lattice with the default site order."""
    return Reducer(spec)


def reduce_to_primitive(nu: MultiIndex, spec: LatticeSpec,
                        reducer: Optional[Reducer] = None) -> Tuple[LinearCombination, ReductionTrace]:
    """Exact decomposition of G(nu) over primitive correlators, with its trace."""
    reducer = reducer or get_reducer(spec)
    result = reducer.reduce(nu)
    trace = reducer.trace(nu)
    logger.debug(f"Reduced {nu.key() or 'vacuum'}: {len(result)} terms, {trace.steps} steps")
    return result, trace


def reduction_tree_stats(nu: MultiIndex, spec: LatticeSpec, reducer: Optional[Reducer] = None) -> Dict:
    """Depth and per-level node counts of the reduction tree rooted at nu."""
    reducer = reducer or get_reducer(spec)
    levels = []
    frontier = [nu]
    leaves = set()
    while frontier:
        levels.append(len(frontier))
        following = set()
        for node in frontier:
            kids = reducer.children(node)
            if kids:
                following.update(kids)
            else:
                leaves.add(node)
        frontier = sorted(following)
    return {'depth': len(levels) - 1, 'levels': levels, 'leaves': len(leaves)}


# ============== Special regimes ==============

def reduce_random_field(nu: MultiIndex, spec: LatticeSpec) -> LinearCombination:
    """
    Reduction with every bond coupling zero: sites decouple, so the result is the
    tensor product of one-site reductions.
    """
    if not spec.is_random_field:
        raise NonzeroBondError("nonzero bond coupling: random-field reduction needs all w = 0")
    reducer = get_reducer(spec)
    result = LinearCombination.of(MultiIndex.vacuum())
    for site, occupation in nu.items():
        single = reducer.reduce(MultiIndex({site: occupation}))
        result = result.tensor(single)
    return result


def _sympy_rational(value: Fraction) -> sympy.Rational:
    return sympy.Rational(value.numerator, value.denominator)


def _fraction(value) -> Fraction:
    value = sympy.Rational(value)
    return Fraction(int(value.p), int(value.q))


def gaussian_covariance(spec: LatticeSpec) -> sympy.Matrix:
    """Exact inverse of the kinetic matrix; raises on a zero mode."""
    if not spec.is_numeric:
        raise ReductionError("gaussian reduction needs numeric couplings")
    entries = spec.exact_kinetic_entries()
    kinetic = sympy.Matrix([[_sympy_rational(q) for q in row] for row in entries])
    if kinetic.det() == 0:
        raise SingularKineticError("singular kinetic operator (massless zero mode)")
    return kinetic.inv()


def gaussian_reduce(nu: MultiIndex, spec: LatticeSpec) -> Fraction:
    """
    alpha(nu) with G(nu) = alpha(nu) G(0) for a free lattice, from
    G(mu + e_i) = sum_j C_ij mu_j G(mu - e_j), C the inverse kinetic matrix.
    """
    for p in spec.site_potentials:
        if not p.is_numeric:
            raise ReductionError("gaussian reduction needs numeric couplings")
        if p.lam != 0 or p.g != 0 or p.a != 0:
            raise ReductionError("gaussian reduction needs a = g = lambda = 0")
    if nu.weight % 2:
        return Fraction(0)
    covariance = gaussian_covariance(spec)
    n = spec.site_count
    table = [[_fraction(covariance[i, j]) for j in range(n)] for i in range(n)]
    memo: Dict[MultiIndex, Fraction] = {MultiIndex.vacuum(): Fraction(1)}

    def alpha(index: MultiIndex) -> Fraction:
        if index in memo:
            return memo[index]
        if index.weight % 2:
            return Fraction(0)
        site, _ = index.items()[0]
        mu = index.shifted({site: -1})
        i = spec.position(site)
        total = Fraction(0)
        for other, occupation in mu.items():
            c = table[i][spec.position(other)]
            if c:
                total += c * occupation * alpha(mu.shifted({other: -1}))
        memo[index] = total
        return total

    return alpha(nu)


# ============== Operator algebra ==============

OPERATORS = ('N', 'D', 'L', 'R')


def _operator_terms(which: str, nu: MultiIndex, site: Site, spec: LatticeSpec,
                    axis: int) -> List[Tuple[Dict[Site, int], Coefficient]]:
    potential = spec.potential(site)
    lam = potential.coefficient('lam')
    if not lam:
        raise VanishingCouplingError(f"vanishing quartic coupling at reduced site {site}")
    inverse = lam.inverse()
    if which == 'N':
        return [({site: -4}, inverse * (nu.get(site) - 3))]
    if which == 'D':
        return [({site: -2}, -(potential.coefficient('k') * inverse))]
    if spec.extent == 1 or (which == 'L' and spec.extent == 2):
        # a 2-site ring carries its single bond in R
        return []
    neighbour = site.shifted(axis, -1 if which == 'L' else 1, spec.extent)
    w = spec.bond_coefficient(spec.bond_index(site, neighbour))
    return [({site: -3, neighbour: 1}, w * inverse)]


def apply_elementary_operator(which: str, site: Site, x: LinearCombination, spec: LatticeSpec,
                              axis: int = 0) -> LinearCombination:
    """Apply N_i, D_i, L_i or R_i (movers along `axis`) term by term."""
    if which not in OPERATORS:
        raise ValueError(f"Unknown operator '{which}'")
    result: Dict[MultiIndex, Coefficient] = {}
    for nu, c in x.items():
        for shift, factor in _operator_terms(which, nu, site, spec, axis):
            if not factor:
                continue
            try:
                shifted = nu.shifted(shift)
            except ValueError:
                raise OccupationUnderflowError(f"occupation underflow applying {which} at {site} to {nu.key()}")
            _accumulate(result, [(shifted, c * factor)])
    return LinearCombination._raw(result)


def apply_site_operator(site: Site, x: LinearCombination, spec: LatticeSpec) -> LinearCombination:
    """O_i: the full solve step at `site` applied to every term."""
    result: Dict[MultiIndex, Coefficient] = {}
    for nu, c in x.items():
        try:
            step = lds_solve_step(nu, site, spec)
        except SiteNotReducibleError:
            raise OccupationUnderflowError(f"occupation underflow applying O at {site} to {nu.key()}")
        _accumulate(result, step._terms.items(), c)
    return LinearCombination._raw(result)


def check_operator_commutation(i: Site, j: Site, sample: MultiIndex, spec: LatticeSpec) -> bool:
    """True iff O_i O_j and O_j O_i agree exactly on the sample."""
    if i == j:
        return True
    start = LinearCombination.of(sample)
    forward = apply_site_operator(i, apply_site_operator(j, start, spec), spec)
    backward = apply_site_operator(j, apply_site_operator(i, start, spec), spec)
    return forward == backward


# ============== Evaluation ==============

def evaluate_combination(lc: LinearCombination, values: Mapping[MultiIndex, float],
                         assignment: Optional[Mapping[str, Fraction]] = None,
                         parity_zero: bool = False) -> float:
    """
    Contract a combination with numeric primitive values. With parity_zero set,
    odd-weight primitives missing from `values` count as zero.
    """
    assignment = assignment or {}
    total = 0.0
    for nu, c in lc.items():
        if nu not in values:
            if parity_zero and nu.weight % 2:
                continue
            raise KeyError(f"No value for primitive {nu.key() or 'vacuum'}")
        total += float(c.evaluate(assignment)) * values[nu]
    return total
