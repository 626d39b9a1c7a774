"""
Coupling-flow module.
Builds the linear differential systems obeyed by primitive correlators as a
coupling varies, supplies exact random-field initial data, integrates the
Cauchy problem and checks the compatibility of commuting per-bond flows.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import integrate

from src.coefficients import Coefficient, Monomial, ONE
from src.config import FLOW_CONFIG
from src.lattice import LatticeSpec, MultiIndex, PotentialCoefficients, primitive_basis, truncation_radius
from src.reduction import (LinearCombination, Reducer, evaluate_combination, get_reducer,
                           reduce_to_primitive)
from src.symmetry import canonical_index, canonicalize_combination

logger = logging.getLogger(__name__)

PARAMETERS = ('w', 'w_bonds', 'k', 'lambda')


class NonIntegrablePotentialError(ValueError):
    pass


class SingularFlowPointError(ValueError):
    pass


class StepUnderflowError(RuntimeError):
    pass


# ============== Random-field initial data ==============

@lru_cache(maxsize=4096)
def _onsite_moment(nu_i: int, pot: PotentialCoefficients, tol: float) -> float:
    a, k, g, lam = (float(pot.a), float(pot.k), float(pot.g), float(pot.lam))
    radius = truncation_radius(pot, nu_i, tol)

    def integrand(phi):
        return phi ** nu_i * math.exp(-a * phi - k * phi * phi / 2 - g * phi ** 3 / 3 - lam * phi ** 4 / 4)

    if pot.is_even:
        value, _ = integrate.quad(integrand, 0.0, radius, epsabs=tol, epsrel=tol, limit=400)
        return 2.0 * value
    value, _ = integrate.quad(integrand, -radius, radius, points=[0.0], epsabs=tol, epsrel=tol, limit=400)
    return value


def onsite_moment(nu_i: int, pot: PotentialCoefficients, tol: float = None) -> float:
    """Integral of phi^nu exp(-V(phi)) over the real line for one decoupled site."""
    tol = tol or FLOW_CONFIG['tol'] * 1e-2
    lam, k = pot.lam, pot.k
    if not pot.is_numeric:
        raise ValueError("onsite moments need numeric potential coefficients")
    if lam < 0 or (lam == 0 and k <= 0):
        raise NonIntegrablePotentialError(f"non-integrable potential: lambda={lam}, k={k}")
    if nu_i < 0:
        raise ValueError(f"occupation must be nonnegative, got {nu_i}")
    if nu_i % 2 and pot.is_even:
        return 0.0
    return _onsite_moment(int(nu_i), pot, float(tol))


def initial_primitive_values(spec: LatticeSpec, basis: Sequence[MultiIndex], tol: float = None) -> np.ndarray:
    """Primitive correlators of the decoupled lattice, one product of onsite moments each."""
    if not spec.is_random_field:
        raise ValueError("initial values need every bond coupling equal to zero")
    values = np.empty(len(basis))
    for row, nu in enumerate(basis):
        product = 1.0
        for site in spec.sites:
            product *= onsite_moment(nu.get(site), spec.potential(site), tol)
        values[row] = product
    return values


# ============== Flow systems ==============

@dataclass
class FlowSystem:
    """
    Linear system dP(nu)/dp_L = sum_mu g^(L)_nu(mu) P(mu) over an ordered primitive basis.
    `spec` carries the flowing couplings as symbols; `initial_point` assigns the rest.
    """

    spec: LatticeSpec
    parameter: str
    basis: List[MultiIndex]
    labels: List[str]
    matrices: Dict[str, Dict[MultiIndex, LinearCombination]]
    initial_point: Dict[str, Fraction] = field(default_factory=dict)
    compressed: bool = False
    row_steps: Dict[str, Dict[MultiIndex, int]] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.basis)

    def row(self, label: str, nu: MultiIndex) -> LinearCombination:
        return self.matrices[label][nu]

    def position(self, nu: MultiIndex) -> int:
        return self.basis.index(nu)

    def describe(self) -> List[Dict]:
        rows = []
        for label in self.labels:
            for nu in self.basis:
                rows.append({
                    'label': label,
                    'row': list(self.spec.dense(nu)),
                    'terms': self.matrices[label][nu].to_terms(self.spec),
                })
        return rows


def _flow_spec(spec: LatticeSpec, parameter: str) -> Tuple[LatticeSpec, List[str]]:
    """Replace the flowing couplings by symbols; returns the lattice and the flow labels."""
    if parameter == 'w':
        return spec.with_bond_couplings(['w'] * len(spec.bonds)), ['w']
    if parameter == 'w_bonds':
        labels = [f'w_{b}' for b in range(len(spec.bonds))]
        return spec.with_bond_couplings(labels), labels
    if parameter in ('k', 'lambda'):
        name = 'k' if parameter == 'k' else 'lam'
        potentials = tuple(PotentialCoefficients(**{**_fields(p), name: parameter}) for p in spec.site_potentials)
        return LatticeSpec(spec.dimension, spec.extent, potentials, spec.bond_couplings), [parameter]
    raise ValueError(f"Unknown flow parameter '{parameter}'")


def _fields(p: PotentialCoefficients) -> Dict:
    return {'a': p.a, 'k': p.k, 'g': p.g, 'lam': p.lam}


def _derived_correlators(nu: MultiIndex, spec: LatticeSpec, parameter: str,
                         label_index: Optional[int]) -> List[Tuple[MultiIndex, Coefficient]]:
    """Correlators (with weights) whose sum is dP(nu)/dp."""
    if parameter in ('w', 'w_bonds'):
        bonds = spec.bonds if label_index is None else [spec.bonds[label_index]]
        return [(nu.shifted({s1: 1, s2: 1}), ONE) for s1, s2 in bonds]
    if parameter == 'k':
        return [(nu.shifted({site: 2}), Coefficient.constant(Fraction(-1, 2))) for site in spec.sites]
    return [(nu.shifted({site: 4}), Coefficient.constant(Fraction(-1, 4))) for site in spec.sites]


def generate_flow_system(spec: LatticeSpec, parameter: str = 'w', basis: Optional[Sequence[MultiIndex]] = None,
                         compress: bool = False, threads: Optional[int] = None,
                         point: Optional[Mapping[str, Fraction]] = None) -> FlowSystem:
    """
    Reduce the derivative of every basis correlator back onto the basis.
    With compress, rows are kept for canonical orbit members only and right-hand
    sides are merged onto canonical indices.
    """
    flow_spec, labels = _flow_spec(spec, parameter)
    reducer = get_reducer(flow_spec)
    if basis is None:
        basis = primitive_basis(flow_spec)
        if compress:
            seen = []
            for nu in basis:
                rep = canonical_index(nu, flow_spec)
                if rep not in seen:
                    seen.append(rep)
            basis = seen
    basis = list(basis)
    members = set(basis)

    matrices: Dict[str, Dict[MultiIndex, LinearCombination]] = {}
    row_steps: Dict[str, Dict[MultiIndex, int]] = {}
    for index, label in enumerate(labels):
        bond = index if parameter == 'w_bonds' else None
        derived = {nu: _derived_correlators(nu, flow_spec, parameter, bond) for nu in basis}
        wanted = sorted({mu for terms in derived.values() for mu, _ in terms})
        reduced = dict(zip(wanted, reducer.reduce_many(wanted, threads)))
        rows: Dict[MultiIndex, LinearCombination] = {}
        steps: Dict[MultiIndex, int] = {}
        for nu, terms in derived.items():
            total = LinearCombination.zero()
            for mu, weight in terms:
                total = total + reduced[mu].scaled(weight)
            if compress:
                total = canonicalize_combination(total, flow_spec)
            stray = [mu for mu in total.indices() if mu not in members]
            if stray:
                raise ValueError(f"Row {nu.key() or 'vacuum'} leaves the basis at {stray[0].key()}")
            rows[nu] = total
            steps[nu] = sum(reducer.trace(mu).steps for mu, _ in terms)
        matrices[label] = rows
        row_steps[label] = steps

    logger.info(f"Generated {parameter}-flow system: {len(basis)} rows, {len(labels)} matrices")
    return FlowSystem(spec=flow_spec, parameter=parameter, basis=basis, labels=labels,
                      matrices=matrices, initial_point=dict(point or {}), compressed=compress, row_steps=row_steps)


def classify_rows(system: FlowSystem) -> List[Dict]:
    """One-term rows carry a single basis correlator with unit coefficient; the rest are many-term."""
    rows = []
    for label in system.labels:
        for nu in system.basis:
            rhs = system.matrices[label][nu]
            one_term = len(rhs) == 1 and rhs.items()[0][1] == ONE
            rows.append({
                'label': label,
                'row': nu,
                'kind': 'one-term' if one_term else 'many-term',
                'lds_steps': system.row_steps.get(label, {}).get(nu, 0),
            })
    return rows


def dependency_closure(seed: Iterable[MultiIndex], system: FlowSystem) -> Set[MultiIndex]:
    """Smallest set containing the seed and every correlator its rows refer to."""
    closure = set(seed)
    frontier = list(closure)
    while frontier:
        nu = frontier.pop()
        for label in system.labels:
            row = system.matrices[label].get(nu)
            if row is None:
                continue
            for mu in row.indices():
                if mu not in closure:
                    closure.add(mu)
                    frontier.append(mu)
    return closure


# ============== Numeric matrices ==============

class CompiledFlow:
    """Each matrix written as sum_e A_e * p^e over monomials e in the flow symbols."""

    def __init__(self, system: FlowSystem, assignment: Optional[Mapping[str, Fraction]] = None):
        assignment = dict(system.initial_point, **(assignment or {}))
        self.labels = system.labels
        self.size = system.size
        position = {nu: i for i, nu in enumerate(system.basis)}
        self.parts: Dict[str, List[Tuple[Monomial, np.ndarray]]] = {}
        for label in system.labels:
            blocks: Dict[Monomial, np.ndarray] = {}
            for nu, rhs in system.matrices[label].items():
                row = position[nu]
                for mu, c in rhs.items():
                    reduced = c.substitute(assignment)
                    for monomial, value in reduced.items():
                        stray = [s for s in monomial.symbols() if s not in self.labels]
                        if stray:
                            raise ValueError(f"unassigned symbol: {stray[0]}")
                        block = blocks.setdefault(monomial, np.zeros((self.size, self.size)))
                        block[row, position[mu]] += float(value)
            self.parts[label] = sorted(blocks.items(), key=lambda item: item[0])

    def matrix(self, label: str, point: Mapping[str, float]) -> np.ndarray:
        total = np.zeros((self.size, self.size))
        for monomial, block in self.parts[label]:
            factor = 1.0
            for symbol, power in monomial.exponents:
                factor *= point[symbol] ** power
            total += factor * block
        return total


@dataclass
class FlowState:
    parameters: Dict[str, float]
    values: np.ndarray
    basis: List[MultiIndex]
    error_estimate: float = 0.0

    def value(self, nu: MultiIndex) -> float:
        return float(self.values[self.basis.index(nu)])

    def as_map(self) -> Dict[MultiIndex, float]:
        return {nu: float(v) for nu, v in zip(self.basis, self.values)}

    def normalized(self) -> Dict[MultiIndex, float]:
        """<Phi^mu> = P(mu)/P(0)."""
        vacuum = self.value(MultiIndex.vacuum())
        return {nu: float(v) / vacuum for nu, v in zip(self.basis, self.values)}


def _as_point(system: FlowSystem, value, default: Optional[float]) -> Dict[str, float]:
    if value is None:
        if default is None:
            raise ValueError(f"No start point given for the {system.parameter}-flow")
        return {label: default for label in system.labels}
    if isinstance(value, Mapping):
        return {label: float(value[label]) for label in system.labels}
    if isinstance(value, (int, float, Fraction)):
        return {label: float(value) for label in system.labels}
    values = list(value)
    if len(values) != len(system.labels):
        raise ValueError(f"Expected {len(system.labels)} parameter values, got {len(values)}")
    return {label: float(v) for label, v in zip(system.labels, values)}


def _exact(value: float) -> Fraction:
    return Fraction(value).limit_denominator(10 ** 12) if isinstance(value, float) else Fraction(value)


def _start_spec(system: FlowSystem, start: Mapping[str, float]) -> LatticeSpec:
    assignment = dict(system.initial_point)
    assignment.update({label: _exact(v) for label, v in start.items()})
    return system.spec.with_couplings(assignment)


def _integrate_leg(compiled: CompiledFlow, y0: np.ndarray, start: Dict[str, float],
                   end: Dict[str, float], tol: float) -> np.ndarray:
    delta = {label: end[label] - start[label] for label in compiled.labels}
    moving = [label for label in compiled.labels if delta[label] != 0.0]
    if not moving:
        return y0

    def rhs(s, y):
        point = {label: start[label] + s * delta[label] for label in compiled.labels}
        total = np.zeros_like(y)
        for label in moving:
            total += delta[label] * (compiled.matrix(label, point) @ y)
        return total

    atol = np.maximum(tol * np.abs(y0), FLOW_CONFIG['atol_floor'])
    solution = integrate.solve_ivp(rhs, (0.0, 1.0), y0, method=FLOW_CONFIG['method'],
                                   rtol=tol, atol=atol, max_step=FLOW_CONFIG['max_step'])
    if not solution.success:
        raise StepUnderflowError(f"step underflow: {solution.message}")
    logger.debug(f"Flow leg {start} -> {end}: {solution.nfev} evaluations")
    return solution.y[:, -1]


def integrate_flow(system: FlowSystem, target, tol: float = None, start=None,
                   initial: Optional[Sequence[float]] = None, path: str = 'diagonal',
                   estimate_error: bool = True) -> FlowState:
    """
    Integrate from `start` (w and k flows default to 0) to `target`.
    Without `initial`, the start point must be a random-field lattice whose
    primitives are products of onsite moments.
    """
    tol = tol or FLOW_CONFIG['tol']
    if path not in ('diagonal', 'sequential'):
        raise ValueError(f"Unknown integration path '{path}'")
    default_start = None if system.parameter == 'lambda' else 0.0
    begin = _as_point(system, start, default_start)
    end = _as_point(system, target, None)

    if system.parameter == 'lambda':
        for label in system.labels:
            if begin[label] * end[label] <= 0:
                raise SingularFlowPointError(f"singular flow point: path {begin[label]} -> {end[label]} touches lambda = 0")

    if initial is None:
        y0 = initial_primitive_values(_start_spec(system, begin), system.basis, tol * 1e-2)
    else:
        y0 = np.asarray(initial, dtype=float)
        if y0.shape != (system.size,):
            raise ValueError(f"Initial vector has shape {y0.shape}, basis has {system.size} members")

    compiled = CompiledFlow(system)

    def run(step_tol: float) -> np.ndarray:
        y = y0
        if path == 'diagonal':
            return _integrate_leg(compiled, y, begin, end, step_tol)
        current = dict(begin)
        for label in system.labels:
            following = dict(current)
            following[label] = end[label]
            y = _integrate_leg(compiled, y, current, following, step_tol)
            current = following
        return y

    values = run(tol)
    error = 0.0
    if estimate_error and any(begin[label] != end[label] for label in system.labels):
        coarse = run(min(tol * 100, 1e-4))
        error = float(np.max(np.abs(values - coarse)))
    logger.info(f"Integrated {system.parameter}-flow to {end} ({path}), error estimate {error:.2e}")
    return FlowState(parameters=end, values=np.array(values), basis=list(system.basis), error_estimate=error)


def evaluate_correlator(nu: MultiIndex, system: FlowSystem, state: FlowState,
                        reducer: Optional[Reducer] = None) -> float:
    """Normalized <Phi^nu> at the state's couplings: reduce, then contract with the primitives."""
    assignment = dict(system.initial_point)
    assignment.update({label: _exact(v) for label, v in state.parameters.items()})
    spec = system.spec.with_couplings(assignment)
    combination, _ = reduce_to_primitive(nu, spec, reducer)
    if system.compressed:
        combination = canonicalize_combination(combination, spec)
    values = state.as_map()
    total = evaluate_combination(combination, values, assignment, parity_zero=spec.is_even)
    return total / state.value(MultiIndex.vacuum())


# ============== Compatibility ==============

def compatibility_residual(spec: LatticeSpec, basis: Optional[Sequence[MultiIndex]], point: Sequence,
                           i: int, j: int, xi: MultiIndex, system: Optional[FlowSystem] = None) -> float:
    """
    Largest |d_i g^(j)_nu(xi) - d_j g^(i)_nu(xi) + sum_mu [g^(j)_nu(mu) g^(i)_mu(xi) - g^(i)_nu(mu) g^(j)_mu(xi)]|
    over rows nu of the per-bond system, evaluated exactly at the bond couplings `point`.
    """
    if system is None:
        system = generate_flow_system(spec, 'w_bonds', basis)
    if i == j or len(system.labels) < 2:
        return 0.0
    li, lj = system.labels[i], system.labels[j]
    assignment = dict(system.initial_point)
    assignment.update({label: Fraction(v) if not isinstance(v, float) else _exact(v)
                       for label, v in zip(system.labels, point)})
    gi, gj = system.matrices[li], system.matrices[lj]

    worst = 0.0
    for nu in system.basis:
        residual = gj[nu].coefficient(xi).derivative(li) - gi[nu].coefficient(xi).derivative(lj)
        for mu in system.basis:
            a, b = gj[nu].coefficient(mu), gi[nu].coefficient(mu)
            if a:
                residual = residual + a * gi[mu].coefficient(xi)
            if b:
                residual = residual - b * gj[mu].coefficient(xi)
        worst = max(worst, abs(float(residual.evaluate(assignment))))
    return worst
