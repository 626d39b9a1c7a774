"""
Cross-module identity suite.
Each check exercises one identity between independent parts of the workbench
(reduction vs flows vs oracle vs closed forms) and reports pass/fail with the
measured deviation.
"""

import itertools
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

from src.coefficients import Coefficient
from src.evolution import (compatibility_residual, evaluate_correlator, generate_flow_system,
                           integrate_flow)
from src.lattice import LatticeSpec, MultiIndex, PotentialCoefficients, continuum_couplings
from src.oracle import direct_correlator
from src.propagators import (lattice_effective_params, propagator_circle, propagator_circle_closed,
                             propagator_circular_lattice, propagator_line)
from src.reduction import (LinearCombination, Reducer, check_operator_commutation,
                           gaussian_reduce, random_site_strategy)
from src.symmetry import burnside_orbit_count, count_primitive_basis

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    deviation: float = 0.0
    tolerance: float = 0.0
    detail: Dict = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return {'name': self.name, 'passed': self.passed, 'deviation': self.deviation,
                'tolerance': self.tolerance, 'detail': self.detail}


def _c(value, **powers) -> Coefficient:
    """value * prod(symbol^power); 'lam' stands for 'lambda'."""
    result = Coefficient.constant(Fraction(value))
    for name, power in powers.items():
        result = result * Coefficient.symbol('lambda' if name == 'lam' else name, power)
    return result


def indices_up_to(spec: LatticeSpec, max_weight: int) -> List[MultiIndex]:
    """Every multi-index with weight at most max_weight, by weight then dense order."""
    found = []
    for dense in itertools.product(range(max_weight + 1), repeat=spec.site_count):
        if sum(dense) <= max_weight:
            found.append((sum(dense), dense))
    return [spec.index(dense) for _, dense in sorted(found)]


# ============== Reference systems ==============

def expected_single_site_k_flow() -> Dict[tuple, LinearCombination]:
    p0, p2 = MultiIndex.from_dense((0,), 1), MultiIndex.from_dense((2,), 1)
    return {
        (0,): LinearCombination({p2: _c(Fraction(-1, 2))}),
        (2,): LinearCombination({p2: _c(Fraction(1, 2), k=1, lam=-1), p0: _c(Fraction(-1, 2), lam=-1)}),
    }


def expected_single_site_lambda_flow() -> Dict[tuple, LinearCombination]:
    p0, p2 = MultiIndex.from_dense((0,), 1), MultiIndex.from_dense((2,), 1)
    return {
        (0,): LinearCombination({p2: _c(Fraction(1, 4), k=1, lam=-1), p0: _c(Fraction(-1, 4), lam=-1)}),
        (2,): LinearCombination({
            p2: _c(Fraction(-1, 4), k=2, lam=-2) + _c(Fraction(-3, 4), lam=-1),
            p0: _c(Fraction(1, 4), k=1, lam=-2),
        }),
    }


def expected_two_site_w_flow() -> Dict[tuple, LinearCombination]:
    """Per-site couplings k_0, k_1, lambda_0, lambda_1 and one collapsed bond w."""
    def idx(*dense):
        return MultiIndex.from_dense(dense, 2)

    def c(value, **powers):
        return _c(value, **powers)

    inv = {'lambda_0': -1, 'lambda_1': -1}
    return {
        (0, 0): LinearCombination({idx(1, 1): c(1)}),
        (1, 1): LinearCombination({idx(2, 2): c(1)}),
        (2, 0): LinearCombination({idx(1, 1): c(-1, k_0=1, lambda_0=-1), idx(0, 2): c(1, w=1, lambda_0=-1)}),
        (0, 2): LinearCombination({idx(1, 1): c(-1, k_1=1, lambda_1=-1), idx(2, 0): c(1, w=1, lambda_1=-1)}),
        (2, 2): LinearCombination({
            idx(1, 1): c(1, k_0=1, k_1=1, **inv) + c(1, w=2, **inv),
            idx(2, 0): c(-1, k_0=1, w=1, **inv),
            idx(0, 2): c(-1, k_1=1, w=1, **inv),
            idx(0, 0): c(1, w=1, **inv),
        }),
    }


# ============== Checks ==============

def check_symbolic_flows() -> CheckResult:
    mismatches = []
    cases = [
        ('k', LatticeSpec.uniform(1, 1), expected_single_site_k_flow()),
        ('lambda', LatticeSpec.uniform(1, 1), expected_single_site_lambda_flow()),
        ('w', LatticeSpec.per_site(1, 2), expected_two_site_w_flow()),
    ]
    for parameter, spec, expected in cases:
        system = generate_flow_system(spec, parameter)
        label = system.labels[0]
        rows = {system.spec.dense(nu): system.matrices[label][nu] for nu in system.basis}
        if set(rows) != set(expected):
            mismatches.append(f"{parameter}: basis {sorted(rows)}")
            continue
        for dense, row in expected.items():
            if rows[dense] != row:
                mismatches.append(f"{parameter}: row {dense} is {rows[dense]}")
    return CheckResult('symbolic_flows', not mismatches, float(len(mismatches)), 0.0,
                       {'mismatches': mismatches})


def check_gaussian_identity(trials: int = 100, max_extent: int = 8, seed: int = 7) -> CheckResult:
    """Exact two-site covariance, then the DFT propagator under the continuum coupling map."""
    rng = random.Random(seed)
    failures = []
    for _ in range(trials):
        k1, k2 = Fraction(rng.randint(1, 40), rng.randint(1, 9)), Fraction(rng.randint(1, 40), rng.randint(1, 9))
        w = Fraction(rng.randint(-30, 30), rng.randint(1, 9))
        if k1 * k2 == w * w:
            continue
        spec = LatticeSpec(1, 2, (PotentialCoefficients(k=k1, lam=0), PotentialCoefficients(k=k2, lam=0)), (w,))
        value = gaussian_reduce(spec.index((1, 1)), spec)
        if value != w / (k1 * k2 - w * w):
            failures.append(f"k1={k1} k2={k2} w={w}: {value}")

    worst = 0.0
    m, a = 1.0, 0.5
    for extent in range(2, max_extent + 1):
        couplings = continuum_couplings(m, a, extent)
        spec = LatticeSpec.numeric(1, extent, k=Fraction(couplings['k']), lam=0, w=Fraction(couplings['w']))
        for separation in range(extent):
            dense = [0] * extent
            dense[0] += 1
            dense[separation] += 1
            ratio = float(gaussian_reduce(spec.index(dense), spec))
            worst = max(worst, abs(ratio - propagator_circular_lattice(m, extent, a, separation)))
    tolerance = 1e-10
    return CheckResult('gaussian_identity', not failures and worst < tolerance, worst, tolerance,
                       {'exact_failures': failures[:5]})


def check_counting() -> CheckResult:
    """Parity counts, cubic raw counts, and full orbit counts against their bound and Burnside."""
    expected = [2, 5, 14, 41, 122, 365, 1094, 3281]
    problems = []
    for n, value in zip(range(1, 9), expected):
        if count_primitive_basis(n, 1, 4, 'parity') != value:
            problems.append(f"parity N={n}")
        if count_primitive_basis(n, 1, 3, 'none') != 2 ** n:
            problems.append(f"cubic N={n}")
    for n in range(3, 9):
        full = count_primitive_basis(n, 1, 4, 'full')
        if full < 3 ** n / (4 * n):
            problems.append(f"bound N={n}")
        if full != burnside_orbit_count(n, 1, 4, parity=True):
            problems.append(f"burnside N={n}")
        if count_primitive_basis(n, 1, 3, 'full') != burnside_orbit_count(n, 1, 3):
            problems.append(f"cubic burnside N={n}")
    return CheckResult('counting', not problems, float(len(problems)), 0.0, {'problems': problems})


def check_propagators() -> CheckResult:
    params = lattice_effective_params(1.0, 0.9)
    deviations = {
        'Z_eff': abs(params.Z_eff - 0.456),
        'm_eff': abs(params.m_eff - 0.969),
        'line_origin': abs(propagator_line(1.0, 0.0) - 0.5),
        'periodicity': abs(propagator_circle(1.0, 8.0, 1.0) - propagator_circle(1.0, 8.0, 9.0)),
        'resummed': max(abs(propagator_circle(1.0, 8.0, t) - propagator_circle_closed(1.0, 8.0, t))
                        for t in (0.0, 0.5, 1.0, 2.0, 4.0)),
    }
    relative = max(abs(propagator_circle(1.0, 8.0, t) / propagator_line(1.0, t) - 1.0)
                   for t in (0.0, 0.5, 1.0, 1.5, 2.0))
    passed = (deviations['Z_eff'] < 1e-3 and deviations['m_eff'] < 1e-3 and deviations['line_origin'] < 1e-15
              and deviations['periodicity'] < 1e-10 and deviations['resummed'] < 1e-10 and relative < 0.05)
    deviations['line_relative'] = relative
    return CheckResult('propagators', passed, max(deviations.values()), 1e-3, deviations)


def check_path_independence(extent: int = 3, orders: int = 20, max_weight: int = 7) -> CheckResult:
    spec = LatticeSpec.uniform(1, extent)
    reference = Reducer(spec)
    failures = []
    targets = [nu for nu in indices_up_to(spec, max_weight) if len(reference.reducible_sites(nu)) > 1]
    for seed in range(orders):
        shuffled = Reducer(spec, strategy=random_site_strategy(seed))
        for nu in targets:
            if shuffled.reduce(nu) != reference.reduce(nu):
                failures.append(f"seed {seed}: {nu.key()}")
    return CheckResult('path_independence', not failures, float(len(failures)), 0.0,
                       {'indices': len(targets), 'orders': orders, 'failures': failures[:5]})


def check_commutation(max_extent: int = 5, samples: int = 5, seed: int = 11) -> CheckResult:
    rng = random.Random(seed)
    failures = []
    checked = 0
    for extent in range(3, max_extent + 1):
        spec = LatticeSpec.uniform(1, extent)
        for _ in range(samples):
            dense = [rng.randint(3, 6) for _ in range(extent)]
            nu = spec.index(dense)
            for i, j in itertools.combinations(range(extent), 2):
                checked += 1
                if not check_operator_commutation(spec.site(i), spec.site(j), nu, spec):
                    failures.append(f"N={extent} {dense} ({i},{j})")
    return CheckResult('operator_commutation', not failures, float(len(failures)), 0.0,
                       {'pairs': checked, 'failures': failures[:5]})


def check_master_identity(extent: int = 2, max_weight: int = 6, tol: float = 1e-5) -> CheckResult:
    """Reduction plus integrated flow against the direct integral, for every small correlator."""
    couplings = {'k': Fraction(1), 'lam': Fraction(1, 2), 'w': Fraction(1, 4)}
    spec = LatticeSpec.numeric(1, extent, **couplings)
    system = generate_flow_system(spec, 'w')
    state = integrate_flow(system, float(couplings['w']))
    worst = 0.0
    for nu in indices_up_to(spec, max_weight):
        flowed = evaluate_correlator(nu, system, state)
        direct = direct_correlator(spec, nu).normalized
        deviation = abs(flowed - direct) / max(abs(direct), 1e-3)
        worst = max(worst, deviation)
    return CheckResult('master_identity', worst < tol, worst, tol, {'extent': extent, 'max_weight': max_weight})


def check_compatibility(extent: int = 3, points: int = 3, seed: int = 5, tol: float = 1e-8) -> CheckResult:
    """Per-bond flows commute: zero curvature at random rational couplings."""
    spec = LatticeSpec.numeric(1, extent, k=1, lam=Fraction(1, 2))
    system = generate_flow_system(spec, 'w_bonds')
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(points):
        point = [Fraction(rng.randint(1, 9), rng.randint(10, 40)) for _ in system.labels]
        for i, j in itertools.combinations(range(len(system.labels)), 2):
            for xi in system.basis:
                worst = max(worst, compatibility_residual(spec, None, point, i, j, xi, system=system))
    return CheckResult('compatibility', worst < tol, worst, tol, {'extent': extent, 'points': points})


SUITE: Dict[str, Callable[[], CheckResult]] = {
    'symbolic_flows': check_symbolic_flows,
    'gaussian_identity': check_gaussian_identity,
    'counting': check_counting,
    'propagators': check_propagators,
    'path_independence': check_path_independence,
    'operator_commutation': check_commutation,
    'master_identity': check_master_identity,
    'compatibility': check_compatibility,
}

DEFAULT_CHECKS = ('symbolic_flows', 'gaussian_identity', 'counting', 'propagators',
                  'path_independence', 'operator_commutation', 'master_identity')


def run_suite(names: Optional[Sequence[str]] = None) -> List[CheckResult]:
    """Run the named checks (default suite when empty); exceptions count as failures."""
    results = []
    for name in names or DEFAULT_CHECKS:
        if name not in SUITE:
            raise ValueError(f"Unknown check '{name}'")
        logger.info(f"Running check {name}")
        try:
            result = SUITE[name]()
        except Exception as e:
            logger.error(f"Check {name} raised {type(e).__name__}: {e}")
            result = CheckResult(name, False, detail={'error': f"{type(e).__name__}: {e}"})
        logger.info(f"Check {name}: {'pass' if result.passed else 'FAIL'} (deviation {result.deviation:.3g})")
        results.append(result)
    return results
