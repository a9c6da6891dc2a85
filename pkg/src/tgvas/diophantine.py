"""Nonnegative integer linear systems.

Exact minimal solutions and Hilbert bases come from a Contejean-Devie
completion.  Large characteristic systems are handled with HiGHS (through
scipy) and every floating point answer is turned back into integers and
checked exactly before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

Row = tuple[tuple[tuple[str, int], ...], int]


class NotHomogeneous(ValueError):
    pass


class SolverFailure(RuntimeError):
    """The floating point solver returned something that failed exact checking."""


@dataclass(frozen=True)
class DioSystem:
    variables: tuple[str, ...]
    rows: tuple[Row, ...]
    lower: Mapping[str, int] = field(default_factory=dict)
    fixed: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        names = set(self.variables)
        if len(names) != len(self.variables):
            raise ValueError("variable declared twice")
        for coeffs, _ in self.rows:
            for var, _ in coeffs:
                if var not in names:
                    raise ValueError(f"undeclared variable {var}")
        for var, bound in self.lower.items():
            if var not in names or bound not in (0, 1):
                raise ValueError(f"bad lower bound for {var}")
        for var, value in self.fixed.items():
            if var not in names or value < 0:
                raise ValueError(f"bad fixed value for {var}")

    @property
    def is_homogeneous(self) -> bool:
        return (all(c == 0 for _, c in self.rows)
                and all(v == 0 for v in self.lower.values())
                and all(v == 0 for v in self.fixed.values()))

    def homogeneous(self) -> "DioSystem":
        return DioSystem(self.variables,
                         tuple((coeffs, 0) for coeffs, _ in self.rows),
                         {},
                         {v: 0 for v in self.fixed})

    def satisfied_by(self, values: Mapping[str, int]) -> bool:
        for var in self.variables:
            x = values.get(var, 0)
            if x < self.lower.get(var, 0):
                return False
        for var, v in self.fixed.items():
            if values.get(var, 0) != v:
                return False
        for coeffs, const in self.rows:
            if sum(c * values.get(var, 0) for var, c in coeffs) != const:
                return False
        return True

    def max_coefficient(self) -> int:
        biggest = 0
        for coeffs, const in self.rows:
            biggest = max([biggest, abs(const)] + [abs(c) for _, c in coeffs])
        return biggest

    def matrix(self):
        position = {v: i for i, v in enumerate(self.variables)}
        data, rows, cols, rhs = [], [], [], []
        for i, (coeffs, const) in enumerate(self.rows):
            for var, c in coeffs:
                rows.append(i)
                cols.append(position[var])
                data.append(c)
            rhs.append(const)
        shape = (len(self.rows), len(self.variables))
        return sparse.csr_matrix((data, (rows, cols)), shape=shape, dtype=float), rhs


class SystemBuilder:
    """Accumulates named variables and equations; equal terms are merged."""

    def __init__(self):
        self._variables: dict[str, None] = {}
        self._rows: list[Row] = []
        self.lower: dict[str, int] = {}
        self.fixed: dict[str, int] = {}

    def variable(self, name: str, lower: int = 0) -> str:
        self._variables.setdefault(name, None)
        if lower:
            self.lower[name] = max(self.lower.get(name, 0), lower)
        return name

    def equation(self, terms: Iterable[tuple[str, int]], const: int = 0):
        merged: dict[str, int] = {}
        for var, c in terms:
            self.variable(var)
            merged[var] = merged.get(var, 0) + c
        coeffs = tuple((v, c) for v, c in merged.items() if c != 0)
        if not coeffs and const == 0:
            return
        self._rows.append((coeffs, const))

    def fix(self, name: str, value: int):
        self.variable(name)
        if name in self.fixed and self.fixed[name] != value:
            # contradictory pins become an unsatisfiable row
            self._rows.append(((), 1))
            return
        self.fixed[name] = value

    def build(self) -> DioSystem:
        return DioSystem(tuple(self._variables), tuple(self._rows), dict(self.lower), dict(self.fixed))


def system_from_matrix(matrix, rhs=None, names=None) -> DioSystem:
    n = len(matrix[0]) if matrix else 0
    names = tuple(names or (f"x{i + 1}" for i in range(n)))
    rhs = rhs or [0] * len(matrix)
    rows = tuple((tuple((names[j], int(c)) for j, c in enumerate(row) if c), int(b))
                 for row, b in zip(matrix, rhs))
    return DioSystem(names, rows)


def pottier_bound(sys: DioSystem) -> int:
    n, m = len(sys.variables), len(sys.rows)
    return (1 + n * sys.max_coefficient()) ** m


# -- exact completion ----------------------------------------------------

def _dense(sys: DioSystem, columns: list[str]) -> list[list[int]]:
    position = {v: i for i, v in enumerate(columns)}
    table = []
    for coeffs, _ in sys.rows:
        row = [0] * len(columns)
        for var, c in coeffs:
            if var in position:
                row[position[var]] += c
        table.append(row)
    return table


def _completion(columns: list[list[int]], capped: int | None = None) -> list[tuple[int, ...]]:
    """Minimal nonzero solutions of sum_j x_j * columns[j] = 0 over the naturals.

    ``capped`` names a coordinate that may not exceed 1.
    """
    n = len(columns)
    if n == 0:
        return []
    m = len(columns[0])
    basis: list[tuple[int, ...]] = []

    def defect(p):
        return tuple(sum(p[j] * columns[j][i] for j in range(n)) for i in range(m))

    frontier = {tuple(1 if j == k else 0 for j in range(n)) for k in range(n)}
    while frontier:
        found = []
        successors = set()
        for p in sorted(frontier):
            d = defect(p)
            if not any(d):
                found.append(p)
                continue
            for j in range(n):
                if capped == j and p[j] >= 1:
                    continue
                if sum(d[i] * columns[j][i] for i in range(m)) < 0:
                    q = p[:j] + (p[j] + 1,) + p[j + 1:]
                    successors.add(q)
        basis.extend(found)
        frontier = {q for q in successors
                    if not any(all(b[j] <= q[j] for j in range(n)) for b in basis)}
    return sorted(basis)


def minimal_solutions(sys: DioSystem) -> list[dict[str, int]]:
    """All pointwise-minimal solutions.  For a homogeneous system the zero
    vector is left out, so the result is its Hilbert basis."""
    free = [v for v in sys.variables if v not in sys.fixed]
    shift = {v: sys.lower.get(v, 0) for v in free}
    columns_of = {v: [] for v in free}
    constants = []
    table = _dense(sys, free)
    for (coeffs, const), row in zip(sys.rows, table):
        known = sum(c * (sys.fixed.get(var, 0)) for var, c in coeffs if var in sys.fixed)
        constants.append(const - known - sum(row[j] * shift[v] for j, v in enumerate(free)))
    for i, row in enumerate(table):
        for j, v in enumerate(free):
            columns_of[v].append(row[j])
    homogeneous = all(c == 0 for c in constants) and not any(shift.values())
    if homogeneous:
        raw = _completion([columns_of[v] for v in free])
        found = [dict(zip(free, p)) for p in raw]
    else:
        if not free:
            return [dict(sys.fixed)] if all(c == 0 for c in constants) else []
        columns = [columns_of[v] for v in free] + [[-c for c in constants]]
        raw = _completion(columns, capped=len(free))
        found = []
        for p in raw:
            if p[-1] != 1:
                continue
            found.append({v: p[j] + shift[v] for j, v in enumerate(free)})
        if all(c == 0 for c in constants):
            # the shifted system is homogeneous: its only minimal solution is the shift itself
            found = [{v: shift[v] for v in free}]
    for sol in found:
        sol.update(sys.fixed)
    ordered = [{v: sol[v] for v in sys.variables} for sol in found]
    ordered.sort(key=lambda s: tuple(s[v] for v in sys.variables))
    return ordered


@dataclass(frozen=True)
class HilbertBasis:
    variables: tuple[str, ...]
    elements: tuple[tuple[int, ...], ...]
    sum_vector: tuple[int, ...]

    def as_dicts(self) -> list[dict[str, int]]:
        return [dict(zip(self.variables, e)) for e in self.elements]


def hilbert_basis(sys: DioSystem) -> HilbertBasis:
    if not sys.is_homogeneous:
        raise NotHomogeneous("Hilbert bases are defined for homogeneous systems only")
    sols = minimal_solutions(sys)
    elements = tuple(tuple(s[v] for v in sys.variables) for s in sols)
    total = tuple(sum(e[i] for e in elements) for i in range(len(sys.variables)))
    bound = pottier_bound(sys)
    for e in elements:
        assert max(e, default=0) <= bound, "minimal solution outside the Pottier box"
    return HilbertBasis(sys.variables, elements, total)


def variable_boundedness(sys: DioSystem, basis: HilbertBasis) -> dict[str, bool]:
    """True means bounded: the variable is zero in every homogeneous solution."""
    return {v: basis.sum_vector[i] == 0 for i, v in enumerate(basis.variables)}


# -- solver-backed routines ------------------------------------------------

def _bounds(sys: DioSystem):
    lower = np.array([sys.fixed.get(v, sys.lower.get(v, 0)) for v in sys.variables], dtype=float)
    upper = np.array([sys.fixed.get(v, np.inf) for v in sys.variables], dtype=float)
    return lower, upper


def _milp(sys: DioSystem, objective) -> dict[str, int] | None:
    n = len(sys.variables)
    if n == 0:
        return {} if sys.satisfied_by({}) else None
    matrix, rhs = sys.matrix()
    lower, upper = _bounds(sys)
    constraints = []
    if matrix.shape[0]:
        constraints.append(LinearConstraint(matrix, rhs, rhs))
    # presolve occasionally reports optimal on infeasible models, so a failed
    # exact check earns one retry without it
    for options in ({}, {"presolve": False}):
        result = milp(c=np.asarray(objective, dtype=float), constraints=constraints,
                      integrality=np.ones(n), bounds=Bounds(lower, upper), options=options)
        if result.status == 2:
            return None
        if result.x is None:
            raise SolverFailure(f"integer solver gave no answer: {result.message}")
        values = {v: int(round(x)) for v, x in zip(sys.variables, result.x)}
        if sys.satisfied_by(values):
            return values
    raise SolverFailure("integer solver answer failed exact check")


def minimal_solution(sys: DioSystem) -> dict[str, int] | None:
    """A pointwise-minimal solution: one of least total sum."""
    return _milp(sys, np.ones(len(sys.variables)))


def solve_one(sys: DioSystem) -> dict[str, int] | None:
    """The lexicographically least solution, which is always minimal."""
    current = minimal_solution(sys)
    if current is None:
        return None
    pinned = dict(sys.fixed)
    for i, var in enumerate(sys.variables):
        if var in pinned:
            continue
        floor = sys.lower.get(var, 0)
        if current[var] > floor:
            objective = np.zeros(len(sys.variables))
            objective[i] = 1.0
            trial = DioSystem(sys.variables, sys.rows, sys.lower, pinned)
            current = _milp(trial, objective)
        pinned[var] = current[var]
    return current


@dataclass(frozen=True)
class Support:
    """Variables that are positive in some homogeneous solution, with one
    integer homogeneous solution that is positive on all of them."""

    unbounded: frozenset[str]
    witness: dict[str, int]

    def bounded(self, var: str) -> bool:
        return var not in self.unbounded


def homogeneous_support(sys: DioSystem) -> Support:
    hom = sys.homogeneous()
    n = len(hom.variables)
    if n == 0:
        return Support(frozenset(), {})
    matrix, _ = hom.matrix()
    rows = matrix.shape[0]
    # variables (x, y): maximise sum(y) with y <= x, y <= 1
    a_eq = sparse.hstack([matrix, sparse.csr_matrix((rows, n))]).tocsr() if rows else None
    b_eq = np.zeros(rows) if rows else None
    eye = sparse.identity(n, format="csr")
    a_ub = sparse.hstack([-eye, eye]).tocsr()
    b_ub = np.zeros(n)
    upper_x = [0.0 if v in hom.fixed else None for v in hom.variables]
    bounds = [(0, u) for u in upper_x] + [(0, 0 if v in hom.fixed else 1) for v in hom.variables]
    cost = np.concatenate([np.zeros(n), -np.ones(n)])
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                     method="highs")
    if result.status != 0:
        raise SolverFailure(f"support LP failed: {result.message}")
    x = result.x[:n]
    y = result.x[n:]
    chosen = [i for i in range(n) if y[i] > 0.5]
    if not chosen:
        return Support(frozenset(), {v: 0 for v in hom.variables})
    scale = 1.0 / min(x[i] for i in chosen)
    exact = _rationalize(hom, [xi * scale if xi * scale > 1e-7 else 0.0 for xi in x], chosen)
    if exact is None:
        exact = _support_by_parts(hom, chosen)
    return Support(frozenset(hom.variables[i] for i in chosen), exact)


def _rationalize(hom: DioSystem, values, chosen) -> dict[str, int] | None:
    for limit in (10**3, 10**6):
        fracs = [Fraction(v).limit_denominator(limit) for v in values]
        if any(fracs[i] <= 0 for i in chosen):
            continue
        common = lcm(*(f.denominator for f in fracs))
        ints = {v: int(f * common) for v, f in zip(hom.variables, fracs)}
        if hom.satisfied_by(ints):
            return ints
    return None


def _support_by_parts(hom: DioSystem, chosen) -> dict[str, int]:
    """Fallback: one integer solution per chosen variable, summed."""
    total = {v: 0 for v in hom.variables}
    for i in chosen:
        var = hom.variables[i]
        lower = {var: 1}
        trial = DioSystem(hom.variables, hom.rows, lower, hom.fixed)
        sol = minimal_solution(trial)
        if sol is None:
            raise SolverFailure(f"support LP claimed {var} unbounded but no solution exists")
        for v in total:
            total[v] += sol[v]
    return total
