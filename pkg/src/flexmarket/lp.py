"""Convex optimization core with exact dual extraction.

Solves linear programs with optional diagonal convex quadratic objective
terms.  Quadratic variables are handled by an incremental piecewise
linear expansion whose grid is refined adaptively around the optimum
until the stationarity error of the true quadratic is below the KKT
tolerance, so reported primal/dual pairs satisfy the quadratic KKT
system to 1e-7 (scaled).  The LP backend is HiGHS dual simplex (via
scipy), which returns basic optimal solutions, hence vertex duals, and
is deterministic for identical input.

Binary variables are supported by exhaustive enumeration of the
non-dominated assignments; duals always come from the continuous
restriction at the winning assignment (restricted pricing).

Dual sign convention: ``dual[label] = d(objective)/d(rhs)``.  For a
binding ``>=`` row the dual is nonnegative, for ``<=`` nonpositive.

A program instance is mutable while being built; solving never mutates
it, so one built program may be solved from several threads.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

KKT_TOL = 1e-7
# Target stationarity error for quadratic terms; grid refinement stops
# once the local segment width w satisfies 2*q*w <= this.
QUAD_STATION_TOL = 1e-8
MAX_REFINE_ROUNDS = 40
MAX_BINARIES = 20

SENSES = ("==", "<=", ">=")


class SolverError(Exception):
    """Raised on malformed programs or numeric failure."""


@dataclass
class _Var:
    name: str
    lo: float
    hi: float | None
    cost: float
    quad: float


@dataclass
class _Row:
    label: str
    terms: list[tuple[int, float]]
    sense: str
    rhs: float


@dataclass(frozen=True)
class SolveResult:
    status: str                     # optimal | infeasible | unbounded
    objective: float = float("nan")
    values: dict[str, float] = field(default_factory=dict)
    duals: dict[str, float] = field(default_factory=dict)
    reduced: dict[str, float] = field(default_factory=dict)
    kkt: float = float("nan")

    def __getitem__(self, name: str) -> float:
        return self.values[name]


class ConvexProgram:
    """Builder for a minimization with =, <=, >= rows and bounds."""

    def __init__(self, name: str = ""):
        self.name = name
        self._vars: list[_Var] = []
        self._index: dict[str, int] = {}
        self._rows: list[_Row] = []
        self._labels: set[str] = set()
        self.offset = 0.0

    # -- construction -------------------------------------------------

    def add_variable(
        self,
        name: str,
        lo: float = 0.0,
        hi: float | None = None,
        cost: float = 0.0,
        quad: float = 0.0,
    ) -> str:
        if name in self._index:
            raise SolverError(f"duplicate variable {name!r}")
        if quad < 0:
            raise SolverError(f"{name!r}: negative quadratic coefficient {quad}")
        if quad > 0 and (hi is None or not np.isfinite(hi) or not np.isfinite(lo)):
            raise SolverError(f"{name!r}: quadratic variables need finite bounds")
        if hi is not None and hi < lo:
            raise SolverError(f"{name!r}: empty bound range [{lo}, {hi}]")
        self._index[name] = len(self._vars)
        self._vars.append(_Var(name, lo, hi, cost, quad))
        return name

    def add_cost(self, name: str, cost: float) -> None:
        self._vars[self._index[name]].cost += cost

    def add_constraint(
        self, label: str, terms: dict[str, float], sense: str, rhs: float
    ) -> str:
        if sense not in SENSES:
            raise SolverError(f"bad sense {sense!r}")
        if label in self._labels:
            raise SolverError(f"duplicate constraint label {label!r}")
        idx_terms = []
        for name, coef in terms.items():
            if name not in self._index:
                raise SolverError(f"constraint {label!r} uses unknown {name!r}")
            if coef != 0.0:
                idx_terms.append((self._index[name], float(coef)))
        self._labels.add(label)
        self._rows.append(_Row(label, idx_terms, sense, float(rhs)))
        return label

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self._vars]

    @property
    def constraint_labels(self) -> list[str]:
        return [r.label for r in self._rows]

    def bounds_of(self, name: str) -> tuple[float, float | None]:
        v = self._vars[self._index[name]]
        return v.lo, v.hi

    # -- debug dump ---------------------------------------------------

    def to_lp_text(self) -> str:
        """Human-readable dump, one constraint per line."""
        def expr(terms):
            parts = []
            for j, c in terms:
                n = self._vars[j].name
                parts.append(f"{'+' if c >= 0 else '-'} {abs(c):g} {n}")
            return " ".join(parts) if parts else "0"

        lines = [f"\\ program {self.name}" if self.name else "\\ program", "minimize"]
        obj = [(j, v.cost) for j, v in enumerate(self._vars) if v.cost]
        lines.append("  " + expr(obj))
        for j, v in enumerate(self._vars):
            if v.quad:
                lines.append(f"  + {v.quad:g} {v.name}^2")
        if self.offset:
            lines.append(f"  + {self.offset:g}")
        lines.append("subject to")
        for r in self._rows:
            op = {"==": "=", "<=": "<=", ">=": ">="}[r.sense]
            lines.append(f"  {r.label}: {expr(r.terms)} {op} {r.rhs:g}")
        lines.append("bounds")
        for v in self._vars:
            hi = "inf" if v.hi is None else f"{v.hi:g}"
            lines.append(f"  {v.lo:g} <= {v.name} <= {hi}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------


def _base_grid(lo: float, hi: float, w_min: float) -> list[float]:
    """Geometric breakpoint ladder on [lo, hi], densest near lo."""
    span = hi - lo
    if span <= 0:
        return [lo, hi]
    pts = [lo]
    w = max(min(w_min, span), span * 1e-16)
    x = w
    while x < span:
        pts.append(lo + x)
        x *= 4.0
    pts.append(hi)
    return pts


def _merge_points(base: list[float], extra: set[float], lo: float, hi: float) -> list[float]:
    allpts = sorted(set(base) | {p for p in extra if lo < p < hi})
    out = [allpts[0]]
    gap = max((hi - lo) * 1e-14, 1e-15)
    for p in allpts[1:]:
        if p - out[-1] > gap:
            out.append(p)
    if out[-1] != hi:
        out.append(hi)
    return out


def _solve_lp_once(program, grids):
    """One HiGHS solve of the PWL expansion.  Returns the raw pieces."""
    npub = len(program._vars)
    cols_of: list[list[int]] = [[] for _ in range(npub)]
    costs: list[float] = []
    bounds: list[tuple[float, float | None]] = []
    col_break: list[tuple[int, int]] = []  # (public var, segment index)

    for j, v in enumerate(program._vars):
        if v.quad > 0.0:
            bp = grids[j]
            for k in range(len(bp) - 1):
                w = bp[k + 1] - bp[k]
                slope = v.cost + v.quad * (bp[k] + bp[k + 1])
                cols_of[j].append(len(costs))
                col_break.append((j, k))
                costs.append(slope)
                bounds.append((0.0, w))
        else:
            cols_of[j].append(len(costs))
            col_break.append((j, -1))
            costs.append(v.cost)
            bounds.append((v.lo, v.hi))

    eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []
    row_map: list[tuple[str, int, float]] = []  # (kind, position, dual sign)
    for r in program._rows:
        cols, vals, shift = [], [], 0.0
        for j, coef in r.terms:
            v = program._vars[j]
            if v.quad > 0.0:
                shift += coef * v.lo
                for c in cols_of[j]:
                    cols.append(c)
                    vals.append(coef)
            else:
                cols.append(cols_of[j][0])
                vals.append(coef)
        rhs = r.rhs - shift
        if r.sense == "==":
            row_map.append(("eq", len(eq_rhs), 1.0))
            eq_rows.append((cols, vals))
            eq_rhs.append(rhs)
        elif r.sense == "<=":
            row_map.append(("ub", len(ub_rhs), 1.0))
            ub_rows.append((cols, vals))
            ub_rhs.append(rhs)
        else:  # >= stored negated
            row_map.append(("ub", len(ub_rhs), -1.0))
            ub_rows.append(([c for c in cols], [-x for x in vals]))
            ub_rhs.append(-rhs)

    ncol = len(costs)

    def pack(rows):
        data, ri, ci = [], [], []
        for i, (cols, vals) in enumerate(rows):
            ri.extend([i] * len(cols))
            ci.extend(cols)
            data.extend(vals)
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), ncol))

    kw = {}
    if eq_rows:
        kw["A_eq"] = pack(eq_rows)
        kw["b_eq"] = np.asarray(eq_rhs)
    if ub_rows:
        kw["A_ub"] = pack(ub_rows)
        kw["b_ub"] = np.asarray(ub_rhs)

    res = linprog(
        np.asarray(costs),
        bounds=bounds,
        method="highs-ds",
        options={
            # Tight backend tolerances: PWL slope differences near the
            # quadratic optimum fall below the HiGHS defaults.
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
        **kw,
    )
    return res, cols_of, row_map, col_break


def _extract(program, res, cols_of, row_map, grids):
    """Map an LP solution of the expansion back to the public program."""
    x = np.zeros(len(program._vars))
    reduced: dict[str, float] = {}
    for j, v in enumerate(program._vars):
        if v.quad > 0.0:
            x[j] = v.lo + sum(res.x[c] for c in cols_of[j])
        else:
            c = cols_of[j][0]
            x[j] = res.x[c]
            reduced[v.name] = float(res.lower.marginals[c] + res.upper.marginals[c])

    duals: dict[str, float] = {}
    for r, (kind, pos, sign) in zip(program._rows, row_map):
        marg = res.eqlin.marginals[pos] if kind == "eq" else res.ineqlin.marginals[pos]
        duals[r.label] = sign * float(marg)

    # Quadratic variables: reduced cost against the true gradient.
    for j, v in enumerate(program._vars):
        if v.quad > 0.0:
            grad = v.cost + 2.0 * v.quad * x[j]
            acc = grad
            for r in program._rows:
                for jj, coef in r.terms:
                    if jj == j:
                        acc -= duals[r.label] * coef
            reduced[v.name] = acc

    objective = program.offset + sum(
        v.cost * x[j] + v.quad * x[j] * x[j] for j, v in enumerate(program._vars)
    )
    values = {v.name: float(x[j]) for j, v in enumerate(program._vars)}
    return values, duals, reduced, float(objective)


def solve(program: ConvexProgram) -> SolveResult:
    """Solve to optimality with KKT residual at most ``KKT_TOL``.

    Refines the piecewise-linear grids of quadratic variables until the
    segment containing each optimum is narrow enough, then verifies the
    full KKT system of the quadratic program and raises ``SolverError``
    if verification fails.
    """
    quad_idx = [j for j, v in enumerate(program._vars) if v.quad > 0.0]
    grids: dict[int, list[float]] = {}
    extra: dict[int, set[float]] = {j: set() for j in quad_idx}
    w_tol: dict[int, float] = {}
    for j in quad_idx:
        v = program._vars[j]
        w_tol[j] = QUAD_STATION_TOL / (2.0 * v.quad)
        grids[j] = _base_grid(v.lo, v.hi, w_tol[j] / 2.0)

    last = None
    for _ in range(MAX_REFINE_ROUNDS):
        res, cols_of, row_map, _ = _solve_lp_once(program, grids)
        if res.status == 2:
            return SolveResult(status="infeasible")
        if res.status == 3:
            return SolveResult(status="unbounded")
        if res.status != 0:
            raise SolverError(f"LP backend failure: {res.message}")
        last = _extract(program, res, cols_of, row_map, grids)
        if not quad_idx:
            break
        done = True
        for j in quad_idx:
            v = program._vars[j]
            z = last[0][v.name]
            bp = grids[j]
            # Widths of the two segments adjacent to z; both bound the
            # stationarity error of the chord approximation.
            i = min(max(bisect_right(bp, z), 1), len(bp) - 1)
            w_right = bp[i] - bp[i - 1]
            w_left = bp[i - 1] - bp[i - 2] if i >= 2 else 0.0
            local = max(w_left, w_right)
            if local > w_tol[j]:
                done = False
                lo_w = max(z - local, v.lo)
                hi_w = min(z + local, v.hi)
                for t in np.linspace(lo_w, hi_w, 17):
                    extra[j].add(float(t))
                grids[j] = _merge_points(
                    _base_grid(v.lo, v.hi, w_tol[j] / 2.0), extra[j], v.lo, v.hi
                )
        if done:
            break
    else:
        raise SolverError("quadratic grid refinement did not converge")

    values, duals, reduced, objective = last
    result = SolveResult(
        status="optimal",
        objective=objective,
        values=values,
        duals=duals,
        reduced=reduced,
    )
    resid = kkt_residual(program, result)
    if resid > KKT_TOL:
        raise SolverError(f"KKT residual {resid:.3e} exceeds {KKT_TOL:g}")
    return SolveResult(
        status="optimal",
        objective=objective,
        values=values,
        duals=duals,
        reduced=reduced,
        kkt=resid,
    )


def solve_with_binaries(
    program: ConvexProgram,
    binaries: list[str],
    use_dominance: bool = True,
) -> SolveResult:
    """Enumerate binary assignments, restricted pricing at the winner.

    A binary is fixed to 1 without enumeration when that is weakly
    dominant: no objective cost and every constraint containing it is
    relaxed (or unaffected) by raising it.  Assignments are enumerated
    most-committed first, so ties resolve toward commitment.
    """
    if len(binaries) > MAX_BINARIES:
        raise SolverError(f"{len(binaries)} binaries exceed limit {MAX_BINARIES}")
    for name in binaries:
        if name not in program._index:
            raise SolverError(f"unknown binary {name!r}")

    fixed: dict[str, float] = {}
    free: list[str] = []
    for name in binaries:
        j = program._index[name]
        v = program._vars[j]
        dominant = use_dominance and v.cost <= 0.0 and v.quad == 0.0
        if dominant:
            for r in program._rows:
                for jj, coef in r.terms:
                    if jj != j:
                        continue
                    ok = (
                        (r.sense == "<=" and coef <= 0.0)
                        or (r.sense == ">=" and coef >= 0.0)
                        or coef == 0.0
                    )
                    if not ok:
                        dominant = False
        if dominant:
            fixed[name] = 1.0
        else:
            free.append(name)

    saved = {n: program.bounds_of(n) for n in binaries}

    def with_assignment(assign: dict[str, float]):
        for n, val in assign.items():
            j = program._index[n]
            program._vars[j].lo = val
            program._vars[j].hi = val
        try:
            return solve(program)
        finally:
            for n, (lo, hi) in saved.items():
                j = program._index[n]
                program._vars[j].lo = lo
                program._vars[j].hi = hi

    best: SolveResult | None = None
    for combo in itertools.product((1.0, 0.0), repeat=len(free)):
        assign = dict(fixed)
        assign.update(zip(free, combo))
        cand = with_assignment(assign)
        if cand.status != "optimal":
            continue
        if best is None or cand.objective < best.objective - 1e-9:
            best = cand
    if best is None:
        return SolveResult(status="infeasible")
    return best


def kkt_residual(program: ConvexProgram, result: SolveResult) -> float:
    """Scaled max violation of the KKT system at ``result``.

    Covers primal feasibility (rows and bounds), stationarity of the
    Lagrangian against the true quadratic gradient, dual sign
    feasibility per row sense, and complementary slackness.
    """
    if result.status != "optimal":
        raise SolverError("KKT check requires an optimal result")
    x = np.array([result.values[v.name] for v in program._vars])
    y = {r.label: result.duals.get(r.label, 0.0) for r in program._rows}

    worst = 0.0

    grad = np.array([v.cost + 2.0 * v.quad * xj for v, xj in zip(program._vars, x)])
    for r in program._rows:
        ax = sum(coef * x[j] for j, coef in r.terms)
        scale = max(1.0, abs(r.rhs))
        viol = ax - r.rhs
        if r.sense == "==":
            worst = max(worst, abs(viol) / scale)
        elif r.sense == "<=":
            worst = max(worst, viol / scale)
            worst = max(worst, y[r.label])             # dual must be <= 0
            worst = max(worst, abs(y[r.label] * viol) / scale)
        else:
            worst = max(worst, -viol / scale)
            worst = max(worst, -y[r.label])            # dual must be >= 0
            worst = max(worst, abs(y[r.label] * viol) / scale)
        for j, coef in r.terms:
            grad[j] -= y[r.label] * coef

    for j, v in enumerate(program._vars):
        scale = max(1.0, abs(v.cost + 2.0 * v.quad * x[j]))
        lo, hi = v.lo, v.hi
        worst = max(worst, (lo - x[j]) / max(1.0, abs(lo)))
        if hi is not None:
            worst = max(worst, (x[j] - hi) / max(1.0, abs(hi)))
        at_lo = x[j] <= lo + 1e-9 * max(1.0, abs(lo))
        at_hi = hi is not None and x[j] >= hi - 1e-9 * max(1.0, abs(hi))
        g = grad[j]
        if at_lo and at_hi:
            continue  # fixed variable, any gradient is fine
        if at_lo:
            worst = max(worst, -g / scale)
        elif at_hi:
            worst = max(worst, g / scale)
        else:
            worst = max(worst, abs(g) / scale)

    return float(worst)
