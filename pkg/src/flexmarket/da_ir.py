"""Day-ahead market with an imbalance-reserve product.

The comparison design: instead of option coverage driven by buyer
triggers, the operator procures fixed upward and downward reserve
requirements against a stepped demand curve.  Uncertain resources are
capped at their expected output and may themselves sell reserve by
scheduling below it.

Day-ahead/real-time price convergence under this design needs a virtual
bidder.  ``solve_da_ir_with_virtual_equilibrium`` searches the virtual
position for the no-arbitrage point where the day-ahead price equals
the probability-weighted real-time price, re-solving the market at each
trial position.  When the price correspondence jumps across the
equilibrium (a degenerate day-ahead vertex), the no-arbitrage price is
selected from inside the one-sided dual bracket, which is the mixed
complementarity solution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .da_fo import DispatchPoint
from .lp import ConvexProgram, solve_with_binaries
from .model import DemandStep, MarketSystem
from .rt import RtSolution, expected_rt_price, solve_all_rt

DEFAULT_WTP = 500.0  # $/MW on the single default demand-curve step


@dataclass(frozen=True)
class IrAward:
    p: float
    committed: float
    reserve_up: float
    reserve_down: float


@dataclass(frozen=True)
class DaIrSolution:
    system: MarketSystem
    status: str
    objective: float
    price: float                  # day-ahead energy price
    reserve_price_up: float
    reserve_price_down: float
    awards: dict[str, IrAward]    # sellers and buyers alike
    shortfall_up: tuple[float, ...]
    shortfall_down: tuple[float, ...]
    virtual_supply: float
    unserved_da: float
    duals: dict[str, float]
    kkt: float

    @property
    def dispatch(self) -> DispatchPoint:
        return DispatchPoint(
            p={i: a.p for i, a in self.awards.items()},
            committed={
                g.id: self.awards[g.id].committed for g in self.system.sellers
            },
            unserved_da=self.unserved_da,
            virtual_supply=self.virtual_supply,
        )


@dataclass(frozen=True)
class IrEquilibrium:
    solution: DaIrSolution
    rts: list[RtSolution]
    expected_rt: float
    gap: float                    # day-ahead price minus expected RT price
    converged: bool
    iterations: int
    note: str = ""


def _steps(system: MarketSystem, which: str, req: float) -> tuple[DemandStep, ...]:
    steps = getattr(system.config, f"wtp_{which}")
    if steps is None:
        return (DemandStep(size=req, price=DEFAULT_WTP),)
    # An unbounded final step keeps the requirement soft.
    return tuple(
        DemandStep(size=req if s.size == float("inf") else s.size, price=s.price)
        for s in steps
    )


def build_da_ir(system: MarketSystem, vs_fixed: float | None = 0.0) -> ConvexProgram:
    """Reserve-design program.  ``vs_fixed=None`` leaves the virtual
    position free at the configured virtual bid cost."""
    cfg = system.config
    req_up, req_dn = system.reserve_requirements()
    steps_up = _steps(system, "up", req_up)
    steps_dn = _steps(system, "down", req_dn)

    prog = ConvexProgram("da_ir")

    for g in system.sellers:
        prog.add_variable(f"p[{g.id}]", cost=g.cost)
        prog.add_variable(f"u[{g.id}]", lo=0.0, hi=1.0)
        prog.add_variable(f"res_up[{g.id}]")
        prog.add_variable(f"res_dn[{g.id}]")
    for b in system.buyers:
        # Capped at the expected output, which doubles as capacity here.
        cap = system.scenarios.expected_trigger(b.id)
        prog.add_variable(f"p[{b.id}]", cost=b.cost)
        prog.add_variable(f"res_up[{b.id}]")
        prog.add_variable(f"res_dn[{b.id}]")
        prog.add_constraint(
            f"cap[{b.id}]", {f"p[{b.id}]": 1.0, f"res_up[{b.id}]": 1.0}, "<=", cap
        )
        prog.add_constraint(
            f"pmin[{b.id}]", {f"p[{b.id}]": 1.0, f"res_dn[{b.id}]": -1.0}, ">=", 0.0
        )

    for l, st in enumerate(steps_up, start=1):
        prog.add_variable(f"short_up[{l}]", lo=0.0, hi=st.size, cost=st.price)
    for l, st in enumerate(steps_dn, start=1):
        prog.add_variable(f"short_dn[{l}]", lo=0.0, hi=st.size, cost=st.price)

    prog.add_variable("d_da", lo=0.0, hi=cfg.demand, cost=cfg.voll, quad=cfg.voll_quad)
    if vs_fixed is None:
        prog.add_variable(
            "vs", lo=-cfg.demand, hi=cfg.demand, cost=cfg.virtual_bid_cost
        )
    else:
        prog.add_variable("vs", lo=vs_fixed, hi=vs_fixed)

    balance = {f"p[{g.id}]": 1.0 for g in system.sellers}
    balance.update({f"p[{b.id}]": 1.0 for b in system.buyers})
    balance["d_da"] = 1.0
    balance["vs"] = 1.0
    prog.add_constraint("balance", balance, "==", cfg.demand)

    ru = {f"res_up[{p.id}]": 1.0 for p in (*system.sellers, *system.buyers)}
    ru.update({f"short_up[{l}]": 1.0 for l in range(1, len(steps_up) + 1)})
    prog.add_constraint("req_up", ru, ">=", req_up)
    rd = {f"res_dn[{p.id}]": 1.0 for p in (*system.sellers, *system.buyers)}
    rd.update({f"short_dn[{l}]": 1.0 for l in range(1, len(steps_dn) + 1)})
    prog.add_constraint("req_dn", rd, ">=", req_dn)

    for g in system.sellers:
        prog.add_constraint(
            f"ramp_up[{g.id}]",
            {f"res_up[{g.id}]": 1.0, f"u[{g.id}]": -g.ramp_rate},
            "<=",
            0.0,
        )
        prog.add_constraint(
            f"ramp_dn[{g.id}]",
            {f"res_dn[{g.id}]": 1.0, f"u[{g.id}]": -g.ramp_rate},
            "<=",
            0.0,
        )
        prog.add_constraint(
            f"cap[{g.id}]",
            {f"p[{g.id}]": 1.0, f"res_up[{g.id}]": 1.0, f"u[{g.id}]": -g.capacity},
            "<=",
            0.0,
        )
        prog.add_constraint(
            f"pmin[{g.id}]",
            {f"p[{g.id}]": 1.0, f"res_dn[{g.id}]": -1.0, f"u[{g.id}]": -g.min_output},
            ">=",
            0.0,
        )

    return prog


def solve_da_ir(system: MarketSystem, vs_fixed: float | None = 0.0) -> DaIrSolution:
    prog = build_da_ir(system, vs_fixed)
    binaries = [f"u[{g.id}]" for g in system.sellers]
    res = solve_with_binaries(prog, binaries)
    if res.status != "optimal":
        raise RuntimeError(f"reserve market solve: {res.status}")
    v = res.values
    awards = {
        g.id: IrAward(
            p=v[f"p[{g.id}]"],
            committed=v[f"u[{g.id}]"],
            reserve_up=v[f"res_up[{g.id}]"],
            reserve_down=v[f"res_dn[{g.id}]"],
        )
        for g in system.sellers
    }
    awards.update(
        {
            b.id: IrAward(
                p=v[f"p[{b.id}]"],
                committed=1.0,
                reserve_up=v[f"res_up[{b.id}]"],
                reserve_down=v[f"res_dn[{b.id}]"],
            )
            for b in system.buyers
        }
    )
    n_up = sum(1 for name in v if name.startswith("short_up["))
    n_dn = sum(1 for name in v if name.startswith("short_dn["))
    return DaIrSolution(
        system=system,
        status=res.status,
        objective=res.objective,
        price=res.duals["balance"],
        reserve_price_up=res.duals["req_up"],
        reserve_price_down=res.duals["req_dn"],
        awards=awards,
        shortfall_up=tuple(v[f"short_up[{l}]"] for l in range(1, n_up + 1)),
        shortfall_down=tuple(v[f"short_dn[{l}]"] for l in range(1, n_dn + 1)),
        virtual_supply=v["vs"],
        unserved_da=v["d_da"],
        duals=dict(res.duals),
        kkt=res.kkt,
    )


def _trial(system: MarketSystem, vs: float):
    sol = solve_da_ir(system, vs_fixed=vs)
    rts = solve_all_rt(system, sol.dispatch, "ir")
    expected = expected_rt_price(system, rts)
    return sol, rts, expected, sol.price - expected


def solve_da_ir_with_virtual_equilibrium(
    system: MarketSystem, max_iter: int = 60
) -> IrEquilibrium:
    """Find the virtual position with no day-ahead/real-time arbitrage.

    Bisects the (monotone) price gap over the virtual position.  If the
    bracket collapses onto a jump of the gap, the day-ahead vertex is
    degenerate there and the expected real-time price is reported as
    the clearing price when it lies inside the one-sided dual bracket.
    Never fatal: if no position converges, the best trial is returned
    with ``converged=False``.
    """
    tol = system.config.price_tol
    span = system.config.demand

    lo, hi = -span, span
    sol_lo, rts_lo, exp_lo, gap_lo = _trial(system, lo)
    sol_hi, rts_hi, exp_hi, gap_hi = _trial(system, hi)

    best = (abs(gap_lo), lo, sol_lo, rts_lo, exp_lo, gap_lo)
    for cand in [(abs(gap_hi), hi, sol_hi, rts_hi, exp_hi, gap_hi)]:
        if cand[0] < best[0]:
            best = cand

    if abs(gap_lo) <= tol or abs(gap_hi) <= tol or gap_lo > 0 >= gap_hi:
        it = 0
        while it < max_iter:
            it += 1
            mid = 0.5 * (lo + hi)
            sol, rts, expected, gap = _trial(system, mid)
            if abs(gap) < best[0]:
                best = (abs(gap), mid, sol, rts, expected, gap)
            if abs(gap) <= tol:
                return IrEquilibrium(
                    solution=sol, rts=rts, expected_rt=expected, gap=gap,
                    converged=True, iterations=it,
                )
            if gap > 0:
                lo, gap_lo = mid, gap
            else:
                hi, gap_hi = mid, gap
            if hi - lo < 1e-7:
                # Jump point: the valid duals at the collapsed position
                # span the two one-sided prices.
                p_hi = _trial(system, hi)[0].price   # cheap side
                p_lo = _trial(system, lo)[0].price   # expensive side
                lo_p, hi_p = min(p_lo, p_hi), max(p_lo, p_hi)
                if lo_p - tol <= expected <= hi_p + tol:
                    chosen = replace(sol, price=expected)
                    return IrEquilibrium(
                        solution=chosen, rts=rts, expected_rt=expected, gap=0.0,
                        converged=True, iterations=it,
                        note="clearing price selected inside the degenerate dual range",
                    )
                break
    else:
        it = 0

    _, vs, sol, rts, expected, gap = best
    return IrEquilibrium(
        solution=sol, rts=rts, expected_rt=expected, gap=gap,
        converged=False, iterations=it,
        note="no virtual position closes the day-ahead/real-time price gap",
    )
