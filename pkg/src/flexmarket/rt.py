"""Per-scenario real-time market.

Re-dispatches the system around the day-ahead schedules once an
uncertain resource's upper operating limit is realized.  Under the
option regime sellers move at their strike prices (that is what they
financially committed to); under the reserve regime they move at their
variable costs.  Buyers settle their realized deviation, may spill a
surplus, or may cover a shortfall themselves at their scarcity cost.

A day-ahead virtual position returns to the market here as a fixed
injection (or withdrawal), so the balance row clears physical deviations
plus the virtual unwind.  The dual of that row is the real-time energy
price.

Scenario solves are independent of each other and may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

from .da_fo import DispatchPoint
from .lp import ConvexProgram, solve
from .model import MarketSystem

REGIMES = ("fo", "ir")


@dataclass(frozen=True)
class RtSolution:
    scenario: int
    status: str
    objective: float       # incremental cost of the re-dispatch
    price: float           # real-time energy price
    seller_inc: dict[str, float]
    seller_dec: dict[str, float]
    buyer_inc: dict[str, float]
    buyer_dec: dict[str, float]
    buyer_spill: dict[str, float]
    buyer_backstop: dict[str, float]
    unserved_rt: float
    duals: dict[str, float]
    kkt: float

    def delivered(self, pid: str, dispatch: DispatchPoint) -> float:
        base = dispatch.p[pid]
        if pid in self.seller_inc:
            return base + self.seller_inc[pid] - self.seller_dec[pid]
        return base + self.buyer_inc[pid] - self.buyer_dec[pid]

    def deviation(self, pid: str) -> float:
        if pid in self.seller_inc:
            return self.seller_inc[pid] - self.seller_dec[pid]
        return self.buyer_inc[pid] - self.buyer_dec[pid]


def build_rt(
    system: MarketSystem,
    dispatch: DispatchPoint,
    scenario: int,
    regime: str = "fo",
    seller_fix: dict[str, tuple[float, float]] | None = None,
) -> ConvexProgram:
    """Real-time program for one scenario.

    ``seller_fix`` pins selected sellers' (increment, decrement) pairs,
    which is used to evaluate candidate re-dispatch plans at optimum
    prices elsewhere in the package.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    cfg = system.config
    sc = system.scenarios
    big = 2.0 * cfg.demand + sum(
        sc.trigger(b.id, sc.count) - sc.trigger(b.id, 1) for b in system.buyers
    ) + 100.0

    prog = ConvexProgram(f"rt[{scenario},{regime}]")

    for g in system.sellers:
        up_cost = g.strike_up if regime == "fo" else g.cost
        dn_cost = g.strike_down if regime == "fo" else g.cost
        lo_inc, hi_inc = 0.0, None
        lo_dec, hi_dec = 0.0, None
        if seller_fix and g.id in seller_fix:
            inc, dec = seller_fix[g.id]
            lo_inc = hi_inc = inc
            lo_dec = hi_dec = dec
        prog.add_variable(f"inc[{g.id}]", lo=lo_inc, hi=hi_inc, cost=up_cost)
        prog.add_variable(f"dec[{g.id}]", lo=lo_dec, hi=hi_dec, cost=-dn_cost)

    for b in system.buyers:
        prog.add_variable(f"inc[{b.id}]", cost=b.cost)
        prog.add_variable(f"dec[{b.id}]", cost=-b.cost)
        prog.add_variable(f"spill[{b.id}]", cost=b.cost - b.scarcity_down)
        prog.add_variable(f"backstop[{b.id}]", cost=b.scarcity_up - b.cost)

    # Unserved increment: penalty incremental to what the day-ahead
    # stage already absorbed, expanded exactly around unserved_da.
    d0 = dispatch.unserved_da
    prog.add_variable(
        "d_rt",
        lo=0.0,
        hi=big,
        cost=cfg.voll + 2.0 * cfg.voll_quad * d0,
        quad=cfg.voll_quad,
    )

    balance = {"d_rt": 1.0}
    for g in system.sellers:
        balance[f"inc[{g.id}]"] = 1.0
        balance[f"dec[{g.id}]"] = -1.0
    for b in system.buyers:
        balance[f"inc[{b.id}]"] = 1.0
        balance[f"dec[{b.id}]"] = -1.0
    prog.add_constraint("balance", balance, "==", dispatch.virtual_supply)

    for b in system.buyers:
        gap = sc.trigger(b.id, scenario) - dispatch.p[b.id]
        prog.add_constraint(
            f"dev[{b.id}]",
            {
                f"inc[{b.id}]": 1.0,
                f"dec[{b.id}]": -1.0,
                f"spill[{b.id}]": 1.0,
                f"backstop[{b.id}]": -1.0,
            },
            "==",
            gap,
        )

    for g in system.sellers:
        u = dispatch.committed[g.id]
        p0 = dispatch.p[g.id]
        prog.add_constraint(
            f"ramp_up[{g.id}]", {f"inc[{g.id}]": 1.0}, "<=", g.ramp_rate * u
        )
        prog.add_constraint(
            f"ramp_dn[{g.id}]", {f"dec[{g.id}]": 1.0}, "<=", g.ramp_rate * u
        )
        prog.add_constraint(
            f"cap[{g.id}]", {f"inc[{g.id}]": 1.0}, "<=", g.capacity * u - p0
        )
        prog.add_constraint(
            f"pmin[{g.id}]", {f"dec[{g.id}]": 1.0}, "<=", p0 - g.min_output * u
        )

    return prog


def solve_rt(
    system: MarketSystem,
    dispatch: DispatchPoint,
    scenario: int,
    regime: str = "fo",
    seller_fix: dict[str, tuple[float, float]] | None = None,
) -> RtSolution:
    prog = build_rt(system, dispatch, scenario, regime, seller_fix)
    res = solve(prog)
    if res.status != "optimal":
        raise RuntimeError(
            f"real-time solve failed for scenario {scenario}: {res.status}"
        )
    v = res.values
    return RtSolution(
        scenario=scenario,
        status=res.status,
        objective=res.objective,
        price=res.duals["balance"],
        seller_inc={g.id: v[f"inc[{g.id}]"] for g in system.sellers},
        seller_dec={g.id: v[f"dec[{g.id}]"] for g in system.sellers},
        buyer_inc={b.id: v[f"inc[{b.id}]"] for b in system.buyers},
        buyer_dec={b.id: v[f"dec[{b.id}]"] for b in system.buyers},
        buyer_spill={b.id: v[f"spill[{b.id}]"] for b in system.buyers},
        buyer_backstop={b.id: v[f"backstop[{b.id}]"] for b in system.buyers},
        unserved_rt=v["d_rt"],
        duals=dict(res.duals),
        kkt=res.kkt,
    )


def solve_all_rt(
    system: MarketSystem, dispatch: DispatchPoint, regime: str = "fo"
) -> list[RtSolution]:
    """All scenario markets, ascending scenario order."""
    return [
        solve_rt(system, dispatch, s, regime)
        for s in range(1, system.scenarios.count + 1)
    ]


def expected_rt_price(system: MarketSystem, rts: list[RtSolution]) -> float:
    """Probability-weighted mean of the scenario prices."""
    probs = system.scenarios.probabilities
    return sum(p * rt.price for p, rt in zip(probs, rts))
