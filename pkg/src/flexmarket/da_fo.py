"""Day-ahead co-optimization of energy and flexibility options.

Builds and solves the single-interval day-ahead market in which
flexible resources sell energy plus tiered up/down options, uncertain
resources buy options (or self-hedge) to cover every scenario of their
real-time upper operating limit, and unserved energy is priced with a
linear-plus-quadratic penalty.  The option demand is endogenous: buyer
coverage constraints tie option volumes to the buyer's own day-ahead
schedule and trigger quantities.

Tier r of the up product hedges shortfalls against the (r+1)-th trigger
quantity and carries the cumulative probability of scenarios 1..r; tier
r of the down product hedges surpluses against the r-th trigger and
carries the complementary cumulative probability.  Duals of the per
tier supply-demand balances are the option prices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .lp import ConvexProgram, SolveResult, solve_with_binaries
from .model import MarketSystem, build_tiers

FEAS_TOL = 1e-6


def tier_probabilities(system: MarketSystem) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Exercise probabilities (up, down) per tier, shared by all buyers."""
    probs = system.scenarios.probabilities
    up, acc = [], 0.0
    for p in probs[:-1]:
        acc += p
        up.append(acc)
    down, acc = [], 0.0
    for p in reversed(probs[1:]):
        acc += p
        down.append(acc)
    down.reverse()
    return tuple(up), tuple(down)


@dataclass(frozen=True)
class SellerAward:
    p: float
    committed: float
    sales_up: tuple[float, ...]   # option MW sold per up tier
    sales_down: tuple[float, ...]


@dataclass(frozen=True)
class BuyerAward:
    p: float
    bought_up: tuple[float, ...]
    bought_down: tuple[float, ...]
    self_up: tuple[float, ...]
    self_down: tuple[float, ...]
    hedge_volume: tuple[float, ...]  # auxiliary volume per scenario


@dataclass(frozen=True)
class DispatchPoint:
    """The part of a day-ahead solution the real-time market needs."""

    p: dict[str, float]
    committed: dict[str, float]
    unserved_da: float
    virtual_supply: float = 0.0


@dataclass(frozen=True)
class DaFoSolution:
    system: MarketSystem
    status: str
    objective: float
    core_objective: float          # objective without the volume tie-break term
    price: float                   # day-ahead energy price
    tier_prices_up: tuple[float, ...]
    tier_prices_down: tuple[float, ...]
    sellers: dict[str, SellerAward]
    buyers: dict[str, BuyerAward]
    unserved_da: float
    unserved_rt: tuple[float, ...]  # anticipated incremental, per scenario
    duals: dict[str, float]
    kkt: float

    @property
    def dispatch(self) -> DispatchPoint:
        p = {i: a.p for i, a in self.sellers.items()}
        p.update({j: a.p for j, a in self.buyers.items()})
        return DispatchPoint(
            p=p,
            committed={i: a.committed for i, a in self.sellers.items()},
            unserved_da=self.unserved_da,
        )

    def validate(self) -> list[str]:
        """Feasibility of the reported awards against the market rules."""
        out = []
        sys_ = self.system
        sc = sys_.scenarios
        n, R = sc.count, sc.tier_count

        supplied = sum(a.p for a in self.sellers.values())
        supplied += sum(a.p for a in self.buyers.values())
        if abs(supplied + self.unserved_da - sys_.config.demand) > FEAS_TOL:
            out.append("energy balance violated")

        for r in range(R):
            su = sum(a.sales_up[r] for a in self.sellers.values())
            bu = sum(a.bought_up[r] for a in self.buyers.values())
            if abs(su - bu) > FEAS_TOL:
                out.append(f"up tier {r + 1} supply {su} != demand {bu}")
            sd_ = sum(a.sales_down[r] for a in self.sellers.values())
            bd = sum(a.bought_down[r] for a in self.buyers.values())
            if abs(sd_ - bd) > FEAS_TOL:
                out.append(f"down tier {r + 1} supply {sd_} != demand {bd}")

        for i, a in self.sellers.items():
            g = sys_.seller(i)
            if sum(a.sales_up) > g.ramp_rate * a.committed + FEAS_TOL:
                out.append(f"{i}: up sales exceed ramp")
            if sum(a.sales_down) > g.ramp_rate * a.committed + FEAS_TOL:
                out.append(f"{i}: down sales exceed ramp")
            if a.p + sum(a.sales_up) > g.capacity * a.committed + FEAS_TOL:
                out.append(f"{i}: capacity headroom violated")
            if a.p - sum(a.sales_down) < g.min_output * a.committed - FEAS_TOL:
                out.append(f"{i}: minimum output violated")

        # Coverage: every scenario of every buyer nets out to its trigger
        # once hedges and the anticipated unserved increment are applied.
        for j, a in self.buyers.items():
            for s in range(1, n + 1):
                down_cov = sum(a.bought_down[r] + a.self_down[r] for r in range(s - 1))
                up_cov = sum(
                    a.bought_up[r] + a.self_up[r] for r in range(s - 1, R)
                )
                gap = a.p + down_cov - up_cov - sc.trigger(j, s)
                if gap < -FEAS_TOL:  # residual is the unserved increment, >= 0
                    out.append(f"{j}: scenario {s} coverage short by {-gap:.3g}")
                vol = down_cov + up_cov
                if a.hedge_volume[s - 1] < vol - FEAS_TOL:
                    out.append(f"{j}: scenario {s} hedge volume below coverage")
                if a.hedge_volume[s - 1] < abs(a.p - sc.trigger(j, s)) - FEAS_TOL:
                    out.append(f"{j}: scenario {s} hedge volume below deviation")
        return out


def build_da_fo(system: MarketSystem) -> ConvexProgram:
    """Assemble the day-ahead program; see module docstring for shape."""
    cfg = system.config
    sc = system.scenarios
    n, R = sc.count, sc.tier_count
    up_prob, dn_prob = tier_probabilities(system)

    if not system.sellers:
        warnings.warn("no flexibility sellers: option trade is forced to zero")
    if not system.buyers:
        warnings.warn("no option buyers: option trade is forced to zero")

    span = sum(
        sc.trigger(b.id, n) - sc.trigger(b.id, 1) for b in system.buyers
    )
    zmax = 2.0 * cfg.demand + span + 100.0

    prog = ConvexProgram("da_fo")

    for g in system.sellers:
        prog.add_variable(f"p[{g.id}]", cost=g.cost)
        prog.add_variable(f"u[{g.id}]", lo=0.0, hi=1.0)
        for r in range(R):
            prog.add_variable(
                f"hs_up[{g.id},{r + 1}]", cost=up_prob[r] * g.strike_up
            )
            prog.add_variable(
                f"hs_dn[{g.id},{r + 1}]", cost=-dn_prob[r] * g.strike_down
            )

    for b in system.buyers:
        prog.add_variable(f"p[{b.id}]", cost=b.cost)
        for r in range(R):
            prog.add_variable(f"hd_up[{b.id},{r + 1}]", cost=-up_prob[r] * b.cost)
            prog.add_variable(f"hd_dn[{b.id},{r + 1}]", cost=dn_prob[r] * b.cost)
            prog.add_variable(
                f"sd_up[{b.id},{r + 1}]",
                cost=up_prob[r] * (b.scarcity_up - b.cost),
            )
            prog.add_variable(
                f"sd_dn[{b.id},{r + 1}]",
                cost=dn_prob[r] * (b.cost - b.scarcity_down),
            )
        for s in range(1, n + 1):
            prog.add_variable(f"y[{b.id},{s}]", cost=cfg.volume_penalty)
            prog.add_variable(f"d_rt[{b.id},{s}]")

    prog.add_variable("d_da", lo=0.0, hi=cfg.demand)
    for s in range(1, n + 1):
        prog.add_variable(
            f"z[{s}]",
            lo=0.0,
            hi=zmax,
            cost=sc.probabilities[s - 1] * cfg.voll,
            quad=sc.probabilities[s - 1] * cfg.voll_quad,
        )

    # Supply-demand balance of energy.
    balance = {f"p[{g.id}]": 1.0 for g in system.sellers}
    balance.update({f"p[{b.id}]": 1.0 for b in system.buyers})
    balance["d_da"] = 1.0
    prog.add_constraint("balance", balance, "==", cfg.demand)

    # Option supply-demand balance per tier and direction.
    for r in range(1, R + 1):
        for tag, sell, buy in (("up", "hs_up", "hd_up"), ("dn", "hs_dn", "hd_dn")):
            terms = {f"{sell}[{g.id},{r}]": 1.0 for g in system.sellers}
            terms.update({f"{buy}[{b.id},{r}]": -1.0 for b in system.buyers})
            prog.add_constraint(f"fo_{tag}[{r}]", terms, "==", 0.0)

    # Buyer coverage and hedge-volume accounting.
    for b in system.buyers:
        for s in range(1, n + 1):
            cover = {f"d_rt[{b.id},{s}]": -1.0, f"p[{b.id}]": 1.0}
            vol = {f"y[{b.id},{s}]": -1.0}
            for r in range(1, s):  # down tiers exercisable in scenario s
                for v in (f"hd_dn[{b.id},{r}]", f"sd_dn[{b.id},{r}]"):
                    cover[v] = 1.0
                    vol[v] = 1.0
            for r in range(s, R + 1):  # up tiers exercisable in scenario s
                for v in (f"hd_up[{b.id},{r}]", f"sd_up[{b.id},{r}]"):
                    cover[v] = -1.0
                    vol[v] = 1.0
            trig = sc.trigger(b.id, s)
            prog.add_constraint(f"cover[{b.id},{s}]", cover, "==", trig)
            prog.add_constraint(f"hedge_cap[{b.id},{s}]", vol, "<=", 0.0)
            prog.add_constraint(
                f"dev_up[{b.id},{s}]",
                {f"p[{b.id}]": 1.0, f"y[{b.id},{s}]": -1.0},
                "<=",
                trig,
            )
            prog.add_constraint(
                f"dev_dn[{b.id},{s}]",
                {f"p[{b.id}]": 1.0, f"y[{b.id},{s}]": 1.0},
                ">=",
                trig,
            )

    # Seller capability: ramp in each direction, capacity, minimum.
    for g in system.sellers:
        ups = {f"hs_up[{g.id},{r}]": 1.0 for r in range(1, R + 1)}
        dns = {f"hs_dn[{g.id},{r}]": 1.0 for r in range(1, R + 1)}
        prog.add_constraint(
            f"ramp_up[{g.id}]", {**ups, f"u[{g.id}]": -g.ramp_rate}, "<=", 0.0
        )
        prog.add_constraint(
            f"ramp_dn[{g.id}]", {**dns, f"u[{g.id}]": -g.ramp_rate}, "<=", 0.0
        )
        prog.add_constraint(
            f"cap[{g.id}]",
            {**ups, f"p[{g.id}]": 1.0, f"u[{g.id}]": -g.capacity},
            "<=",
            0.0,
        )
        prog.add_constraint(
            f"pmin[{g.id}]",
            {**{k: -v for k, v in dns.items()}, f"p[{g.id}]": 1.0,
             f"u[{g.id}]": -g.min_output},
            ">=",
            0.0,
        )

    # Aggregate unserved energy per scenario carries the penalty.
    for s in range(1, n + 1):
        terms = {f"z[{s}]": 1.0, "d_da": -1.0}
        for b in system.buyers:
            terms[f"d_rt[{b.id},{s}]"] = -1.0
        prog.add_constraint(f"zdef[{s}]", terms, "==", 0.0)

    return prog


def _assemble(system: MarketSystem, res: SolveResult) -> DaFoSolution:
    sc = system.scenarios
    n, R = sc.count, sc.tier_count
    v = res.values

    sellers = {
        g.id: SellerAward(
            p=v[f"p[{g.id}]"],
            committed=v[f"u[{g.id}]"],
            sales_up=tuple(v[f"hs_up[{g.id},{r}]"] for r in range(1, R + 1)),
            sales_down=tuple(v[f"hs_dn[{g.id},{r}]"] for r in range(1, R + 1)),
        )
        for g in system.sellers
    }
    buyers = {
        b.id: BuyerAward(
            p=v[f"p[{b.id}]"],
            bought_up=tuple(v[f"hd_up[{b.id},{r}]"] for r in range(1, R + 1)),
            bought_down=tuple(v[f"hd_dn[{b.id},{r}]"] for r in range(1, R + 1)),
            self_up=tuple(v[f"sd_up[{b.id},{r}]"] for r in range(1, R + 1)),
            self_down=tuple(v[f"sd_dn[{b.id},{r}]"] for r in range(1, R + 1)),
            hedge_volume=tuple(v[f"y[{b.id},{s}]"] for s in range(1, n + 1)),
        )
        for b in system.buyers
    }
    total_y = sum(sum(a.hedge_volume) for a in buyers.values())
    unserved_rt = tuple(
        sum(v[f"d_rt[{b.id},{s}]"] for b in system.buyers) for s in range(1, n + 1)
    )
    return DaFoSolution(
        system=system,
        status=res.status,
        objective=res.objective,
        core_objective=res.objective - system.config.volume_penalty * total_y,
        price=res.duals["balance"],
        tier_prices_up=tuple(res.duals[f"fo_up[{r}]"] for r in range(1, R + 1)),
        tier_prices_down=tuple(res.duals[f"fo_dn[{r}]"] for r in range(1, R + 1)),
        sellers=sellers,
        buyers=buyers,
        unserved_da=v["d_da"],
        unserved_rt=unserved_rt,
        duals=dict(res.duals),
        kkt=res.kkt,
    )


def solve_da_fo(system: MarketSystem, use_dominance: bool = True) -> DaFoSolution:
    """Solve the day-ahead market; commitment via enumeration."""
    prog = build_da_fo(system)
    binaries = [f"u[{g.id}]" for g in system.sellers]
    res = solve_with_binaries(prog, binaries, use_dominance=use_dominance)
    if res.status != "optimal":
        raise RuntimeError(f"day-ahead option market solve: {res.status}")
    return _assemble(system, res)


def fo_tier_prices(solution: DaFoSolution) -> list[tuple[float, float]]:
    """Per-tier (up, down) option prices from the balance duals."""
    return list(zip(solution.tier_prices_up, solution.tier_prices_down))
