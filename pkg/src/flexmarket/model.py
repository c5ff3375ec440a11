"""Immutable market data model.

Holds the participants of a single-interval two-settlement market:

* flexible resources (thermal units) that sell energy, flexibility
  options (FOs) or imbalance reserves (IR),
* uncertain resources (e.g. renewables) whose real-time upper operating
  limit is described by a discrete scenario distribution and who buy
  FOs to hedge the resulting imbalances,
* a single inelastic demand plus the penalty/option-product
  configuration.

Everything here is frozen after construction, so systems can be shared
freely across concurrent solver runs.

Units: MW for quantities, $/MWh for prices, a single one-hour interval
(so MW and MWh coincide numerically).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ScenarioSet:
    """Discrete joint distribution of buyers' real-time upper limits.

    Scenarios are indexed in ascending order of buyer output: scenario 1
    is the lowest realization.  ``triggers[buyer_id]`` gives the buyer's
    submitted trigger quantities, one per scenario, sorted ascending.
    """

    probabilities: tuple[float, ...]
    triggers: Mapping[str, tuple[float, ...]]

    @property
    def count(self) -> int:
        return len(self.probabilities)

    @property
    def tier_count(self) -> int:
        return len(self.probabilities) - 1

    def trigger(self, buyer_id: str, s: int) -> float:
        """Trigger quantity of ``buyer_id`` in 1-based scenario ``s``."""
        return self.triggers[buyer_id][s - 1]

    def expected_trigger(self, buyer_id: str) -> float:
        """Probability-weighted mean of a buyer's trigger quantities."""
        row = self.triggers[buyer_id]
        return sum(p * q for p, q in zip(self.probabilities, row))


@dataclass(frozen=True)
class FlexibleResource:
    """A dispatchable seller of energy and flexibility products."""

    id: str
    capacity: float
    cost: float
    min_output: float = 0.0
    # Strike prices at which the unit commits to settle exercised
    # up/down options in real time.  Defaults equal to variable cost.
    strike_up: float | None = None
    strike_down: float | None = None
    ramp_rate: float | None = None  # None: limited only by capacity

    def __post_init__(self):
        if self.strike_up is None:
            object.__setattr__(self, "strike_up", self.cost)
        if self.strike_down is None:
            object.__setattr__(self, "strike_down", self.cost)
        if self.ramp_rate is None:
            object.__setattr__(self, "ramp_rate", self.capacity)


@dataclass(frozen=True)
class UncertainResource:
    """A resource with scenario-dependent output that buys hedges.

    ``scarcity_up``/``scarcity_down`` price the self-hedge fallback: the
    cost the buyer assigns to covering a shortfall itself, respectively
    the value it assigns to spilling a surplus itself.
    """

    id: str
    cost: float
    scarcity_up: float
    scarcity_down: float


@dataclass(frozen=True)
class DemandStep:
    """One step of the reserve demand curve: up to ``size`` MW of the
    requirement may be left unmet at willingness-to-pay ``price``."""

    size: float
    price: float


@dataclass(frozen=True)
class MarketConfig:
    """Scalar market parameters shared by both product designs."""

    demand: float
    voll: float = 170.0            # $/MWh penalty on unserved energy
    voll_quad: float = 0.01        # $/MW^2h quadratic penalty term
    volume_penalty: float = 0.01   # $/MW tie-break on hedge volumes
    virtual_bid_cost: float = 0.0  # $/MWh cost on the virtual position
    # Imbalance-reserve design inputs.  None means "derive from the
    # buyers' scenario spread" (expected value minus extreme).
    reserve_req_up: float | None = None
    reserve_req_down: float | None = None
    wtp_up: tuple[DemandStep, ...] | None = None
    wtp_down: tuple[DemandStep, ...] | None = None
    price_tol: float = 0.05        # $/MWh convergence band for prices
    feas_tol: float = 1e-6


@dataclass(frozen=True)
class TierSchedule:
    """Option tiers derived from one buyer's trigger quantities.

    With ``n`` scenarios there are ``n - 1`` tiers.  Up tier ``r``
    hedges shortfalls against trigger ``up_triggers[r-1]`` and is
    exercised with probability ``up_probs[r-1]`` (cumulative probability
    of the scenarios below the trigger); symmetrically for down tiers.
    """

    up_triggers: tuple[float, ...]
    up_probs: tuple[float, ...]
    down_triggers: tuple[float, ...]
    down_probs: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.up_triggers)


@dataclass(frozen=True)
class MarketSystem:
    """A complete, immutable market instance."""

    sellers: tuple[FlexibleResource, ...]
    buyers: tuple[UncertainResource, ...]
    scenarios: ScenarioSet
    config: MarketConfig
    # Named ramp-rate variants, seller id -> MW/h.
    fleets: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def seller(self, sid: str) -> FlexibleResource:
        for g in self.sellers:
            if g.id == sid:
                return g
        raise KeyError(sid)

    def buyer(self, bid: str) -> UncertainResource:
        for b in self.buyers:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def with_fleet(self, name: str) -> "MarketSystem":
        """Return a copy with ramp rates taken from fleet ``name``."""
        if name not in self.fleets:
            raise KeyError(f"unknown fleet {name!r}")
        ramps = self.fleets[name]
        sellers = tuple(
            replace(g, ramp_rate=ramps.get(g.id, g.ramp_rate)) for g in self.sellers
        )
        return replace(self, sellers=sellers)

    def with_config(self, **overrides) -> "MarketSystem":
        return replace(self, config=replace(self.config, **overrides))

    def with_sellers(self, sellers: Sequence[FlexibleResource]) -> "MarketSystem":
        return replace(self, sellers=tuple(sellers))

    def reserve_requirements(self) -> tuple[float, float]:
        """Reserve requirements (up, down) for the IR design.

        Unless configured explicitly these cover every buyer's spread
        between its expected output and its extreme scenarios.
        """
        cfg = self.config
        up = cfg.reserve_req_up
        down = cfg.reserve_req_down
        if up is None:
            up = sum(
                self.scenarios.expected_trigger(b.id) - self.scenarios.trigger(b.id, 1)
                for b in self.buyers
            )
        if down is None:
            down = sum(
                self.scenarios.trigger(b.id, self.scenarios.count)
                - self.scenarios.expected_trigger(b.id)
                for b in self.buyers
            )
        return up, down


def build_tiers(scenarios: ScenarioSet, buyer_id: str) -> TierSchedule:
    """Construct the option tiers for one buyer.

    Up tier r (r = 1..n-1) has trigger quantity ``P[r+1]`` and exercise
    probability equal to the cumulative probability of scenarios 1..r;
    down tier r has trigger ``P[r]`` and the complementary cumulative
    probability of scenarios r+1..n.
    """
    probs = scenarios.probabilities
    if len(probs) < 2:
        raise ValueError("tier construction needs at least two scenarios")
    row = scenarios.triggers[buyer_id]
    if any(a > b for a, b in zip(row, row[1:])):
        raise ValueError(f"trigger quantities of {buyer_id!r} are not sorted")

    up_probs, acc = [], 0.0
    for p in probs[:-1]:
        acc += p
        up_probs.append(acc)
    down_probs, acc = [], 0.0
    for p in reversed(probs[1:]):
        acc += p
        down_probs.append(acc)
    down_probs.reverse()

    return TierSchedule(
        up_triggers=tuple(row[1:]),
        up_probs=tuple(up_probs),
        down_triggers=tuple(row[:-1]),
        down_probs=tuple(down_probs),
    )


def validate_system(system: MarketSystem) -> list[str]:
    """Check all structural invariants; returns violation messages.

    An empty list means the system is well formed.  Violations are
    reported, not raised, so callers can show all of them at once.
    """
    out: list[str] = []
    sc = system.scenarios

    if sc.count < 2:
        out.append(f"scenario count {sc.count} < 2")
    total = sum(sc.probabilities)
    if abs(total - 1.0) > PROB_TOL:
        out.append(f"scenario probabilities sum to {total!r}, expected 1")
    for i, p in enumerate(sc.probabilities, start=1):
        if p <= 0:
            out.append(f"scenario {i} probability {p} is not positive")

    ids = [g.id for g in system.sellers] + [b.id for b in system.buyers]
    if len(set(ids)) != len(ids):
        out.append("duplicate participant ids")

    for g in system.sellers:
        if g.min_output < 0 or g.min_output > g.capacity:
            out.append(
                f"{g.id}: min output {g.min_output} outside [0, {g.capacity}]"
            )
        if g.ramp_rate < 0:
            out.append(f"{g.id}: negative ramp rate {g.ramp_rate}")
        if g.strike_down > g.strike_up:
            out.append(
                f"{g.id}: strike-down {g.strike_down} exceeds strike-up {g.strike_up}"
            )

    for b in system.buyers:
        if b.scarcity_down > b.scarcity_up:
            out.append(
                f"{b.id}: down scarcity cost {b.scarcity_down} exceeds up "
                f"scarcity cost {b.scarcity_up}"
            )
        row = sc.triggers.get(b.id)
        if row is None:
            out.append(f"{b.id}: no trigger quantities supplied")
            continue
        if len(row) != sc.count:
            out.append(
                f"{b.id}: {len(row)} trigger quantities for {sc.count} scenarios"
            )
        if any(a > bb for a, bb in zip(row, row[1:])):
            out.append(f"{b.id}: trigger quantities not sorted ascending")

    cfg = system.config
    if cfg.demand < 0:
        out.append(f"negative demand {cfg.demand}")
    for name in ("voll", "voll_quad", "volume_penalty"):
        if getattr(cfg, name) < 0:
            out.append(f"config {name} is negative")
    for attr in ("wtp_up", "wtp_down"):
        steps = getattr(cfg, attr)
        if steps:
            prices = [s.price for s in steps]
            if any(a < b for a, b in zip(prices, prices[1:])):
                out.append(f"config {attr} step prices increase along the curve")

    return out
