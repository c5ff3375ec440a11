"""System file parsing and serialization.

The input format is sectioned plain text.  Sections:

``[generators]``
    One row per flexible resource:
    ``id capacity cost pmin strike_up strike_down``.

``[uncertain]``
    One row per uncertain resource: ``id cost`` followed by one trigger
    quantity per scenario (ascending) and then one probability per
    scenario.  All rows must agree on the probabilities.

``[fleets]``
    Named ramp-rate sets: ``name`` followed by one ramp rate per
    generator, in ``[generators]`` order.

``[config]``
    ``key = value`` scalars.  Unknown keys are rejected.  ``demand`` is
    required; everything else has defaults.  ``wtp_up``/``wtp_down`` and
    ``step_up``/``step_down`` accept comma-separated lists describing a
    stepped reserve demand curve.

Numbers are parsed from their decimal text exactly once into binary
floating point.  ``#`` starts a comment.
"""

from __future__ import annotations

import importlib.resources

from .model import (
    DemandStep,
    FlexibleResource,
    MarketConfig,
    MarketSystem,
    ScenarioSet,
    UncertainResource,
    validate_system,
)

SECTIONS = ("generators", "uncertain", "fleets", "config")

_SCALAR_KEYS = {
    "demand": "demand",
    "voll": "voll",
    "voll_quad": "voll_quad",
    "volume_penalty": "volume_penalty",
    "virtual_bid_cost": "virtual_bid_cost",
    "reserve_req_up": "reserve_req_up",
    "reserve_req_down": "reserve_req_down",
    "scarcity_up": None,   # handled separately (buyer defaults)
    "scarcity_down": None,
    "price_tol": "price_tol",
    "feas_tol": "feas_tol",
}
_LIST_KEYS = ("wtp_up", "wtp_down", "step_up", "step_down")


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _number(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(lineno, f"not a number: {tok!r}") from None


def parse_system(text: str) -> MarketSystem:
    """Parse and validate a system file; raises on any defect."""
    gens: list[tuple] = []
    unc: list[tuple] = []
    fleets_raw: list[tuple[int, str, list[float]]] = []
    scalars: dict[str, float] = {}
    lists: dict[str, list[float]] = {}

    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ParseError(lineno, f"unknown section [{section}]")
            continue
        if section is None:
            raise ParseError(lineno, "content before any section header")

        if section == "generators":
            tok = line.split()
            if len(tok) != 6:
                raise ParseError(lineno, "expected: id capacity cost pmin strike_up strike_down")
            gens.append(
                (tok[0], *(_number(t, lineno) for t in tok[1:]))
            )
        elif section == "uncertain":
            tok = line.split()
            if len(tok) < 5 or (len(tok) - 2) % 2 != 0:
                raise ParseError(
                    lineno, "expected: id cost, then equal-length triggers and probabilities"
                )
            half = (len(tok) - 2) // 2
            vals = [_number(t, lineno) for t in tok[1:]]
            unc.append((tok[0], vals[0], vals[1 : 1 + half], vals[1 + half :], lineno))
        elif section == "fleets":
            tok = line.split()
            if len(tok) < 2:
                raise ParseError(lineno, "expected: name followed by ramp rates")
            fleets_raw.append((lineno, tok[0], [_number(t, lineno) for t in tok[1:]]))
        else:  # config
            if "=" not in line:
                raise ParseError(lineno, "expected: key = value")
            key, _, val = line.partition("=")
            key = key.strip().lower()
            val = val.strip()
            if key in _LIST_KEYS:
                lists[key] = [_number(t.strip(), lineno) for t in val.split(",")]
            elif key in _SCALAR_KEYS:
                scalars[key] = _number(val, lineno)
            else:
                raise ParseError(lineno, f"unknown config key {key!r}")

    if "demand" not in scalars:
        raise ParseError(0, "config is missing 'demand'")

    voll = scalars.get("voll", 170.0)
    # Self-hedge fallback prices: the up default sits well above the
    # involuntary-shed price so voluntary self-hedging never undercuts
    # the market; the down default makes spilling surplus free.
    scar_up = scalars.get("scarcity_up", 3.0 * voll)
    scar_dn = scalars.get("scarcity_down", 0.0)

    sellers = tuple(
        FlexibleResource(
            id=g[0], capacity=g[1], cost=g[2], min_output=g[3],
            strike_up=g[4], strike_down=g[5],
        )
        for g in gens
    )

    probs: tuple[float, ...] | None = None
    triggers: dict[str, tuple[float, ...]] = {}
    buyers = []
    for bid, cost, trg, prb, lineno in unc:
        if probs is None:
            probs = tuple(prb)
        elif tuple(prb) != probs:
            raise ParseError(lineno, f"{bid}: probabilities differ from earlier rows")
        triggers[bid] = tuple(trg)
        buyers.append(
            UncertainResource(id=bid, cost=cost, scarcity_up=scar_up, scarcity_down=scar_dn)
        )
    if probs is None:
        # No uncertain resources: a two-point degenerate distribution so
        # the tier machinery stays well formed.
        probs = (0.5, 0.5)

    fleets: dict[str, dict[str, float]] = {}
    for lineno, name, ramps in fleets_raw:
        if len(ramps) != len(sellers):
            raise ParseError(
                lineno, f"fleet {name!r} has {len(ramps)} ramps for {len(sellers)} generators"
            )
        fleets[name] = {g.id: r for g, r in zip(sellers, ramps)}

    def steps(which: str) -> tuple[DemandStep, ...] | None:
        wtp = lists.get(f"wtp_{which}")
        if wtp is None:
            return None
        size = lists.get(f"step_{which}")
        if size is not None and len(size) != len(wtp):
            raise ParseError(0, f"wtp_{which} and step_{which} differ in length")
        if size is None:
            size = [float("inf")] * len(wtp)
        return tuple(DemandStep(size=s, price=p) for s, p in zip(size, wtp))

    config = MarketConfig(
        demand=scalars["demand"],
        voll=voll,
        voll_quad=scalars.get("voll_quad", 0.01),
        volume_penalty=scalars.get("volume_penalty", 0.01),
        virtual_bid_cost=scalars.get("virtual_bid_cost", 0.0),
        reserve_req_up=scalars.get("reserve_req_up"),
        reserve_req_down=scalars.get("reserve_req_down"),
        wtp_up=steps("up"),
        wtp_down=steps("down"),
        price_tol=scalars.get("price_tol", 0.05),
        feas_tol=scalars.get("feas_tol", 1e-6),
    )

    system = MarketSystem(
        sellers=sellers,
        buyers=tuple(buyers),
        scenarios=ScenarioSet(probabilities=probs, triggers=triggers),
        config=config,
        fleets=fleets,
    )
    problems = validate_system(system)
    if problems:
        raise ValueError("invalid system:\n  " + "\n  ".join(problems))
    return system


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_system(system: MarketSystem) -> str:
    """Canonical text form; parse(serialize(s)) reproduces ``s``."""
    out = ["[generators]"]
    for g in system.sellers:
        out.append(
            f"{g.id} {_fmt(g.capacity)} {_fmt(g.cost)} {_fmt(g.min_output)} "
            f"{_fmt(g.strike_up)} {_fmt(g.strike_down)}"
        )
    out.append("")
    out.append("[uncertain]")
    for b in system.buyers:
        trg = " ".join(_fmt(t) for t in system.scenarios.triggers[b.id])
        prb = " ".join(_fmt(p) for p in system.scenarios.probabilities)
        out.append(f"{b.id} {_fmt(b.cost)} {trg} {prb}")
    out.append("")
    out.append("[fleets]")
    for name, ramps in system.fleets.items():
        out.append(name + " " + " ".join(_fmt(ramps[g.id]) for g in system.sellers))
    out.append("")
    out.append("[config]")
    cfg = system.config
    out.append(f"demand = {_fmt(cfg.demand)}")
    out.append(f"voll = {_fmt(cfg.voll)}")
    out.append(f"voll_quad = {_fmt(cfg.voll_quad)}")
    out.append(f"volume_penalty = {_fmt(cfg.volume_penalty)}")
    out.append(f"virtual_bid_cost = {_fmt(cfg.virtual_bid_cost)}")
    if cfg.reserve_req_up is not None:
        out.append(f"reserve_req_up = {_fmt(cfg.reserve_req_up)}")
    if cfg.reserve_req_down is not None:
        out.append(f"reserve_req_down = {_fmt(cfg.reserve_req_down)}")
    for which in ("up", "down"):
        steps = getattr(cfg, f"wtp_{which}")
        if steps:
            out.append(f"wtp_{which} = " + ", ".join(_fmt(s.price) for s in steps))
            out.append(f"step_{which} = " + ", ".join(_fmt(s.size) for s in steps))
    if system.buyers:
        out.append(f"scarcity_up = {_fmt(system.buyers[0].scarcity_up)}")
        out.append(f"scarcity_down = {_fmt(system.buyers[0].scarcity_down)}")
    out.append(f"price_tol = {_fmt(cfg.price_tol)}")
    out.append(f"feas_tol = {_fmt(cfg.feas_tol)}")
    return "\n".join(out) + "\n"


def load_system(path: str) -> MarketSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())


def load_bundled_system() -> MarketSystem:
    """The packaged six-fleet example system."""
    text = (
        importlib.resources.files("flexmarket.data")
        .joinpath("paper_system.txt")
        .read_text(encoding="utf-8")
    )
    return parse_system(text)
