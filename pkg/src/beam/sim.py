"""Deterministic logistics world: depot, customers, trucks, zones.

One tick is one simulated minute (60,000 logical ms).  Geometry is planar
with Euclidean distance and circular zones; zone membership is evaluated
after each tick's movement with an exact squared-distance test.  All
randomness comes from one seeded generator and only jitters truck speed,
so a scenario with jitter 0 is exactly reproducible arithmetic.

The simulator plays the CRM/WMS/GIS adapters and the truck sensors: it
emits clock, order/returnee, GPS, fuel, zone and delivery events, and it
consumes reroute commands addressed to the GIS.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import yaml

from .events import Event

TICK_MS = 60_000


class ConfigError(ValueError):
    pass


@dataclass
class Stop:
    stop_id: str                 # customer id or "depot"
    pos: tuple[float, float]
    planned_tick: int


@dataclass
class TruckState:
    id: str
    pos: tuple[float, float]
    speed: float
    fuel: float
    fuel_rate: float
    route: list[Stop]
    leg_index: int = 0
    inside_zones: set[str] = field(default_factory=set)
    cumulative_delay: int = 0


@dataclass
class Zone:
    id: str
    center: tuple[float, float]
    radius: float
    customers: tuple[str, ...] = ()


@dataclass
class Customer:
    id: str
    pos: tuple[float, float]


@dataclass
class WorldState:
    tick: int
    clock0: int                  # minutes of day at tick 0
    depot: tuple[float, float]
    customers: dict[str, Customer]
    zones: list[Zone]
    trucks: dict[str, TruckState]
    schedule: dict[int, list[dict]]
    jitter: float
    rng: random.Random
    services: tuple[str, ...] = ("gis",)


def _pos(value, what: str) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(c, (int, float)) and math.isfinite(c) for c in value)):
        raise ConfigError(f"{what}: bad position {value!r}")
    return (float(value[0]), float(value[1]))


def _clock_minutes(text) -> int:
    if isinstance(text, int):
        value = text
    else:
        try:
            h, m = str(text).split(":")
            value = int(h) * 60 + int(m)
        except ValueError:
            raise ConfigError(f"bad clock value {text!r}") from None
    if not 0 <= value < 1440:
        raise ConfigError(f"clock value out of range: {text!r}")
    return value


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        config = yaml.safe_load(fh)
    if not isinstance(config, dict):
        raise ConfigError("scenario config must be a mapping")
    return config


def init(config: dict, seed: int) -> WorldState:
    """Build the world exactly from config; same (config, seed) -> same world."""
    try:
        depot = _pos(config.get("depot", [0, 0]), "depot")
        customers = {}
        for entry in config.get("customers", []):
            customers[entry["id"]] = Customer(entry["id"], _pos(entry["pos"], entry["id"]))
        zones = []
        for entry in config.get("zones", []):
            radius = entry.get("radius", 0)
            if not isinstance(radius, (int, float)) or radius <= 0:
                raise ConfigError(f"zone {entry.get('id')!r}: radius must be positive")
            for cust in entry.get("customers", []):
                if cust not in customers:
                    raise ConfigError(f"zone {entry.get('id')!r}: unknown customer {cust!r}")
            zones.append(Zone(entry["id"], _pos(entry["center"], entry["id"]),
                              float(radius), tuple(entry.get("customers", []))))
        trucks = {}
        for entry in config.get("trucks", []):
            speed = entry.get("speed", 0)
            if not isinstance(speed, (int, float)) or speed <= 0:
                raise ConfigError(f"truck {entry.get('id')!r}: speed must be positive")
            route = []
            for stop in entry.get("route", []):
                stop_id = stop["stop"]
                if stop_id == "depot":
                    pos = depot
                elif stop_id in customers:
                    pos = customers[stop_id].pos
                else:
                    raise ConfigError(f"truck {entry.get('id')!r}: unknown stop {stop_id!r}")
                route.append(Stop(stop_id, pos, int(stop.get("planned", 0))))
            start = _pos(entry.get("start", depot), entry.get("id", "truck"))
            trucks[entry["id"]] = TruckState(
                id=entry["id"], pos=start, speed=float(speed),
                fuel=float(entry.get("fuel", 0.0)),
                fuel_rate=float(entry.get("fuel_rate", 0.0)),
                route=route,
            )
        schedule: dict[int, list[dict]] = {}
        for entry in config.get("schedule", []):
            item = {"etype": entry["etype"], "attrs": dict(entry.get("attrs", {}))}
            if "topic" in entry:
                item["topic"] = entry["topic"]
            schedule.setdefault(int(entry["tick"]), []).append(item)
        jitter = float(config.get("jitter", 0.0))
        world = WorldState(
            tick=0,
            clock0=_clock_minutes(config.get("start_clock", "08:00")),
            depot=depot,
            customers=customers,
            zones=zones,
            trucks=trucks,
            schedule=schedule,
            jitter=jitter,
            rng=random.Random(seed),
            services=tuple(config.get("services", ["gis"])),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config field: {exc}") from None
    for truck in world.trucks.values():
        truck.inside_zones = {z.id for z in world.zones if _inside(truck.pos, z)}
    return world


def _inside(pos: tuple[float, float], zone: Zone) -> bool:
    dx = pos[0] - zone.center[0]
    dy = pos[1] - zone.center[1]
    return dx * dx + dy * dy <= zone.radius * zone.radius


_SCHEDULE_TOPICS = {"ReturneeRequest": "crm.returnee", "OrderEvent": "crm.order"}


def step_events(world: WorldState, make_id):
    """Advance one tick, yielding events in deterministic order.

    Sensing comes before movement, so a truck's GPS/zone events for tick t
    reflect its position at the start of the tick (speed x t along its
    route when unjittered), and the movement phase then advances it and
    emits any deliveries it completes during the tick.  Yielding one event
    at a time lets the caller publish each before the next id is taken, so
    ids follow publish order exactly even when a consumer reacts mid-tick
    (e.g. a reroute command arriving between two of this tick's events).
    """
    t = world.tick
    now = t * TICK_MS
    clock_min = (world.clock0 + t) % 1440

    def ev(etype, topic, attrs):
        return Event(id=make_id(), etype=etype, topic=topic, t_start=now, t_end=now,
                     source="sim", attrs=attrs)

    yield ev("ClockTick", "sim.clock", {"tick": t, "clock_min": clock_min})

    for item in world.schedule.get(t, []):
        topic = item.get("topic") or _SCHEDULE_TOPICS.get(item["etype"], "crm.misc")
        yield ev(item["etype"], topic, dict(item["attrs"]))

    for truck_id in sorted(world.trucks):
        truck = world.trucks[truck_id]
        yield ev("GpsPositionEvent", "trucks.gps",
                 {"truck": truck.id, "x": truck.pos[0], "y": truck.pos[1]})
        yield ev("FuelLevelEvent", "trucks.fuel",
                 {"truck": truck.id, "level": truck.fuel})
        for zone in world.zones:
            inside = _inside(truck.pos, zone)
            was = zone.id in truck.inside_zones
            if inside and not was:
                truck.inside_zones.add(zone.id)
                yield ev("TruckEnteredZone", "trucks.zone",
                         {"truck": truck.id, "zone": zone.id})
            elif was and not inside:
                truck.inside_zones.discard(zone.id)
                yield ev("TruckExitedZone", "trucks.zone",
                         {"truck": truck.id, "zone": zone.id})

    for truck_id in sorted(world.trucks):
        truck = world.trucks[truck_id]
        speed = truck.speed
        if world.jitter:
            speed *= 1.0 + world.jitter * world.rng.uniform(-1.0, 1.0)
        budget = speed if truck.fuel > 0 else 0.0
        while budget > 0 and truck.leg_index < len(truck.route):
            stop = truck.route[truck.leg_index]
            dx = stop.pos[0] - truck.pos[0]
            dy = stop.pos[1] - truck.pos[1]
            remaining = math.hypot(dx, dy)
            if truck.fuel_rate > 0:
                budget = min(budget, truck.fuel / truck.fuel_rate)
            if budget <= 0:
                break
            if remaining <= budget:
                truck.pos = stop.pos
                truck.fuel = max(0.0, truck.fuel - remaining * truck.fuel_rate)
                budget -= remaining
                truck.leg_index += 1
                delay = max(0, t - stop.planned_tick)
                truck.cumulative_delay = delay
                if stop.stop_id != "depot":
                    yield ev("DeliveryCompleted", "wms.delivery",
                             {"truck": truck.id, "customer": stop.stop_id,
                              "delay_min": delay, "tick": t})
            else:
                frac = budget / remaining
                truck.pos = (truck.pos[0] + dx * frac, truck.pos[1] + dy * frac)
                truck.fuel = max(0.0, truck.fuel - budget * truck.fuel_rate)
                budget = 0.0

    world.tick = t + 1


def step(world: WorldState, make_id) -> list[Event]:
    """Eager form of step_events for direct use and tests."""
    return list(step_events(world, make_id))


def handle_command(world: WorldState, cmd: Event, make_id) -> list[Event]:
    """Apply a GIS reroute command; failures become events, not errors."""
    now = cmd.t_end
    verb = cmd.attrs.get("verb")
    truck_id = cmd.attrs.get("truck")
    customer_id = cmd.attrs.get("stop")

    def fail(reason):
        return [Event(id=make_id(), etype="CommandFailed", topic="cmd.failed",
                      t_start=now, t_end=now, source="sim",
                      attrs={"reason": reason, "verb": str(verb or "")},
                      parents=(cmd.id,))]

    if verb != "reroute":
        return fail(f"unknown verb {verb!r}")
    truck = world.trucks.get(str(truck_id))
    if truck is None:
        return fail(f"unknown truck {truck_id!r}")
    customer = world.customers.get(str(customer_id))
    if customer is None:
        return fail(f"unknown customer {customer_id!r}")

    insert_at = min(truck.leg_index, len(truck.route))
    truck.route.insert(insert_at, Stop(customer.id, customer.pos, 0))
    # replan arrivals for the remaining stops from the current position
    tick = world.tick
    pos = truck.pos
    eta = tick
    for stop in truck.route[truck.leg_index:]:
        dist = math.hypot(stop.pos[0] - pos[0], stop.pos[1] - pos[1])
        eta += math.ceil(dist / truck.speed) if truck.speed > 0 else 0
        stop.planned_tick = eta
        pos = stop.pos
    return [Event(id=make_id(), etype="RouteChanged", topic="gis.route",
                  t_start=now, t_end=now, source="sim",
                  attrs={"truck": truck.id, "stop": customer.id},
                  parents=(cmd.id,))]
