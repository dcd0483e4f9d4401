"""Deterministic discrete-time traffic world.

The town is a main east-west corridor crossed by one signalized street per
block.  Every vehicle (the ego included) runs the same policy set:
constant-time-gap car following, stop before a red approach line, overtake
static blockages through an adjacent lane with a trapezoidal lateral
profile, and drift back to the home lane once the road ahead is clear.
All randomness comes from one seeded generator, so identical configs
reproduce identical recordings bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Box

VEHICLE_LENGTH = 4.6
VEHICLE_WIDTH = 1.8
ANIMAL_LENGTH = 1.2
ANIMAL_WIDTH = 0.8

MAX_ACCEL = 2.5  # m/s^2
BRAKE_DECEL = 3.0  # comfortable braking, used for stop-distance planning
HARD_DECEL = 5.0  # emergency braking capability, bounds per-tick speed drops
BRAKE_SLACK = 1.0  # m, planning margin before a stop point
TIME_GAP = 1.5  # s, car-following headway
STATIC_GAP = 2.0  # m, bumper-to-bumper spacing when stopped
STOP_MARGIN = 1.0  # m, kept before an approach line
OVERTAKE_TRIGGER = 25.0  # m, distance at which a static blockage prompts a lane change
LANE_CHANGE_DURATION = 3.0  # s
STOPPED_SPEED = 0.1  # m/s, below this a vehicle counts as stopped
POLICY_HORIZON = 60.0  # m, how far ahead constraints are considered
APPROACH_ZONE = 30.0  # m, a signal impacts vehicles within this range
QUEUE_CHAIN_GAP = 15.0  # m, bumper gap linking queued vehicles
OBSTACLE_LOOKAHEAD = 50.0  # m, ground-truth range for obstacles ahead

RED = "red"
YELLOW = "yellow"
GREEN = "green"


class ConfigError(ValueError):
    pass


class CapacityError(ConfigError):
    pass


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class MapConfig:
    blocks: int = 1
    block_length: float = 120.0
    lanes_per_direction: int = 2
    lane_width: float = 3.5
    cross_span: float = 240.0

    def validate(self):
        if self.blocks < 0:
            raise ConfigError("blocks must be >= 0")
        if self.block_length <= 0 or self.lane_width <= 0 or self.cross_span <= 0:
            raise ConfigError("map dimensions must be positive")
        if self.lanes_per_direction < 1:
            raise ConfigError("lanes_per_direction must be >= 1")


@dataclass
class LightTimings:
    green_s: float = 8.0
    yellow_s: float = 2.0
    red_s: float = 12.0

    def validate(self):
        if min(self.green_s, self.yellow_s, self.red_s) <= 0:
            raise ConfigError("light timings must be positive")
        if self.red_s < self.green_s + self.yellow_s - 1e-9:
            raise ConfigError("red must last at least green + yellow, or greens overlap")


@dataclass
class ObstacleSpec:
    kind: str  # "stopped_vehicle" or "animal"
    lane_id: str
    position_s: float
    spawn_s: float = 0.0
    despawn_s: float = math.inf

    def validate(self):
        if self.kind not in ("stopped_vehicle", "animal"):
            raise ConfigError(f"unknown obstacle kind {self.kind!r}")


@dataclass
class PinnedVehicle:
    """A vehicle placed at an exact spot instead of a random slot."""

    lane_id: str
    position_s: float
    cruise_speed: float | None = None
    overtakes: bool = True


@dataclass
class EgoConfig:
    lane_id: str | None = None  # defaults to the first eastbound main lane
    position_s: float = 10.0
    cruise_speed: float = 9.0
    overtakes: bool = True


@dataclass
class WorldConfig:
    seed: int = 0
    tick_rate: int = 10
    duration_s: float = 30.0
    map: MapConfig = field(default_factory=MapConfig)
    npc_count: int = 0
    light_timings: LightTimings = field(default_factory=LightTimings)
    obstacles: list = field(default_factory=list)
    weather_noise: float = 0.0
    ego: EgoConfig = field(default_factory=EgoConfig)
    pinned_npcs: list = field(default_factory=list)
    violation_rate: float = 0.0

    def validate(self):
        if self.tick_rate <= 0:
            raise ConfigError("tick_rate must be positive")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.npc_count < 0:
            raise ConfigError("npc_count must be >= 0")
        if self.weather_noise < 0:
            raise ConfigError("weather_noise must be >= 0")
        if not 0.0 <= self.violation_rate <= 1.0:
            raise ConfigError("violation_rate must lie in [0, 1]")
        self.map.validate()
        self.light_timings.validate()
        for spec in self.obstacles:
            spec.validate()


# ---------------------------------------------------------------------------
# Town geometry


@dataclass(frozen=True)
class Lane:
    lane_id: str
    axis: str  # "h" or "v"
    direction: int  # +1 along the axis, -1 against it
    offset: float  # fixed coordinate of the lane center
    lo: float
    hi: float
    index: int  # 0 is the innermost lane

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def heading(self) -> float:
        if self.axis == "h":
            return 0.0 if self.direction > 0 else math.pi
        return math.pi / 2 if self.direction > 0 else -math.pi / 2

    def point_at(self, s: float) -> tuple[float, float]:
        along = self.lo + s if self.direction > 0 else self.hi - s
        if self.axis == "h":
            return (along, self.offset)
        return (self.offset, along)

    def s_of(self, x: float, y: float) -> float:
        along = x if self.axis == "h" else y
        return along - self.lo if self.direction > 0 else self.hi - along


@dataclass(frozen=True)
class Intersection:
    index: int
    box: Box


class Town:
    """Road network: lanes, intersections and the signal schedule geometry."""

    def __init__(self, map_config: MapConfig):
        map_config.validate()
        self.map = map_config
        n = map_config.lanes_per_direction
        w = map_config.lane_width
        length = (map_config.blocks + 1) * map_config.block_length
        half_cross = map_config.cross_span / 2.0
        self.road_half_width = n * w

        self.lanes: dict[str, Lane] = {}
        for i in range(n):
            off = w * (0.5 + i)
            self._add(Lane(f"h0_e_{i}", "h", +1, -off, 0.0, length, i))
            self._add(Lane(f"h0_w_{i}", "h", -1, +off, 0.0, length, i))
        self.intersections: list[Intersection] = []
        for k in range(1, map_config.blocks + 1):
            x0 = k * map_config.block_length
            self.intersections.append(
                Intersection(k - 1, Box(x0 - n * w, -n * w, x0 + n * w, n * w))
            )
            for i in range(n):
                off = w * (0.5 + i)
                self._add(Lane(f"v{k - 1}_n_{i}", "v", +1, x0 + off, -half_cross, half_cross, i))
                self._add(Lane(f"v{k - 1}_s_{i}", "v", -1, x0 - off, -half_cross, half_cross, i))

    def _add(self, lane: Lane):
        self.lanes[lane.lane_id] = lane

    def lane(self, lane_id: str) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise ConfigError(f"unknown lane {lane_id!r}") from None

    def adjacent_lanes(self, lane: Lane) -> dict[str, Lane]:
        """Neighbors keyed by 'left'/'right' relative to the travel heading."""
        prefix = lane.lane_id.rsplit("_", 1)[0]
        out: dict[str, Lane] = {}
        for delta, toward_inner in ((-1, True), (+1, False)):
            other_id = f"{prefix}_{lane.index + delta}"
            if other_id not in self.lanes:
                continue
            # inner lanes sit toward the road centerline, which is to the left
            # for right-hand traffic
            out["left" if toward_inner else "right"] = self.lanes[other_id]
        return out

    def lane_at(self, x: float, y: float) -> Optional[Lane]:
        best = None
        best_err = math.inf
        for lane in self.lanes.values():
            coord = y if lane.axis == "h" else x
            along = x if lane.axis == "h" else y
            if not (lane.lo - 1e-6 <= along <= lane.hi + 1e-6):
                continue
            err = abs(coord - lane.offset)
            if err <= self.map.lane_width / 2 + 1e-6 and err < best_err:
                best = lane
                best_err = err
        return best

    def entry_s(self, lane: Lane, intersection: Intersection) -> float:
        """s-coordinate of the intersection entry edge along the lane."""
        box = intersection.box
        if lane.axis == "h":
            edge = box.x1 if lane.direction > 0 else box.x2
            return lane.s_of(edge, lane.offset)
        edge = box.y1 if lane.direction > 0 else box.y2
        return lane.s_of(lane.offset, edge)

    def intersections_on(self, lane: Lane) -> list[tuple[Intersection, float]]:
        """(intersection, entry_s) pairs for crossings the lane passes through."""
        out = []
        for inter in self.intersections:
            box = inter.box
            if lane.axis == "h":
                crosses = box.y1 <= lane.offset <= box.y2
            else:
                crosses = box.x1 <= lane.offset <= box.x2
            if crosses:
                out.append((inter, self.entry_s(lane, inter)))
        out.sort(key=lambda pair: pair[1])
        return out

    def group_of(self, lane: Lane) -> str:
        return lane.axis


# ---------------------------------------------------------------------------
# World state


@dataclass(frozen=True)
class VehicleState:
    id: int
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    speed: float
    lane_id: str
    c1x: float
    c1y: float
    c2x: float
    c2y: float

    @property
    def box(self) -> Box:
        return Box(self.c1x, self.c1y, self.c2x, self.c2y)


@dataclass(frozen=True)
class LightState:
    intersection: int
    approach: str  # "h" for the east/west arms, "v" for north/south
    color: str


@dataclass(frozen=True)
class ObstacleState:
    id: int
    kind: str
    lane_id: str
    x: float
    y: float
    c1x: float
    c1y: float
    c2x: float
    c2y: float

    @property
    def box(self) -> Box:
        return Box(self.c1x, self.c1y, self.c2x, self.c2y)


@dataclass(frozen=True)
class Frame:
    index: int
    time: float
    vehicles: tuple
    lights: tuple
    intersections: tuple  # intersection boxes as corner 4-tuples
    obstacles: tuple
    ego_id: int

    def vehicle(self, vehicle_id: int) -> VehicleState:
        for v in self.vehicles:
            if v.id == vehicle_id:
                return v
        raise KeyError(f"vehicle {vehicle_id} not in frame {self.index}")

    @property
    def ego(self) -> VehicleState:
        return self.vehicle(self.ego_id)


@dataclass
class Recording:
    config: WorldConfig
    frames: list
    observations: list | None = None  # one Observation per frame when sensed
    clusters: list | None = None  # per-frame ActionChange lists when analysed
    extras: dict = field(default_factory=dict)  # scenario manifest extras

    @property
    def tick_rate(self) -> int:
        return self.config.tick_rate


class _Agent:
    __slots__ = (
        "id", "lane", "s", "speed", "cruise", "overtakes", "home_lane",
        "from_lane", "to_lane", "change_ticks",
    )

    def __init__(self, vid, lane, s, cruise, overtakes):
        self.id = vid
        self.lane = lane
        self.s = s
        self.speed = 0.0
        self.cruise = cruise
        self.overtakes = overtakes
        self.home_lane = lane
        self.from_lane = None
        self.to_lane = None
        self.change_ticks = 0

    @property
    def changing(self) -> bool:
        return self.to_lane is not None


def _change_profile(progress: float) -> float:
    """Fraction of lateral travel completed; trapezoidal rate with quarter
    ramps, so the total displacement is exactly one lane width."""
    p = min(max(progress, 0.0), 1.0)
    # peak rate r chosen so the integral over [0, 1] is 1: r * 0.75 = 1
    r = 1.0 / 0.75
    if p <= 0.25:
        return 0.5 * r * p * p / 0.25
    if p <= 0.75:
        return r * 0.125 + r * (p - 0.25)
    q = 1.0 - p
    return 1.0 - 0.5 * r * q * q / 0.25


def _mix_bits(*values: int) -> int:
    h = 0x9E3779B97F4A7C15
    for v in values:
        h ^= (v + 0x9E3779B97F4A7C15 + (h << 6) + (h >> 2)) & 0xFFFFFFFFFFFFFFFF
        h &= 0xFFFFFFFFFFFFFFFF
    return h


class World:
    def __init__(self, config: WorldConfig):
        config.validate()
        self.config = config
        self.town = Town(config.map)
        self.tick = 0
        self.rng = np.random.default_rng(config.seed)
        self._ticks = {
            "green": round(config.light_timings.green_s * config.tick_rate),
            "yellow": round(config.light_timings.yellow_s * config.tick_rate),
            "red": round(config.light_timings.red_s * config.tick_rate),
        }
        self._cycle = sum(self._ticks.values())
        self._phase_offsets = [
            int(self.rng.integers(0, self._cycle)) for _ in self.town.intersections
        ]
        self._obstacles = list(config.obstacles)
        for spec in self._obstacles:
            lane = self.town.lane(spec.lane_id)
            if not (0.0 <= spec.position_s <= lane.length):
                raise ConfigError(
                    f"obstacle at s={spec.position_s} is outside lane {spec.lane_id}"
                )
        self.agents: list[_Agent] = []
        self._spawn_vehicles()

    # -- spawning ---------------------------------------------------------

    def _spawn_vehicles(self):
        cfg = self.config
        ego_lane = self.town.lane(cfg.ego.lane_id or "h0_e_0")
        ego = _Agent(0, ego_lane, cfg.ego.position_s, cfg.ego.cruise_speed, cfg.ego.overtakes)
        self.agents.append(ego)

        taken: list[tuple[Lane, float]] = [(ego_lane, cfg.ego.position_s)]
        next_id = 1
        for pin in cfg.pinned_npcs:
            lane = self.town.lane(pin.lane_id)
            cruise = pin.cruise_speed if pin.cruise_speed is not None else float(self.rng.uniform(7.0, 11.0))
            agent = _Agent(next_id, lane, pin.position_s, cruise, pin.overtakes)
            self.agents.append(agent)
            taken.append((lane, pin.position_s))
            next_id += 1

        min_slot = 16.0
        slots: list[tuple[str, float]] = []
        capacity = 0
        for lane in self.town.lanes.values():
            count = int(lane.length // min_slot)
            capacity += count
            for j in range(count):
                slots.append((lane.lane_id, 4.0 + j * min_slot))
        if cfg.npc_count > capacity:
            raise CapacityError(
                f"npc_count {cfg.npc_count} exceeds lane capacity {capacity}"
            )

        order = self.rng.permutation(len(slots))
        placed = 0
        for idx in order:
            if placed >= cfg.npc_count:
                break
            lane_id, s = slots[idx]
            lane = self.town.lane(lane_id)
            if self._slot_blocked(lane, s, taken):
                continue
            cruise = float(self.rng.uniform(7.0, 11.0))
            self.agents.append(_Agent(next_id, lane, s, cruise, True))
            taken.append((lane, s))
            next_id += 1
            placed += 1
        if placed < cfg.npc_count:
            raise CapacityError(
                f"could only place {placed} of {cfg.npc_count} vehicles without overlap"
            )

    def _slot_blocked(self, lane: Lane, s: float, taken) -> bool:
        x, y = lane.point_at(s)
        for inter in self.town.intersections:
            if inter.box.inflate(8.0).contains(x, y):
                return True
        for other_lane, other_s in taken:
            if other_lane.lane_id == lane.lane_id and abs(other_s - s) < min(12.0, VEHICLE_LENGTH + STATIC_GAP * 2):
                return True
        for spec in self._obstacles:
            if spec.lane_id == lane.lane_id and abs(spec.position_s - s) < 14.0:
                return True
        return False

    # -- signals ----------------------------------------------------------

    def group_color(self, intersection_index: int, group: str, tick: int | None = None) -> str:
        tick = self.tick if tick is None else tick
        g = self._ticks["green"]
        y = self._ticks["yellow"]
        r = self._ticks["red"]
        shift = 0
        if group == "v":
            shift = g + y + (r - g - y) // 2
        tau = (tick + self._phase_offsets[intersection_index] - shift) % self._cycle
        if tau < g:
            return GREEN
        if tau < g + y:
            return YELLOW
        return RED

    # -- stepping ---------------------------------------------------------

    def _active_obstacles(self) -> list[tuple[int, ObstacleSpec]]:
        t = self.tick / self.config.tick_rate
        return [
            (i, spec)
            for i, spec in enumerate(self._obstacles)
            if spec.spawn_s <= t < spec.despawn_s
        ]

    def _ring_ahead(self, lane: Lane, s_from: float, s_to: float) -> float:
        d = s_to - s_from
        if d < 0:
            d += lane.length
        return d

    def _occupants(self, lane_id: str):
        """Agents occupying a lane, including both ends of an active change."""
        for agent in self.agents:
            if agent.changing:
                if agent.from_lane.lane_id == lane_id or agent.to_lane.lane_id == lane_id:
                    yield agent
            elif agent.lane.lane_id == lane_id:
                yield agent

    def _leader(self, agent: _Agent, lane: Lane):
        best = None
        best_d = math.inf
        for other in self._occupants(lane.lane_id):
            if other.id == agent.id:
                continue
            d = self._ring_ahead(lane, agent.s, other.s)
            if 1e-9 < d < best_d:
                best = other
                best_d = d
        return best, best_d

    def _next_signal(self, lane: Lane, s: float):
        """(intersection, distance to entry) for the nearest signal ahead."""
        best = None
        best_d = math.inf
        for inter, entry in self.town.intersections_on(lane):
            d = self._ring_ahead(lane, s, entry % lane.length)
            if d < best_d:
                best = inter
                best_d = d
        return best, best_d

    def _signal_explains_stop(self, agent: _Agent) -> bool:
        inter, d = self._next_signal(agent.lane, agent.s)
        if inter is None or d > APPROACH_ZONE:
            return False
        return self.group_color(inter.index, self.town.group_of(agent.lane)) in (RED, YELLOW)

    def _static_blockage(self, agent: _Agent, lane: Lane, horizon: float):
        """Nearest obstacle or unexplained stopped vehicle ahead in a lane."""
        best_d = math.inf
        found = False
        for _, spec in self._active_obstacles():
            if spec.lane_id != lane.lane_id:
                continue
            d = self._ring_ahead(lane, agent.s, spec.position_s)
            if d < best_d:
                best_d = d
                found = True
        for other in self._occupants(lane.lane_id):
            if other.id == agent.id or other.speed >= STOPPED_SPEED:
                continue
            if self._signal_explains_stop(other):
                continue
            d = self._ring_ahead(lane, agent.s, other.s)
            if d < best_d:
                best_d = d
                found = True
        if found and best_d <= horizon:
            return best_d
        return None

    def _gap_clear(self, agent: _Agent, target: Lane) -> bool:
        for other in self._occupants(target.lane_id):
            if other.id == agent.id:
                continue
            d = self._ring_ahead(target, agent.s, other.s)
            behind = target.length - d
            if d < 14.0 or behind < 8.0:
                return False
        for _, spec in self._active_obstacles():
            if spec.lane_id != target.lane_id:
                continue
            d = self._ring_ahead(target, agent.s, spec.position_s)
            if d < 20.0 or target.length - d < 2.0:
                return False
        return True

    def _runs_red(self, agent: _Agent, inter: Intersection) -> bool:
        if self.config.violation_rate <= 0.0:
            return False
        cycle_index = (self.tick + self._phase_offsets[inter.index]) // self._cycle
        h = _mix_bits(self.config.seed, agent.id, inter.index, cycle_index)
        return (h % 10_000) / 10_000.0 < self.config.violation_rate

    def _plan_speed(self, agent: _Agent) -> tuple[float, float | None]:
        """(allowed speed, hard stop position in own-lane s, or None)."""
        lanes = [agent.lane] if not agent.changing else [agent.from_lane, agent.to_lane]
        v_allow = agent.cruise
        hard_stop = None
        for lane in lanes:
            leader, d = self._leader(agent, lane)
            if leader is not None and d < POLICY_HORIZON:
                bumper = d - VEHICLE_LENGTH
                v_allow = min(v_allow, max(0.0, (bumper - STATIC_GAP) / TIME_GAP))
            for _, spec in self._active_obstacles():
                if spec.lane_id != lane.lane_id:
                    continue
                d = self._ring_ahead(lane, agent.s, spec.position_s)
                if d < POLICY_HORIZON:
                    stop_d = d - VEHICLE_LENGTH - STATIC_GAP
                    v_allow = min(
                        v_allow, math.sqrt(2.0 * BRAKE_DECEL * max(stop_d - BRAKE_SLACK, 0.0))
                    )
                    if lane.lane_id == agent.lane.lane_id:
                        limit = agent.s + max(stop_d, 0.0)
                        hard_stop = limit if hard_stop is None else min(hard_stop, limit)
            inter, d_entry = self._next_signal(lane, agent.s)
            if inter is None or d_entry > POLICY_HORIZON:
                continue
            color = self.group_color(inter.index, self.town.group_of(lane))
            if color == GREEN or self._runs_red(agent, inter):
                continue
            stop_d = d_entry - VEHICLE_LENGTH / 2.0 - STOP_MARGIN
            if color == YELLOW:
                # commit only when even emergency braking cannot stop in time;
                # such a vehicle always clears the line before red
                if stop_d < agent.speed * agent.speed / (2.0 * HARD_DECEL):
                    continue
            if stop_d < -0.5:
                continue  # already past the line
            v_allow = min(v_allow, math.sqrt(2.0 * BRAKE_DECEL * max(stop_d - BRAKE_SLACK, 0.0)))
            if color == RED:
                limit = agent.s + max(stop_d, 0.0)
                hard_stop = limit if hard_stop is None else min(hard_stop, limit)
        return v_allow, hard_stop

    def _maybe_start_change(self, agent: _Agent):
        if agent.changing or not agent.overtakes:
            return
        blocked = self._static_blockage(agent, agent.lane, OVERTAKE_TRIGGER)
        neighbors = self.town.adjacent_lanes(agent.lane)
        if blocked is not None:
            # a signal queue is not a blockage worth overtaking when the
            # signal also holds this agent
            inter, d_entry = self._next_signal(agent.lane, agent.s)
            if (
                inter is not None
                and d_entry <= APPROACH_ZONE
                and self.group_color(inter.index, self.town.group_of(agent.lane)) in (RED, YELLOW)
            ):
                return
            for side in ("left", "right"):
                target = neighbors.get(side)
                if target is not None and self._gap_clear(agent, target):
                    agent.from_lane = agent.lane
                    agent.to_lane = target
                    agent.change_ticks = 0
                    return
            return
        # drift back to the home lane once it is clear
        if agent.lane.lane_id != agent.home_lane.lane_id:
            home = agent.home_lane
            if home.lane_id not in {l.lane_id for l in neighbors.values()}:
                return
            if self._static_blockage(agent, home, 35.0) is None and self._gap_clear(agent, home):
                agent.from_lane = agent.lane
                agent.to_lane = home
                agent.change_ticks = 0

    def step(self) -> Frame:
        """Advance every vehicle one tick and return the new frame."""
        dt = 1.0 / self.config.tick_rate
        for agent in self.agents:
            self._maybe_start_change(agent)
        plans = [self._plan_speed(agent) for agent in self.agents]
        for agent, (v_allow, hard_stop) in zip(self.agents, plans):
            v_new = min(v_allow, agent.speed + MAX_ACCEL * dt)
            v_new = max(v_new, agent.speed - HARD_DECEL * dt, 0.0)
            s_new = agent.s + v_new * dt
            if hard_stop is not None and s_new > hard_stop:
                s_new = hard_stop
                v_new = 0.0
            lane_len = (agent.from_lane or agent.lane).length
            if s_new >= lane_len:
                s_new -= lane_len
            agent.speed = v_new
            agent.s = s_new
            if agent.changing:
                agent.change_ticks += 1
                total = LANE_CHANGE_DURATION * self.config.tick_rate
                progress = agent.change_ticks / total
                if _change_profile(progress) >= 0.5 and agent.lane is agent.from_lane:
                    agent.lane = agent.to_lane
                if agent.change_ticks >= total:
                    agent.lane = agent.to_lane
                    agent.from_lane = None
                    agent.to_lane = None
                    agent.change_ticks = 0
        self.tick += 1
        return self.snapshot()

    # -- snapshots --------------------------------------------------------

    def _agent_pose(self, agent: _Agent):
        dt = 1.0 / self.config.tick_rate
        if agent.changing:
            base = agent.from_lane
            total = LANE_CHANGE_DURATION * self.config.tick_rate
            progress = agent.change_ticks / total
            frac = _change_profile(progress)
            prev_frac = _change_profile((agent.change_ticks - 1) / total) if agent.change_ticks else 0.0
            offset = base.offset + (agent.to_lane.offset - base.offset) * frac
            lat_rate = (frac - prev_frac) * (agent.to_lane.offset - base.offset) / dt
        else:
            base = agent.lane
            offset = base.offset
            lat_rate = 0.0
        along = base.lo + agent.s if base.direction > 0 else base.hi - agent.s
        if base.axis == "h":
            x, y = along, offset
            vx = agent.speed * base.direction
            vy = lat_rate
        else:
            x, y = offset, along
            vy = agent.speed * base.direction
            vx = lat_rate
        return x, y, base.heading, vx, vy

    def snapshot(self) -> Frame:
        vehicles = []
        for agent in self.agents:
            x, y, heading, vx, vy = self._agent_pose(agent)
            box = Box.from_center(x, y, VEHICLE_LENGTH, VEHICLE_WIDTH, heading)
            vehicles.append(
                VehicleState(
                    id=agent.id, x=x, y=y, heading=heading, vx=vx, vy=vy,
                    speed=agent.speed, lane_id=agent.lane.lane_id,
                    c1x=box.x1, c1y=box.y1, c2x=box.x2, c2y=box.y2,
                )
            )
        lights = []
        for inter in self.town.intersections:
            for group in ("h", "v"):
                lights.append(
                    LightState(inter.index, group, self.group_color(inter.index, group))
                )
        obstacles = []
        for i, spec in self._active_obstacles():
            lane = self.town.lane(spec.lane_id)
            x, y = lane.point_at(spec.position_s)
            if spec.kind == "animal":
                box = Box.from_center(x, y, ANIMAL_LENGTH, ANIMAL_WIDTH, lane.heading)
            else:
                box = Box.from_center(x, y, VEHICLE_LENGTH, VEHICLE_WIDTH, lane.heading)
            obstacles.append(
                ObstacleState(
                    id=i, kind=spec.kind, lane_id=spec.lane_id, x=x, y=y,
                    c1x=box.x1, c1y=box.y1, c2x=box.x2, c2y=box.y2,
                )
            )
        return Frame(
            index=self.tick,
            time=self.tick / self.config.tick_rate,
            vehicles=tuple(vehicles),
            lights=tuple(lights),
            intersections=tuple(inter.box.corners() for inter in self.town.intersections),
            obstacles=tuple(obstacles),
            ego_id=0,
        )


def build_world(config: WorldConfig) -> World:
    return World(config)


def run_scenario(config: WorldConfig) -> Recording:
    """Simulate the configured duration; frame count = duration x tick rate."""
    world = build_world(config)
    total = round(config.duration_s * config.tick_rate)
    frames = [world.snapshot()]
    for _ in range(total - 1):
        frames.append(world.step())
    return Recording(config=config, frames=frames)


# ---------------------------------------------------------------------------
# Ground truth


def _next_box_ahead(frame: Frame, vehicle: VehicleState):
    """(intersection index, distance to entry edge) straight ahead, or None."""
    best = None
    best_d = math.inf
    cos_h = math.cos(vehicle.heading)
    sin_h = math.sin(vehicle.heading)
    for idx, corners in enumerate(frame.intersections):
        box = Box(*corners)
        if abs(cos_h) > 0.5:  # travelling along x
            if not (box.y1 - 1e-6 <= vehicle.y <= box.y2 + 1e-6):
                continue
            edge = box.x1 if cos_h > 0 else box.x2
            d = (edge - vehicle.x) * (1 if cos_h > 0 else -1)
        else:
            if not (box.x1 - 1e-6 <= vehicle.x <= box.x2 + 1e-6):
                continue
            edge = box.y1 if sin_h > 0 else box.y2
            d = (edge - vehicle.y) * (1 if sin_h > 0 else -1)
        if 0.0 <= d < best_d:
            best = idx
            best_d = d
    return best, best_d


def _light_color(frame: Frame, intersection: int, group: str) -> str:
    for light in frame.lights:
        if light.intersection == intersection and light.approach == group:
            return light.color
    raise KeyError(f"no light for intersection {intersection} group {group}")


def ground_truth_light_for(frame: Frame, vehicle_id: int,
                           approach_zone: float = APPROACH_ZONE,
                           chain_gap: float = QUEUE_CHAIN_GAP) -> bool:
    """True when the vehicle's approach faces a red or yellow signal.

    Queued vehicles inherit the state of the first vehicle in the lane, so
    the answer does not depend on where in the queue the vehicle sits.
    """
    vehicle = frame.vehicle(vehicle_id)
    cos_h = math.cos(vehicle.heading)
    sin_h = math.sin(vehicle.heading)

    head = vehicle
    while True:
        nxt = None
        nxt_d = math.inf
        for other in frame.vehicles:
            if other.id == head.id or other.lane_id != head.lane_id:
                continue
            d = (other.x - head.x) * cos_h + (other.y - head.y) * sin_h
            if 0.0 < d < nxt_d:
                nxt = other
                nxt_d = d
        if nxt is None or nxt_d - VEHICLE_LENGTH > chain_gap:
            break
        head = nxt

    group = "h" if abs(cos_h) > 0.5 else "v"
    inter, d = _next_box_ahead(frame, head)
    if inter is None or d > approach_zone:
        return False
    return _light_color(frame, inter, group) in (RED, YELLOW)


def approaching_signal(frame: Frame, vehicle_id: int,
                       zone: float = APPROACH_ZONE) -> Optional[tuple[str, float]]:
    """(color, distance to entry) of the signal governing the vehicle, or None."""
    vehicle = frame.vehicle(vehicle_id)
    inter, d = _next_box_ahead(frame, vehicle)
    if inter is None or d > zone:
        return None
    group = "h" if abs(math.cos(vehicle.heading)) > 0.5 else "v"
    return _light_color(frame, inter, group), d


def ground_truth_obstacle_ahead(frame: Frame, lookahead: float = OBSTACLE_LOOKAHEAD) -> Optional[int]:
    """Nearest obstacle in the ego's lane within the lookahead, or None."""
    ego = frame.ego
    cos_h = math.cos(ego.heading)
    sin_h = math.sin(ego.heading)
    best = None
    best_d = math.inf
    for obstacle in frame.obstacles:
        if obstacle.lane_id != ego.lane_id:
            continue
        d = (obstacle.x - ego.x) * cos_h + (obstacle.y - ego.y) * sin_h
        if 0.0 < d <= lookahead and d < best_d:
            best = obstacle.id
            best_d = d
    return best
