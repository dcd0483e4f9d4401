"""Bridge between perception and the rule layer.

Turns one frame's observation plus the active collective-behavior clusters
into a flat fact base, ships the two rulebases, and exposes the per-frame
logic verdicts together with the applicability predicate that decides when
those verdicts are meaningful at all.

All geometry (distances, heading comparisons, containment) is computed here
and injected as facts; the rule language itself only compares numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .behavior import ActionChange, BehaviorCategory
from .geometry import Box, wrap_angle
from .perception import Observation
from .rulelang import (
    Atom,
    DerivationTree,
    StratifiedProgram,
    evaluate,
    explain,
    parse_rules,
    stratify,
)
from .sim import Town

LIGHT_RULEBASE = "traffic_light.rules"
OBSTACLE_RULEBASE = "obstacle.rules"


@dataclass
class BridgeConfig:
    intersection_radius: float = 30.0  # "nearby" for applicability and rules
    cluster_intersection_radius: float = 20.0  # junction explains a lane change
    cluster_nearby_radius: float = 50.0  # cluster relevant to the ego
    junction_motion_margin: float = 15.0  # cluster path counts as through-junction
    heading_tolerance_deg: float = 30.0
    grace_period_s: float = 2.0
    stopped_speed: float = 0.1
    queue_release_speed: float = 0.5


@dataclass
class FactBase:
    frame_index: int
    facts: list
    nearby_intersections: list
    active_clusters: list
    active_lane_change_clusters: list
    since_green_s: Optional[float]


@dataclass
class LightVerdict:
    frame: int
    decision: str  # "red" or "green"
    applicable: bool
    derivation: Optional[DerivationTree]


@dataclass
class ObstacleVerdict:
    frame: int
    decision: str  # "obstacle" or "clear"
    applicable: bool
    derivation: Optional[DerivationTree]
    inferred_box: Optional[Box] = None


def load_rulebase(name: str) -> StratifiedProgram:
    """Load and stratify a shipped .rules file by name, or any file by path."""
    from pathlib import Path

    path = Path(name)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        text = resources.files("roadlogic.rules").joinpath(name).read_text(encoding="utf-8")
    return stratify(parse_rules(text))


def _point_box_distance(x: float, y: float, box: Box) -> float:
    dx = max(box.x1 - x, 0.0, x - box.x2)
    dy = max(box.y1 - y, 0.0, y - box.y2)
    return math.hypot(dx, dy)


def _box_box_distance(a: Box, b: Box) -> float:
    dx = max(a.x1 - b.x2, 0.0, b.x1 - a.x2)
    dy = max(a.y1 - b.y2, 0.0, b.y1 - a.y2)
    return math.hypot(dx, dy)


def _axis_angle_deg(a: float, b: float) -> float:
    """Unsigned heading difference folded into [0, 180]."""
    return abs(math.degrees(wrap_angle(a - b)))


def facts_from_frame(observation: Observation, clusters: list, frame_index: int,
                     town: Town, config: BridgeConfig | None = None,
                     vehicle_actions: dict | None = None,
                     since_green_s: float | None = None) -> FactBase:
    """Flatten one observed frame plus its clusters into ground facts."""
    config = config or BridgeConfig()
    vehicle_actions = vehicle_actions or {}
    ego = observation.ego
    f = frame_index
    facts: list[Atom] = [("frame", (f,))]
    facts.append(("driver_location", (f, ego.x, ego.y)))
    facts.append(("driver_rotation", (f, math.degrees(ego.heading))))

    cos_h = math.cos(ego.heading)
    sin_h = math.sin(ego.heading)

    for vehicle in observation.vehicles:
        action = vehicle_actions.get(vehicle.id, BehaviorCategory.LANE_FOLLOW)
        facts.append(
            (
                "property",
                (
                    "vehicle", f, vehicle.id, action.value, vehicle.vx, vehicle.vy,
                    math.degrees(vehicle.heading), vehicle.c1x, vehicle.c1y,
                    vehicle.c2x, vehicle.c2y,
                ),
            )
        )

    nearby: list[int] = []
    boxes: dict[int, Box] = {}
    for inter in town.intersections:
        boxes[inter.index] = inter.box
        facts.append(
            ("property", ("intersection", f, inter.index, *inter.box.corners()))
        )
        if _point_box_distance(ego.x, ego.y, inter.box) <= config.intersection_radius:
            nearby.append(inter.index)
            facts.append(("nearby_intersection", (f, inter.index)))

    # approach line of the nearest junction straight ahead
    approach_distance = None
    for idx in nearby:
        box = boxes[idx]
        if abs(cos_h) > 0.5:
            if not (box.y1 <= ego.y <= box.y2):
                continue
            edge = box.x1 if cos_h > 0 else box.x2
            d = (edge - ego.x) * (1 if cos_h > 0 else -1)
        else:
            if not (box.x1 <= ego.x <= box.x2):
                continue
            edge = box.y1 if sin_h > 0 else box.y2
            d = (edge - ego.y) * (1 if sin_h > 0 else -1)
        if d >= 0.0 and (approach_distance is None or d < approach_distance):
            approach_distance = d
    if approach_distance is not None:
        facts.append(("approach_distance", (f, approach_distance)))

    # heading-aligned vehicles ahead in the ego's lane
    ahead: list[tuple[float, float]] = []  # (distance, speed)
    for vehicle in observation.vehicles:
        if vehicle.lane_id != ego.lane_id:
            continue
        if _axis_angle_deg(vehicle.heading, ego.heading) > 15.0:
            continue
        longitudinal = (vehicle.x - ego.x) * cos_h + (vehicle.y - ego.y) * sin_h
        if longitudinal <= 0.0:
            continue
        facts.append(("vehicle_ahead", (f, vehicle.id, longitudinal, vehicle.speed)))
        ahead.append((longitudinal, vehicle.speed))
    if approach_distance is not None and ahead:
        before_line = [(d, v) for d, v in ahead if d < approach_distance]
        if before_line:
            head_speed = max(before_line)[1]
            if head_speed > config.queue_release_speed:
                facts.append(("queue_discharging", (f,)))

    for obstacle in observation.obstacles:
        facts.append(
            (
                "obstacle_detected",
                (f, obstacle.id, obstacle.kind, obstacle.c1x, obstacle.c1y,
                 obstacle.c2x, obstacle.c2y),
            )
        )

    if observation.light_red:
        facts.append(("light_detected", (f,)))

    active: list[ActionChange] = []
    active_lane_change: list[ActionChange] = []
    ego_in_active = False
    for cluster in clusters:
        facts.append(
            (
                "change_action_cluster",
                (
                    cluster.frame_start, cluster.frame_end, cluster.action.value,
                    "ego" if cluster.ego_member else "npc", *cluster.box.corners(),
                ),
            )
        )
        key = (cluster.frame_start, cluster.frame_end, cluster.action.value)
        near_junction = any(
            _box_box_distance(cluster.box, box) <= config.cluster_intersection_radius
            for box in boxes.values()
        )
        if near_junction:
            facts.append(("cluster_near_intersection", key))
        explained = False
        for obstacle in observation.obstacles:
            ox, oy = obstacle.box.center
            if cluster.box.contains(ox, oy):
                explained = True
        for vehicle in observation.vehicles:
            if vehicle.id == 0:
                continue
            if vehicle.speed < config.stopped_speed and cluster.box.contains(vehicle.x, vehicle.y):
                explained = True
        if explained:
            facts.append(("abnormal_obstacle", key))

        cx, cy = cluster.box.center
        is_active = cluster.frame_start <= f <= cluster.frame_end
        is_nearby = math.hypot(cx - ego.x, cy - ego.y) <= config.cluster_nearby_radius
        if is_active and is_nearby:
            active.append(cluster)
            if cluster.ego_member:
                ego_in_active = True
            if cluster.action in (
                BehaviorCategory.CHANGE_LANE_LEFT,
                BehaviorCategory.CHANGE_LANE_RIGHT,
            ):
                active_lane_change.append(cluster)
            angle = _axis_angle_deg(cluster.heading, ego.heading)
            through_junction = any(
                _point_box_distance(cx, cy, boxes[idx].inflate(config.junction_motion_margin)) == 0.0
                for idx in nearby
            )
            if through_junction:
                tol = config.heading_tolerance_deg
                if angle <= tol or angle >= 180.0 - tol:
                    facts.append(("co_motion", key))
                elif 90.0 - tol <= angle <= 90.0 + tol:
                    facts.append(("cross_motion", key))
    if ego_in_active:
        facts.append(("ego_collective", (f,)))

    if since_green_s is not None and math.isfinite(since_green_s):
        facts.append(("since_green", (f, since_green_s)))

    return FactBase(
        frame_index=f,
        facts=facts,
        nearby_intersections=nearby,
        active_clusters=active,
        active_lane_change_clusters=active_lane_change,
        since_green_s=since_green_s,
    )


def logic_applicable(fact_base: FactBase, config: BridgeConfig | None = None,
                     task: str = "light") -> bool:
    """Does the commonsense layer have anything to say about this frame?

    Signals need a nearby junction, at least one active collective behavior
    and clearance of the grace period after a light turns green; obstacle
    reasoning needs an active collective lane change.
    """
    config = config or BridgeConfig()
    if task == "obstacle":
        return bool(fact_base.active_lane_change_clusters)
    if not fact_base.nearby_intersections:
        return False
    if not fact_base.active_clusters:
        return False
    since = fact_base.since_green_s
    if since is not None and since < config.grace_period_s:
        return False
    return True


def logic_light_verdict(fact_base: FactBase, rulebase: StratifiedProgram,
                        config: BridgeConfig | None = None) -> LightVerdict:
    config = config or BridgeConfig()
    model = evaluate(rulebase, fact_base.facts)
    f = fact_base.frame_index
    applicable = logic_applicable(fact_base, config, task="light")
    red_atom = ("red_traffic_light", (f,))
    green_atom = ("green_traffic_light", (f,))
    if red_atom in model:
        return LightVerdict(f, "red", applicable, explain(model, red_atom))
    derivation = explain(model, green_atom) if green_atom in model else None
    return LightVerdict(f, "green", applicable, derivation)


def logic_obstacle_verdict(fact_base: FactBase, rulebase: StratifiedProgram,
                           config: BridgeConfig | None = None) -> ObstacleVerdict:
    config = config or BridgeConfig()
    model = evaluate(rulebase, fact_base.facts)
    f = fact_base.frame_index
    applicable = logic_applicable(fact_base, config, task="obstacle")
    atom = ("collective_obstacle_detection", (f,))
    if atom not in model:
        default = ("no_obstacle_inferred", (f,))
        derivation = explain(model, default) if default in model else None
        return ObstacleVerdict(f, "clear", applicable, derivation)
    derivation = explain(model, atom)
    box = None
    for leaf in derivation.leaves():
        if leaf[0] == "change_action_cluster":
            box = Box(*leaf[1][4:8])
            break
    return ObstacleVerdict(f, "obstacle", applicable, derivation, inferred_box=box)
