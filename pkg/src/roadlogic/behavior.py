"""Per-vehicle behavior labeling and collective-behavior clustering.

Trajectories are labeled by pattern matching: inside an intersection box a
vehicle is turning (by accumulated heading change) or going straight;
outside, a sustained lateral shift across a lane boundary is a lane change
and everything else is lane following.  Within a sliding time window,
same-category events whose start locations are density-connected form a
collective-behavior cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .geometry import Box, angle_diff

TURN_THRESHOLD_RAD = math.radians(60.0)
LATERAL_ONSET_SPEED = 0.2  # m/s, marks the start/end of a lane-change maneuver
LANE_SHIFT_FRACTION = 0.8  # of lane width, minimum displacement for a lane change


class BehaviorCategory(str, Enum):
    CHANGE_LANE_LEFT = "change_lane_left"
    CHANGE_LANE_RIGHT = "change_lane_right"
    STRAIGHT = "straight"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    LANE_FOLLOW = "lane_follow"


INTERSECTION_ONLY = {
    BehaviorCategory.STRAIGHT,
    BehaviorCategory.TURN_LEFT,
    BehaviorCategory.TURN_RIGHT,
}


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    time: float
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    lane_id: str


@dataclass(frozen=True)
class BehaviorEvent:
    vehicle_id: int
    category: BehaviorCategory
    start_frame: int
    end_frame: int
    start_time: float
    end_time: float
    start_x: float
    start_y: float
    start_heading: float = 0.0


@dataclass
class ClusteringConfig:
    window_s: float = 20.0
    eps: float = 2.7
    min_size: int = 2

    def __post_init__(self):
        if self.window_s <= 0 or self.eps <= 0 or self.min_size < 1:
            raise ValueError("window and eps must be positive, min_size >= 1")


@dataclass
class BehaviorCluster:
    category: BehaviorCategory
    members: tuple  # distinct vehicle ids, sorted
    frame_start: int
    frame_end: int
    box: Box  # bounding box of member start locations
    heading: float  # mean start heading of the members
    ego_member: bool
    events: list = field(default_factory=list)


@dataclass(frozen=True)
class ActionChange:
    """A group of vehicles switching to a new action inside a frame window."""

    frame_start: int
    frame_end: int
    action: BehaviorCategory
    ego_member: bool
    box: Box
    heading: float = 0.0


def _lateral_velocity(point: TrackPoint) -> float:
    """Velocity component to the left of the heading."""
    return -point.vx * math.sin(point.heading) + point.vy * math.cos(point.heading)


def _lateral_offset(p0: TrackPoint, p1: TrackPoint) -> float:
    """Leftward displacement from p0 to p1 in p0's heading frame."""
    dx = p1.x - p0.x
    dy = p1.y - p0.y
    return -dx * math.sin(p0.heading) + dy * math.cos(p0.heading)


def label_behavior(vehicle_id: int, track: list[TrackPoint], intersections: list[Box],
                   lane_width: float) -> list[BehaviorEvent]:
    """Label a trajectory into maximal contiguous behavior events.

    The events partition the track frames: every frame belongs to exactly
    one event.
    """
    if len(track) < 2:
        raise ValueError("track must contain at least 2 frames")

    n = len(track)
    categories: list[BehaviorCategory | None] = [None] * n
    inside = [any(box.contains(p.x, p.y) for box in intersections) for p in track]

    # intersection traversals: classify by accumulated heading change
    i = 0
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        total_turn = 0.0
        for k in range(i, j):
            total_turn += angle_diff(track[k + 1].heading, track[k].heading)
        if total_turn >= TURN_THRESHOLD_RAD:
            category = BehaviorCategory.TURN_LEFT
        elif total_turn <= -TURN_THRESHOLD_RAD:
            category = BehaviorCategory.TURN_RIGHT
        else:
            category = BehaviorCategory.STRAIGHT
        for k in range(i, j + 1):
            categories[k] = category
        i = j + 1

    # lane changes: expand around lane-id switches while lateral motion persists
    for i in range(1, n):
        if inside[i] or inside[i - 1]:
            continue
        if track[i].lane_id == track[i - 1].lane_id:
            continue
        onset = i
        while onset - 1 >= 0 and not inside[onset - 1] and abs(_lateral_velocity(track[onset - 1])) > LATERAL_ONSET_SPEED:
            onset -= 1
        end = i
        while end + 1 < n and not inside[end + 1] and abs(_lateral_velocity(track[end + 1])) > LATERAL_ONSET_SPEED:
            end += 1
        shift = _lateral_offset(track[onset], track[end])
        if abs(shift) < LANE_SHIFT_FRACTION * lane_width:
            continue
        category = BehaviorCategory.CHANGE_LANE_LEFT if shift > 0 else BehaviorCategory.CHANGE_LANE_RIGHT
        for k in range(onset, end + 1):
            if categories[k] is None:
                categories[k] = category

    for i in range(n):
        if categories[i] is None:
            categories[i] = BehaviorCategory.LANE_FOLLOW

    # run-length encode into maximal events
    events: list[BehaviorEvent] = []
    start = 0
    for i in range(1, n + 1):
        if i < n and categories[i] == categories[start]:
            continue
        first = track[start]
        last = track[i - 1]
        events.append(
            BehaviorEvent(
                vehicle_id=vehicle_id,
                category=categories[start],
                start_frame=first.frame,
                end_frame=last.frame,
                start_time=first.time,
                end_time=last.time,
                start_x=first.x,
                start_y=first.y,
                start_heading=first.heading,
            )
        )
        start = i
    return events


def dbscan(points: list[tuple[float, float]], eps: float, min_size: int) -> list[int]:
    """Density-based clustering; returns a cluster id per point, -1 for noise.

    Neighborhoods count the point itself.  Border points join the cluster of
    their smallest-index core neighbor, which keeps the assignment canonical.
    """
    if eps <= 0 or min_size < 1:
        raise ValueError("eps must be positive, min_size >= 1")
    n = len(points)
    eps2 = eps * eps
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        xi, yi = points[i]
        for j in range(i, n):
            dx = points[j][0] - xi
            dy = points[j][1] - yi
            if dx * dx + dy * dy <= eps2:
                neighbors[i].append(j)
                if j != i:
                    neighbors[j].append(i)

    core = [len(neighbors[i]) >= min_size for i in range(n)]
    labels = [-1] * n
    cluster_id = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = cluster_id
        queue = [i]
        while queue:
            current = queue.pop(0)
            for nb in neighbors[current]:
                if core[nb] and labels[nb] == -1:
                    labels[nb] = cluster_id
                    queue.append(nb)
        cluster_id += 1
    # borders: non-core points adjacent to a core, claimed by the
    # smallest-index core neighbor
    for i in range(n):
        if core[i] or labels[i] != -1:
            continue
        core_neighbors = sorted(nb for nb in neighbors[i] if core[nb])
        if core_neighbors:
            labels[i] = labels[core_neighbors[0]]
    return labels


def cluster_behaviors(events: list[BehaviorEvent], now: float, config: ClusteringConfig,
                      ego_id: int = 0) -> list[BehaviorCluster]:
    """Cluster same-category events starting within [now - window, now]."""
    window_start = now - config.window_s
    recent = [e for e in events if window_start <= e.start_time <= now]
    clusters: list[BehaviorCluster] = []
    seen: set = set()
    for category in BehaviorCategory:
        group = [e for e in recent if e.category == category]
        if not group:
            continue
        labels = dbscan([(e.start_x, e.start_y) for e in group], config.eps, config.min_size)
        by_label: dict[int, list[BehaviorEvent]] = {}
        for e, lab in zip(group, labels):
            if lab >= 0:
                by_label.setdefault(lab, []).append(e)
        for lab in sorted(by_label):
            members = by_label[lab]
            vehicle_ids = tuple(sorted({e.vehicle_id for e in members}))
            if len(vehicle_ids) < config.min_size:
                continue  # a lone vehicle repeating itself is not collective
            key = (category, vehicle_ids)
            if key in seen:
                continue
            seen.add(key)
            xs = [e.start_x for e in members]
            ys = [e.start_y for e in members]
            heading = math.atan2(
                sum(math.sin(e.start_heading) for e in members),
                sum(math.cos(e.start_heading) for e in members),
            )
            clusters.append(
                BehaviorCluster(
                    category=category,
                    members=vehicle_ids,
                    frame_start=min(e.start_frame for e in members),
                    frame_end=max(e.end_frame for e in members),
                    box=Box(min(xs), min(ys), max(xs), max(ys)),
                    heading=heading,
                    ego_member=ego_id in vehicle_ids,
                    events=members,
                )
            )
    return clusters


def detect_action_changes(clusters: list[BehaviorCluster],
                          history: dict[int, list[BehaviorEvent]]) -> list[ActionChange]:
    """Emit a change tuple for clusters whose members switched action.

    A member's prior action is the event preceding its cluster event in that
    vehicle's history (lane following when the cluster event opens the
    track).  The cluster counts as a change when the majority prior differs
    from the cluster category; lane following itself is the default state
    and never a change.
    """
    changes: list[ActionChange] = []
    for cluster in clusters:
        if cluster.category == BehaviorCategory.LANE_FOLLOW:
            continue
        priors: list[BehaviorCategory] = []
        for event in cluster.events:
            prior = BehaviorCategory.LANE_FOLLOW
            for candidate in history.get(event.vehicle_id, []):
                if candidate.end_frame < event.start_frame:
                    prior = candidate.category
                else:
                    break
            priors.append(prior)
        counts: dict[BehaviorCategory, int] = {}
        for p in priors:
            counts[p] = counts.get(p, 0) + 1
        dominant = max(counts, key=lambda c: (counts[c], c.value))
        if dominant == cluster.category:
            continue
        changes.append(
            ActionChange(
                frame_start=cluster.frame_start,
                frame_end=cluster.frame_end,
                action=cluster.category,
                ego_member=cluster.ego_member,
                box=cluster.box,
                heading=cluster.heading,
            )
        )
    return changes
