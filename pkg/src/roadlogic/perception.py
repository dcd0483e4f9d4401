"""Synthetic perception layer over ground-truth frames.

Produces the noisy view the reasoning layer has to work with: object
detections subject to range and line-of-sight occlusion (misses only, never
hallucinations), an evidential traffic-light classification over synthetic
front-view features, and an ego-centered bird's-eye grid whose cells carry
Dirichlet evidence.  Object kinds absent from training (animals) never
appear in detections; their grid cells keep near-zero evidence and
therefore high epistemic uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .edl import DirichletPrediction, EvidentialModel
from .geometry import Box, segment_intersects_box
from .sim import (
    APPROACH_ZONE,
    OBSTACLE_LOOKAHEAD,
    RED,
    YELLOW,
    Frame,
    Recording,
    Town,
    approaching_signal,
)

BEV_CLASSES = ("vehicle", "drivable", "lane_marking", "other")
LIGHT_CLASSES = ("clear", "red_impacting")  # positive class index 1
FEATURE_NAMES = ("red_signal", "yellow_signal", "green_signal", "proximity")

_PERCEPTION_STREAM = 7  # seed-domain separator for per-frame generators


@dataclass
class PerceptionConfig:
    detection_range: float = 60.0
    false_negative_rate: float = 0.0
    weather_noise: float = 0.0
    ood_kinds: tuple = ("animal",)
    bev_cell_size: float = 1.0
    bev_extent: float = 100.0
    feature_noise_scale: float = 0.25
    evidence_scale: float = 10.0  # in-distribution evidence ~ scale / weather_noise
    evidence_cap: float = 200.0
    ood_evidence: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.false_negative_rate <= 1.0:
            raise ValueError("false_negative_rate must lie in [0, 1]")
        if self.bev_cell_size <= 0 or self.bev_extent <= 0:
            raise ValueError("bev dimensions must be positive")
        if self.weather_noise < 0:
            raise ValueError("weather_noise must be >= 0")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite feature values")
        object.__setattr__(self, "values", values)


@dataclass
class BevGrid:
    alphas: np.ndarray  # (n, n, C) Dirichlet concentrations per cell
    cell_size: float
    extent: float
    ego_x: float
    ego_y: float
    ego_heading: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.alphas.shape[:2]

    def u_epis(self) -> np.ndarray:
        return self.alphas.shape[2] / self.alphas.sum(axis=2)

    def class_index(self) -> np.ndarray:
        return self.alphas.argmax(axis=2)

    def world_points(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates of every cell center."""
        n = self.shape[0]
        axis = -self.extent / 2.0 + (np.arange(n) + 0.5) * self.cell_size
        u, v = np.meshgrid(axis, axis, indexing="ij")  # forward, left
        c = math.cos(self.ego_heading)
        s = math.sin(self.ego_heading)
        x = self.ego_x + u * c - v * s
        y = self.ego_y + u * s + v * c
        return x, y


@dataclass(frozen=True)
class BevSummary:
    max_epis_ahead: float
    ood_cell_count: int
    mean_epis: float


@dataclass(frozen=True)
class EgoPose:
    x: float
    y: float
    heading: float
    speed: float
    lane_id: str


@dataclass
class Observation:
    frame_index: int
    time: float
    ego: EgoPose
    vehicles: tuple  # detected VehicleState entries, a subset of the frame's
    obstacles: tuple  # detected ObstacleState entries
    light: Optional[DirichletPrediction]
    light_red: Optional[bool]
    bev_summary: BevSummary
    bev: Optional[BevGrid] = field(default=None, repr=False)


def frame_rng(world_seed: int, frame_index: int) -> np.random.Generator:
    """Per-frame generator so observations are pure in (frame, seed)."""
    return np.random.default_rng(
        np.random.SeedSequence((world_seed, _PERCEPTION_STREAM, frame_index))
    )


def extract_light_features(frame: Frame, config: PerceptionConfig,
                           rng: np.random.Generator) -> FeatureVector:
    """Injective encoding of the governing signal state plus Gaussian noise."""
    values = np.zeros(len(FEATURE_NAMES))
    signal = approaching_signal(frame, frame.ego_id, APPROACH_ZONE)
    if signal is not None:
        color, distance = signal
        channel = {"red": 0, "yellow": 1, "green": 2}[color]
        values[channel] = 1.0
        values[3] = 1.0 - distance / APPROACH_ZONE
    sigma = config.feature_noise_scale * config.weather_noise
    if sigma > 0:
        values = values + rng.normal(0.0, sigma, size=values.shape)
    return FeatureVector(values)


def light_ground_truth(frame: Frame) -> bool:
    signal = approaching_signal(frame, frame.ego_id, APPROACH_ZONE)
    return signal is not None and signal[0] in (RED, YELLOW)


def occlusion_check(frame: Frame, observer_id: int, target_box: Box) -> bool:
    """Visible iff the observer-to-target segment clears every other vehicle."""
    observer = frame.vehicle(observer_id)
    origin = (observer.x, observer.y)
    target = target_box.center
    for vehicle in frame.vehicles:
        if vehicle.id == observer_id:
            continue
        box = vehicle.box
        if abs(box.center[0] - target[0]) < 1e-9 and abs(box.center[1] - target[1]) < 1e-9:
            continue  # the target itself
        if segment_intersects_box(origin, target, box):
            return False
    return True


def _effective_evidence(config: PerceptionConfig, rng: np.random.Generator, shape) -> np.ndarray:
    if config.weather_noise <= 0:
        base = config.evidence_cap
    else:
        base = min(config.evidence_cap, config.evidence_scale / config.weather_noise)
    return base * rng.uniform(0.9, 1.1, size=shape)


def bev_rasterize(frame: Frame, config: PerceptionConfig, rng: np.random.Generator,
                  town: Town) -> BevGrid:
    """Ego-centered, heading-aligned grid of per-cell Dirichlet evidence.

    Cells take the dominant ground-truth class with evidence shrinking as
    weather noise grows; cells covered by out-of-distribution objects keep
    only a whisper of uniform evidence.
    """
    ego = frame.ego
    n = round(config.bev_extent / config.bev_cell_size)
    grid = BevGrid(
        alphas=np.ones((n, n, len(BEV_CLASSES))),
        cell_size=config.bev_cell_size,
        extent=config.bev_extent,
        ego_x=ego.x,
        ego_y=ego.y,
        ego_heading=ego.heading,
    )
    x, y = grid.world_points()

    on_road = np.zeros(x.shape, dtype=bool)
    near_marking = np.zeros(x.shape, dtype=bool)
    w = town.map.lane_width
    half_road = town.road_half_width
    length = (town.map.blocks + 1) * town.map.block_length
    main = (np.abs(y) <= half_road) & (x >= 0.0) & (x <= length)
    on_road |= main
    boundary = np.abs(np.abs(y) % w - 0.0)
    near_main_marking = main & (np.minimum(boundary, w - boundary) <= 0.15)
    near_marking |= near_main_marking
    for k in range(1, town.map.blocks + 1):
        x0 = k * town.map.block_length
        half_span = town.map.cross_span / 2.0
        cross = (np.abs(x - x0) <= half_road) & (np.abs(y) <= half_span)
        on_road |= cross
        rel = np.abs(np.abs(x - x0) % w)
        near_marking |= cross & (np.minimum(rel, w - rel) <= 0.15)

    class_idx = np.full(x.shape, BEV_CLASSES.index("other"))
    class_idx[on_road] = BEV_CLASSES.index("drivable")
    class_idx[near_marking & on_road] = BEV_CLASSES.index("lane_marking")

    # a cell belongs to a box when the box overlaps the cell square, i.e. the
    # cell center falls inside the half-cell-inflated box
    pad = config.bev_cell_size / 2.0
    vehicle_like = [v.box for v in frame.vehicles]
    vehicle_like += [o.box for o in frame.obstacles if o.kind not in config.ood_kinds]
    for raw_box in vehicle_like:
        box = raw_box.inflate(pad)
        mask = (x >= box.x1) & (x <= box.x2) & (y >= box.y1) & (y <= box.y2)
        class_idx[mask] = BEV_CLASSES.index("vehicle")

    evidence = _effective_evidence(config, rng, x.shape)
    one_hot = np.eye(len(BEV_CLASSES))[class_idx]
    grid.alphas = 1.0 + one_hot * evidence[..., None]

    ood_mask = np.zeros(x.shape, dtype=bool)
    for obstacle in frame.obstacles:
        if obstacle.kind not in config.ood_kinds:
            continue
        box = obstacle.box.inflate(pad)
        ood_mask |= (x >= box.x1) & (x <= box.x2) & (y >= box.y1) & (y <= box.y2)
    grid.alphas[ood_mask] = 1.0 + config.ood_evidence / len(BEV_CLASSES)
    return grid


def epis_ahead(grid: BevGrid, frame: Frame, town: Town,
               lookahead: float = OBSTACLE_LOOKAHEAD) -> float:
    """Peak epistemic uncertainty over the ego's own lane, ahead of it."""
    ego = frame.ego
    lane = town.lanes.get(ego.lane_id)
    if lane is None:
        return 0.0
    x, y = grid.world_points()
    cross = y if lane.axis == "h" else x
    along = x if lane.axis == "h" else y
    forward = (along - (ego.x if lane.axis == "h" else ego.y)) * lane.direction
    mask = (
        (np.abs(cross - lane.offset) <= town.map.lane_width / 2.0)
        & (forward > 0.0)
        & (forward <= lookahead)
    )
    if not mask.any():
        return 0.0
    return float(grid.u_epis()[mask].max())


def summarize_bev(grid: BevGrid, frame: Frame, town: Town) -> BevSummary:
    epis = grid.u_epis()
    return BevSummary(
        max_epis_ahead=epis_ahead(grid, frame, town),
        ood_cell_count=int((epis > 0.8).sum()),
        mean_epis=float(epis.mean()),
    )


def sense_frame(frame: Frame, config: PerceptionConfig, model: Optional[EvidentialModel],
                rng: np.random.Generator, town: Town, with_bev: bool = True) -> Observation:
    """One frame through the perception stack: detections, light, grid."""
    ego = frame.ego
    detected_vehicles = []
    for vehicle in frame.vehicles:
        if vehicle.id == ego.id:
            detected_vehicles.append(vehicle)
            continue
        if math.hypot(vehicle.x - ego.x, vehicle.y - ego.y) > config.detection_range:
            continue
        if occlusion_check(frame, ego.id, vehicle.box):
            detected_vehicles.append(vehicle)

    detected_obstacles = []
    for obstacle in frame.obstacles:
        if obstacle.kind in config.ood_kinds:
            continue
        if math.hypot(obstacle.x - ego.x, obstacle.y - ego.y) > config.detection_range:
            continue
        if occlusion_check(frame, ego.id, obstacle.box):
            detected_obstacles.append(obstacle)

    features = extract_light_features(frame, config, rng)
    light = None
    light_red = None
    if model is not None:
        light = model.predict(features.values)
        if config.false_negative_rate > 0 and light.label == 1:
            if rng.random() < config.false_negative_rate:
                light = DirichletPrediction(light.alpha[::-1].copy())
        light_red = light.label == 1

    bev = None
    if with_bev:
        bev = bev_rasterize(frame, config, rng, town)
        summary = summarize_bev(bev, frame, town)
    else:
        summary = BevSummary(0.0, 0, 0.0)

    return Observation(
        frame_index=frame.index,
        time=frame.time,
        ego=EgoPose(ego.x, ego.y, ego.heading, ego.speed, ego.lane_id),
        vehicles=tuple(detected_vehicles),
        obstacles=tuple(detected_obstacles),
        light=light,
        light_red=light_red,
        bev_summary=summary,
        bev=bev,
    )


def perceive_recording(recording: Recording, config: PerceptionConfig,
                       model: Optional[EvidentialModel], with_bev: bool = True,
                       keep_grids: bool = False) -> list[Observation]:
    """Observations for every frame; deterministic in the recording seed."""
    town = Town(recording.config.map)
    out = []
    for frame in recording.frames:
        rng = frame_rng(recording.config.seed, frame.index)
        obs = sense_frame(frame, config, model, rng, town, with_bev=with_bev)
        if not keep_grids:
            obs.bev = None
        out.append(obs)
    return out


def collect_light_training(recording: Recording, config: PerceptionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame light features and one-hot ground-truth labels."""
    features = []
    labels = []
    for frame in recording.frames:
        rng = frame_rng(recording.config.seed, frame.index)
        features.append(extract_light_features(frame, config, rng).values)
        red = light_ground_truth(frame)
        labels.append([0.0, 1.0] if red else [1.0, 0.0])
    return np.array(features), np.array(labels)


def baseline_obstacle_label(observation: Observation,
                            lookahead: float = OBSTACLE_LOOKAHEAD) -> bool:
    """Does any detected obstacle sit ahead in the ego's lane within range?"""
    ego = observation.ego
    cos_h = math.cos(ego.heading)
    sin_h = math.sin(ego.heading)
    for obstacle in observation.obstacles:
        if obstacle.lane_id != ego.lane_id:
            continue
        d = (obstacle.x - ego.x) * cos_h + (obstacle.y - ego.y) * sin_h
        if 0.0 < d <= lookahead:
            return True
    return False
