"""Recording and scenario file formats.

Recordings are JSON Lines: a header object carrying the format version and
the full world config, then one frame object per line.  Sensed recordings
("rec-obs-v1") add an ``obs`` field to each frame line; analysed recordings
("rec-full-v1") additionally carry the active collective-behavior clusters
under ``clusters``.  Scenario files are YAML trees of the world-config
fields, optionally with a perception block and acceptance assertions.

Everything is written with sorted keys so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import yaml

from .behavior import ActionChange, BehaviorCategory
from .edl import DirichletPrediction
from .geometry import Box
from .perception import BevSummary, EgoPose, Observation, PerceptionConfig
from .sim import (
    ConfigError,
    EgoConfig,
    Frame,
    LightState,
    LightTimings,
    MapConfig,
    ObstacleSpec,
    ObstacleState,
    PinnedVehicle,
    Recording,
    VehicleState,
    WorldConfig,
)

RECORDING_PLAIN = "rec-v1"
RECORDING_OBS = "rec-obs-v1"
RECORDING_FULL = "rec-full-v1"
_KNOWN_VERSIONS = (RECORDING_PLAIN, RECORDING_OBS, RECORDING_FULL)


class RecordingFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config <-> dict


def config_to_dict(config: WorldConfig) -> dict:
    out = {
        "seed": config.seed,
        "tick_rate": config.tick_rate,
        "duration_s": config.duration_s,
        "map": asdict(config.map),
        "npc_count": config.npc_count,
        "light_timings": asdict(config.light_timings),
        "obstacles": [
            {
                "kind": o.kind,
                "lane_id": o.lane_id,
                "position_s": o.position_s,
                "spawn_s": o.spawn_s,
                "despawn_s": None if math.isinf(o.despawn_s) else o.despawn_s,
            }
            for o in config.obstacles
        ],
        "weather_noise": config.weather_noise,
        "ego": asdict(config.ego),
        "pinned_npcs": [asdict(p) for p in config.pinned_npcs],
        "violation_rate": config.violation_rate,
    }
    return out


def config_from_dict(data: dict) -> WorldConfig:
    try:
        obstacles = [
            ObstacleSpec(
                kind=o["kind"],
                lane_id=o["lane_id"],
                position_s=float(o["position_s"]),
                spawn_s=float(o.get("spawn_s", 0.0)),
                despawn_s=math.inf if o.get("despawn_s") is None else float(o["despawn_s"]),
            )
            for o in data.get("obstacles", [])
        ]
        config = WorldConfig(
            seed=int(data.get("seed", 0)),
            tick_rate=int(data.get("tick_rate", 10)),
            duration_s=float(data.get("duration_s", 30.0)),
            map=MapConfig(**data.get("map", {})),
            npc_count=int(data.get("npc_count", 0)),
            light_timings=LightTimings(**data.get("light_timings", {})),
            obstacles=obstacles,
            weather_noise=float(data.get("weather_noise", 0.0)),
            ego=EgoConfig(**data.get("ego", {})),
            pinned_npcs=[PinnedVehicle(**p) for p in data.get("pinned_npcs", [])],
            violation_rate=float(data.get("violation_rate", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad scenario config: {err}") from err
    config.validate()
    return config


def perception_from_dict(data: dict) -> PerceptionConfig:
    try:
        cfg = PerceptionConfig(**{k: v for k, v in data.items()})
        if isinstance(cfg.ood_kinds, list):
            cfg.ood_kinds = tuple(cfg.ood_kinds)
        return cfg
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad perception config: {err}") from err


# ---------------------------------------------------------------------------
# Frame / observation <-> dict


def frame_to_dict(frame: Frame) -> dict:
    return {
        "index": frame.index,
        "time": frame.time,
        "ego_id": frame.ego_id,
        "vehicles": [asdict(v) for v in frame.vehicles],
        "lights": [asdict(l) for l in frame.lights],
        "intersections": [list(c) for c in frame.intersections],
        "obstacles": [asdict(o) for o in frame.obstacles],
    }


def frame_from_dict(data: dict) -> Frame:
    return Frame(
        index=data["index"],
        time=data["time"],
        vehicles=tuple(VehicleState(**v) for v in data["vehicles"]),
        lights=tuple(LightState(**l) for l in data["lights"]),
        intersections=tuple(tuple(c) for c in data["intersections"]),
        obstacles=tuple(ObstacleState(**o) for o in data["obstacles"]),
        ego_id=data["ego_id"],
    )


def observation_to_dict(obs: Observation) -> dict:
    return {
        "frame_index": obs.frame_index,
        "time": obs.time,
        "ego": asdict(obs.ego),
        "vehicles": [asdict(v) for v in obs.vehicles],
        "obstacles": [asdict(o) for o in obs.obstacles],
        "light_alpha": None if obs.light is None else obs.light.alpha.tolist(),
        "light_red": obs.light_red,
        "bev_summary": asdict(obs.bev_summary),
    }


def observation_from_dict(data: dict) -> Observation:
    alpha = data.get("light_alpha")
    return Observation(
        frame_index=data["frame_index"],
        time=data["time"],
        ego=EgoPose(**data["ego"]),
        vehicles=tuple(VehicleState(**v) for v in data["vehicles"]),
        obstacles=tuple(ObstacleState(**o) for o in data["obstacles"]),
        light=None if alpha is None else DirichletPrediction(alpha),
        light_red=data.get("light_red"),
        bev_summary=BevSummary(**data["bev_summary"]),
        bev=None,
    )


def action_change_to_dict(change: ActionChange) -> dict:
    return {
        "frame_start": change.frame_start,
        "frame_end": change.frame_end,
        "action": change.action.value,
        "ego_member": change.ego_member,
        "box": list(change.box.corners()),
        "heading": change.heading,
    }


def action_change_from_dict(data: dict) -> ActionChange:
    return ActionChange(
        frame_start=data["frame_start"],
        frame_end=data["frame_end"],
        action=BehaviorCategory(data["action"]),
        ego_member=data["ego_member"],
        box=Box(*data["box"]),
        heading=data.get("heading", 0.0),
    )


# ---------------------------------------------------------------------------
# Recording files


def recording_version(recording: Recording) -> str:
    if recording.clusters is not None:
        return RECORDING_FULL
    if recording.observations is not None:
        return RECORDING_OBS
    return RECORDING_PLAIN


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_recording(recording: Recording, path) -> str:
    version = recording_version(recording)
    lines = [
        _dumps(
            {
                "version": version,
                "config": config_to_dict(recording.config),
                "extras": recording.extras,
            }
        )
    ]
    for i, frame in enumerate(recording.frames):
        row = frame_to_dict(frame)
        if recording.observations is not None:
            row["obs"] = observation_to_dict(recording.observations[i])
        if recording.clusters is not None:
            row["clusters"] = [action_change_to_dict(c) for c in recording.clusters[i]]
        lines.append(_dumps(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return version


def load_recording(path) -> Recording:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise RecordingFormatError(f"{path}: empty recording")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise RecordingFormatError(f"{path}: bad header: {err}") from err
    version = header.get("version")
    if version not in _KNOWN_VERSIONS:
        raise RecordingFormatError(f"{path}: unsupported recording version {version!r}")
    config = config_from_dict(header.get("config", {}))
    frames = []
    observations = [] if version in (RECORDING_OBS, RECORDING_FULL) else None
    clusters = [] if version == RECORDING_FULL else None
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as err:
            raise RecordingFormatError(f"{path}:{lineno}: bad frame: {err}") from err
        frames.append(frame_from_dict(row))
        if observations is not None:
            if "obs" not in row:
                raise RecordingFormatError(f"{path}:{lineno}: missing obs field")
            observations.append(observation_from_dict(row["obs"]))
        if clusters is not None:
            clusters.append([action_change_from_dict(c) for c in row.get("clusters", [])])
    return Recording(
        config=config,
        frames=frames,
        observations=observations,
        clusters=clusters,
        extras=header.get("extras", {}),
    )


# ---------------------------------------------------------------------------
# Scenario files


def load_scenario(path) -> tuple[WorldConfig, dict]:
    """Parse a scenario YAML file into a world config plus manifest extras.

    Extras hold anything beyond the world itself: a ``perception`` block and
    ``assertions`` checked after evaluation.
    """
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario file must be a mapping")
    extras = {}
    for key in ("perception", "assertions", "name"):
        if key in data:
            extras[key] = data.pop(key)
    config = config_from_dict(data)
    return config, extras


def save_scenario(config: WorldConfig, path, extras: dict | None = None) -> None:
    data = config_to_dict(config)
    if extras:
        data.update(extras)
    Path(path).write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")
