"""Hand-built frame constructors shared across test modules."""

import math

from roadlogic.sim import Frame, LightState, ObstacleState, VehicleState


def make_vehicle(vid, x, y, heading=0.0, speed=0.0, lane_id="h0_e_0"):
    vx = speed * math.cos(heading)
    vy = speed * math.sin(heading)
    if abs(math.cos(heading)) >= abs(math.sin(heading)):
        hx, hy = 2.3, 0.9
    else:
        hx, hy = 0.9, 2.3
    return VehicleState(
        id=vid, x=x, y=y, heading=heading, vx=vx, vy=vy, speed=speed,
        lane_id=lane_id, c1x=x - hx, c1y=y - hy, c2x=x + hx, c2y=y + hy,
    )


def make_obstacle(oid, x, y, lane_id, kind="stopped_vehicle"):
    if kind == "animal":
        hx, hy = 0.6, 0.4
    else:
        hx, hy = 2.3, 0.9
    return ObstacleState(
        id=oid, kind=kind, lane_id=lane_id, x=x, y=y,
        c1x=x - hx, c1y=y - hy, c2x=x + hx, c2y=y + hy,
    )


def make_frame(vehicles, lights=(), intersections=(), obstacles=(), ego_id=0,
               index=0, time=0.0):
    return Frame(
        index=index, time=time, vehicles=tuple(vehicles), lights=tuple(lights),
        intersections=tuple(intersections), obstacles=tuple(obstacles), ego_id=ego_id,
    )


def red_light_pair(intersection=0, main="red"):
    cross = "green" if main == "red" else "red"
    return (LightState(intersection, "h", main), LightState(intersection, "v", cross))
