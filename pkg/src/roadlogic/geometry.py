"""Planar geometry helpers: axis-aligned boxes, segments, headings."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by two opposite corners (x1, y1) <= (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            object.__setattr__(self, "x1", min(self.x1, self.x2))
            object.__setattr__(self, "x2", max(self.x1, self.x2))
            object.__setattr__(self, "y1", min(self.y1, self.y2))
            object.__setattr__(self, "y2", max(self.y1, self.y2))

    @staticmethod
    def from_center(cx: float, cy: float, length: float, width: float, heading: float = 0.0) -> "Box":
        """Axis-aligned box around (cx, cy); `length` runs along the heading axis.

        Headings are snapped to the nearest axis, which is exact for the
        axis-aligned road network used throughout.
        """
        if abs(math.cos(heading)) >= abs(math.sin(heading)):
            hx, hy = length / 2.0, width / 2.0
        else:
            hx, hy = width / 2.0, length / 2.0
        return Box(cx - hx, cy - hy, cx + hx, cy + hy)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def width_x(self) -> float:
        return self.x2 - self.x1

    @property
    def width_y(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width_x * self.width_y

    def contains(self, x: float, y: float) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2

    def overlaps(self, other: "Box") -> bool:
        return not (
            other.x1 > self.x2
            or other.x2 < self.x1
            or other.y1 > self.y2
            or other.y2 < self.y1
        )

    def inflate(self, margin: float) -> "Box":
        return Box(self.x1 - margin, self.y1 - margin, self.x2 + margin, self.y2 + margin)

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def segment_intersects_box(p0: tuple[float, float], p1: tuple[float, float], box: Box) -> bool:
    """Slab test: does the segment p0-p1 touch the box anywhere?"""
    x0, y0 = p0
    x1, y1 = p1
    dx = x1 - x0
    dy = y1 - y0
    t_min, t_max = 0.0, 1.0
    for d, lo, hi, o in ((dx, box.x1, box.x2, x0), (dy, box.y1, box.y2, y0)):
        if abs(d) < 1e-12:
            if o < lo or o > hi:
                return False
            continue
        t1 = (lo - o) / d
        t2 = (hi - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        t_min = max(t_min, t1)
        t_max = min(t_max, t2)
        if t_min > t_max:
            return False
    return True


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    theta = math.fmod(theta, TWO_PI)
    if theta > math.pi:
        theta -= TWO_PI
    elif theta <= -math.pi:
        theta += TWO_PI
    return theta


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, in (-pi, pi]."""
    return wrap_angle(a - b)


def distance(p0: tuple[float, float], p1: tuple[float, float]) -> float:
    return math.hypot(p1[0] - p0[0], p1[1] - p0[1])


def project_onto_heading(point: tuple[float, float], origin: tuple[float, float], heading: float) -> tuple[float, float]:
    """Coordinates of `point` in the frame anchored at `origin` facing `heading`.

    Returns (longitudinal, lateral); lateral is positive to the left.
    """
    dx = point[0] - origin[0]
    dy = point[1] - origin[1]
    c = math.cos(heading)
    s = math.sin(heading)
    return (dx * c + dy * s, -dx * s + dy * c)
