"""Coordinate frames, limit shapes, characteristics and rescalings.

Space-time points are ``(x, t)``. The percolation frame is ``(u, v) = (x + t, t - x)``
with no extra ``1/sqrt(2)`` factor, so that nucleations of intensity 2 in space-time
become a Poisson cloud of intensity 1 in ``(u, v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

ShapeKind = Literal["droplet", "flat", "stationary"]


@dataclass(frozen=True)
class SpaceTimePoint:
    x: float
    t: float


@dataclass(frozen=True)
class PercolationPoint:
    u: float
    v: float

    def dominated_by(self, other: PercolationPoint) -> bool:
        return self.u <= other.u and self.v <= other.v


@dataclass(frozen=True)
class LimitShape:
    kind: ShapeKind = "droplet"

    def value(self, xi):
        return limit_shape(self, xi)


@dataclass(frozen=True)
class CharacteristicSpec:
    surface_slope: float
    v_eff: float
    a: float


@dataclass(frozen=True)
class RescaleSpec:
    T: float
    xi: float
    shape: LimitShape

    @property
    def kappa_v(self) -> float:
        if self.shape.kind == "droplet":
            return (1.0 - self.xi**2) ** (1.0 / 6.0)
        return 2.0 ** (1.0 / 3.0)

    @property
    def kappa_h(self) -> float:
        if self.shape.kind == "droplet":
            return (1.0 - self.xi**2) ** (5.0 / 6.0)
        return 2.0 ** (2.0 / 3.0)


@dataclass(frozen=True)
class PathSpec:
    """Locally linear space-time path through ``(xi*T, T)`` with slope ``pi_prime``."""

    xi: float
    pi_prime: float
    pi_at_xi: float = 1.0
    kind: Literal["space_like", "general"] = "general"

    def __post_init__(self):
        if self.kind == "space_like" and abs(self.pi_prime) > 1.0:
            raise ValueError(f"space-like path needs |pi'| <= 1, got {self.pi_prime}")
        if self.kind == "general" and is_characteristic_slope(self.xi, self.pi_prime):
            raise ValueError("characteristic direction excluded")

    @property
    def effective_factor(self) -> float:
        """Multiplier ``1 - xi*pi'`` mapping path parameter to fixed-time separation."""
        return 1.0 - self.xi * self.pi_prime


@dataclass(frozen=True)
class HyperbolaPoint:
    T: float
    theta: float
    point: SpaceTimePoint


def is_characteristic_slope(xi: float, pi_prime: float, tol: float = 1e-12) -> bool:
    return xi != 0.0 and abs(pi_prime * xi - 1.0) <= tol


def png_to_percolation(p: SpaceTimePoint) -> PercolationPoint:
    return PercolationPoint(p.x + p.t, p.t - p.x)


def percolation_to_png(q: PercolationPoint) -> SpaceTimePoint:
    return SpaceTimePoint(0.5 * (q.u - q.v), 0.5 * (q.u + q.v))


def to_percolation(x, t):
    """Array version of :func:`png_to_percolation`."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return x + t, t - x


def to_spacetime(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return 0.5 * (u - v), 0.5 * (u + v)


def limit_shape(shape: LimitShape, xi):
    if shape.kind == "droplet":
        xi = np.asarray(xi, dtype=float)
        out = 2.0 * np.sqrt(np.clip(1.0 - xi * xi, 0.0, None))
        return float(out) if out.ndim == 0 else out
    if np.ndim(xi) == 0:
        return 2.0
    return np.full(np.shape(xi), 2.0)


def droplet_slope(xi: float) -> float:
    """Derivative of the droplet limit shape at ``xi``."""
    _check_xi(xi)
    return -2.0 * xi / math.sqrt(1.0 - xi * xi)


def kinematics(surface_slope: float) -> CharacteristicSpec:
    v_eff = math.sqrt(4.0 + surface_slope * surface_slope)
    return CharacteristicSpec(surface_slope, v_eff, -surface_slope / v_eff)


def characteristic_velocity(shape: LimitShape, xi: float) -> float:
    """``dx/dt`` of the characteristic through macroscopic position ``xi``."""
    if shape.kind == "droplet":
        return kinematics(droplet_slope(xi)).a
    return kinematics(0.0).a


def _check_xi(xi: float) -> None:
    if not -1.0 < xi < 1.0:
        raise ValueError(f"xi must lie strictly inside (-1, 1), got {xi}")


def xi_map(p: SpaceTimePoint, xi: float) -> SpaceTimePoint:
    _check_xi(xi)
    c = 1.0 / math.sqrt(1.0 - xi * xi)
    return SpaceTimePoint(c * (p.x - p.t * xi), c * (p.t - xi * p.x))


def xi_map_percolation(u, v, xi: float):
    """:func:`xi_map` in percolation coordinates, where it is a diagonal scaling."""
    _check_xi(xi)
    alpha = math.sqrt((1.0 - xi) / (1.0 + xi))
    return np.asarray(u, dtype=float) * alpha, np.asarray(v, dtype=float) / alpha


def xi_map_matrix(xi: float) -> np.ndarray:
    _check_xi(xi)
    c = 1.0 / math.sqrt(1.0 - xi * xi)
    return c * np.array([[1.0, -xi], [-xi, 1.0]])


HyperbolaCurve = Literal["stated", "level"]


def _radius(T: float, cos2, curve: HyperbolaCurve):
    # "stated": r = T sqrt(cos 2θ); "level": r = T / sqrt(cos 2θ), i.e. t² - x² = T²,
    # the curve on which the droplet limit shape is constant.
    if curve == "stated":
        return T * np.sqrt(cos2)
    if curve == "level":
        return T / np.sqrt(cos2)
    raise ValueError(f"unknown hyperbola curve {curve!r}")


def hyperbola_point(T: float, theta: float, curve: HyperbolaCurve = "stated") -> HyperbolaPoint:
    if not abs(theta) < math.pi / 4:
        raise ValueError(f"theta must satisfy |theta| < pi/4, got {theta}")
    r = float(_radius(T, math.cos(2.0 * theta), curve))
    return HyperbolaPoint(T, theta, SpaceTimePoint(r * math.sin(theta), r * math.cos(theta)))


def hyperbola_points(T: float, u, curve: HyperbolaCurve = "stated") -> tuple[np.ndarray, np.ndarray]:
    """Space-time coordinates of the hyperbola points at angles ``u * T**(-1/3)``."""
    theta = np.asarray(u, dtype=float) * T ** (-1.0 / 3.0)
    if np.any(np.abs(theta) >= math.pi / 4):
        raise ValueError("hyperbola angle out of range")
    r = _radius(T, np.cos(2.0 * theta), curve)
    return r * np.sin(theta), r * np.cos(theta)


def rescale_height(h, p: SpaceTimePoint | tuple, spec: RescaleSpec):
    """``(h - t*h_ma(x/t)) / t**(1/3)``; vectorised over ``h``."""
    x, t = (p.x, p.t) if isinstance(p, SpaceTimePoint) else p
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("rescale_height needs t > 0")
    x_arr = np.asarray(x, dtype=float)
    centre = t_arr * limit_shape(spec.shape, x_arr / t_arr)
    return (np.asarray(h, dtype=float) - centre) / np.cbrt(t_arr)


def scaled_coords(T: float, u: float, v: float) -> SpaceTimePoint:
    if v <= -1.0:
        raise ValueError("scaled_coords needs v > -1")
    return SpaceTimePoint(u * T ** (2.0 / 3.0), T * (1.0 + v))
