"""
Vehicle dynamics

State and input types, the pluggable dynamics interface
x_dot = f(x, u, t), the rear-axle kinematic bicycle model and a
fixed-step classical Runge-Kutta integrator.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState
from .geometry import Pose2D, Vec2, normalize_angle


@dataclass(frozen=True)
class VehicleState:
    """Continuous vehicle state: rear-axle position, heading and forward speed"""
    x: float
    y: float
    theta: float
    v: float = 0.0

    def __post_init__(self):
        if math.isfinite(self.theta):
            object.__setattr__(self, 'theta', normalize_angle(self.theta))

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.x, self.y, self.theta)

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)

    @property
    def velocity(self) -> Vec2:
        return Vec2(self.v * math.cos(self.theta), self.v * math.sin(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "VehicleState":
        return cls(float(values[0]), float(values[1]), float(values[2]), float(values[3]))


@dataclass(frozen=True)
class ControlInput:
    """Longitudinal acceleration and front steering angle"""
    a: float = 0.0
    delta: float = 0.0


@dataclass(frozen=True)
class BicycleParams:
    """Kinematic bicycle parameters and input bounds"""
    wheelbase: float = 2.5
    delta_max: float = 0.6
    v_max: float = 30.0
    a_min: float = -6.0
    a_max: float = 3.0

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError(f"wheelbase must be positive, got {self.wheelbase}")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError(f"delta_max must be in (0, pi/2), got {self.delta_max}")
        if not self.a_min < 0 < self.a_max:
            raise ValueError(f"need a_min < 0 < a_max, got {self.a_min}, {self.a_max}")
        if self.v_max <= 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    def clamp(self, u: ControlInput) -> ControlInput:
        return ControlInput(
            min(max(u.a, self.a_min), self.a_max),
            min(max(u.delta, -self.delta_max), self.delta_max),
        )


class DynamicsModel(ABC):
    """Vehicle dynamics interface

    Implementations must be deterministic and free of side effects.
    """

    params: BicycleParams

    @abstractmethod
    def derivative(self, state: np.ndarray, u: ControlInput, t: float) -> np.ndarray:
        """State derivative for a state vector [x, y, theta, v]"""

    def saturate(self, u: ControlInput) -> ControlInput:
        return self.params.clamp(u)

    def post_step(self, state: np.ndarray) -> np.ndarray:
        """Projection applied after every integration step"""
        return state


def bicycle_derivative(s: VehicleState, u: ControlInput, t: float,
                       p: BicycleParams) -> np.ndarray:
    """Kinematic bicycle right-hand side, input saturated first

    Returns:
        np.ndarray: [x_dot, y_dot, theta_dot, v_dot]
    """
    return _bicycle_rhs(s.as_array(), p.clamp(u), p)


def _bicycle_rhs(state: np.ndarray, u: ControlInput, p: BicycleParams) -> np.ndarray:
    theta, v = state[2], state[3]
    return np.array([
        v * math.cos(theta),
        v * math.sin(theta),
        v / p.wheelbase * math.tan(u.delta),
        u.a,
    ])


@dataclass
class KinematicBicycle(DynamicsModel):
    """Rear-axle kinematic bicycle with acceleration input"""
    params: BicycleParams = field(default_factory=BicycleParams)

    def derivative(self, state, u, t):
        return _bicycle_rhs(state, self.params.clamp(u), self.params)

    def post_step(self, state):
        state[3] = min(max(state[3], 0.0), self.params.v_max)
        return state


def integrate_step(model: DynamicsModel, s: VehicleState, u: ControlInput,
                   t: float, dt: float) -> VehicleState:
    """Advance one step of length dt with classical RK4 and zero-order hold on u

    Raises:
        ValueError: if dt is not positive
        NonFiniteState: if the new state has a NaN or Inf component
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = s.as_array()
    k1 = model.derivative(x, u, t)
    k2 = model.derivative(x + 0.5 * dt * k1, u, t + 0.5 * dt)
    k3 = model.derivative(x + 0.5 * dt * k2, u, t + 0.5 * dt)
    k4 = model.derivative(x + dt * k3, u, t + dt)
    nxt = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(nxt)):
        raise NonFiniteState(f"integration produced a non-finite state {nxt.tolist()}")
    nxt = model.post_step(nxt)
    return VehicleState.from_array(nxt)
