"""Relay/explorer simulation: explorer plants with bounded disturbance,
model-based observers with reset on service, the explorer feedback law and
the relay's discrete-time evolution."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import care_residual, rk4_step, solve_care, zoh_discretize

GRAVITY = 9.81


class SimulationDivergence(RuntimeError):
    pass


@dataclass
class ExplorerModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    P: np.ndarray
    d_bar: float
    name: str = ""

    def __post_init__(self):
        self.A = np.asarray(self.A, float)
        self.B = np.asarray(self.B, float)
        self.C = np.asarray(self.C, float)
        self.P = np.asarray(self.P, float)
        if self.d_bar < 0:
            raise ValueError("d_bar must be non-negative")

    @property
    def gain(self) -> np.ndarray:
        """``B^T P``."""
        return self.B.T @ self.P


@dataclass
class RelayModel:
    A0: np.ndarray
    B0: np.ndarray
    C0: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        self.A0 = np.asarray(self.A0, float)
        self.B0 = np.asarray(self.B0, float)
        self.C0 = np.asarray(self.C0, float)
        self.u_min = np.asarray(self.u_min, float)
        self.u_max = np.asarray(self.u_max, float)
        if np.any(self.u_min > self.u_max):
            raise ValueError("relay input bounds: u_min exceeds u_max")


@dataclass
class ExplorerState:
    x: np.ndarray
    x_hat: np.ndarray
    last_service_index: int = 0
    in_goal: bool = False


@dataclass
class ServiceEvent:
    t_index: int
    explorers: tuple
    trigger: str  # "relay" | "goal_region"


@dataclass
class WorldState:
    t_index: int
    x0: np.ndarray
    explorers: list
    x_g: np.ndarray
    R: float
    R_f: float
    eta: float
    Ts: float

    def __post_init__(self):
        if not (0 <= self.eta < self.R):
            raise ValueError(f"need 0 <= eta < R, got eta={self.eta}, R={self.R}")
        if not self.R_f > 0:
            raise ValueError("R_f must be positive")

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)


@dataclass
class System:
    """Models plus their zero-order-hold discretizations."""

    relay: RelayModel
    explorers: list
    Ts: float
    substeps: int = 20
    relay_Ad: np.ndarray = field(init=False, repr=False)
    relay_Bd: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.relay_Ad, self.relay_Bd = zoh_discretize(self.relay.A0, self.relay.B0, self.Ts)

    def relay_position(self, x0) -> np.ndarray:
        return self.relay.C0 @ np.asarray(x0, float)


# -- explorer control loop ---------------------------------------------------

def explorer_control(x_hat, x_g, model: ExplorerModel) -> np.ndarray:
    """``u = B^T P (x_g - x_hat)``."""
    return model.gain @ (np.asarray(x_g, float) - np.asarray(x_hat, float))


def observer_derivative(x_hat, u, model: ExplorerModel, x_g) -> np.ndarray:
    """``-A (x_g - x_hat) + B u`` between service instants."""
    return model.A @ (np.asarray(x_hat, float) - np.asarray(x_g, float)) + model.B @ np.asarray(u, float)


def sample_disturbance(rng: np.random.Generator, d_bar: float, m: int = 4) -> np.ndarray:
    """Each component uniform on ``[-d_bar/2, d_bar/2]``."""
    if d_bar == 0:
        return np.zeros(m)
    return rng.uniform(-0.5 * d_bar, 0.5 * d_bar, size=m)


def _explorer_substeps(model: ExplorerModel, x, x_hat, x_g, dt, n, rng, t0, samples, i):
    m = x.size

    def f(t, z, d):
        xt, xh = z[:m], z[m:]
        u = explorer_control(xh, x_g, model)
        return np.concatenate([model.A @ xt + model.B @ u + d, observer_derivative(xh, u, model, x_g)])

    z = np.concatenate([x, x_hat])
    for s in range(n):
        d = sample_disturbance(rng, model.d_bar, m)
        if np.linalg.norm(d) > model.d_bar * (1 + 1e-12):
            raise ValueError("disturbance sample exceeds its bound")
        z = rk4_step(lambda t, zz: f(t, zz, d), z, t0 + s * dt, dt)
        if samples is not None:
            samples.append((t0 + (s + 1) * dt, i, z[:m].copy(), z[m:].copy()))
    return z[:m], z[m:]


def step_world(world: WorldState, system: System, u0, rng: np.random.Generator,
               samples: Optional[list] = None) -> WorldState:
    """Advance one sampling period.

    The relay follows its discrete model; every explorer's true state and
    estimate are integrated with RK4 on ``Ts/substeps`` sub-steps, the
    feedback recomputed from the estimate at every stage and the disturbance
    redrawn per sub-step. ``samples`` (if given) collects
    ``(t, explorer, x, x_hat)`` at every sub-step.
    """
    u0 = np.asarray(u0, float)
    new = world.copy()
    new.x0 = system.relay_Ad @ world.x0 + system.relay_Bd @ u0
    dt = world.Ts / system.substeps
    t0 = world.t_index * world.Ts
    for i, (st, model) in enumerate(zip(new.explorers, system.explorers)):
        st.x, st.x_hat = _explorer_substeps(model, st.x, st.x_hat, world.x_g, dt,
                                            system.substeps, rng, t0, samples, i)
    new.t_index = world.t_index + 1
    values = [new.x0] + [s.x for s in new.explorers] + [s.x_hat for s in new.explorers]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise SimulationDivergence(f"non-finite state at index {new.t_index}")
    return new


# -- servicing ---------------------------------------------------------------

def detect_service(world: WorldState, system: System) -> set:
    """Explorers whose estimated position is within ``eta`` of the relay."""
    y0 = system.relay_position(world.x0)
    found = set()
    for i, (st, model) in enumerate(zip(world.explorers, system.explorers)):
        if np.linalg.norm(model.C @ st.x_hat - y0) <= world.eta:
            found.add(i)
    return found


def in_goal_region(world: WorldState, system: System) -> list:
    out = []
    for st, model in zip(world.explorers, system.explorers):
        out.append(bool(np.linalg.norm(model.C @ st.x - model.C @ world.x_g) <= world.R_f))
    return out


def apply_service(world: WorldState, system: System, W) -> tuple[WorldState, list]:
    """Reset estimates of relay-serviced (``W``) and goal-region explorers."""
    new = world.copy()
    goal = in_goal_region(world, system)
    relay_ids, goal_ids = [], []
    for i, st in enumerate(new.explorers):
        st.in_goal = goal[i]
        if i in W:
            relay_ids.append(i)
        elif goal[i]:
            goal_ids.append(i)
        else:
            continue
        st.x_hat = st.x.copy()
        st.last_service_index = world.t_index
    events = []
    if relay_ids:
        events.append(ServiceEvent(world.t_index, tuple(relay_ids), "relay"))
    if goal_ids:
        events.append(ServiceEvent(world.t_index, tuple(goal_ids), "goal_region"))
    return new, events


# -- model construction ------------------------------------------------------

def hover_relay_model(u_min, u_max, g: float = GRAVITY) -> RelayModel:
    """Small-angle hover kinematics.

    State ``[x1, x2, x3, x1', x2', roll, pitch, yaw]``, inputs ``[climb rate,
    roll rate, pitch rate, yaw rate]``; ``x1'' = g*pitch``, ``x2'' = -g*roll``.
    """
    A0 = np.zeros((8, 8))
    A0[0, 3] = 1.0
    A0[1, 4] = 1.0
    A0[3, 6] = g
    A0[4, 5] = -g
    B0 = np.zeros((8, 4))
    B0[2, 0] = 1.0
    B0[5, 1] = 1.0
    B0[6, 2] = 1.0
    B0[7, 3] = 1.0
    C0 = np.zeros((3, 8))
    C0[0, 0] = C0[1, 1] = C0[2, 2] = 1.0
    return RelayModel(A0, B0, C0, np.broadcast_to(u_min, 4).copy(), np.broadcast_to(u_max, 4).copy())


def double_integrator_matrices():
    """Planar double integrator ``[p1, p2, v1, v2]`` with output ``(p1, p2, 0)``."""
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = 1.0
    C = np.zeros((3, 4))
    C[0, 0] = C[1, 1] = 1.0
    return A, B, C


def explorer_model(d_bar: float, k: float, name: str = "", A=None, B=None, C=None) -> ExplorerModel:
    A0, B0, C0 = double_integrator_matrices()
    A = A0 if A is None else np.asarray(A, float)
    B = B0 if B is None else np.asarray(B, float)
    C = C0 if C is None else np.asarray(C, float)
    P = solve_care(A, B, k)
    if np.max(np.abs(care_residual(A, B, k, P))) > 1e-6:
        raise ValueError("Riccati residual too large")
    return ExplorerModel(A, B, C, P, d_bar, name)


def controllable(A, B) -> bool:
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def build_models(config) -> tuple[RelayModel, list]:
    """Relay and explorer models for a scenario configuration."""
    relay = hover_relay_model(config.u_min, config.u_max, config.gravity)
    explorers = [explorer_model(a.d_bar, config.k, a.name) for a in config.explorers]
    return relay, explorers


def initial_world(config, system: System) -> WorldState:
    states = []
    for a, model in zip(config.explorers, system.explorers):
        x = np.zeros(model.A.shape[0])
        x[:2] = np.asarray(a.position, float)[:2]
        x[2:4] = np.asarray(a.velocity, float)[:2]
        states.append(ExplorerState(x=x, x_hat=x.copy(), last_service_index=0))
    x0 = np.zeros(system.relay.A0.shape[0])
    x0[:3] = np.asarray(config.relay_position, float)
    return WorldState(t_index=0, x0=x0, explorers=states, x_g=np.asarray(config.x_g, float),
                      R=config.R, R_f=config.R_f, eta=config.eta, Ts=config.Ts)
