"""Classic fixed-step fourth-order Runge-Kutta with convergence/divergence
detection and per-step monitor recording.

Fixed step keeps conserved-quantity drift a clean fourth-order diagnostic:
halving dt must shrink the drift by roughly 16x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVERGE_RHS_NORM = 1e-10
CONVERGE_STREAK = 10
DIVERGE_NORM = 1e8


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    monitors: dict = field(default_factory=dict)
    converged: bool = False
    diverged: bool = False
    # endpoint (post-early-stop) regardless of recording stride
    final_state: np.ndarray | None = None
    final_time: float = 0.0

    @property
    def endpoint(self):
        return self.states[-1] if self.final_state is None else self.final_state


def rk4_step(rhs, state, dt):
    k1 = rhs(state)
    k2 = rhs(state + (0.5 * dt) * k1)
    k3 = rhs(state + (0.5 * dt) * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system, state0, dt, t_max, monitors=None, record_every=1) -> Trajectory:
    """Integrate dstate/dt = system.rhs(state) from state0 over [0, t_max].

    Halts early once the rhs norm stays below 1e-10 for 10 consecutive
    steps (converged) or the state norm exceeds 1e8 / goes non-finite
    (diverged; flagged, never raised). monitors maps name -> f(t, state,
    system); values are recorded at the same stride as states.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    state = np.asarray(state0, dtype=np.float64).copy()
    monitors = monitors or {}
    n_steps = int(round(t_max / dt))
    times = [0.0]
    states = [state.copy()]
    mon_values = {name: [fn(0.0, state, system)] for name, fn in monitors.items()}
    converged = diverged = False
    streak = 0
    t = 0.0
    for step in range(1, n_steps + 1):
        prev = state
        state = rk4_step(system.rhs, state, dt)
        t = step * dt
        if not np.all(np.isfinite(state)) or np.linalg.norm(state) > DIVERGE_NORM:
            diverged = True
            if np.all(np.isfinite(state)):
                times.append(t)
                states.append(state.copy())
                for name, fn in monitors.items():
                    mon_values[name].append(fn(t, state, system))
            else:
                # keep the last finite state so the escape direction is readable
                state = prev
            break
        if step % record_every == 0 or step == n_steps:
            times.append(t)
            states.append(state.copy())
            for name, fn in monitors.items():
                mon_values[name].append(fn(t, state, system))
        rhs_norm = np.linalg.norm(system.rhs(state))
        streak = streak + 1 if rhs_norm < CONVERGE_RHS_NORM else 0
        if streak >= CONVERGE_STREAK:
            converged = True
            break
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        monitors={k: np.array(v) for k, v in mon_values.items()},
        converged=converged,
        diverged=diverged,
        final_state=state,
        final_time=t,
    )


def integrate_batch(system, states0, dt, t_max, check_every=50, rhs_tol=CONVERGE_RHS_NORM):
    """Endpoint-only RK4 over a batch of instances sharing one (vectorized)
    system; returns (endpoints, converged mask, diverged mask).

    Instances that converge or blow up are frozen in place while the rest
    keep integrating. rhs_tol sets how small the velocity must get; pass
    something tighter than the default when endpoints feed high-precision
    comparisons.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    states = np.asarray(states0, dtype=np.float64).copy()
    n = states.shape[0]
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    diverged = np.zeros(n, dtype=bool)
    streak = np.zeros(n, dtype=int)
    n_steps = int(round(t_max / dt))
    for step in range(1, n_steps + 1):
        if not active.any():
            break
        nxt = rk4_step(system.rhs, states, dt)
        states = np.where(active[:, None], nxt, states)
        finite = np.all(np.isfinite(states), axis=1)
        bad = active & (~finite | (np.linalg.norm(np.nan_to_num(states), axis=1) > DIVERGE_NORM))
        if bad.any():
            diverged |= bad
            active &= ~bad
            # freeze blown-up rows at a finite sentinel so the batched rhs
            # keeps producing finite numbers for the still-active rows
            states[bad] = np.clip(np.nan_to_num(states[bad]), -DIVERGE_NORM, DIVERGE_NORM)
        if step % check_every == 0 or step == n_steps:
            norms = np.linalg.norm(system.rhs(states), axis=1)
            small = norms < rhs_tol
            streak = np.where(small, streak + 1, 0)
            newly = active & (streak >= 2)
            converged |= newly
            active &= ~newly
    return states, converged, diverged
