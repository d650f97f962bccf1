"""Training-versus-integration agreement checks.

Full-batch SGD with learning rate dt on data whose empirical moments
equal the system's parameters is exactly the Euler discretization of the
averaged ODE, so the gap to the RK4 trajectory is first order in dt. This
module builds the matching net + channel for a system variant, runs both
paths side by side, and reports the worst parameter deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import channel as ch
from ..data import Dataset, multivariate_moments, power_moments, scalar_moments
from ..linalg import SeededRng
from ..net import Architecture, ForwardNet, IDENTITY, power
from ..train import apply_batch
from .integrate import integrate
from .systems import (
    A111,
    A1111,
    Chain,
    CompressiveAN1N,
    ExpansiveA1N1,
    GeneralThreeLayer,
    GeneralDeepLinear,
    PowerA111,
    GRADIENT,
    RANDOM,
)

MOMENT_MATCH_TOL = 1e-9


def _scalar_chain_net(weights, activations=None):
    L = len(weights)
    arch = Architecture((1,) * (L + 1), activations or (IDENTITY,) * L, use_bias=False)
    return ForwardNet(arch, [np.array([[float(w)]]) for w in weights])


def _chain_channel(arch, cs):
    """srbp channel whose skip matrices are the system's scalar weights."""
    spec = ch.ChannelSpec(ch.SRBP)
    state = ch.init_channel(arch, spec, SeededRng(0))
    for i, c in enumerate(cs):
        state.backward[i] = np.full_like(state.backward[i], float(c))
    return state


def net_for_system(system, state0):
    """Build (net, channel_state) whose batch updates discretize the system."""
    state0 = np.asarray(state0, dtype=np.float64)
    if isinstance(system, A111):
        net = _scalar_chain_net(state0)
        mats = [np.array([[system.c1]])]
    elif isinstance(system, A1111):
        net = _scalar_chain_net(state0)
        mats = [np.array([[system.c1]]), np.array([[system.c2]])]
    elif isinstance(system, Chain):
        net = _scalar_chain_net(state0)
        mats = [np.array([[c]]) for c in np.asarray(system.c, dtype=np.float64)]
    elif isinstance(system, ExpansiveA1N1):
        n = system.width
        arch = Architecture((1, n, 1), (IDENTITY, IDENTITY), use_bias=False)
        a, b = state0[:n], state0[n:]
        net = ForwardNet(arch, [a[:, None].copy(), b[None, :].copy()])
        mats = [np.asarray(system.c_arr, dtype=np.float64)[:, None].copy()]
    elif isinstance(system, CompressiveAN1N):
        n = system.width
        arch = Architecture((n, 1, n), (IDENTITY, IDENTITY), use_bias=False)
        a, b = state0[:n], state0[n:]
        net = ForwardNet(arch, [a[None, :].copy(), b[:, None].copy()])
        mats = [np.asarray(system.c_arr, dtype=np.float64)[None, :].copy()]
    elif isinstance(system, GeneralThreeLayer):
        n0, n1, n2 = system.sizes
        arch = Architecture((n0, n1, n2), (IDENTITY, IDENTITY), use_bias=False)
        a1, a2 = system.split(state0)
        net = ForwardNet(arch, [a1.copy(), a2.copy()])
        mats = [np.asarray(system.c1, dtype=np.float64).copy()]
    elif isinstance(system, GeneralDeepLinear):
        if system.transport != "srbp":
            raise ValueError("training matches the skipped transport; use transport='srbp'")
        arch = Architecture(system.sizes, (IDENTITY,) * system.depth, use_bias=False)
        net = ForwardNet(arch, [m.copy() for m in system.split(state0)])
        mats = [m.copy() for m in system.effective_backward[:-1]]
    elif isinstance(system, PowerA111):
        net = _scalar_chain_net(state0, (power(system.mu), IDENTITY))
        mats = [np.array([[system.c1]])]
    else:
        raise ValueError(f"no training counterpart for {type(system).__name__}")

    if getattr(system, "channel_mode", RANDOM) == GRADIENT:
        state = ch.init_channel(net.arch, ch.ChannelSpec(ch.GRADIENT_ORACLE), SeededRng(0))
    else:
        use_fprime = getattr(system, "with_fprime", True)
        spec = ch.ChannelSpec(ch.SRBP, ch.ChannelModifiers(use_fprime=use_fprime))
        state = ch.init_channel(net.arch, spec, SeededRng(0))
        state.backward = mats
    return net, state


def net_state_vector(system, net):
    """Flatten the net's weights in the system's packing order."""
    if isinstance(system, (A111, A1111, Chain, PowerA111)):
        return np.array([w[0, 0] for w in net.weights])
    if isinstance(system, ExpansiveA1N1):
        return np.concatenate([net.weights[0][:, 0], net.weights[1][0, :]])
    if isinstance(system, CompressiveAN1N):
        return np.concatenate([net.weights[0][0, :], net.weights[1][:, 0]])
    if isinstance(system, (GeneralThreeLayer, GeneralDeepLinear)):
        return np.concatenate([w.ravel() for w in net.weights])
    raise ValueError(f"no packing for {type(system).__name__}")


def check_moments_match(system, dataset: Dataset, tol=MOMENT_MATCH_TOL):
    """The dataset's empirical moments must equal the system parameters."""
    if isinstance(system, PowerA111):
        alpha, beta, gamma, delta = power_moments(dataset, system.mu)
        ok = (
            abs(alpha - system.alpha) <= tol
            and abs(beta - system.beta) <= tol
            and (system.with_fprime or (abs(gamma - system.gamma) <= tol and abs(delta - system.delta) <= tol))
        )
    elif isinstance(system, (A111, A1111, Chain, ExpansiveA1N1)):
        alpha, beta = scalar_moments(dataset)
        ok = abs(alpha - system.alpha) <= tol and abs(beta - system.beta) <= tol
    else:
        sigma_ii, sigma_ti = multivariate_moments(dataset)
        ok = (
            np.max(np.abs(sigma_ii - system.sigma_ii)) <= tol
            and np.max(np.abs(sigma_ti - system.sigma_ti)) <= tol
        )
    if not ok:
        raise ValueError(
            "dataset moments do not match the system parameters; build the "
            "system from the dataset's measured moments"
        )


@dataclass
class AgreementReport:
    times: np.ndarray
    deviations: np.ndarray
    max_deviation: float
    trained_final: np.ndarray
    integrated_final: np.ndarray


def empirical_vs_ode(system, state0, dataset: Dataset, dt, t_max, record_every=None) -> AgreementReport:
    """Run full-batch training (lr = dt) next to RK4 (step dt) and report the
    max componentwise parameter deviation over the horizon."""
    check_moments_match(system, dataset)
    net, chan = net_for_system(system, state0)
    n_steps = int(round(t_max / dt))
    record_every = record_every or max(1, n_steps // 200)
    trajectory = integrate(system, state0, dt, t_max, record_every=record_every)
    times = [0.0]
    devs = [0.0]
    recorded = {int(round(t / dt)): i for i, t in enumerate(trajectory.times)}
    for step in range(1, n_steps + 1):
        apply_batch(net, chan, dataset.inputs, dataset.targets, lr=dt)
        idx = recorded.get(step)
        if idx is not None:
            dev = np.max(np.abs(net_state_vector(system, net) - trajectory.states[idx]))
            times.append(step * dt)
            devs.append(float(dev))
        if trajectory.converged and step * dt >= trajectory.final_time:
            break
    return AgreementReport(
        times=np.array(times),
        deviations=np.array(devs),
        max_deviation=float(np.max(devs)),
        trained_final=net_state_vector(system, net),
        integrated_final=trajectory.endpoint,
    )
