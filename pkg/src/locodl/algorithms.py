"""Primal-dual local-training iteration with compressed uplink, plus baselines.

The main iteration keeps per-client models x_i, a shared anchor model y, and
dual variables (u_i, v) whose feasibility identity mean(u) + v = 0 is
preserved exactly by construction.  Communication happens on a shared
Bernoulli(p) coin; on a round, each client uploads a compressed difference
between its predicted model and the anchor.

Baselines: exact distributed gradient descent, compressed gradient differences
with control variates (DIANA), and probabilistic local training with control
variates (Scaffnew).  Baselines run on the folded problem (shared regularizer
absorbed into every local function).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compressors import compress, compress_round
from .errors import ConfigurationError, InputError


@dataclass
class RngBundle:
    """Pre-split streams: a shared coin, a round-level compression stream,
    and one stream per client for anything a client draws on its own."""

    coin: np.random.Generator
    rounds: np.random.Generator
    clients: list

    @classmethod
    def from_seed(cls, seed, n):
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(n + 2)
        return cls(np.random.default_rng(children[0]),
                   np.random.default_rng(children[1]),
                   [np.random.default_rng(c) for c in children[2:]])


@dataclass(frozen=True)
class AlgoParams:
    gamma: float
    chi: float
    rho: float
    p: float
    omega: float
    omega_av: float

    @property
    def dual_step(self):
        return self.p * self.chi / (self.gamma * (1.0 + 2.0 * self.omega))

    def validate(self, L):
        if not 0.0 < self.gamma < 2.0 / L:
            raise ConfigurationError(
                f"stepsize condition 0 < gamma < 2/L violated: gamma={self.gamma}, 2/L={2.0 / L}")
        slack = 2.0 * self.rho - self.rho ** 2 * (1.0 + self.omega_av) - self.chi
        if slack < -1e-12:
            raise ConfigurationError(
                "condition 2*rho - rho^2*(1+omega_av) - chi >= 0 violated "
                f"(rho={self.rho}, chi={self.chi}, omega_av={self.omega_av}, slack={slack})")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigurationError(f"rho must be in (0, 1], got {self.rho}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"p must be in (0, 1], got {self.p}")


def default_params(L, mu, omega, omega_av):
    """Theoretical schedule: gamma = 1/L, chi = rho = 1/(1+omega_av), tuned coin probability."""
    if not 0.0 < mu <= L:
        raise InputError("need 0 < mu <= L")
    kappa = L / mu
    chi = rho = 1.0 / (1.0 + omega_av)
    p = min(math.sqrt((1.0 + omega_av) * (1.0 + omega) / kappa), 1.0)
    return AlgoParams(1.0 / L, chi, rho, p, omega, omega_av)


def rand_k_params(L, mu, d, n, k):
    """Closed-form schedule for independent rand-k compressors with k = ceil(d/n)."""
    kappa = L / mu
    chi = rho = n / (n - 1.0 + d / k)
    p = min(math.sqrt((d * k * (n - 1.0) + d * d) / (n * k * k * kappa)), 1.0)
    omega = d / k - 1.0
    return AlgoParams(1.0 / L, chi, rho, p, omega, omega / n)


def rate_bound(params, L, mu, omega=None):
    """Per-iteration contraction factor of the Lyapunov function."""
    omega = params.omega if omega is None else omega
    params.validate(L)
    tau = max((1.0 - params.gamma * mu) ** 2,
              (1.0 - params.gamma * L) ** 2,
              1.0 - params.p ** 2 * params.chi / (1.0 + 2.0 * omega))
    if tau >= 1.0:
        raise ConfigurationError(f"contraction factor is {tau} >= 1; parameters do not converge")
    return tau


@dataclass
class LoCoDLState:
    x: np.ndarray          # (n, d) local models
    y: np.ndarray          # (d,) shared anchor model
    u: np.ndarray          # (n, d) local duals
    v: np.ndarray          # (d,) shared dual
    t: int = 0
    rounds: int = 0
    bits_uplink: int = 0   # cumulative per-client uplink bits
    saturation_events: int = 0
    max_dual_residual: float = 0.0

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros((n, d)), np.zeros(d), np.zeros((n, d)), np.zeros(d))

    @property
    def n(self):
        return self.x.shape[0]

    def dual_residual(self):
        """||mean(u) + v||_inf, zero in exact arithmetic."""
        return float(np.max(np.abs(self.u.mean(axis=0) + self.v)))


@dataclass(frozen=True)
class ReferenceSolution:
    x_star: np.ndarray
    u_star: np.ndarray   # (n, d), gradient of each local at x_star
    v_star: np.ndarray
    f_star: float


def locodl_step(state, problem, specs, params, rng, active=None):
    """One iteration; mutates and returns `state`.

    `active`, if given, is a participation mask: inactive clients contribute
    a zero message on communication rounds (requires rho = 1).
    """
    if active is not None and params.rho != 1.0:
        raise ConfigurationError("partial participation requires rho = 1")
    gamma = params.gamma
    gx = problem.grads_locals(state.x)
    x_hat = state.x - gamma * gx + gamma * state.u
    y_hat = state.y - gamma * problem.grad_g(state.y) + gamma * state.v

    if rng.coin.random() < params.p:
        n = state.n
        diff = x_hat - y_hat[None, :]
        spec = specs[0]
        if active is None and all(s is spec for s in specs):
            msgs, sat = compress_round(spec, diff, rng.rounds)
            state.saturation_events += sat
            bits = spec.bits_per_message
        else:
            msgs = np.zeros_like(diff)
            bits = None
            for i in range(n):
                if active is not None and not active[i]:
                    continue
                msg = compress(specs[i], diff[i], rng.clients[i])
                msgs[i] = msg.payload
                state.saturation_events += msg.saturated
                if bits is None:
                    bits = msg.bits
        d_bar = msgs.sum(axis=0) / (2.0 * n)
        lam = params.dual_step
        state.x = (1.0 - params.rho) * x_hat + params.rho * (y_hat + d_bar)[None, :]
        state.u = state.u + lam * (d_bar[None, :] - msgs)
        state.y = y_hat + params.rho * d_bar
        state.v = state.v + lam * d_bar
        state.rounds += 1
        state.bits_uplink += bits if bits is not None else 0
    else:
        state.x = x_hat
        state.y = y_hat
    state.t += 1
    res = state.dual_residual()
    if res > state.max_dual_residual:
        state.max_dual_residual = res
    return state


def lyapunov(state, ref, params, omega=None):
    """Weighted squared distance of (x, y, u, v) to the saddle point."""
    omega = params.omega if omega is None else omega
    n = state.n
    primal = float(np.sum((state.x - ref.x_star[None, :]) ** 2)) \
        + n * float(np.sum((state.y - ref.x_star) ** 2))
    dual = float(np.sum((state.u - ref.u_star) ** 2)) \
        + n * float(np.sum((state.v - ref.v_star) ** 2))
    return primal / params.gamma \
        + params.gamma * (1.0 + 2.0 * omega) / (params.p ** 2 * params.chi) * dual


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


@dataclass
class GDState:
    x: np.ndarray
    t: int = 0
    rounds: int = 0
    bits_uplink: int = 0

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d))


def gd_step(state, problem, gamma):
    """Exact distributed gradient descent; one full 32d-bit upload per iteration."""
    state.x = state.x - gamma * problem.grad_mean(state.x)
    state.t += 1
    state.rounds += 1
    state.bits_uplink += 32 * problem.d
    return state


@dataclass
class DianaState:
    x: np.ndarray        # (d,) server model
    h: np.ndarray        # (n, d) gradient control variates
    t: int = 0
    rounds: int = 0
    bits_uplink: int = 0

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros(d), np.zeros((n, d)))


def diana_gamma(L, mu, omega, n):
    """Stepsize from the compressed-gradient-difference method's theory."""
    alpha = 1.0 / (1.0 + omega)
    return min(1.0 / (L * (1.0 + 2.0 * omega / n)), alpha / (2.0 * mu))


def diana_step(state, problem, specs, gamma, rng, alpha=None):
    """Compressed gradient differences with control variates; one round per iteration."""
    if alpha is None:
        alpha = 1.0 / (1.0 + specs[0].omega)
    n = state.h.shape[0]
    grads = problem.grads_locals(state.x)
    deltas = grads - state.h
    spec = specs[0]
    if all(s is spec for s in specs):
        msgs, _ = compress_round(spec, deltas, rng.rounds)
        bits = spec.bits_per_message
    else:
        msgs = np.empty_like(deltas)
        bits = 0
        for i in range(n):
            msg = compress(specs[i], deltas[i], rng.clients[i])
            msgs[i] = msg.payload
            bits = msg.bits
    g_hat = state.h.mean(axis=0) + msgs.mean(axis=0)
    state.x = state.x - gamma * g_hat
    state.h = state.h + alpha * msgs
    state.t += 1
    state.rounds += 1
    state.bits_uplink += bits
    return state


@dataclass
class ScaffnewState:
    x: np.ndarray        # (n, d) local models
    h: np.ndarray        # (n, d) control variates, sum zero
    t: int = 0
    rounds: int = 0
    bits_uplink: int = 0

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros((n, d)), np.zeros((n, d)))


def scaffnew_step(state, problem, gamma, p, rng):
    """Probabilistic local training with control variates; uncompressed rounds."""
    grads = problem.grads_locals(state.x)
    x_hat = state.x - gamma * (grads - state.h)
    if rng.coin.random() < p:
        x_bar = x_hat.mean(axis=0)
        state.h = state.h + (p / gamma) * (x_bar[None, :] - x_hat)
        state.x = np.broadcast_to(x_bar, state.x.shape).copy()
        state.rounds += 1
        state.bits_uplink += 32 * problem.d
    else:
        state.x = x_hat
    state.t += 1
    return state
