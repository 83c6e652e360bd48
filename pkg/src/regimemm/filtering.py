"""Exact regime filter driven by the market maker's observables.

The belief about the hidden regime lives on the open probability simplex and
evolves as a piecewise-deterministic process: a smooth drift between orders
(transition-rate transport plus the no-order information), and a
multiplicative Bayes update at each order.  ``evolve`` integrates the drift
with classical RK4 and applies the jump update at supplied event times;
``attractor`` locates the quiet-period equilibrium belief of the two-regime
reduction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .intensity import eval_intensity, is_stub
from .model import ModelSpec, two_regime_reduction

logger = logging.getLogger(__name__)

# Coordinates are clamped here before renormalization so the belief stays in
# the open simplex even when a regime becomes numerically impossible.
_FLOOR = 1e-300

DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class FilterState:
    """Belief over regimes: strictly positive coordinates summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def check(self, atol: float = 1e-10) -> None:
        if abs(float(self.probs.sum()) - 1.0) > atol:
            raise ValueError("belief does not sum to 1")
        if np.any(self.probs <= 0.0) or np.any(self.probs >= 1.0):
            raise ValueError("belief left the open simplex")


@dataclass(frozen=True)
class ObservableRates:
    """Belief-weighted order-arrival rates seen by the market maker."""

    bid_rate: float
    ask_rate: float
    bid_components: np.ndarray  # per-regime lam_i(bid spread)
    ask_components: np.ndarray

    @property
    def total(self) -> float:
        return self.bid_rate + self.ask_rate


def _side_components(spec: ModelSpec, side: str, delta: float) -> np.ndarray:
    fams = [
        r.bid_intensity if side == "bid" else r.ask_intensity for r in spec.regimes
    ]
    if is_stub(delta):
        return np.zeros(len(fams))
    return np.array([eval_intensity(f, float(delta)) for f in fams])


def observable_rates(
    state: FilterState, spreads: tuple[float, float], n: int, spec: ModelSpec
) -> ObservableRates:
    """Average regime intensities under the belief, zeroed on a blocked side."""
    delta_bid, delta_ask = spreads
    bid_on = spec.bid_active(n)
    ask_on = spec.ask_active(n)
    bid_comp = _side_components(spec, "bid", delta_bid) if bid_on else np.zeros(spec.n_regimes)
    ask_comp = _side_components(spec, "ask", delta_ask) if ask_on else np.zeros(spec.n_regimes)
    return ObservableRates(
        bid_rate=float(state.probs @ bid_comp),
        ask_rate=float(state.probs @ ask_comp),
        bid_components=bid_comp,
        ask_components=ask_comp,
    )


def drift(
    state: FilterState, spreads: tuple[float, float], n: int, spec: ModelSpec
) -> np.ndarray:
    """Between-order belief velocity; tangent to the simplex (sums to zero).

    Coordinate i moves by generator transport plus pi_i times the gap between
    the observable rate and regime i's own rate, summed over active sides.
    """
    pi = state.probs
    out = spec.generator_Q.T @ pi
    rates = observable_rates(state, spreads, n, spec)
    if spec.bid_active(n):
        out = out + pi * (rates.bid_rate - rates.bid_components)
    if spec.ask_active(n):
        out = out + pi * (rates.ask_rate - rates.ask_components)
    return out


def jump_update(state: FilterState, side: str, spread: float, spec: ModelSpec) -> FilterState:
    """Bayes update at an order: reweight by that side's regime intensities."""
    comp = _side_components(spec, side, spread)
    raw = state.probs * comp
    total = float(raw.sum())
    if total <= 0.0:
        raise NumericsError("jump update with zero observable intensity")
    return FilterState(raw / total)


def _rk4_step(pi: np.ndarray, t: float, h: float, deriv) -> np.ndarray:
    k1 = deriv(t, pi)
    k2 = deriv(t + 0.5 * h, pi + 0.5 * h * k1)
    k3 = deriv(t + 0.5 * h, pi + 0.5 * h * k2)
    k4 = deriv(t + h, pi + h * k3)
    out = pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # renormalize: the drift preserves the coordinate sum only to integrator order
    if np.any(out < _FLOOR):
        logger.warning("belief coordinate clamped at the simplex floor (t=%g)", t)
        out = np.maximum(out, _FLOOR)
    return out / out.sum()


@dataclass
class FilterTrajectory:
    """Recorded belief path: sample times, beliefs, and event markers."""

    times: list[float] = field(default_factory=list)
    probs: list[np.ndarray] = field(default_factory=list)
    event_flags: list[int] = field(default_factory=list)
    sides: list[str] = field(default_factory=list)

    def append(self, t: float, pi: np.ndarray, event: int = 0, side: str = "") -> None:
        self.times.append(t)
        self.probs.append(np.array(pi))
        self.event_flags.append(event)
        self.sides.append(side)

    @property
    def final(self) -> FilterState:
        return FilterState(self.probs[-1])

    def to_csv(self) -> str:
        k = len(self.probs[0])
        header = "t," + ",".join(f"pi{i + 1}" for i in range(k)) + ",event_flag,side"
        rows = [header]
        for t, pi, ev, side in zip(self.times, self.probs, self.event_flags, self.sides):
            cols = [format(t, ".17g")] + [format(p, ".17g") for p in pi]
            rows.append(",".join(cols + [str(ev), side]))
        return "\n".join(rows) + "\n"


def evolve(
    state: FilterState,
    policy,
    events: list[tuple[float, str]],
    spec: ModelSpec,
    *,
    t0: float = 0.0,
    t_end: float | None = None,
    step: float = DEFAULT_STEP,
    record_every: int = 1,
) -> FilterTrajectory:
    """Integrate the belief from t0 to t_end applying order events on the way.

    ``policy(t, n, probs) -> (bid_spread, ask_spread)`` supplies the quotes
    that shape both the drift and the jump updates.  Events are (time, side)
    pairs, sorted, with side in {'bid', 'ask'}; inventory is tracked from the
    spec's initial value so the side gates stay consistent.  Between events
    the drift is integrated with RK4 steps of ``min(step, gap/10)``.
    """
    t_end = spec.horizon_T if t_end is None else t_end
    if any(e[0] < t0 or e[0] > t_end for e in events):
        raise ValueError("event times must lie within [t0, t_end]")
    if any(events[i][0] > events[i + 1][0] for i in range(len(events) - 1)):
        raise ValueError("event times must be sorted")

    pi = np.array(state.probs, dtype=float)
    n = spec.initial_inventory_n0
    traj = FilterTrajectory()
    traj.append(t0, pi)
    t = t0

    def deriv(tau, p):
        spreads = policy(tau, n, p)
        return drift(FilterState(p), spreads, n, spec)

    segments = [(e[0], e[1]) for e in events] + [(t_end, "")]
    for t_next, side in segments:
        gap = t_next - t
        if gap > 0.0:
            n_steps = max(1, int(math.ceil(gap / min(step, gap / 10.0) - 1e-12)))
            h = gap / n_steps
            if h <= 0.0 or not math.isfinite(h):
                raise NumericsError("filter step size underflow")
            for s in range(n_steps):
                pi = _rk4_step(pi, t + s * h, h, deriv)
                t_here = t_next if s == n_steps - 1 else t + (s + 1) * h
                if (s + 1) % record_every == 0 or s == n_steps - 1:
                    traj.append(t_here, pi)
            t = t_next
        if side:
            spreads = policy(t, n, pi)
            delta = spreads[0] if side == "bid" else spreads[1]
            active = spec.bid_active(n) if side == "bid" else spec.ask_active(n)
            if not active:
                raise ValueError(f"{side} event at t={t} on a blocked side")
            pi = jump_update(FilterState(pi), side, delta, spec).probs
            n = n + 1 if side == "bid" else n - 1
            traj.append(t, pi, event=1, side=side)
    return traj


def constant_spread_policy(delta_bid: float, delta_ask: float):
    def policy(t, n, probs):
        return (delta_bid, delta_ask)

    return policy


def attractor(spec: ModelSpec, beta: int) -> float:
    """Quiet-period equilibrium belief of the two-regime reduction.

    Root in (0, 1) of q_hat(pi) + w(pi) (a/e) beta, the belief drift when the
    quoted spreads have settled at the risk-neutral terminal value 1/b with
    ``beta`` active sides; requires gamma = 0 and no terminal cost.  The root
    is located by bisection to 1e-10 and certified stable (negative slope).
    """
    if beta not in (1, 2):
        raise ValueError("beta must be 1 (one active side) or 2 (both sides)")
    if spec.terminal_cost_c != 0.0:
        raise NumericsError(
            "attractor analysis requires zero terminal cost "
            "(the settled spread value 1/b assumes c = 0)"
        )
    red = two_regime_reduction(spec)
    if red.q21 <= 0.0:
        raise NumericsError("no attractor root: transition rate into regime 1 must be positive")
    if red.q11 >= 0.0:
        raise NumericsError("no attractor root: q11 must be negative")

    rate = red.a * math.exp(-1.0) * beta

    def g(pi):
        return red.q_hat(pi) + red.w(pi) * rate

    lo, hi = 0.0, 1.0
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise NumericsError("no attractor root bracketed in (0, 1)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    root = 0.5 * (lo + hi)
    slope = (g(root + 1e-7) - g(root - 1e-7)) / 2e-7
    if slope >= 0.0:
        raise NumericsError("equilibrium belief is not stable (non-negative drift slope)")
    return root
