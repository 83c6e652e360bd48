"""Thinning-based joint simulation of orders, inventory, cash, and filter.

Orders are generated exactly by thinning: candidate times arrive from a
dominating homogeneous rate (per-side maxima of the regime intensities at
the policy's minimum quotes, recomputed whenever the inventory gates flip),
and a candidate becomes a fill with probability (observable rate)/(bound).
Between fills the belief follows its no-order ODE; at fills it takes the
multiplicative Bayes update.  The reference price is sampled exactly on a
uniform reporting grid (one Gaussian block per path) and fill prices are
drawn as Brownian bridges inside their reporting cell, so the penalized
P&L does not depend on how densely the path is recorded.

Both engines advance the belief through the same stop times (reporting grid
plus candidate times) with the same RK4 subdivision, and every path owns
its counter-based stream pair, so path i of a ``monte_carlo`` batch
reproduces ``simulate_path(..., path_index=i)`` up to vectorized-math
rounding.  ``simulate_with_regime`` draws the hidden chain explicitly and
thins orders against the regime-true intensities for filter diagnostics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import hjb_full, hjb_partial
from .errors import NumericsError
from .filtering import FilterState, jump_update as _filter_jump
from .intensity import STUB_SPREAD, eval_intensity, is_stub
from .model import ModelSpec
from .rng import PathStreams

logger = logging.getLogger(__name__)

DEFAULT_REPORT_POINTS = 500
DEFAULT_FILTER_STEP = 1e-3
_BOUND_SLACK = 1.0 + 1e-9
_FLOOR = 1e-300


# -- feedback policies ---------------------------------------------------------


class Policy:
    """Feedback quote map.  ``quotes``/``quotes_batch`` return (bid, ask)
    spreads with the stub sentinel on blocked sides; ``min_spreads`` supplies
    the lower bounds behind the thinning dominating rate."""

    def quotes(self, t: float, n: int, probs: np.ndarray, y: int | None = None):
        raise NotImplementedError

    def quotes_batch(self, t: np.ndarray, n: np.ndarray, pi1: np.ndarray):
        bid = np.empty_like(t)
        ask = np.empty_like(t)
        for i in range(len(t)):
            probs = np.array([pi1[i], 1.0 - pi1[i]])
            bid[i], ask[i] = self.quotes(float(t[i]), int(n[i]), probs)
        return bid, ask

    def min_spreads(self) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedSpreadPolicy(Policy):
    """Constant quotes on both sides (the gates still block at the caps)."""

    delta_bid: float
    delta_ask: float

    def quotes(self, t, n, probs, y=None):
        return self.delta_bid, self.delta_ask

    def quotes_batch(self, t, n, pi1):
        return np.full_like(t, self.delta_bid), np.full_like(t, self.delta_ask)

    def min_spreads(self):
        return self.delta_bid, self.delta_ask


class PartialInfoPolicy(Policy):
    """Bilinear lookup into a solved partial-information surface."""

    def __init__(self, surface: hjb_partial.PartialInfoSurface):
        self.surface = surface
        self.n_star = int(surface.spec.inventory_cap_Nstar)
        bid = surface.spread_bid
        ask = surface.spread_ask
        self._min_bid = float(bid[:, :-1, :].min()) if bid.shape[1] > 1 else STUB_SPREAD
        self._min_ask = float(ask[:, 1:, :].min()) if ask.shape[1] > 1 else STUB_SPREAD

    def quotes(self, t, n, probs, y=None):
        return hjb_partial.policy(self.surface, t, n, float(probs[0]))

    def quotes_batch(self, t, n, pi1):
        surf = self.surface
        tg = surf.time_grid
        cells = len(surf.pi_grid) - 1
        s = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, len(tg) - 2)
        wt = (t - tg[s]) / (tg[s + 1] - tg[s])
        j = np.clip((pi1 * cells).astype(int), 0, cells - 1)
        wp = pi1 * cells - j
        rows = (n + self.n_star).astype(int)
        top = 2 * self.n_star

        def lookup(table, safe_rows):
            lo = (1 - wp) * table[s, safe_rows, j] + wp * table[s, safe_rows, j + 1]
            hi = (1 - wp) * table[s + 1, safe_rows, j] + wp * table[s + 1, safe_rows, j + 1]
            return (1 - wt) * lo + wt * hi

        # clamp discarded blocked rows out of the stub entries before the
        # gather: np.where evaluates both branches and inf * 0 would warn
        bid = np.where(n < self.n_star, lookup(surf.spread_bid, np.minimum(rows, top - 1)), STUB_SPREAD)
        ask = np.where(-n < self.n_star, lookup(surf.spread_ask, np.maximum(rows, 1)), STUB_SPREAD)
        return bid, ask

    def min_spreads(self):
        return self._min_bid, self._min_ask


class FullInfoPolicy(Policy):
    """Regime-feedback quotes; usable only where the regime is simulated."""

    def __init__(self, surface: hjb_full.FullInfoSurface):
        self.surface = surface
        bid = surface.spread_bid
        ask = surface.spread_ask
        self._min_bid = float(bid[:, :-1, :].min()) if bid.shape[1] > 1 else STUB_SPREAD
        self._min_ask = float(ask[:, 1:, :].min()) if ask.shape[1] > 1 else STUB_SPREAD

    def quotes(self, t, n, probs, y=None):
        if y is None:
            raise NumericsError(
                "full-information policy needs the regime; use simulate_with_regime"
            )
        return hjb_full.policy(self.surface, t, n, y)

    def min_spreads(self):
        return self._min_bid, self._min_ask


# -- records ---------------------------------------------------------------------


@dataclass(frozen=True)
class Fill:
    time: float
    side: str  # 'bid' (we buy) or 'ask' (we sell)
    spread: float
    price: float  # reference price at the fill


@dataclass
class PathRecord:
    """One simulated trajectory plus its terminal accounting."""

    seed: int
    path_index: int
    fills: list[Fill]
    times: np.ndarray
    price: np.ndarray
    inventory: np.ndarray
    cash: np.ndarray
    probs: np.ndarray  # (len(times), k)
    spread_bid: np.ndarray
    spread_ask: np.ndarray
    event_side: list[str]
    n_final: int
    x_final: float
    s_final: float
    inventory_integral: float
    pnl_penalized: float

    @property
    def fills_bid(self) -> int:
        return sum(1 for f in self.fills if f.side == "bid")

    @property
    def fills_ask(self) -> int:
        return sum(1 for f in self.fills if f.side == "ask")

    def to_csv(self) -> str:
        rows = ["t,S,N,X,pi1,spread_bid,spread_ask,event_side"]
        fmt = lambda v: format(v, ".17g")
        for i in range(len(self.times)):
            rows.append(
                ",".join(
                    [
                        fmt(self.times[i]),
                        fmt(self.price[i]),
                        str(int(self.inventory[i])),
                        fmt(self.cash[i]),
                        fmt(self.probs[i, 0]),
                        fmt(self.spread_bid[i]),
                        fmt(self.spread_ask[i]),
                        self.event_side[i],
                    ]
                )
            )
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class MonteCarloSummary:
    paths: int
    mean_pnl: float
    stderr: float
    mean_fills_bid: float
    mean_fills_ask: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    pnls: np.ndarray
    fills_bid_paths: np.ndarray
    fills_ask_paths: np.ndarray

    def to_text(self) -> str:
        lines = [
            f"mean_pnl = {self.mean_pnl:.17g}",
            f"stderr = {self.stderr:.17g}",
            f"paths = {self.paths}",
            f"fills_bid = {self.mean_fills_bid:.17g}",
            f"fills_ask = {self.mean_fills_ask:.17g}",
            "hist_edges = " + " ".join(format(v, ".17g") for v in self.hist_edges),
            "hist_counts = " + " ".join(str(int(v)) for v in self.hist_counts),
        ]
        return "\n".join(lines) + "\n"


# -- shared primitives ------------------------------------------------------------


def _side_families(spec: ModelSpec, side: str):
    return [r.bid_intensity if side == "bid" else r.ask_intensity for r in spec.regimes]


def _dominating_rates(spec: ModelSpec, policy: Policy) -> tuple[float, float]:
    """Per-side dominating rates: max over regimes at the policy's minimum quote."""
    out = []
    for side, dmin in zip(("bid", "ask"), policy.min_spreads()):
        if is_stub(dmin):
            out.append(0.0)  # side never quoted
            continue
        if not math.isfinite(dmin):
            raise NumericsError(
                "policy must provide a finite minimum spread for the thinning bound"
            )
        out.append(max(float(eval_intensity(f, dmin)) for f in _side_families(spec, side)))
    return out[0], out[1]


def _batch_components(spec: ModelSpec, side: str, delta: np.ndarray) -> np.ndarray:
    """Per-regime intensities at per-path spreads; stub spreads give zero."""
    fams = _side_families(spec, side)
    stub = is_stub(delta)
    safe = np.where(stub, 0.0, delta)
    out = np.empty((len(delta), spec.n_regimes))
    for i, fam in enumerate(fams):
        out[:, i] = eval_intensity(fam, safe)
    out[stub] = 0.0
    return out


def _batch_drift(spec, pi, bid, ask, bid_on, ask_on):
    """Belief velocity for a batch of paths; (P, k) in, (P, k) out."""
    out = pi @ spec.generator_Q
    lam_b = _batch_components(spec, "bid", bid)
    lam_a = _batch_components(spec, "ask", ask)
    rate_b = np.einsum("pk,pk->p", pi, lam_b)
    rate_a = np.einsum("pk,pk->p", pi, lam_a)
    out = out + bid_on[:, None] * pi * (rate_b[:, None] - lam_b)
    out = out + ask_on[:, None] * pi * (rate_a[:, None] - lam_a)
    return out


class _QuotesForDrift:
    """Policy adapter used inside filter integration: turns the reduced pi1
    plus inventory into quote arrays, feeding the regime through when the
    path carries one (regime-true simulations)."""

    def __init__(self, policy: Policy, regime_at=None):
        self.policy = policy
        self.regime_at = regime_at

    def __call__(self, t, n, pi_full):
        if self.regime_at is None:
            return self.policy.quotes_batch(t, n, pi_full[:, 0])
        bid = np.empty_like(t)
        ask = np.empty_like(t)
        for i in range(len(t)):
            y = self.regime_at(float(t[i]))
            bid[i], ask[i] = self.policy.quotes(
                float(t[i]), int(n[i]), pi_full[i], None if y is None else y + 1
            )
        return bid, ask


def _batch_advance(spec, quotes_fn, pi, t0, t1, n, h_target):
    """RK4 the belief of every path from its t0 to its t1 (vectorized lockstep).

    The node sequence per path depends only on (t0, t1, h_target), never on
    what is recorded, keeping scalar and batch runs aligned.
    """
    if spec.n_regimes == 1:
        return pi  # a single regime has a constant, trivial belief
    gap = t1 - t0
    steps = np.maximum(np.ceil(gap / h_target - 1e-12).astype(int), 1)
    steps[gap <= 0.0] = 0
    h_all = np.where(steps > 0, gap / np.maximum(steps, 1), 0.0)
    max_steps = int(steps.max()) if len(steps) else 0
    pi = pi.copy()
    n_star = spec.inventory_cap_Nstar

    for s in range(max_steps):
        idx = np.flatnonzero(steps > s)
        h = h_all[idx]
        tt = t0[idx] + s * h
        sub_n = n[idx]
        bid_on = sub_n < n_star
        ask_on = -sub_n < n_star
        cur = pi[idx]

        def deriv(t_stage, p_stage):
            b, a = quotes_fn(t_stage, sub_n, p_stage)
            return _batch_drift(spec, p_stage, b, a, bid_on, ask_on)

        k1 = deriv(tt, cur)
        k2 = deriv(tt + 0.5 * h, cur + 0.5 * h[:, None] * k1)
        k3 = deriv(tt + 0.5 * h, cur + 0.5 * h[:, None] * k2)
        k4 = deriv(tt + h, cur + h[:, None] * k3)
        nxt = cur + (h[:, None] / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(nxt < _FLOOR):
            logger.warning("belief coordinate clamped at the simplex floor")
            nxt = np.maximum(nxt, _FLOOR)
        pi[idx] = nxt / nxt.sum(axis=1, keepdims=True)
    return pi


class _BridgedPrices:
    """Exact reference-price sampling: a Gaussian block on the reporting grid,
    Brownian bridges for fill times inside a reporting cell."""

    def __init__(self, spec: ModelSpec, prices_rng, report_points: int):
        self.spec = spec
        self.cells = report_points
        self.dt = spec.horizon_T / report_points
        z = prices_rng.standard_normal(report_points)
        increments = spec.drift_mu * self.dt + spec.vol_sigma * math.sqrt(self.dt) * z
        self.grid = np.empty(report_points + 1)
        self.grid[0] = spec.initial_price_s0
        self.grid[1:] = spec.initial_price_s0 + np.cumsum(increments)
        self.last_t = 0.0
        self.last_s = float(spec.initial_price_s0)
        self.last_cell = 0

    def node(self, r: int) -> float:
        return float(self.grid[r])

    @property
    def terminal(self) -> float:
        return float(self.grid[-1])

    def at_fill(self, t: float, prices_rng) -> float:
        cell = min(int(t / self.dt), self.cells - 1)
        if cell != self.last_cell:
            self.last_cell = cell
            self.last_t = cell * self.dt
            self.last_s = float(self.grid[cell])
        right_t = (cell + 1) * self.dt
        span = right_t - self.last_t
        frac = (t - self.last_t) / span if span > 0 else 1.0
        mean = self.last_s + (float(self.grid[cell + 1]) - self.last_s) * frac
        var = self.spec.vol_sigma**2 * (t - self.last_t) * (right_t - t) / span if span > 0 else 0.0
        s = mean + math.sqrt(max(var, 0.0)) * float(prices_rng.standard_normal())
        self.last_t = t
        self.last_s = s
        return s


def _penalized_pnl(spec: ModelSpec, x_final, s_final, n_final, inventory_integral):
    return (
        x_final
        + s_final * n_final
        - spec.terminal_cost(n_final)
        - 0.5 * spec.vol_sigma**2 * spec.running_penalty_zeta * inventory_integral
    )


# -- scalar engine ----------------------------------------------------------------


def simulate_path(
    spec: ModelSpec,
    policy: Policy,
    seed: int,
    *,
    path_index: int = 0,
    report_points: int = DEFAULT_REPORT_POINTS,
    h_target: float = DEFAULT_FILTER_STEP,
    collect: bool = True,
    regime_path: list[tuple[float, int]] | None = None,
    streams: PathStreams | None = None,
) -> PathRecord:
    """Simulate one path under the observable-intensity dynamics.

    With ``regime_path`` given (sorted (switch time, 0-based regime) pairs
    starting at t = 0) candidates are accepted at the regime-true intensity;
    the filter still sees only the observables.
    """
    streams = streams or PathStreams(seed, path_index)
    T = spec.horizon_T
    lam_bid_max, lam_ask_max = _dominating_rates(spec, policy)
    prices = _BridgedPrices(spec, streams.prices, report_points)
    regime_at = _regime_lookup(regime_path) if regime_path is not None else lambda tt: None
    quotes_fn = _QuotesForDrift(
        policy, _regime_lookup(regime_path) if regime_path is not None else None
    )

    t = 0.0
    n = spec.initial_inventory_n0
    x = float(spec.initial_cash_x0)
    pi = spec.initial_filter_mu0.copy()
    fills: list[Fill] = []
    inv_integral = 0.0
    next_report = 1  # index of the next reporting node to stop at
    next_candidate = math.nan  # nan = not drawn yet
    rows: list[tuple] = []

    def record_row(tt: float, s_here: float, side: str = "") -> None:
        if not collect:
            return
        y = regime_at(tt)
        b, a = policy.quotes(tt, n, pi, None if y is None else y + 1)
        rows.append((tt, s_here, n, x, pi.copy(), b, a, side))

    record_row(0.0, prices.node(0))

    while t < T:
        if math.isnan(next_candidate):
            bound = lam_bid_max * spec.bid_active(n) + lam_ask_max * spec.ask_active(n)
            next_candidate = (
                t + float(streams.events.standard_exponential()) / bound
                if bound > 0.0
                else math.inf
            )
        t_report = next_report * prices.dt if next_report <= prices.cells else math.inf
        t_stop = min(next_candidate, t_report, T)

        inv_integral += float(n * n) * (t_stop - t)
        if t_stop > t:
            pi = _batch_advance(
                spec, quotes_fn, pi[None, :], np.array([t]), np.array([t_stop]),
                np.array([n]), h_target,
            )[0]
            t = t_stop

        if t_stop == t_report and t_report <= T:
            record_row(t_report, prices.node(next_report))
            next_report += 1
            if t_stop != next_candidate:
                continue
        if t_stop == next_candidate and next_candidate < T:
            y = regime_at(t)
            b, a = policy.quotes(t, n, pi, None if y is None else y + 1)
            comp_b = _batch_components(spec, "bid", np.array([b]))[0]
            comp_a = _batch_components(spec, "ask", np.array([a]))[0]
            if regime_path is None:
                rate_b = float(pi @ comp_b) if spec.bid_active(n) else 0.0
                rate_a = float(pi @ comp_a) if spec.ask_active(n) else 0.0
            else:
                rate_b = float(comp_b[y]) if spec.bid_active(n) else 0.0
                rate_a = float(comp_a[y]) if spec.ask_active(n) else 0.0
            total = rate_b + rate_a
            bound = lam_bid_max * spec.bid_active(n) + lam_ask_max * spec.ask_active(n)
            if total > bound * _BOUND_SLACK:
                raise NumericsError(
                    "thinning bound violated: arrival rate above the dominator"
                )
            u1 = float(streams.events.random())
            if u1 * bound < total:
                u2 = float(streams.events.random())
                side = "bid" if u2 * total < rate_b else "ask"
                s_fill = prices.at_fill(t, streams.prices)
                if side == "bid":
                    x -= s_fill - b
                    n += 1
                    spread = float(b)
                else:
                    x += s_fill + a
                    n -= 1
                    spread = float(a)
                fills.append(Fill(t, side, spread, s_fill))
                pi = _filter_jump(FilterState(pi), side, spread, spec).probs.copy()
                record_row(t, s_fill, side)
            next_candidate = math.nan
        elif t_stop >= T:
            break

    s_final = prices.terminal
    if collect and (not rows or rows[-1][0] < T):
        record_row(T, s_final)  # terminal reporting node can miss T by one ulp
    pnl = _penalized_pnl(spec, x, s_final, n, inv_integral)

    if collect and rows:
        cols = list(zip(*rows))
        times = np.array(cols[0])
        price = np.array(cols[1])
        inventory = np.array(cols[2])
        cash = np.array(cols[3])
        probs = np.array(cols[4])
        s_bid = np.array(cols[5])
        s_ask = np.array(cols[6])
        sides = list(cols[7])
    else:
        times = np.array([T])
        price = np.array([s_final])
        inventory = np.array([n])
        cash = np.array([x])
        probs = pi[None, :].copy()
        s_bid = np.array([STUB_SPREAD])
        s_ask = np.array([STUB_SPREAD])
        sides = [""]

    return PathRecord(
        seed=seed,
        path_index=path_index,
        fills=fills,
        times=times,
        price=price,
        inventory=inventory,
        cash=cash,
        probs=probs,
        spread_bid=s_bid,
        spread_ask=s_ask,
        event_side=sides,
        n_final=int(n),
        x_final=float(x),
        s_final=float(s_final),
        inventory_integral=float(inv_integral),
        pnl_penalized=float(pnl),
    )


def _regime_lookup(regime_path):
    if regime_path is None:
        return lambda t: None
    switch_times = [p[0] for p in regime_path]
    states = [p[1] for p in regime_path]

    def lookup(t: float) -> int:
        idx = 0
        for k, st in enumerate(switch_times):
            if st <= t:
                idx = k
            else:
                break
        return states[idx]

    return lookup


def draw_regime_path(spec: ModelSpec, regime_rng) -> list[tuple[float, int]]:
    """Sample the hidden chain on [0, T]: initial state from the prior, then
    exponential holding times from the generator.  States are 0-based."""
    q = spec.generator_Q
    u = float(regime_rng.random())
    y = min(int(np.searchsorted(np.cumsum(spec.initial_filter_mu0), u)), spec.n_regimes - 1)
    path = [(0.0, y)]
    t = 0.0
    while True:
        rate = -float(q[y, y])
        if rate <= 0.0:
            break
        t += float(regime_rng.standard_exponential()) / rate
        if t >= spec.horizon_T:
            break
        others = [j for j in range(spec.n_regimes) if j != y]
        weights = np.cumsum(np.array([q[y, j] for j in others]) / rate)
        u2 = float(regime_rng.random())
        y = others[min(int(np.searchsorted(weights, u2)), len(others) - 1)]
        path.append((t, y))
    return path


def simulate_with_regime(
    spec: ModelSpec,
    policy: Policy,
    seed: int,
    *,
    path_index: int = 0,
    report_points: int = DEFAULT_REPORT_POINTS,
    h_target: float = DEFAULT_FILTER_STEP,
    collect: bool = True,
) -> tuple[PathRecord, list[tuple[float, int]]]:
    """Simulate the hidden regime explicitly; orders arrive at the
    regime-true intensity while the filter runs on observables only.

    Policies receive the 1-based regime index through their ``y`` argument.
    Returns the path record plus the sampled (switch time, 0-based state)
    regime path.
    """
    streams = PathStreams(seed, path_index)
    regime_path = draw_regime_path(spec, streams.regime)
    record = simulate_path(
        spec,
        policy,
        seed,
        path_index=path_index,
        report_points=report_points,
        h_target=h_target,
        collect=collect,
        regime_path=regime_path,
        streams=streams,
    )
    return record, regime_path


# -- batch engine -------------------------------------------------------------------


def monte_carlo(
    spec: ModelSpec,
    policy: Policy,
    n_paths: int,
    seed: int,
    *,
    report_points: int = DEFAULT_REPORT_POINTS,
    h_target: float = DEFAULT_FILTER_STEP,
    hist_bins: int = 30,
) -> MonteCarloSummary:
    """Vectorized Monte Carlo over path-indexed counter-based streams.

    Deterministic for fixed (spec, policy, seed, n_paths) regardless of how
    the work might be partitioned: each path consumes only its own streams
    and aggregation is an ordered reduction over path indices.
    """
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    T = spec.horizon_T
    lam_bid_max, lam_ask_max = _dominating_rates(spec, policy)
    n_star = spec.inventory_cap_Nstar
    quotes_fn = _QuotesForDrift(policy)

    streams = [PathStreams(seed, p) for p in range(n_paths)]
    prices = [_BridgedPrices(spec, s.prices, report_points) for s in streams]
    report_dt = T / report_points

    t = np.zeros(n_paths)
    n = np.full(n_paths, spec.initial_inventory_n0, dtype=int)
    x = np.full(n_paths, float(spec.initial_cash_x0))
    pi = np.repeat(spec.initial_filter_mu0[None, :], n_paths, axis=0)
    inv_integral = np.zeros(n_paths)
    fills_b = np.zeros(n_paths, dtype=int)
    fills_a = np.zeros(n_paths, dtype=int)
    next_report = np.ones(n_paths, dtype=int)
    next_candidate = np.full(n_paths, math.nan)
    active = np.ones(n_paths, dtype=bool)

    while np.any(active):
        idx = np.flatnonzero(active)
        # draw fresh candidate clocks where the previous one was consumed
        for p in idx[np.isnan(next_candidate[idx])]:
            bound = lam_bid_max * (n[p] < n_star) + lam_ask_max * (-n[p] < n_star)
            next_candidate[p] = (
                t[p] + float(streams[p].events.standard_exponential()) / bound
                if bound > 0.0
                else math.inf
            )
        t_report = np.where(next_report[idx] <= report_points, next_report[idx] * report_dt, math.inf)
        t_stop = np.minimum(np.minimum(next_candidate[idx], t_report), T)

        inv_integral[idx] += n[idx].astype(float) ** 2 * (t_stop - t[idx])
        pi[idx] = _batch_advance(spec, quotes_fn, pi[idx], t[idx], t_stop, n[idx], h_target)
        t[idx] = t_stop

        hit_report = (t_stop == t_report) & (t_report <= T)
        next_report[idx[hit_report]] += 1
        at_end = t_stop >= T
        active[idx[at_end]] = False

        cand = idx[(t_stop == next_candidate[idx]) & ~at_end]
        if len(cand) == 0:
            continue
        qb, qa = policy.quotes_batch(t[cand], n[cand], pi[cand, 0])
        comp_b = _batch_components(spec, "bid", qb)
        comp_a = _batch_components(spec, "ask", qa)
        rate_b = np.einsum("pk,pk->p", pi[cand], comp_b) * (n[cand] < n_star)
        rate_a = np.einsum("pk,pk->p", pi[cand], comp_a) * (-n[cand] < n_star)
        total = rate_b + rate_a
        bound_arr = lam_bid_max * (n[cand] < n_star) + lam_ask_max * (-n[cand] < n_star)
        if np.any(total > bound_arr * _BOUND_SLACK):
            raise NumericsError("thinning bound violated: arrival rate above the dominator")
        for j, p in enumerate(cand):
            u1 = float(streams[p].events.random())
            if u1 * bound_arr[j] < total[j]:
                u2 = float(streams[p].events.random())
                is_bid = u2 * total[j] < rate_b[j]
                s_fill = prices[p].at_fill(float(t[p]), streams[p].prices)
                if is_bid:
                    x[p] -= s_fill - qb[j]
                    n[p] += 1
                    fills_b[p] += 1
                    weights = pi[p] * comp_b[j]
                else:
                    x[p] += s_fill + qa[j]
                    n[p] -= 1
                    fills_a[p] += 1
                    weights = pi[p] * comp_a[j]
                pi[p] = weights / weights.sum()
            next_candidate[p] = math.nan

    s_final = np.array([b.terminal for b in prices])
    pnls = np.asarray(_penalized_pnl(spec, x, s_final, n.astype(float), inv_integral))
    mean = float(np.mean(pnls))
    stderr = float(np.std(pnls, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    counts, edges = np.histogram(pnls, bins=hist_bins)
    return MonteCarloSummary(
        paths=n_paths,
        mean_pnl=mean,
        stderr=stderr,
        mean_fills_bid=float(np.mean(fills_b)),
        mean_fills_ask=float(np.mean(fills_a)),
        hist_edges=edges,
        hist_counts=counts,
        pnls=pnls,
        fills_bid_paths=fills_b,
        fills_ask_paths=fills_a,
    )
