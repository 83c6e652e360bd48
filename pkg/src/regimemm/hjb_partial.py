"""Partial-information solver for the two-regime market (scalar belief).

With symmetric, proportional exponential intensities and a risk-neutral
market maker, the belief reduces to the scalar probability pi of the
low-liquidity regime and the dynamic-programming equation becomes a
first-order PIDE in (t, n, pi) whose nonlocal term looks up theta at the
post-order belief pi / m_hat(pi).  It is solved by reversing time and
marching an explicit upwind Euler scheme on a uniform pi grid, with the
nonlocal term evaluated by linear interpolation and the time step controlled
by a CFL bound re-evaluated every step.

Upwinding is applied per advection term: the generator-transport coefficient
q_hat(pi) has a known sign per node, and the order-flow-volatility term
carries a nonnegative coefficient, so each term uses its own one-sided
difference and the explicit step is monotone under the CFL bound.

``belief_gradient_scale`` weights the two belief-gradient terms (transport
and the spread adjustment).  The default 1.0 matches the filter dynamics, so
the solved surface is the expected penalized P&L of its own feedback policy;
2.0 reproduces an alternative convention that doubles both terms.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, UnsupportedConfigError
from .intensity import STUB_SPREAD
from .model import ModelSpec, TwoRegimeParams, format_config, parse_config, two_regime_reduction

DEFAULT_PI_CELLS = 200
CFL_SAFETY = 0.9


def reduced_coeffs(spec: ModelSpec) -> TwoRegimeParams:
    """Closed-form scalar coefficients q_hat, m_hat, w of the reduction.

    Requires two regimes, gamma = 0, symmetric proportional exponential
    intensities; raises UnsupportedConfigError naming the failed requirement.
    """
    return two_regime_reduction(spec)


@dataclass(frozen=True)
class CflReport:
    max_coefficient: float
    min_dt: float
    max_dt: float
    n_steps: int


@dataclass(frozen=True)
class PartialInfoSurface:
    """theta(t, n, pi) and spread tables on the (time, inventory, belief) grid.

    Arrays are indexed [time level, inventory row, belief node]; inventory
    row r holds n = r - N*.  The time grid ascends from 0 to T and is
    generally non-uniform (CFL-driven).  Blocked sides hold stub sentinels.
    """

    spec: ModelSpec
    reduction: TwoRegimeParams
    time_grid: np.ndarray
    pi_grid: np.ndarray
    theta: np.ndarray
    spread_bid: np.ndarray
    spread_ask: np.ndarray
    cfl_report: CflReport
    belief_gradient_scale: float = 1.0

    def row_of(self, n: int) -> int:
        n_star = int(self.spec.inventory_cap_Nstar)
        if not -n_star <= n <= n_star:
            raise ValueError(f"inventory {n} outside [-{n_star}, {n_star}]")
        return n + n_star

    def _time_weight(self, t: float) -> tuple[int, float]:
        tg = self.time_grid
        if t < tg[0] - 1e-12 or t > tg[-1] + 1e-12:
            raise ValueError(f"t={t} outside [0, T]")
        t = min(max(t, tg[0]), tg[-1])
        s = min(max(int(np.searchsorted(tg, t, side="right")) - 1, 0), len(tg) - 2)
        return s, (t - tg[s]) / (tg[s + 1] - tg[s])

    def _pi_weight(self, pi: float) -> tuple[int, float]:
        if not 0.0 <= pi <= 1.0:
            raise ValueError(f"belief {pi} outside [0, 1]")
        cells = len(self.pi_grid) - 1
        j = min(int(pi * cells), cells - 1)
        return j, pi * cells - j

    def _bilinear(self, table: np.ndarray, t: float, row: int, pi: float) -> float:
        s, wt = self._time_weight(t)
        j, wp = self._pi_weight(pi)
        plane = (1.0 - wt) * table[s, row] + wt * table[s + 1, row]
        return float((1.0 - wp) * plane[j] + wp * plane[j + 1])

    def theta_at(self, t: float, n: int, pi: float) -> float:
        return self._bilinear(self.theta, t, self.row_of(n), pi)


def _grid_maps(pi_grid: np.ndarray, red: TwoRegimeParams) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation indices/weights of the post-order beliefs pi/m_hat(pi)."""
    cells = len(pi_grid) - 1
    target = pi_grid / red.m_hat(pi_grid)
    i0 = np.clip((target * cells).astype(int), 0, cells - 1)
    wt = target * cells - i0
    return i0, wt


class Stepper:
    """Precomputed grid data plus the explicit-step evaluation.

    ``evaluate(theta)`` maps one time level to the feedback spreads, the
    marching right-hand side (d theta / d tau, backward time) and the CFL
    coefficient bounding the stable step.  Exposed separately from ``solve``
    so single-step properties (monotonicity under CFL) can be tested.
    """

    def __init__(self, spec: ModelSpec, m_pi: int, belief_gradient_scale: float = 1.0):
        red = reduced_coeffs(spec)
        if not red.q11 < 0.0:
            raise UnsupportedConfigError(
                "partial-information scheme needs a strictly negative q11 "
                "(inward transport at the pi = 1 boundary)"
            )
        if spec.unbounded_inventory:
            raise UnsupportedConfigError(
                "partial-information solver requires a finite inventory cap"
            )
        self.spec = spec
        self.red = red
        self.scale = float(belief_gradient_scale)
        self.levels = spec.inventory_levels().astype(float)
        self.pi_grid = np.linspace(0.0, 1.0, m_pi + 1)
        self.d_pi = 1.0 / m_pi
        self.q_hat = red.q_hat(self.pi_grid)
        self.m_hat = red.m_hat(self.pi_grid)
        self.w = red.w(self.pi_grid)
        self.i0, self.wt = _grid_maps(self.pi_grid, red)
        self.q_pos = np.maximum(self.q_hat, 0.0)
        self.q_neg = np.minimum(self.q_hat, 0.0)
        self.base = (
            spec.drift_mu * self.levels
            - 0.5 * spec.vol_sigma**2 * spec.running_penalty_zeta * self.levels**2
        )[:, None]

    def terminal_panel(self) -> np.ndarray:
        return np.repeat(
            (-self.spec.terminal_cost(self.levels))[:, None], len(self.pi_grid), axis=1
        )

    def one_sided(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(forward, backward) belief differences; boundary columns reuse the
        inward-available side (their outward coefficients are zero)."""
        fwd = np.empty_like(theta)
        bwd = np.empty_like(theta)
        fwd[:, :-1] = (theta[:, 1:] - theta[:, :-1]) / self.d_pi
        bwd[:, 1:] = fwd[:, :-1]
        fwd[:, -1] = bwd[:, -1]
        bwd[:, 0] = fwd[:, 0]
        return fwd, bwd

    def evaluate(self, theta: np.ndarray):
        """Feedback spreads, marching RHS and CFL coefficient at one level."""
        lo, hi = self.spec.spread_bounds
        a, b, scale = self.red.a, self.red.b, self.scale
        m_hat, w = self.m_hat, self.w
        fwd, bwd = self.one_sided(theta)
        # the volatility-adjustment term carries a nonnegative coefficient:
        # a forward difference keeps the explicit step monotone
        grad_w = fwd
        theta_nl = (1.0 - self.wt) * theta[:, self.i0] + self.wt * theta[:, self.i0 + 1]
        adj = scale * (w / m_hat) * grad_w

        bid = np.full_like(theta, STUB_SPREAD)
        ask = np.full_like(theta, STUB_SPREAD)
        d_bid = np.zeros_like(theta)
        d_ask = np.zeros_like(theta)
        d_bid[:-1] = theta_nl[1:] - theta[:-1]  # buy fill: n -> n+1, belief -> pi/m_hat
        d_ask[1:] = theta_nl[:-1] - theta[1:]
        bid[:-1] = np.clip(1.0 / b - adj[:-1] - d_bid[:-1], lo, hi)
        ask[1:] = np.clip(1.0 / b - adj[1:] - d_ask[1:], lo, hi)

        rate_bid = np.zeros_like(theta)
        rate_ask = np.zeros_like(theta)
        rate_bid[:-1] = a * np.exp(-b * bid[:-1])
        rate_ask[1:] = a * np.exp(-b * ask[1:])

        term = np.zeros_like(theta)
        term[:-1] += rate_bid[:-1] * (scale * w * grad_w[:-1] + m_hat * (bid[:-1] + d_bid[:-1]))
        term[1:] += rate_ask[1:] * (scale * w * grad_w[1:] + m_hat * (ask[1:] + d_ask[1:]))

        transport = scale * (self.q_pos * fwd + self.q_neg * bwd)
        rhs = self.base + transport + term
        cfl_coeff = scale * np.abs(self.q_hat) / self.d_pi + (rate_bid + rate_ask) * (
            scale * w / self.d_pi + m_hat
        )
        return bid, ask, rhs, float(np.max(cfl_coeff))

    def step(self, theta: np.ndarray, dt: float) -> np.ndarray:
        _, _, rhs, coeff = self.evaluate(theta)
        if dt * coeff > 1.0:
            raise NumericsError("explicit step exceeds the CFL bound")
        return theta + dt * rhs


def solve(
    spec: ModelSpec,
    m_pi: int = DEFAULT_PI_CELLS,
    m_t: int | None = None,
    *,
    auto_refine: bool = True,
    belief_gradient_scale: float = 1.0,
    cfl_safety: float = CFL_SAFETY,
) -> PartialInfoSurface:
    """March theta backward from theta(T, n, pi) = -c n^2.

    ``m_pi`` is the number of belief cells (m_pi + 1 nodes).  With ``m_t``
    unset the time step is chosen each level from the CFL bound; an explicit
    ``m_t`` sets a uniform target step T/m_t which is still shortened when
    the CFL bound demands it (auto_refine) or triggers an error otherwise.
    """
    stepper = Stepper(spec, m_pi, belief_gradient_scale)
    T = spec.horizon_T
    theta = stepper.terminal_panel()
    target_dt = T / m_t if m_t else math.inf

    thetas = [theta]
    bids = []
    asks = []
    times = [T]
    max_coeff = 0.0
    dts: list[float] = []
    t = T
    while t > 0.0:
        bid, ask, rhs, coeff = stepper.evaluate(theta)
        bids.append(bid)
        asks.append(ask)
        max_coeff = max(max_coeff, coeff)
        dt_cfl = cfl_safety / coeff if coeff > 0.0 else math.inf
        dt = min(dt_cfl, target_dt, t)
        if m_t and not auto_refine and target_dt > dt_cfl + 1e-15:
            raise NumericsError(
                f"CFL violation: requested dt {target_dt:.3e} exceeds stable dt {dt_cfl:.3e}"
            )
        if not dt > 0.0 or not math.isfinite(dt):
            raise NumericsError("partial-information scheme: time step underflow")
        theta = theta + dt * rhs
        t = 0.0 if t - dt <= 1e-15 * T else t - dt
        thetas.append(theta)
        times.append(t)
        dts.append(dt)
    bid, ask, _, _ = stepper.evaluate(theta)
    bids.append(bid)
    asks.append(ask)

    order = slice(None, None, -1)
    report = CflReport(
        max_coefficient=max_coeff,
        min_dt=min(dts) if dts else 0.0,
        max_dt=max(dts) if dts else 0.0,
        n_steps=len(dts),
    )
    return PartialInfoSurface(
        spec=spec,
        reduction=stepper.red,
        time_grid=np.array(times[order]),
        pi_grid=stepper.pi_grid,
        theta=np.array(thetas[order]),
        spread_bid=np.array(bids[order]),
        spread_ask=np.array(asks[order]),
        cfl_report=report,
        belief_gradient_scale=stepper.scale,
    )


def policy(surface: PartialInfoSurface, t: float, n: int, pi: float) -> tuple[float, float]:
    """Bilinear interpolation of the stored spread tables at (t, pi).

    Blocked sides (|n| at the cap) return the stub sentinel.
    """
    spec = surface.spec
    row = surface.row_of(n)
    bid = (
        surface._bilinear(surface.spread_bid, t, row, pi)
        if spec.bid_active(n)
        else STUB_SPREAD
    )
    ask = (
        surface._bilinear(surface.spread_ask, t, row, pi)
        if spec.ask_active(n)
        else STUB_SPREAD
    )
    return bid, ask


@dataclass(frozen=True)
class ConvergenceReport:
    pi_cells: tuple[int, ...]
    sup_differences: tuple[float, ...]  # between successive ladder solutions
    ratios: tuple[float, ...]

    def rows(self):
        out = []
        for idx, diff in enumerate(self.sup_differences):
            out.append((self.pi_cells[idx], self.pi_cells[idx + 1], diff))
        return out


def convergence_report(
    spec: ModelSpec,
    ladder: tuple[int, ...] = (50, 100, 200),
    *,
    n_probe_times: int = 41,
    **solve_kwargs,
) -> ConvergenceReport:
    """Sup-norm differences between successive ladder solutions.

    Each rung doubles the belief resolution (time resolution follows the
    CFL bound); solutions are compared on the common belief nodes across
    all inventories at a fixed set of probe times.
    """
    if len(ladder) < 2:
        raise ValueError("need at least two grids to compare")
    for c, f in zip(ladder, ladder[1:]):
        if f != 2 * c:
            raise ValueError("each ladder step must refine the belief grid by 2")
    surfaces = [solve(spec, m_pi=m, **solve_kwargs) for m in ladder]
    probe_times = np.linspace(0.0, spec.horizon_T, n_probe_times)
    diffs = []
    for coarse, fine in zip(surfaces, surfaces[1:]):
        worst = 0.0
        for row in range(coarse.theta.shape[1]):
            n = row - int(spec.inventory_cap_Nstar)
            for j, pi in enumerate(coarse.pi_grid):
                for t in probe_times:
                    d = abs(coarse.theta_at(t, n, pi) - fine.theta_at(t, n, pi))
                    worst = max(worst, d)
        diffs.append(worst)
    ratios = tuple(
        diffs[i] / diffs[i + 1] if diffs[i + 1] > 0 else math.inf
        for i in range(len(diffs) - 1)
    )
    return ConvergenceReport(tuple(ladder), tuple(diffs), ratios)


# -- persistence ----------------------------------------------------------------


def surface_to_csv(surface: PartialInfoSurface, extra_headers: dict | None = None) -> str:
    """Same grid-file layout as the full-information surface, with rows
    (t, n, pi, theta, spread_bid, spread_ask) and a cfl report header."""
    buf = io.StringIO()
    for line in format_config(surface.spec).strip().splitlines():
        buf.write(f"# {line}\n")
    rep = surface.cfl_report
    buf.write(f"# cfl_max_coeff = {rep.max_coefficient:.17g}\n")
    buf.write(f"# cfl_min_dt = {rep.min_dt:.17g}\n")
    buf.write(f"# cfl_max_dt = {rep.max_dt:.17g}\n")
    buf.write(f"# cfl_n_steps = {rep.n_steps}\n")
    buf.write(f"# belief_gradient_scale = {surface.belief_gradient_scale:.17g}\n")
    for key, val in (extra_headers or {}).items():
        buf.write(f"# {key} = {val}\n")
    buf.write("t,n,pi,theta,spread_bid,spread_ask\n")
    n_star = int(surface.spec.inventory_cap_Nstar)
    fmt = lambda x: format(x, ".17g")
    for s, t in enumerate(surface.time_grid):
        for r in range(surface.theta.shape[1]):
            for j, pi in enumerate(surface.pi_grid):
                buf.write(
                    ",".join(
                        [
                            fmt(t),
                            str(r - n_star),
                            fmt(pi),
                            fmt(surface.theta[s, r, j]),
                            fmt(surface.spread_bid[s, r, j]),
                            fmt(surface.spread_ask[s, r, j]),
                        ]
                    )
                    + "\n"
                )
    return buf.getvalue()


def surface_from_csv(text: str) -> PartialInfoSurface:
    config_lines = []
    headers: dict[str, str] = {}
    rows = []
    header_seen = False
    for raw in text.splitlines():
        if raw.startswith("#"):
            stripped = raw[1:].strip()
            if "=" in stripped:
                key = stripped.partition("=")[0].strip()
                if key.startswith(("cfl_", "belief_gradient_scale", "manifest")):
                    headers[key] = stripped.partition("=")[2].strip()
                else:
                    config_lines.append(stripped)
            continue
        if not raw.strip():
            continue
        if not header_seen:
            header_seen = True
            continue
        rows.append(raw.split(","))
    spec = parse_config("\n".join(config_lines))
    red = two_regime_reduction(spec)
    n_star = int(spec.inventory_cap_Nstar)
    times = np.array(sorted({float(r[0]) for r in rows}))
    pis = np.array(sorted({float(r[2]) for r in rows}))
    t_index = {t: s for s, t in enumerate(times)}
    p_index = {p: j for j, p in enumerate(pis)}
    shape = (len(times), 2 * n_star + 1, len(pis))
    theta = np.empty(shape)
    bid = np.empty(shape)
    ask = np.empty(shape)
    for r in rows:
        s = t_index[float(r[0])]
        row = int(r[1]) + n_star
        j = p_index[float(r[2])]
        theta[s, row, j] = float(r[3])
        bid[s, row, j] = float(r[4])
        ask[s, row, j] = float(r[5])
    report = CflReport(
        max_coefficient=float(headers.get("cfl_max_coeff", "nan")),
        min_dt=float(headers.get("cfl_min_dt", "nan")),
        max_dt=float(headers.get("cfl_max_dt", "nan")),
        n_steps=int(headers.get("cfl_n_steps", "0")),
    )
    return PartialInfoSurface(
        spec=spec,
        reduction=red,
        time_grid=times,
        pi_grid=pis,
        theta=theta,
        spread_bid=bid,
        spread_ask=ask,
        cfl_report=report,
        belief_gradient_scale=float(headers.get("belief_gradient_scale", "1")),
    )
