"""Closed-form success probabilities, a grid-search oracle for the forging
game, entropy bounds for noisy sources, interval statistics and table/curve
generators.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .adversaries import StrategyParams, post_measurement_states
from .quantum import helstrom_success

Q0_GRID = (1.0, 0.75, 0.5, 0.25, 0.0)
MAX_ORACLE_RESOLUTION = 0.01
TIE_TOL = 1e-12


class BoundInapplicable(ValueError):
    """The noisy-source bound is undefined for epsilon > 1/4."""


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 1/2], got {delta}")


def pr_win_closed_form(delta: float) -> float:
    _check_delta(delta)
    return 0.5 + delta * math.sqrt((1 + 4 * delta * delta) / 2)


def pr_win_terms(delta, r_x, r_z, rp_x, rp_z, q0):
    """The five-parameter game objective; all arguments broadcast as arrays."""
    p0 = 0.5 + np.asarray(delta, dtype=float)
    p1 = 1.0 - p0
    return 0.5 * (
        p0**2 * (1 - rp_z + q0 * (r_z + rp_z))
        + p0 * p1 * (2 + (rp_z - rp_x) + q0 * (rp_x - rp_z + r_x - r_z))
        + p1**2 * (1 + rp_x - q0 * (r_x + rp_x))
    )


def pr_win_objective(delta: float, params: StrategyParams) -> float:
    return float(pr_win_terms(delta, params.r_x, params.r_z, params.rp_x, params.rp_z, params.q0))


@dataclass(frozen=True)
class OptimizationResult:
    best_params: StrategyParams
    best_value: float
    grid_resolution: float
    evaluations: int

    def as_dict(self) -> dict:
        return {
            "best_params": self.best_params.as_dict(),
            "best_value": self.best_value,
            "grid_resolution": self.grid_resolution,
            "evaluations": self.evaluations,
        }


def disk_grid(resolution: float) -> np.ndarray:
    """Polar grid over the closed unit disk, shape ``(P, 2)`` of (r_x, r_z).

    Radii step by at most ``resolution`` up to exactly 1; the angle count is a
    multiple of 4 so the grid is closed under negation and axis swaps. The
    origin appears once, first.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n_r = math.ceil(1.0 / resolution)
    n_a = 4 * math.ceil(math.pi / (2 * resolution))
    radii = np.arange(1, n_r + 1) / n_r
    angles = 2 * math.pi * np.arange(n_a) / n_a
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = (radii[:, None, None] * ring[None, :, :]).reshape(-1, 2)
    return np.vstack([[0.0, 0.0], pts])


def _first_max(values: np.ndarray) -> int:
    return int(np.flatnonzero(values >= values.max() - TIE_TOL)[0])


def search_grid(delta: float, points: np.ndarray, q0_grid=Q0_GRID, exhaustive: bool = False) -> tuple[StrategyParams, float]:
    """Maximise the objective over ``q0_grid`` x points x points.

    The objective is affine in ``r`` and in ``r'`` separately for fixed q0,
    so the product maximum is ``F(r,0) + F(0,r') - F(0,0)``. ``exhaustive``
    evaluates the full product instead (for cross-checking on small grids).
    Ties within 1e-12 go to the lowest (q0, r, r') index.
    """
    _check_delta(delta)
    best = None
    for q0 in q0_grid:
        if exhaustive:
            vals = pr_win_terms(
                delta, points[:, None, 0], points[:, None, 1], points[None, :, 0], points[None, :, 1], q0
            )
            flat = _first_max(vals.ravel())
            i, j = divmod(flat, len(points))
            value = float(vals.ravel()[flat])
        else:
            g = pr_win_terms(delta, points[:, 0], points[:, 1], 0.0, 0.0, q0)
            h = pr_win_terms(delta, 0.0, 0.0, points[:, 0], points[:, 1], q0)
            i, j = _first_max(g), _first_max(h)
            value = float(pr_win_terms(delta, *points[i], *points[j], q0))
        if best is None or value > best[1] + TIE_TOL:
            best = (StrategyParams(*map(float, points[i]), *map(float, points[j]), q0), value)
    return best


def optimize_grid(delta: float, resolution: float) -> OptimizationResult:
    if resolution > MAX_ORACLE_RESOLUTION:
        raise ValueError(f"resolution {resolution} is too coarse for oracle use (max {MAX_ORACLE_RESOLUTION})")
    points = disk_grid(resolution)
    params, value = search_grid(delta, points)
    return OptimizationResult(params, value, resolution, len(Q0_GRID) * len(points) ** 2)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary entropy needs p in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def mu_epsilon(epsilon: float) -> float:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon > 0.25:
        raise BoundInapplicable(f"epsilon={epsilon} > 1/4 puts 2*sqrt(eps) outside [0, 1]")
    s = 2 * math.sqrt(epsilon)
    return s + binary_entropy(s)


def noisy_forgery_bound(m: int, epsilon: float) -> float:
    if m < 1:
        raise ValueError("m must be at least 1")
    return min(1.0, max(0.0, 2.0 ** (-m * (1 - mu_epsilon(epsilon)))))


def per_round_guess_bounds(epsilon: float) -> tuple[float, float]:
    """(min(1, 1/2 + mu), min(1, 2^-(1-mu))): the two per-round forms of the noisy bound."""
    mu = mu_epsilon(epsilon)
    return min(1.0, 0.5 + mu), min(1.0, 2.0 ** (-(1 - mu)))


def helstrom_guess_prob(delta: float) -> float:
    _check_delta(delta)
    return 0.5 + delta


def helstrom_guess_prob_analytic(delta: float, prior0: float | None = None) -> float:
    """Helstrom success for telling the b=0 post-measurement states apart.

    ``prior0`` defaults to the verifier's bias 1/2 + delta.
    """
    s = post_measurement_states(delta)
    return helstrom_success(s[0], s[2], 0.5 + delta if prior0 is None else prior0)


def m_round_success(per_round: float, m: int) -> float:
    if not 0.0 <= per_round <= 1.0:
        raise ValueError("per-round probability must lie in [0, 1]")
    return per_round**m


def wilson_interval(successes: int, trials: int, z: float = 5.0) -> tuple[float, float]:
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # Guard the containment invariant against round-off at the endpoints.
    return min(lo, p), max(hi, p)


def standard_error(p: float, trials: int) -> float:
    return math.sqrt(p * (1 - p) / trials)


def figure3_curves(delta_grid, m: int) -> list[tuple[float, float, float]]:
    rows = []
    for d in delta_grid:
        per = pr_win_closed_form(float(d))
        rows.append((float(d), per, m_round_success(per, m)))
    return rows


@dataclass(frozen=True)
class SecurityRow:
    protocol_name: str
    rounds: int
    parameter: str
    per_round_bound: float | None
    m_round_bound: float | str
    recomputed: bool


def table1_rows(m: int, delta: float) -> list[SecurityRow]:
    _check_delta(delta)
    online = pr_win_closed_form(delta)
    return [
        SecurityRow("QPUF-based (2-way quantum)", m, "-", None, "(1/2)^m", False),
        SecurityRow(
            "HPUF-based (2-way quantum)",
            m,
            f"delta={delta}",
            None,
            "p_f^cl * ((1/2+delta)(1+sqrt(2)(1/2+delta)))^(2m*poly(m))",
            False,
        ),
        SecurityRow("offline (Bell pairs, CPUF)", m, "-", 0.5, m_round_success(0.5, m), True),
        SecurityRow("online (HEPUF)", m, f"delta={delta}", online, m_round_success(online, m), True),
    ]


def bounds_rows(epsilons, m: int) -> list[tuple]:
    """(epsilon, mu, per_round_half_plus_mu, per_round_min_entropy, m_round, vacuous)."""
    rows = []
    for eps in epsilons:
        eps = float(eps)
        mu = mu_epsilon(eps)
        lin, ent = per_round_guess_bounds(eps)
        bound = noisy_forgery_bound(m, eps)
        rows.append((eps, mu, lin, ent, bound, bound >= 1.0))
    return rows


def fmt(value) -> str:
    """Nine significant digits, '.' decimal separator, no locale."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


FIGURE3_HEADER = ("delta", "per_round", "after_m_rounds")
TABLE1_HEADER = ("protocol", "rounds", "parameter", "per_round_bound", "m_round_bound", "recomputed")
BOUNDS_HEADER = ("epsilon", "mu", "per_round_half_plus_mu", "per_round_min_entropy", "m_round_bound", "vacuous")


def table1_csv_rows(rows: list[SecurityRow]) -> list[tuple]:
    return [(r.protocol_name, r.rounds, r.parameter, r.per_round_bound, r.m_round_bound, r.recomputed) for r in rows]
