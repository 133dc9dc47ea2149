"""Closed-form probabilities and their Monte-Carlo cross-checks.

Exact values are rationals; floats are derived from them only for display.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

from .selection import SelectionError, select_committee
from .storage import ParameterError, fraction_log10, rsts_epsilon, select_subnet, subnet_seed

MIN_TRIALS = 1_000


class Estimate(NamedTuple):
    p: float
    se: float
    trials: int


@dataclass(frozen=True)
class LivenessQuery:
    n: int
    c: int
    t_rounds: int
    honest: int = 1

    def check(self) -> None:
        for name in ("n", "c", "t_rounds", "honest"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ParameterError(f"{name} must be an integer")
        if not 1 <= self.c <= self.n:
            raise ParameterError("require 1 <= c <= n")
        if not 1 <= self.honest <= self.n:
            raise ParameterError("require 1 <= honest <= n")
        if self.t_rounds < 0:
            raise ParameterError("t_rounds must be non-negative")


def liveness_delta(n: int, c: int, t_rounds: int) -> Fraction:
    """Probability that one honest node is selected at least once in
    ``t_rounds`` independent committee draws: 1 - (1 - c/n)^t."""
    LivenessQuery(n, c, t_rounds, 1).check()
    return 1 - (1 - Fraction(c, n)) ** t_rounds


def _estimate(hits: int, trials: int) -> Estimate:
    p = hits / trials
    return Estimate(p, math.sqrt(p * (1 - p) / trials), trials)


def liveness_montecarlo(q: LivenessQuery, trials: int = 10_000, seed: int = 0) -> Estimate:
    """Hit frequency of honest nodes in ``t_rounds`` draws of the real
    committee selection, with round seeds and honest positions drawn at random."""
    q.check()
    if trials < MIN_TRIALS:
        raise ParameterError(f"need at least {MIN_TRIALS} trials")
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        honest = set(rng.choice(q.n, size=q.honest, replace=False).tolist())
        seeds = rng.integers(0, 2**63, size=q.t_rounds)
        if any(honest.intersection(select_committee(int(s), q.n, q.c)) for s in seeds):
            hits += 1
    return _estimate(hits, trials)


def rsts_montecarlo(n: int, m: int, s: int, t: int, trials: int = 100_000, seed: int = 0) -> Estimate:
    """Frequency with which a subnet drawn by the real selector contains at
    least ``t`` of the ``m`` adversarial indices (taken as 0..m-1; the draw is
    exchangeable so the labelling does not matter)."""
    if trials < MIN_TRIALS:
        raise ParameterError(f"need at least {MIN_TRIALS} trials")
    rsts_epsilon(n, m, s, t)  # parameter validation
    base = seed.to_bytes(8, "big")
    hits = 0
    for i in range(trials):
        subnet = select_subnet(subnet_seed(base, i.to_bytes(8, "big")), n, s)
        if sum(1 for x in subnet if x < m) >= t:
            hits += 1
    return _estimate(hits, trials)


# --------------------------------------------------------------------------
# sweeps


def is_headline_cell(n: int, m: int, s: int, t: int) -> bool:
    """The 10000-node, one-third adversary, s=38 cell at a 90% threshold;
    0.9*38 is not an integer so both roundings are flagged."""
    return n == 10_000 and m == n // 3 and s == 38 and t in (math.floor(0.9 * s), math.ceil(0.9 * s))


@dataclass(frozen=True)
class SweepRow:
    n: int
    m: int
    s: int
    t: int
    epsilon: Fraction
    log10: float
    headline: bool

    def as_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "s": self.s, "t": self.t,
            "epsilon_exact": f"{self.epsilon.numerator}/{self.epsilon.denominator}",
            "epsilon_log10": self.log10, "headline": self.headline,
        }


def rsts_sweep(grid: Iterable[tuple[int, int, int, int]]) -> list[SweepRow]:
    rows = []
    for n, m, s, t in grid:
        e = rsts_epsilon(n, m, s, t)
        rows.append(SweepRow(n, m, s, t, e.exact, e.log10, is_headline_cell(n, m, s, t)))
    return rows


SWEEP_COLUMNS = ("n", "m", "s", "t", "epsilon_exact", "epsilon_log10")


def sweep_csv(rows: Iterable[SweepRow], flag: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = SWEEP_COLUMNS + (("headline",) if flag else ())
    w.writerow(cols)
    for r in rows:
        d = r.as_dict()
        d["epsilon_log10"] = "-inf" if r.epsilon == 0 else f"{r.log10:.6f}"
        w.writerow([d[c] for c in cols])
    return buf.getvalue()


def threshold_grid(n: int, m: int, s: int) -> list[tuple[int, int, int, int]]:
    return [(n, m, s, t) for t in range(1, s + 1)]


def monotone_in_t(rows: list[SweepRow]) -> bool:
    """epsilon never increases with t at fixed (n, m, s)."""
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.n, r.m, r.s), []).append(r)
    for g in groups.values():
        g.sort(key=lambda r: r.t)
        if any(b.epsilon > a.epsilon for a, b in zip(g, g[1:])):
            return False
    return True


__all__ = [
    "Estimate", "LivenessQuery", "SelectionError", "SweepRow", "fraction_log10", "is_headline_cell",
    "liveness_delta", "liveness_montecarlo", "monotone_in_t", "rsts_montecarlo", "rsts_sweep",
    "sweep_csv", "threshold_grid",
]
