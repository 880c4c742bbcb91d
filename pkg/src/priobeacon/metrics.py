"""Empirical estimators over simulation outcomes and analytic-vs-empirical comparison.

tau_hat is the per-beacon transmission fraction (delivered + collided over
periods).  The inter-reception time is estimated from per-period
transmission bit sequences as gaps between consecutive '1's, so consecutive
transmissions give a gap of 1; the zero-based display convention (first-try
success = 0) is a presentation shift handled by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import stats

from .analytic import AnalyticalResult, MacParameters, success_time
from .geometry import Category
from .sim import Outcome, SimOutcome

__all__ = [
    "GridKey",
    "TauEstimate",
    "IrtEstimate",
    "EmpiricalEstimates",
    "ComparisonReport",
    "estimate_tau",
    "estimate_irt",
    "estimate_delay",
    "estimate_backoff_slots",
    "total_wait_periods",
    "build_estimates",
    "compare",
    "proportion_ci",
    "chi_square_geometric",
]

Z95 = 1.959963984540054


@dataclass(frozen=True)
class GridKey:
    """Identity of one grid point; joins analytic and empirical rows."""

    policy: str
    category: str
    cw: int
    n_sta: int

    def as_tuple(self):
        return (self.policy, self.category, self.cw, self.n_sta)


@dataclass(frozen=True)
class TauEstimate:
    value: float
    half_width: float
    lo: float
    hi: float
    n_samples: int


def proportion_ci(successes: int, trials: int, z: float = Z95) -> TauEstimate:
    """Normal-approximation proportion CI with Wilson bounds at p in {0, 1}."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    if 0.0 < p < 1.0:
        hw = z * math.sqrt(p * (1.0 - p) / trials)
        return TauEstimate(p, hw, max(0.0, p - hw), min(1.0, p + hw), trials)
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    hw = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    lo = 0.0 if p == 0.0 else max(0.0, center - hw)
    hi = 1.0 if p == 1.0 else min(1.0, center + hw)
    return TauEstimate(p, hw, lo, hi, trials)


def _select_nodes(outcome: SimOutcome, category: Category | None) -> np.ndarray:
    if category is None:
        return np.arange(outcome.n_nodes)
    return outcome.category_nodes(category)


def estimate_tau(outcome: SimOutcome, category: Category | None = None) -> TauEstimate | None:
    """Per-beacon transmission probability over the tagged-category nodes.

    Returns None when the category has no nodes (absent, not zero).
    """
    if outcome.n_periods < 100:
        raise ValueError("tau estimation needs at least 100 periods")
    nodes = _select_nodes(outcome, category)
    if nodes.size == 0:
        return None
    transmitted = int((outcome.outcomes[:, nodes] != int(Outcome.EXPIRED)).sum())
    return proportion_ci(transmitted, int(nodes.size) * outcome.n_periods)


@dataclass(frozen=True)
class IrtEstimate:
    pmf: dict[int, float]
    gap_count: int
    sequences_without_gaps: int

    def cdf(self) -> dict[int, float]:
        out = {}
        acc = 0.0
        for gap in sorted(self.pmf):
            acc += self.pmf[gap]
            out[gap] = acc
        return out

    def mean(self) -> float:
        return sum(gap * p for gap, p in self.pmf.items())


def estimate_irt(bit_sequences: np.ndarray) -> IrtEstimate:
    """Empirical inter-reception-time PMF from per-period bit sequences.

    bit_sequences: (n_sequences, n_periods) boolean array; gaps are index
    differences between consecutive '1's (consecutive successes -> gap 1).
    Sequences with fewer than two '1's contribute no gaps and are counted
    in the diagnostics.
    """
    bits = np.asarray(bit_sequences, dtype=bool)
    if bits.ndim != 2:
        raise ValueError("bit_sequences must be a 2-d array")
    if bits.shape[1] < 100:
        raise ValueError("IRT estimation needs sequences of at least 100 periods")
    gaps: list[np.ndarray] = []
    without = 0
    for row in bits:
        ones = np.flatnonzero(row)
        if ones.size < 2:
            without += 1
            continue
        gaps.append(np.diff(ones))
    if not gaps:
        return IrtEstimate(pmf={}, gap_count=0, sequences_without_gaps=without)
    all_gaps = np.concatenate(gaps)
    values, counts = np.unique(all_gaps, return_counts=True)
    total = int(all_gaps.size)
    pmf = {int(v): int(c) / total for v, c in zip(values, counts)}
    return IrtEstimate(pmf=pmf, gap_count=total, sequences_without_gaps=without)


def total_wait_periods(bits_row: np.ndarray) -> int:
    """Summed wasted periods over a node's per-period transmission bits.

    Each non-transmitting period waits until the node's next transmission
    (one period if the very next period transmits), censored at the end of
    the sequence.
    """
    row = np.asarray(bits_row, dtype=bool)
    n = row.shape[0]
    ones = np.flatnonzero(row)
    zeros = np.flatnonzero(~row)
    if zeros.size == 0:
        return 0
    if ones.size == 0:
        return int((n - zeros).sum())
    pos = np.searchsorted(ones, zeros, side="left")
    waits = np.where(pos < ones.size, ones[np.minimum(pos, ones.size - 1)] - zeros, n - zeros)
    return int(waits.sum())


def estimate_delay(outcome: SimOutcome, params: MacParameters, category: Category | None = None) -> float | None:
    """Mean per-packet latency.

    Transmitted packets contribute elapsed_backoff * T_slot + T_suc; an
    expired packet contributes T_ibi per wasted period, accumulated from its
    own period until the node's next transmission (censored at the end of
    the run).
    """
    nodes = _select_nodes(outcome, category)
    if nodes.size == 0:
        return None
    t_suc = success_time(params)
    total = 0.0
    for i in nodes:
        transmitted = outcome.outcomes[:, i] != int(Outcome.EXPIRED)
        elapsed = outcome.elapsed[:, i]
        total += float((elapsed[transmitted] * params.t_slot + t_suc).sum())
        total += total_wait_periods(transmitted) * params.t_ibi
    return total / (int(nodes.size) * outcome.n_periods)


def estimate_backoff_slots(outcome: SimOutcome, category: Category | None = None):
    """Mean and CI half-width of elapsed backoff slots over transmitted packets."""
    nodes = _select_nodes(outcome, category)
    if nodes.size == 0:
        return None
    sub = outcome.outcomes[:, nodes] != int(Outcome.EXPIRED)
    elapsed = outcome.elapsed[:, nodes][sub]
    if elapsed.size == 0:
        return None
    mean = float(elapsed.mean())
    hw = Z95 * float(elapsed.std(ddof=1)) / math.sqrt(elapsed.size) if elapsed.size > 1 else math.inf
    return mean, hw


@dataclass(frozen=True)
class EmpiricalEstimates:
    key: GridKey
    n_nodes: int
    n_periods: int
    tau: TauEstimate
    e_nbo_hat: float | None
    e_nbo_ci: float | None
    delay_hat: float
    r_hat: float | None
    irt: IrtEstimate


def build_estimates(
    outcome: SimOutcome,
    params: MacParameters,
    key: GridKey,
    category: Category | None = None,
) -> EmpiricalEstimates | None:
    """All empirical estimates for one tagged category of one run (None if absent)."""
    nodes = _select_nodes(outcome, category)
    if nodes.size == 0:
        return None
    tau = estimate_tau(outcome, category)
    nbo = estimate_backoff_slots(outcome, category)
    delay = estimate_delay(outcome, params, category)
    irt = estimate_irt(outcome.transmitted_bits()[nodes, :])
    r_hat = tau.value * success_time(params) / delay if delay and delay > 0 else None
    return EmpiricalEstimates(
        key=key,
        n_nodes=int(nodes.size),
        n_periods=outcome.n_periods,
        tau=tau,
        e_nbo_hat=None if nbo is None else nbo[0],
        e_nbo_ci=None if nbo is None else nbo[1],
        delay_hat=delay,
        r_hat=r_hat,
        irt=irt,
    )


@dataclass(frozen=True)
class ComparisonReport:
    key: GridKey
    rows: dict[str, tuple[float, float, float, float | None, bool | None]]
    # metric -> (analytic, empirical, abs_deviation, tolerance, passed)

    @property
    def passed(self) -> bool:
        checked = [p for (_, _, _, tol, p) in self.rows.values() if tol is not None]
        return all(checked) if checked else True

    def failures(self) -> list[str]:
        return [m for m, (_, _, _, tol, p) in self.rows.items() if tol is not None and not p]

    def to_text(self) -> str:
        lines = [f"point policy={self.key.policy} category={self.key.category} cw={self.key.cw} n_sta={self.key.n_sta}"]
        for metric, (a, e, dev, tol, p) in self.rows.items():
            status = "-" if tol is None else ("ok" if p else "FAIL")
            tol_s = "" if tol is None else f" tol={tol:g}"
            lines.append(f"  {metric}: analytic={a:.9g} empirical={e:.9g} |dev|={dev:.3g}{tol_s} [{status}]")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def compare(
    key: GridKey,
    analytic: AnalyticalResult,
    empirical: EmpiricalEstimates,
    tolerances: Mapping[str, float],
) -> ComparisonReport:
    """Deterministic per-point comparison.

    tolerances maps metric names to bounds: 'tau' is an absolute bound on
    |tau_analytic - tau_hat|; 'e_nbo', 'delay' and 'r' are relative bounds.
    Metrics without a configured tolerance are reported but not judged.
    """
    if empirical.key != key:
        raise ValueError(f"configuration mismatch: {empirical.key} vs {key}")
    rows: dict[str, tuple[float, float, float, float | None, bool | None]] = {}

    def add(name: str, a: float, e: float | None, relative: bool):
        if e is None:
            return
        dev = abs(a - e)
        tol = tolerances.get(name)
        if tol is None:
            rows[name] = (a, e, dev, None, None)
            return
        bound = tol * abs(a) if relative else tol
        rows[name] = (a, e, dev, tol, dev <= bound)

    add("tau", analytic.tau, empirical.tau.value, relative=False)
    add("e_nbo", analytic.e_nbo, empirical.e_nbo_hat, relative=True)
    add("delay", analytic.e_t, empirical.delay_hat, relative=True)
    add("r", analytic.r, empirical.r_hat, relative=True)
    return ComparisonReport(key=key, rows=rows)


def chi_square_geometric(gap_counts: Mapping[int, int], tau: float, min_expected: float = 5.0):
    """Chi-square goodness of fit of observed gap counts against Geometric(tau).

    Bins over gaps 1..K plus an open tail; adjacent bins are pooled from the
    tail end until every expected count reaches min_expected.  Returns
    (statistic, dof, p_value); a fully concentrated matching distribution
    yields statistic 0 and p-value 1.
    """
    if not (0.0 < tau <= 1.0):
        raise ValueError("tau must lie in (0, 1]")
    total = sum(gap_counts.values())
    if total == 0:
        raise ValueError("no gaps observed")
    k_max = max(gap_counts)
    observed = np.array([gap_counts.get(g, 0) for g in range(1, k_max + 1)] + [0], dtype=float)
    q = 1.0 - tau
    probs = np.array([(q ** (g - 1)) * tau for g in range(1, k_max + 1)] + [q ** k_max], dtype=float)
    expected = probs * total
    # pool from the right until all expected bins are big enough
    obs_bins: list[float] = []
    exp_bins: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed[::-1], expected[::-1]):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if obs_bins:
            obs_bins[-1] += acc_o
            exp_bins[-1] += acc_e
        else:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
    obs_arr = np.array(obs_bins[::-1])
    exp_arr = np.array(exp_bins[::-1])
    keep = exp_arr > 0
    stat = float((((obs_arr - exp_arr) ** 2)[keep] / exp_arr[keep]).sum())
    dof = max(int(keep.sum()) - 2, 1)
    if keep.sum() <= 1:
        return stat, 0, 1.0 if stat == 0.0 else 0.0
    pvalue = float(stats.chi2.sf(stat, dof))
    return stat, dof, pvalue
