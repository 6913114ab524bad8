"""Thurstone Case V scaling of the count matrix, plus rank analytics.

The model: method i beats method j with probability Phi(mu_i - mu_j), Phi the
standard normal CDF. Fitting maximizes the count-weighted log-likelihood
sum_ij C_ij * log Phi(mu_i - mu_j) under the zero-sum constraint that pins the
translation freedom. The optimizer is exact-gradient ascent on the zero-sum
subspace with a backtracking line search, which makes "the likelihood never
decreases" a checkable per-iteration invariant.

log Phi and the inverse Mills ratio psi = phi/Phi are computed directly from
erfc down to -8 and switch to an asymptotic tail expansion below that, so no
finite score difference underflows the likelihood or poisons the gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput, DisconnectedComparisonGraph
from .selection import SelectionResult
from .study import Schedule, Vote, tally

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_TAIL_CUT = -8.0

_erfc = np.vectorize(math.erfc, otypes=[np.float64])


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    return np.atleast_1d(arr), arr.ndim == 0


_TAIL_COEFFS = (
    -1.0,
    3.0,
    -15.0,
    105.0,
    -945.0,
    10395.0,
    -135135.0,
    2027025.0,
    -34459425.0,
)


def _tail_series(t: np.ndarray) -> np.ndarray:
    # Phi(-t) = phi(t)/t * (1 + sum_k (-1)^k (2k-1)!! / t^(2k)); below 1e-9
    # truncation for t >= 8 with the terms kept here
    u = 1.0 / (t * t)
    acc = np.full_like(t, _TAIL_COEFFS[-1])
    for coeff in _TAIL_COEFFS[-2::-1]:
        acc = coeff + u * acc
    return 1.0 + u * acc


def normal_cdf(x):
    """Standard normal CDF."""
    arr, scalar = _as_array(x)
    out = 0.5 * _erfc(-arr / _SQRT2)
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def log_normal_cdf(x):
    """log Phi(x), finite for every finite x."""
    arr, scalar = _as_array(x)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    main = flat >= _TAIL_CUT
    if main.any():
        out[main] = np.log(0.5 * _erfc(-flat[main] / _SQRT2))
    if (~main).any():
        t = -flat[~main]
        out[~main] = -0.5 * t * t - np.log(_SQRT_2PI * t) + np.log(_tail_series(t))
    out = out.reshape(arr.shape)
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def inverse_mills(x):
    """psi(x) = phi(x) / Phi(x), the likelihood gradient's weight function."""
    arr, scalar = _as_array(x)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    main = flat >= _TAIL_CUT
    if main.any():
        xm = flat[main]
        pdf = np.exp(-0.5 * xm * xm) / _SQRT_2PI
        out[main] = pdf / (0.5 * _erfc(-xm / _SQRT2))
    if (~main).any():
        t = -flat[~main]
        out[~main] = t / _tail_series(t)
    out = out.reshape(arr.shape)
    return float(out[0]) if scalar else out.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# maximum likelihood fit
# ---------------------------------------------------------------------------


@dataclass
class FitOptions:
    """smoothing_epsilon is added to every off-diagonal count before fitting;
    the default half pseudo-vote keeps unanimous cells from sending the MLE to
    infinity. Set it to 0 only when every observed pair has votes both ways."""

    smoothing_epsilon: float = 0.5
    tolerance: float = 1e-8
    max_iterations: int = 2000

    def __post_init__(self):
        if self.smoothing_epsilon < 0:
            raise ValueError("smoothing_epsilon must be >= 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RankingScores:
    mu: np.ndarray
    converged: bool
    final_log_likelihood: float
    iterations: int


def _validate_counts(counts, n_expected: int | None = None) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"count matrix must be square, got shape {c.shape}")
    if n_expected is not None and c.shape[0] != n_expected:
        raise ValueError(f"expected {n_expected} methods, got {c.shape[0]}")
    if not np.all(np.isfinite(c)) or (c < 0).any():
        raise ValueError("counts must be finite and nonnegative")
    if np.diagonal(c).any():
        raise ValueError("count matrix diagonal must be zero")
    return c


def log_likelihood(mu, counts) -> float:
    """sum over i != j with C_ij > 0 of C_ij * log Phi(mu_i - mu_j)."""
    c = _validate_counts(counts)
    m = np.asarray(mu, dtype=np.float64)
    if m.ndim != 1 or m.size != c.shape[0]:
        raise ValueError("mu length must match the count matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("mu must be finite")
    mask = c > 0
    if not mask.any():
        return 0.0
    diffs = m[:, np.newaxis] - m[np.newaxis, :]
    return float(np.sum(c[mask] * log_normal_cdf(diffs[mask])))


def _loglik_unchecked(mu: np.ndarray, c: np.ndarray, mask: np.ndarray) -> float:
    diffs = mu[:, np.newaxis] - mu[np.newaxis, :]
    return float(np.sum(c[mask] * log_normal_cdf(diffs[mask])))


def _gradient(mu: np.ndarray, c: np.ndarray) -> np.ndarray:
    diffs = mu[:, np.newaxis] - mu[np.newaxis, :]
    weighted = c * inverse_mills(diffs)
    return weighted.sum(axis=1) - weighted.sum(axis=0)


def _check_connected(c: np.ndarray) -> None:
    """Connectivity of the observed comparison graph (pre-smoothing counts)."""
    n = c.shape[0]
    adj = (c + c.T) > 0
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for other in np.nonzero(adj[node])[0]:
            if other not in seen:
                seen.add(int(other))
                frontier.append(int(other))
    if len(seen) != n:
        unreached = sorted(set(range(n)) - seen)
        raise DisconnectedComparisonGraph(
            f"methods {unreached} share no observed comparisons with method 0"
        )


def fit(counts, options: FitOptions | None = None) -> RankingScores:
    """Maximum-likelihood global scores mu with sum(mu) = 0.

    Gradient ascent restricted to the zero-sum subspace; backtracking keeps
    every accepted step an ascent step. Returns converged=False (with the best
    iterate) when the gradient norm never reaches the tolerance.
    """
    opt = options or FitOptions()
    c_raw = _validate_counts(counts)
    n = c_raw.shape[0]
    if n < 2:
        raise ValueError("need at least two methods to rank")
    _check_connected(c_raw)
    if opt.smoothing_epsilon > 0:
        c = c_raw + opt.smoothing_epsilon * (1.0 - np.eye(n))
    else:
        c = c_raw.copy()
    mask = c > 0

    # The negated Hessian is a graph Laplacian with edge weights below
    # C_ij + C_ji (|psi'| < 1), so steps at most 1/(2 * max weighted degree)
    # ascend even when the improvement is smaller than float noise in L.
    safe_step = 1.0 / (2.0 * float((c + c.T).sum(axis=1).max()) + 1e-12)

    mu = np.zeros(n)
    value = _loglik_unchecked(mu, c, mask)
    step = 1.0
    converged = False
    iterations = 0
    for _ in range(opt.max_iterations):
        grad = _gradient(mu, c)
        grad -= grad.mean()
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= opt.tolerance:
            converged = True
            break
        step = min(step * 2.0, 1e6)
        # improvements below float resolution of the likelihood cannot be
        # trusted, so large steps must clear a noise floor as well
        noise_floor = 1e-13 * max(1.0, abs(value))
        while step > safe_step:
            trial = mu + step * grad
            trial -= trial.mean()
            trial_value = _loglik_unchecked(trial, c, mask)
            if trial_value >= value + 1e-4 * step * gnorm * gnorm + noise_floor:
                break
            step *= 0.5
        else:
            step = safe_step
            trial = mu + step * grad
            trial -= trial.mean()
            trial_value = _loglik_unchecked(trial, c, mask)
        if trial_value < value - 1e-9 * max(1.0, abs(value)):
            raise RuntimeError("ascent invariant violated: likelihood decreased")
        mu, value = trial, trial_value
        iterations += 1

    mu = mu - mu.mean()
    return RankingScores(
        mu=mu,
        converged=converged,
        final_log_likelihood=value,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# rank analytics
# ---------------------------------------------------------------------------


def average_ranks(values) -> np.ndarray:
    """1-based ranks, ascending, ties getting the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    start = 0
    while start < v.size:
        stop = start
        while stop + 1 < v.size and v[order[stop + 1]] == v[order[start]]:
            stop += 1
        mean_rank = (start + stop) / 2.0 + 1.0
        for pos in range(start, stop + 1):
            ranks[order[pos]] = mean_rank
        start = stop + 1
    return ranks


def srcc(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        raise DegenerateInput("rank correlation undefined for a constant vector")
    return float((rx @ ry) / denom)


def ordinal_ranks(mu, tie_tolerance: float = 1e-6) -> np.ndarray:
    """Descending ranks of mu (1 = best); scores within tie_tolerance tie."""
    m = np.asarray(mu, dtype=np.float64)
    order = np.argsort(-m, kind="stable")
    grouped = np.empty(m.size, dtype=np.float64)
    # collapse near-equal scores before ranking so ties are explicit
    group_value = None
    for idx in order:
        if group_value is None or abs(m[idx] - group_value) > tie_tolerance:
            group_value = m[idx]
        grouped[idx] = group_value
    return average_ranks(-grouped)


# ---------------------------------------------------------------------------
# synthetic observers and the stability curve
# ---------------------------------------------------------------------------


def simulate_votes(
    mu_star, schedule: Schedule, subjects: int | Sequence[str], seed: int
) -> list[Vote]:
    """Votes from ideal Thurstone observers: i beats j w.p. Phi(mu_i - mu_j).

    Timestamps are synthetic and the random stream is fixed by the seed, so
    two runs produce byte-identical logs.
    """
    mu = np.asarray(mu_star, dtype=np.float64)
    if mu.ndim != 1 or mu.size != schedule.n_methods:
        raise ValueError("mu_star length must match the schedule's method count")
    if abs(float(mu.sum())) > 1e-9:
        raise ValueError("mu_star must sum to zero")
    if isinstance(subjects, int):
        if subjects < 1:
            raise ValueError("need at least one subject")
        subject_ids = [f"sim{i + 1:03d}" for i in range(subjects)]
    else:
        subject_ids = list(subjects)
    rng = np.random.default_rng(seed)
    base = datetime(2000, 1, 1, tzinfo=timezone.utc).timestamp()
    votes: list[Vote] = []
    counter = 0
    for sid in subject_ids:
        for trial in schedule.subject_order(sid):
            i, j = trial.pair
            p_i = normal_cdf(mu[i] - mu[j])
            chosen = i if rng.random() < p_i else j
            position = "left" if trial.left_method == chosen else "right"
            stamp = datetime.fromtimestamp(base + counter, tz=timezone.utc).strftime(
                "%Y-%m-%dT%H:%M:%S.%fZ"
            )
            votes.append(Vote(stamp, sid, trial.trial_id, chosen, position))
            counter += 1
    return votes


def pick_ranks(selections: Iterable[SelectionResult]) -> dict[tuple[int, int], dict[str, int]]:
    """Greedy pick rank (1-based) per candidate, per pair."""
    out: dict[tuple[int, int], dict[str, int]] = {}
    for sel in selections:
        out[sel.pair] = {
            p.candidate_id: rank for rank, p in enumerate(sel.picks, start=1)
        }
    return out


def stability_curve(
    votes: Iterable[Vote],
    schedule: Schedule,
    selections: Iterable[SelectionResult],
    k_max: int,
    options: FitOptions | None = None,
) -> list[tuple[int, float]]:
    """SRCC of each top-K ranking against the top-K_max reference ranking.

    Votes attribute to the pick rank of their trial's candidate within its
    pair; the row for K keeps only votes with rank <= K. K_max caps at the
    highest pick rank that actually received votes, and the final row compares
    the reference with itself (a 1.0 sanity value).
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    ranks = pick_ranks(selections)
    votes = list(votes)
    if not votes:
        raise ValueError("no votes to analyze")

    def vote_rank(vote: Vote) -> int:
        trial = schedule.trial_index.get(vote.trial_id)
        if trial is None:
            raise ValueError(f"vote references unknown trial {vote.trial_id!r}")
        pair_ranks = ranks.get(trial.pair)
        if pair_ranks is None or trial.candidate_id not in pair_ranks:
            raise ValueError(
                f"trial {vote.trial_id} candidate {trial.candidate_id!r} "
                f"missing from selections for pair {trial.pair}"
            )
        return pair_ranks[trial.candidate_id]

    by_rank = [vote_rank(v) for v in votes]
    effective_k = min(k_max, max(by_rank))

    def fit_top(k: int) -> np.ndarray:
        kept = [v for v, r in zip(votes, by_rank) if r <= k]
        return fit(tally(kept, schedule), options).mu

    reference = fit_top(effective_k)
    curve = []
    for k in range(1, effective_k + 1):
        mu_k = reference if k == effective_k else fit_top(k)
        curve.append((k, srcc(mu_k, reference)))
    return curve
