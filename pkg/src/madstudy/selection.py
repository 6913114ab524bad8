"""Greedy per-pair selection of the most discriminating, most diverse inputs.

For each pair of competing methods the pool is scored by a discrepancy term
(how differently the two methods treated the candidate) plus a diversity term
weighted by lambda1 (how far the candidate's content is from what was already
picked), and the top K are chosen greedily. The first pick carries no
diversity contribution. Ties break toward the smaller candidate id, so a given
pool, config, and rejection set always reproduce the same result bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import PoolExhausted, ValidationError
from .metrics import feature_distance, set_distance

_ID_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-")


def _check_name(name: str, what: str) -> None:
    if not name or not set(name) <= _ID_OK:
        raise ValidationError(f"{what} {name!r}: use [A-Za-z0-9._-] only")


def enumerate_method_pairs(n: int) -> list[tuple[int, int]]:
    """All distinct method pairs (i, j), i < j, in lexicographic order."""
    if n < 2:
        raise ValueError("need at least two methods")
    return [(i, j) for i in range(n - 1) for j in range(i + 1, n)]


@dataclass
class CandidatePool:
    """The candidate inputs plus each method's enhanced output per candidate."""

    methods: list[str]
    candidates: list[str]
    input_paths: dict[str, Path]
    output_paths: dict[str, dict[str, Path]]  # candidate -> method name -> path
    _features: dict = field(default_factory=dict, repr=False, compare=False)
    _d1: dict = field(default_factory=dict, repr=False, compare=False)
    _bounds: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.methods)) != len(self.methods) or len(self.methods) < 2:
            raise ValidationError("need at least two uniquely named methods")
        if len(set(self.candidates)) != len(self.candidates) or not self.candidates:
            raise ValidationError("candidate ids must be unique and non-empty")
        for m in self.methods:
            _check_name(m, "method")
        for cid in self.candidates:
            _check_name(cid, "candidate")
            if cid not in self.input_paths:
                raise ValidationError(f"candidate {cid!r} has no input path")
            outs = self.output_paths.get(cid, {})
            missing = [m for m in self.methods if m not in outs]
            if missing:
                raise ValidationError(
                    f"candidate {cid!r} lacks outputs for {', '.join(missing)}"
                )

    # cached, deterministic intermediates ----------------------------------

    def features(self, d2) -> dict:
        key = d2.cache_key
        if key not in self._features:
            self._features[key] = d2.features(self)
        return self._features[key]

    def d1_values(self, d1, pair: tuple[int, int]) -> dict[str, float]:
        key = (d1.cache_key, pair)
        if key not in self._d1:
            self._d1[key] = d1.candidate_distances(self, pair)
        return self._d1[key]

    def feature_distance_bounds(self, d2) -> tuple[float, float]:
        """Exact (min, max) of feature_distance over all distinct pool pairs.

        Quadratic in the pool size; computed once per extractor and cached.
        Row blocks keep memory flat and reproduce feature_distance's exact
        arithmetic.
        """
        key = d2.cache_key
        if key not in self._bounds:
            feats = self.features(d2)
            x = np.stack([feats[c].values for c in self.candidates])
            n = x.shape[0]
            if n < 2:
                self._bounds[key] = (0.0, 0.0)
            else:
                lo, hi = math.inf, -math.inf
                block = max(1, int(4e6 // max(1, n * x.shape[1])))
                for start in range(0, n, block):
                    rows = x[start : start + block]
                    d = rows[:, np.newaxis, :] - x[np.newaxis, :, :]
                    msd = np.mean(d * d, axis=2)
                    for r in range(rows.shape[0]):
                        msd[r, start + r] = math.nan  # skip self-distance
                    lo = min(lo, float(np.nanmin(msd)))
                    hi = max(hi, float(np.nanmax(msd)))
                self._bounds[key] = (lo, hi)
        return self._bounds[key]

    # manifest io ----------------------------------------------------------

    def write_manifest(self, path: str | Path) -> None:
        lines = ["candidate_id,input," + ",".join(self.methods)]
        for cid in self.candidates:
            outs = ",".join(str(self.output_paths[cid][m]) for m in self.methods)
            lines.append(f"{cid},{self.input_paths[cid]},{outs}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_manifest(cls, path: str | Path) -> "CandidatePool":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if not lines or not lines[0].startswith("candidate_id,input,"):
            raise ValidationError(f"{path}: missing pool manifest header")
        methods = [m for m in lines[0].split(",")[2:] if m]
        candidates: list[str] = []
        inputs: dict[str, Path] = {}
        outputs: dict[str, dict[str, Path]] = {}
        for ln, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                continue
            parts = raw.split(",")
            if len(parts) != 2 + len(methods):
                raise ValidationError(f"{path}:{ln}: expected {2 + len(methods)} fields")
            cid = parts[0]
            candidates.append(cid)
            inputs[cid] = Path(parts[1])
            outputs[cid] = {m: Path(p) for m, p in zip(methods, parts[2:])}
        return cls(
            methods=methods,
            candidates=candidates,
            input_paths=inputs,
            output_paths=outputs,
        )


@dataclass
class SelectionConfig:
    """Knobs of the per-pair objective: K picks, lambda1 weight, D1/D2 providers."""

    d1: object
    d2: object
    k: int = 12
    lambda1: float = 1.0
    normalize: bool = True  # min-max normalize D1 and D2 per pair over the pool

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be >= 0")


@dataclass(frozen=True)
class Pick:
    candidate_id: str
    d1_term: float
    d2_term: float
    total: float


@dataclass(frozen=True)
class SelectionResult:
    """Ordered greedy picks for one method pair, plus every rejection."""

    pair: tuple[int, int]
    picks: tuple[Pick, ...]
    rejected: tuple[tuple[str, str], ...]  # (candidate id, reason)

    def pick_ids(self) -> list[str]:
        return [p.candidate_id for p in self.picks]


class PairScorer:
    """Scores candidates for one pair; D1 values and features cached up front.

    Normalization bounds always come from the full pool, never the eligible
    subset, so excluding candidates later cannot change anyone else's score.
    """

    def __init__(self, pool: CandidatePool, pair: tuple[int, int], config: SelectionConfig):
        i, j = pair
        if not (0 <= i < j < len(pool.methods)):
            raise ValueError(f"bad method pair {pair} for {len(pool.methods)} methods")
        self.pool = pool
        self.pair = pair
        self.config = config
        self.d1_raw = pool.d1_values(config.d1, pair)
        self.features = pool.features(config.d2)
        self.aggregation = config.d2.aggregation
        if config.normalize:
            vals = [self.d1_raw[c] for c in pool.candidates]
            self._d1_lo, self._d1_hi = min(vals), max(vals)
            self._d2_lo, self._d2_hi = pool.feature_distance_bounds(config.d2)
        else:
            self._d1_lo = self._d2_lo = 0.0
            self._d1_hi = self._d2_hi = 1.0

    @staticmethod
    def _norm(value: float, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        return (value - lo) / (hi - lo)

    def d1_term(self, cid: str) -> float:
        return self._norm(self.d1_raw[cid], self._d1_lo, self._d1_hi)

    def d2_term_from_raw(self, raw: float) -> float:
        return self._norm(raw, self._d2_lo, self._d2_hi)

    def raw_set_distance(self, cid: str, selected_ids: Iterable[str]) -> float:
        return set_distance(
            self.features[cid],
            [self.features[s] for s in selected_ids],
            self.aggregation,
        )

    def score(self, cid: str, selected_ids: list[str]) -> tuple[float, float, float]:
        """(d1_term, d2_term, total) for one candidate given the current set."""
        if cid in selected_ids:
            raise ValueError(f"candidate {cid!r} is already selected")
        d1t = self.d1_term(cid)
        if not selected_ids:
            d2t = 0.0  # empty set: pick 1 is the pure discrepancy argmax
        else:
            d2t = self.d2_term_from_raw(self.raw_set_distance(cid, selected_ids))
        return d1t, d2t, d1t + self.config.lambda1 * d2t


def score_candidate(
    pool: CandidatePool,
    pair: tuple[int, int],
    candidate_id: str,
    selected_ids: list[str],
    config: SelectionConfig,
) -> tuple[float, float, float]:
    """One-off scoring of a candidate against the current selected set."""
    return PairScorer(pool, pair, config).score(candidate_id, selected_ids)


def select_top_k(
    pool: CandidatePool,
    pair: tuple[int, int],
    config: SelectionConfig,
    screen: Callable[[str], bool] | None = None,
    rejected: Mapping[str, str] | Iterable[str] | None = None,
) -> SelectionResult:
    """Greedy top-K selection for one method pair.

    `screen` is an eligibility predicate (False rejects); `rejected` lists
    ids excluded outright, optionally mapped to reasons. Every exclusion is
    recorded in the result. Raises PoolExhausted when fewer than K candidates
    survive.
    """
    if isinstance(rejected, Mapping):
        reject_reasons = dict(rejected)
    elif rejected is not None:
        reject_reasons = {cid: "rejected" for cid in rejected}
    else:
        reject_reasons = {}
    unknown = [cid for cid in reject_reasons if cid not in pool.input_paths]
    if unknown:
        raise ValidationError(f"rejected ids not in pool: {', '.join(unknown)}")

    rejections: list[tuple[str, str]] = []
    eligible: list[str] = []
    for cid in pool.candidates:
        if cid in reject_reasons:
            rejections.append((cid, reject_reasons[cid]))
        elif screen is not None and not screen(cid):
            rejections.append((cid, "screened"))
        else:
            eligible.append(cid)
    if len(eligible) < config.k:
        raise PoolExhausted(
            f"pair {pair}: {len(eligible)} eligible candidates, need {config.k}"
        )

    scorer = PairScorer(pool, pair, config)
    remaining = list(eligible)
    selected: list[str] = []
    picks: list[Pick] = []
    running_min: dict[str, float] = {}

    for _ in range(config.k):
        best_cid = None
        best = (0.0, 0.0, -math.inf)
        for cid in remaining:
            d1t = scorer.d1_term(cid)
            if not selected:
                d2t = 0.0
            elif scorer.aggregation == "min":
                d2t = scorer.d2_term_from_raw(running_min[cid])
            else:
                d2t = scorer.d2_term_from_raw(scorer.raw_set_distance(cid, selected))
            total = d1t + config.lambda1 * d2t
            if (
                best_cid is None
                or total > best[2]
                or (total == best[2] and cid < best_cid)
            ):
                best_cid = cid
                best = (d1t, d2t, total)
        picks.append(Pick(best_cid, *best))
        selected.append(best_cid)
        remaining.remove(best_cid)
        if scorer.aggregation == "min":
            newest = scorer.features[best_cid]
            for cid in remaining:
                d = feature_distance(scorer.features[cid], newest)
                prev = running_min.get(cid, math.inf)
                running_min[cid] = d if d < prev else prev

    return SelectionResult(pair=pair, picks=tuple(picks), rejected=tuple(rejections))


def apply_rejections(
    pool: CandidatePool,
    pair: tuple[int, int],
    config: SelectionConfig,
    rejected_ids: Mapping[str, str] | Iterable[str],
    screen: Callable[[str], bool] | None = None,
) -> SelectionResult:
    """Rerun greedy selection with the given candidates excluded.

    The greedy recurrence is deterministic, so picks made before any rejected
    candidate would have been chosen keep their positions automatically.
    """
    return select_top_k(pool, pair, config, screen=screen, rejected=rejected_ids)


# ---------------------------------------------------------------------------
# selection result files
# ---------------------------------------------------------------------------


def write_selection(result: SelectionResult, path: str | Path) -> None:
    lines = [f"pair,{result.pair[0]},{result.pair[1]}"]
    for rank, p in enumerate(result.picks, start=1):
        lines.append(
            f"pick,{rank},{p.candidate_id},{p.d1_term!r},{p.d2_term!r},{p.total!r}"
        )
    for cid, reason in result.rejected:
        lines.append(f"reject,{cid},{reason}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_selection(path: str | Path) -> SelectionResult:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or not lines[0].startswith("pair,"):
        raise ValidationError(f"{path}: missing `pair,i,j` header")
    head = lines[0].split(",")
    if len(head) != 3:
        raise ValidationError(f"{path}: malformed header {lines[0]!r}")
    try:
        pair = (int(head[1]), int(head[2]))
    except ValueError as exc:
        raise ValidationError(f"{path}: non-integer pair indices") from exc
    picks: list[Pick] = []
    rejected: list[tuple[str, str]] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        if raw.startswith("pick,"):
            parts = raw.split(",")
            if len(parts) != 6:
                raise ValidationError(f"{path}:{ln}: malformed pick line")
            if int(parts[1]) != len(picks) + 1:
                raise ValidationError(f"{path}:{ln}: picks out of order")
            picks.append(
                Pick(parts[2], float(parts[3]), float(parts[4]), float(parts[5]))
            )
        elif raw.startswith("reject,"):
            parts = raw.split(",", 2)
            if len(parts) != 3:
                raise ValidationError(f"{path}:{ln}: malformed reject line")
            rejected.append((parts[1], parts[2]))
        else:
            raise ValidationError(f"{path}:{ln}: unknown record {raw[:20]!r}")
    return SelectionResult(pair=pair, picks=tuple(picks), rejected=tuple(rejected))
