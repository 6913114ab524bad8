"""Two-alternative forced-choice study bookkeeping.

Selections become a randomized trial schedule; votes land in an append-only,
fsync-before-acknowledge log; the log tallies into the N x N count matrix
whose cell (i, j) counts votes for method i over method j. Left/right sides
are counterbalanced per pair (alternating from a seeded start) rather than
coin-flipped, and each subject gets their own deterministic presentation
order derived from the study seed and their identifier.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CorruptLog,
    DuplicateVote,
    IncompleteSelections,
    InvalidChoice,
    UnknownSubject,
    UnknownTrial,
    ValidationError,
)
from .selection import SelectionResult, enumerate_method_pairs

_SUBJECT_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
_POSITIONS = ("left", "right")


@dataclass(frozen=True)
class Trial:
    """One 2AFC presentation: a candidate's two enhanced outputs, sides fixed."""

    trial_id: str
    pair: tuple[int, int]  # (i, j), i < j
    candidate_id: str
    left_method: int
    right_method: int

    def __post_init__(self):
        if {self.left_method, self.right_method} != set(self.pair):
            raise ValidationError(
                f"trial {self.trial_id}: sides {self.left_method}/{self.right_method} "
                f"must be a permutation of pair {self.pair}"
            )


@dataclass(frozen=True)
class Vote:
    timestamp: str
    subject_id: str
    trial_id: str
    chosen_method: int
    position: str  # which side the subject clicked

    def __post_init__(self):
        if self.position not in _POSITIONS:
            raise ValidationError(f"position must be left or right, got {self.position!r}")


def check_subject_id(subject_id: str) -> str:
    if not _SUBJECT_RE.match(subject_id or ""):
        raise UnknownSubject(
            f"subject id {subject_id!r} invalid: use 1-64 chars of [A-Za-z0-9_-]"
        )
    return subject_id


class Schedule:
    """The full trial list plus per-subject deterministic presentation orders."""

    def __init__(self, study_id: str, seed: int, n_methods: int, trials: Sequence[Trial]):
        self.study_id = study_id
        self.seed = int(seed)
        self.n_methods = int(n_methods)
        self.trials = list(trials)
        self.trial_index = {t.trial_id: t for t in self.trials}
        if len(self.trial_index) != len(self.trials):
            raise ValidationError("trial ids must be unique")

    def __len__(self) -> int:
        return len(self.trials)

    def subject_order(self, subject_id: str) -> list[Trial]:
        """This subject's presentation order; stable across runs and platforms."""
        check_subject_id(subject_id)
        digest = hashlib.sha256(
            f"{self.study_id}:{self.seed}:{subject_id}".encode("utf-8")
        ).digest()
        words = np.frombuffer(digest[:16], dtype=np.uint32)
        rng = np.random.default_rng(np.random.SeedSequence(words.tolist()))
        perm = rng.permutation(len(self.trials))
        return [self.trials[i] for i in perm]

    # schedule file --------------------------------------------------------

    def write(self, path: str | Path) -> None:
        lines = [
            f"study_id={self.study_id}",
            f"seed={self.seed}",
            f"n_methods={self.n_methods}",
            "trial_id,pair_i,pair_j,candidate_id,left_method,right_method",
        ]
        for t in self.trials:
            lines.append(
                f"{t.trial_id},{t.pair[0]},{t.pair[1]},{t.candidate_id},"
                f"{t.left_method},{t.right_method}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "Schedule":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        meta = {}
        body_start = 0
        for idx, raw in enumerate(lines):
            if "=" in raw and not raw.startswith("trial_id"):
                key, _, value = raw.partition("=")
                meta[key] = value
            elif raw.startswith("trial_id,"):
                body_start = idx + 1
                break
            else:
                raise ValidationError(f"{path}:{idx + 1}: unexpected line {raw!r}")
        try:
            study_id = meta["study_id"]
            seed = int(meta["seed"])
            n_methods = int(meta["n_methods"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: bad schedule metadata") from exc
        trials = []
        for ln, raw in enumerate(lines[body_start:], start=body_start + 1):
            if not raw.strip():
                continue
            parts = raw.split(",")
            if len(parts) != 6:
                raise ValidationError(f"{path}:{ln}: expected 6 fields")
            trials.append(
                Trial(
                    trial_id=parts[0],
                    pair=(int(parts[1]), int(parts[2])),
                    candidate_id=parts[3],
                    left_method=int(parts[4]),
                    right_method=int(parts[5]),
                )
            )
        return cls(study_id=study_id, seed=seed, n_methods=n_methods, trials=trials)


def build_schedule(
    selections: Iterable[SelectionResult], seed: int, study_id: str = "study"
) -> Schedule:
    """One trial per (pair, pick), sides counterbalanced within each pair."""
    by_pair = {}
    for sel in selections:
        if sel.pair in by_pair:
            raise IncompleteSelections(f"duplicate selection for pair {sel.pair}")
        by_pair[sel.pair] = sel
    if not by_pair:
        raise IncompleteSelections("no selections given")
    n = max(j for _, j in by_pair) + 1
    expected = enumerate_method_pairs(n)
    missing = [p for p in expected if p not in by_pair]
    if missing:
        raise IncompleteSelections(f"missing selections for pairs {missing}")
    k_values = {len(by_pair[p].picks) for p in expected}
    if len(k_values) != 1 or 0 in k_values:
        raise IncompleteSelections(f"pairs have unequal pick counts {sorted(k_values)}")

    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    counter = 0
    for pair in expected:
        start = int(rng.integers(0, 2))
        i, j = pair
        for rank, pick in enumerate(by_pair[pair].picks):
            left, right = (i, j) if (start + rank) % 2 == 0 else (j, i)
            trials.append(
                Trial(
                    trial_id=f"t{counter:05d}",
                    pair=pair,
                    candidate_id=pick.candidate_id,
                    left_method=left,
                    right_method=right,
                )
            )
            counter += 1
    return Schedule(study_id=study_id, seed=seed, n_methods=n, trials=trials)


# ---------------------------------------------------------------------------
# vote log
# ---------------------------------------------------------------------------


def format_vote_line(vote: Vote) -> str:
    return (
        f"{vote.timestamp},{vote.subject_id},{vote.trial_id},"
        f"{vote.chosen_method},{vote.position}"
    )


def parse_vote_line(raw: str, line_number: int) -> Vote:
    parts = raw.split(",")
    if len(parts) != 5:
        raise CorruptLog(f"line {line_number}: expected 5 fields, got {len(parts)}")
    try:
        chosen = int(parts[3])
    except ValueError as exc:
        raise CorruptLog(f"line {line_number}: bad method index {parts[3]!r}") from exc
    if parts[4] not in _POSITIONS:
        raise CorruptLog(f"line {line_number}: bad position {parts[4]!r}")
    return Vote(
        timestamp=parts[0],
        subject_id=parts[1],
        trial_id=parts[2],
        chosen_method=chosen,
        position=parts[4],
    )


def read_vote_log(path: str | Path) -> list[Vote]:
    votes = []
    text = Path(path).read_text(encoding="utf-8")
    for ln, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        votes.append(parse_vote_line(raw, ln))
    return votes


class VoteLog:
    """Append-only vote store: a vote is on disk (fsync) before it is acknowledged.

    Appends are serialized through a single lock so the file is a total order;
    reopening after a crash replays whatever was acknowledged.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._votes: list[Vote] = []
        self._seen: set[tuple[str, str]] = set()
        if self.path.exists():
            for vote in read_vote_log(self.path):
                self._remember(vote)
        self._fh = open(self.path, "a", encoding="utf-8", newline="\n")
        self._lock = threading.Lock()

    def _remember(self, vote: Vote) -> None:
        key = (vote.subject_id, vote.trial_id)
        if key in self._seen:
            raise CorruptLog(
                f"duplicate vote for subject {vote.subject_id!r} "
                f"trial {vote.trial_id!r} in persisted log"
            )
        self._seen.add(key)
        self._votes.append(vote)

    def has(self, subject_id: str, trial_id: str) -> bool:
        return (subject_id, trial_id) in self._seen

    def append(self, vote: Vote) -> None:
        with self._lock:
            key = (vote.subject_id, vote.trial_id)
            if key in self._seen:
                raise DuplicateVote(
                    f"subject {vote.subject_id!r} already voted on {vote.trial_id!r}"
                )
            self._fh.write(format_vote_line(vote) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._seen.add(key)
            self._votes.append(vote)

    def votes(self) -> list[Vote]:
        with self._lock:
            return list(self._votes)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def next_trial(schedule: Schedule, votes: Iterable[Vote] | VoteLog, subject_id: str):
    """First trial in this subject's order without their vote; None when done."""
    check_subject_id(subject_id)
    if isinstance(votes, VoteLog):
        voted = {t for s, t in votes._seen if s == subject_id}
    else:
        voted = {v.trial_id for v in votes if v.subject_id == subject_id}
    for trial in schedule.subject_order(subject_id):
        if trial.trial_id not in voted:
            return trial
    return None


def record_vote(schedule: Schedule, log: VoteLog, vote: Vote) -> None:
    """Validate a vote against the schedule, then durably append it."""
    check_subject_id(vote.subject_id)
    trial = schedule.trial_index.get(vote.trial_id)
    if trial is None:
        raise UnknownTrial(f"no trial {vote.trial_id!r} in this study")
    if vote.chosen_method not in trial.pair:
        raise InvalidChoice(
            f"method {vote.chosen_method} is not in trial {vote.trial_id}'s pair {trial.pair}"
        )
    side = "left" if trial.left_method == vote.chosen_method else "right"
    if vote.position != side:
        raise InvalidChoice(
            f"trial {vote.trial_id}: method {vote.chosen_method} was shown on the {side}"
        )
    log.append(vote)


def tally(votes: Iterable[Vote], schedule: Schedule) -> np.ndarray:
    """Count matrix C: C[i, j] = votes choosing method i in trials pairing i and j."""
    n = schedule.n_methods
    counts = np.zeros((n, n), dtype=np.int64)
    for vote in votes:
        trial = schedule.trial_index.get(vote.trial_id)
        if trial is None:
            raise UnknownTrial(f"vote references unknown trial {vote.trial_id!r}")
        if vote.chosen_method not in trial.pair:
            raise InvalidChoice(
                f"vote for {vote.trial_id} names method {vote.chosen_method} "
                f"outside pair {trial.pair}"
            )
        winner = vote.chosen_method
        loser = trial.pair[0] if winner == trial.pair[1] else trial.pair[1]
        counts[winner, loser] += 1
    return counts
