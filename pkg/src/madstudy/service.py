"""Study orchestration: on-disk state, config file, and the local rater service.

A study lives in one directory: config, pool manifest, per-pair selection
files, schedule, append-only vote log, and reports. The phase machine is
draft -> selecting -> open -> closed; votes are accepted only while open, and
ranking artifacts require closed (or an explicit preliminary override).

The HTTP server exposes only blinded payloads to subjects: trials reference
opaque per-trial image tokens, never method names or file paths.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import urllib.parse
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import ranking, selection, study
from .errors import (
    DuplicateVote,
    EmptyPool,
    InvalidChoice,
    MadstudyError,
    MissingOutputs,
    PhaseError,
    UnknownSubject,
    UnknownTrial,
    ValidationError,
)
from .metrics import (
    ExternalFeaturesD2,
    ExternalMatrixD1,
    MseD1,
    SsimD1,
    ThumbnailD2,
)

PHASES = ("draft", "selecting", "open", "closed")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_STATIC_OK = re.compile(r"^[A-Za-z0-9._-]+$")
_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}

_FALLBACK_INDEX = """<!doctype html>
<html><head><meta charset="utf-8"><title>madstudy</title></head>
<body><h1>madstudy service is running</h1>
<p>The rater interface bundle is not installed. Build the frontend package
and copy its dist files next to this service's ui directory.</p>
</body></html>
"""


@dataclass
class StudyConfig:
    """Plain key=value study configuration."""

    study_id: str = "study"
    k: int = 12
    lambda1: float = 1.0
    d1: str = "ssim"
    d2: str = "builtin"
    aggregation: str = "min"
    mismatch: str = "error"
    seed: int = 0
    normalize: str = "minmax"
    smoothing_epsilon: float = 0.5

    _KEYS = (
        "study_id",
        "k",
        "lambda1",
        "d1",
        "d2",
        "aggregation",
        "mismatch",
        "seed",
        "normalize",
        "smoothing_epsilon",
    )

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.lambda1 < 0:
            raise ValidationError("lambda1 must be >= 0")
        if self.aggregation not in ("min", "mean"):
            raise ValidationError(f"aggregation must be min or mean, got {self.aggregation!r}")
        if self.mismatch not in ("error", "center-crop"):
            raise ValidationError(f"mismatch must be error or center-crop")
        if self.normalize not in ("minmax", "raw"):
            raise ValidationError("normalize must be minmax or raw")
        if not (self.d1 in ("mse", "ssim") or self.d1.startswith("external:")):
            raise ValidationError(f"d1 must be mse, ssim, or external:<dir>")
        if not (self.d2 == "builtin" or self.d2.startswith("external:")):
            raise ValidationError(f"d2 must be builtin or external:<manifest>")

    @classmethod
    def parse(cls, path: str | Path) -> "StudyConfig":
        values = {}
        for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{ln}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in cls._KEYS:
                raise ValidationError(f"{path}:{ln}: unknown key {key!r}")
            values[key] = value.strip()
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "StudyConfig":
        kwargs = {}
        for key, value in values.items():
            if key not in cls._KEYS:
                raise ValidationError(f"unknown config key {key!r}")
            if key in ("k", "seed"):
                kwargs[key] = int(value)
            elif key in ("lambda1", "smoothing_epsilon"):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def write(self, path: str | Path) -> None:
        lines = [f"{key}={getattr(self, key)}" for key in self._KEYS]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def build_d1(self):
        if self.d1 == "mse":
            return MseD1(mismatch=self.mismatch)
        if self.d1 == "ssim":
            return SsimD1(mismatch=self.mismatch)
        return ExternalMatrixD1(self.d1.split(":", 1)[1])

    def build_d2(self):
        if self.d2 == "builtin":
            return ThumbnailD2(aggregation=self.aggregation)
        return ExternalFeaturesD2(self.d2.split(":", 1)[1], aggregation=self.aggregation)

    def selection_config(self) -> selection.SelectionConfig:
        return selection.SelectionConfig(
            d1=self.build_d1(),
            d2=self.build_d2(),
            k=self.k,
            lambda1=self.lambda1,
            normalize=self.normalize == "minmax",
        )

    def fit_options(self) -> ranking.FitOptions:
        return ranking.FitOptions(smoothing_epsilon=self.smoothing_epsilon)


class StudyState:
    """Paths and phase of one study directory."""

    def __init__(self, root: str | Path, config: StudyConfig, phase: str = "draft"):
        self.root = Path(root)
        self.config = config
        if phase not in PHASES:
            raise ValidationError(f"unknown phase {phase!r}")
        self.phase = phase

    # layout ----------------------------------------------------------------

    @property
    def config_path(self) -> Path:
        return self.root / "config.txt"

    @property
    def state_path(self) -> Path:
        return self.root / "state.txt"

    @property
    def pool_path(self) -> Path:
        return self.root / "pool.txt"

    @property
    def selections_dir(self) -> Path:
        return self.root / "selections"

    @property
    def schedule_path(self) -> Path:
        return self.root / "schedule.txt"

    @property
    def votes_path(self) -> Path:
        return self.root / "votes.log"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    # lifecycle ---------------------------------------------------------------

    @classmethod
    def create(cls, root: str | Path, config: StudyConfig) -> "StudyState":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        state = cls(root, config, "draft")
        config.write(state.config_path)
        state.save()
        return state

    @classmethod
    def load(cls, root: str | Path) -> "StudyState":
        root = Path(root)
        if not (root / "config.txt").exists():
            raise ValidationError(f"{root}: not a study directory (run init first)")
        config = StudyConfig.parse(root / "config.txt")
        phase = "draft"
        state_file = root / "state.txt"
        if state_file.exists():
            for raw in state_file.read_text(encoding="utf-8").split("\n"):
                if raw.startswith("phase="):
                    phase = raw.partition("=")[2].strip()
        return cls(root, config, phase)

    def save(self) -> None:
        self.state_path.write_text(f"phase={self.phase}\n", encoding="utf-8")

    def reload_phase(self) -> str:
        """Re-read the phase from disk; another process may have advanced it."""
        if self.state_path.exists():
            for raw in self.state_path.read_text(encoding="utf-8").split("\n"):
                if raw.startswith("phase="):
                    self.phase = raw.partition("=")[2].strip()
        return self.phase

    def set_phase(self, phase: str) -> None:
        if phase not in PHASES:
            raise ValidationError(f"unknown phase {phase!r}")
        self.phase = phase
        self.save()

    def require_phase(self, *allowed: str) -> None:
        if self.phase not in allowed:
            raise PhaseError(
                f"study is {self.phase}; this operation needs phase "
                f"{' or '.join(allowed)}"
            )

    # loading artifacts ------------------------------------------------------

    def load_pool(self) -> selection.CandidatePool:
        if not self.pool_path.exists():
            raise ValidationError("no pool manifest; run ingest first")
        return selection.CandidatePool.from_manifest(self.pool_path)

    def selection_paths(self) -> list[Path]:
        return sorted(self.selections_dir.glob("pair_*.txt"))

    def load_selections(self) -> list[selection.SelectionResult]:
        paths = self.selection_paths()
        if not paths:
            raise ValidationError("no selection files; run select first")
        return [selection.read_selection(p) for p in paths]

    def load_schedule(self) -> study.Schedule:
        if not self.schedule_path.exists():
            raise ValidationError("no schedule; run schedule first")
        return study.Schedule.read(self.schedule_path)

    def open_vote_log(self) -> study.VoteLog:
        return study.VoteLog(self.votes_path)


# ---------------------------------------------------------------------------
# pipeline commands
# ---------------------------------------------------------------------------


def ingest_pool(pool_dir: str | Path, methods_file: str | Path) -> selection.CandidatePool:
    """Build a pool from `<pool_dir>/inputs/*` plus one output dir per method.

    Every input must have a same-named output under each method directory;
    offenders are reported together rather than one at a time.
    """
    pool_dir = Path(pool_dir)
    methods = [
        line.strip()
        for line in Path(methods_file).read_text(encoding="utf-8").split("\n")
        if line.strip() and not line.startswith("#")
    ]
    if len(methods) < 2:
        raise ValidationError("methods manifest must list at least two methods")
    inputs_dir = pool_dir / "inputs"
    if not inputs_dir.is_dir():
        raise EmptyPool(f"{inputs_dir}: no inputs directory")
    input_files = sorted(
        p for p in inputs_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not input_files:
        raise EmptyPool(f"{inputs_dir}: no PNG or JPEG inputs")

    candidates = []
    input_paths = {}
    output_paths = {}
    missing = []
    for path in input_files:
        cid = path.stem
        outs = {}
        for method in methods:
            out = pool_dir / method / path.name
            if not out.exists():
                missing.append(f"{cid} ({method})")
            outs[method] = out
        candidates.append(cid)
        input_paths[cid] = path
        output_paths[cid] = outs
    if missing:
        raise MissingOutputs("missing enhanced outputs: " + ", ".join(missing))
    return selection.CandidatePool(
        methods=methods,
        candidates=candidates,
        input_paths=input_paths,
        output_paths=output_paths,
    )


def run_ingest(state: StudyState, pool_dir, methods_file) -> selection.CandidatePool:
    state.require_phase("draft")
    pool = ingest_pool(pool_dir, methods_file)
    pool.write_manifest(state.pool_path)
    return pool


def load_rejections(path: str | Path) -> dict[str, str]:
    """Rejection list: `candidate_id,free-text reason` lines."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cid, _, reason = line.partition(",")
        if not cid:
            raise ValidationError(f"{path}:{ln}: missing candidate id")
        out[cid] = reason.strip() or "rejected"
    return out


def run_select(state: StudyState, rejections: dict[str, str] | None = None) -> list[Path]:
    state.require_phase("draft", "selecting")
    pool = state.load_pool()
    config = state.config.selection_config()
    state.set_phase("selecting")
    state.selections_dir.mkdir(exist_ok=True)
    written = []
    summary = ["pair_i,pair_j,file,picks"]
    for pair in selection.enumerate_method_pairs(len(pool.methods)):
        result = selection.select_top_k(pool, pair, config, rejected=rejections or {})
        path = state.selections_dir / f"pair_{pair[0]:03d}_{pair[1]:03d}.txt"
        selection.write_selection(result, path)
        written.append(path)
        summary.append(f"{pair[0]},{pair[1]},{path.name},{len(result.picks)}")
    (state.selections_dir / "summary.txt").write_text(
        "\n".join(summary) + "\n", encoding="utf-8"
    )
    return written


def run_schedule(state: StudyState) -> study.Schedule:
    state.require_phase("selecting")
    selections = state.load_selections()
    sched = study.build_schedule(
        selections, seed=state.config.seed, study_id=state.config.study_id
    )
    sched.write(state.schedule_path)
    state.set_phase("open")
    return sched


def run_close(state: StudyState) -> None:
    state.require_phase("open")
    state.set_phase("closed")


def run_simulate(state: StudyState, mu_star, subjects: int, seed: int) -> int:
    state.require_phase("open")
    sched = state.load_schedule()
    votes = ranking.simulate_votes(mu_star, sched, subjects, seed)
    with state.open_vote_log() as log:
        for vote in votes:
            study.record_vote(sched, log, vote)
    return len(votes)


def _load_votes(state: StudyState) -> list[study.Vote]:
    if not state.votes_path.exists():
        return []
    return study.read_vote_log(state.votes_path)


def run_tally(state: StudyState, preliminary: bool = False) -> np.ndarray:
    if not preliminary:
        state.require_phase("closed")
    sched = state.load_schedule()
    counts = study.tally(_load_votes(state), sched)
    state.reports_dir.mkdir(exist_ok=True)
    np.savetxt(state.reports_dir / "counts.txt", counts, fmt="%d")
    return counts


def run_rank(state: StudyState, preliminary: bool = False) -> ranking.RankingScores:
    if not preliminary:
        state.require_phase("closed")
    sched = state.load_schedule()
    pool = state.load_pool()
    votes = _load_votes(state)
    counts = study.tally(votes, sched)
    scores = ranking.fit(counts, state.config.fit_options())
    ranks = ranking.ordinal_ranks(scores.mu)
    wins = counts.sum(axis=1)
    losses = counts.sum(axis=0)
    state.reports_dir.mkdir(exist_ok=True)
    lines = [
        f"converged={str(scores.converged).lower()}",
        f"iterations={scores.iterations}",
        f"log_likelihood={scores.final_log_likelihood!r}",
        f"smoothing_epsilon={state.config.smoothing_epsilon!r}",
        f"total_votes={int(counts.sum())}",
        "method,mu,rank,wins,losses",
    ]
    for idx, name in enumerate(pool.methods):
        lines.append(
            f"{name},{scores.mu[idx]!r},{ranks[idx]:g},{int(wins[idx])},{int(losses[idx])}"
        )
    (state.reports_dir / "ranking.txt").write_text("\n".join(lines) + "\n", "utf-8")
    return scores


def run_report(state: StudyState, preliminary: bool = False) -> dict:
    """Write count matrix, ranking report, and the stability curve."""
    counts = run_tally(state, preliminary)
    scores = run_rank(state, preliminary)
    sched = state.load_schedule()
    votes = _load_votes(state)
    selections = state.load_selections()
    artifacts = {"counts": counts, "scores": scores}
    if votes and state.config.k >= 2:
        curve = ranking.stability_curve(
            votes, sched, selections, state.config.k, state.config.fit_options()
        )
        lines = ["K,srcc"] + [f"{k},{value!r}" for k, value in curve]
        (state.reports_dir / "stability.txt").write_text(
            "\n".join(lines) + "\n", "utf-8"
        )
        artifacts["stability"] = curve
    return artifacts


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------


def _image_token(study_id: str, trial_id: str, side: str) -> str:
    digest = hashlib.sha256(f"{study_id}|{trial_id}|{side}".encode("utf-8"))
    return digest.hexdigest()[:16]


class StudyServer:
    """Single-process rater service over the stdlib threading HTTP server."""

    def __init__(
        self,
        state: StudyState,
        address: str = "127.0.0.1",
        port: int = 8765,
        ui_dir: str | Path | None = None,
    ):
        state.require_phase("open")
        self.state = state
        self.schedule = state.load_schedule()
        pool = state.load_pool()
        self.total = len(self.schedule)
        self.log = state.open_vote_log()
        self.subjects: set[str] = {v.subject_id for v in self.log.votes()}
        self._subjects_lock = threading.Lock()

        # opaque per-trial tokens; file paths and method names stay server-side
        self.images: dict[str, tuple[Path, str]] = {}
        self.trial_urls: dict[str, dict[str, str]] = {}
        for trial in self.schedule.trials:
            urls = {}
            for side, method_idx in (
                ("left", trial.left_method),
                ("right", trial.right_method),
            ):
                token = _image_token(self.schedule.study_id, trial.trial_id, side)
                path = pool.output_paths[trial.candidate_id][pool.methods[method_idx]]
                media = _MEDIA_TYPES.get(path.suffix.lower(), "application/octet-stream")
                self.images[token] = (path, media)
                urls[side] = f"/images/{token}"
            self.trial_urls[trial.trial_id] = urls

        if ui_dir is not None:
            self.ui_dir = Path(ui_dir)
        else:
            self.ui_dir = Path(__file__).parent / "ui"

        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((address, port), handler)

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def address(self) -> str:
        return self.httpd.server_address[0]

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.log.close()

    # request logic ----------------------------------------------------------

    def next_payload(self, subject_id: str, after: str | None = None) -> dict:
        """Next unvoted trial; `after` peeks past one trial so the UI can
        preload the upcoming pair without recording anything."""
        study.check_subject_id(subject_id)
        with self._subjects_lock:
            self.subjects.add(subject_id)
        done = sum(1 for s, _ in self.log._seen if s == subject_id)
        trial = None
        for candidate in self.schedule.subject_order(subject_id):
            if self.log.has(subject_id, candidate.trial_id):
                continue
            if after is not None and candidate.trial_id == after:
                continue
            trial = candidate
            break
        if trial is None:
            return {"complete": True, "done": done, "total": self.total}
        urls = self.trial_urls[trial.trial_id]
        return {
            "trial_id": trial.trial_id,
            "left": urls["left"],
            "right": urls["right"],
            "done": done,
            "total": self.total,
        }

    def vote(self, subject_id: str, trial_id: str, position: str) -> dict:
        self.state.reload_phase()
        self.state.require_phase("open")
        study.check_subject_id(subject_id)
        trial = self.schedule.trial_index.get(trial_id)
        if trial is None:
            raise UnknownTrial(f"no trial {trial_id!r}")
        if position not in ("left", "right"):
            raise InvalidChoice(f"position must be left or right, got {position!r}")
        chosen = trial.left_method if position == "left" else trial.right_method
        vote = study.Vote(
            timestamp=study.utc_timestamp(),
            subject_id=subject_id,
            trial_id=trial_id,
            chosen_method=chosen,
            position=position,
        )
        study.record_vote(self.schedule, self.log, vote)
        done = sum(1 for s, _ in self.log._seen if s == subject_id)
        return {"recorded": True, "done": done, "total": self.total}

    def progress_payload(self) -> dict:
        per_subject = {}
        votes = self.log.votes()
        with self._subjects_lock:
            known = set(self.subjects)
        for vote in votes:
            known.add(vote.subject_id)
        for sid in sorted(known):
            per_subject[sid] = sum(1 for v in votes if v.subject_id == sid)
        return {
            "total": self.total,
            "subjects": [
                {"subject_id": sid, "done": done, "total": self.total}
                for sid, done in per_subject.items()
            ],
        }


def _make_handler(app: StudyServer):
    class Handler(BaseHTTPRequestHandler):
        server_version = "madstudy"
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # keep test output clean
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_bytes(self, status: int, body: bytes, media: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", media)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            path, _, query = self.path.partition("?")
            m = re.match(r"^/api/session/([^/]+)/next$", path)
            if m:
                params = urllib.parse.parse_qs(query)
                after = params.get("after", [None])[0]
                try:
                    self._send_json(200, app.next_payload(m.group(1), after=after))
                except UnknownSubject as exc:
                    self._send_json(404, {"error": str(exc)})
                return
            if path == "/api/progress":
                self._send_json(200, app.progress_payload())
                return
            m = re.match(r"^/images/([0-9a-f]{16})$", path)
            if m:
                entry = app.images.get(m.group(1))
                if entry is None:
                    self._send_json(404, {"error": "unknown image"})
                    return
                file_path, media = entry
                try:
                    body = file_path.read_bytes()
                except OSError:
                    self._send_json(404, {"error": "image unavailable"})
                    return
                self._send_bytes(200, body, media)
                return
            if path == "/":
                index = app.ui_dir / "index.html"
                if index.exists():
                    self._send_bytes(200, index.read_bytes(), "text/html; charset=utf-8")
                else:
                    self._send_bytes(
                        200, _FALLBACK_INDEX.encode("utf-8"), "text/html; charset=utf-8"
                    )
                return
            name = path.lstrip("/")
            if _STATIC_OK.match(name):
                asset = app.ui_dir / name
                if asset.is_file():
                    media = {
                        ".html": "text/html; charset=utf-8",
                        ".js": "text/javascript; charset=utf-8",
                        ".css": "text/css; charset=utf-8",
                    }.get(asset.suffix, "application/octet-stream")
                    self._send_bytes(200, asset.read_bytes(), media)
                    return
            self._send_json(404, {"error": "not found"})

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            m = re.match(r"^/api/session/([^/]+)/vote$", path)
            if not m:
                self._send_json(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                trial_id = payload["trial_id"]
                position = payload["position"]
            except (ValueError, KeyError, TypeError):
                self._send_json(400, {"error": "body must be JSON with trial_id and position"})
                return
            try:
                self._send_json(200, app.vote(m.group(1), str(trial_id), str(position)))
            except DuplicateVote as exc:
                self._send_json(409, {"error": str(exc)})
            except (UnknownTrial, UnknownSubject) as exc:
                self._send_json(404, {"error": str(exc)})
            except (InvalidChoice, MadstudyError) as exc:
                self._send_json(400, {"error": str(exc)})

    return Handler
