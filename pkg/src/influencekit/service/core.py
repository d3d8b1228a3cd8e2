"""Service state: profiles, the event fold, queueing, leases, and worker quality."""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from scipy.stats import rankdata

from ..ranking import ComparisonRecord, NoisyBTModel, bt_fit
from ..util import stable_hash64
from .eventlog import EventLog, replay_events

DEFAULT_QUESTIONS = (
    "Which user is the proxy user most likely to retweet?",
    "Who will the proxy user be more socially influenced by?",
    "Which user would sway the proxy users opinion more?",
)

QUALIFYING_GAP = 0.2
QUALIFYING_MINIMUM = 100
BATCH_SIZE = 10


class ServiceError(ValueError):
    """Invalid service configuration or request."""


class BannedWorkerError(PermissionError):
    """The worker is permanently banned."""


@dataclass(frozen=True)
class TargetProfile:
    target_id: str
    name: str
    description: str = ""
    followers: int = 0
    followees: int = 0
    statuses: int = 0
    profile_url: str = ""
    image_url: str = ""
    sample_tweets: tuple[str, ...] = ("", "", "", "", "")
    tweets_padded: bool = False

    def __post_init__(self) -> None:
        if len(self.sample_tweets) != 5:
            raise ServiceError(f"profile {self.target_id!r} must carry exactly 5 sample tweets")
        if min(self.followers, self.followees, self.statuses) < 0:
            raise ServiceError(f"profile {self.target_id!r} has a negative count")


def profile_from_record(rec: dict) -> TargetProfile:
    tweets = [str(t) for t in rec.get("tweets", [])][:5]
    padded = len(tweets) < 5
    tweets += [""] * (5 - len(tweets))
    return TargetProfile(
        target_id=str(rec["target_id"]),
        name=str(rec.get("name", rec["target_id"])),
        description=str(rec.get("description", "")),
        followers=int(rec.get("followers", 0)),
        followees=int(rec.get("followees", 0)),
        statuses=int(rec.get("statuses", 0)),
        profile_url=str(rec.get("profile_url", "")),
        image_url=str(rec.get("image_url", "")),
        sample_tweets=tuple(tweets),
        tweets_padded=padded,
    )


def load_profiles(path: str) -> dict[str, TargetProfile]:
    profiles: dict[str, TargetProfile] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                profile = profile_from_record(json.loads(stripped))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ServiceError(f"{path}:{lineno}: bad profile record: {exc}") from exc
            profiles[profile.target_id] = profile
    return profiles


@dataclass
class ServiceConfig:
    profiles_path: str
    log_path: str
    targets: list[str]
    proxies: list[str]
    lam: float = 1.22
    seed: int = 0
    ban_threshold: float = 0.55
    lease_timeout: float = 600.0
    flood_limit: int = 0  # 0 = no cap on enqueued-but-unanswered tasks
    admin_token: str = ""
    questions: tuple[str, ...] = DEFAULT_QUESTIONS

    @staticmethod
    def load(path: str) -> "ServiceConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ServiceError(f"cannot read service config {path}: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.join(base, p)

        def id_list(key: str) -> list[str]:
            if key in raw:
                return [str(x) for x in raw[key]]
            file_key = f"{key}_file"
            if file_key in raw:
                with open(resolve(raw[file_key]), "r", encoding="utf-8") as fh:
                    return [line.strip() for line in fh if line.strip()]
            raise ServiceError(f"service config needs {key!r} or {file_key!r}")

        return ServiceConfig(
            profiles_path=resolve(str(raw["profiles"])),
            log_path=resolve(str(raw.get("log", "events.log"))),
            targets=id_list("targets"),
            proxies=id_list("proxies"),
            lam=float(raw.get("lambda", 1.22)),
            seed=int(raw.get("seed", 0)),
            ban_threshold=float(raw.get("ban_threshold", 0.55)),
            lease_timeout=float(raw.get("lease_timeout", 600.0)),
            flood_limit=int(raw.get("flood_limit", 0)),
            admin_token=str(raw.get("admin_token", "")),
            questions=tuple(str(q) for q in raw.get("questions", DEFAULT_QUESTIONS)),
        )


@dataclass
class WorkerState:
    worker_id: str
    qualifying_comparisons: int = 0
    qualifying_correct: int = 0
    banned: bool = False
    ban_run: int | None = None
    last_eval_run: int = 0


@dataclass(frozen=True)
class Task:
    task_id: str
    run: int
    seq: int
    left: str
    right: str
    proxy: str
    question_id: int


@dataclass
class Lease:
    worker: str
    expires: float


def update_quality(
    worker: WorkerState,
    task: Task,
    choice: str,
    proxy_percentiles: dict[str, float],
    ban_threshold: float,
) -> tuple[WorkerState, bool]:
    """Fold one judgment into the worker's quality record.

    A judgment qualifies only when the two targets' follower percentiles
    differ by more than 0.2 (closer pairs are genuinely ambiguous), and it is
    correct when the higher-percentile side was chosen. Once a worker has at
    least 100 qualifying judgments, the first qualifying-or-not response of
    each run triggers at most one ban evaluation for that run; a ban is
    permanent. Returns the updated state and whether a ban fires now.
    """
    pl = proxy_percentiles.get(task.left, 0.0)
    pr = proxy_percentiles.get(task.right, 0.0)
    if abs(pl - pr) > QUALIFYING_GAP:
        worker.qualifying_comparisons += 1
        higher = task.left if pl > pr else task.right
        if choice == higher:
            worker.qualifying_correct += 1
    ban_now = False
    if (
        not worker.banned
        and worker.qualifying_comparisons >= QUALIFYING_MINIMUM
        and worker.last_eval_run < task.run
    ):
        worker.last_eval_run = task.run
        accuracy = worker.qualifying_correct / worker.qualifying_comparisons
        if accuracy < ban_threshold:
            ban_now = True
    return worker, ban_now


class ServiceState:
    """Pure fold of the event log; everything here is reconstructible."""

    def __init__(self, percentiles: dict[str, float], ban_threshold: float):
        self.percentiles = percentiles
        self.ban_threshold = ban_threshold
        self.lam = 1.22
        self.seed = 0
        self.lease_timeout = 600.0
        self.flood_limit = 0
        self.targets: list[str] = []
        self.proxies: list[str] = []
        self.questions: tuple[str, ...] = DEFAULT_QUESTIONS
        self.tasks: dict[str, Task] = {}
        self.queue: list[str] = []
        self.leases: dict[str, Lease] = {}
        self.answers: dict[str, str] = {}  # task_id -> choice
        self.answer_meta: dict[str, tuple[str, float | None]] = {}  # task_id -> (worker, ts)
        self.pair_task: dict[tuple[int, frozenset], str] = {}
        self.workers: dict[str, WorkerState] = {}
        self.runs_requested = 0
        self.runs_started: set[int] = set()
        self.runs_ended: set[int] = set()
        self.next_seq = 1
        self.comparisons_total = 0
        self.pending_bans: list[tuple[str, int]] = []  # (worker, run) decisions not yet logged

    def unanswered_enqueued(self) -> int:
        return len(self.tasks) - len(self.answers)

    def worker(self, worker_id: str) -> WorkerState:
        if worker_id not in self.workers:
            self.workers[worker_id] = WorkerState(worker_id)
        return self.workers[worker_id]

    def apply(self, event: dict) -> None:
        kind = event["ev"]
        if kind == "config":
            self.lam = float(event["lambda"])
            self.seed = int(event["seed"])
            self.lease_timeout = float(event["lease_timeout"])
            self.flood_limit = int(event["flood_limit"])
            self.ban_threshold = float(event["ban_threshold"])
            self.targets = [str(t) for t in event["targets"]]
            self.proxies = [str(p) for p in event["proxies"]]
            self.questions = tuple(str(q) for q in event["questions"])
        elif kind == "run_request":
            self.runs_requested += int(event["runs"])
        elif kind == "run_start":
            self.runs_started.add(int(event["run"]))
        elif kind == "run_end":
            self.runs_ended.add(int(event["run"]))
        elif kind == "enqueue":
            task = Task(
                task_id=str(event["task_id"]),
                run=int(event["run"]),
                seq=int(event["seq"]),
                left=str(event["left"]),
                right=str(event["right"]),
                proxy=str(event["proxy"]),
                question_id=int(event["question_id"]),
            )
            self.tasks[task.task_id] = task
            self.queue.append(task.task_id)
            self.pair_task[(task.run, frozenset((task.left, task.right)))] = task.task_id
            self.next_seq = max(self.next_seq, task.seq + 1)
        elif kind == "lease":
            self.leases[str(event["task_id"])] = Lease(str(event["worker"]), float(event["expires"]))
        elif kind == "response":
            task_id = str(event["task_id"])
            task = self.tasks[task_id]
            choice = str(event["choice"])
            self.answers[task_id] = choice
            self.answer_meta[task_id] = (str(event["worker"]), event.get("ts"))
            self.leases.pop(task_id, None)
            self.comparisons_total += 1
            worker = self.worker(str(event["worker"]))
            _, ban_now = update_quality(worker, task, choice, self.percentiles, self.ban_threshold)
            if ban_now:
                self.pending_bans.append((worker.worker_id, task.run))
        elif kind == "ban":
            worker = self.worker(str(event["worker"]))
            worker.banned = True
            worker.ban_run = int(event["run"])
            self.pending_bans = [
                (w, r) for w, r in self.pending_bans if w != worker.worker_id
            ]
        else:
            raise ServiceError(f"unknown event type {kind!r}")

    def current_run(self) -> int:
        open_runs = self.runs_started - self.runs_ended
        if open_runs:
            return max(open_runs)
        return max(self.runs_ended) if self.runs_ended else 0

    def winner_of(self, run: int, pair: frozenset) -> str | None:
        task_id = self.pair_task.get((run, pair))
        if task_id is None:
            return None
        return self.answers.get(task_id)

    def comparison_records(self) -> list[ComparisonRecord]:
        records = []
        for task_id, choice in self.answers.items():
            task = self.tasks[task_id]
            worker, ts = self.answer_meta[task_id]
            records.append(
                ComparisonRecord(
                    run_id=task.run,
                    left=task.left,
                    right=task.right,
                    winner=choice,
                    worker_id=worker,
                    question_id=task.question_id,
                    timestamp=ts,
                )
            )
        records.sort(key=lambda r: (r.run_id, self.tasks_by_pair_seq(r)))
        return records

    def tasks_by_pair_seq(self, record: ComparisonRecord) -> int:
        task_id = self.pair_task[(record.run_id, frozenset((record.left, record.right)))]
        return self.tasks[task_id].seq


def follower_percentiles(profiles: dict[str, TargetProfile], targets: list[str]) -> dict[str, float]:
    """Average-tied rank / n of follower counts over the target pool."""
    counts = [profiles[t].followers for t in targets]
    ranks = rankdata(counts)
    return {t: float(r) / len(targets) for t, r in zip(targets, ranks)}


class AnnotationService:
    """Single-writer annotation backend; every mutation goes through the log."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.profiles = load_profiles(config.profiles_path)
        missing = [t for t in [*config.targets, *config.proxies] if t not in self.profiles]
        if missing:
            raise ServiceError(f"ids missing from profiles file: {missing[:5]}")
        if not config.targets or not config.proxies:
            raise ServiceError("target and proxy pools must both be non-empty")
        overlap = set(config.targets) & set(config.proxies)
        if overlap:
            raise ServiceError(f"target and proxy pools must be disjoint, both have {sorted(overlap)[:5]}")

        self._lock = threading.RLock()
        self._answered = threading.Condition(self._lock)
        self.state = ServiceState(
            follower_percentiles(self.profiles, config.targets), config.ban_threshold
        )
        self._deferred: deque[tuple[int, str, str]] = deque()
        self._stop = False
        self._controller: threading.Thread | None = None
        self.open_partitions = 0

        existed = os.path.exists(config.log_path) and os.path.getsize(config.log_path) > 0
        self.log = EventLog(config.log_path)
        if existed:
            events = list(replay_events(config.log_path))
            # the log header owns the experiment definition; quality
            # percentiles must follow its target pool, not the file's
            for event in events:
                if event["ev"] == "config":
                    log_targets = [str(t) for t in event["targets"]]
                    absent = [t for t in log_targets if t not in self.profiles]
                    if absent:
                        raise ServiceError(
                            f"log {config.log_path} references targets missing from the "
                            f"profiles file: {absent[:5]}"
                        )
                    self.state.percentiles = follower_percentiles(self.profiles, log_targets)
                    break
            for event in events:
                self.state.apply(event)
            # decisions reached but not yet durably recorded before the crash
            for worker_id, run in list(self.state.pending_bans):
                self._append({"ev": "ban", "worker": worker_id, "run": run,
                              "accuracy": self._accuracy(worker_id), "ts": time.time()})
            # a restart invalidates worker sessions: outstanding leases are
            # voided so their tasks go straight back to the queue
            self.state.leases.clear()
        else:
            self._append({
                "ev": "config",
                "lambda": config.lam,
                "seed": config.seed,
                "ban_threshold": config.ban_threshold,
                "lease_timeout": config.lease_timeout,
                "flood_limit": config.flood_limit,
                "targets": list(config.targets),
                "proxies": list(config.proxies),
                "questions": list(config.questions),
            })
        if self.state.runs_requested > len(self.state.runs_ended):
            self._start_controller()

    # -- internals ---------------------------------------------------------

    def _accuracy(self, worker_id: str) -> float:
        w = self.state.worker(worker_id)
        if w.qualifying_comparisons == 0:
            return 0.0
        return w.qualifying_correct / w.qualifying_comparisons

    def _append(self, event: dict) -> None:
        self.log.append(event)
        self.state.apply(event)

    def _pump(self) -> None:
        """Flush deferred comparisons to the log while capacity allows."""
        limit = self.state.flood_limit
        while self._deferred and (limit <= 0 or self.state.unanswered_enqueued() < limit):
            run, left, right = self._deferred.popleft()
            seq = self.state.next_seq
            proxy = self.state.proxies[(seq - 1) % len(self.state.proxies)]
            question_id = 1 + stable_hash64("question", self.state.seed, run, seq) % len(
                self.state.questions
            )
            self._append({
                "ev": "enqueue",
                "run": run,
                "seq": seq,
                "task_id": f"r{run}s{seq}",
                "left": left,
                "right": right,
                "proxy": proxy,
                "question_id": question_id,
            })

    def _start_controller(self) -> None:
        from .controller import run_controller

        if self._controller is not None and self._controller.is_alive():
            return
        self._controller = threading.Thread(
            target=run_controller, args=(self,), name="annotation-controller", daemon=True
        )
        self._controller.start()

    # -- worker-facing operations -------------------------------------------

    def serve_batch(self, worker_id: str) -> list[tuple[Task, float]]:
        """Up to 10 pending tasks, no unordered pair twice in one batch."""
        now = time.time()
        with self._lock:
            worker = self.state.worker(worker_id)
            if worker.banned:
                raise BannedWorkerError(worker_id)
            batch: list[tuple[Task, float]] = []
            pairs_in_batch: set[frozenset] = set()
            for task_id in self.state.queue:
                if task_id in self.state.answers:
                    continue
                lease = self.state.leases.get(task_id)
                if lease is not None and lease.expires > now:
                    continue
                task = self.state.tasks[task_id]
                pair = frozenset((task.left, task.right))
                if pair in pairs_in_batch:
                    continue
                pairs_in_batch.add(pair)
                expires = now + self.state.lease_timeout
                self._append({
                    "ev": "lease",
                    "task_id": task.task_id,
                    "worker": worker_id,
                    "expires": expires,
                    "ts": now,
                })
                batch.append((task, expires))
                if len(batch) == BATCH_SIZE:
                    break
            return batch

    def record_response(
        self, worker_id: str, task_id: str, choice: str, shown_left: str | None = None
    ) -> dict:
        """Durably record one judgment; duplicates ack without a second record."""
        now = time.time()
        with self._lock:
            task = self.state.tasks.get(task_id)
            if task is None:
                return {"task_id": task_id, "status": "rejected", "reason": "unknown task"}
            if task_id in self.state.answers:
                return {"task_id": task_id, "status": "duplicate"}
            worker = self.state.worker(worker_id)
            if worker.banned:
                return {"task_id": task_id, "status": "rejected", "reason": "banned"}
            lease = self.state.leases.get(task_id)
            if lease is None:
                return {"task_id": task_id, "status": "rejected", "reason": "no lease"}
            if lease.worker != worker_id:
                return {"task_id": task_id, "status": "rejected", "reason": "lease held by another worker"}
            if lease.expires <= now:
                return {"task_id": task_id, "status": "rejected", "reason": "lease expired"}
            if choice not in (task.left, task.right):
                return {"task_id": task_id, "status": "rejected", "reason": "choice is not a side of the pair"}
            event: dict = {
                "ev": "response",
                "task_id": task_id,
                "worker": worker_id,
                "choice": choice,
                "ts": now,
            }
            if shown_left is not None:
                event["shown_left"] = shown_left
            self._append(event)
            for pending_worker, run in list(self.state.pending_bans):
                self._append({
                    "ev": "ban",
                    "worker": pending_worker,
                    "run": run,
                    "accuracy": self._accuracy(pending_worker),
                    "ts": now,
                })
            self._pump()
            self._answered.notify_all()
            return {"task_id": task_id, "status": "recorded"}

    # -- controller-facing operations ----------------------------------------

    def enqueue_pairs(self, run: int, pairs: list[tuple[str, str]]) -> None:
        with self._lock:
            for left, right in pairs:
                key = (run, frozenset((left, right)))
                if key in self.state.pair_task:
                    continue  # answered earlier or already queued (e.g. after restart)
                self._deferred.append((run, left, right))
            self._pump()

    def await_answer(self, run: int, left: str, right: str) -> str:
        pair = frozenset((left, right))
        with self._answered:
            while True:
                winner = self.state.winner_of(run, pair)
                if winner is not None:
                    return winner
                if self._stop:
                    raise ServiceError("service stopping")
                self._answered.wait(timeout=0.2)

    # -- admin / read operations ----------------------------------------------

    def request_runs(self, runs: int) -> int:
        if runs < 1:
            raise ServiceError(f"runs must be >= 1, got {runs}")
        with self._lock:
            self._append({"ev": "run_request", "runs": runs})
            total = self.state.runs_requested
        self._start_controller()
        return total

    def status(self) -> dict:
        now = time.time()
        with self._lock:
            queue_depth = sum(
                1
                for task_id in self.state.queue
                if task_id not in self.state.answers
                and (
                    task_id not in self.state.leases
                    or self.state.leases[task_id].expires <= now
                )
            )
            return {
                "run": self.state.current_run(),
                "comparisons_total": self.state.comparisons_total,
                "queue_depth": queue_depth,
                "open_partitions": self.open_partitions,
                "runs_requested": self.state.runs_requested,
                "runs_completed": len(self.state.runs_ended),
            }

    def ranking(self) -> NoisyBTModel | None:
        with self._lock:
            records = self.state.comparison_records()
            lam = self.state.lam
        if not records:
            return None
        return bt_fit(records, lam)

    def records(self) -> list[ComparisonRecord]:
        with self._lock:
            return self.state.comparison_records()

    def stop(self) -> None:
        with self._lock:
            self._stop = True
            self._answered.notify_all()
        if self._controller is not None:
            self._controller.join(timeout=5)
        self.log.close()


def service_log_records(path: str) -> list[ComparisonRecord]:
    """Comparison records extracted from a service event log file."""
    tasks: dict[str, dict] = {}
    records: list[tuple[int, int, ComparisonRecord]] = []
    for event in replay_events(path):
        if event["ev"] == "enqueue":
            tasks[str(event["task_id"])] = event
        elif event["ev"] == "response":
            task = tasks.get(str(event["task_id"]))
            if task is None:
                raise ServiceError(f"response for unknown task {event['task_id']!r} in {path}")
            records.append((
                int(task["run"]),
                int(task["seq"]),
                ComparisonRecord(
                    run_id=int(task["run"]),
                    left=str(task["left"]),
                    right=str(task["right"]),
                    winner=str(event["choice"]),
                    worker_id=str(event["worker"]),
                    question_id=int(task["question_id"]),
                    timestamp=event.get("ts"),
                ),
            ))
    records.sort(key=lambda x: (x[0], x[1]))
    return [r for _, _, r in records]
