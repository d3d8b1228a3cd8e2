"""Pairwise conductance between users under three lenses.

Conductance scales how readily one user's activity is attributed to another:
a floor value beta covers channels we cannot observe (feeds, topics,
hashtags), topped up either by an explicit follower edge (topological lens)
or by profile similarity (homophilic lenses: shared followees, or hashed
TF-IDF over the user's concatenated tweets).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

from .util import fnv1a_32

logger = logging.getLogger(__name__)

LENSES = ("topological", "following", "lexical")
LEXICAL_DIMENSION = 1_048_576
FOLLOWING_TOP_K = 1000
# Identity of the bucket/sign hash baked into embedding caches. Buckets come
# from the full 32-bit FNV-1a value mod dimension; the sign is bit 31.
HASH_ID = "fnv1a32-mod/sign-bit31"

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class ConductanceError(ValueError):
    """Invalid conductance configuration or inputs."""


@dataclass(frozen=True)
class ConductanceConfig:
    lens: str
    beta: float

    def __post_init__(self) -> None:
        if self.lens not in LENSES:
            raise ConductanceError(f"unknown lens {self.lens!r}, expected one of {LENSES}")
        if not (0.0 <= self.beta <= 1.0):
            raise ConductanceError(f"beta must be in [0, 1], got {self.beta}")


class FollowerGraph:
    """Directed follow relationships: edge (followee, follower)."""

    def __init__(self, edges: Iterable[tuple[str, str]] = ()) -> None:
        self._followers: dict[str, set[str]] = {}
        self._followees: dict[str, set[str]] = {}
        self._users: set[str] = set()
        for followee, follower in edges:
            self.add_edge(followee, follower)

    def add_edge(self, followee: str, follower: str) -> None:
        if followee == follower:
            return  # self-follows are never stored
        self._followers.setdefault(followee, set()).add(follower)
        self._followees.setdefault(follower, set()).add(followee)
        self._users.add(followee)
        self._users.add(follower)

    def follows(self, followee: str, follower: str) -> bool:
        """True iff `follower` follows `followee`."""
        return follower in self._followers.get(followee, ())

    def followees(self, user: str) -> set[str]:
        return self._followees.get(user, set())

    def follower_count(self, user: str) -> int:
        return len(self._followers.get(user, ()))

    def users(self) -> set[str]:
        return set(self._users)

    def __len__(self) -> int:
        return sum(len(s) for s in self._followers.values())


def read_follower_graph(path: str) -> FollowerGraph:
    """Read a two-column CSV with header `user,follower` (follower follows user)."""
    graph = FollowerGraph()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["user", "follower"]:
            raise ConductanceError(f"{path}: expected CSV header 'user,follower', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ConductanceError(f"{path}:{lineno}: expected two columns, got {row}")
            graph.add_edge(row[0].strip(), row[1].strip())
    return graph


class UserEmbedding:
    """Sparse non-negative vector representing one user."""

    __slots__ = ("user_id", "dimension", "entries", "_norm")

    def __init__(self, user_id: str, dimension: int, entries: Mapping[int, float]):
        for idx, val in entries.items():
            if not (0 <= idx < dimension):
                raise ConductanceError(f"embedding index {idx} outside dimension {dimension}")
            if val < 0:
                raise ConductanceError(f"embedding value must be >= 0, got {val}")
        self.user_id = user_id
        self.dimension = dimension
        self.entries = dict(entries)
        self._norm = math.sqrt(sum(v * v for v in self.entries.values()))

    @property
    def norm(self) -> float:
        return self._norm

    def dot(self, other: "UserEmbedding") -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(v * b[i] for i, v in a.items() if i in b)

    def cosine(self, other: "UserEmbedding") -> float:
        if self._norm == 0.0 or other._norm == 0.0:
            return 0.0
        return min(1.0, self.dot(other) / (self._norm * other._norm))


def topological_conductance(
    cfg: ConductanceConfig, graph: FollowerGraph, source_user: str, target_user: str
) -> float:
    """beta + (1 - beta) if target follows source, else beta; same user gives 1."""
    if cfg.lens != "topological":
        raise ConductanceError(f"topological conductance asked for under lens {cfg.lens!r}")
    if source_user == target_user:
        return 1.0
    return cfg.beta + (1.0 - cfg.beta) * (1.0 if graph.follows(source_user, target_user) else 0.0)


def homophilic_conductance(
    cfg: ConductanceConfig,
    embeddings: Mapping[str, UserEmbedding],
    source_user: str,
    target_user: str,
    *,
    _miss_counter: list[int] | None = None,
) -> float:
    """beta + (1 - beta) * cosine(source, target); unknown users act as zero vectors."""
    if cfg.lens not in ("following", "lexical"):
        raise ConductanceError(f"homophilic conductance asked for under lens {cfg.lens!r}")
    if source_user == target_user:
        return 1.0
    cos = 0.0
    a = embeddings.get(source_user)
    b = embeddings.get(target_user)
    if a is None or b is None:
        if _miss_counter is not None:
            _miss_counter[0] += 1
    else:
        cos = a.cosine(b)
    return cfg.beta + (1.0 - cfg.beta) * cos


def following_embeddings(
    graph: FollowerGraph, top_k: int = FOLLOWING_TOP_K
) -> dict[str, UserEmbedding]:
    """Binary embeddings over the `top_k` most-followed users.

    Coordinate j of a user's vector is 1 iff they follow the j-th
    most-followed user (ties in follower count broken by user id). When the
    graph has fewer users than top_k the dimension shrinks to what exists.
    """
    if not graph.users():
        raise ConductanceError("cannot build following embeddings from an empty graph")
    ranked = sorted(graph.users(), key=lambda u: (-graph.follower_count(u), u))
    if len(ranked) < top_k:
        logger.warning(
            "following embeddings: only %d users available, shrinking dimension from %d",
            len(ranked),
            top_k,
        )
    anchors = ranked[:top_k]
    anchor_index = {u: j for j, u in enumerate(anchors)}
    dim = len(anchors)
    out: dict[str, UserEmbedding] = {}
    for user in sorted(graph.users()):
        entries = {
            anchor_index[f]: 1.0 for f in graph.followees(user) if f in anchor_index
        }
        out[user] = UserEmbedding(user, dim, entries)
    return out


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens split on whitespace/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def lexical_embeddings(
    documents: Mapping[str, str], dimension: int = LEXICAL_DIMENSION
) -> dict[str, UserEmbedding]:
    """Hashed TF-IDF embeddings of per-user documents.

    Per document: raw term counts weighted by idf = log((1+N)/(1+df)) + 1,
    L2-normalized, then hashed into `dimension` buckets (FNV-1a 32-bit). A
    sign hash decides add/subtract so colliding terms cancel in expectation;
    the stored bucket value is the absolute sum, keeping vectors non-negative
    and cosines inside [0, 1].
    """
    if dimension <= 0:
        raise ConductanceError(f"dimension must be positive, got {dimension}")
    n_docs = len(documents)
    df: dict[str, int] = {}
    token_lists: dict[str, list[str]] = {}
    for user, text in documents.items():
        tokens = tokenize(text)
        token_lists[user] = tokens
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1

    idf = {term: math.log((1 + n_docs) / (1 + count)) + 1.0 for term, count in df.items()}

    out: dict[str, UserEmbedding] = {}
    for user, tokens in token_lists.items():
        if not tokens:
            out[user] = UserEmbedding(user, dimension, {})
            continue
        tf: dict[str, int] = {}
        for term in tokens:
            tf[term] = tf.get(term, 0) + 1
        weights = {term: count * idf[term] for term, count in tf.items()}
        norm = math.sqrt(sum(w * w for w in weights.values()))
        buckets: dict[int, float] = {}
        for term, w in weights.items():
            h = fnv1a_32(term)
            idx = h % dimension
            sign = -1.0 if (h >> 31) & 1 else 1.0
            buckets[idx] = buckets.get(idx, 0.0) + sign * w / norm
        entries = {idx: abs(v) for idx, v in buckets.items() if v != 0.0}
        out[user] = UserEmbedding(user, dimension, entries)
    return out


def read_documents(path: str) -> dict[str, str]:
    """Line-delimited {user, text} records; later lines for a user are concatenated."""
    docs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                rec = json.loads(stripped)
                user, text = str(rec["user"]), str(rec["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConductanceError(f"{path}:{lineno}: bad document record: {exc}") from exc
            docs[user] = (docs[user] + " " + text) if user in docs else text
    return docs


@dataclass
class ConstantConductance:
    """Same damping for every ordered pair (used for baselines and tests)."""

    value: float

    def gamma(self, source_user: str, target_user: str) -> float:
        return self.value


@dataclass
class TopologicalConductance:
    cfg: ConductanceConfig
    graph: FollowerGraph

    def gamma(self, source_user: str, target_user: str) -> float:
        return topological_conductance(self.cfg, self.graph, source_user, target_user)


@dataclass
class HomophilicConductance:
    cfg: ConductanceConfig
    embeddings: Mapping[str, UserEmbedding]
    _misses: list[int] = field(default_factory=lambda: [0])

    def gamma(self, source_user: str, target_user: str) -> float:
        before = self._misses[0]
        value = homophilic_conductance(
            self.cfg, self.embeddings, source_user, target_user, _miss_counter=self._misses
        )
        if self._misses[0] > before and self._misses[0] == 1:
            logger.warning("user pair (%s, %s) missing from embeddings; treated as zero vector",
                           source_user, target_user)
        return value

    @property
    def missing_pairs(self) -> int:
        return self._misses[0]


def write_embedding_cache(
    path: str, lens: str, dimension: int, embeddings: Mapping[str, UserEmbedding]
) -> None:
    """Persist embeddings as JSONL: one header line, then one sparse record per user."""
    header = {
        "lens": lens,
        "dimension": dimension,
        "hash_id": HASH_ID if lens == "lexical" else "none",
        "built_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for user in sorted(embeddings):
            emb = embeddings[user]
            idxs = sorted(emb.entries)
            rec = {
                "user": user,
                "indices": idxs,
                "values": [emb.entries[i] for i in idxs],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_embedding_cache(path: str) -> tuple[dict, dict[str, UserEmbedding]]:
    """Load a cache written by write_embedding_cache; returns (header, embeddings)."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            dimension = int(header["dimension"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConductanceError(f"{path}: bad cache header: {exc}") from exc
        embeddings: dict[str, UserEmbedding] = {}
        for lineno, line in enumerate(fh, start=2):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                rec = json.loads(stripped)
                entries = dict(zip((int(i) for i in rec["indices"]),
                                   (float(v) for v in rec["values"])))
                embeddings[str(rec["user"])] = UserEmbedding(str(rec["user"]), dimension, entries)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConductanceError(f"{path}:{lineno}: bad cache record: {exc}") from exc
    return header, embeddings
