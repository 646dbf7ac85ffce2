"""Desk-scale stand-in for a fine-tuned LLM ensemble.

Private documents are split into disjoint shards, each shard trains an
additively smoothed n-gram model, and a separate public split trains the
public model. Anything with a ``predict(context) -> np.ndarray`` method and a
``vocab`` attribute can serve as a distribution provider, so real models can
replace the n-grams without touching the decoder.
"""
from __future__ import annotations

import hashlib
import json
import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

MODEL_FORMAT = "adapmixed-ngram"
MODEL_VERSION = 1
UNK = "<unk>"


class VocabularyError(ValueError):
    pass


class Vocabulary:
    """Ordered token set shared by every provider in a session."""

    def __init__(self, tokens: Sequence[str], level: str = "char"):
        if level not in ("char", "word"):
            raise ValueError(f"unknown tokenization level {level!r}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = list(tokens)
        self.level = level
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, texts: Iterable[str], level: str = "char") -> "Vocabulary":
        seen = set()
        for text in texts:
            seen.update(split_tokens(text, level))
        tokens = sorted(seen)
        if level == "word":
            tokens = [UNK] + [t for t in tokens if t != UNK]
        return cls(tokens, level)

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens and self.level == other.level

    def encode(self, text: str) -> list[int]:
        ids = []
        for tok in split_tokens(text, self.level):
            if tok in self.index:
                ids.append(self.index[tok])
            elif self.level == "word":
                ids.append(self.index[UNK])
            else:
                raise VocabularyError(f"out-of-vocabulary token {tok!r}")
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        sep = "" if self.level == "char" else " "
        return sep.join(self.tokens[i] for i in ids)

    def to_dict(self):
        return {"level": self.level, "tokens": self.tokens}

    @classmethod
    def from_dict(cls, d):
        return cls(d["tokens"], d["level"])


def split_tokens(text: str, level: str) -> list[str]:
    return list(text) if level == "char" else text.split()


# --------------------------------------------------------------------------
# corpus


def read_documents(path, per_line: bool = True) -> list[str]:
    """Read UTF-8 documents from a file or a directory of files.

    With ``per_line`` each non-empty line is a document; otherwise each file
    is one document. Directories are read in sorted filename order.
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
    docs = []
    for f in files:
        text = f.read_text(encoding="utf-8")
        if per_line:
            docs.extend(line.strip() for line in text.splitlines() if line.strip())
        elif text.strip():
            docs.append(text.strip())
    return docs


@dataclass(frozen=True)
class ShardedCorpus:
    shards: list[list[list[int]]]
    vocabulary: Vocabulary
    shard_manifest: dict[int, list[int]]

    def __post_init__(self):
        seen = set()
        for sid, ids in self.shard_manifest.items():
            if not ids:
                raise ValueError(f"shard {sid} is empty")
            if seen.intersection(ids):
                raise ValueError(f"shard {sid} overlaps another shard")
            seen.update(ids)


def partition_corpus(documents: Sequence[Sequence[int]], n: int, seed: int,
                     vocabulary: Vocabulary | None = None) -> ShardedCorpus:
    """Seeded shuffle of document ids followed by round-robin assignment to ``n`` shards."""
    if n < 1:
        raise ValueError(f"number of shards must be >= 1, got {n}")
    if len(documents) < n:
        raise ValueError(f"cannot split {len(documents)} documents into {n} shards")
    order = list(range(len(documents)))
    random.Random(seed).shuffle(order)
    manifest = {s: sorted(order[s::n]) for s in range(n)}
    shards = [[list(documents[d]) for d in manifest[s]] for s in range(n)]
    return ShardedCorpus(shards, vocabulary, manifest)


# --------------------------------------------------------------------------
# models


class DistributionProvider(Protocol):
    vocab: Vocabulary

    def predict(self, context: Sequence[int]) -> np.ndarray: ...


class NGramModel:
    """Additively smoothed n-gram next-token model.

    P(w | c) = (count(c, w) + s) / (count(c) + s |V|) where ``c`` is the last
    ``order - 1`` tokens. Contexts shorter than that, or never seen in
    training, get the uniform distribution.
    """

    def __init__(self, order: int, vocab: Vocabulary, smoothing_alpha: float = 0.1, counts=None):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if not smoothing_alpha > 0:
            raise ValueError(f"smoothing_alpha must be > 0, got {smoothing_alpha}")
        self.order = order
        self.vocab = vocab
        self.smoothing_alpha = float(smoothing_alpha)
        self.counts: dict[tuple[int, ...], dict[int, int]] = counts if counts is not None else {}

    def _context_key(self, context: Sequence[int]) -> tuple[int, ...] | None:
        width = self.order - 1
        if width == 0:
            return ()
        if len(context) < width:
            return None
        return tuple(context[-width:])

    def predict(self, context: Sequence[int]) -> np.ndarray:
        size = len(self.vocab)
        key = self._context_key(context)
        # only the tokens the model conditions on are checked; prefixes can be long
        for tok in key or ():
            if not 0 <= tok < size:
                raise VocabularyError(f"token id {tok} outside vocabulary of size {size}")
        s = self.smoothing_alpha
        dist = np.full(size, s, dtype=np.float64)
        row = self.counts.get(key) if key is not None else None
        if row:
            for tok, c in row.items():
                dist[tok] += c
        return dist / dist.sum()

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "order": self.order,
            "smoothing_alpha": self.smoothing_alpha,
            "vocabulary": self.vocab.to_dict(),
            "counts": [
                [list(ctx), sorted([int(t), int(c)] for t, c in row.items())]
                for ctx, row in sorted(self.counts.items())
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "NGramModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not an n-gram model file (format={d.get('format')!r})")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        counts = {tuple(ctx): {t: c for t, c in row} for ctx, row in d["counts"]}
        return cls(d["order"], Vocabulary.from_dict(d["vocabulary"]), d["smoothing_alpha"], counts)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NGramModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_ngram(shard: Sequence[Sequence[int]], order: int, smoothing_alpha: float, vocab: Vocabulary) -> NGramModel:
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not shard or not any(len(doc) for doc in shard):
        raise ValueError("cannot train on an empty shard")
    width = order - 1
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for doc in shard:
        for i in range(width, len(doc)):
            counts[tuple(doc[i - width:i])][doc[i]] += 1
    frozen = {ctx: dict(row) for ctx, row in counts.items()}
    return NGramModel(order, vocab, smoothing_alpha, frozen)


def predict(model: DistributionProvider, context: Sequence[int]) -> np.ndarray:
    return model.predict(context)


# --------------------------------------------------------------------------
# recorded distributions


class RecordingProvider:
    """Wraps a provider and keeps every distribution it returns."""

    def __init__(self, inner: DistributionProvider):
        self.inner = inner
        self.vocab = inner.vocab
        self.records: dict[tuple[int, ...], np.ndarray] = {}

    def predict(self, context):
        dist = self.inner.predict(context)
        self.records[tuple(context)] = dist.copy()
        return dist

    def save(self, path) -> None:
        keys = sorted(self.records)
        np.savez(
            path,
            contexts=np.array([json.dumps(list(k)) for k in keys]),
            dists=np.stack([self.records[k] for k in keys]) if keys else np.zeros((0, len(self.vocab))),
            vocabulary=np.array(json.dumps(self.vocab.to_dict())),
        )


class FileProvider:
    """Replays distributions saved by :class:`RecordingProvider`."""

    def __init__(self, path):
        with np.load(path, allow_pickle=False) as data:
            self.vocab = Vocabulary.from_dict(json.loads(str(data["vocabulary"])))
            dists = data["dists"]
            self.table = {tuple(json.loads(str(c))): dists[i] for i, c in enumerate(data["contexts"])}

    def predict(self, context):
        try:
            return self.table[tuple(context)].copy()
        except KeyError:
            raise KeyError(f"no recorded distribution for context {list(context)}") from None


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
