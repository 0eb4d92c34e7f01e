"""Relevance scoring for unstructured retrieval.

The built-in scorer is Okapi BM25 computed per query over exactly the
candidate documents it is given, so a retrieval window is its own corpus.
An external scorer can be plugged in as a child process speaking
line-delimited JSON on stdin/stdout; both expose the same ``score`` call.
"""

from __future__ import annotations

import json
import math
import queue
import re
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import RetrieverError

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumerics (underscore splits too)."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    avg_doc_len: float
    doc_freqs: dict

    @classmethod
    def from_documents(cls, token_lists: Sequence[list[str]]) -> "CorpusStats":
        freqs: Counter = Counter()
        total = 0
        for tokens in token_lists:
            total += len(tokens)
            freqs.update(set(tokens))
        count = len(token_lists)
        return cls(count, total / count if count else 0.0, dict(freqs))


def bm25_score(
    query_tokens: Sequence[str],
    doc_tokens: Sequence[str],
    stats: CorpusStats,
    k1: float = 1.2,
    b: float = 0.75,
) -> float:
    """Okapi BM25 with the non-negative idf variant ln(1 + (N-df+0.5)/(df+0.5)).

    Query tokens are taken as given: a term appearing twice in the query
    contributes twice.
    """
    tf = Counter(doc_tokens)
    doc_len = len(doc_tokens)
    avg_len = stats.avg_doc_len if stats.avg_doc_len > 0 else 1.0
    score = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f == 0:
            continue
        df = stats.doc_freqs.get(term, 0)
        idf = math.log(1.0 + (stats.doc_count - df + 0.5) / (df + 0.5))
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc_len / avg_len))
    return score


class Bm25Retriever:
    """Scores candidates with BM25, treating each candidate set as the corpus."""

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b

    def score(self, query: str, documents: Sequence[tuple[str, str]]) -> dict[str, float]:
        """documents are (uid, text) pairs; returns uid -> score."""
        query_tokens = tokenize(query)
        token_lists = [tokenize(text) for _, text in documents]
        stats = CorpusStats.from_documents(token_lists)
        return {
            uid: bm25_score(query_tokens, tokens, stats, self.k1, self.b)
            for (uid, _), tokens in zip(documents, token_lists)
        }

    def close(self) -> None:
        pass


class ExternalRetriever:
    """Child-process scorer speaking one JSON object per line.

    Request:  {"query": str, "documents": [{"uid": str, "text": str}, ...]}
    Response: {"scores": [{"uid": str, "score": number}, ...]}

    Candidates the process does not score come back as 0.0. A dead process,
    malformed reply or timeout raises :class:`RetrieverError`; scoring is
    never silently skipped.
    """

    def __init__(self, cmd: Sequence[str], timeout: float = 30.0):
        self.cmd = list(cmd)
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise RetrieverError(f"cannot start retriever {self.cmd}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def score(self, query: str, documents: Sequence[tuple[str, str]]) -> dict[str, float]:
        if self._proc.poll() is not None:
            raise RetrieverError(f"retriever process exited with code {self._proc.returncode}")
        request = {
            "query": query,
            "documents": [{"uid": uid, "text": text} for uid, text in documents],
        }
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise RetrieverError(f"cannot write to retriever process: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise RetrieverError(f"retriever gave no reply within {self.timeout}s") from None
        if line is None:
            raise RetrieverError("retriever process closed its output")
        try:
            reply = json.loads(line)
            scored = {entry["uid"]: float(entry["score"]) for entry in reply["scores"]}
        except (ValueError, KeyError, TypeError) as exc:
            raise RetrieverError(f"malformed retriever reply {line!r}: {exc}") from exc
        return {uid: scored.get(uid, 0.0) for uid, _ in documents}

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ExternalRetriever":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
