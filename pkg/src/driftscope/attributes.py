"""Attribute-based explanations for text corpora.

Every document is sent to a language model together with a fixed list of
yes/no questions; the answers are tallied per corpus, and a logistic model
measures how well the answer vectors tell the two corpora apart.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx
import numpy as np
from sklearn.model_selection import train_test_split

from .errors import (
    EmptyAttributeSet,
    EmptyDocument,
    ParseError,
    ProviderError,
    SingleClass,
    ValidationError,
)
from .influence import fit_logistic

log = logging.getLogger(__name__)

ATTRIBUTE_INSTRUCTION = "Analyze the following text by answering the following questions including: "
ANSWER_INSTRUCTION = 'For each question provide "YES OR NO" answer only.'
HUMANIZE_INSTRUCTION = (
    "Make the following context sound less formal, paraphrase using some colloquial\nlanguage."
)

YES, NO, UNPARSED = 1, 0, -1
_LABELS = {YES: "yes", NO: "no", UNPARSED: "unparsed"}


# ------------------------------------------------------------------- corpora


@dataclass(frozen=True)
class TextCorpus:
    ids: tuple
    documents: tuple
    name: str = "corpus"

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        docs = tuple(self.documents)
        if len(ids) != len(docs):
            raise ValidationError("ids and documents differ in length")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{self.name}: document ids are not unique")
        for i, doc in zip(ids, docs):
            if not isinstance(doc, str) or not doc.strip():
                raise EmptyDocument(f"{self.name}: document {i!r} is empty")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "documents", docs)

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_texts(cls, texts: Sequence[str], name: str = "corpus") -> "TextCorpus":
        return cls(tuple(str(i) for i in range(len(texts))), tuple(texts), name)


def load_corpus(path, name: Optional[str] = None) -> TextCorpus:
    """Read a corpus: ``.csv`` files hold ``id,text`` rows, anything else one document per line.

    Line-per-document ids are 1-based line numbers; blank lines are skipped.
    A CSV header row ``id,text`` is recognised and dropped.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"corpus file not found: {path}")
    name = name or path.stem
    ids, docs = [], []
    if path.suffix.lower() == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if lineno == 1 and [c.strip().lower() for c in row] == ["id", "text"]:
                    continue
                if not row:
                    continue
                if len(row) != 2:
                    raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected 2", row=lineno)
                ids.append(row[0])
                docs.append(row[1])
    else:
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if line.strip():
                ids.append(str(lineno))
                docs.append(line)
    return TextCorpus(tuple(ids), tuple(docs), name)


def write_corpus(corpus: TextCorpus, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "text"])
        for i, doc in zip(corpus.ids, corpus.documents):
            w.writerow([i, doc])


# ------------------------------------------------------------------- prompts


def _check_attributes(attributes) -> tuple:
    attrs = tuple(attributes)
    if not attrs:
        raise EmptyAttributeSet("at least one attribute question is needed")
    if any(not isinstance(a, str) or not a.strip() for a in attrs):
        raise EmptyAttributeSet("attribute questions must be nonempty strings")
    return attrs


def build_attribute_prompt(attributes: Sequence[str], document: str) -> str:
    attrs = _check_attributes(attributes)
    if not document or not document.strip():
        raise EmptyDocument("cannot analyse an empty document")
    numbered = "\n".join(f"{k}. {a}" for k, a in enumerate(attrs, start=1))
    return "\n".join([ATTRIBUTE_INSTRUCTION, numbered, ANSWER_INSTRUCTION, document])


def build_humanize_prompt(document: str) -> str:
    if not document or not document.strip():
        raise EmptyDocument("cannot rewrite an empty document")
    return f"{HUMANIZE_INSTRUCTION}\n{document}"


# ------------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\b(yes|no)\b(?:\s*(?:/|\bor\b)\s*\b(yes|no)\b)?", re.IGNORECASE)
_NUMBERED = re.compile(r"^\s*\(?(\d+)\s*[.):\]-]\s*(.*)$")


def _line_tokens(text: str) -> list:
    """Recognised answers in order; "yes or no" / "yes/no" counts as one ambiguous slot."""
    out = []
    for m in _TOKEN.finditer(text):
        out.append(UNPARSED if m.group(2) else (YES if m.group(1).lower() == "yes" else NO))
    return out


def parse_answers(completion: str, n_attributes: int) -> list:
    """Map a completion onto ``n_attributes`` slots of yes / no / unparsed.

    Numbered lines ("3. YES", "3) Formal language: no") fill the slot with
    their number from the first answer token on the line. Without numbered
    lines, the k-th recognised token fills slot k. Missing slots stay
    unparsed.
    """
    if n_attributes < 1:
        raise ValidationError("n_attributes must be >= 1")
    slots = [UNPARSED] * n_attributes
    completion = completion or ""
    numbered = False
    for line in completion.splitlines():
        m = _NUMBERED.match(line)
        if not m:
            continue
        k = int(m.group(1))
        toks = _line_tokens(m.group(2))
        if 1 <= k <= n_attributes and toks:
            numbered = True
            if slots[k - 1] == UNPARSED:
                slots[k - 1] = toks[0]
    if numbered:
        return [_LABELS[s] for s in slots]
    toks = _line_tokens(completion)
    for k, t in enumerate(toks[:n_attributes]):
        slots[k] = t
    return [_LABELS[s] for s in slots]


# ------------------------------------------------------------------ providers


class LlmProvider(Protocol):
    def complete(self, prompt: str, request_id: Optional[str] = None) -> str: ...


class MockProvider:
    """Deterministic provider backed by a fixture ``{document id: answers}``.

    Answers may be a list (``["yes", "no"]``) rendered as numbered lines, or a
    literal completion string. ``echo=True`` instead returns the prompt's
    document part unchanged, which makes a rewrite pass an identity.
    """

    name = "mock"
    temperature = 0.0

    def __init__(self, fixture: Optional[dict] = None, echo: bool = False):
        self.fixture = dict(fixture or {})
        self.echo = echo

    @classmethod
    def from_file(cls, path, echo: bool = False) -> "MockProvider":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"mock fixture not found: {path}")
        return cls(json.loads(path.read_text(encoding="utf-8")), echo)

    def complete(self, prompt: str, request_id: Optional[str] = None) -> str:
        if self.echo:
            if prompt.startswith(HUMANIZE_INSTRUCTION + "\n"):
                return prompt[len(HUMANIZE_INSTRUCTION) + 1:]
            return prompt.rsplit(ANSWER_INSTRUCTION + "\n", 1)[-1]
        key = request_id if request_id in self.fixture else "*"
        if key not in self.fixture:
            raise ProviderError(f"mock fixture has no entry for document {request_id!r}", attempts=1)
        answers = self.fixture[key]
        if isinstance(answers, str):
            return answers
        return "\n".join(f"{k}. {str(a).upper()}" for k, a in enumerate(answers, start=1))

    def describe(self) -> dict:
        return {"provider": self.name, "echo": self.echo, "temperature": self.temperature}


class ChatCompletionProvider:
    """JSON chat-completion client with retries.

    The API key is read from ``api_key_env`` when the provider is built.
    429 responses, 5xx responses and transport errors are retried with
    exponential backoff (``backoff * 2**attempt`` seconds); other HTTP errors
    fail at once.
    """

    name = "chat-completion"
    temperature = 0.0

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "DRIFTSCOPE_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep=time.sleep,
    ):
        key = os.environ.get(api_key_env)
        if not key:
            raise ValidationError(f"environment variable {api_key_env} holds no API key")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
        )

    def close(self):
        self._client.close()

    def describe(self) -> dict:
        return {
            "provider": self.name,
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
        }

    def complete(self, prompt: str, request_id: Optional[str] = None) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.endpoint, json=body)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                log.warning("request %s attempt %d failed: %s", request_id, attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("request %s attempt %d failed: %s", request_id, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"request {request_id}: HTTP {resp.status_code}", attempts=attempt + 1)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"request {request_id}: malformed response ({exc})", attempts=attempt + 1)
        raise ProviderError(f"request {request_id}: giving up after {self.max_retries + 1} attempts ({last})",
                            attempts=self.max_retries + 1)


# --------------------------------------------------------------------- audit


class AuditLog:
    """Append-only JSONL record of every prompt/completion pair."""

    def __init__(self, path, provider_info: Optional[dict] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self._write({"type": "header", "provider": provider_info or {}})

    def _write(self, rec):
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._fh.flush()

    def record(self, corpus: str, kind: str, index: int, doc_id: str, prompt: str, completion,
               attributes=None, error=None):
        self._write({
            "type": kind,
            "corpus": corpus,
            "index": index,
            "doc_id": doc_id,
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "attributes": list(attributes) if attributes is not None else None,
            "completion": completion,
            "error": error,
        })

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------- tabulation


@dataclass
class AttributeTable:
    """Per-document answers (1 yes, 0 no, -1 unparsed) for one corpus."""

    corpus: str
    attributes: tuple
    doc_ids: tuple
    answers: np.ndarray
    completions: tuple = ()
    failed_ids: tuple = ()

    @property
    def n_documents(self) -> int:
        return len(self.doc_ids)

    @property
    def yes_count(self) -> np.ndarray:
        return (self.answers == YES).sum(axis=0)

    @property
    def no_count(self) -> np.ndarray:
        return (self.answers == NO).sum(axis=0)

    @property
    def unparsed_count(self) -> np.ndarray:
        return (self.answers == UNPARSED).sum(axis=0)

    @property
    def answered(self) -> np.ndarray:
        return self.yes_count + self.no_count

    @property
    def yes_percent(self) -> np.ndarray:
        """YES share of the parsed answers; NaN where nothing parsed."""
        a = self.answered
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(a > 0, 100.0 * self.yes_count / np.maximum(a, 1), np.nan)

    def shares(self) -> dict:
        """YES / NO / unparsed percentages over all documents (they sum to 100)."""
        n = max(self.n_documents, 1)
        return {
            "yes": 100.0 * self.yes_count / n,
            "no": 100.0 * self.no_count / n,
            "unparsed": 100.0 * self.unparsed_count / n,
        }

    @property
    def coverage(self) -> float:
        total = self.n_documents + len(self.failed_ids)
        return self.n_documents / total if total else 0.0

    def vectors(self) -> np.ndarray:
        return self.answers.copy()

    def to_dict(self) -> dict:
        pct = self.yes_percent
        return {
            "corpus": self.corpus,
            "attributes": list(self.attributes),
            "n_documents": self.n_documents,
            "yes_count": [int(v) for v in self.yes_count],
            "answered": [int(v) for v in self.answered],
            "unparsed": [int(v) for v in self.unparsed_count],
            "yes_percent": [None if np.isnan(v) else float(v) for v in pct],
            "coverage": float(self.coverage),
            "failed_ids": list(self.failed_ids),
        }


def write_attribute_csv(tables: Sequence[AttributeTable], path) -> None:
    """One row per corpus, one YES% column per attribute."""
    if not tables:
        raise ValidationError("no attribute tables to write")
    attrs = tables[0].attributes
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["corpus", *attrs])
        for t in tables:
            if t.attributes != attrs:
                raise ValidationError("attribute tables use different attribute sets")
            w.writerow([t.corpus, *("" if np.isnan(v) else repr(float(v)) for v in t.yes_percent)])


def _run(corpus: TextCorpus, prompts, provider, concurrency: int):
    def call(i):
        try:
            return provider.complete(prompts[i], request_id=corpus.ids[i]), None
        except ProviderError as exc:
            return None, exc

    idx = range(len(corpus))
    if concurrency <= 1:
        return [call(i) for i in idx]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(call, idx))


def attribute_percentages(
    corpus: TextCorpus,
    attributes: Sequence[str],
    provider: LlmProvider,
    audit: Optional[AuditLog] = None,
    concurrency: int = 1,
    raise_on_failure: bool = True,
) -> AttributeTable:
    """Ask every document the attribute questions and tabulate the answers.

    Documents whose request fails after the provider's retries are left out
    of the table and listed in ``failed_ids``; with ``raise_on_failure`` a
    ``ProviderError`` carrying that partial table is raised.
    """
    attrs = _check_attributes(attributes)
    prompts = [build_attribute_prompt(attrs, doc) for doc in corpus.documents]
    results = _run(corpus, prompts, provider, concurrency)
    ids, rows, completions, failed, errors = [], [], [], [], []
    for i, (completion, err) in enumerate(results):
        if audit is not None:
            audit.record(corpus.name, "attributes", i, corpus.ids[i], prompts[i], completion, attrs,
                         None if err is None else str(err))
        if err is not None:
            failed.append(corpus.ids[i])
            errors.append(err)
            continue
        ids.append(corpus.ids[i])
        completions.append(completion)
        rows.append([{"yes": YES, "no": NO}.get(a, UNPARSED) for a in parse_answers(completion, len(attrs))])
    answers = np.array(rows, dtype=np.int8).reshape(len(rows), len(attrs))
    table = AttributeTable(corpus.name, attrs, tuple(ids), answers, tuple(completions), tuple(failed))
    if failed and raise_on_failure:
        attempts = max(getattr(e, "attempts", 0) for e in errors)
        raise ProviderError(
            f"{len(failed)} of {len(corpus)} requests for {corpus.name!r} failed; coverage {table.coverage:.3f}",
            partial=table,
            attempts=attempts,
        )
    return table


def humanize_corpus(corpus: TextCorpus, provider: LlmProvider, audit: Optional[AuditLog] = None,
                    concurrency: int = 1, name: Optional[str] = None) -> TextCorpus:
    """Rewrite every document with the informal-paraphrase prompt."""
    prompts = [build_humanize_prompt(doc) for doc in corpus.documents]
    results = _run(corpus, prompts, provider, concurrency)
    docs = []
    for i, (completion, err) in enumerate(results):
        if audit is not None:
            audit.record(corpus.name, "humanize", i, corpus.ids[i], prompts[i], completion,
                         error=None if err is None else str(err))
        if err is not None:
            raise err
        docs.append(completion)
    return TextCorpus(corpus.ids, tuple(docs), name or f"{corpus.name} (humanized)")


def replay_audit(path) -> dict:
    """Rebuild the attribute tables of an audit log, keyed by corpus name."""
    records = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        if rec.get("type") == "attributes":
            records.setdefault(rec["corpus"], []).append(rec)
    tables = {}
    for name, recs in records.items():
        recs.sort(key=lambda r: r["index"])
        attrs = tuple(recs[0]["attributes"])
        ok = [r for r in recs if r["error"] is None]
        rows = [[{"yes": YES, "no": NO}.get(a, UNPARSED) for a in parse_answers(r["completion"], len(attrs))]
                for r in ok]
        tables[name] = AttributeTable(
            name,
            attrs,
            tuple(r["doc_id"] for r in ok),
            np.array(rows, dtype=np.int8).reshape(len(rows), len(attrs)),
            tuple(r["completion"] for r in ok),
            tuple(r["doc_id"] for r in recs if r["error"] is not None),
        )
    return tables


# -------------------------------------------------------------- separability


@dataclass
class SeparabilityResult:
    accuracy: float
    n_train: int
    n_test: int
    n_imputed: int
    seed: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_imputed": self.n_imputed,
            "seed": self.seed,
            "split": "80/20 stratified",
            "imputation": "unparsed answers count as no",
            "notes": list(self.notes),
        }


def separability_score(table_d, table_dp, seed: int = 0, test_size: float = 0.2, l2: float = 1e-2) -> SeparabilityResult:
    """Held-out accuracy of a logistic model telling the two corpora apart by their answers.

    Accepts ``AttributeTable`` objects or arrays coded 1 / 0 / -1 (unparsed).
    Unparsed answers are imputed as no, with a warning giving their count.
    """
    A = table_d.answers if isinstance(table_d, AttributeTable) else np.asarray(table_d)
    B = table_dp.answers if isinstance(table_dp, AttributeTable) else np.asarray(table_dp)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValidationError("both corpora need answer vectors over the same attributes")
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise SingleClass("separability needs documents from both corpora")
    X = np.vstack([A, B]).astype(float)
    y = np.concatenate([np.ones(A.shape[0]), np.zeros(B.shape[0])])
    unparsed = X < 0
    n_imputed = int(unparsed.sum())
    notes = []
    if n_imputed:
        msg = f"{n_imputed} unparsed answers imputed as no"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    X[unparsed] = 0.0
    try:
        Xtr, Xte, ytr, yte = train_test_split(X, y, test_size=test_size, random_state=seed, stratify=y)
    except ValueError as exc:
        raise ValidationError(f"cannot split {X.shape[0]} documents: {exc}") from exc
    model = fit_logistic(Xtr, ytr, l2)
    acc = float(np.mean(model.predict(Xte) == yte))
    return SeparabilityResult(acc, len(ytr), len(yte), n_imputed, seed, notes)
