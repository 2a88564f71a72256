"""Labeled C-function datasets stored as JSONL rows of func, target, idx and project."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

SPLITS = ("train", "valid", "test")


class CorpusError(ValueError):
    """Raised for malformed dataset files or invalid samples."""


@dataclass(frozen=True)
class FunctionSample:
    id: int
    source: str
    label: int
    project: str | None = None
    split: str = "train"

    def __post_init__(self):
        if self.label not in (0, 1):
            raise CorpusError(f"sample {self.id}: label must be 0 or 1, got {self.label!r}")
        if self.split not in SPLITS:
            raise CorpusError(f"sample {self.id}: unknown split {self.split!r}")
        if not self.source or "(" not in self.source or "{" not in self.source:
            raise CorpusError(f"sample {self.id}: source does not look like a C function")

    def with_source(self, source: str) -> "FunctionSample":
        return replace(self, source=source)


@dataclass(frozen=True)
class Corpus:
    samples: tuple[FunctionSample, ...] = ()
    name: str = "corpus"
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        by_id = {}
        for s in samples:
            if s.id in by_id:
                raise CorpusError(f"duplicate id {s.id} in corpus {self.name!r}")
            by_id[s.id] = s
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[FunctionSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> FunctionSample:
        return self.samples[i]

    def get(self, sample_id: int) -> FunctionSample:
        return self._by_id[sample_id]

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def with_samples(self, samples: Iterable[FunctionSample]) -> "Corpus":
        return Corpus(tuple(samples), self.name)


def _parse_line(line: str, lineno: int, split: str) -> FunctionSample:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusError(f"line {lineno}: malformed JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    for key in ("func", "target"):
        if key not in obj:
            raise CorpusError(f"line {lineno}: missing required key {key!r}")
    target = obj["target"]
    if isinstance(target, bool) or target not in (0, 1):
        raise CorpusError(f"line {lineno}: 'target' must be 0 or 1")
    if not isinstance(obj["func"], str):
        raise CorpusError(f"line {lineno}: 'func' must be a string")
    idx = obj.get("idx", lineno - 1)
    if isinstance(idx, bool) or not isinstance(idx, int):
        raise CorpusError(f"line {lineno}: 'idx' must be an integer")
    project = obj.get("project")
    try:
        return FunctionSample(int(idx), obj["func"], int(target), project, split)
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {e}") from None


def load_jsonl(path: str | Path, split: str = "train", name: str | None = None) -> Corpus:
    """Read a JSONL dataset.

    Lines without "idx" get their 0-based line number as id. Keys other than
    func/target/idx/project are ignored.
    """
    if split not in SPLITS:
        raise CorpusError(f"unknown split {split!r}")
    path = Path(path)
    samples = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            s = _parse_line(line, lineno, split)
            if s.id in seen:
                raise CorpusError(f"line {lineno}: duplicate id {s.id}")
            seen.add(s.id)
            samples.append(s)
    return Corpus(tuple(samples), name or path.name.split(".")[0])


def sample_to_json(s: FunctionSample) -> str:
    obj = {"func": s.source, "target": s.label, "idx": s.id}
    if s.project is not None:
        obj["project"] = s.project
    return json.dumps(obj, ensure_ascii=False)


def write_jsonl(corpus: Corpus | Iterable[FunctionSample], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in corpus:
            fh.write(sample_to_json(s) + "\n")
    return path


def exclude_project(corpus: Corpus, project: str) -> Corpus:
    """Drop samples whose project equals `project` (case-insensitive)."""
    key = project.casefold()
    kept = [s for s in corpus if s.project is None or s.project.casefold() != key]
    return corpus.with_samples(kept)


def split_of(corpus: Corpus, split: str) -> Corpus:
    return corpus.with_samples(s for s in corpus if s.split == split)
