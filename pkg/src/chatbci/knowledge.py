"""Granularity-leveled knowledge store, directory summaries, lexical
retrieval, and token-budgeted context assembly.

Documents live as <doc_id>.kb.json files with keys tags, level0, level1,
level2. Level 0 is a one-liner and always present; deeper levels add detail.
Token accounting uses the ceil(len/4) character heuristic throughout.
"""

from __future__ import annotations

import ast
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, PreconditionError

GRANULARITIES = (0, 1, 2)


def token_estimate(text: str) -> int:
    """ceil(len(text) / 4); the provider-independent budgeting unit."""
    return math.ceil(len(text) / 4)


def _words(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def word_jaccard(a: str, b: str) -> float:
    """Case-folded word-set Jaccard similarity."""
    wa, wb = _words(a), _words(b)
    if not wa and not wb:
        return 0.0
    union = wa | wb
    return len(wa & wb) / len(union)


@dataclass
class KnowledgeDoc:
    doc_id: str
    tags: list[str]
    levels: dict[int, str]  # granularity -> text

    def __post_init__(self):
        self.levels = {int(k): v for k, v in self.levels.items()}
        if 0 not in self.levels:
            raise FormatError(f"doc {self.doc_id!r} lacks the required level-0 text")
        for k in self.levels:
            if k not in GRANULARITIES:
                raise FormatError(f"doc {self.doc_id!r} has unknown granularity {k}")
        sizes = [token_estimate(self.levels[k]) for k in sorted(self.levels)]
        if any(b < a for a, b in zip(sizes, sizes[1:])):
            raise FormatError(
                f"doc {self.doc_id!r}: granularity levels must not shrink ({sizes})"
            )

    def text_at(self, granularity: int) -> str | None:
        return self.levels.get(granularity)

    def finest(self) -> int:
        return max(self.levels)

    def retrieval_text(self) -> str:
        return " ".join(self.tags) + " " + self.levels.get(1, "")

    def to_dict(self) -> dict:
        return {
            "tags": self.tags,
            **{f"level{k}": v for k, v in sorted(self.levels.items())},
        }

    @classmethod
    def from_dict(cls, doc_id: str, d: dict) -> "KnowledgeDoc":
        levels = {k: d[f"level{k}"] for k in GRANULARITIES if f"level{k}" in d}
        return cls(doc_id=doc_id, tags=list(d.get("tags", [])), levels=levels)


@dataclass
class Excerpt:
    doc_id: str
    granularity: int
    text: str
    tokens: int


@dataclass
class ContextBundle:
    excerpts: list[Excerpt]
    budget: int
    total_tokens: int = 0

    def render(self) -> str:
        parts = [f"[{e.doc_id} L{e.granularity}] {e.text}" for e in self.excerpts]
        return "\n\n".join(parts)


class KnowledgeStore:
    """Read-mostly store over a directory of *.kb.json documents."""

    SUFFIX = ".kb.json"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._docs: dict[str, KnowledgeDoc] = {}
        self.reload()

    def reload(self) -> None:
        self._docs = {}
        for path in sorted(self.root.glob(f"*{self.SUFFIX}")):
            doc_id = path.name[: -len(self.SUFFIX)]
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise FormatError(f"unparseable knowledge doc {path}: {exc}") from exc
            self._docs[doc_id] = KnowledgeDoc.from_dict(doc_id, payload)

    def add(self, doc: KnowledgeDoc) -> None:
        """Atomic whole-doc replacement on disk, then in memory."""
        path = self.root / f"{doc.doc_id}{self.SUFFIX}"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc.to_dict(), indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)
        self._docs[doc.doc_id] = doc

    def get(self, doc_id: str) -> KnowledgeDoc:
        return self._docs[doc_id]

    def __len__(self) -> int:
        return len(self._docs)

    def doc_ids(self) -> list[str]:
        return sorted(self._docs)

    def retrieve(self, query: str, k: int) -> list[tuple[KnowledgeDoc, float]]:
        """Top-k docs by word Jaccard against tags + level-1 text.

        Zero-score docs are excluded; ties break by ascending doc_id.
        """
        scored = [
            (doc, word_jaccard(query, doc.retrieval_text()))
            for doc in self._docs.values()
        ]
        scored = [(d, s) for d, s in scored if s > 0.0]
        scored.sort(key=lambda pair: (-pair[1], pair[0].doc_id))
        return scored[: max(0, k)]


def assemble_context(
    docs: list[KnowledgeDoc] | list[tuple[KnowledgeDoc, float]],
    budget_tokens: int,
) -> ContextBundle:
    """Greedy assembly in rank order, never exceeding the budget.

    Each doc enters at the finest granularity whose token estimate fits the
    remaining budget; if none fits the doc is skipped and assembly continues.
    """
    if budget_tokens <= 0:
        raise PreconditionError(f"budget must be positive, got {budget_tokens}")
    bundle = ContextBundle(excerpts=[], budget=budget_tokens)
    remaining = budget_tokens
    for item in docs:
        doc = item[0] if isinstance(item, tuple) else item
        for level in sorted(doc.levels, reverse=True):
            text = doc.levels[level]
            cost = token_estimate(text)
            if cost <= remaining:
                bundle.excerpts.append(
                    Excerpt(doc_id=doc.doc_id, granularity=level, text=text, tokens=cost)
                )
                remaining -= cost
                break
    bundle.total_tokens = budget_tokens - remaining
    return bundle


_TEXT_PROBE_BYTES = 4096


def _read_text(path: Path) -> str | None:
    """File content as UTF-8, or None for binary/undecodable files."""
    try:
        raw = path.read_bytes()
    except OSError:
        raise
    probe = raw[:_TEXT_PROBE_BYTES]
    if b"\x00" in probe:
        return None
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return None


def _headings(path: Path, text: str) -> list[str]:
    """Section list: markdown headings, or top-level defs/classes for .py."""
    if path.suffix == ".py":
        try:
            tree = ast.parse(text)
        except SyntaxError:
            return []
        out = []
        for node in tree.body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                out.append(f"def {node.name}")
            elif isinstance(node, ast.ClassDef):
                out.append(f"class {node.name}")
        return out
    if path.suffix in (".md", ".markdown", ".txt", ".rst"):
        return [line.strip() for line in text.splitlines() if line.lstrip().startswith("#")]
    return []


def summarize_directory(path: str | Path, granularity: int = 0) -> str:
    """Deterministic plain-text summary of a directory tree.

    Level 0 lists the tree with byte sizes; level 1 adds the first non-empty
    line of each text file; level 2 adds a per-file heading/section list.
    Entries are ordered lexicographically; unreadable entries are listed
    with a marker rather than aborting the walk.
    """
    if granularity not in GRANULARITIES:
        raise PreconditionError(f"granularity must be one of {GRANULARITIES}")
    root = Path(path)
    if not root.is_dir():
        raise PreconditionError(f"{root} is not a readable directory")

    lines: list[str] = [f"{root.name}/"]

    def visit(directory: Path, depth: int) -> None:
        indent = "    " * depth
        try:
            entries = sorted(directory.iterdir(), key=lambda p: p.name)
        except OSError:
            lines.append(f"{indent}(unreadable)")
            return
        for entry in entries:
            if entry.is_dir():
                lines.append(f"{indent}{entry.name}/")
                visit(entry, depth + 1)
                continue
            try:
                size = entry.stat().st_size
            except OSError:
                lines.append(f"{indent}{entry.name} (unreadable)")
                continue
            lines.append(f"{indent}{entry.name} ({size} B)")
            if granularity >= 1:
                try:
                    text = _read_text(entry)
                except OSError:
                    lines.append(f"{indent}    | (unreadable)")
                    continue
                if text is None:
                    continue
                first = next((ln.strip() for ln in text.splitlines() if ln.strip()), None)
                if first is not None:
                    lines.append(f"{indent}    | {first}")
                if granularity >= 2:
                    for heading in _headings(entry, text):
                        lines.append(f"{indent}    # {heading}")

    visit(root, 1)
    return "\n".join(lines) + "\n"


def seed_store(root: str | Path) -> KnowledgeStore:
    """Store at ``root`` populated with the packaged starter documents."""
    store = KnowledgeStore(root)
    seed_dir = Path(__file__).parent / "kb_seed"
    for path in sorted(seed_dir.glob(f"*{KnowledgeStore.SUFFIX}")):
        doc_id = path.name[: -len(KnowledgeStore.SUFFIX)]
        if doc_id not in store._docs:
            doc = KnowledgeDoc.from_dict(doc_id, json.loads(path.read_text(encoding="utf-8")))
            store.add(doc)
    return store
