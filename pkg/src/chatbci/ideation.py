"""Structured research-idea generation and a mockable novelty check.

Ideas come back from the provider in a line-anchored labeled format
(Question:/Gap:/Motivation:/Approach:), which survives LLM formatting drift
far better than free-form JSON. Novelty is scored lexically against a
literature-search client, with an offline fixture implementation for tests
and a best-effort HTTP client for a real scholarly search API.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import GenerationError
from .knowledge import word_jaccard

IDEA_FIELDS = ("question", "gap", "motivation", "approach")
_LABELS = {
    "question:": "question",
    "gap:": "gap",
    "motivation:": "motivation",
    "approach:": "approach",
}


@dataclass
class IdeaCard:
    id: str
    research_question: str
    gap: str
    motivation: str
    approach: str
    novelty_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "research_question": self.research_question,
            "gap": self.gap,
            "motivation": self.motivation,
            "approach": self.approach,
            "novelty_score": self.novelty_score,
        }


@dataclass
class LiteratureMatch:
    title: str
    year: int | None
    similarity: float

    def to_dict(self) -> dict:
        return {"title": self.title, "year": self.year, "similarity": self.similarity}


@dataclass
class NoveltyResult:
    score: float | None
    matches: list[LiteratureMatch]
    warning: str | None = None


@dataclass
class ParseReport:
    dropped: int = 0
    reasons: list[str] = field(default_factory=list)


IDEA_PROMPT_TEMPLATE = (
    "Propose {n} research ideas about: {topic}\n"
    "Format every idea as exactly four labeled lines, nothing else:\n"
    "Question: <one research question>\n"
    "Gap: <what is missing in current work>\n"
    "Motivation: <why closing the gap matters>\n"
    "Approach: <how to investigate it>\n"
)


def parse_ideas(reply: str) -> tuple[list[IdeaCard], ParseReport]:
    """Parse labeled-section idea blocks; incomplete blocks are dropped."""
    report = ParseReport()
    cards: list[IdeaCard] = []
    current: dict[str, str] = {}

    def flush():
        if not current:
            return
        missing = [f for f in IDEA_FIELDS if f not in current]
        if missing:
            report.dropped += 1
            report.reasons.append(f"missing label(s): {', '.join(missing)}")
        else:
            cards.append(
                IdeaCard(
                    id=f"idea-{len(cards) + 1:03d}",
                    research_question=current["question"],
                    gap=current["gap"],
                    motivation=current["motivation"],
                    approach=current["approach"],
                )
            )
        current.clear()

    for line in reply.splitlines():
        stripped = line.strip()
        lowered = stripped.lower()
        for label, fieldname in _LABELS.items():
            if lowered.startswith(label):
                if fieldname == "question" and "question" in current:
                    flush()  # a new Question: starts the next idea
                value = stripped[len(label):].strip()
                if value:
                    current[fieldname] = value
                break
    flush()
    return cards, report


def generate_ideas(n: int, topic_prompt: str, bridge) -> tuple[list[IdeaCard], ParseReport]:
    """Ask the bridge for n structured ideas and parse the reply.

    ``bridge`` is anything with complete(messages) -> str (a provider) or a
    ChatSession, whose send() is used instead.
    """
    if n < 1:
        raise GenerationError("n must be >= 1")
    prompt = IDEA_PROMPT_TEMPLATE.format(n=n, topic=topic_prompt)
    if hasattr(bridge, "send"):
        reply, _ = bridge.send(prompt, phase="idea_generation")
        text = reply.content
    else:
        text = bridge.complete([{"role": "human", "content": prompt}])
    cards, report = parse_ideas(text)
    if not cards:
        raise GenerationError("no parseable ideas in provider reply", raw_text=text)
    return cards, report


def save_ideas(cards: list[IdeaCard], path: str | Path) -> None:
    with Path(path).open("a", encoding="utf-8") as fh:
        for card in cards:
            fh.write(json.dumps(card.to_dict()) + "\n")


class MockLiteratureClient:
    """Offline fixture corpus for novelty checks."""

    def __init__(self, corpus: list[dict] | None = None):
        # corpus entries: {"title": ..., "abstract": ..., "year": ...}
        self.corpus = list(corpus or [])

    def search(self, query: str, limit: int = 20) -> list[dict]:
        return self.corpus[:limit]


class HttpLiteratureClient:
    """Best-effort client for a scholarly-search GET endpoint.

    Expects JSON with a ``data`` list of {title, abstract, year} entries
    (endpoint and field names configurable). Rate-limited to one request
    per second.
    """

    def __init__(
        self,
        endpoint_url: str,
        fields: str = "title,abstract,year",
        client: httpx.Client | None = None,
        min_interval_s: float = 1.0,
        sleep=time.sleep,
        clock=time.monotonic,
    ):
        self.endpoint_url = endpoint_url
        self.fields = fields
        self._client = client or httpx.Client(timeout=30.0)
        self.min_interval_s = min_interval_s
        self._sleep = sleep
        self._clock = clock
        self._last_request = -1e9

    def search(self, query: str, limit: int = 20) -> list[dict]:
        wait = self.min_interval_s - (self._clock() - self._last_request)
        if wait > 0:
            self._sleep(wait)
        resp = self._client.get(
            self.endpoint_url,
            params={"query": query, "fields": self.fields, "limit": limit},
        )
        self._last_request = self._clock()
        resp.raise_for_status()
        payload = resp.json()
        rows = payload.get("data", payload if isinstance(payload, list) else [])
        return [
            {
                "title": row.get("title", ""),
                "abstract": row.get("abstract") or "",
                "year": row.get("year"),
            }
            for row in rows
        ]


def novelty_check(card: IdeaCard, client) -> NoveltyResult:
    """Novelty = 1 - max word-Jaccard(question, title+abstract) over results.

    An empty corpus yields novelty 1.0; a client failure leaves the score
    unset with a warning instead of raising.
    """
    try:
        results = client.search(card.research_question)
    except Exception as exc:  # noqa: BLE001 - network boundary
        return NoveltyResult(score=None, matches=[], warning=f"literature client failed: {exc}")
    matches = []
    for row in results:
        text = f"{row.get('title', '')} {row.get('abstract', '') or ''}"
        sim = word_jaccard(card.research_question, text)
        matches.append(LiteratureMatch(title=row.get("title", ""), year=row.get("year"), similarity=sim))
    matches.sort(key=lambda m: (-m.similarity, m.title))
    best = max((m.similarity for m in matches), default=0.0)
    score = 1.0 - best
    card.novelty_score = score
    return NoveltyResult(score=score, matches=matches)
