import json

import httpx
import pytest

from chatbci.errors import GenerationError
from chatbci.ideation import (
    HttpLiteratureClient,
    IdeaCard,
    MockLiteratureClient,
    generate_ideas,
    novelty_check,
    parse_ideas,
    save_ideas,
)
from chatbci.llm import MockProvider

# Canned reply used as the row-one parsing fixture.
ROW_ONE_REPLY = (
    "Question: What are the optimal EEG frequency bands for decoding, and how do they vary across subjects?\n"
    "Gap: Inconsistent findings on band contributions.\n"
    "Motivation: Personalization can improve performance.\n"
    "Approach: Perform detailed frequency band analysis.\n"
)


def brute_force_jaccard(a: str, b: str) -> float:
    import re

    wa = set(re.findall(r"[a-z0-9]+", a.lower()))
    wb = set(re.findall(r"[a-z0-9]+", b.lower()))
    if not wa and not wb:
        return 0.0
    return len(wa & wb) / len(wa | wb)


def make_card(question="How do frequency bands vary across subjects?"):
    return IdeaCard(id="i1", research_question=question, gap="g", motivation="m", approach="a")


# -- parsing -------------------------------------------------------------------


def test_row_one_fixture_parses_to_exact_fields():
    cards, report = parse_ideas(ROW_ONE_REPLY)
    assert report.dropped == 0
    assert len(cards) == 1
    card = cards[0]
    assert card.research_question == (
        "What are the optimal EEG frequency bands for decoding, and how do they vary across subjects?"
    )
    assert card.gap == "Inconsistent findings on band contributions."
    assert card.motivation == "Personalization can improve performance."
    assert card.approach == "Perform detailed frequency band analysis."


def test_missing_gap_label_drops_idea():
    reply = "Question: A?\nMotivation: M.\nApproach: P.\n"
    cards, report = parse_ideas(reply)
    assert cards == []
    assert report.dropped == 1
    assert "gap" in report.reasons[0]


def test_three_well_formed_ideas():
    reply = "\n".join(
        f"Question: Q{i}?\nGap: G{i}.\nMotivation: M{i}.\nApproach: A{i}."
        for i in range(3)
    )
    provider = MockProvider()
    from chatbci.ideation import IDEA_PROMPT_TEMPLATE

    provider.add_response(IDEA_PROMPT_TEMPLATE.format(n=3, topic="decoding"), reply)
    cards, report = generate_ideas(3, "decoding", provider)
    assert len(cards) == 3
    assert report.dropped == 0


def test_zero_parseable_ideas_is_generation_error():
    provider = MockProvider()
    with pytest.raises(GenerationError) as exc_info:
        generate_ideas(1, "anything", provider)
    assert exc_info.value.raw_text  # raw reply attached


def test_fields_are_substrings_of_reply():
    reply = (
        "Intro chatter\n"
        "Question: Does preprocessing change outcomes?\n"
        "Gap: Pipelines are never compared.\n"
        "Motivation: Reproducibility depends on it.\n"
        "Approach: Grid over pipelines.\n"
        "Question: Second one?\nGap: g2.\nMotivation: m2.\nApproach: a2.\n"
    )
    cards, _ = parse_ideas(reply)
    assert len(cards) == 2
    for card in cards:
        for value in (card.research_question, card.gap, card.motivation, card.approach):
            assert value in reply


def test_save_ideas_jsonl(tmp_path):
    cards, _ = parse_ideas(ROW_ONE_REPLY)
    save_ideas(cards, tmp_path / "ideas.jsonl")
    lines = (tmp_path / "ideas.jsonl").read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["gap"] == "Inconsistent findings on band contributions."


# -- novelty -------------------------------------------------------------------


def test_verbatim_title_gives_zero_novelty():
    card = make_card()
    client = MockLiteratureClient([{"title": card.research_question, "abstract": "", "year": 2020}])
    result = novelty_check(card, client)
    assert result.score == 0.0
    assert result.matches[0].similarity == 1.0


def test_empty_corpus_gives_full_novelty():
    result = novelty_check(make_card(), MockLiteratureClient([]))
    assert result.score == 1.0
    assert result.matches == []


def test_novelty_matches_brute_force_oracle():
    corpus = [
        {"title": "Frequency bands in motor imagery", "abstract": "mu and beta rhythms", "year": 2019},
        {"title": "Subject variability in EEG", "abstract": "decoding across subjects", "year": 2021},
        {"title": "Deep networks for EEG", "abstract": "convolutional decoding models", "year": 2018},
        {"title": "Across subject transfer", "abstract": "how bands vary across subjects", "year": 2022},
        {"title": "Unrelated proteomics", "abstract": "mass spectrometry of yeast", "year": 2015},
    ]
    card = make_card()
    result = novelty_check(card, MockLiteratureClient(corpus))
    sims = [
        brute_force_jaccard(card.research_question, f"{row['title']} {row['abstract']}")
        for row in corpus
    ]
    assert result.score == pytest.approx(1.0 - max(sims))
    assert [m.similarity for m in result.matches] == pytest.approx(sorted(sims, reverse=True))


def test_novelty_monotone_under_corpus_growth():
    card = make_card()
    corpus = []
    last = 1.0
    rows = [
        {"title": "totally unrelated", "abstract": "", "year": 2000},
        {"title": "frequency bands", "abstract": "", "year": 2001},
        {"title": card.research_question, "abstract": "", "year": 2002},
    ]
    for row in rows:
        corpus.append(row)
        score = novelty_check(card, MockLiteratureClient(list(corpus))).score
        assert score <= last + 1e-12
        last = score


def test_client_failure_leaves_score_unset():
    class DeadClient:
        def search(self, query, limit=20):
            raise ConnectionError("api down")

    result = novelty_check(make_card(), DeadClient())
    assert result.score is None
    assert result.matches == []
    assert "api down" in result.warning


# -- HTTP client -----------------------------------------------------------------


def test_http_client_parses_data_and_rate_limits():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(dict(request.url.params))
        return httpx.Response(
            200,
            json={"data": [{"title": "T1", "abstract": "A1", "year": 2020}]},
        )

    transport = httpx.MockTransport(handler)
    sleeps = []
    fake_now = [0.0]

    def clock():
        return fake_now[0]

    def sleep(s):
        sleeps.append(s)
        fake_now[0] += s

    client = HttpLiteratureClient(
        "https://example.test/search",
        client=httpx.Client(transport=transport),
        sleep=sleep,
        clock=clock,
    )
    rows = client.search("first query")
    assert rows == [{"title": "T1", "abstract": "A1", "year": 2020}]
    assert calls[0]["query"] == "first query"

    client.search("second query")  # immediate second call must wait ~1 s
    assert sleeps and sleeps[-1] > 0.5


def test_http_client_feeds_novelty_check():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"data": [{"title": "x", "abstract": None, "year": 1999}]})

    client = HttpLiteratureClient(
        "https://example.test/search",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
        min_interval_s=0.0,
    )
    result = novelty_check(make_card(), client)
    assert result.score is not None
