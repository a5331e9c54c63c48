import datetime as dt
import json
import random

import pytest

from citepred.corpus import (
    find_citation_markers,
    incremental_merge,
    ingest_paper,
    load_corpus,
    marker_reference_indices,
    persist_corpus,
    plan_crawl_windows,
    remove_papers,
    split_sections,
    strip_citation_markers,
)
from citepred.errors import CorpusFormatError, IngestError, ValidationError
from citepred.records import Corpus, CorpusLevel, PaperRecord


def make_record(i: int, title: str | None = None, level3: str = "") -> PaperRecord:
    title = title or f"Paper number {i}"
    return PaperRecord(
        id=f"p{i:03d}",
        title=title,
        abstract=f"Abstract {i}",
        domain_category="topic0",
        authors=[f"A{i}"],
        year=2020,
        venue="Venue",
        level1_text=f"topic0\n{title}\nAbstract {i}",
        level2_text=f"topic0\n{title}\nAbstract {i}",
        level3_text=f"topic0\n{title}\nAbstract {i}" + level3,
        references=[],
    )


RAW_BODY = """1 Introduction
Citation prediction has a long history [1] and recent surveys (Smith et al., 2020)
cover the area [2-4]. We build on that line of work.
2 Method
Our approach extends [1] with ideas from [2, 3] and earlier systems [12].
3 Results
Everything improves.
4 Conclusion
We conclude with optimism.
References
[1] First cited paper
[2] Second cited paper
"""


def make_raw(**overrides) -> dict:
    raw = {
        "id": "r001",
        "title": "A Study of Citation Prediction",
        "abstract": "We look at predicting citations (Doe et al., 2019) carefully.",
        "domain_category": "ai_ml",
        "authors": ["X", "Y"],
        "year": 2024,
        "venue": "TestConf",
        "body": RAW_BODY,
        "references": [{"title": "First cited paper"}, {"title": "Second cited paper"}],
    }
    raw.update(overrides)
    return raw


class TestCrawlPlanning:
    def test_yearly_below_threshold(self):
        plan = plan_crawl_windows("ai", 1500, (dt.date(2015, 1, 1), dt.date(2024, 12, 31)))
        assert plan.granularity == "year"
        assert len(plan.windows) == 10

    def test_monthly_midrange(self):
        plan = plan_crawl_windows("db", 5000, (dt.date(2021, 1, 1), dt.date(2021, 12, 31)))
        assert plan.granularity == "month"
        assert len(plan.windows) == 12

    def test_weekly_large_volume_non_leap_year(self):
        # 2018-01-01 is a Monday; 365 days = 52 ISO weeks + 1 day.
        plan = plan_crawl_windows("sys", 20000, (dt.date(2018, 1, 1), dt.date(2018, 12, 31)))
        assert plan.granularity == "week"
        assert len(plan.windows) == 53
        assert plan.windows[-1] == (dt.date(2018, 12, 31), dt.date(2018, 12, 31))

    def test_boundary_volumes(self):
        span = (dt.date(2021, 1, 1), dt.date(2021, 12, 31))
        assert plan_crawl_windows("c", 1999, span).granularity == "year"
        assert plan_crawl_windows("c", 2000, span).granularity == "month"
        assert plan_crawl_windows("c", 12000, span).granularity == "month"
        assert plan_crawl_windows("c", 12001, span).granularity == "week"

    def test_windows_tile_span_all_regimes(self):
        rng = random.Random(3)
        for _ in range(60):
            start = dt.date(2015, 1, 1) + dt.timedelta(days=rng.randrange(0, 2000))
            end = start + dt.timedelta(days=rng.randrange(0, 900))
            volume = rng.choice([100, 5000, 50000])
            plan = plan_crawl_windows("x", volume, (start, end))
            assert plan.windows[0][0] == start
            assert plan.windows[-1][1] == end
            for (s1, e1), (s2, _) in zip(plan.windows, plan.windows[1:]):
                assert s1 <= e1
                assert s2 == e1 + dt.timedelta(days=1)

    def test_invalid_span(self):
        with pytest.raises(ValidationError):
            plan_crawl_windows("x", 10, (dt.date(2022, 1, 2), dt.date(2022, 1, 1)))

    def test_negative_volume(self):
        with pytest.raises(ValidationError):
            plan_crawl_windows("x", -1, (dt.date(2022, 1, 1), dt.date(2022, 1, 2)))


class TestMarkerGrammar:
    @pytest.mark.parametrize("marker", [
        "[1]", "[12]", "[2-5]", "[2–5]", "[1,3]", "[1, 3–5, 9]",
        "(Smith et al., 2020)", "(Smith, 2020)", "(Smith and Jones, 2021)",
        "(Smith & Jones, 2021a)", "(Smith et al., 2020; Doe et al., 2021)",
    ])
    def test_markers_removed(self, marker):
        text = f"Before {marker} after."
        cleaned = strip_citation_markers(text)
        assert marker not in cleaned
        assert "Before" in cleaned and "after." in cleaned

    def test_placeholder_tokens_survive(self):
        assert "[ref]_1" in strip_citation_markers("See [ref]_1 and [2].")

    def test_plain_parentheses_survive(self):
        text = "A result (see below) holds (with caveats)."
        assert strip_citation_markers(text) == text

    def test_reference_indices_expansion(self):
        markers = find_citation_markers("x [1] y [2-4] z [1, 3] (Qi et al., 2020)")
        expanded = [marker_reference_indices(m.group(0)) for m in markers]
        assert expanded == [[1], [2, 3, 4], [1, 3], []]


class TestSectionSplitting:
    def test_standard_layout(self):
        sections = split_sections(RAW_BODY)
        headings = [s.heading for s in sections]
        assert headings == ["1 Introduction", "2 Method", "3 Results", "4 Conclusion", "References"]

    def test_preamble_kept(self):
        sections = split_sections("stray text\n1 Introduction\nbody")
        assert sections[0].heading == ""
        assert "stray text" in sections[0].text


class TestIngest:
    def test_levels_and_reference_section(self):
        record = ingest_paper(make_raw())
        assert "recent surveys" in record.level2_text
        assert "First cited paper" not in record.level3_text  # references dropped
        assert "We conclude with optimism." in record.level3_text
        assert record.missing_introduction is False

    def test_markers_stripped_from_level3(self):
        record = ingest_paper(make_raw())
        assert "[12]" not in record.level3_text
        assert "(Smith et al., 2020)" not in record.level3_text
        assert not find_citation_markers(record.level3_text)

    def test_missing_introduction_flag(self):
        raw = make_raw(body="2 Method\nJust methods [1].\n")
        record = ingest_paper(raw)
        assert record.missing_introduction is True
        assert record.level2_text == record.level1_text

    def test_missing_title_rejected(self):
        with pytest.raises(IngestError) as err:
            ingest_paper(make_raw(title=""))
        assert "title" in str(err.value)

    def test_missing_abstract_rejected(self):
        with pytest.raises(IngestError) as err:
            ingest_paper(make_raw(abstract="   "))
        assert "abstract" in str(err.value)

    def test_prefix_nesting(self):
        record = ingest_paper(make_raw())
        assert record.level2_text.startswith(record.level1_text)
        assert record.level3_text.startswith(record.level2_text)

    def test_prefix_nesting_on_planted_corpus(self, planted):
        corpus, queries, _ = planted
        for record in list(corpus) + list(queries):
            assert record.level2_text.startswith(record.level1_text)
            assert record.level3_text.startswith(record.level2_text)
            assert not find_citation_markers(record.level3_text)

    def test_sections_retained_with_markers(self):
        record = ingest_paper(make_raw())
        method = next(s for s in record.sections if s.heading == "2 Method")
        assert "[1]" in method.text

    def test_empty_reference_titles_dropped(self):
        raw = make_raw(references=[{"title": "Good one"}, {"title": "  !! "}])
        record = ingest_paper(raw)
        assert [r.title for r in record.references] == ["Good one"]


class TestRemovePapers:
    def test_remove_present(self):
        corpus = Corpus(make_record(i) for i in range(100))
        remaining, report = remove_papers(corpus, {f"p{i:03d}" for i in range(10)})
        assert len(remaining) == 90
        assert len(report.removed) == 10

    def test_remove_empty_set_is_identity(self):
        corpus = Corpus(make_record(i) for i in range(5))
        remaining, report = remove_papers(corpus, set())
        assert remaining.ids() == corpus.ids()
        assert report.removed == [] and report.not_found == []

    def test_absent_ids_reported(self):
        corpus = Corpus(make_record(i) for i in range(100))
        targets = {f"p{i:03d}" for i in range(5)} | {"zz1", "zz2", "zz3"}
        remaining, report = remove_papers(corpus, targets)
        assert len(remaining) == 95
        assert report.not_found == ["zz1", "zz2", "zz3"]


class TestPersistence:
    def test_round_trip(self, tmp_path):
        corpus = Corpus(make_record(i) for i in range(3))
        path = tmp_path / "corpus.jsonl"
        persist_corpus(corpus, path)
        loaded = load_corpus(path)
        assert [r.to_dict() for r in loaded] == [r.to_dict() for r in corpus]

    def test_round_trip_planted(self, tmp_path, planted):
        corpus, _, _ = planted
        path = tmp_path / "planted.jsonl"
        persist_corpus(corpus, path)
        loaded = load_corpus(path)
        assert [r.to_dict() for r in loaded] == [r.to_dict() for r in corpus]

    def test_duplicate_id_names_offender(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        row = json.dumps(make_record(1).to_dict())
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(CorpusFormatError) as err:
            load_corpus(path)
        assert "p001" in str(err.value)

    def test_truncated_line_reports_position(self, tmp_path):
        rows = [json.dumps(make_record(i).to_dict()) for i in range(1000)]
        rows[499] = rows[499][: len(rows[499]) // 2]
        path = tmp_path / "broken.jsonl"
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(CorpusFormatError) as err:
            load_corpus(path)
        assert "line 500" in str(err.value)

    def test_missing_key_rejected(self, tmp_path):
        data = make_record(1).to_dict()
        del data["level3_text"]
        path = tmp_path / "missing.jsonl"
        path.write_text(json.dumps(data) + "\n")
        with pytest.raises(CorpusFormatError) as err:
            load_corpus(path)
        assert "line 1" in str(err.value)


class TestIncrementalMerge:
    def test_disjoint_union(self):
        base = Corpus(make_record(i) for i in range(100))
        batch = Corpus(make_record(100 + i) for i in range(50))
        merged = incremental_merge(base, batch)
        assert len(merged) == 150

    def test_resubmission_is_idempotent(self):
        base = Corpus(make_record(i) for i in range(100))
        batch = Corpus(make_record(i) for i in range(50))
        merged = incremental_merge(base, batch)
        assert len(merged) == 100
        again = incremental_merge(merged, batch)
        assert [r.to_dict() for r in again] == [r.to_dict() for r in merged]

    def test_title_collision_prefers_longer_fulltext(self):
        short = make_record(1, title="Shared Title")
        long = make_record(2, title="shared title!", level3="\nMuch longer full text body.")
        merged = incremental_merge(Corpus([short]), Corpus([long]))
        assert len(merged) == 1
        assert next(iter(merged)).id == "p002"

    def test_output_ordered_by_id(self):
        base = Corpus([make_record(5), make_record(1)])
        batch = Corpus([make_record(3)])
        merged = incremental_merge(base, batch)
        assert merged.ids() == sorted(merged.ids())


class TestCorpusLevel:
    def test_total_order(self):
        assert CorpusLevel.L1 < CorpusLevel.L2 < CorpusLevel.L3
        assert list(CorpusLevel) == [CorpusLevel.L1, CorpusLevel.L2, CorpusLevel.L3]

    def test_parse(self):
        assert CorpusLevel.parse("l2") is CorpusLevel.L2
        with pytest.raises(CorpusFormatError):
            CorpusLevel.parse("L9")
