import json

import pytest

from lexcrf.data import CorpusRecord, dump_jsonl, label_inventory, load_jsonl
from lexcrf.errors import ParseError, ValidationError
from lexcrf.types import Entity


def write(tmp_path, lines):
    path = tmp_path / "c.jsonl"
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def test_empty_file(tmp_path):
    assert load_jsonl(write(tmp_path, [])) == []


def test_round_trip(tmp_path):
    recs = [
        CorpusRecord(["the", "bank", "of", "paris"],
                     [Entity(0, 3, frozenset({"ORG"}), 1), Entity(3, 3, frozenset({"LOC", "GPE"}), None)]),
        CorpusRecord(["hello"], []),
    ]
    path = tmp_path / "out.jsonl"
    dump_jsonl(recs, path)
    back = load_jsonl(path)
    assert back == recs
    dump_jsonl(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()
    assert label_inventory(back) == ["GPE", "LOC", "ORG"]


@pytest.mark.parametrize("entity,needle", [
    ({"start": 2, "end": 1, "labels": ["A"]}, "end"),
    ({"start": 0, "end": 5, "labels": ["A"]}, ""),
    ({"start": 0, "end": 1, "labels": []}, "labels"),
    ({"start": 0, "end": 1}, "labels"),
    ({"start": 0, "end": 1, "labels": ["A"], "head": 2}, ""),
])
def test_invalid_entities(tmp_path, entity, needle):
    good = json.dumps({"tokens": ["a", "b", "c"], "entities": []})
    bad = json.dumps({"tokens": ["a", "b", "c"], "entities": [entity]})
    with pytest.raises(ValidationError) as err:
        load_jsonl(write(tmp_path, [good, bad]))
    assert err.value.line == 2
    assert needle in str(err.value)


def test_crossing_entities_rejected(tmp_path):
    bad = json.dumps({"tokens": ["a", "b", "c"], "entities": [
        {"start": 0, "end": 1, "labels": ["A"]}, {"start": 1, "end": 2, "labels": ["B"]}]})
    with pytest.raises(ValidationError) as err:
        load_jsonl(write(tmp_path, [bad]))
    assert err.value.line == 1


def test_parse_error_reports_position(tmp_path):
    good = json.dumps({"tokens": ["a"]})
    with pytest.raises(ParseError) as err:
        load_jsonl(write(tmp_path, [good, good, '{"tokens": [']))
    assert err.value.line == 3
    assert "column" in str(err.value)


def test_inventory_is_enforced(tmp_path):
    rec = json.dumps({"tokens": ["a"], "entities": [{"start": 0, "end": 0, "labels": ["X"]}]})
    with pytest.raises(ValidationError):
        load_jsonl(write(tmp_path, [rec]), inventory=["A"])
    assert len(load_jsonl(write(tmp_path, [rec]), inventory=["X"])) == 1


def test_blank_lines_skipped_and_empty_tokens_rejected(tmp_path):
    assert len(load_jsonl(write(tmp_path, [json.dumps({"tokens": ["a"]}), "", "  "]))) == 1
    with pytest.raises(ValidationError):
        load_jsonl(write(tmp_path, [json.dumps({"tokens": []})]))
