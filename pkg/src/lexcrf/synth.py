"""Synthetic nested-NER corpus from a small head-driven template grammar.

Noun phrases are ``det [mod] noun [of NP]``, ``name noun [of NP]`` or a bare
name. A phrase is an
entity exactly when its head noun (or name) carries a type, and the type set
is a fixed function of that head token, so the corpus is learnable and its
entities never cross.
"""
from __future__ import annotations

import numpy as np

from .data import CorpusRecord
from .types import Entity

HEAD_TYPES = {
    "president": {"PER"}, "doctor": {"PER"}, "teacher": {"PER"}, "minister": {"PER"},
    "university": {"ORG"}, "company": {"ORG"}, "bank": {"ORG"}, "ministry": {"ORG"},
    "city": {"GPE"}, "country": {"GPE"}, "province": {"GPE"},
    "river": {"LOC"}, "coast": {"LOC"}, "mountain": {"LOC"},
    "airport": {"FAC"}, "bridge": {"FAC"}, "station": {"FAC"},
    "hospital": {"ORG", "FAC"}, "capital": {"GPE", "LOC"},
}
NAME_TYPES = {
    "alice": {"PER"}, "bob": {"PER"}, "carol": {"PER"}, "paris": {"GPE"},
    "texas": {"GPE"}, "acme": {"ORG"}, "nile": {"LOC"},
}
PLAIN_NOUNS = ["book", "idea", "car", "letter", "plan", "report", "picture"]
DETS = ["the", "a", "this"]
ADJS = ["big", "old", "new", "small"]
VERBS = ["visited", "saw", "praised", "left", "called", "built"]
ADVERBIALS = [["yesterday"], ["today"], ["on", "monday"], ["again"]]
LABELS = sorted({t for v in (*HEAD_TYPES.values(), *NAME_TYPES.values()) for t in v})

MAX_LEN = 12


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _noun_phrase(rng, tokens, entities, depth):
    start = len(tokens)
    u = rng.random()
    if u < 0.25:
        name = _pick(rng, sorted(NAME_TYPES))
        tokens.append(name)
        entities.append(Entity(start, start, frozenset(NAME_TYPES[name]), start))
        return
    r = rng.random()
    if u < 0.4:
        # determiner-less name modifier at the left edge ("paris bank")
        r = 1.0
        name = _pick(rng, sorted(NAME_TYPES))
        tokens.append(name)
        entities.append(Entity(start, start, frozenset(NAME_TYPES[name]), start))
    else:
        tokens.append(_pick(rng, DETS))
    if r < 0.2:
        tokens.append(_pick(rng, ADJS))
    elif r < 0.45:
        name = _pick(rng, sorted(NAME_TYPES))
        at = len(tokens)
        tokens.append(name)
        entities.append(Entity(at, at, frozenset(NAME_TYPES[name]), at))
    if rng.random() < 0.7:
        noun = _pick(rng, sorted(HEAD_TYPES))
        types = HEAD_TYPES[noun]
    else:
        noun = _pick(rng, PLAIN_NOUNS)
        types = None
    head = len(tokens)
    tokens.append(noun)
    if depth < 2 and rng.random() < 0.45:
        tokens.append("of")
        _noun_phrase(rng, tokens, entities, depth + 1)
    if types:
        entities.append(Entity(start, len(tokens) - 1, frozenset(types), head))


def _sentence(rng):
    tokens, entities = [], []
    _noun_phrase(rng, tokens, entities, 0)
    tokens.append(_pick(rng, VERBS))
    _noun_phrase(rng, tokens, entities, 0)
    if rng.random() < 0.3:
        tokens.extend(_pick(rng, ADVERBIALS))
    tokens.append(".")
    return tokens, entities


def generate_synthetic_corpus(seed: int, size: int, max_len: int = MAX_LEN) -> list[CorpusRecord]:
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < size:
        tokens, entities = _sentence(rng)
        if len(tokens) > max_len:
            continue
        out.append(CorpusRecord(tokens, entities))
    return out


def synthetic_splits(seed: int = 0, n_train: int = 2000, n_dev: int = 200, n_test: int = 200):
    records = generate_synthetic_corpus(seed, n_train + n_dev + n_test)
    return (records[:n_train], records[n_train:n_train + n_dev], records[n_train + n_dev:])


def is_nested(record: CorpusRecord) -> bool:
    spans = [e.span for e in record.entities]
    for a in spans:
        for b in spans:
            if a != b and a[0] <= b[0] and b[1] <= a[1]:
                return True
    return False
