"""Deterministic template-generated relation corpus with dependency heads.

Five relations plus None. Sentences come from fixed clause templates whose
head rules are written out below; optional distractor relative clauses and
conjoined clauses push the marked entities ten or more tokens apart. The
data is synthetic and mirrors no statistic of any real corpus.
"""

from __future__ import annotations

import numpy as np

from .corpus import Instance, NONE_LABEL, validate_instance, write_corpus

RELATIONS = ("born_in", "employed_by", "located_in", "founder_of", "capital_of")
NONE_SHARE = 0.4

FIRST = ["John", "Maria", "Wei", "Amina", "Carlos", "Elena", "Kofi", "Yuki", "Pierre",
         "Sara", "Omar", "Ingrid", "Raj", "Lucia", "Tomas", "Hana", "Ivan", "Nadia"]
LAST = ["Smith", "Garcia", "Chen", "Okafor", "Rossi", "Novak", "Tanaka", "Dubois",
        "Kowalski", "Haddad", "Larsen", "Patel", "Moreau", "Silva", "Kim", "Berg"]
CITY = [["Paris"], ["Lagos"], ["Osaka"], ["Lima"], ["Oslo"], ["New", "York"], ["San", "Diego"],
        ["Cairo"], ["Quito"], ["Hanoi"], ["Perth"], ["Kraków"], ["Rio", "de", "Janeiro"],
        ["Tunis"], ["Denver"], ["Accra"]]
COUNTRY = [["France"], ["Nigeria"], ["Japan"], ["Peru"], ["Norway"], ["Egypt"], ["Ecuador"],
           ["Vietnam"], ["Ghana"], ["Tunisia"], ["Poland"], ["Brazil"], ["Chile"], ["Kenya"]]
CAPITALS = [(["Paris"], ["France"]), (["Lagos"], ["Nigeria"]), (["Tokyo"], ["Japan"]),
            (["Lima"], ["Peru"]), (["Oslo"], ["Norway"]), (["Cairo"], ["Egypt"]),
            (["Quito"], ["Ecuador"]), (["Hanoi"], ["Vietnam"]), (["Accra"], ["Ghana"]),
            (["Tunis"], ["Tunisia"]), (["Warsaw"], ["Poland"]), (["Nairobi"], ["Kenya"])]
ORG_HEAD = ["Acme", "Globex", "Initech", "Umbrella", "Vertex", "Nimbus", "Orion", "Helix",
            "Zenith", "Apex", "Summit", "Cobalt", "Aurora", "Pioneer"]
ORG_TAIL = [["Corp"], ["Bank"], ["University"], ["Labs"], ["Group"], ["Motors"], ["Media"]]
DISTRACT_VERB = ["met", "praised", "visited", "criticized", "interviewed", "thanked", "joined"]
DISTRACT_OBJ = [["the", "mayor"], ["several", "reporters"], ["a", "local", "charity"],
                ["the", "new", "committee"], ["two", "former", "colleagues"]]
YEARS = ["1998", "2003", "2011", "1987", "2015", "1975"]


def _person(rng):
    if rng.random() < 0.3:
        return [LAST[rng.integers(len(LAST))]]
    return [FIRST[rng.integers(len(FIRST))], LAST[rng.integers(len(LAST))]]


def _org(rng):
    return [ORG_HEAD[rng.integers(len(ORG_HEAD))]] + ORG_TAIL[rng.integers(len(ORG_TAIL))]


def _city(rng):
    return list(CITY[rng.integers(len(CITY))])


def _country(rng):
    return list(COUNTRY[rng.integers(len(COUNTRY))])


class _Builder:
    """Appends tokens left to right; heads are symbolic keys resolved at the end."""

    def __init__(self, rng):
        self.rng = rng
        self.words, self.heads, self.keys = [], [], {}
        self.distract = False

    def tok(self, word, head=None, key=None):
        if key is not None:
            self.keys[key] = len(self.words)
        self.words.append(word)
        self.heads.append(head)

    def entity(self, words, head, key):
        start = len(self.words)
        for w in words[:-1]:
            self.tok(w, key)
        self.tok(words[-1], head, key)
        return start, len(self.words) - 1

    def leading_entity(self, words, head, key):
        """An entity that opens a clause; may carry a relative-clause distractor."""
        span = self.entity(words, head, key)
        if self.distract:
            self.distract = False
            rng = self.rng
            v = f"{key}/rc"
            self.tok(",", v)
            self.tok("who", v)
            if rng.random() < 0.5:
                self.tok("recently", v)
            self.tok(DISTRACT_VERB[rng.integers(len(DISTRACT_VERB))], key, v)
            obj = DISTRACT_OBJ[rng.integers(len(DISTRACT_OBJ))]
            self.entity(obj, v, f"{v}/obj")
            self.tok("in", v, f"{v}/in")
            self.entity(_city(rng) if rng.random() < 0.5 else _country(rng), f"{v}/in", f"{v}/loc")
            self.tok(",", v)
        return span

    def resolve(self):
        return [-1 if h is None else self.keys[h] for h in self.heads]


# Each clause writes tokens into the builder and returns (span_a, span_b),
# the spans of its first and second relation argument. ``p`` prefixes keys,
# ``parent`` is the head of the clause's root (None for the sentence root).

def _born_in(b, p, parent):
    rng = b.rng
    form = rng.integers(3)
    if form == 0:
        a = b.leading_entity(_person(rng), f"{p}V", f"{p}A")
        b.tok("was", f"{p}V")
        b.tok("born", parent, f"{p}V")
        b.tok("in", f"{p}V", f"{p}P")
        c = b.entity(_city(rng), f"{p}P", f"{p}B")
    elif form == 1:
        a = b.leading_entity(_person(rng), f"{p}N", f"{p}A")
        b.tok("is", f"{p}N")
        b.tok("a", f"{p}N")
        b.tok("native", parent, f"{p}N")
        b.tok("of", f"{p}N", f"{p}P")
        c = b.entity(_city(rng), f"{p}P", f"{p}B")
    else:
        c = b.leading_entity(_city(rng), f"{p}V", f"{p}B")
        b.tok("is", parent, f"{p}V")
        b.tok("where", f"{p}R")
        a = b.entity(_person(rng), f"{p}R", f"{p}A")
        b.tok("was", f"{p}R")
        b.tok("born", f"{p}V", f"{p}R")
    return a, c


def _employed_by(b, p, parent):
    rng = b.rng
    a = b.leading_entity(_person(rng), f"{p}V", f"{p}A")
    if rng.random() < 0.5:
        b.tok("works", parent, f"{p}V")
        b.tok("for", f"{p}V", f"{p}P")
    else:
        b.tok("is", f"{p}V")
        b.tok("an", f"{p}V")
        b.tok("employee", parent, f"{p}V")
        b.tok("of", f"{p}V", f"{p}P")
    c = b.entity(_org(rng), f"{p}P", f"{p}B")
    return a, c


def _located_in(b, p, parent):
    rng = b.rng
    a = b.leading_entity(_org(rng), f"{p}V", f"{p}A")
    b.tok("is", f"{p}V")
    b.tok("based" if rng.random() < 0.5 else "headquartered", parent, f"{p}V")
    b.tok("in", f"{p}V", f"{p}P")
    c = b.entity(_city(rng), f"{p}P", f"{p}B")
    return a, c


def _founder_of(b, p, parent):
    rng = b.rng
    if rng.random() < 0.5:
        a = b.leading_entity(_person(rng), f"{p}V", f"{p}A")
        b.tok("founded", parent, f"{p}V")
        c = b.entity(_org(rng), f"{p}V", f"{p}B")
    else:
        c = b.leading_entity(_org(rng), f"{p}V", f"{p}B")
        b.tok("was", f"{p}V")
        b.tok("founded", parent, f"{p}V")
        b.tok("by", f"{p}V", f"{p}P")
        a = b.entity(_person(rng), f"{p}P", f"{p}A")
    return a, c


def _capital_of(b, p, parent):
    rng = b.rng
    city, country = CAPITALS[rng.integers(len(CAPITALS))]
    a = b.leading_entity(city, f"{p}N", f"{p}A")
    b.tok("is", f"{p}N")
    b.tok("the", f"{p}N")
    b.tok("capital", parent, f"{p}N")
    b.tok("of", f"{p}N", f"{p}P")
    c = b.entity(country, f"{p}P", f"{p}B")
    return a, c


_NEUTRAL = [
    ("visited", _person, _city, None),
    ("criticized", _person, _org, None),
    ("sued", _org, _org, None),
    ("met", _person, _person, "with"),
    ("praised", _person, _country, None),
    ("left", _person, _org, None),
]


def _neutral(b, p, parent):
    rng = b.rng
    verb, fa, fb, prep = _NEUTRAL[rng.integers(len(_NEUTRAL))]
    a = b.leading_entity(fa(rng), f"{p}V", f"{p}A")
    b.tok(verb, parent, f"{p}V")
    head = f"{p}V"
    if prep:
        b.tok(prep, f"{p}V", f"{p}P")
        head = f"{p}P"
    c = b.entity(fb(rng), head, f"{p}B")
    return a, c


CLAUSES = {
    "born_in": _born_in, "employed_by": _employed_by, "located_in": _located_in,
    "founder_of": _founder_of, "capital_of": _capital_of,
}


def _clause_root(b: _Builder, start: int, parent) -> int:
    return next(i for i in range(start, len(b.words)) if b.heads[i] == parent)


def _other_clause(rng):
    if rng.random() < 0.6:
        return CLAUSES[RELATIONS[rng.integers(len(RELATIONS))]]
    return _neutral


def generate_instance(rng: np.random.Generator) -> Instance:
    b = _Builder(rng)
    if rng.random() < NONE_SHARE:
        label = NONE_LABEL
        swapped = rng.random() < 0.3
        clause = CLAUSES[RELATIONS[rng.integers(len(RELATIONS))]] if swapped else _neutral
    else:
        label = RELATIONS[rng.integers(len(RELATIONS))]
        swapped = False
        clause = CLAUSES[label]
    conj_before = rng.random() < 0.15
    conj_after = not conj_before and rng.random() < 0.2
    distract = rng.random() < 0.3
    if conj_before:
        _other_clause(rng)(b, "c0:", None)
        b.keys["ROOT"] = _clause_root(b, 0, None)
        b.tok("and", "m:HEAD")
        start = len(b.words)
        b.distract = distract
        a, c = clause(b, "m:", "ROOT")
        b.keys["m:HEAD"] = _clause_root(b, start, "ROOT")
    else:
        b.distract = distract
        a, c = clause(b, "m:", None)
        b.keys["ROOT"] = _clause_root(b, 0, None)
        if conj_after:
            b.tok("and", "c1:HEAD")
            start = len(b.words)
            _other_clause(rng)(b, "c1:", "ROOT")
            b.keys["c1:HEAD"] = _clause_root(b, start, "ROOT")
    if rng.random() < 0.3:
        b.tok("in", "ROOT", "Y:in")
        b.tok(YEARS[rng.integers(len(YEARS))], "Y:in")
    b.tok(".", "ROOT")
    e1, e2 = (c, a) if swapped else (a, c)
    inst = Instance(tuple(b.words), e1, e2, tuple(b.resolve()), label)
    return validate_instance(inst)


def generate(seed: int, size: int) -> list:
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    return [generate_instance(rng) for _ in range(size)]


def generate_splits(seed: int, sizes) -> list:
    """Consecutive draws from one seeded stream, one list per requested size."""
    rng = np.random.default_rng(seed)
    return [[generate_instance(rng) for _ in range(n)] for n in sizes]


def write_synthetic(seed: int, size: int, path) -> list:
    data = generate(seed, size)
    write_corpus(data, path)
    return data
