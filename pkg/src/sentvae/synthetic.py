"""Seeded toy-corpus generators for desk-scale experiments and tests.

The toolkit trains on any plain-text corpus; these generators produce small
template-grammar corpora whose statistics (short sentences, tiny closed
vocabulary) make overfitting and directional comparisons cheap to run.
"""

from __future__ import annotations

import numpy as np

_SUBJECTS = ["the cat", "the dog", "a bird", "the fox", "a mouse",
             "the owl", "the pig", "a hen"]
_VERBS = ["chases", "sees", "likes", "follows"]
_OBJECTS = ["the ball", "the stick", "a leaf", "the rope"]
_TAILS = ["in the garden", "near the river", "under the tree",
          "by the door", ""]


def toy_corpus(n: int, rng: np.random.Generator, distinct: bool = True) -> list[str]:
    """Short subject-verb-object sentences from a closed ~26 word vocabulary."""
    seen = set()
    out: list[str] = []
    while len(out) < n:
        parts = [_SUBJECTS[rng.integers(len(_SUBJECTS))],
                 _VERBS[rng.integers(len(_VERBS))],
                 _OBJECTS[rng.integers(len(_OBJECTS))],
                 _TAILS[rng.integers(len(_TAILS))]]
        sent = " ".join(p for p in parts if p)
        if distinct:
            if sent in seen:
                continue
            seen.add(sent)
        out.append(sent)
    return out


_TOPICS = ["council", "minister", "company", "team", "festival", "school",
           "museum", "airport", "harbour", "market", "village", "union",
           "committee", "band", "farm", "court", "library", "studio"]
_ACTIONS = ["announced", "confirmed", "reported", "denied", "welcomed",
            "rejected", "launched", "reviewed", "postponed", "approved"]
_THINGS = ["a new plan", "the annual budget", "a major deal", "the final report",
           "an urgent review", "a record profit", "the long delay",
           "a public inquiry", "the bold proposal", "a small change"]
_WHEN = ["on monday", "last week", "this spring", "late yesterday",
         "earlier today", "over the weekend", ""]
_WHY = ["after months of talks", "despite strong protests",
        "following the recent storm", "amid growing concern",
        "to the surprise of many", ""]


def news_like_corpus(n: int, rng: np.random.Generator) -> list[str]:
    """Headline-style sentences, 5 to 16 words, vocabulary around 90 words."""
    out = []
    for _ in range(n):
        parts = [f"the {_TOPICS[rng.integers(len(_TOPICS))]}",
                 _ACTIONS[rng.integers(len(_ACTIONS))],
                 _THINGS[rng.integers(len(_THINGS))],
                 _WHEN[rng.integers(len(_WHEN))],
                 _WHY[rng.integers(len(_WHY))]]
        out.append(" ".join(p for p in parts if p))
    return out


_ANIMALS = ["rabbit", "badger", "weasel", "ferret", "beaver", "otter",
            "squirrel", "hedgehog", "marmot", "stoat", "vole", "shrew"]
_MIDDLES = ["walked over the old bridge and found",
            "ran across the green field and ate",
            "crept along the stone wall and took"]
_FOODS = ["berries", "acorns", "clover", "roots", "seeds", "apples",
          "carrots", "grubs", "snails", "cress", "barley", "oats"]


def deterministic_suffix_corpus(n: int, rng: np.random.Generator) -> list[str]:
    """Ten-word sentences whose first nine words pin down the tenth.

    The final word is a fixed function of the animal in position two, so a
    model that reads the prefix can learn the suffix exactly.
    """
    out = []
    for _ in range(n):
        a = int(rng.integers(len(_ANIMALS)))
        mid = _MIDDLES[rng.integers(len(_MIDDLES))]
        out.append(f"the {_ANIMALS[a]} {mid} {_FOODS[a]}")
    return out


_SWAPS = {"cat": "kitten", "dog": "hound", "ball": "toy", "stick": "branch",
          "garden": "yard", "river": "stream", "tree": "oak", "door": "gate",
          "chases": "pursues", "sees": "spots", "likes": "enjoys",
          "follows": "trails"}


def paraphrase_pairs(n: int, rng: np.random.Generator) -> list[tuple[str, str]]:
    """Equivalent sentence pairs: the second side swaps words for synonyms."""
    pairs = []
    for sent in toy_corpus(n, rng, distinct=False):
        words = sent.split()
        swapped = [(_SWAPS[w] if w in _SWAPS and rng.random() < 0.7 else w)
                   for w in words]
        pairs.append((sent, " ".join(swapped)))
    return pairs
