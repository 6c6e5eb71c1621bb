"""Pregroup types, lexicon lookup and left-to-right reduction.

>>> t = PregroupType.parse("n^r.s.n^l")
>>> d = reduce([N, t, N])
>>> d.is_sentence, len(d.cups)
(True, 2)
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence


class BasicType(str, Enum):
    n = "n"
    p = "p"
    s = "s"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class SimpleType:
    """A basic type with an adjoint index.

    ``z < 0`` counts left adjoints, ``z > 0`` right adjoints.
    """

    base: BasicType
    z: int = 0

    @property
    def l(self) -> SimpleType:
        return SimpleType(self.base, self.z - 1)

    @property
    def r(self) -> SimpleType:
        return SimpleType(self.base, self.z + 1)

    def cancels(self, other: SimpleType) -> bool:
        """True when ``self . other <= 1``, i.e. ``other`` is ``self^r``."""
        return self.base == other.base and other.z == self.z + 1

    def __str__(self) -> str:
        suffix = "^l" * -self.z if self.z < 0 else "^r" * self.z
        return f"{self.base}{suffix}"


_FACTOR = re.compile(r"^([nps])((?:\^(?:[lr]+|0))*)$")


@dataclass(frozen=True)
class PregroupType:
    factors: tuple[SimpleType, ...] = ()

    @classmethod
    def of(cls, *factors: SimpleType | BasicType | str) -> PregroupType:
        out = []
        for f in factors:
            if isinstance(f, SimpleType):
                out.append(f)
            else:
                out.append(SimpleType(BasicType(f)))
        return cls(tuple(out))

    @classmethod
    def parse(cls, text: str) -> PregroupType:
        """Parse the surface syntax ``n^r.s.n^l``; ``1`` or ``""`` is the unit.

        Adjoint suffixes may be written ``^r^r`` or ``^rr``; ``^0`` is accepted.
        """
        text = text.strip()
        if text in ("", "1"):
            return cls()
        factors = []
        for chunk in text.split("."):
            m = _FACTOR.match(chunk.strip())
            if m is None:
                raise ValueError(f"malformed pregroup factor {chunk!r} in {text!r}")
            marks = m.group(2).replace("^", "").replace("0", "")
            if "l" in marks and "r" in marks:
                raise ValueError(f"mixed adjoint suffixes in {chunk!r}")
            z = -len(marks) if "l" in marks else len(marks)
            factors.append(SimpleType(BasicType(m.group(1)), z))
        return cls(tuple(factors))

    def adjoint(self, direction: str) -> PregroupType:
        if direction not in ("left", "right"):
            raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
        step = -1 if direction == "left" else 1
        return PregroupType(tuple(SimpleType(f.base, f.z + step) for f in reversed(self.factors)))

    @property
    def l(self) -> PregroupType:
        return self.adjoint("left")

    @property
    def r(self) -> PregroupType:
        return self.adjoint("right")

    def __matmul__(self, other: PregroupType) -> PregroupType:
        return PregroupType(self.factors + other.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def __str__(self) -> str:
        return ".".join(map(str, self.factors)) if self.factors else "1"


def adjoint(t: PregroupType, direction: str) -> PregroupType:
    return t.adjoint(direction)


N = PregroupType.of("n")
S = PregroupType.of("s")
P = PregroupType.of("p")
SENTENCE = S


class UnknownWordError(KeyError):
    def __init__(self, word: str):
        super().__init__(word)
        self.word = word

    def __str__(self) -> str:
        return f"unknown word {self.word!r}"


class ReductionError(ValueError):
    def __init__(self, words: Sequence[str], residue: PregroupType):
        self.words = tuple(words)
        self.residue = residue
        super().__init__(f"{' '.join(words)!r} does not reduce to s; residue is {residue}")


@dataclass(frozen=True)
class Derivation:
    """Result of a reduction.

    ``cups`` index into the flattened factor sequence and are stored as
    ``(left, right)`` pairs, sorted by left position.
    """

    input: tuple[tuple[str, PregroupType], ...]
    cups: tuple[tuple[int, int], ...]
    result: PregroupType
    residue_positions: tuple[int, ...] = field(default=())

    @property
    def is_sentence(self) -> bool:
        return self.result == SENTENCE

    @property
    def factors(self) -> tuple[SimpleType, ...]:
        return tuple(f for _, t in self.input for f in t.factors)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(w for w, _ in self.input)


def reduce(types: Sequence[PregroupType], words: Sequence[str] | None = None) -> Derivation:
    """Contract adjacent ``x . x^r`` / ``x^l . x`` pairs with a single stack pass.

    Always returns a :class:`Derivation`; check ``is_sentence`` for success.
    """
    if not types:
        raise ValueError("reduce needs at least one type")
    if words is None:
        words = [f"w{i}" for i in range(len(types))]
    if len(words) != len(types):
        raise ValueError("words and types differ in length")
    flat = [f for t in types for f in t.factors]
    stack: list[int] = []
    cups = []
    for pos, factor in enumerate(flat):
        if stack and flat[stack[-1]].cancels(factor):
            cups.append((stack.pop(), pos))
        else:
            stack.append(pos)
    cups.sort()
    return Derivation(
        input=tuple(zip(words, types)),
        cups=tuple(cups),
        result=PregroupType(tuple(flat[i] for i in stack)),
        residue_positions=tuple(stack),
    )


SHAPES = ("cylinder", "sphere", "cube", "cone")
RELATION_WORDS = {"left": "isLeftOf", "right": "isRightOf"}

_DEFAULT_ENTRIES = {
    **{shape: "n" for shape in SHAPES},
    "isLeftOf": "n^r.s.n^l",
    "isRightOf": "n^r.s.n^l",
    # long-form vocabulary; reducible but never compiled to circuits
    "the": "n.n^l",
    "is": "n^r.s.p^l",
    "on": "p.n^l",
    "to": "p.n^l",
    "of": "p.n^l",
    "left": "n.p^l",
    "right": "n.p^l",
    "cat": "n",
    "couch": "n",
}


class Lexicon(Mapping[str, PregroupType]):
    """Case-sensitive word to type map."""

    def __init__(self, entries: Mapping[str, PregroupType | str]):
        self._entries = {
            w: t if isinstance(t, PregroupType) else PregroupType.parse(t) for w, t in entries.items()
        }

    def __getitem__(self, word: str) -> PregroupType:
        try:
            return self._entries[word]
        except KeyError:
            raise UnknownWordError(word) from None

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def default(cls) -> Lexicon:
        return cls(_DEFAULT_ENTRIES)

    @classmethod
    def load(cls, path) -> Lexicon:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("lexicon file must hold a JSON object mapping word -> type")
        return cls(raw)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({w: str(t) for w, t in self._entries.items()}, fh, indent=2)


def tokenize(caption: str | Iterable[str]) -> list[str]:
    if isinstance(caption, str):
        return caption.split()
    return list(caption)


def parse(caption: str | Iterable[str], lexicon: Lexicon | None = None) -> Derivation:
    """Type each word and reduce; raise unless the caption reduces to ``s``."""
    lexicon = Lexicon.default() if lexicon is None else lexicon
    words = tokenize(caption)
    types = [lexicon[w] for w in words]
    d = reduce(types, words)
    if not d.is_sentence:
        raise ReductionError(words, d.result)
    return d
