"""Alphabets, transition relations, admissible words and eventually periodic points."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

from .errors import NotAdmissible, UnknownLetter, WrapNotAdmissible

Word = tuple


@dataclass(frozen=True)
class TransitionSystem:
    """A finite alphabet together with the allowed letter-to-letter transitions.

    Letters keep the order in which they are given; that order drives every
    lexicographic enumeration in the package.
    """

    letters: tuple
    transitions: frozenset
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        letters = tuple(self.letters)
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "transitions", frozenset((a, b) for a, b in self.transitions))
        if len(set(letters)) != len(letters):
            raise ValueError("letters must be distinct")
        known = set(letters)
        for a, b in self.transitions:
            if a not in known or b not in known:
                raise UnknownLetter(f"transition {a!r}->{b!r} uses an unknown letter")
        if self.strict:
            outs = {a for a, _ in self.transitions}
            ins = {b for _, b in self.transitions}
            stranded = [a for a in letters if a not in outs or a not in ins]
            if stranded:
                raise ValueError(f"letters without an incoming or outgoing transition: {stranded}")

    @classmethod
    def full(cls, letters: Iterable[Hashable]) -> "TransitionSystem":
        letters = tuple(letters)
        return cls(letters, frozenset((a, b) for a in letters for b in letters))

    @classmethod
    def from_forbidden(cls, letters: Iterable[Hashable], forbidden: Iterable[tuple]) -> "TransitionSystem":
        letters = tuple(letters)
        bad = {tuple(p) for p in forbidden}
        return cls(letters, frozenset((a, b) for a in letters for b in letters if (a, b) not in bad))

    @cached_property
    def index(self) -> dict:
        return {a: i for i, a in enumerate(self.letters)}

    @cached_property
    def successors(self) -> dict:
        return {a: tuple(b for b in self.letters if (a, b) in self.transitions) for a in self.letters}

    @cached_property
    def predecessors(self) -> dict:
        return {b: tuple(a for a in self.letters if (a, b) in self.transitions) for b in self.letters}

    def allows(self, a, b) -> bool:
        return (a, b) in self.transitions

    def reversed(self) -> "TransitionSystem":
        return TransitionSystem(self.letters, frozenset((b, a) for a, b in self.transitions), strict=self.strict)

    def matrix(self):
        """0/1 transition matrix in letter order, as nested lists."""
        return [[1 if (a, b) in self.transitions else 0 for b in self.letters] for a in self.letters]

    def letter_key(self, word: Sequence) -> tuple:
        idx = self.index
        return tuple(idx[a] for a in word)


def is_admissible(word: Sequence, ts: TransitionSystem) -> bool:
    known = ts.index
    for a in word:
        if a not in known:
            raise UnknownLetter(f"unknown letter {a!r}")
    return all((word[i], word[i + 1]) in ts.transitions for i in range(len(word) - 1))


def enumerate_words(ts: TransitionSystem, n: int) -> list:
    """All admissible words of length n in lexicographic order of letter indices."""
    if n <= 0:
        return [()]
    out = []
    succ = ts.successors
    stack = [(a,) for a in reversed(ts.letters)]
    while stack:
        w = stack.pop()
        if len(w) == n:
            out.append(w)
            continue
        for b in reversed(succ[w[-1]]):
            stack.append(w + (b,))
    return out


def count_words(ts: TransitionSystem, n: int) -> int:
    if n <= 0:
        return 1
    counts = {a: 1 for a in ts.letters}
    for _ in range(n - 1):
        nxt = {a: 0 for a in ts.letters}
        for a, c in counts.items():
            for b in ts.successors[a]:
                nxt[b] += c
        counts = nxt
    return sum(counts.values())


def primitive_root(w: Sequence) -> tuple:
    w = tuple(w)
    n = len(w)
    for d in range(1, n + 1):
        if n % d == 0 and w[:d] * (n // d) == w:
            return w[:d]
    return w


def min_rotation(w: Sequence, key=None) -> tuple:
    w = tuple(w)
    if not w:
        return w
    rots = [w[i:] + w[:i] for i in range(len(w))]
    return min(rots, key=key) if key else min(rots)


def necklaces(ts: TransitionSystem, max_period: int) -> list:
    """Primitive cyclic words of length <= max_period, one rotation each.

    The representative is the lexicographically least rotation (by letter
    index); the cyclic wrap must be an allowed transition.
    """
    out = []
    key = ts.letter_key
    for n in range(1, max_period + 1):
        for w in enumerate_words(ts, n):
            if (w[-1], w[0]) not in ts.transitions:
                continue
            if primitive_root(w) != w:
                continue
            if key(min_rotation(w, key=key)) != key(w):
                continue
            out.append(w)
    return out


@dataclass(frozen=True)
class SymbolicPoint:
    """Eventually periodic bi-infinite sequence ...LLL core RRR...

    ``anchor`` is the index into ``core`` of position 0, so x_0 = core[anchor]
    when that index is in range; the core starts at absolute position -anchor.
    Construction normalizes to a canonical form, so equal sequences compare
    equal.
    """

    left_period: tuple
    core: tuple
    right_period: tuple
    anchor: int = 0

    def __post_init__(self):
        L, core, R = tuple(self.left_period), tuple(self.core), tuple(self.right_period)
        if not L or not R:
            raise ValueError("periods must be nonempty")
        L, core, R, anchor = _canonical(L, core, R, int(self.anchor))
        object.__setattr__(self, "left_period", L)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "right_period", R)
        object.__setattr__(self, "anchor", anchor)

    @property
    def core_start(self) -> int:
        return -self.anchor

    @property
    def core_end(self) -> int:
        return -self.anchor + len(self.core)

    @property
    def is_periodic(self) -> bool:
        return not self.core and self.left_period == self.right_period

    def at(self, i: int):
        return _letter(self.left_period, self.core, self.right_period, -self.anchor, i)

    def segment(self, start: int, stop: int) -> tuple:
        return tuple(self.at(i) for i in range(start, stop))

    def letters(self) -> set:
        return set(self.left_period) | set(self.core) | set(self.right_period)

    def __str__(self):
        def s(w):
            return word_to_str(w)
        return f"({s(self.left_period)}^;{s(self.core)}|{self.anchor};{s(self.right_period)}^)"


def _letter(L, core, R, s, i):
    if i < s:
        return L[(i - s) % len(L)]
    j = i - s
    if j < len(core):
        return core[j]
    return R[(j - len(core)) % len(R)]


def _canonical(L, core, R, anchor):
    L = primitive_root(L)
    R = primitive_root(R)
    s = -anchor

    def x(i):
        return _letter(L, core, R, s, i)

    nl, nr = len(L), len(R)
    e = s + len(core)
    limit = s - 2 * (nl + nr) - 2
    while e > limit and x(e - 1) == x(e - 1 + nr):
        e -= 1
    if e <= limit:
        P = min_rotation(R)
        # the P-block starting at absolute p satisfies p ≡ s0 (mod nr); x_0 = P[(-p) % nr]
        for p in range(e, e + nr):
            if tuple(x(p + k) for k in range(nr)) == P:
                return P, (), P, (-p) % nr
        raise AssertionError("rotation not found")
    Rmin = min_rotation(R)
    while tuple(x(e + k) for k in range(nr)) != Rmin:
        e += 1
    s0 = s
    cap = e + 2 * (nl + nr) + 2
    while s0 < cap and x(s0) == x(s0 - nl):
        s0 += 1
    s1 = min(s0, e)
    Lmin = min_rotation(L)
    while tuple(x(s1 - nl + k) for k in range(nl)) != Lmin:
        s1 -= 1
    new_core = tuple(x(i) for i in range(s1, e))
    return Lmin, new_core, Rmin, -s1


def check_point(p: SymbolicPoint, ts: TransitionSystem) -> None:
    """Raise NotAdmissible unless every adjacent pair of p is allowed."""
    lo = p.core_start - 2 * len(p.left_period) - 1
    hi = p.core_end + 2 * len(p.right_period) + 1
    seg = p.segment(lo, hi)
    if not is_admissible(seg, ts):
        raise NotAdmissible(f"point {p} is not admissible")


def point(left, core, right, anchor: int = 0, ts: TransitionSystem | None = None) -> SymbolicPoint:
    p = SymbolicPoint(tuple(left), tuple(core), tuple(right), anchor)
    if ts is not None:
        check_point(p, ts)
    return p


def periodic_point(period: Sequence, ts: TransitionSystem | None = None) -> SymbolicPoint:
    period = tuple(period)
    if not period:
        raise ValueError("period must be nonempty")
    if ts is not None:
        if period[-1] in ts.index and (period[-1], period[0]) not in ts.transitions:
            raise WrapNotAdmissible(f"wrap {period[-1]!r}->{period[0]!r} is forbidden")
        if not is_admissible(period, ts):
            raise NotAdmissible(f"period {period} is not admissible")
    return SymbolicPoint(period, (), period, 0)


def shift(p: SymbolicPoint, k: int) -> SymbolicPoint:
    return SymbolicPoint(p.left_period, p.core, p.right_period, p.anchor + k)


def window(p: SymbolicPoint, center: int, radius: int) -> tuple:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return p.segment(center - radius, center + radius + 1)


def word_to_str(word: Sequence) -> str:
    word = tuple(word)
    if all(isinstance(a, int) and 0 <= a <= 9 for a in word) or all(
        isinstance(a, str) and len(a) == 1 and a not in "[],;" for a in word
    ):
        return "".join(str(a) for a in word)
    return "[" + ",".join(str(a) for a in word) + "]"


def parse_word(text: str, ts: TransitionSystem | None = None) -> tuple:
    """Inverse of word_to_str; letters are mapped onto ts letters when given."""
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ValueError(f"malformed word {text!r}")
        body = text[1:-1].strip()
        raw = [t.strip() for t in body.split(",")] if body else []
    else:
        raw = list(text)
    if ts is None:
        return tuple(int(t) if t.lstrip("-").isdigit() else t for t in raw)
    by_name = {str(a): a for a in ts.letters}
    out = []
    for t in raw:
        if t not in by_name:
            raise UnknownLetter(f"unknown letter {t!r}")
        out.append(by_name[t])
    return tuple(out)
