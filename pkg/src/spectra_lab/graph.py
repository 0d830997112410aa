"""Window graphs (finite-type sets), trimming, and strongly connected components."""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import EmptyAfterTrim
from .symbolic import TransitionSystem, enumerate_words


def trim(succ: Sequence[Sequence[int]], alive: Iterable[int] | None = None) -> list[int]:
    """Nodes lying on a bi-infinite path: iteratively drop sources and sinks."""
    n = len(succ)
    keep = [False] * n
    if alive is None:
        alive = range(n)
    for v in alive:
        keep[v] = True
    outdeg = [0] * n
    indeg = [0] * n
    pred = [[] for _ in range(n)]
    for v in range(n):
        if not keep[v]:
            continue
        for w in succ[v]:
            if keep[w]:
                outdeg[v] += 1
                indeg[w] += 1
                pred[w].append(v)
    queue = deque(v for v in range(n) if keep[v] and (outdeg[v] == 0 or indeg[v] == 0))
    while queue:
        v = queue.popleft()
        if not keep[v]:
            continue
        keep[v] = False
        for w in succ[v]:
            if keep[w]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        for u in pred[v]:
            if keep[u]:
                outdeg[u] -= 1
                if outdeg[u] == 0:
                    queue.append(u)
    return [v for v in range(n) if keep[v]]


def tarjan_scc(succ: Sequence[Sequence[int]]) -> list[list[int]]:
    """Strongly connected components, iterative Tarjan; each component sorted.

    Components come out in reverse topological order (sinks first).
    """
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            nbrs = succ[v]
            if i < len(nbrs):
                work[-1] = (v, i + 1)
                w = nbrs[i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def has_cycle(comp: Sequence[int], succ: Sequence[Sequence[int]]) -> bool:
    if len(comp) > 1:
        return True
    v = comp[0]
    return v in succ[v]


def reachable(succ: Sequence[Sequence[int]], sources: Iterable[int]) -> set[int]:
    seen = set(sources)
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for w in succ[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def reverse_adjacency(succ: Sequence[Sequence[int]]) -> list[list[int]]:
    pred: list[list[int]] = [[] for _ in succ]
    for v, ws in enumerate(succ):
        for w in ws:
            pred[w].append(v)
    return pred


def shortest_path(succ, sources: Iterable[int], targets: set[int], allowed: set[int] | None = None):
    """BFS path (list of nodes) from any source to any target, or None."""
    parent = {}
    queue = deque()
    for s in sources:
        if s not in parent:
            parent[s] = None
            queue.append(s)
    while queue:
        v = queue.popleft()
        if v in targets and parent[v] is not None:
            path = [v]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for w in succ[v]:
            if allowed is not None and w not in allowed:
                continue
            if w in targets:
                path = [w, v]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            if w not in parent:
                parent[w] = v
                queue.append(w)
    return None


@dataclass(frozen=True)
class FiniteTypeSet:
    """Trimmed overlap graph on (2n+1)-windows.

    Edge u -> v iff the last 2n letters of u equal the first 2n letters of v.
    """

    windows: tuple
    memory: int
    succ: tuple
    ts: TransitionSystem | None = None

    @property
    def graph(self) -> tuple:
        return self.succ

    @property
    def window_length(self) -> int:
        return 2 * self.memory + 1

    def __len__(self):
        return len(self.windows)

    @cached_property
    def index(self) -> dict:
        return {w: i for i, w in enumerate(self.windows)}

    @cached_property
    def pred(self) -> list:
        return reverse_adjacency(self.succ)

    @cached_property
    def letters(self) -> tuple:
        seen = sorted({a for w in self.windows for a in w}, key=self._letter_sort)
        return tuple(seen)

    def _letter_sort(self, a):
        if self.ts is not None:
            return self.ts.index[a]
        return a

    def edge_count(self) -> int:
        return sum(len(s) for s in self.succ)

    def _factors(self, k: int) -> frozenset:
        cache = self.__dict__.setdefault("_factor_cache", {})
        if k not in cache:
            cache[k] = frozenset(w[i:i + k] for w in self.windows for i in range(len(w) - k + 1))
        return cache[k]

    def contains(self, word: Sequence) -> bool:
        """True iff word occurs in some bi-infinite path of the graph."""
        word = tuple(word)
        L = self.window_length
        if not word:
            return bool(self.windows)
        if len(word) <= L:
            return word in self._factors(len(word))
        idx = self.index
        return all(word[i:i + L] in idx for i in range(len(word) - L + 1))

    def extends_right(self, word: Sequence) -> set:
        """Letters b such that word+b is in the language (word assumed in it)."""
        return {b for b in self.letters if self.contains(tuple(word) + (b,))}

    def reversed(self) -> "FiniteTypeSet":
        ts = self.ts.reversed() if self.ts is not None else None
        return finite_type_from_windows([w[::-1] for w in self.windows], self.memory, ts=ts)


def overlap_successors(windows: Sequence[tuple], memory: int) -> list[list[int]]:
    by_prefix = defaultdict(list)
    k = 2 * memory
    for i, w in enumerate(windows):
        by_prefix[w[:k]].append(i)
    return [list(by_prefix.get(w[len(w) - k:], ())) for w in windows]


def finite_type_from_windows(windows: Iterable[Sequence], memory: int, ts: TransitionSystem | None = None,
                             allow_empty: bool = False) -> FiniteTypeSet:
    L = 2 * memory + 1
    ws = sorted({tuple(w) for w in windows}, key=(ts.letter_key if ts is not None else None))
    for w in ws:
        if len(w) != L:
            raise ValueError(f"window {w} has length {len(w)}, expected {L}")
    succ = overlap_successors(ws, memory)
    alive = trim(succ)
    if not alive and not allow_empty:
        raise EmptyAfterTrim("no window lies on a bi-infinite path")
    remap = {v: i for i, v in enumerate(alive)}
    kept = [ws[v] for v in alive]
    new_succ = tuple(tuple(remap[w] for w in succ[v] if w in remap) for v in alive)
    return FiniteTypeSet(tuple(kept), memory, new_succ, ts)


def finite_type_from_system(ts: TransitionSystem, memory: int) -> FiniteTypeSet:
    return finite_type_from_windows(enumerate_words(ts, 2 * memory + 1), memory, ts=ts)


def periodic_windows(period: Sequence, memory: int) -> list[tuple]:
    """The (2n+1)-windows met by the periodic orbit of ``period``."""
    period = tuple(period)
    L = 2 * memory + 1
    reps = (L // len(period)) + 2
    s = period * reps
    return sorted({s[i:i + L] for i in range(len(period))})


@dataclass(frozen=True)
class CompleteSubshift:
    """Full shift over a finite set of blocks; every concatenation is allowed."""

    words: tuple

    def __post_init__(self):
        ws = tuple(tuple(w) for w in self.words)
        if any(not w for w in ws):
            raise ValueError("blocks must be nonempty")
        object.__setattr__(self, "words", ws)

    def __len__(self):
        return len(self.words)

    @cached_property
    def letters(self) -> tuple:
        return tuple(sorted({a for w in self.words for a in w}, key=str))

    def reversed(self) -> "CompleteSubshift":
        return CompleteSubshift(tuple(w[::-1] for w in self.words))
