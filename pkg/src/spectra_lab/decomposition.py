"""Subhorseshoe/transient decomposition of window graphs and connection queries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import EmptyAfterTrim, NotATransient, PieceNotRealizable
from .geometry import ContractionModel, moran_bracket
from .graph import (FiniteTypeSet, finite_type_from_windows, has_cycle, reachable, reverse_adjacency,
                    shortest_path, tarjan_scc, periodic_windows)
from .spectra import Potential, SublevelSystem, markov_value, prune_sublevel
from .symbolic import SymbolicPoint, TransitionSystem, min_rotation, periodic_point, primitive_root, word_to_str

PERIODIC = "subhorseshoe_periodic"
NONTRIVIAL = "subhorseshoe_nontrivial"


def build_finite_type(s: SublevelSystem) -> FiniteTypeSet:
    if s.graph is None or len(s.graph) == 0:
        raise EmptyAfterTrim(f"sublevel at t={s.t} is empty after trimming")
    return s.graph


@dataclass(frozen=True)
class Piece:
    id: int
    nodes: tuple
    kind: str
    witness_cycle: tuple


@dataclass(frozen=True)
class Transient:
    from_piece: int
    to_piece: int
    nodes: tuple


@dataclass
class Decomposition:
    pieces: list
    transients: list
    index: dict
    graph: FiniteTypeSet | None = None

    def transient(self, a: int, b: int) -> Transient:
        for tr in self.transients:
            if tr.from_piece == a and tr.to_piece == b:
                return tr
        raise NotATransient(f"no transient from piece {a} to piece {b}")

    def to_dict(self) -> dict:
        return {
            "pieces": [{"id": p.id, "kind": p.kind, "size": len(p.nodes),
                        "witness_cycle": word_to_str(p.witness_cycle)} for p in self.pieces],
            "transients": [{"from": t.from_piece, "to": t.to_piece, "size": len(t.nodes)}
                           for t in self.transients],
        }


def _cycle_through(start: int, nodes: set, succ) -> list:
    path = shortest_path(succ, [start], {start}, allowed=nodes)
    return path[:-1] if path else [start]


def decompose_graph(succ: Sequence[Sequence[int]]):
    """Pieces (sorted node lists with kind) and transients on a plain digraph."""
    comps = [c for c in tarjan_scc(succ) if has_cycle(c, succ)]
    comps.sort(key=lambda c: c[0])
    index = {}
    kinds = []
    for pid, comp in enumerate(comps):
        cs = set(comp)
        for v in comp:
            index[v] = pid
        single = all(sum(1 for w in succ[v] if w in cs) == 1 for v in comp)
        kinds.append(PERIODIC if single else NONTRIVIAL)
    pred = reverse_adjacency(succ)
    fwd = [reachable(succ, comp) for comp in comps]
    bwd = [reachable(pred, comp) for comp in comps]
    transients = []
    for a in range(len(comps)):
        for b in range(len(comps)):
            if a == b or comps[b][0] not in fwd[a]:
                continue
            nodes = sorted(v for v in (fwd[a] & bwd[b]) if v not in index)
            transients.append((a, b, nodes))
    return comps, kinds, index, transients


def decompose(M: FiniteTypeSet) -> Decomposition:
    comps, kinds, index, trs = decompose_graph(M.succ)
    pieces = []
    for pid, (comp, kind) in enumerate(zip(comps, kinds)):
        cyc = _cycle_through(comp[0], set(comp), M.succ)
        word = tuple(M.windows[v][-1] for v in cyc)
        word = primitive_root(word)
        key = M.ts.letter_key if M.ts is not None else None
        word = min_rotation(word, key=key)
        pieces.append(Piece(pid, tuple(comp), kind, word))
    transients = [Transient(a, b, tuple(nodes)) for a, b, nodes in trs]
    return Decomposition(pieces, transients, index, M)


def _piece_set(dec: Decomposition, pid: int) -> FiniteTypeSet:
    M = dec.graph
    ws = [M.windows[v] for v in dec.pieces[pid].nodes]
    return finite_type_from_windows(ws, M.memory, ts=M.ts)


def piece_dimension(dec: Decomposition, pid: int, model: ContractionModel, side: str, depth: int = 1) -> float:
    if dec.pieces[pid].kind == PERIODIC:
        return 0.0
    b = moran_bracket(_piece_set(dec, pid), model, depth, side)
    return 0.5 * (b.alpha + b.beta)


def transient_dimension(tau, dec: Decomposition, model: ContractionModel, depth: int = 1) -> float:
    """Stable dimension of the source piece plus unstable dimension of the target piece."""
    if isinstance(tau, Transient):
        a, b = tau.from_piece, tau.to_piece
    else:
        a, b = tau
    if a == b:
        raise NotATransient("a piece is not a transient of itself")
    dec.transient(a, b)
    return piece_dimension(dec, a, model, "s", depth) + piece_dimension(dec, b, model, "u", depth)


# ---------------------------------------------------------------- connections

@dataclass
class ConnectionReport:
    connected: bool
    q_witness: float | None
    heteroclinic_x: SymbolicPoint | None = None
    heteroclinic_y: SymbolicPoint | None = None
    piece_ids: tuple = ()
    t: float | None = None
    memory: int | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def pt(p):
            if p is None:
                return None
            return {"left_period": word_to_str(p.left_period), "core": word_to_str(p.core),
                    "right_period": word_to_str(p.right_period), "anchor": p.anchor}
        return {"connected": self.connected, "q_witness": self.q_witness,
                "heteroclinic_x": pt(self.heteroclinic_x), "heteroclinic_y": pt(self.heteroclinic_y),
                "pieces": [word_to_str(w) if isinstance(w, tuple) else str(w) for w in self.piece_ids],
                "t": self.t, "memory": self.memory, "flags": list(self.flags)}


def _descriptor(piece, memory: int, ts: TransitionSystem):
    """(period word, required windows) for a necklace word or a window set."""
    if isinstance(piece, (set, frozenset)):
        ws = sorted(piece, key=ts.letter_key)
        X = finite_type_from_windows(ws, memory, ts=ts, allow_empty=True)
        if len(X) == 0:
            raise PieceNotRealizable("window set carries no cycle")
        cyc = _cycle_through(0, set(range(len(X))), X.succ)
        word = primitive_root(tuple(X.windows[v][-1] for v in cyc))
        return min_rotation(word, key=ts.letter_key), set(X.windows)
    word = primitive_root(tuple(piece))
    word = min_rotation(word, key=ts.letter_key)
    periodic_point(word, ts)
    return word, set(periodic_windows(word, memory))


def _component_with(X: FiniteTypeSet, windows: set):
    """Node set of the SCC containing all given windows, or None."""
    idx = X.index
    if not all(w in idx for w in windows):
        return None
    nodes = [idx[w] for w in windows]
    fwd = reachable(X.succ, [nodes[0]])
    bwd = reachable(X.pred, [nodes[0]])
    comp = fwd & bwd
    if all(v in comp for v in nodes):
        return comp
    return None


def _present(X: FiniteTypeSet, windows: set) -> bool:
    return _component_with(X, windows) is not None


def _connected_at(X: FiniteTypeSet, w1: set, w2: set) -> bool:
    return _component_with(X, w1 | w2) is not None


def _phase(period: tuple, win: tuple) -> int:
    n = len(period)
    s = period * (len(win) // n + 2)
    for k in range(n):
        if s[k:k + len(win)] == win:
            return k
    raise ValueError("window is not on the periodic orbit")


def _heteroclinic(X: FiniteTypeSet, word1: tuple, w1: set, word2: tuple, w2: set) -> SymbolicPoint | None:
    """Point with past in orbit(word1) and future in orbit(word2) along a shortest path of X."""
    if word1 == word2:
        return periodic_point(word1)
    idx = X.index
    src = [idx[w] for w in periodic_windows(word1, X.memory) if w in idx]
    dst = {idx[w] for w in periodic_windows(word2, X.memory) if w in idx}
    path = shortest_path(X.succ, src, dst)
    if path is None:
        return None
    first = X.windows[path[0]]
    last = X.windows[path[-1]]
    core = first + tuple(X.windows[v][-1] for v in path[1:])
    ph1 = _phase(word1, first)
    left = word1[ph1:] + word1[:ph1]
    ph2 = (_phase(word2, last) + len(last)) % len(word2)
    right = word2[ph2:] + word2[:ph2]
    return SymbolicPoint(left, core, right, 0)


def connected_before(p1, p2, t: float, ts: TransitionSystem, pot: Potential, model: ContractionModel | None,
                     q_grid: Sequence[float] | None = None, memory: int = 6, steps: int = 32,
                     eps: float = 1e-6) -> ConnectionReport:
    """Smallest probed q < t at which one SCC of the inner sublevel graph holds both pieces."""
    word1, w1 = _descriptor(p1, memory, ts)
    word2, w2 = _descriptor(p2, memory, ts)
    ids = (word1, word2)
    q_top = t - eps

    def graph(q):
        return prune_sublevel(ts, pot, model, q, memory, "inner").graph

    def probe(q):
        X = graph(q)
        return X, _connected_at(X, w1, w2)

    if q_grid is not None:
        grid = sorted(q for q in q_grid if q < t)
        hit = None
        X = None
        for q in grid:
            X, ok = probe(q)
            if ok:
                hit = q
                break
        if hit is None:
            top = grid[-1] if grid else q_top
            Xt = graph(top)
            if not (_present(Xt, w1) and _present(Xt, w2)):
                raise PieceNotRealizable(f"pieces {word_to_str(word1)}, {word_to_str(word2)} absent at q={top}")
            return ConnectionReport(False, None, piece_ids=ids, t=t, memory=memory)
        q_hit = hit
    else:
        Xt, ok = probe(q_top)
        if not ok:
            if not (_present(Xt, w1) and _present(Xt, w2)):
                raise PieceNotRealizable(
                    f"pieces {word_to_str(word1)}, {word_to_str(word2)} absent at q={q_top}")
            return ConnectionReport(False, None, piece_ids=ids, t=t, memory=memory)
        q_lo = max(markov_value(pot, periodic_point(word1)), markov_value(pot, periodic_point(word2)))
        lo, hi = min(q_lo, q_top), q_top
        if probe(lo)[1]:
            hi = lo
        else:
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                if probe(mid)[1]:
                    hi = mid
                else:
                    lo = mid
        q_hit = hi
        X = graph(q_hit)
    X = graph(q_hit)
    x = _heteroclinic(X, word1, w1, word2, w2)
    y = _heteroclinic(X, word2, w2, word1, w1)
    rep = ConnectionReport(True, q_hit, x, y, ids, t, memory)
    for name, p in (("x", x), ("y", y)):
        if p is None:
            rep.flags.append(f"no_witness_{name}")
        elif markov_value(pot, p) > q_hit + 1e-12:
            rep.flags.append(f"witness_{name}_above_q")
    return rep


def verify_transitivity(r12: ConnectionReport, r23: ConnectionReport, r13: ConnectionReport) -> bool:
    return (not (r12.connected and r23.connected)) or r13.connected


def chains(items: Sequence[tuple], connects: Callable[[object, object, float], bool]) -> list:
    """Greedy maximal chains over (piece, threshold) pairs with ascending thresholds.

    Start at the least unused index and repeatedly append the least unused
    later index j such that the current piece connects with piece j before t_j.
    Returns lists of indices.
    """
    ts_ = [t for _, t in items]
    if any(b < a for a, b in zip(ts_, ts_[1:])):
        raise ValueError("thresholds must be ascending")
    used = [False] * len(items)
    out = []
    for i in range(len(items)):
        if used[i]:
            continue
        chain = [i]
        used[i] = True
        cur = i
        while True:
            nxt = None
            for j in range(cur + 1, len(items)):
                if not used[j] and connects(items[cur][0], items[j][0], items[j][1]):
                    nxt = j
                    break
            if nxt is None:
                break
            chain.append(nxt)
            used[nxt] = True
            cur = nxt
        out.append(chain)
    return out
