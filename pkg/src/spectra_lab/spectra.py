"""The potential f, Markov/Lagrange values, sublevel pruning, spectra and the staircase."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .cf import MP, apply_word, cf_value, succ_items, tail_range
from .errors import MissingTableEntry, NoAccumulation, NumericFailure, SpectraLabError
from .geometry import ContractionModel, interval_length, moran_bracket
from .graph import FiniteTypeSet, finite_type_from_windows
from .symbolic import (SymbolicPoint, TransitionSystem, enumerate_words, necklaces, periodic_point,
                       window)

CF_SUM = "cf_sum"
WINDOW_TABLE = "window_table"
PAD = 1e-12


@dataclass(frozen=True)
class Potential:
    kind: str
    radius: int = 0
    values: tuple = ()
    modulus: float = math.inf

    @property
    def table(self) -> dict:
        d = self.__dict__.get("_table")
        if d is None:
            d = dict(self.values)
            object.__setattr__(self, "_table", d)
        return d

    def to_dict(self) -> dict:
        if self.kind == CF_SUM:
            return {"kind": CF_SUM}
        from .symbolic import word_to_str
        return {"kind": WINDOW_TABLE, "radius": self.radius,
                "values": {word_to_str(w): v for w, v in self.values}, "modulus": self.modulus}


def cf_sum() -> Potential:
    return Potential(CF_SUM)


def window_table(radius: int, values: Mapping, modulus: float | None = None) -> Potential:
    items = tuple(sorted(((tuple(w), float(v)) for w, v in values.items()), key=lambda kv: str(kv[0])))
    for w, _ in items:
        if len(w) != 2 * radius + 1:
            raise ValueError(f"table word {w} does not have length {2 * radius + 1}")
    if modulus is None:
        modulus = max(abs(v) for _, v in items) if items else 0.0
    return Potential(WINDOW_TABLE, radius, items, float(modulus))


# ---------------------------------------------------------------- exact evaluation

def _right_tail(p: SymbolicPoint, i: int):
    """(prefix, period) of the sequence x_i, x_{i+1}, ..."""
    R = p.right_period
    e = p.core_end
    if i >= e:
        k = (i - e) % len(R)
        return (), R[k:] + R[:k]
    return p.segment(i, e), R


def _left_tail(p: SymbolicPoint, j: int):
    """(prefix, period) of the sequence x_j, x_{j-1}, ..."""
    L = p.left_period
    s = p.core_start
    nl = len(L)
    if j < s:
        return (), tuple(L[(j - s - k) % nl] for k in range(nl))
    pre = tuple(p.at(k) for k in range(j, s - 1, -1))
    return pre, tuple(L[(-1 - k) % nl] for k in range(nl))


@lru_cache(maxsize=200000)
def _cf(prefix: tuple, period: tuple):
    return cf_value(prefix, period)


def _f_cf(p: SymbolicPoint, i: int):
    right = _cf(*_right_tail(p, i))
    left = 1 / _cf(*_left_tail(p, i - 1))
    return right + left


def eval_f(pot: Potential, p: SymbolicPoint, position: int = 0) -> float:
    """f at the given absolute position of p (exact surd arithmetic for cf_sum)."""
    if pot.kind == CF_SUM:
        return float(_f_cf(p, position))
    w = window(p, position, pot.radius)
    try:
        return pot.table[w]
    except KeyError:
        raise MissingTableEntry(f"no table value for window {w}") from None


def _orbit_positions(p: SymbolicPoint, pad: int) -> range:
    if p.is_periodic:
        return range(0, len(p.right_period))
    lo = p.core_start - 2 * len(p.left_period) - 1 - pad
    hi = p.core_end + 2 * len(p.right_period) + 1 + pad
    return range(lo, hi + 1)


def markov_value(pot: Potential, p: SymbolicPoint) -> float:
    """sup over the orbit of f.

    Past the core, each tail contributes a sequence that converges
    monotonically or alternately to the periodic limit, so two periods on each
    side plus the periodic sups bound the tails.
    """
    pad = pot.radius if pot.kind == WINDOW_TABLE else 0
    if pot.kind == CF_SUM:
        best = max(_f_cf(p, i) for i in _orbit_positions(p, pad))
        if not p.is_periodic:
            for per in (p.left_period, p.right_period):
                q = periodic_point(per)
                best = max(best, max(_f_cf(q, i) for i in range(len(per))))
        return float(best)
    vals = [eval_f(pot, p, i) for i in _orbit_positions(p, pad)]
    if not p.is_periodic:
        for per in (p.left_period, p.right_period):
            q = periodic_point(per)
            vals.extend(eval_f(pot, q, i) for i in range(len(per)))
    return max(vals)


def lagrange_value(pot: Potential, p: SymbolicPoint) -> float:
    return markov_value(pot, periodic_point(p.right_period))


# ---------------------------------------------------------------- cylinder bounds

def _tail_hulls(ts: TransitionSystem):
    """Per-letter hulls of forward tails [b1; ...] after a letter, and of backward tails before it."""
    out = {}
    fwd = succ_items(ts.successors)
    bwd = succ_items(ts.predecessors)
    for a in ts.letters:
        flo, fhi = tail_range(tuple(ts.successors[a]), fwd)
        blo, bhi = tail_range(tuple(ts.predecessors[a]), bwd)
        out[a] = (float(flo), float(fhi), float(blo), float(bhi))
    return out


_HULL_CACHE: dict = {}


def _hulls(ts):
    h = _HULL_CACHE.get(ts)
    if h is None:
        h = _tail_hulls(ts)
        _HULL_CACHE[ts] = h
    return h


def cylinder_bounds(pot: Potential, word: Sequence, center: int, ts: TransitionSystem,
                    model: ContractionModel | None = None) -> tuple[float, float]:
    """Sound (lo, hi) for f at `center` over every admissible extension of word."""
    word = tuple(word)
    if not 0 <= center < len(word):
        raise ValueError("center must index a letter of the word")
    if pot.kind == WINDOW_TABLE:
        return _table_bounds(pot, word, center)
    hl = _hulls(ts)
    flo, fhi = hl[word[-1]][0], hl[word[-1]][1]
    blo, bhi = hl[word[0]][2], hl[word[0]][3]
    right = word[center:]
    r1, r2 = apply_word(right, flo), apply_word(right, fhi)
    left = word[:center][::-1]
    if left:
        l1, l2 = 1.0 / apply_word(left, blo), 1.0 / apply_word(left, bhi)
    else:
        l1, l2 = 1.0 / blo, 1.0 / bhi
    lo = min(r1, r2) + min(l1, l2)
    hi = max(r1, r2) + max(l1, l2)
    return lo - PAD, hi + PAD


def _table_bounds(pot: Potential, word: tuple, center: int):
    w = pot.radius
    lo_i, hi_i = center - w, center + w
    if lo_i >= 0 and hi_i < len(word):
        key = word[lo_i:hi_i + 1]
        if key not in pot.table:
            raise MissingTableEntry(f"no table value for window {key}")
        v = pot.table[key]
        return v, v
    vals = []
    for key, v in pot.values:
        ok = True
        for k in range(2 * w + 1):
            pos = lo_i + k
            if 0 <= pos < len(word) and word[pos] != key[k]:
                ok = False
                break
        if ok:
            vals.append(v)
    if not vals:
        return -pot.modulus, pot.modulus
    return min(vals), max(vals)


def window_bounds(pot: Potential, windows: Sequence[tuple], center: int, ts: TransitionSystem):
    """Vectorized cylinder bounds for equal-length words."""
    if not windows:
        return np.zeros(0), np.zeros(0)
    if pot.kind == WINDOW_TABLE:
        b = [_table_bounds(pot, tuple(w), center) for w in windows]
        return np.array([x[0] for x in b]), np.array([x[1] for x in b])
    W = np.array(windows, dtype=float)
    hl = _hulls(ts)
    last = [w[-1] for w in windows]
    first = [w[0] for w in windows]
    flo = np.array([hl[a][0] for a in last])
    fhi = np.array([hl[a][1] for a in last])
    blo = np.array([hl[a][2] for a in first])
    bhi = np.array([hl[a][3] for a in first])
    r1, r2 = flo.copy(), fhi.copy()
    for k in range(W.shape[1] - 1, center - 1, -1):
        r1 = W[:, k] + 1.0 / r1
        r2 = W[:, k] + 1.0 / r2
    l1, l2 = blo.copy(), bhi.copy()
    for k in range(0, center):
        l1 = W[:, k] + 1.0 / l1
        l2 = W[:, k] + 1.0 / l2
    l1, l2 = 1.0 / l1, 1.0 / l2
    lo = np.minimum(r1, r2) + np.minimum(l1, l2) - PAD
    hi = np.maximum(r1, r2) + np.maximum(l1, l2) + PAD
    return lo, hi


def global_bounds(pot: Potential, ts: TransitionSystem) -> tuple[float, float]:
    los, his = [], []
    for a in ts.letters:
        lo, hi = cylinder_bounds(pot, (a,), 0, ts)
        los.append(lo)
        his.append(hi)
    return min(los), max(his)


# ---------------------------------------------------------------- sublevel systems

@dataclass
class SublevelSystem:
    t: float
    memory: int
    mode: str
    kept: frozenset
    graph: FiniteTypeSet
    width: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return len(self.graph) == 0


_BOUND_CACHE: dict = {}


def _all_window_bounds(ts, pot, memory):
    key = (ts, pot, memory)
    hit = _BOUND_CACHE.get(key)
    if hit is None:
        wins = enumerate_words(ts, 2 * memory + 1)
        lo, hi = window_bounds(pot, wins, memory, ts)
        hit = (wins, lo, hi)
        if len(_BOUND_CACHE) > 32:
            _BOUND_CACHE.clear()
        _BOUND_CACHE[key] = hit
    return hit


def prune_sublevel(ts: TransitionSystem, pot: Potential, model: ContractionModel | None, t: float,
                   memory: int, mode: str = "inner") -> SublevelSystem:
    """Windows whose cylinder f-bounds are compatible with sup f <= t, trimmed.

    inner keeps hi <= t (every path realizes a point of the sublevel);
    outer keeps lo <= t (every point of the sublevel is covered).
    """
    if memory < 1:
        raise ValueError("memory must be >= 1")
    if mode not in ("inner", "outer"):
        raise ValueError(f"unknown mode {mode!r}")
    wins, lo, hi = _all_window_bounds(ts, pot, memory)
    mask = hi <= t if mode == "inner" else lo <= t
    chosen = [w for w, m in zip(wins, mask.tolist()) if m]
    X = finite_type_from_windows(chosen, memory, ts=ts, allow_empty=True)
    flags = []
    if len(X) == 0:
        flags.append("empty")
    width = float(np.max(hi - lo)) if len(wins) else 0.0
    return SublevelSystem(float(t), memory, mode, frozenset(X.windows), X, width, flags)


# ---------------------------------------------------------------- spectra

@dataclass
class SpectrumSample:
    kind: str
    max_period: int
    entries: list  # (value, witness)
    witnesses: list  # per entry: every merged witness

    @property
    def values(self) -> list:
        return [v for v, _ in self.entries]


def enumerate_spectrum(ts: TransitionSystem, pot: Potential, max_period: int, kind: str = "markov",
                       tol: float = 1e-10) -> SpectrumSample:
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    if kind not in ("markov", "lagrange"):
        raise ValueError(f"unknown kind {kind!r}")
    raw = []
    for w in necklaces(ts, max_period):
        p = periodic_point(w, ts)
        v = markov_value(pot, p) if kind == "markov" else lagrange_value(pot, p)
        raw.append((v, len(w), ts.letter_key(w), w))
    raw.sort()
    # witnesses are shown as their largest rotation (2211 rather than 1122)
    raw = [(v, n, k, _max_rotation(w, ts))
           for v, n, k, w in raw]
    entries, wits = [], []
    for v, _, _, w in raw:
        if entries and v - entries[-1][0] <= tol:
            wits[-1].append(w)
            continue
        entries.append((v, w))
        wits.append([w])
    return SpectrumSample(kind, max_period, entries, wits)


def _max_rotation(w: tuple, ts: TransitionSystem) -> tuple:
    return max((w[i:] + w[:i] for i in range(len(w))), key=ts.letter_key)


# ---------------------------------------------------------------- staircase

@dataclass
class StaircaseRow:
    t: float
    du_in: float
    du_out: float
    ds_in: float
    ds_out: float
    hd_sum: float
    flags: list = field(default_factory=list)


@dataclass
class Staircase:
    grid: list
    jump_candidates: list
    c_estimate: float | None
    c_tilde_estimate: float | None
    memory: int
    depth: int

    def to_csv(self) -> str:
        lines = ["t,du_in,du_out,ds_in,ds_out,hd_sum,flags"]
        for r in self.grid:
            lines.append(",".join([_g9(r.t), _g9(r.du_in), _g9(r.du_out), _g9(r.ds_in), _g9(r.ds_out),
                                   _g9(r.hd_sum), "|".join(r.flags)]))
        return "\n".join(lines) + "\n"


def _g9(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.9g}"


def _sublevel_dims(ts, pot, model, t, memory, depth):
    """(du_in, du_out, ds_in, ds_out) for one threshold."""
    inner = prune_sublevel(ts, pot, model, t, memory, "inner").graph
    outer = prune_sublevel(ts, pot, model, t, memory, "outer").graph
    du_in = moran_bracket(inner, model, depth, "u").alpha if len(inner) else 0.0
    ds_in = moran_bracket(inner, model, depth, "s").alpha if len(inner) else 0.0
    du_out = moran_bracket(outer, model, depth, "u").beta if len(outer) else 0.0
    ds_out = moran_bracket(outer, model, depth, "s").beta if len(outer) else 0.0
    return du_in, du_out, ds_in, ds_out


def staircase(ts: TransitionSystem, pot: Potential, model: ContractionModel, t_grid: Sequence[float],
              memory: int, moran_depth: int = 1, jump_threshold: float = 0.02,
              plateau_tol: float = 1e-3, persistence: bool = True) -> Staircase:
    grid = [float(t) for t in t_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("t grid must be ascending")
    rows = []
    for t in grid:
        flags = []
        try:
            du_in, du_out, ds_in, ds_out = _sublevel_dims(ts, pot, model, t, memory, moran_depth)
        except (NumericFailure, ArithmeticError) as exc:
            flags.append(f"numeric_failure:{exc}")
            du_in = du_out = ds_in = ds_out = float("nan")
        rows.append(StaircaseRow(t, du_in, du_out, ds_in, ds_out, du_out + ds_out, flags))
    jumps = []
    prev_out = None
    if persistence and memory > 1 and len(grid) > 1:
        prev_out = []
        for t in grid:
            outer = prune_sublevel(ts, pot, model, t, memory - 1, "outer").graph
            prev_out.append(moran_bracket(outer, model, moran_depth, "u").beta if len(outer) else 0.0)
    for i in range(1, len(rows)):
        inc = rows[i].du_out - rows[i - 1].du_out
        if not inc > jump_threshold:
            continue
        if prev_out is not None and not prev_out[i] - prev_out[i - 1] > jump_threshold:
            continue
        jumps.append((rows[i - 1].t, rows[i].t, inc))
    c_est = None
    for i, r in enumerate(rows):
        if r.du_in > 1e-9:
            c_est = grid[i - 1] if i > 0 else grid[0]
            break
    c_tilde = None
    wins = enumerate_words(ts, 2 * memory + 1)
    full = finite_type_from_windows(wins, memory, ts=ts)
    plateau = moran_bracket(full, model, moran_depth, "u").alpha
    for r in rows:
        if r.du_out >= plateau - plateau_tol:
            c_tilde = r.t
            break
    return Staircase(rows, jumps, c_est, c_tilde, memory, moran_depth)


# ---------------------------------------------------------------- first accumulation

def spectrum_cluster(values: Sequence[float], width: float = 0.01, count: int = 4) -> float | None:
    """Smallest v with at least `count` values in [v, v + width]."""
    vs = sorted(values)
    j = 0
    for i, v in enumerate(vs):
        while j < len(vs) and vs[j] <= v + width:
            j += 1
        if j - i >= count:
            return v
    return None


def first_accumulation(ts: TransitionSystem, pot: Potential, model: ContractionModel,
                       max_period: int = 12, memory: int = 6, t_grid: Sequence[float] | None = None,
                       width: float = 0.01, count: int = 4, moran_depth: int = 1):
    """Estimate of the smallest accumulation point of the Lagrange spectrum.

    Returns (estimate, evidence). The estimate is the spectrum cluster point;
    the staircase estimate is reported alongside with the agreement gap.
    """
    clusters = []
    for P in range(1, max_period + 1):
        sample = enumerate_spectrum(ts, pot, P, "lagrange")
        clusters.append((P, spectrum_cluster(sample.values, width, count), len(sample.entries)))
    c_spec = clusters[-1][1]
    if c_spec is None:
        raise NoAccumulation("enumerated values do not cluster")
    evidence = {"clusters": clusters, "cluster_width": width, "cluster_count": count, "flags": []}
    below = [v for v in sample.values if v < c_spec + width]
    gaps = [b - a for a, b in zip(below, below[1:])]
    evidence["gaps_below"] = gaps
    c_stair = None
    if t_grid is None:
        lo, hi = global_bounds(pot, ts)
        t_grid = list(np.linspace(c_spec - 0.1, c_spec + 0.2, 16))
    try:
        st = staircase(ts, pot, model, t_grid, memory, moran_depth, persistence=False)
        c_stair = st.c_estimate
        evidence["staircase"] = [(r.t, r.du_in, r.du_out) for r in st.grid]
    except SpectraLabError as exc:
        evidence["flags"].append(f"staircase_failed:{exc}")
    evidence["c_staircase"] = c_stair
    evidence["agreement_gap"] = None if c_stair is None else abs(c_stair - c_spec)
    if c_stair is None:
        evidence["flags"].append("staircase_no_positive_dimension")
    return c_spec, evidence


# ---------------------------------------------------------------- monotonicity constants

def measure_monotonicity(pot: Potential, ts: TransitionSystem, model: ContractionModel, depth: int = 4,
                         samples: int = 400, seed: int = 0) -> tuple[float, float]:
    """Sampled (c4, c5): |f difference| / |I^s| when letters beyond depth on the past differ."""
    rng = random.Random(seed)
    letters = list(ts.letters)
    lo_r, hi_r = math.inf, 0.0
    tries = 0
    while tries < samples * 20 and (hi_r == 0.0 or tries < samples):
        tries += 1
        past = _random_walk_back(ts, rng, depth)
        if past is None:
            continue
        # past[0] is x_{-1}, past[k] is x_{-1-k}
        tip = past[-1]
        alts = [b for b in ts.predecessors[tip]]
        if len(alts) < 2:
            continue
        b1, b2 = rng.sample(alts, 2)
        tail1 = _random_walk_back(ts, rng, 6, start=b1)
        tail2 = _random_walk_back(ts, rng, 6, start=b2)
        fut = _random_walk_fwd(ts, rng, 8, past[0])
        if tail1 is None or tail2 is None or fut is None:
            continue
        w1 = tuple(reversed(past + tail1)) + fut
        w2 = tuple(reversed(past + tail2)) + fut
        c = len(past) + len(tail1)
        c2 = len(past) + len(tail2)
        x1 = _point_from_word(w1, c)
        x2 = _point_from_word(w2, c2)
        d = abs(eval_f(pot, x1) - eval_f(pot, x2))
        ref = float(interval_length(model, tuple(reversed(past)), "s"))
        ratio = d / ref
        lo_r = min(lo_r, ratio)
        hi_r = max(hi_r, ratio)
    if hi_r == 0.0:
        return 0.0, 0.0
    return lo_r, hi_r


def _random_walk_back(ts, rng, n, start=None):
    out = []
    cur = start
    if cur is None:
        cur = rng.choice(list(ts.letters))
    out.append(cur)
    for _ in range(n - 1):
        opts = ts.predecessors[cur]
        if not opts:
            return None
        cur = rng.choice(opts)
        out.append(cur)
    return out


def _random_walk_fwd(ts, rng, n, prev):
    out = []
    cur = prev
    for _ in range(n):
        opts = ts.successors[cur]
        if not opts:
            return None
        cur = rng.choice(opts)
        out.append(cur)
    return tuple(out)


def _point_from_word(w: tuple, center: int) -> SymbolicPoint:
    """Eventually periodic point with w around 0, tails repeating the end letters."""
    return SymbolicPoint((w[0],), w, (w[-1],), center)
