"""Good positions and extraction of complete subshifts inside sublevel sets."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtractionInfeasible, MissingDecomposition, NoExtraction, NotComparable, NotInFamily
from .geometry import GAUSS, ContractionModel, interval_length, moran_bracket, scale_cover
from .graph import CompleteSubshift, FiniteTypeSet
from .spectra import Potential, cylinder_bounds, markov_value, measure_monotonicity, window_bounds
from .symbolic import SymbolicPoint, TransitionSystem, is_admissible, word_to_str


@dataclass
class ExtractionParams:
    r0: int = 2
    k: int | None = None
    J: int | None = None
    eta_target: float = 0.5
    memory: int = 6
    k_max: int = 96
    samples: int = 200
    max_middle_blocks: int | None = None
    seed: int = 0
    force_beta: tuple | None = None
    # (x, y) or (x, y, p, q): pins the repeated pair and optionally its block positions
    force_cut: tuple | None = None

    def __post_init__(self):
        if self.r0 < 1:
            raise ValueError("r0 must be >= 1")
        if self.k is not None and self.k < 2:
            raise ValueError("k must be >= 2")
        if self.J is not None and self.J < 1:
            raise ValueError("J must be >= 1")


# ---------------------------------------------------------------- cylinder order

def cylinder_order(model: ContractionModel, a: tuple, b: tuple) -> int:
    """Sign of (position of I^u(a)) - (position of I^u(b)); 0 when nested or equal."""
    for d, (x, y) in enumerate(zip(a, b)):
        if x == y:
            continue
        if model.kind == GAUSS:
            # [0; a1, a2, ...] decreases in a1, increases in a2, ...
            s = -1 if x > y else 1
            return s if d % 2 == 0 else -s
        return -1 if str(x) < str(y) else 1
    return 0


def stable_order(model: ContractionModel, a: tuple, b: tuple) -> int:
    return cylinder_order(model, a[::-1], b[::-1])


# ---------------------------------------------------------------- J

def compute_J(B0, model: ContractionModel, ts: TransitionSystem | None = None, j_max: int = 64) -> int:
    """Smallest J with |I^u(b1..bJ)| <= |I^s((b_{J+1} b_{J+2})^T)| and its twin for all block choices."""
    B0 = [tuple(b) for b in B0]
    if not B0:
        raise ValueError("B0 must be nonempty")

    def ok(w):
        return ts is None or is_admissible(w, ts)

    pairs = [b1 + b2 for b1 in B0 for b2 in B0 if ok(b1 + b2)]
    min_s2 = min(interval_length(model, w, "s") for w in pairs)
    min_u2 = min(interval_length(model, w, "u") for w in pairs)
    layer = [b for b in B0]
    for J in range(1, j_max + 1):
        if J > 1:
            nxt = [w + b for w in layer for b in B0 if ok(w + b)]
            if len(nxt) > 20000:
                # worst case from the longest-lived blocks only
                nxt = sorted(nxt, key=lambda w: -interval_length(model, w, "u"))[:5000] + \
                      sorted(nxt, key=lambda w: -interval_length(model, w, "s"))[:5000]
            layer = nxt
        max_u = max(interval_length(model, w, "u") for w in layer)
        max_s = max(interval_length(model, w, "s") for w in layer)
        if max_u <= min_s2 and max_s <= min_u2:
            return J
    raise ExtractionInfeasible(f"no J <= {j_max} separates block lengths")


# ---------------------------------------------------------------- family of block concatenations

class Family:
    """Concatenations of M blocks of B0 that lie in the language of X."""

    def __init__(self, X: FiniteTypeSet, B0, M: int, model: ContractionModel):
        self.X = X
        self.B0 = [tuple(b) for b in B0]
        self.M = M
        self.model = model
        self.L = X.window_length
        self._fwd_cache = {}
        self._bwd_cache = {}
        self._count_cache = {}

    # state after a prefix: its last L-1 letters (or the whole word when shorter)
    def _append(self, state: tuple, block: tuple):
        z = state + block
        L = self.L
        if len(z) < L:
            return z if self.X.contains(z) else None
        idx = self.X.index
        start = max(0, len(state) - L + 1)
        for i in range(start, len(z) - L + 1):
            if z[i:i + L] not in idx:
                return None
        return z[-(L - 1):]

    def _prepend(self, state: tuple, block: tuple):
        z = block + state
        L = self.L
        if len(z) < L:
            return z if self.X.contains(z) else None
        idx = self.X.index
        stop = min(len(z) - L, len(block) - 1)
        for i in range(0, stop + 1):
            if z[i:i + L] not in idx:
                return None
        return z[:L - 1]

    def can_prepend(self, state: tuple, i: int) -> bool:
        """Whether i more blocks can be put in front of a word starting with `state`."""
        if i == 0:
            return True
        key = (state, i)
        hit = self._bwd_cache.get(key)
        if hit is not None:
            return hit
        res = False
        for b in self.B0:
            s2 = self._prepend(state, b)
            if s2 is not None and self.can_prepend(s2, i - 1):
                res = True
                break
        self._bwd_cache[key] = res
        return res

    def completions(self, state: tuple, i: int) -> int:
        if i == 0:
            return 1
        key = (state, i)
        hit = self._count_cache.get(key)
        if hit is not None:
            return hit
        total = 0
        for b in self.B0:
            s2 = self._append(state, b)
            if s2 is not None:
                total += self.completions(s2, i - 1)
        self._count_cache[key] = total
        return total

    def size(self) -> int:
        return self.completions((), self.M)

    def contains(self, blocks) -> bool:
        blocks = [tuple(b) for b in blocks]
        if len(blocks) != self.M or any(b not in self.B0 for b in blocks):
            return False
        return self.X.contains(tuple(a for b in blocks for a in b))

    def sample(self, n: int, rng: random.Random) -> list:
        """n independent uniform draws (block tuples)."""
        total = self.size()
        if total == 0:
            return []
        out = []
        for _ in range(n):
            state = ()
            word = []
            for i in range(self.M, 0, -1):
                r = rng.randrange(self.completions(state, i))
                for b in self.B0:
                    s2 = self._append(state, b)
                    if s2 is None:
                        continue
                    c = self.completions(s2, i - 1)
                    if r < c:
                        word.append(b)
                        state = s2
                        break
                    r -= c
            out.append(tuple(word))
        return out

    def enumerate(self, limit: int = 10 ** 6) -> list:
        out = []
        stack = [((), ())]
        while stack:
            state, word = stack.pop()
            if len(word) == self.M:
                out.append(word)
                if len(out) > limit:
                    raise ExtractionInfeasible("family too large to enumerate")
                continue
            for b in reversed(self.B0):
                s2 = self._append(state, b)
                if s2 is not None and self.completions(s2, self.M - len(word) - 1) > 0:
                    stack.append((s2, word + (b,)))
        return out


@dataclass
class GoodPositionStats:
    word: tuple
    good: set
    right_good: set
    left_good: set
    right_bad: int
    left_bad: int

    @property
    def fraction(self) -> float:
        return len(self.good) / max(1, len(self.word))


def good_positions(beta, family: Family) -> GoodPositionStats:
    """Classify each block position (1-based) of beta as right/left good."""
    beta = tuple(tuple(b) for b in beta)
    if not family.contains(beta):
        raise NotInFamily("word is not a member of the family")
    model = family.model
    M = len(beta)
    L = family.L
    right, left = set(), set()
    # forward states of prefixes
    states = [()]
    for b in beta:
        states.append(family._append(states[-1], b))
    flat = tuple(a for b in beta for a in b)
    offsets = [0]
    for b in beta:
        offsets.append(offsets[-1] + len(b))
    for j in range(1, M + 1):
        cur = beta[j - 1]
        lo = hi = False
        for b in family.B0:
            if b == cur:
                continue
            if family._append(states[j - 1], b) is None:
                continue
            # every word of the language extends by further blocks
            c = cylinder_order(model, b, cur)
            lo |= c < 0
            hi |= c > 0
            if lo and hi:
                break
        if lo and hi:
            right.add(j)
        # left: replace blocks 1..j keeping beta_{j+1}..beta_M
        rest = flat[offsets[j]:]
        lo = hi = False
        for b in family.B0:
            if b == cur:
                continue
            z = b + rest
            if not family.X.contains(z):
                continue
            head = z[:L - 1]
            if not family.can_prepend(head, j - 1):
                continue
            c = stable_order(model, b, cur)
            lo |= c < 0
            hi |= c > 0
            if lo and hi:
                break
        if lo and hi:
            left.add(j)
    good = right & left
    return GoodPositionStats(beta, good, right, left, M - len(right), M - len(left))


# ---------------------------------------------------------------- sup of f on window graphs

def _tail_extremes(succ, letters: np.ndarray, iters: int = 120):
    """Per node (min, max) of [b1; b2, ...] over paths leaving the node.

    Successor nodes carry distinct letters, so the alternating greedy choice
    is optimal; value iteration converges geometrically.
    """
    n = len(succ)
    ymin = np.full(n, 1.0)
    ymax = np.full(n, float(letters.max()) + 1.0)
    for _ in range(iters):
        new_min = np.empty(n)
        new_max = np.empty(n)
        for v in range(n):
            ws = succ[v]
            cand_max = [letters[w] + 1.0 / ymin[w] for w in ws]
            cand_min = [letters[w] + 1.0 / ymax[w] for w in ws]
            new_max[v] = max(cand_max)
            new_min[v] = min(cand_min)
        if np.allclose(new_min, ymin, atol=0, rtol=1e-15) and np.allclose(new_max, ymax, atol=0, rtol=1e-15):
            ymin, ymax = new_min, new_max
            break
        ymin, ymax = new_min, new_max
    return ymin, ymax


def sup_f_on(X: FiniteTypeSet, pot: Potential) -> float:
    """sup of f over the points of X (cf_sum: exact up to float rounding)."""
    if len(X) == 0:
        return -math.inf
    if pot.kind != "cf_sum":
        c = X.memory
        return max(cylinder_bounds(pot, w, c, X.ts)[1] for w in X.windows)
    last = np.array([float(w[-1]) for w in X.windows])
    first = np.array([float(w[0]) for w in X.windows])
    fmin, fmax = _tail_extremes(X.succ, last)
    bmin, bmax = _tail_extremes(X.pred, first)
    c = X.memory
    best = -math.inf
    for i, w in enumerate(X.windows):
        right = w[c:]
        r = max(_apply(right, fmin[i]), _apply(right, fmax[i]))
        left = w[:c][::-1]
        lv = max(1.0 / _apply(left, bmin[i]), 1.0 / _apply(left, bmax[i]))
        best = max(best, r + lv)
    return best


def _apply(word, y):
    x = y
    for a in reversed(word):
        x = a + 1.0 / x
    return x


# ---------------------------------------------------------------- windows of a complete subshift

def subshift_windows(words, radius: int) -> list:
    """All (2r+1)-letter factors of infinite concatenations of the words."""
    L = 2 * radius + 1
    words = [tuple(w) for w in words]
    frontier = set()
    for w in words:
        for i in range(len(w)):
            frontier.add(w[i:])
    done = set()
    while frontier:
        nxt = set()
        for s in frontier:
            if len(s) >= L:
                continue
            for w in words:
                z = s + w
                if len(z) >= L:
                    done.add(z[:L])
                else:
                    nxt.add(z)
        for s in frontier:
            if len(s) >= L:
                for i in range(len(s) - L + 1):
                    done.add(s[i:i + L])
        frontier = nxt
    # windows fully inside long words
    for w in words:
        for i in range(len(w) - L + 1):
            done.add(w[i:i + L])
    return sorted(done, key=str)


def subshift_max_bound(words, radius: int, pot: Potential, ts: TransitionSystem) -> float:
    wins = subshift_windows(words, radius)
    _, hi = window_bounds(pot, wins, radius, ts)
    return float(hi.max())


# ---------------------------------------------------------------- extraction

@dataclass
class ExtractionResult:
    alphabet: list
    delta_measured: float
    delta_formula: dict
    dim_lower: float
    dim_ref: float
    eta_achieved: float
    record: dict
    sup_X: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        rec = dict(self.record)
        rec["cut_pair"] = [word_to_str(w) for w in rec.get("cut_pair", ())]
        rec["o_value"] = word_to_str(rec.get("o_value", ()))
        rec.pop("beta", None)
        rec.pop("decompositions", None)
        rec["good_positions"] = sorted(rec.get("good_positions", []))
        return {
            "alphabet": [word_to_str(w) for w in self.alphabet],
            "delta_measured": self.delta_measured,
            "delta_formula": self.delta_formula,
            "dim_lower": self.dim_lower,
            "dim_ref": self.dim_ref,
            "eta_achieved": self.eta_achieved,
            "sup_X": self.sup_X,
            "record": rec,
            "flags": list(self.flags),
        }


def _spaced(good: set, M: int, spacing: int) -> list:
    """Greedy positions j with j, j+1 good and consecutive gaps >= spacing."""
    out = []
    for j in range(1, M):
        if j in good and j + 1 in good and (not out or j - out[-1] >= spacing):
            out.append(j)
    return out


def _middles(beta, p, q):
    """Blocks beta_{p+1} .. beta_q (1-based)."""
    return tuple(beta[p:q])


def extract_complete_subshift(X: FiniteTypeSet, pot: Potential, model: ContractionModel,
                              params: ExtractionParams | None = None,
                              ts: TransitionSystem | None = None) -> ExtractionResult:
    params = params or ExtractionParams()
    ts = ts or X.ts
    flags = []
    if X is None or len(X) == 0:
        raise NoExtraction("empty set")
    ref = moran_bracket(X, model, 1, "u")
    dim_ref = 0.5 * (ref.alpha + ref.beta)
    if ref.beta <= 1e-12:
        raise NoExtraction("reference dimension is zero")
    B0 = scale_cover(X, model, params.r0, "u").words
    N0 = len(B0)
    J = params.J or compute_J(B0, model, ts)
    k_full = 8 * J * N0 * N0
    k = params.k or min(k_full, params.k_max)
    if k < k_full:
        flags.append(f"k_capped:{k}<{k_full}")
    family = Family(X, B0, k, model)
    rng = random.Random(params.seed)
    exhaustive = N0 ** k <= 10 ** 6
    if exhaustive:
        words = family.enumerate()
    else:
        words = family.sample(params.samples, rng)
        flags.append(f"family_sampled:{len(words)}")
    if params.force_beta is not None:
        fb = tuple(tuple(b) for b in params.force_beta)
        if not family.contains(fb):
            raise NotInFamily("forced word is not in the family")
        words = [fb] + [w for w in words if w != fb]
    words = sorted(set(words), key=lambda w: [str(b) for b in w]) if params.force_beta is None else words
    stats = [good_positions(w, family) for w in words]
    spacing = 2 * J
    max_blocks = params.max_middle_blocks or max(4 * J, spacing + 2)
    # candidate cuts: (x, y) -> middles
    cands: dict = {}
    for st in stats:
        beta = st.word
        pos = [j for j in range(1, k) if j in st.good and j + 1 in st.good]
        for a_i, p in enumerate(pos):
            for q in pos[a_i + 1:]:
                if q - p < spacing:
                    continue
                if q - p > max_blocks:
                    break
                if beta[p - 1] == beta[q - 1] and beta[p] == beta[q]:
                    key = (beta[p - 1], beta[p])
                    cands.setdefault(key, {}).setdefault(_middles(beta, p, q), (beta, p, q))
    if params.force_cut is not None:
        x, y = (tuple(w) for w in params.force_cut[:2])
        cands = {k_: v for k_, v in cands.items() if k_ == (x, y)}
    if not cands:
        best_run = max((len(_spaced(st.good, k, spacing)) for st in stats), default=0)
        raise ExtractionInfeasible("no repeated adjacent pair at good positions", longest_good_run=best_run)

    def score(item):
        (x, y), mids = item
        mlen = max(sum(len(b) for b in m) for m in mids)
        return (math.log(len(mids)) / mlen, len(mids), str(x), str(y))

    ranked = sorted(cands.items(), key=score, reverse=True)
    sup_X = sup_f_on(X, pot)
    radius = params.memory
    chosen = None
    for (x, y), mids in ranked[:8]:
        alphabet = sorted({tuple(a for b in m for a in b) for m in mids}, key=lambda w: (len(w), str(w)))
        decomp = {tuple(a for b in m for a in b): m for m in mids}
        alphabet, removed = _filter_words(alphabet, sup_X, radius, pot, ts)
        if len(alphabet) >= 2 or (alphabet and chosen is None):
            bound = subshift_max_bound(alphabet, radius, pot, ts)
            chosen = ((x, y), mids, alphabet, decomp, removed, bound)
            if sup_X - bound > 0 and len(alphabet) >= 2:
                break
    if chosen is None:
        raise ExtractionInfeasible("every candidate alphabet was filtered away")
    (x, y), mids, alphabet, decomp, removed, bound = chosen
    if removed:
        flags.append(f"filtered_words:{removed}")
    # the O-value is the cut middle of a kept word, preferring a forced word
    o_beta, o_p, o_q = _o_source(mids, set(alphabet), params)
    o_value = tuple(a for b in o_beta[o_p:o_q] for a in b)
    complete = all(is_admissible(a + b, ts) for a in alphabet for b in alphabet) if ts else True
    if not complete:
        flags.append("not_complete")
    delta_measured = sup_X - bound
    if delta_measured <= 0:
        flags.append("delta_nonpositive")
    sub = CompleteSubshift(tuple(alphabet))
    dim_lower = moran_bracket(sub, model, 1, "u").alpha if len(alphabet) >= 2 else 0.0
    c4, c5 = measure_monotonicity(pot, ts, model, depth=4, samples=200, seed=params.seed)
    c3 = c4 / 2
    decomps = {w: _decompose_word(decomp[w]) for w in alphabet}
    dform = delta_formula(alphabet, model, c3, decomps)
    good_all = stats[0].good if stats else set()
    record = {
        "r0": params.r0, "k": k, "J": J, "N0": N0, "B0": [word_to_str(b) for b in B0],
        "good_positions": sorted(good_all), "good_fraction": max(st.fraction for st in stats),
        "cut_pair": (x, y), "o_value": o_value, "cut_positions": (o_p, o_q),
        "beta": o_beta, "decompositions": decomps, "verify_radius": radius,
        "family_words": len(words), "exhaustive": exhaustive, "c4": c4, "c5": c5,
    }
    return ExtractionResult(alphabet, float(delta_measured), dform, float(dim_lower), float(dim_ref),
                            float(1 - dim_lower / dim_ref), record, float(sup_X), flags)


def _o_source(mids, kept, params):
    entries = [v for m, v in mids.items() if tuple(a for b in m for a in b) in kept]
    if params.force_beta is not None:
        fb = tuple(tuple(b) for b in params.force_beta)
        pos = tuple(params.force_cut[2:4]) if params.force_cut is not None else ()
        for beta, p, q in entries:
            if beta == fb and (not pos or (p, q) == pos):
                return beta, p, q
    return entries[0]


def _decompose_word(blocks):
    """(gamma1, b-letters, gamma2) for a middle made of blocks."""
    blocks = list(blocks)
    g1 = blocks[0]
    g2 = blocks[-1]
    inner = tuple(a for b in blocks[1:-1] for a in b)
    return (g1, inner, g2)


def _filter_words(alphabet, sup_X, radius, pot, ts):
    """Drop words whose own windows reach sup_X; returns (kept, removed count)."""
    kept = list(alphabet)
    removed = 0
    while len(kept) >= 2:
        wins = subshift_windows(kept, radius)
        _, hi = window_bounds(pot, wins, radius, ts)
        if float(hi.max()) < sup_X:
            break
        bad = {w for w, h in zip(wins, hi.tolist()) if h >= sup_X}
        # blame each word by its bad windows in its three-fold repetition
        worst, worst_n = None, 0
        for w in kept:
            rep = w * (2 * radius // len(w) + 3)
            n = sum(1 for i in range(len(rep) - 2 * radius) if rep[i:i + 2 * radius + 1] in bad)
            if n > worst_n:
                worst, worst_n = w, n
        if worst is None:
            # bad windows only at junctions: drop the longest word
            worst = max(kept, key=len)
        kept.remove(worst)
        removed += 1
    return kept, removed


def verify_control(eta_blocks, i: int, j: int, t: float, pot: Potential, ts: TransitionSystem,
                   model: ContractionModel | None = None) -> bool:
    """Cylinder maxima of eta at every letter of blocks i..j (1-based) stay below t."""
    blocks = [tuple(b) for b in eta_blocks]
    word = tuple(a for b in blocks for a in b)
    start = sum(len(b) for b in blocks[:i - 1])
    stop = sum(len(b) for b in blocks[:j])
    for c in range(start, stop):
        if cylinder_bounds(pot, word, c, ts, model)[1] >= t:
            return False
    return True


def control_word(res: ExtractionResult, w: tuple, copies: int | None = None) -> tuple:
    """(blocks, i, j) putting w between repeated copies of itself."""
    radius = res.record.get("verify_radius", 6)
    n = copies or (radius // len(w) + 1)
    blocks = [w] * (2 * n + 1)
    return blocks, n + 1, n + 1


def delta_formula(Bu, model: ContractionModel, c3: float, decompositions: dict | None = None) -> dict:
    """Components d1..d4 and their minimum over the recorded decompositions."""
    if decompositions is None:
        raise MissingDecomposition("delta formula needs the construction record")
    comps = {"d1": [], "d2": [], "d3": [], "d4": []}
    flags = []
    for w in Bu:
        if w not in decompositions:
            raise MissingDecomposition(f"no decomposition recorded for {word_to_str(w)}")
        g1, b, g2 = decompositions[w]
        m = len(b)
        for jj in range(1, m):
            comps["d1"].append(float(interval_length(model, b[jj - 1:] + g2, "u")))
            comps["d2"].append(float(interval_length(model, g1 + b[:jj - 1], "s")))
        for ell in range(1, len(g1)):
            comps["d3"].append(float(interval_length(model, g2 + g1[:ell], "s")))
        for ell in range(1, len(g2) + 1):
            comps["d4"].append(float(interval_length(model, g2[ell - 1:] + g1, "u")))
    out = {"c3": c3}
    defined = []
    for key in ("d1", "d2", "d3", "d4"):
        if comps[key]:
            out[key] = c3 * min(comps[key])
            defined.append(out[key])
        else:
            out[key] = None
            flags.append(f"{key}_empty")
    out["min"] = min(defined) if defined else 0.0
    if c3 == 0:
        flags.append("degenerate_c3")
    out["flags"] = flags
    return out


def o_map_connect(res1: ExtractionResult, res2: ExtractionResult, t1: float, t2: float, pot: Potential,
                  ts: TransitionSystem | None = None, repeats: int = 3):
    """Heteroclinic witnesses through a shared O-value, checked against max(t1, t2)."""
    from .decomposition import ConnectionReport
    o1 = res1.record.get("o_value")
    o2 = res2.record.get("o_value")
    if not o1 or not o2:
        raise MissingDecomposition("extraction record carries no O-value")
    if o1 != o2:
        raise NotComparable("O-values differ")
    O = tuple(o1)
    tmax = max(t1, t2)
    if res1 is res2:
        u1 = w2 = O
    else:
        u1 = res1.alphabet[0]
        w2 = res2.alphabet[0]
    core = O * repeats
    x = SymbolicPoint(u1, core, w2, 0)
    y = SymbolicPoint(w2, core, u1, 0)
    mx = markov_value(pot, x)
    my = markov_value(pot, y)
    connected = mx < tmax and my < tmax
    rep = ConnectionReport(connected, max(mx, my) if connected else None, x, y, (O, O), tmax, None)
    if not connected:
        rep.flags.append("witness_above_threshold")
    return rep
