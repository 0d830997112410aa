"""Cylinder lengths, scales, scale covers and Moran dimension brackets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .cf import MP, apply_word, continuants, digit_tail_range
from .errors import ModelError, NumericFailure
from .graph import CompleteSubshift, FiniteTypeSet, has_cycle, tarjan_scc

GAUSS = "gauss"
PRODUCT = "product"


@dataclass(frozen=True)
class ContractionModel:
    """Cylinder geometry of the unstable/stable Cantor sets.

    GaussCF: lengths from continuants (symmetric stable side).
    Product: per-transition ratios; a word's length is the product of the
    ratios along it times the largest ratio entering its first letter.
    """

    kind: str
    digits: tuple = ()
    u: Mapping = field(default_factory=dict, compare=False, hash=False)
    s: Mapping = field(default_factory=dict, compare=False, hash=False)
    c1: float = 0.0
    lambda1: float = 0.5
    lambda2: float = 0.5
    Ctilde: float = 1.0
    Cbig: float = 1.0

    @property
    def alphabet_size(self) -> int:
        if self.kind == GAUSS:
            return len(self.digits)
        return len({a for a, _ in self.u} | {b for _, b in self.u})

    @property
    def c2(self) -> int:
        return math.ceil(3 * self.c1 / math.log(1 / self.lambda2) - 1e-12)

    @property
    def alpha1(self) -> float:
        return math.log(self.alphabet_size) / math.log(1 / self.lambda2)

    @property
    def alpha2(self) -> float:
        return math.log(math.exp(self.c1) / self.lambda2) * self.alpha1

    def to_dict(self) -> dict:
        if self.kind == GAUSS:
            return {"kind": GAUSS, "digits": list(self.digits)}
        return {
            "kind": PRODUCT,
            "u": {f"{a}->{b}": v for (a, b), v in sorted(self.u.items(), key=str)},
            "s": {f"{a}->{b}": v for (a, b), v in sorted(self.s.items(), key=str)},
        }


def gauss_model(digits: Sequence[int]) -> ContractionModel:
    ds = tuple(sorted(set(int(d) for d in digits)))
    if not ds or ds[0] < 1:
        raise ModelError("digits must be positive integers")
    y_lo, y_hi = (float(v) for v in digit_tail_range(ds))
    lam1 = 1.0 / (ds[-1] + y_hi) ** 2
    lam2 = 1.0 / (ds[0] + y_lo) ** 2
    # one-step distortion ratio of cylinder lengths lies in [1/8, 4]
    c1 = max(math.log(8.0), math.log(1 / lam2))
    return ContractionModel(GAUSS, ds, {}, {}, c1, lam1, lam2, 1.0, 2.0)


def product_model(u: Mapping, s: Mapping | None = None) -> ContractionModel:
    u = {tuple(k): float(v) for k, v in u.items()}
    s = dict(u) if s is None else {tuple(k): float(v) for k, v in s.items()}
    if set(u) != set(s):
        raise ModelError("u and s ratios must cover the same transitions")
    for v in list(u.values()) + list(s.values()):
        if not 0.0 < v < 1.0:
            raise ModelError(f"ratio {v} outside (0,1)")

    def constants(r, into):
        lam1, lam2 = min(r.values()), max(r.values())
        c = 0.0
        for (a, b), v in r.items():
            c = max(c, math.log(into(r, a, b) / v))
        return c, lam1, lam2

    cu, l1u, l2u = constants(u, lambda r, a, b: _g_in(r, b))
    cs, l1s, l2s = constants(s, lambda r, a, b: _g_out(r, a))
    c1 = max(cu, cs)
    Ct = max(1.0, math.log(l1s) / math.log(l2u), math.log(l1u) / math.log(l2s))
    C = math.exp(c1 * (Ct + 1))
    return ContractionModel(PRODUCT, (), u, s, c1, min(l1u, l1s), max(l2u, l2s), Ct, C)


def branch_model(ratios: Mapping) -> ContractionModel:
    """Product model where each letter contracts by its own ratio on both sides (c1 = 0)."""
    letters = list(ratios)
    u = {(a, b): ratios[b] for a in letters for b in letters}
    s = {(a, b): ratios[a] for a in letters for b in letters}
    return product_model(u, s)


def _g_in(r, b):
    return max(v for (x, y), v in r.items() if y == b)


def _g_out(r, a):
    return max(v for (x, y), v in r.items() if x == a)


def model_from_dict(d: Mapping, letters: Sequence | None = None) -> ContractionModel:
    kind = d.get("kind")
    if kind == GAUSS:
        extra = set(d) - {"kind", "digits"}
        if extra:
            raise ModelError(f"unknown contraction fields {sorted(extra)}")
        return gauss_model(d["digits"])
    if kind == PRODUCT:
        extra = set(d) - {"kind", "u", "s"}
        if extra:
            raise ModelError(f"unknown contraction fields {sorted(extra)}")
        by_name = {str(a): a for a in (letters or [])}

        def parse(m):
            out = {}
            for key, v in m.items():
                if "->" not in key:
                    raise ModelError(f"bad transition key {key!r}")
                a, b = (x.strip() for x in key.split("->"))
                if by_name:
                    if a not in by_name or b not in by_name:
                        raise ModelError(f"unknown letter in {key!r}")
                    a, b = by_name[a], by_name[b]
                out[(a, b)] = v
            return out

        return product_model(parse(d["u"]), parse(d.get("s", d["u"])))
    raise ModelError(f"unknown contraction kind {kind!r}")


# ---------------------------------------------------------------- lengths

def interval_length(model: ContractionModel, word: Sequence, side: str = "u"):
    """|I^u(word)| or, for side 's', |I^s(word^T)|; the empty word has length 1."""
    word = tuple(word)
    if not word:
        return MP.mpf(1)
    if model.kind == GAUSS:
        q, qp = continuants(word[::-1] if side == "s" else word)
        return MP.mpf(1) / (q * (q + qp))
    r = model.u if side == "u" else model.s
    if side == "u":
        val = MP.mpf(_g_in(r, word[0]))
    else:
        val = MP.mpf(_g_out(r, word[-1]))
    for a, b in zip(word, word[1:]):
        try:
            val *= r[(a, b)]
        except KeyError:
            raise ModelError(f"no ratio for transition {a!r}->{b!r}") from None
    return val


def _gauss_denominator(word: Sequence, side: str) -> int:
    q, qp = continuants(word[::-1] if side == "s" else word)
    return q * (q + qp)


def scale(model: ContractionModel, word: Sequence, side: str = "u") -> int:
    """floor(log(1/|I(word)|)), natural log."""
    word = tuple(word)
    if not word:
        return 0
    if model.kind == GAUSS:
        x = math.log(_gauss_denominator(word, side))
    else:
        x = -math.log(float(interval_length(model, word, side)))
    k = math.floor(x)
    if abs(x - round(x)) < 1e-9:
        k = int(MP.floor(-MP.log(interval_length(model, word, side))))
    return k


@dataclass
class ScaleCover:
    r: int
    side: str
    words: list

    @property
    def count(self) -> int:
        return len(self.words)


def scale_cover(X, model: ContractionModel, r: int, side: str = "u") -> ScaleCover:
    """Words meeting X at scale r: scale(w) >= r > scale(parent).

    The parent is the word minus its last letter on the u side and minus its
    first letter on the s side (the stable cylinder grows from the last letter).
    Words are returned in lexicographic order.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if X is None or len(X) == 0:
        return ScaleCover(r, side, [])
    contains = _language(X)
    letters = list(X.letters)
    out = []
    stack = [(a,) for a in reversed(letters)]
    while stack:
        w = stack.pop()
        if scale(model, w, side) >= r:
            out.append(w)
            continue
        if side == "u":
            kids = [w + (b,) for b in letters]
        else:
            kids = [(b,) + w for b in letters]
        for k in reversed(kids):
            if contains(k):
                stack.append(k)
    key = _sort_key(X)
    out.sort(key=key)
    return ScaleCover(r, side, out)


def _sort_key(X):
    ts = getattr(X, "ts", None)
    if ts is not None:
        return ts.letter_key
    return lambda w: tuple(str(a) for a in w)


def _language(X):
    if isinstance(X, FiniteTypeSet):
        return X.contains
    if isinstance(X, CompleteSubshift):
        return _complete_language(X)
    raise TypeError(f"unsupported set {type(X).__name__}")


def _complete_language(X: CompleteSubshift):
    words = X.words
    cache = {}

    def ok(w):
        # w is a factor of some concatenation: parse w = suffix . blocks . prefix
        if w in cache:
            return cache[w]
        res = False
        for b in words:
            for i in range(len(b)):
                tail = b[i:]
                if len(tail) >= len(w):
                    if tail[:len(w)] == w:
                        res = True
                        break
                elif w[:len(tail)] == tail and _parse_rest(w[len(tail):], words):
                    res = True
                    break
            if res:
                break
        cache[w] = res
        return res

    return ok


def _parse_rest(w, words):
    if not w:
        return True
    for b in words:
        if len(b) >= len(w):
            if b[:len(w)] == w:
                return True
        elif w[:len(b)] == b and _parse_rest(w[len(b):], words):
            return True
    return False


def cover_counts(X, model, r_max: int, side: str = "u") -> list:
    return [scale_cover(X, model, r, side).count for r in range(r_max + 1)]


@dataclass
class SubmultReport:
    m: int
    n: int
    lhs: int
    rhs: float
    c2: int
    ok: bool


def check_submultiplicativity(X, model: ContractionModel, m: int, n: int, side: str = "u") -> SubmultReport:
    if m < 1 or n < 1:
        raise ValueError("m, n must be >= 1")
    c2 = model.c2
    lhs = scale_cover(X, model, m + n, side).count
    rhs = model.alphabet_size ** c2 * scale_cover(X, model, m, side).count * scale_cover(X, model, n, side).count
    return SubmultReport(m, n, lhs, rhs, c2, lhs <= rhs)


# ---------------------------------------------------------------- Moran

def moran_root(lengths: Sequence, tol: float = 1e-30):
    """Root s of sum(len_i^s) = 1 (mpmath bisection, then one Newton step)."""
    ls = [MP.mpf(x) for x in lengths]
    if not ls:
        return MP.mpf(0)
    if len(ls) == 1:
        return MP.mpf(0)

    def g(s):
        return MP.fsum(x ** s for x in ls) - 1

    lo, hi = MP.mpf(0), MP.mpf(1)
    while g(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise NumericFailure("Moran root bracket diverged")
    for _ in range(200):
        mid = (lo + hi) / 2
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    s = (lo + hi) / 2
    d = MP.fsum(x ** s * MP.log(x) for x in ls)
    if d != 0:
        s2 = s - g(s) / d
        if lo <= s2 <= hi:
            s = s2
    return s


@dataclass
class MoranBracket:
    depth: int
    side: str
    alpha: float
    beta: float
    lambda_min: float
    distortion: float
    states: int
    scalar: tuple | None = None

    @property
    def gap(self) -> float:
        return self.beta - self.alpha

    def gap_bound(self) -> float | None:
        """Right-hand side of the depth-n gap estimate, when it applies."""
        la, n = math.log(self.lambda_min), self.depth
        lg = math.log(self.distortion)
        if n * la <= lg:
            return None
        return lg * self.beta / (n * la - lg)


@dataclass
class DimensionEstimate:
    brackets_u: list = field(default_factory=list)
    brackets_s: list = field(default_factory=list)
    counts_u: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def _side(self):
        return self.brackets_u or self.brackets_s

    @property
    def alpha_n(self) -> list:
        return [b.alpha for b in self._side()]

    @property
    def beta_n(self) -> list:
        return [b.beta for b in self._side()]

    @property
    def lambda_min(self) -> float:
        return self._side()[-1].lambda_min if self._side() else float("nan")

    @property
    def distortion_a(self) -> float:
        return self._side()[-1].distortion if self._side() else 1.0

    @staticmethod
    def _mid(brs):
        if not brs:
            return None, None
        b = brs[-1]
        return (b.alpha + b.beta) / 2, (b.beta - b.alpha) / 2

    @property
    def Du(self):
        return self._mid(self.brackets_u)[0]

    @property
    def Du_radius(self):
        return self._mid(self.brackets_u)[1]

    @property
    def Ds(self):
        return self._mid(self.brackets_s)[0]

    @property
    def Ds_radius(self):
        return self._mid(self.brackets_s)[1]

    @property
    def hd_sum(self):
        if self.Du is None or self.Ds is None:
            return None
        return self.Du + self.Ds

    def to_dict(self) -> dict:
        def br(b):
            return {"depth": b.depth, "alpha": b.alpha, "beta": b.beta,
                    "lambda": b.lambda_min, "a": b.distortion, "states": b.states}
        return {
            "Du": self.Du, "Du_radius": self.Du_radius,
            "Ds": self.Ds, "Ds_radius": self.Ds_radius,
            "hd_sum": self.hd_sum,
            "brackets_u": [br(b) for b in self.brackets_u],
            "brackets_s": [br(b) for b in self.brackets_s],
            "counts_u": [list(c) for c in self.counts_u],
            "flags": list(self.flags),
        }


class _DirectedSystem:
    """States with edges carrying log-weight intervals [lmin, lmax]."""

    def __init__(self, n_states, rows, cols, lmin, lmax):
        self.n = n_states
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.lmin = np.asarray(lmin, dtype=float)
        self.lmax = np.asarray(lmax, dtype=float)
        succ = [[] for _ in range(n_states)]
        for r, c in zip(self.rows.tolist(), self.cols.tolist()):
            succ[r].append(c)
        comps = [c for c in tarjan_scc(succ) if has_cycle(c, succ)]
        self.blocks = []
        comp_of = np.full(n_states, -1, dtype=np.int64)
        for ci, comp in enumerate(comps):
            comp_of[np.asarray(comp)] = ci
        same = comp_of[self.rows] == comp_of[self.cols]
        same &= comp_of[self.rows] >= 0
        for ci, comp in enumerate(comps):
            mask = same & (comp_of[self.rows] == ci)
            local = {v: i for i, v in enumerate(comp)}
            r = np.array([local[v] for v in self.rows[mask].tolist()], dtype=np.int64)
            c = np.array([local[v] for v in self.cols[mask].tolist()], dtype=np.int64)
            self.blocks.append((len(comp), r, c, mask))

    def log_rho(self, s: float, which: str) -> float:
        logs = self.lmin if which == "min" else self.lmax
        best = -math.inf
        for size, r, c, mask in self.blocks:
            w = np.exp(s * logs[mask])
            best = max(best, _log_perron(size, r, c, w))
        return best

    def root(self, which: str, tol: float = 1e-12) -> float:
        if not self.blocks:
            return 0.0
        f0 = self.log_rho(0.0, which)
        if f0 <= 1e-10:
            return 0.0
        lo, hi = 0.0, 1.0
        while self.log_rho(hi, which) > 0:
            lo, hi = hi, hi * 2
            if hi > 1e4:
                raise NumericFailure("spectral root bracket diverged")
        flo = f0 if lo == 0.0 else self.log_rho(lo, which)
        for _ in range(200):
            if hi - lo < tol:
                break
            mid = 0.5 * (lo + hi)
            fm = self.log_rho(mid, which)
            if fm > 0:
                lo, flo = mid, fm
            else:
                hi = mid
        s = 0.5 * (lo + hi)
        # one Newton polish with a numerical derivative
        h = max(1e-7, 10 * tol)
        fs = self.log_rho(s, which)
        d = (self.log_rho(s + h, which) - self.log_rho(s - h, which)) / (2 * h)
        if d < 0:
            s2 = s - fs / d
            if lo <= s2 <= hi:
                s = s2
        return s


def _log_perron(size, r, c, w) -> float:
    if size <= 400:
        M = np.zeros((size, size))
        np.add.at(M, (r, c), w)
        ev = np.linalg.eigvals(M)
        rho = float(np.max(np.abs(ev)))
    else:
        M = sp.csr_matrix((w, (r, c)), shape=(size, size))
        try:
            ev = eigs(M, k=1, which="LM", return_eigenvectors=False, tol=1e-13, maxiter=20000)
            rho = float(np.abs(ev[0]))
        except ArpackNoConvergence:
            rho = _power_rho(M)
    if rho <= 0:
        return -math.inf
    return math.log(rho)


def _power_rho(M) -> float:
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 0.0
    for _ in range(100000):
        w = v + M @ v
        nw = np.abs(w).sum()
        w /= nw
        if np.abs(w - v).max() < 1e-15:
            lam = nw - 1.0
            break
        v = w
        lam = nw - 1.0
    else:
        raise NumericFailure("power iteration did not converge")
    return lam


def _state_words(X: FiniteTypeSet, k: int):
    """All words of length k in the language of X (paths), sorted."""
    L = X.window_length
    if k <= L:
        return list(X.windows)
    words = list(X.windows)
    succ = X.succ
    idx = X.index
    cur = [(w, idx[w]) for w in words]
    for _ in range(k - L):
        nxt = []
        for w, last in cur:
            for j in succ[last]:
                nxt.append((w + (X.windows[j][-1],), j))
        cur = nxt
    return sorted(w for w, _ in cur)


def _gauss_tail_hull(letters) -> tuple[float, float]:
    """Hull of the continued-fraction tail value [b1; b2, ...] >= 1 over the letters."""
    lo, hi = digit_tail_range(letters)
    return 1.0 / float(hi), 1.0 / float(lo)


def _y_hull(word, Ylo, Yhi, pad=1e-12):
    """Hull of y = [0; word, Y] for Y in [Ylo, Yhi]; the empty word gives 1/Y."""
    if not word:
        a, b = 1.0 / Yhi, 1.0 / Ylo
    else:
        a = 1.0 / apply_word(word, Ylo)
        b = 1.0 / apply_word(word, Yhi)
        a, b = min(a, b), max(a, b)
    return a - pad, b + pad


def _gauss_system_graph(X: FiniteTypeSet, depth: int):
    k = max(depth, X.window_length)
    states = _state_words(X, k)
    index = {w: i for i, w in enumerate(states)}
    Ylo, Yhi = _gauss_tail_hull(X.letters)
    hull = [_y_hull(w, Ylo, Yhi) for w in states]
    rows, cols, lmin, lmax = [], [], [], []
    for i, w in enumerate(states):
        a = w[0]
        for b in X.letters:
            j = index.get(w[1:] + (b,))
            if j is None:
                continue
            ylo, yhi = hull[j]
            rows.append(i)
            cols.append(j)
            lmin.append(-2.0 * math.log(a + yhi))
            lmax.append(-2.0 * math.log(a + ylo))
    return len(states), rows, cols, lmin, lmax


def _gauss_complete_graph(X: CompleteSubshift, depth: int):
    words = X.words
    m = len(words)
    d = max(depth, 1)
    if m ** d > 20000:
        raise NumericFailure(f"complete-subshift depth {d} too large for {m} blocks")
    import itertools
    states = list(itertools.product(range(m), repeat=d))
    index = {s: i for i, s in enumerate(states)}
    Ylo, Yhi = _gauss_tail_hull(X.letters)
    hull = []
    for st in states:
        w = tuple(a for i in st for a in words[i])
        hull.append(_y_hull(w, Ylo, Yhi))
    qs = [continuants(w) for w in words]
    rows, cols, lmin, lmax = [], [], [], []
    for i, st in enumerate(states):
        q, qp = qs[st[0]]
        for b in range(m):
            j = index[st[1:] + (b,)]
            ylo, yhi = hull[j]
            rows.append(i)
            cols.append(j)
            lmin.append(-2.0 * math.log(q + qp * yhi))
            lmax.append(-2.0 * math.log(q + qp * ylo))
    return len(states), rows, cols, lmin, lmax


def _product_graph(X, model: ContractionModel, side: str):
    # X arrives reversed on the s side; ratios stay keyed by the original transition
    if side == "u":
        r = model.u
    else:
        r = {(b, a): v for (a, b), v in model.s.items()}
    rows, cols, lw = [], [], []
    if isinstance(X, FiniteTypeSet):
        for i, w in enumerate(X.windows):
            for j in X.succ[i]:
                v = X.windows[j]
                rows.append(i)
                cols.append(j)
                lw.append(math.log(r[(w[-1], v[-1])]))
        return len(X.windows), rows, cols, lw, lw
    words = X.words
    for i, w in enumerate(words):
        inner = sum(math.log(r[(a, b)]) for a, b in zip(w, w[1:]))
        for j, v in enumerate(words):
            rows.append(i)
            cols.append(j)
            lw.append(inner + math.log(r[(w[-1], v[0])]))
    return len(words), rows, cols, lw, lw


def _orient(X, side: str):
    if side == "u":
        return X
    return X.reversed()


def _scalar_bracket(X, depth: int) -> tuple | None:
    """Literal depth-n scalar Moran pair on cylinders (diagnostic only)."""
    if isinstance(X, CompleteSubshift):
        import itertools
        if len(X.words) ** depth > 20000:
            return None
        cyl = [tuple(a for i in c for a in X.words[i]) for c in itertools.product(range(len(X.words)), repeat=depth)]
    else:
        from .symbolic import enumerate_words  # noqa: F401
        cyl = [w for w in _words_of_length(X, depth)]
        if len(cyl) > 20000:
            return None
    y_lo, y_hi = (float(v) for v in digit_tail_range(X.letters))
    big, small = [], []
    for w in cyl:
        q, qp = continuants(w)
        big.append(1.0 / (q + qp * y_lo) ** 2)
        small.append(1.0 / (q + qp * y_hi) ** 2)
    return float(moran_root(small, tol=1e-15)), float(moran_root(big, tol=1e-15))


def _words_of_length(X: FiniteTypeSet, n: int):
    L = X.window_length
    if n <= L:
        return sorted({w[:n] for w in X.windows})
    return _state_words(X, n)


def moran_bracket(X, model: ContractionModel, depth: int, side: str = "u", scalar: bool = False) -> MoranBracket:
    """Dimension bracket [alpha, beta] of the side-projection of X at depth n.

    Gauss: graph-directed refinement, states pin the next `depth` letters
    (at least one window); alpha uses the smallest branch derivatives,
    beta the largest. Product: exact spectral radius, alpha = beta.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if X is None or len(X) == 0:
        return MoranBracket(depth, side, 0.0, 0.0, float("inf"), 1.0, 0)
    Y = _orient(X, side)
    if model.kind == GAUSS:
        if isinstance(Y, CompleteSubshift):
            n, rows, cols, lmin, lmax = _gauss_complete_graph(Y, depth)
        else:
            n, rows, cols, lmin, lmax = _gauss_system_graph(Y, depth)
    else:
        n, rows, cols, lmin, lmax = _product_graph(Y, model, side)
    system = _DirectedSystem(n, rows, cols, lmin, lmax)
    alpha = system.root("min")
    beta = system.root("max")
    if beta < alpha:
        # exact weights: both roots are the same number up to rounding
        alpha = beta = 0.5 * (alpha + beta)
    lmax_arr = np.asarray(lmax, dtype=float)
    lmin_arr = np.asarray(lmin, dtype=float)
    if len(lmax_arr):
        lam = float(np.exp(-lmax_arr.max()))
        a_step = float(np.exp((lmax_arr - lmin_arr).max()))
    else:
        lam, a_step = float("inf"), 1.0
    sc = None
    if scalar and model.kind == GAUSS:
        sc = _scalar_bracket(Y, depth)
    return MoranBracket(depth, side, float(alpha), float(beta), lam, a_step ** depth, n, sc)


def dimension(X, model: ContractionModel, max_depth: int = 8, tol: float = 1e-3,
              count_scales: int = 0) -> DimensionEstimate:
    """Deepen Moran brackets on both sides until the gap is below tol."""
    est = DimensionEstimate()
    if X is None or len(X) == 0:
        est.brackets_u.append(MoranBracket(1, "u", 0.0, 0.0, float("inf"), 1.0, 0))
        est.brackets_s.append(MoranBracket(1, "s", 0.0, 0.0, float("inf"), 1.0, 0))
        est.flags.append("empty")
        return est
    depths = list(range(1, max_depth + 1))
    if isinstance(X, FiniteTypeSet) and model.kind == GAUSS:
        # depths up to the window length give the same state system
        L = X.window_length
        depths = [L] + [d for d in depths if d > L]
    elif model.kind == PRODUCT:
        depths = [1]
    for side, out in (("u", est.brackets_u), ("s", est.brackets_s)):
        for d in depths:
            b = moran_bracket(X, model, d, side)
            out.append(b)
            if b.gap < tol:
                break
        if out[-1].gap >= tol:
            est.flags.append(f"gap_{side}_above_tol")
    if count_scales > 0:
        c2 = model.c2
        A = model.alphabet_size
        for r in range(1, count_scales + 1):
            N = scale_cover(X, model, r, "u").count
            if N == 0:
                continue
            est.counts_u.append((r, N, math.log(N) / r, math.log(A ** c2 * N) / r))
    return est
