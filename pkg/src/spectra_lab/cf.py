"""Continued-fraction arithmetic: continuants, periodic tails, extremal tails."""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import mpmath

MP = mpmath.MPContext()
MP.dps = 40


def continuants(word: Sequence[int]) -> tuple[int, int]:
    """(q_n, q_{n-1}) for the word a_1..a_n, with q_0 = 1 and q_{-1} = 0."""
    qm, q = 0, 1
    for a in word:
        qm, q = q, a * q + qm
    return q, qm


def mobius(word: Sequence[int]) -> tuple[int, int, int, int]:
    """Integer matrix (p, p', q, q') with [a_0; a_1, .., a_k, y] = (p y + p')/(q y + q')."""
    p, pp, q, qq = 1, 0, 0, 1
    for a in word:
        p, pp = a * p + pp, p
        q, qq = a * q + qq, q
    return p, pp, q, qq


def periodic_value(period: Sequence[int]):
    """y = [p_1; p_2, .., p_m, p_1, ...] as an mpf (the positive root of a quadratic)."""
    A, B, C, D = mobius(period)
    # y = (A y + B) / (C y + D)  =>  C y^2 + (D - A) y - B = 0
    if C == 0:
        raise ValueError("degenerate period")
    disc = (D - A) ** 2 + 4 * B * C
    return ((A - D) + MP.sqrt(disc)) / (2 * C)


def cf_value(prefix: Sequence[int], period: Sequence[int]):
    """[prefix_0; prefix_1, .., (period)^inf] exactly as a quadratic surd (mpf)."""
    y = periodic_value(period)
    if not prefix:
        return y
    p, pp, q, qq = mobius(prefix)
    return (p * y + pp) / (q * y + qq)


def apply_word(word: Sequence[int], y):
    """[a_0; a_1, .., a_k, y] for a tail value y >= 1 (works for floats, mpf and numpy arrays)."""
    x = y
    for a in reversed(word):
        x = a + 1 / x
    return x


def _greedy_tail(first_choices: tuple, succ: dict, maximize: bool):
    """Extremal sequence b_1 b_2 ... for [b_1; b_2, ...] over paths in a graph.

    The value increases with b_1, decreases with b_2, and so on; the optimum is
    the greedy alternating choice, which is eventually periodic in the state
    (letter, parity).
    """
    seq = []
    seen = {}
    choices = first_choices
    parity = 0
    prev = None
    while True:
        state = (prev, parity)
        if state in seen:
            start = seen[state]
            return tuple(seq[:start]), tuple(seq[start:])
        seen[state] = len(seq)
        want_big = (parity == 0) == maximize
        b = max(choices) if want_big else min(choices)
        seq.append(b)
        prev = b
        choices = succ[b]
        parity ^= 1


@lru_cache(maxsize=None)
def tail_range(choices: tuple, succ_items: tuple) -> tuple:
    """(min, max) of [b_1; b_2, ...] with b_1 in choices and later steps following succ."""
    succ = dict(succ_items)
    lo_pre, lo_per = _greedy_tail(choices, succ, maximize=False)
    hi_pre, hi_per = _greedy_tail(choices, succ, maximize=True)
    lo = cf_value(lo_pre, lo_per)
    hi = cf_value(hi_pre, hi_per)
    return lo, hi


def succ_items(succ: dict) -> tuple:
    return tuple(sorted((a, tuple(sorted(bs))) for a, bs in succ.items()))


def digit_tail_range(digits: Sequence[int]) -> tuple:
    """Hull [min, max] of [0; b_1, b_2, ...] over all sequences in the digit set."""
    ds = tuple(sorted(set(digits)))
    succ = {d: ds for d in ds}
    lo, hi = tail_range(ds, succ_items(succ))
    return 1 / hi, 1 / lo
