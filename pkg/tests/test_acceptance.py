"""Acceptance criteria 1-10 at their stated tolerances and runtime budgets.

Each criterion records one PASS/FAIL line; the lines are printed at the end
of the pytest run (see conftest.py) and also directly when run with -s.
"""
import json
import math
import random
import time
from itertools import product

import mpmath
import numpy as np

from oracles import deep_oracle, markov_numbers, scc_brute, sequence_f
from spectra_lab.cli import EXIT_EXTRACT, EXIT_INVALID, EXIT_MODEL, EXIT_PIECE, main
from spectra_lab.decomposition import NONTRIVIAL, PERIODIC, connected_before, decompose_graph, verify_transitivity
from spectra_lab.errors import PieceNotRealizable
from spectra_lab.extraction import control_word, extract_complete_subshift, subshift_windows, verify_control
from spectra_lab.geometry import branch_model, check_submultiplicativity, moran_bracket, scale, scale_cover
from spectra_lab.graph import CompleteSubshift, finite_type_from_system, trim
from spectra_lab.spectra import (enumerate_spectrum, eval_f, first_accumulation, markov_value, prune_sublevel,
                                 window_bounds, window_table)
from spectra_lab.symbolic import SymbolicPoint, TransitionSystem, enumerate_words, is_admissible, periodic_point

RESULTS: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"acceptance {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line)


# ---------------------------------------------------------------- 1

def test_criterion_1_markov_theorem(ts12, pot):
    t0 = time.time()
    zs = markov_numbers(985)
    expected = {z: math.sqrt(9 - 4 / z ** 2) for z in zs}
    sample = enumerate_spectrum(ts12, pot, 10, "markov")
    low = [(v, w) for v, w in sample.entries if v < 2.99]
    want = sorted((v, z) for z, v in expected.items() if v < 2.99)
    witnesses = {1: (1,), 2: (2,), 5: (2, 2, 1, 1)}
    ok = len(low) == len(want) and all(abs(v - u) < 1e-9 and w == witnesses[z]
                                       for (v, w), (u, z) in zip(low, want))
    # every enumerated value below 3 is a Markov value sqrt(9 - 4/z^2)
    below3 = [v for v in sample.values if v < 3]
    ok = ok and all(min(abs(v - u) for u in expected.values()) < 1e-9 for v in below3)
    dt = time.time() - t0
    ok = ok and dt < 60
    record(1, ok, f"{len(low)} values below 2.99, {len(below3)} below 3, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_exact_fixtures(pot):
    t0 = time.time()
    mpmath.mp.dps = 40
    checks = [
        (markov_value(pot, periodic_point((1,))), mpmath.sqrt(5)),
        (markov_value(pot, periodic_point((2,))), 2 * mpmath.sqrt(2)),
        (markov_value(pot, periodic_point((2, 2, 1, 1))), mpmath.sqrt(221) / 5),
        (eval_f(pot, periodic_point((1,))), mpmath.sqrt(5)),
        (eval_f(pot, SymbolicPoint((1,), (2,), (1,), 0)), 1 + mpmath.sqrt(5)),
        (markov_value(pot, SymbolicPoint((2,), (), (1,), 0)), 1 + mpmath.sqrt(2) + (mpmath.sqrt(5) - 1) / 2),
    ]
    # junction constants against long truncations as well
    seq = [1] * 100 + [2] + [1] * 100
    checks.append((1 + math.sqrt(5), sequence_f(seq, 100)))
    seq = [2] * 100 + [1] * 100
    checks.append((1 + math.sqrt(2) + (math.sqrt(5) - 1) / 2, max(sequence_f(seq, i) for i in (99, 100))))
    errs = [abs(mpmath.mpf(a) - b) for a, b in checks]
    dt = time.time() - t0
    ok = max(errs) < 1e-9 and dt < 1
    record(2, ok, f"max error {float(max(errs)):.1e}, {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------- 3

def test_criterion_3_first_accumulation(ts12, pot, gauss12):
    t0 = time.time()
    c, ev = first_accumulation(ts12, pot, gauss12, memory=6)
    dt = time.time() - t0
    ok = abs(c - 3.0) <= 0.05 and dt < 300
    record(3, ok, f"estimate {c:.6f}, staircase {ev['c_staircase']}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_dimension_brackets(ts12, gauss12):
    t0 = time.time()
    ref = deep_oracle()
    X = finite_type_from_system(ts12, 1)
    converged = None
    gap_ok = True
    last = None
    for n in range(1, 9):
        b = moran_bracket(X, gauss12, n)
        g = b.gap_bound()
        gap_ok = gap_ok and b.alpha <= b.beta and (g is None or b.gap <= g + 1e-12)
        last = b
        if b.beta - b.alpha < 1e-3 and converged is None:
            converged = n
    brackets = last.alpha - 1e-12 <= ref <= last.beta + 1e-12 and abs(ref - 0.5313) <= 0.001
    two = CompleteSubshift((("a",), ("b",)))
    exact = moran_bracket(two, branch_model({"a": 1 / 3, "b": 1 / 3}), 1)
    exact_ok = abs(exact.alpha - math.log(2) / math.log(3)) < 1e-9 and abs(exact.beta - exact.alpha) < 1e-9
    dt = time.time() - t0
    ok = converged is not None and brackets and exact_ok and gap_ok and dt < 120
    record(4, ok, f"gap < 1e-3 at depth {converged}, [{last.alpha:.6f}, {last.beta:.6f}] vs oracle {ref:.6f}, "
                  f"{dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5

def _brute_window_hi(windows, center, depth=8):
    """Max of f at center over every depth-`depth` continuation, closed by the extreme tails 1 and 3."""
    W = np.array(windows, dtype=float)
    tails = np.array(list(product((1, 2), repeat=depth)), dtype=float)
    ends = []
    for closure in (1.0, 3.0):
        y = np.full(len(tails), closure)
        for k in range(depth - 1, -1, -1):
            y = tails[:, k] + 1.0 / y
        ends.append(y)
    ends = np.concatenate(ends)
    r = np.tile(ends, (len(W), 1))
    for k in range(W.shape[1] - 1, center - 1, -1):
        r = W[:, k:k + 1] + 1.0 / r
    l = np.tile(ends, (len(W), 1))
    for k in range(0, center):
        l = W[:, k:k + 1] + 1.0 / l
    return r.max(axis=1) + (1.0 / l).max(axis=1)


def _oracle_trim(windows, memory):
    idx = {w: i for i, w in enumerate(windows)}
    succ = [[idx[w[1:] + (b,)] for b in (1, 2) if w[1:] + (b,) in idx] for w in windows]
    n = len(windows)
    _, reach = scc_brute(n, succ)
    cyc = [v for v in range(n) if any(reach[w][v] for w in succ[v])]
    return {windows[v] for v in range(n) if any(reach[c][v] for c in cyc) and any(reach[v][c] for c in cyc)}


def test_criterion_5_pruning(ts12, pot, gauss12):
    t0 = time.time()
    wins = enumerate_words(ts12, 13)
    hi = _brute_window_hi(wins, 6)
    kept = [w for w, h in zip(wins, hi) if h <= 2.9]
    oracle = _oracle_trim(kept, 6)
    got = prune_sublevel(ts12, pot, gauss12, 2.9, 6, "inner").kept
    exact = got == oracle == {(1,) * 13, (2,) * 13}
    grid = [2.2 + 0.06 * k for k in range(20)]
    mono = True
    prev_in = prev_out = frozenset()
    for t in grid:
        inner = prune_sublevel(ts12, pot, gauss12, t, 6, "inner").kept
        outer = prune_sublevel(ts12, pot, gauss12, t, 6, "outer").kept
        mono = mono and inner <= outer and prev_in <= inner and prev_out <= outer
        prev_in, prev_out = inner, outer
    dt = time.time() - t0
    ok = exact and mono and dt < 120
    record(5, ok, f"{len(got)} windows survive, oracle {len(oracle)}, monotone {mono}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 6

JUNCTION = 1 + math.sqrt(2) + (math.sqrt(5) - 1) / 2
CRIT6: dict = {}


def _random_fixture(rng):
    letters = ("a", "b", "c", "d")[: rng.randint(3, 4)]
    trans = {(a, a) for a in letters}
    for a in letters:
        for b in letters:
            if a != b and rng.random() < 0.5:
                trans.add((a, b))
    ts = TransitionSystem(letters, frozenset(trans))
    table = {w: rng.uniform(0.0, 1.0) for w in enumerate_words(ts, 3)}
    for a in letters:
        table[(a, a, a)] = rng.uniform(0.0, 0.3)
    return ts, window_table(1, table), letters


def _crit6_report():
    if len(CRIT6) == 3:
        ok = all(CRIT6.values())
        parts = ", ".join(f"{k} {'ok' if v else 'failed'}" for k, v in CRIT6.items())
        record(6, ok, parts)


def test_criterion_6_flip_endpoints(ts12, pot, gauss12):
    t0 = time.time()
    a = connected_before((1,), (2,), 2.95, ts12, pot, gauss12, memory=6)
    b = connected_before((1,), (2,), 3.05, ts12, pot, gauss12, memory=6)
    ok = (not a.connected) and b.connected and time.time() - t0 < 300
    CRIT6["endpoints"] = ok
    _crit6_report()
    assert ok


def test_criterion_6_flip_brackets_junction(ts12, pot, gauss12):
    flips = {}
    for memory in (4, 5, 6, 7):
        r = connected_before((1,), (2,), 3.05, ts12, pot, gauss12, memory=memory)
        flips[memory] = r.q_witness
    print("flip thresholds by memory:", {m: round(q, 6) for m, q in flips.items()})
    # as written: the flip threshold brackets 3.0322484 within +-0.01 as memory grows 4 -> 7
    ok = all(abs(q - JUNCTION) <= 0.01 for q in flips.values())
    CRIT6["junction_clause"] = ok
    _crit6_report()
    assert ok, f"flip thresholds {flips} do not lie within 0.01 of {JUNCTION:.7f}"


def test_criterion_6_transitivity():
    rng = random.Random(606)
    model = branch_model({a: 0.3 for a in "abcd"})
    trials = 0
    ok = True
    while trials < 100:
        ts, wpot, letters = _random_fixture(rng)
        t = rng.uniform(0.35, 1.0)
        p = [(a,) for a in rng.sample(letters, 3)]
        try:
            r12 = connected_before(p[0], p[1], t, ts, wpot, model, memory=1)
            r23 = connected_before(p[1], p[2], t, ts, wpot, model, memory=1)
            r13 = connected_before(p[0], p[2], t, ts, wpot, model, memory=1)
        except PieceNotRealizable:
            continue
        trials += 1
        ok = ok and verify_transitivity(r12, r23, r13)
    CRIT6["transitivity"] = ok
    _crit6_report()
    assert ok


# ---------------------------------------------------------------- 7

def _oracle_decomposition(succ):
    n = len(succ)
    comps, reach = scc_brute(n, succ)
    pieces = sorted(c for c in comps if len(c) > 1 or c[0] in succ[c[0]])
    kinds = [PERIODIC if all(sum(w in set(c) for w in succ[v]) == 1 for v in c) else NONTRIVIAL for c in pieces]
    in_piece = {v for c in pieces for v in c}
    trans = {}
    for a, ca in enumerate(pieces):
        for b, cb in enumerate(pieces):
            if a != b and reach[ca[0]][cb[0]]:
                trans[(a, b)] = sorted(v for v in range(n) if v not in in_piece
                                       and reach[ca[0]][v] and reach[v][cb[0]])
    return pieces, kinds, trans


def test_criterion_7_decomposition_oracle():
    t0 = time.time()
    rng = random.Random(77)
    done = mismatches = 0
    while done < 500:
        n = rng.randint(2, 60)
        p = rng.uniform(0.02, 0.12)
        raw = [[w for w in range(n) if rng.random() < p] for _ in range(n)]
        keep = trim(raw)
        if not keep:
            continue
        remap = {v: i for i, v in enumerate(keep)}
        succ = [[remap[w] for w in raw[v] if w in remap] for v in keep]
        done += 1
        comps, kinds, _, trs = decompose_graph(succ)
        pieces, okinds, otrans = _oracle_decomposition(succ)
        same = ([sorted(c) for c in comps] == pieces and kinds == okinds
                and {(a, b): list(nodes) for a, b, nodes in trs} == otrans)
        mismatches += not same
    dt = time.time() - t0
    ok = mismatches == 0 and dt < 30
    record(7, ok, f"{done} graphs, {mismatches} mismatches, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_extraction(ts12, pot, gauss12):
    t0 = time.time()
    X = prune_sublevel(ts12, pot, gauss12, 3.1, 6, "inner").graph
    res = extract_complete_subshift(X, pot, gauss12)
    A = res.alphabet
    complete = all(is_admissible(a + b, ts12) for a in A for b in A)
    radius = res.record["verify_radius"]
    _, hi = window_bounds(pot, subshift_windows(A, radius), radius, ts12)
    sweep = float(hi.max())
    contained = res.delta_measured > 0 and sweep <= res.sup_X - res.delta_measured + 1e-12
    t_ctl = res.sup_X - res.delta_measured + 1e-9
    control = all(verify_control(*control_word(res, w), t_ctl, pot, ts12, gauss12) for w in A)
    formula = res.delta_formula["min"] <= res.delta_measured + 1e-9
    dt = time.time() - t0
    ok = complete and contained and res.dim_lower > 0 and control and formula and dt < 600
    record(8, ok, f"|B_u| = {len(A)}, delta_measured {res.delta_measured:.3e}, dim_lower {res.dim_lower:.4f}, "
                  f"eta {res.eta_achieved:.3f}, good fraction {res.record['good_fraction']:.3f}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 9

def test_criterion_9_cover_laws(ts12, gauss12, golden):
    t0 = time.time()
    fixtures = {"cf12": finite_type_from_system(ts12, 2), "golden-mean": finite_type_from_system(golden, 2)}
    ok = True
    for name, X in fixtures.items():
        for m in range(1, 6):
            for n in range(1, 6):
                ok = ok and check_submultiplicativity(X, gauss12, m, n).ok
        for side in ("u", "s"):
            for r in range(0, 13):
                cov = scale_cover(X, gauss12, r, side)
                ok = ok and cov.count <= math.exp(gauss12.alpha1 * r + gauss12.alpha2)
                ok = ok and all(len(w) < gauss12.alpha1 * r + gauss12.alpha2 for w in cov.words)
                ok = ok and all(scale(gauss12, w, side) >= r for w in cov.words)
    dt = time.time() - t0
    ok = ok and dt < 60
    record(9, ok, f"m, n <= 5 and r <= 12 on {', '.join(fixtures)}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 10

def test_criterion_10_cli(tmp_path, monkeypatch, capsys):
    t0 = time.time()
    monkeypatch.setenv("SPECTRA_LAB_CACHE", str(tmp_path / "cache"))

    def run(*argv):
        code = main(list(argv))
        cap = capsys.readouterr()
        return code, cap.out

    commands = [
        ("spectrum", "cf12", "--max-period", "6"),
        ("spectrum", "golden-mean", "--max-period", "5", "--kind", "lagrange"),
        ("dimension", "cf12", "--max-depth", "3", "--memory", "2"),
        ("staircase", "cf12", "--t-min", "2.9", "--t-max", "3.2", "--steps", "3", "--memory", "3"),
        ("decompose", "cf12", "--t", "2.9", "--memory", "6"),
        ("connect", "cf12", "1", "2", "--t", "3.05", "--memory", "4"),
    ]
    ok = True
    for argv in commands:
        first = run(*argv)
        again = run(*argv)
        fresh = run(*argv, "--no-cache")
        ok = ok and first[0] == 0 and first == again == fresh
        if argv[0] not in ("spectrum", "staircase"):
            doc = json.loads(first[1])
            ok = ok and set(doc) == {"schema", "command", "version", "result"}
            ok = ok and json.dumps(doc, sort_keys=True, indent=2) + "\n" == first[1]
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "spectra-lab/1", "alphabet": [1], "oops": 1}')
    codes = {
        EXIT_MODEL: run("spectrum", str(bad))[0],
        EXIT_INVALID: run("spectrum", "cf12", "--max-period", "0")[0],
        EXIT_PIECE: run("connect", "cf12", "12", "2", "--t", "3.0", "--memory", "3")[0],
        EXIT_EXTRACT: run("extract", "cf12", "--t", "2.9", "--memory", "4")[0],
    }
    ok = ok and all(k == v for k, v in codes.items())
    dt = time.time() - t0
    ok = ok and dt < 30
    record(10, ok, f"{len(commands)} commands byte-identical across cache states, exit codes {sorted(codes.values())}, "
                   f"{dt:.1f}s")
    assert ok
