"""Command line entry point: spectra-lab <command> [flags]."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import SCHEMA, __version__
from .decomposition import connected_before, decompose
from .errors import (EmptyAfterTrim, ExtractionInfeasible, ModelError, NoExtraction, PieceNotRealizable,
                     SpectraLabError)
from .extraction import ExtractionParams, extract_complete_subshift
from .geometry import ContractionModel, dimension, model_from_dict
from .graph import finite_type_from_system
from .spectra import CF_SUM, WINDOW_TABLE, Potential, cf_sum, enumerate_spectrum, prune_sublevel, staircase, window_table
from .symbolic import TransitionSystem, parse_word, word_to_str

EXIT_MODEL = 2
EXIT_INVALID = 3
EXIT_PIECE = 4
EXIT_EXTRACT = 5
MAX_PERIOD_CAP = 16
BUNDLED = {"cf12": "cf12.json", "golden-mean": "golden_mean.json", "golden_mean": "golden_mean.json"}
MODEL_FIELDS = {"schema", "alphabet", "transitions", "contraction", "potential", "metadata"}


class UsageError(Exception):
    """Invalid argument values (exit 3)."""


@dataclass
class Model:
    ts: TransitionSystem
    contraction: ContractionModel
    potential: Potential
    raw: dict


# ---------------------------------------------------------------- model files

def _letter(x):
    if isinstance(x, bool) or not isinstance(x, (int, str)):
        raise ModelError(f"letters must be integers or strings, got {x!r}")
    return x


def parse_model(d) -> Model:
    if not isinstance(d, dict):
        raise ModelError("model file must hold a JSON object")
    extra = set(d) - MODEL_FIELDS
    if extra:
        raise ModelError(f"unknown model fields {sorted(extra)}")
    missing = {"schema", "alphabet", "transitions", "contraction", "potential"} - set(d)
    if missing:
        raise ModelError(f"missing model fields {sorted(missing)}")
    if d["schema"] != SCHEMA:
        raise ModelError(f"schema must be {SCHEMA!r}, got {d['schema']!r}")
    letters = [_letter(a) for a in d["alphabet"]]
    tr = d["transitions"]
    try:
        if tr == "full":
            ts = TransitionSystem.full(letters)
        elif isinstance(tr, list):
            by_name = {str(a): a for a in letters}
            pairs = []
            for p in tr:
                if not isinstance(p, list) or len(p) != 2:
                    raise ModelError(f"bad transition entry {p!r}")
                a, b = (by_name.get(str(x)) for x in p)
                if a is None or b is None:
                    raise ModelError(f"transition {p!r} uses an unknown letter")
                pairs.append((a, b))
            ts = TransitionSystem(tuple(letters), frozenset(pairs))
        else:
            raise ModelError("transitions must be \"full\" or a list of pairs")
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    if not isinstance(d["contraction"], dict):
        raise ModelError("contraction must be an object")
    contraction = model_from_dict(d["contraction"], letters)
    if contraction.kind == "gauss" and set(contraction.digits) != set(letters):
        raise ModelError("gauss digits must equal the alphabet")
    pot = _parse_potential(d["potential"], ts)
    meta = d.get("metadata", {})
    if not isinstance(meta, dict) or set(meta) - {"name", "notes"}:
        raise ModelError("metadata may only hold name and notes")
    return Model(ts, contraction, pot, d)


def _parse_potential(p, ts: TransitionSystem) -> Potential:
    if not isinstance(p, dict):
        raise ModelError("potential must be an object")
    kind = p.get("kind")
    if kind == CF_SUM:
        if set(p) != {"kind"}:
            raise ModelError(f"unknown potential fields {sorted(set(p) - {'kind'})}")
        if not all(isinstance(a, int) and a >= 1 for a in ts.letters):
            raise ModelError("cf_sum needs positive integer letters")
        return cf_sum()
    if kind == WINDOW_TABLE:
        extra = set(p) - {"kind", "radius", "values", "modulus"}
        if extra:
            raise ModelError(f"unknown potential fields {sorted(extra)}")
        try:
            vals = {parse_word(k, ts): float(v) for k, v in p["values"].items()}
            return window_table(int(p["radius"]), vals, p.get("modulus"))
        except (KeyError, ValueError, TypeError) as exc:
            raise ModelError(f"bad window table: {exc}") from exc
    raise ModelError(f"unknown potential kind {kind!r}")


def load_model(spec: str) -> Model:
    if spec in BUNDLED:
        text = resources.files("spectra_lab").joinpath("models", BUNDLED[spec]).read_text()
    else:
        try:
            text = Path(spec).read_text()
        except OSError as exc:
            raise ModelError(f"cannot read model {spec!r}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON: {exc}") from exc
    return parse_model(d)


# ---------------------------------------------------------------- output helpers

def g9(x) -> str:
    return f"{x:.9g}"


def _clean(obj):
    """Round floats to 9 significant digits; non-finite floats become null."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(g9(x))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [_clean(v) for v in sorted(obj, key=str)]
    return obj


def dump_json(command: str, payload: dict) -> str:
    doc = {"schema": SCHEMA, "command": command, "version": __version__, "result": _clean(payload)}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------- cache

def cache_dir() -> Path:
    env = os.environ.get("SPECTRA_LAB_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "spectra-lab"


def cache_key(command: str, model: Model, params: dict) -> str:
    blob = json.dumps({"version": __version__, "command": command, "model": model.raw, "params": params},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def cache_get(key: str):
    path = cache_dir() / f"{key}.json"
    try:
        entry = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if entry.get("version") != __version__:
        return None
    return entry.get("outputs")


def cache_put(key: str, outputs: dict, command: str) -> None:
    d = cache_dir()
    try:
        d.mkdir(parents=True, exist_ok=True)
        entry = {"version": __version__, "command": command, "created": time.time(), "outputs": outputs}
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(entry, fh, sort_keys=True)
        os.replace(tmp, d / f"{key}.json")
    except OSError:
        pass


# ---------------------------------------------------------------- commands

def run_spectrum(model: Model, a) -> dict:
    if not 1 <= a.max_period <= MAX_PERIOD_CAP:
        raise UsageError(f"--max-period must lie in [1, {MAX_PERIOD_CAP}]")
    sample = enumerate_spectrum(model.ts, model.potential, a.max_period, a.kind)
    lines = ["value,witness"]
    for v, w in sample.entries:
        lines.append(f"{g9(v)},{word_to_str(w)}")
    return {"main": "\n".join(lines) + "\n"}


def _sublevel_graph(model: Model, t, memory: int):
    if t is None:
        return finite_type_from_system(model.ts, memory)
    return prune_sublevel(model.ts, model.potential, model.contraction, t, memory, "inner").graph


def run_dimension(model: Model, a) -> dict:
    X = _sublevel_graph(model, a.t, a.memory)
    est = dimension(X, model.contraction, a.max_depth, a.tol)
    payload = {"t": a.t, "memory": a.memory, "nodes": len(X), **est.to_dict()}
    return {"main": dump_json("dimension", payload)}


def run_staircase(model: Model, a) -> dict:
    if a.steps < 1 or not a.t_min <= a.t_max:
        raise UsageError("need steps >= 1 and t-min <= t-max")
    grid = [a.t_min] if a.steps == 1 else [float(t) for t in np.linspace(a.t_min, a.t_max, a.steps)]
    st = staircase(model.ts, model.potential, model.contraction, grid, a.memory, a.depth)
    plot = ["# t hd_sum"]
    for r in st.grid:
        plot.append(f"{g9(r.t)} {g9(r.hd_sum)}")
    for lo, hi, inc in st.jump_candidates:
        plot.append(f"# jump {g9(lo)} {g9(hi)} {g9(inc)}")
    warnings = sum(1 for r in st.grid if r.flags)
    return {"main": st.to_csv(), "plot": "\n".join(plot) + "\n", "warnings": str(warnings)}


def run_decompose(model: Model, a) -> dict:
    X = prune_sublevel(model.ts, model.potential, model.contraction, a.t, a.memory, "inner").graph
    if len(X) == 0:
        raise EmptyAfterTrim(f"sublevel at t={a.t} is empty after trimming")
    dec = decompose(X)
    payload = {"t": a.t, "memory": a.memory, **dec.to_dict()}
    return {"main": dump_json("decompose", payload)}


def run_connect(model: Model, a) -> dict:
    p1 = parse_word(a.piece1, model.ts)
    p2 = parse_word(a.piece2, model.ts)
    grid = None
    if a.q_grid:
        grid = [float(x) for x in a.q_grid.split(",") if x.strip()]
    rep = connected_before(p1, p2, a.t, model.ts, model.potential, model.contraction, q_grid=grid,
                           memory=a.memory)
    return {"main": dump_json("connect", rep.to_dict())}


def run_extract(model: Model, a) -> dict:
    X = prune_sublevel(model.ts, model.potential, model.contraction, a.t, a.memory, "inner").graph
    params = ExtractionParams(r0=a.r0, k=a.k, memory=a.memory, samples=a.samples, seed=a.seed)
    res = extract_complete_subshift(X, model.potential, model.contraction, params, model.ts)
    payload = {"t": a.t, **res.to_dict()}
    return {"main": dump_json("extract", payload)}


COMMANDS = {
    "spectrum": run_spectrum,
    "dimension": run_dimension,
    "staircase": run_staircase,
    "decompose": run_decompose,
    "connect": run_connect,
    "extract": run_extract,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectra-lab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="model JSON path or bundled name (cf12, golden-mean)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--no-cache", action="store_true", help="bypass the result cache")

    p = sub.add_parser("spectrum", help="periodic-orbit Markov/Lagrange values as CSV")
    common(p)
    p.add_argument("--max-period", type=int, default=8)
    p.add_argument("--kind", choices=["markov", "lagrange"], default="markov")

    p = sub.add_parser("dimension", help="Moran dimension brackets (JSON)")
    common(p)
    p.add_argument("--t", type=float, default=None, help="restrict to the inner sublevel at t")
    p.add_argument("--memory", type=int, default=3)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-3)

    p = sub.add_parser("staircase", help="sublevel dimension table (CSV) and plot data")
    common(p)
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--memory", type=int, default=5)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--plot", help="two-column plot data path (default: <out>.dat)")

    p = sub.add_parser("decompose", help="pieces and transients of a sublevel graph (JSON)")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--memory", type=int, default=6)

    p = sub.add_parser("connect", help="whether two periodic pieces connect before t (JSON)")
    common(p)
    p.add_argument("piece1")
    p.add_argument("piece2")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--memory", type=int, default=6)
    p.add_argument("--q-grid", help="comma-separated probe thresholds")

    p = sub.add_parser("extract", help="complete subshift inside a sublevel (JSON)")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--memory", type=int, default=6)
    p.add_argument("--r0", type=int, default=2)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _params(a) -> dict:
    skip = {"model", "out", "no_cache", "plot", "command"}
    return {k: v for k, v in sorted(vars(a).items()) if k not in skip}


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text)


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        model = load_model(a.model)
    except (ModelError, ValueError) as exc:
        print(f"spectra-lab: bad model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    key = cache_key(a.command, model, _params(a))
    outputs = None if a.no_cache else cache_get(key)
    if outputs is None:
        try:
            outputs = COMMANDS[a.command](model, a)
        except UsageError as exc:
            print(f"spectra-lab: {exc}", file=sys.stderr)
            return EXIT_INVALID
        except PieceNotRealizable as exc:
            print(f"spectra-lab: {exc}", file=sys.stderr)
            return EXIT_PIECE
        except ExtractionInfeasible as exc:
            diag = {"error": str(exc), "longest_good_run": exc.longest_good_run}
            print(json.dumps(diag, sort_keys=True), file=sys.stderr)
            return EXIT_EXTRACT
        except NoExtraction as exc:
            print(json.dumps({"error": str(exc)}, sort_keys=True), file=sys.stderr)
            return EXIT_EXTRACT
        except (SpectraLabError, ValueError) as exc:
            print(f"spectra-lab: {exc}", file=sys.stderr)
            return EXIT_INVALID
        if not a.no_cache:
            cache_put(key, outputs, a.command)
    _write(a.out, outputs["main"])
    if "plot" in outputs:
        plot_path = getattr(a, "plot", None) or (a.out + ".dat" if a.out else None)
        if plot_path:
            Path(plot_path).write_text(outputs["plot"])
    n_warn = int(outputs.get("warnings", "0"))
    if n_warn:
        print(f"spectra-lab: {n_warn} rows flagged", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
