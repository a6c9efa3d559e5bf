"""Seeded Monte Carlo experiments and report emission.

Each experiment kind maps to a trial function ``(params, seed) -> record``.
Trial seeds come from :func:`trial_seed`, so any single trial can be rerun on
its own.  Aggregates are computed from the records after the fact and never
depend on trial order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .gf2 import GF2Matrix, rank
from .hypergraph import Hypergraph, core_prediction, d_core
from .matroid import BinaryMatroid, MinorCertificate, fano, verify_certificate
from .pipeline import Columns, PipelineConfig, build_partition, column_patterns, run_pipeline
from .sampler import ModelParams, random_k_subsets, sample_degree_constrained_supports, sample_supports

SCHEMA_VERSION = 1
KINDS = (
    "core_size",
    "column_independence",
    "subset_sums",
    "inverse_row_weights",
    "candidate_probability",
    "minor_end_to_end",
)
MASK64 = (1 << 64) - 1


class IOFailure(OSError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def trial_seed(base_seed: int, trial: int) -> int:
    """Seed of trial ``trial``: splitmix64(splitmix64(base) xor trial), 63 bits."""
    return splitmix64(splitmix64(base_seed & MASK64) ^ trial) >> 1


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, mid - half), min(1.0, mid + half))


def rel_err(observed: float, predicted: float) -> float:
    if predicted == 0:
        return 0.0 if observed == 0 else math.inf
    return abs(observed - predicted) / abs(predicted)


def _even_check(rec: dict, sup: np.ndarray, n: int, k: int) -> None:
    if k % 2 == 0:
        m = GF2Matrix.from_column_supports(n, sup)
        rec["row_sum_zero"] = not np.bitwise_xor.reduce(m.data, axis=0).any()


# trial functions -----------------------------------------------------------


def _core_size(p: dict, seed: int) -> dict:
    n, k, d = p["n"], p["k"], p["d"]
    m = p.get("m") or int(round(p["c"] * n / k))
    sup = sample_supports(ModelParams(n, m, k, seed))
    core = d_core(Hypergraph(n, sup), d)
    rec = {"m": m, "core_vertices": core.n_vertices, "core_edges": core.n_edges}
    _even_check(rec, sup, n, k)
    return rec


def _column_independence(p: dict, seed: int) -> dict:
    n, k = p["n"], p["k"]
    m1 = p.get("m1") or n // 4
    sup = sample_supports(ModelParams(n, m1, k, seed))
    r = rank(GF2Matrix.from_column_supports(n, sup))
    rec = {"m1": m1, "rank": r, "independent": r == m1}
    _even_check(rec, sup, n, k)
    return rec


def _subset_rows(p: dict, seed: int) -> tuple[GF2Matrix, int]:
    n, m, k = p["n"], p["m"], p["k"]
    rng = np.random.default_rng(seed)
    min_row = p.get("min_row", 0)
    if min_row:
        sup = sample_degree_constrained_supports(n, m, k, min_row, rng, 1)[0]
    else:
        sup = random_k_subsets(rng, n, k, m)
    return GF2Matrix.from_column_supports(n, sup), m


def _alpha(p: dict, m: int) -> int:
    a = p.get("alpha", "zero")
    if a == "zero":
        return 0
    if a == "e1":
        return 1
    if a == "ones":
        return (1 << m) - 1
    return sum(1 << int(i) for i in a)


def subset_sum_counts(rows: list[int], alpha: int) -> np.ndarray:
    """counts[s] = number of s-subsets of ``rows`` whose XOR is ``alpha`` (exhaustive)."""
    n = len(rows)
    if n > 26:
        raise ValueError("exhaustive subset sums limited to n <= 26")
    sums = np.zeros(1, dtype=object if max(rows, default=0).bit_length() > 62 else np.int64)
    sizes = np.zeros(1, dtype=np.int64)
    for r in rows:
        sums = np.concatenate([sums, sums ^ r])
        sizes = np.concatenate([sizes, sizes + 1])
    return np.bincount(sizes[sums == alpha], minlength=n + 1)


def _subset_sums(p: dict, seed: int) -> dict:
    A, m = _subset_rows(p, seed)
    n = A.nrows
    alpha = _alpha(p, m)
    rows = [sum(1 << int(j) for j in np.flatnonzero(A.to_dense()[i])) for i in range(n)]
    mode = p.get("mode", "auto")
    if mode == "auto":
        mode = "exhaustive" if n <= 20 else "sampled"
    rec: dict = {"mode": mode}
    if mode == "exhaustive":
        counts = subset_sum_counts(rows, alpha)
        rec["counts_by_size"] = counts.tolist()
        rec["count_proper"] = int(counts[1:n].sum())
        return rec
    s0 = p.get("s0") or min(n, math.ceil(n * math.exp(-p["k"])))
    samples = p.get("samples_per_size", 10_000)
    rng = np.random.default_rng(splitmix64(seed) >> 1)
    words = A.data
    alpha_words = np.zeros(words.shape[1], dtype=np.uint64)
    for j in range(m):
        if alpha >> j & 1:
            alpha_words[j >> 6] |= np.uint64(1) << np.uint64(j & 63)
    est, sd, hits = [], [], []
    for s in range(1, s0 + 1):
        idx = random_k_subsets(rng, n, s, samples)
        acc = np.bitwise_xor.reduce(words[idx], axis=1)
        h = int((acc == alpha_words).all(axis=1).sum())
        frac = h / samples
        tot = math.comb(n, s)
        hits.append(h)
        est.append(tot * frac)
        sd.append(tot * math.sqrt(frac * (1 - frac) / samples))
    rec.update({"s0": s0, "samples_per_size": samples, "hits_by_size": hits, "estimate_by_size": est, "sd_by_size": sd})
    rec["event"] = any(hits)
    return rec


def _inverse_row_weights(p: dict, seed: int) -> dict:
    n, k = p["n"], p["k"]
    m = p.get("m") or 12 * n
    cfg = PipelineConfig(**p.get("pipeline", {}))
    run = run_pipeline(ModelParams(n, m, k, seed), fano(), cfg, stop_after="build_basis")
    rec: dict = {"ok": run.failure is None}
    if run.failure is not None:
        rec["failure_stage"] = run.failure.stage
        rec["failure_error"] = run.failure.error
        return rec
    tr = run.trace
    n2 = tr.n2
    w = tr.B_inv.row_weights()
    unit = [i for i, c in enumerate(tr.B_cols) if c is None]
    w = np.delete(w, unit)
    eps0 = cfg.eps0 if cfg.eps0 is not None else max(0.5 * math.exp(-k), 1.0 / n2)
    lo, hi = eps0 * n2, n2 - eps0 * n2
    edges = np.linspace(0, n2, p.get("bins", 20) + 1)
    rec.update(
        {
            "n2": n2,
            "eps0": eps0,
            "min_weight": int(w.min()),
            "max_weight": int(w.max()),
            "mean_weight": float(w.mean()),
            "in_band": int(((w >= lo) & (w <= hi)).sum()),
            "rows": int(len(w)),
            "below_asymptotic_floor": int((w < 0.5 * math.exp(-k) * n2).sum()),
            "histogram": np.histogram(w, bins=edges)[0].tolist(),
        }
    )
    return rec


def planted_supports(atom_sizes: list[int]) -> GF2Matrix:
    """K x n supports whose atom ``sigma`` has ``atom_sizes[sigma]`` elements (contiguous)."""
    K = int(round(math.log2(len(atom_sizes))))
    sigma = np.repeat(np.arange(len(atom_sizes)), atom_sizes)
    dense = (sigma[None, :] >> np.arange(K)[:, None]) & 1
    return GF2Matrix.from_dense(dense)


def exact_match_probability(atom_sizes: list[int], large: np.ndarray, dvals: list[int], k: int, target: int) -> float:
    """Pr[a uniform k-subset is a candidate with D c_R = target], by enumerating atom counts."""
    n = sum(atom_sizes)
    total = 0
    cells = [s for s in range(len(atom_sizes)) if large[s] and atom_sizes[s] > 0]
    K = int(round(math.log2(len(atom_sizes))))

    def rec(i: int, left: int, ways: int, acc: int) -> None:
        nonlocal total
        if i == len(cells):
            if left == 0 and acc == target:
                total += ways
            return
        s = cells[i]
        for c in range(min(left, atom_sizes[s]) + 1):
            col = (1 << K) - 1 - s
            rec(i + 1, left - c, ways * math.comb(atom_sizes[s], c), acc ^ (dvals[col] if c % 2 else 0))

    rec(0, k, 1, 0)
    return total / math.comb(n, k)


def _candidate_probability(p: dict, seed: int) -> dict:
    sizes = list(p["atom_sizes"])
    k = p["k"]
    eps1 = p["eps1"]
    S = planted_supports(sizes)
    n = S.ncols
    K = S.nrows
    atoms, D = build_partition(S, list(range(K)), eps1, n)
    target = sum(int(b) << i for i, b in enumerate(p.get("target", [1] * K)))
    exact = exact_match_probability(sizes, atoms.large, D.column_values(), k, target)
    rng = np.random.default_rng(seed)
    N = p.get("columns", 1_000_000)
    rows = S.to_dense().astype(np.int64)
    posmap = np.arange(n)
    hits = cands = 0
    for start in range(0, N, 1 << 17):
        b = min(1 << 17, N - start)
        sup = random_k_subsets(rng, n, k, b)
        pats, cand = column_patterns(sup, posmap, rows, atoms, D, debug=p.get("debug", True))
        hits += int(((pats == target) & cand).sum())
        cands += int(cand.sum())
    freq = hits / N
    sd = math.sqrt(exact * (1 - exact) / N)
    return {
        "columns": N,
        "hits": hits,
        "candidates": cands,
        "frequency": freq,
        "exact": exact,
        "sd": sd,
        "z": (freq - exact) / sd if sd > 0 else 0.0,
        "lower_bound": eps1**k,
    }


def load_target(spec) -> BinaryMatroid:
    if spec is None or spec == "fano":
        return fano()
    if isinstance(spec, dict):
        return BinaryMatroid.from_dense(spec["rows"])
    if isinstance(spec, list):
        return BinaryMatroid.from_dense(spec)
    return BinaryMatroid.load(spec)


def _minor_end_to_end(p: dict, seed: int) -> dict:
    n, k = p["n"], p["k"]
    m = p.get("m") or 12 * n
    target = load_target(p.get("target"))
    cfg = PipelineConfig(**p.get("pipeline", {}))
    cols = Columns(n, sample_supports(ModelParams(n, m, k, seed)))
    run = run_pipeline(cols, target, cfg)
    rec: dict = {"ok": run.ok}
    _even_check(rec, cols.supports, n, k)
    if run.ok:
        cert = run.certificate
        # independent re-check from the raw columns, deletion set included
        used = sorted(set(cert.contract_set) | set(cert.kept))
        host = BinaryMatroid(cols.matrix(used), tuple(used))
        rec["verified"] = verify_certificate(host, MinorCertificate(cert.contract_set, (), cert.kept), target)
        rec["deletion_complete"] = len(cert.contract_set) + len(cert.delete_set) + len(cert.kept) == m
        rec["scanned"] = run.trace.scanned
        rec["contract_size"] = len(cert.contract_set)
    else:
        rec["failure_stage"] = run.failure.stage
        rec["failure_error"] = run.failure.error
    rec["n2"] = run.trace.n2
    return rec


TRIALS = {
    "core_size": _core_size,
    "column_independence": _column_independence,
    "subset_sums": _subset_sums,
    "inverse_row_weights": _inverse_row_weights,
    "candidate_probability": _candidate_probability,
    "minor_end_to_end": _minor_end_to_end,
}


# aggregation ---------------------------------------------------------------


def _stats(xs) -> dict:
    a = np.asarray(list(xs), dtype=float)
    if not len(a):
        return {"mean": None, "stddev": None, "min": None, "max": None}
    return {
        "mean": float(a.mean()),
        "stddev": float(a.std(ddof=1)) if len(a) > 1 else 0.0,
        "min": float(a.min()),
        "max": float(a.max()),
    }


def _rate(flags) -> dict:
    flags = list(flags)
    s = sum(bool(f) for f in flags)
    lo, hi = wilson_interval(s, len(flags))
    return {"successes": s, "trials": len(flags), "rate": s / len(flags) if flags else None, "wilson95": [lo, hi]}


def _ok_records(records):
    return [r for r in records if "error" not in r]


def _summarize(kind: str, p: dict, records: list[dict]) -> tuple[dict, dict, dict]:
    """Return (aggregates, predicted, verdicts) computed from the records."""
    recs = _ok_records(records)
    agg: dict = {"trial_errors": len(records) - len(recs)}
    pred: dict = {}
    ver: dict = {}
    tol = p.get("tolerance", {})
    if any("row_sum_zero" in r for r in recs):
        ok = all(r.get("row_sum_zero", True) for r in recs)
        agg["row_sum_zero_all"] = ok
        ver["even_k_row_sum_zero"] = {"pass": ok, "rule": "all-rows sum is zero for every even-k trial"}

    if kind == "core_size":
        n, k, d = p["n"], p["k"], p["d"]
        m = recs[0]["m"] if recs else (p.get("m") or int(round(p["c"] * n / k)))
        cp = core_prediction(k * m / n, k, d)
        pred = {
            "x": {"value": cp.x, "source": "greatest root of c = x / Pr[Po(x) >= d-1]^(k-1)"},
            "core_vertices": {"value": n * cp.vertex_fraction, "source": "n * Pr[Po(x) >= d]"},
            "core_edges": {"value": m * cp.edge_fraction, "source": "m * (x/c)^(k/(k-1))"},
            "subcritical": cp.subcritical,
        }
        agg["core_vertices"] = _stats(r["core_vertices"] for r in recs)
        agg["core_edges"] = _stats(r["core_edges"] for r in recs)
        t = tol.get("relative", 0.02)
        ev = [rel_err(r["core_vertices"], pred["core_vertices"]["value"]) for r in recs]
        ee = [rel_err(r["core_edges"], pred["core_edges"]["value"]) for r in recs]
        agg["max_rel_err_vertices"] = max(ev) if ev else None
        agg["max_rel_err_edges"] = max(ee) if ee else None
        rule = f"every trial within {t:g} relative of the prediction"
        ver["core_vertices"] = {"pass": bool(ev) and max(ev) <= t, "rule": rule}
        ver["core_edges"] = {"pass": bool(ee) and max(ee) <= t, "rule": rule}
        ver["nondegenerate"] = {
            "pass": not cp.subcritical,
            "rule": "prediction has a nonempty core (informational)",
            "informational": True,
        }

    elif kind == "column_independence":
        agg["independent"] = _rate(r["independent"] for r in recs)
        need = p.get("min_independent", 0.9)
        ver["independent"] = {
            "pass": agg["independent"]["successes"] >= math.ceil(need * len(records) - 1e-9),
            "rule": f"rank(X) = m1 in at least {need:g} of trials",
        }

    elif kind == "subset_sums":
        ex = [r for r in recs if r["mode"] == "exhaustive"]
        sa = [r for r in recs if r["mode"] == "sampled"]
        if ex:
            agg["count_proper"] = _stats(r["count_proper"] for r in ex)
            agg["event_any_size"] = _rate(r["count_proper"] > 0 for r in ex)
        if sa:
            agg["event_small_sizes"] = _rate(r["event"] for r in sa)

    elif kind == "inverse_row_weights":
        good = [r for r in recs if r["ok"]]
        agg["basis_built"] = _rate(r["ok"] for r in recs)
        agg["min_weight"] = _stats(r["min_weight"] for r in good)
        agg["max_weight"] = _stats(r["max_weight"] for r in good)
        agg["rows"] = sum(r["rows"] for r in good)
        agg["in_band"] = sum(r["in_band"] for r in good)
        agg["below_asymptotic_floor"] = sum(r["below_asymptotic_floor"] for r in good)
        frac = agg["in_band"] / agg["rows"] if agg["rows"] else 0.0
        agg["in_band_fraction"] = frac
        need = p.get("min_in_band", 1.0)
        ver["row_weights"] = {"pass": bool(good) and frac >= need, "rule": f"fraction of B^-1 rows in band >= {need:g}"}

    elif kind == "candidate_probability":
        agg["frequency"] = _stats(r["frequency"] for r in recs)
        zs = [abs(r["z"]) for r in recs]
        pred = {
            "exact": {"value": recs[0]["exact"] if recs else None, "source": "enumeration of atom counts"},
            "lower_bound": {"value": recs[0]["lower_bound"] if recs else None, "source": "eps1^k"},
        }
        sig = tol.get("sigmas", 3.0)
        ver["matches_exact"] = {"pass": bool(zs) and max(zs) <= sig, "rule": f"|z| <= {sig:g} in every trial"}
        ver["above_lower_bound"] = {
            "pass": bool(recs) and all(r["frequency"] >= r["lower_bound"] for r in recs),
            "rule": "frequency >= eps1^k in every trial",
        }

    elif kind == "minor_end_to_end":
        agg["success"] = _rate(r["ok"] for r in recs)
        fails: dict = {}
        for r in recs:
            if not r["ok"]:
                key = f"{r['failure_stage']}:{r['failure_error']}"
                fails[key] = fails.get(key, 0) + 1
        agg["failures"] = dict(sorted(fails.items()))
        succ = [r for r in recs if r["ok"]]
        agg["verified_successes"] = sum(bool(r["verified"]) for r in succ)
        ver["certificates_verify"] = {
            "pass": all(r["verified"] and r["deletion_complete"] for r in succ),
            "rule": "every emitted certificate verifies",
        }
        if "min_success" in p:
            ver["success_rate"] = {
                "pass": agg["success"]["successes"] >= math.ceil(p["min_success"] * len(records) - 1e-9),
                "rule": f"success in at least {p['min_success']:g} of trials",
            }
    return agg, pred, ver


# experiment spec / report -------------------------------------------------------------


@dataclass
class ExperimentSpec:
    kind: str
    params: dict
    trials: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "trials": self.trials, "seed": self.seed}


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    records: list
    aggregates: dict
    predicted: dict
    verdicts: dict
    timings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts.values() if not v.get("informational"))

    def to_json(self, timings: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.to_json(),
            "records": self.records,
            "aggregates": self.aggregates,
            "predicted": self.predicted,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }
        if timings:
            out["timings"] = self.timings
        return _clean(out)

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentReport:
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {obj.get('schema_version')!r}")
        s = obj["spec"]
        spec = ExperimentSpec(s["kind"], s["params"], s["trials"], s["seed"])
        return cls(spec, obj["records"], obj["aggregates"], obj["predicted"], obj["verdicts"], obj.get("timings", []))


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _run_trial(args: tuple[str, dict, int, int]) -> tuple[dict, float]:
    kind, params, base, i = args
    seed = trial_seed(base, i)
    t0 = time.perf_counter()
    try:
        rec = TRIALS[kind](params, seed)
    except Exception as exc:  # a failing trial is recorded, the batch goes on
        rec = {"error": f"{type(exc).__name__}: {exc}"}
    rec = {"trial": i, "seed": seed, **rec}
    return _clean(rec), time.perf_counter() - t0


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    jobs = [(spec.kind, spec.params, spec.seed, i) for i in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            out = list(ex.map(_run_trial, jobs))
    else:
        out = [_run_trial(j) for j in jobs]
    out.sort(key=lambda rt: rt[0]["trial"])
    records = [r for r, _ in out]
    agg, pred, ver = _summarize(spec.kind, spec.params, records)
    return ExperimentReport(spec, records, _clean(agg), _clean(pred), _clean(ver), [t for _, t in out])


def _flatten(rec: dict) -> dict:
    return {k: (json.dumps(v, sort_keys=True) if isinstance(v, (list, dict)) else v) for k, v in rec.items()}


def emit_report(report: ExperimentReport, fmt: str = "json", path: str | Path | None = None) -> str:
    """Serialize as JSON (schema-versioned) or CSV (one row per trial, aggregates footer)."""
    if fmt == "json":
        text = json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        rows = [_flatten(r) for r in report.records]
        keys = ["trial", "seed"] + sorted({k for r in rows for k in r} - {"trial", "seed"})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        buf.write("# aggregates\n")
        for name, block in (("aggregates", report.aggregates), ("predicted", report.predicted), ("verdicts", report.verdicts)):
            for k in sorted(block):
                buf.write(f"# {name}.{k} = {json.dumps(block[k], sort_keys=True)}\n")
        buf.write(f"# passed = {json.dumps(report.passed)}\n")
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise IOFailure(str(exc)) from exc
    return text


def read_csv_records(text: str) -> list[dict]:
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


# profiles ------------------------------------------------------------------


def load_profiles() -> dict:
    return json.loads(resources.files("gf2minor").joinpath("profiles.json").read_text())


def spec_from_profile(name: str, trials: int | None = None, seed: int | None = None, overrides: dict | None = None) -> ExperimentSpec:
    profiles = load_profiles()
    if name not in profiles:
        raise KeyError(f"unknown profile {name!r}; known: {', '.join(sorted(profiles))}")
    prof = profiles[name]
    params = {**prof["params"], **(overrides or {})}
    return ExperimentSpec(
        prof["kind"],
        params,
        prof.get("trials", 1) if trials is None else trials,
        prof.get("seed", 0) if seed is None else seed,
    )
