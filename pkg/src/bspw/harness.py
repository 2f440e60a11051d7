"""Experiment drivers and result emission.

Every random draw is keyed by ``(seed, m, trial)`` or ``(seed, instance)``
so results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, presets
from .doa import DoaScenario, default_freqs, estimate, synthesize
from .model import BlockPartition, ModelError, PriorModel1, PriorModel2, load_model
from .recovery import MeasurementSystem, SolverConfig, solve_weighted, success
from .statdim import empirical_statdim, expected_bound_model1, statdim_bound
from .weights import heuristic_weights, robustness_constant, solve_model1, solve_model2, solve_weight_scalar
from .specfun import chi_tail_prob

__all__ = [
    "ExperimentConfig",
    "scheme_weights",
    "run_phase_transition",
    "crossover",
    "run_doa_experiment",
    "run_robustness_table",
    "run_statdim_sweep",
    "emit_results",
    "worker_count",
]

log = logging.getLogger(__name__)

KINDS = ("phase_transition", "doa", "robustness", "statdim_sweep")
SCHEMES = ("optimal", "heuristic", "equal")

PT_COLUMNS = ["m", "scheme", "success_rate", "trials", "predicted_bound"]


def worker_count() -> int:
    """Worker processes, from ``BSPW_WORKERS`` or the CPU count."""
    env = os.environ.get("BSPW_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    kind: str
    model: dict | None = None
    m_grid: list = field(default_factory=list)
    trials: int = 100
    seed: int = 0
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    eps: float = 0.01
    success_threshold: float = 1e-3
    solver: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ModelError("trials must be >= 1")
        grid = list(self.m_grid)
        if any(int(m) < 1 for m in grid):
            raise ModelError("m grid entries must be >= 1")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ModelError("m grid must be strictly increasing")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ModelError(f"unknown weight schemes {bad}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        extra = {k: d.pop(k) for k in list(d) if k not in known}
        cfg = cls(**d)
        cfg.extra.update(extra)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extra"))
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


def scheme_weights(scheme: str, probs, k: int, eps: float = 0.01, sizes=None) -> np.ndarray:
    """Weights for one scheme given block probabilities (or set accuracies)."""
    probs = np.asarray(probs, dtype=float)
    if scheme == "equal":
        return np.ones(probs.size)
    if scheme == "heuristic":
        return heuristic_weights(probs, eps)
    if scheme == "optimal":
        sizes = np.full(probs.size, k) if sizes is None else np.asarray(sizes)
        return solve_model1(PriorModel1(probs), BlockPartition.contiguous(int(sizes.sum()), sizes))
    raise ModelError(f"unknown scheme {scheme!r}")


# -- phase transition ---------------------------------------------------------


def _pt_trial(args):
    partition, p, weights, m, trial, seed, threshold, solver = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, m, trial]))
    active = rng.random(partition.q) < p
    if not active.any():
        active = rng.random(partition.q) < p
    x = np.zeros(partition.n)
    for b in np.flatnonzero(active):
        idx = partition.blocks[b]
        x[idx] = rng.standard_normal(idx.size)
    A = rng.standard_normal((m, partition.n))
    if not active.any():
        return {s: True for s in weights}
    system = MeasurementSystem(A, A @ x, 0.0)
    cfg = SolverConfig(**solver)
    return {s: success(solve_weighted(partition, w, system, cfg).x_hat, x, threshold) for s, w in weights.items()}


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


def run_phase_transition(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Success rate per (scheme, m) for noiseless recovery under a block-probability prior.

    Returns ``{"rows": [...], "weights": {...}, "predicted": {...}, "crossover": {...}}``;
    rows have columns ``m, scheme, success_rate, trials, predicted_bound``.
    """
    if cfg.model is None:
        raise ModelError("phase transition needs a model with block probabilities")
    loaded = load_model(cfg.model)
    partition, prior = loaded["partition"], loaded.get("prior")
    if prior is None:
        raise ModelError("phase transition needs block probabilities 'p'")
    if not cfg.m_grid:
        raise ModelError("empty m grid")
    weights = {}
    for s in cfg.schemes:
        if s == "optimal":
            weights[s] = solve_model1(prior, partition)
        else:
            weights[s] = scheme_weights(s, prior.p, 1, cfg.eps)
    predicted = {s: expected_bound_model1(partition, prior, w) for s, w in weights.items()}
    jobs = [
        (partition, prior.p, weights, int(m), t, cfg.seed, cfg.success_threshold, cfg.solver)
        for m in cfg.m_grid
        for t in range(cfg.trials)
    ]
    outcomes = _map(_pt_trial, jobs, worker_count() if workers is None else workers)
    counts = {(s, int(m)): 0 for s in cfg.schemes for m in cfg.m_grid}
    for job, res in zip(jobs, outcomes):
        for s, ok in res.items():
            counts[(s, job[3])] += bool(ok)
    rows = []
    for s in cfg.schemes:
        for m in cfg.m_grid:
            rows.append(
                {
                    "m": int(m),
                    "scheme": s,
                    "success_rate": counts[(s, int(m))] / cfg.trials,
                    "trials": cfg.trials,
                    "predicted_bound": predicted[s],
                }
            )
    cross = {}
    for s in cfg.schemes:
        rates = [r["success_rate"] for r in rows if r["scheme"] == s]
        cross[s] = crossover(cfg.m_grid, rates)
    return {"rows": rows, "weights": weights, "predicted": predicted, "crossover": cross}


def crossover(m_grid, rates, level: float = 0.5) -> float:
    """First ``m`` where the success rate reaches ``level``, linearly interpolated; ``inf`` if never."""
    m_grid = np.asarray(m_grid, dtype=float)
    rates = np.asarray(rates, dtype=float)
    hit = np.flatnonzero(rates >= level)
    if hit.size == 0:
        return math.inf
    i = hit[0]
    if i == 0:
        return float(m_grid[0])
    r0, r1 = rates[i - 1], rates[i]
    return float(m_grid[i - 1] + (level - r0) / (r1 - r0) * (m_grid[i] - m_grid[i - 1]))


def monotone_violations(rates, trials: int) -> list[int]:
    """Grid positions where the rate drops by more than ``3 / sqrt(trials)`` below the running maximum."""
    slack = 3.0 / math.sqrt(trials)
    best = -math.inf
    out = []
    for i, r in enumerate(rates):
        if r < best - slack:
            out.append(i)
        best = max(best, r)
    return out


# -- DOA ---------------------------------------------------------------------


def _scenario_from(d: dict) -> DoaScenario:
    d = dict(d)
    n_bins = d.pop("n_bins", 16)
    f_lo = d.pop("f_lo", 0.0)
    f_hi = d.pop("f_hi", 5e9)
    if "freqs" not in d:
        d["freqs"] = tuple(default_freqs(n_bins, f_lo, f_hi))
    if "sources" in d:
        d["sources"] = tuple(d["sources"])
    return DoaScenario(**d)


def _doa_seed(args):
    scenario, prior2, lams, seed, eta_rule, solver, threshold = args
    obs, truth = synthesize(scenario, seed)
    truth = set(truth.tolist())
    out = {}
    for s, lam in lams.items():
        est = estimate(scenario, prior2, lam, obs, eta_rule, SolverConfig(**solver), threshold)
        peaks = set(est.peaks)
        out[s] = {
            "power": est.power,
            "peaks": sorted(peaks),
            "spurious": len(peaks - truth),
            "missed": len(truth - peaks),
        }
    return seed, sorted(truth), out


def doa_lambdas(prior2: PriorModel2, k_real: int, schemes, eps: float) -> dict:
    lams = {}
    for s in schemes:
        if s == "optimal":
            lams[s] = solve_model2(prior2, k_real)
        elif s == "heuristic":
            lams[s] = heuristic_weights(prior2.alphas, eps)
        else:
            lams[s] = np.ones(prior2.L)
    return lams


def run_doa_experiment(cfg: dict, workers: int | None = None) -> dict:
    """Spectra and peak tables per weighting scheme over one or more seeds.

    Complex snapshots are counted as ``2k`` real dimensions when solving for
    the optimal set weights.
    """
    cfg = {**presets.doa(), **cfg}
    scenario = _scenario_from(cfg["scenario"])
    prior2 = PriorModel2.build(scenario.q, cfg["sets"], cfg["alphas"], cfg.get("complement_alpha"))
    lams = doa_lambdas(prior2, 2 * scenario.k, cfg["schemes"], cfg["eps"])
    seeds = [cfg["seed"] + i for i in range(int(cfg.get("seeds", 1)))]
    jobs = [
        (scenario, prior2, lams, s, cfg["eta_rule"], cfg.get("solver", {}), cfg["rel_threshold"])
        for s in seeds
    ]
    results = _map(_doa_seed, jobs, worker_count() if workers is None else workers)
    summary = []
    for seed, truth, per in results:
        for s in cfg["schemes"]:
            summary.append(
                {
                    "seed": seed,
                    "scheme": s,
                    "detected": len(per[s]["peaks"]),
                    "spurious": per[s]["spurious"],
                    "missed": per[s]["missed"],
                    "peaks": " ".join(map(str, per[s]["peaks"])),
                }
            )
    spectra = {}
    angles = scenario.angles
    _, truth, first = results[0]
    for s in cfg["schemes"]:
        spectra[s] = [
            {"grid_index": j, "angle_deg": float(angles[j]), "power": float(first[s]["power"][j]), "scheme": s}
            for j in range(scenario.q)
        ]
    return {"summary": summary, "spectra": spectra, "lambdas": lams, "truth": truth, "results": results}


# -- robustness ---------------------------------------------------------------


def weight_sensitivity(p: float, k: int, w: float | None = None) -> float:
    """Exact ``|dw/dp|`` by implicit differentiation of the weight equation."""
    if w is None:
        w = solve_weight_scalar(p, k)
    return w / ((1.0 - p) * (p + (1.0 - p) * chi_tail_prob(w, k)))


def run_robustness_table(k_list=(1, 5, 10), p_grid=None, dp: float = 1e-3) -> list[dict]:
    """Sensitivity constant next to measured weight changes; flags rows where the bound fails."""
    if p_grid is None:
        p_grid = np.round(np.arange(0.05, 0.951, 0.05), 2)
    rows = []
    for k in k_list:
        for p in p_grid:
            p = float(p)
            if not 0 < p < 1 or not 0 < p + dp < 1:
                raise ModelError(f"p grid must stay inside (0, 1): {p}")
            w = solve_weight_scalar(p, k)
            w2 = solve_weight_scalar(p + dp, k)
            c = robustness_constant(k, p, h=w)
            delta = abs(w - w2)
            rows.append(
                {
                    "k": int(k),
                    "p": p,
                    "w": w,
                    "c": c,
                    "delta_w": delta,
                    "bound": c * dp,
                    "empirical_slope": delta / dp,
                    "exact_slope": weight_sensitivity(p, k, w),
                    "violation": bool(delta > c * dp),
                }
            )
    return rows


# -- statistical-dimension sweep --------------------------------------------------


def random_instance(rng, max_n: int = 100):
    """Random partition, support and weights with ``n <= max_n``."""
    q = int(rng.integers(2, 16))
    sizes = rng.integers(1, 8, size=q)
    while sizes.sum() > max_n:
        sizes = np.maximum(1, sizes // 2)
    partition = BlockPartition.contiguous(int(sizes.sum()), sizes.tolist())
    s = int(rng.integers(0, q + 1))
    support = np.sort(rng.choice(q, size=s, replace=False))
    w = rng.uniform(0.2, 3.0, size=q)
    return partition, support, w


def _sweep_one(args):
    i, seed, n_samples = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
    partition, support, w = random_instance(rng)
    res = statdim_bound(partition, support, w)
    dirs = {int(b): rng.standard_normal(partition.blocks[b].size) for b in support}
    mean, se = empirical_statdim(partition, support, w, n_samples, seed=int(rng.integers(2**32)), directions=dirs)
    scaled = statdim_bound(partition, support, 7.3 * w).bound
    return {
        "instance": i,
        "n": partition.n,
        "q": partition.q,
        "support_size": int(support.size),
        "bound": res.bound,
        "t_star": res.t_star,
        "empirical_mean": mean,
        "empirical_stderr": se,
        "within_bound": bool(mean <= res.bound + 3 * se),
        "scale_gap": abs(scaled - res.bound),
    }


def run_statdim_sweep(instances: int = 50, n_samples: int = 10_000, seed: int = 0, workers: int | None = None) -> list[dict]:
    jobs = [(i, seed, n_samples) for i in range(instances)]
    return _map(_sweep_one, jobs, worker_count() if workers is None else workers)


# -- output ----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for r in rows:
                wr.writerow([_fmt(r[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def emit_results(
    experiment: str,
    tables: dict,
    out_dir,
    fmt: str = "csv",
    columns: dict | None = None,
    manifest: dict | None = None,
) -> list[Path]:
    """Write ``{experiment}_{name}.csv`` (or ``.json``) per table plus ``manifest.json``.

    ``tables`` maps a name (usually a weight scheme) to a list of row dicts.
    Empty tables produce a header-only CSV when ``columns`` names them.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create output directory {out}: {exc}") from exc
    written = []
    for name, rows in tables.items():
        cols = (columns or {}).get(name) or (list(rows[0]) if rows else [])
        path = out / f"{experiment}_{name}.{fmt}"
        if fmt == "csv":
            write_csv(path, rows, cols)
        else:
            path.write_text(json.dumps(rows, indent=2, sort_keys=True, default=_json_default) + "\n")
        written.append(path)
    meta = {"experiment": experiment, "tool_version": __version__, **(manifest or {})}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(mpath)
    return written


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
