"""Seeded experiment runners: benchmark table, consistency sweep, relevance
maps and the diagnostics bundle.

Each trial derives its own seeds from ``(config.seed, trial)`` so results do
not depend on how trials are spread over worker processes. The worker count
comes from the ``OSIRIS_WORKERS`` environment variable (default 1).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (IdentityCheckReport, adversarial_theta, check_bias_identity,
                          check_length_propositions,
                          check_omitted_mean, check_osiris_mean, check_variance_identity,
                          correlation_report)
from .environments import (Gridworld, GridworldConfig, build_gridworld,
                           canonical_dilly_dallying, canonical_express, mdp_from_json_dict,
                           three_state_mdp)
from .estimators import (EstimationError, SupportError, WeightConfig, is_estimate,
                         mc_estimate, osiris_estimate, osiris_weights, osirwis_estimate,
                         pdis_estimate, wis_estimate)
from .mdp import (MdpSpec, PolicySpec, RelevanceMapping, ValidationError,
                  exact_policy_value, sample_batch, true_relevance)
from .relevance import RelevanceConfig, VISIT_POLICY, estimate_relevance_map

WORKERS_ENV = "OSIRIS_WORKERS"
ESTIMATORS = ("mc", "is", "wis", "pdis", "osiris", "osirwis", "osiris_true", "osirwis_true")
# estimators whose relevance mapping is estimated per trial at each alpha
ALPHA_ESTIMATORS = ("osiris", "osirwis")
VERSION = f"osiris_ope {__version__}"


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "dilly_dallying"
    estimators: tuple = ("mc", "is", "wis", "pdis", "osiris", "osirwis")
    n_trials: int = 200
    batch_size: int = 25
    alpha_list: tuple = (0.05,)
    seed: int = 0
    relevance: RelevanceConfig = field(default_factory=RelevanceConfig)
    output_dir: str = "results"
    batch_size_list: tuple = (10, 25, 50, 100)
    diagnostic_draws: int = 200_000
    identity_draws: int = 500_000
    smoke: bool = False

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "alpha_list", tuple(float(a) for a in self.alpha_list))
        object.__setattr__(self, "batch_size_list", tuple(int(b) for b in self.batch_size_list))
        if isinstance(self.relevance, dict):
            object.__setattr__(self, "relevance", RelevanceConfig.from_dict(self.relevance))
        if self.n_trials < 1:
            raise ValidationError("n_trials must be at least 1")
        if self.batch_size < 1 or any(b < 1 for b in self.batch_size_list):
            raise ValidationError("batch sizes must be positive")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValidationError(f"unknown estimators {unknown}; expected ids from {ESTIMATORS}")
        for a in self.alpha_list:
            if not 0.0 <= a <= 1.0:
                raise ValidationError(f"alpha must lie in [0, 1], got {a}")
        if not (self.env in ("dilly_dallying", "express") or self.env.startswith("file:")):
            raise ValidationError(f"unknown env {self.env!r}; expected dilly_dallying, express or file:<path>")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("estimators", "alpha_list", "batch_size_list"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ValidationError(f"{path}: expected a JSON object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    seed: int
    estimator_id: str
    alpha: float | None
    estimate: float
    eff_len_mean: float
    eff_len_min: int
    eff_len_max: int
    theta_hat: tuple
    error: str = ""
    # excluded from every output file so reruns stay byte-identical
    wall_time: float = field(default=0.0, compare=False)

    def row(self) -> dict:
        return {"trial": self.trial_index, "seed": self.seed, "estimator": self.estimator_id,
                "alpha": self.alpha, "estimate": self.estimate,
                "eff_len_mean": self.eff_len_mean, "eff_len_min": self.eff_len_min,
                "eff_len_max": self.eff_len_max,
                "theta_hat": " ".join(str(s) for s in self.theta_hat), "error": self.error}


@dataclass(frozen=True, eq=False)
class Environment:
    name: str
    mdp: MdpSpec
    pi_e: PolicySpec
    pi_b: PolicySpec
    gridworld: Gridworld | None = None

    @property
    def truth(self) -> float:
        return exact_policy_value(self.mdp, self.pi_e)

    def true_theta(self) -> RelevanceMapping:
        return true_relevance(self.mdp, self.pi_e, pi_b=self.pi_b)


def load_environment(env_id: str) -> Environment:
    """Resolve ``dilly_dallying``, ``express`` or ``file:<path>``.

    A file holding a gridworld layout is built as a gridworld; otherwise it
    must be an MDP in the interchange format with policies named ``pi_e``
    and ``pi_b``.
    """
    if env_id == "dilly_dallying":
        g = canonical_dilly_dallying()
    elif env_id == "express":
        g = canonical_express()
    elif env_id.startswith("file:"):
        path = env_id[len("file:"):]
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(d, dict) and "width" in d:
            g = build_gridworld(GridworldConfig.from_json_dict(d))
        else:
            mdp, pols = mdp_from_json_dict(d)
            missing = {"pi_e", "pi_b"} - set(pols)
            if missing:
                raise ValidationError(f"{path}: missing policies {sorted(missing)}")
            return Environment(env_id, mdp, pols["pi_e"], pols["pi_b"])
    else:
        raise ValidationError(f"unknown env {env_id!r}")
    return Environment(env_id, g.mdp, g.pi_e, g.pi_b, g)


def trial_seed(seed: int, trial: int, stream: int = 0, sub: int = 0) -> int:
    """Seed for one random stream of one trial, independent of scheduling."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(stream), int(sub)))
    return int(ss.generate_state(1, np.uint64)[0])


def n_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn, tasks: list) -> list:
    workers = min(n_workers(), len(tasks))
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map yields results in task order whatever the completion order
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# --------------------------------------------------------------------------
# serialisation

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def metadata(config: ExperimentConfig, env: Environment, kind: str) -> dict:
    return {"kind": kind, "version": VERSION, "seed": config.seed, "env": env.name,
            "truth": env.truth, "visit_policy": VISIT_POLICY, "config": config.to_dict()}


def csv_text(rows: list, columns: list, meta: dict) -> str:
    """CSV with one leading ``#`` metadata line, one header row and 17-digit reals."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(_clean(meta), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def read_csv(path) -> tuple:
    """``(meta, rows)`` from a CSV written by this module; values stay strings."""
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    body = [ln for ln in lines if not ln.startswith("#")]
    return meta, list(csv.DictReader(body))


def _write(out_dir, files: dict) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths[name] = str(p)
    return paths


# --------------------------------------------------------------------------
# benchmark

TRIAL_COLUMNS = ["trial", "seed", "estimator", "alpha", "estimate", "eff_len_mean",
                 "eff_len_min", "eff_len_max", "theta_hat", "error"]
SUMMARY_COLUMNS = ["estimator", "alpha", "n_ok", "n_failed", "mean", "std", "rmse", "truth"]


def _theta_for(env: Environment, batch, wcfg, rcfg, alpha, cache):
    if alpha not in cache:
        cache[alpha] = estimate_relevance_map(batch, wcfg, rcfg.with_alpha(alpha), env.mdp.gamma)
    return cache[alpha]


def _record(trial, seed, eid, alpha, fn, theta=None):
    t0 = time.perf_counter()
    sparse = () if theta is None else tuple(int(s) for s in np.flatnonzero(theta.bits))
    try:
        rep = fn()
    except (EstimationError, SupportError) as exc:
        return TrialRecord(trial, seed, eid, alpha, float("nan"), float("nan"), 0, 0,
                           sparse, f"{type(exc).__name__}: {exc}",
                           time.perf_counter() - t0)
    eff = rep.effective_length
    return TrialRecord(trial, seed, eid, alpha, rep.estimate, float(eff.mean()),
                       int(eff.min()), int(eff.max()), sparse, "", time.perf_counter() - t0)


def _bench_trial(task) -> list:
    env, config, trial = task
    mdp, pe, pb = env.mdp, env.pi_e, env.pi_b
    gamma = mdp.gamma
    seed = trial_seed(config.seed, trial, 0)
    batch = sample_batch(mdp, pb, config.batch_size, seed, "pi_b")
    wcfg = WeightConfig(pe, pb)
    cache, recs = {}, []
    for eid in config.estimators:
        if eid == "mc":
            s_mc = trial_seed(config.seed, trial, 1)
            on = sample_batch(mdp, pe, config.batch_size, s_mc, "pi_e")
            recs.append(_record(trial, s_mc, eid, None, lambda: mc_estimate(on, gamma)))
        elif eid in ("is", "wis", "pdis"):
            fn = {"is": is_estimate, "wis": wis_estimate, "pdis": pdis_estimate}[eid]
            recs.append(_record(trial, seed, eid, None, lambda fn=fn: fn(batch, wcfg, gamma)))
        elif eid in ALPHA_ESTIMATORS:
            fn = osiris_estimate if eid == "osiris" else osirwis_estimate
            for a in config.alpha_list:
                th = _theta_for(env, batch, wcfg, config.relevance, a, cache)
                recs.append(_record(trial, seed, eid, a,
                                    lambda fn=fn, th=th: fn(batch, wcfg.with_theta(th), gamma, eid),
                                    th))
        else:
            fn = osiris_estimate if eid == "osiris_true" else osirwis_estimate
            th = env.true_theta()
            recs.append(_record(trial, seed, eid, None,
                                lambda fn=fn: fn(batch, wcfg.with_theta(th), gamma, eid), th))
    return recs


def summarise(records: list, truth: float) -> list:
    """Mean, population std and RMSE per (estimator, alpha), skipping failed trials."""
    groups = {}
    for r in records:
        groups.setdefault((r.estimator_id, r.alpha), []).append(r)
    rows = []
    for (eid, alpha), recs in groups.items():
        ok = np.array([r.estimate for r in recs if not r.error])
        row = {"estimator": eid, "alpha": alpha, "n_ok": len(ok),
               "n_failed": len(recs) - len(ok), "truth": truth,
               "mean": float("nan"), "std": float("nan"), "rmse": float("nan")}
        if len(ok):
            row.update(mean=float(ok.mean()), std=float(ok.std()),
                       rmse=float(np.sqrt(np.mean((ok - truth) ** 2))))
        rows.append(row)
    return rows


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    truth: float
    records: list
    summary: list
    paths: dict

    def row(self, estimator: str, alpha: float | None = None) -> dict:
        for r in self.summary:
            if r["estimator"] == estimator and r["alpha"] == alpha:
                return r
        raise KeyError((estimator, alpha))


def run_benchmark(config: ExperimentConfig, write: bool = True) -> BenchmarkResult:
    env = load_environment(config.env)
    tasks = [(env, config, t) for t in range(config.n_trials)]
    records = [r for recs in _map(_bench_trial, tasks) for r in recs]
    summary = summarise(records, env.truth)
    meta = metadata(config, env, "benchmark")
    paths = {}
    if write:
        paths = _write(config.output_dir, {
            "bench_trials.csv": csv_text([r.row() for r in records], TRIAL_COLUMNS, meta),
            "bench_summary.csv": csv_text(summary, SUMMARY_COLUMNS, meta),
            "bench.json": json_text({"meta": meta, "summary": summary,
                                     "trials": [r.row() for r in records]}),
        })
    return BenchmarkResult(env.truth, records, summary, paths)


# --------------------------------------------------------------------------
# consistency sweep

SWEEP_COLUMNS = ["batch_size", "alpha", "trial", "estimator", "estimate", "error"]
SWEEP_SUMMARY_COLUMNS = ["batch_size", "estimator", "alpha", "n", "mean", "std", "bias", "truth"]


def _sweep_trial(task) -> list:
    env, config, b_idx, trial = task
    bs = config.batch_size_list[b_idx]
    mdp, gamma = env.mdp, env.mdp.gamma
    batch = sample_batch(mdp, env.pi_b, bs, trial_seed(config.seed, trial, 2, b_idx), "pi_b")
    wcfg = WeightConfig(env.pi_e, env.pi_b)
    rows = []

    def add(eid, alpha, fn):
        try:
            rows.append({"batch_size": bs, "alpha": alpha, "trial": trial, "estimator": eid,
                         "estimate": fn().estimate, "error": ""})
        except (EstimationError, SupportError) as exc:
            rows.append({"batch_size": bs, "alpha": alpha, "trial": trial, "estimator": eid,
                         "estimate": float("nan"), "error": f"{type(exc).__name__}: {exc}"})

    add("wis", None, lambda: wis_estimate(batch, wcfg, gamma))
    for a in config.alpha_list:
        th = estimate_relevance_map(batch, wcfg, config.relevance.with_alpha(a), gamma)
        add("osirwis", a, lambda th=th: osirwis_estimate(batch, wcfg.with_theta(th), gamma))
    return rows


@dataclass(frozen=True, eq=False)
class SweepResult:
    truth: float
    rows: list
    summary: list
    paths: dict

    def cell(self, batch_size: int, estimator: str, alpha: float | None) -> dict:
        for r in self.summary:
            if (r["batch_size"], r["estimator"], r["alpha"]) == (batch_size, estimator, alpha):
                return r
        raise KeyError((batch_size, estimator, alpha))


def run_consistency_sweep(config: ExperimentConfig, write: bool = True) -> SweepResult:
    env = load_environment(config.env)
    tasks = [(env, config, b, t) for b in range(len(config.batch_size_list))
             for t in range(config.n_trials)]
    rows = [r for part in _map(_sweep_trial, tasks) for r in part]
    groups = {}
    for r in rows:
        groups.setdefault((r["batch_size"], r["estimator"], r["alpha"]), []).append(r)
    truth = env.truth
    summary = []
    for (bs, eid, a), rs in groups.items():
        v = np.array([r["estimate"] for r in rs if not r["error"]])
        mean = float(v.mean()) if len(v) else float("nan")
        summary.append({"batch_size": bs, "estimator": eid, "alpha": a, "n": len(v),
                        "mean": mean, "std": float(v.std()) if len(v) else float("nan"),
                        "bias": mean - truth, "truth": truth})
    meta = metadata(config, env, "consistency")
    paths = {}
    if write:
        paths = _write(config.output_dir, {
            "consistency.csv": csv_text(rows, SWEEP_COLUMNS, meta),
            "consistency_summary.csv": csv_text(summary, SWEEP_SUMMARY_COLUMNS, meta),
            "consistency.json": json_text({"meta": meta, "summary": summary}),
        })
    return SweepResult(truth, rows, summary, paths)


# --------------------------------------------------------------------------
# relevance maps

MAP_COLUMNS = ["alpha", "state", "row", "col", "mean_theta", "mean_visits",
               "corridor", "branch", "true_theta"]


def _map_trial(task):
    env, config, trial = task
    batch = sample_batch(env.mdp, env.pi_b, config.batch_size,
                         trial_seed(config.seed, trial, 0), "pi_b")
    wcfg = WeightConfig(env.pi_e, env.pi_b)
    visits = np.bincount(batch.step_states, minlength=env.mdp.n_states)
    bits = [estimate_relevance_map(batch, wcfg, config.relevance.with_alpha(a),
                                   env.mdp.gamma).bits for a in config.alpha_list]
    return np.array(bits), visits


@dataclass(frozen=True, eq=False)
class RelevanceMapResult:
    mean_theta: dict  # alpha -> per-state fraction of trials with theta_hat = 1
    mean_visits: np.ndarray
    rows: list
    paths: dict


def run_relevance_map(config: ExperimentConfig, write: bool = True) -> RelevanceMapResult:
    env = load_environment(config.env)
    tasks = [(env, config, t) for t in range(config.n_trials)]
    results = _map(_map_trial, tasks)
    bits = np.stack([b for b, _ in results])  # trials x alphas x states
    visits = np.stack([v for _, v in results]).mean(axis=0)
    means = {a: bits[:, i, :].mean(axis=0) for i, a in enumerate(config.alpha_list)}
    g = env.gridworld
    corridor = set(g.corridor_states) if g else set()
    branch = g.branch_state if g else None
    truth_bits = env.true_theta().bits
    rows = []
    for a, m in means.items():
        for s in range(env.mdp.n_states):
            cell = g.cells[s] if g else (None, None)
            rows.append({"alpha": a, "state": s, "row": cell[0], "col": cell[1],
                         "mean_theta": float(m[s]), "mean_visits": float(visits[s]),
                         "corridor": s in corridor, "branch": s == branch,
                         "true_theta": int(truth_bits[s])})
    meta = metadata(config, env, "relevance_map")
    if g:
        meta["grid"] = {"width": g.config.width, "height": g.config.height}
    paths = {}
    if write:
        paths = _write(config.output_dir, {
            "relevance_map.csv": csv_text(rows, MAP_COLUMNS, meta),
            "relevance_map.json": json_text({"meta": meta, "rows": rows}),
        })
    return RelevanceMapResult(means, visits, rows, paths)


# --------------------------------------------------------------------------
# weight / length analysis and diagnostics

def _wl_trial(task):
    env, config, alphas, trial = task
    batch = sample_batch(env.mdp, env.pi_b, config.batch_size,
                         trial_seed(config.seed, trial, 0), "pi_b")
    wcfg = WeightConfig(env.pi_e, env.pi_b)
    out = {}
    for a in alphas:
        th = estimate_relevance_map(batch, wcfg, config.relevance.with_alpha(a), env.mdp.gamma)
        kept, _, eff = osiris_weights(batch, wcfg.with_theta(th))
        out[a] = (eff, kept)
    return out


def run_weight_length(config: ExperimentConfig, env: Environment | None = None,
                      corr_alpha: float = 1.0):
    """Pooled effective lengths and OSIRIS weights over all trials.

    The correlation uses the ``corr_alpha`` run; weight variances are pooled
    per alpha over ``alpha_list`` plus ``corr_alpha``.
    """
    env = env or load_environment(config.env)
    alphas = tuple(sorted(set(config.alpha_list) | {corr_alpha}))
    parts = _map(_wl_trial, [(env, config, alphas, t) for t in range(config.n_trials)])
    pooled = {a: (np.concatenate([p[a][0] for p in parts]),
                  np.concatenate([p[a][1] for p in parts])) for a in alphas}
    variances = {a: float(np.var(pooled[a][1])) for a in alphas}
    eff, w = pooled[corr_alpha]
    return correlation_report(eff, w, variances)


def _length_prop_state(env: Environment) -> int:
    if env.gridworld is not None and env.gridworld.corridor_states:
        return env.gridworld.corridor_states[0]
    differs = np.flatnonzero(np.any(env.pi_e.probs != env.pi_b.probs, axis=1)
                             & ~env.mdp.terminal_mask)
    if not differs.size:
        raise ValidationError("evaluation and behavior policies agree on every state")
    return int(differs[0])


@dataclass(frozen=True, eq=False)
class DiagnosticsResult:
    checks: list
    correlation: object
    paths: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_diagnostics(config: ExperimentConfig, write: bool = True) -> DiagnosticsResult:
    """Run every identity check; ``smoke`` restricts to fast trivial cases."""
    s = lambda i: trial_seed(config.seed, i, 3)
    m3, pe3, pb3 = three_state_mdp()
    checks = []
    correlation = None
    if config.smoke:
        ones = RelevanceMapping.constant(m3.n_states, 1)
        n = 2000
        checks.append(check_omitted_mean(m3, pe3, pb3, ones, n, s(0)))
        checks.append(check_variance_identity(m3, pe3, pb3, ones, n, s(1)))
        checks.append(check_bias_identity(m3, pe3, pb3, ones, n, s(2)))
        same = check_omitted_mean(m3, pe3, pe3, RelevanceMapping.constant(m3.n_states, 0), n, s(3))
        checks.append(replace(same, name="omitted_mean_same_policy"))
    else:
        env = load_environment(config.env)
        mdp, pe, pb = env.mdp, env.pi_e, env.pi_b
        th = env.true_theta()
        nd = config.diagnostic_draws
        checks.append(check_omitted_mean(mdp, pe, pb, th, nd, s(0)))
        checks.append(check_osiris_mean(mdp, pe, pb, th, nd // 2, s(1)))
        checks.append(check_bias_identity(mdp, pe, pb, th, nd // 2, s(1)))
        branch = env.gridworld.branch_state if env.gridworld else None
        if branch is not None:
            adv = adversarial_theta(th, [branch])
            checks.append(replace(check_osiris_mean(mdp, pe, pb, adv, nd // 2, s(2),
                                                    expected_bias=True),
                                  name="osiris_mean_adversarial"))
            checks.append(replace(check_bias_identity(mdp, pe, pb, adv, nd // 2, s(2),
                                                      expected_bias=True),
                                  name="bias_identity_adversarial"))
        th3 = true_relevance(m3, pe3, pi_b=pb3)
        checks.append(replace(check_variance_identity(m3, pe3, pb3, th3, config.identity_draws, s(3)),
                              name="variance_identity_three_state"))
        checks.append(replace(check_bias_identity(m3, pe3, pb3, th3, config.identity_draws, s(4)),
                              name="bias_identity_three_state"))
        st = _length_prop_state(env)
        checks.append(check_length_propositions(mdp, pb, pe, [st] * 6,
                                                [[0], [0, 1, 2], list(range(6))], nd, s(5)))
        low = min(config.alpha_list) if config.alpha_list else 0.05
        correlation = run_weight_length(replace(config, alpha_list=(low,)), env)
        var = correlation.weight_variance_by_alpha
        trend_ok = correlation.pearson_r < 0 and var[low] < var[1.0]
        checks.append(_trend_report(correlation, low, trend_ok, config.n_trials * config.batch_size))
    bundle = {"meta": {"kind": "diagnostics", "version": VERSION, "seed": config.seed,
                       "config": config.to_dict()},
              "checks": [c.to_dict() for c in checks],
              "all_passed": all(c.passed for c in checks)}
    if correlation is not None:
        bundle["correlation"] = correlation.to_dict()
    paths = _write(config.output_dir, {"diagnostics.json": json_text(bundle)}) if write else {}
    return DiagnosticsResult(checks, correlation, paths)


def _trend_report(corr, low, ok, n):
    var = corr.weight_variance_by_alpha
    return IdentityCheckReport("weight_length_trend", corr.pearson_r, 0.0, 0.0, 0.0, n, bool(ok),
                               {"pearson_r": corr.pearson_r, f"weight_var_alpha_{low}": var[low],
                                "weight_var_alpha_1": var[1.0]}, rel_tol=0.0, k=0.0)
