"""Build runs from an ExperimentConfig, execute seeds, and write CSV/npz outputs."""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .analysis import audit_regret_bound, fit_rate, prefix_bound, prefix_regret
from .base_alg import RegularizerState, make_algorithm
from .config import ExperimentConfig, expand
from .errors import ConfigError, NumericAbort, UnsupportedError
from .geometry import Box, L2Ball, ProductSimplex, SquaredEuclidean, WeightSchedule, entropy_for
from .meta import MetaMode, Mode, run
from .models import FixedPointConfig, make_model
from .problems import (LinQuadLoss, NoiseSpec, PolicyProblem, SoftmaxPolicyProblem, SyntheticOCO, garnet,
                       gridworld, load_mdp, perturb)
from .seeding import stream

TRACE_COLUMNS = ["n", "w_n", "loss", "J", "regret_static", "regret_avg", "g_norm", "ghat_norm", "e_norm_dual",
                 "bound_lhs", "bound_rhs", "bound_slack", "fp_residual", "seed"]
REPORT_COLUMNS = ["seed", "status", "abort_round", "N", "K", "final_avg_regret", "audit_slack_min",
                  "audit_passed", "J_pibar", "J_star"]


def fmt(x) -> str:
    """Full-precision decimal, empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_set(pc):
    if pc.set == "simplex":
        return ProductSimplex(pc.blocks, pc.dim // pc.blocks)
    if pc.set == "ball":
        center = np.array(pc.center) if pc.center else np.zeros(pc.dim)
        return L2Ball(center, pc.radius)
    lower = np.array(pc.lower) if pc.lower else -np.ones(pc.dim)
    upper = np.array(pc.upper) if pc.upper else np.ones(pc.dim)
    return Box(lower, upper)


def build_mdp(pc):
    if pc.mdp == "gridworld":
        return gridworld(pc.size, pc.slip, pc.gamma, pc.start)
    if pc.mdp == "garnet":
        return garnet(pc.states, pc.actions, pc.branching, pc.gamma, stream(pc.mdp_seed, "mdp"))
    return load_mdp(pc.mdp)


def build_problem(cfg: ExperimentConfig):
    pc = cfg.problem
    noise = NoiseSpec(pc.sigma_g, pc.sigma_ghat, pc.bias_sq)
    if pc.type == "synthetic":
        return SyntheticOCO(
            build_set(pc), pc.family, base=pc.base or None, amplitude=pc.amplitude, period=pc.period,
            jitter=pc.jitter, curvature=pc.curvature, noise=noise, path_seed=pc.path_seed,
            bias_direction=pc.bias_direction or None,
        )
    mdp = build_mdp(pc)
    model_mdp = perturb(mdp, pc.model_beta, stream(pc.model_seed, "model-mdp")) if pc.model_beta else None
    if pc.parametrization == "softmax":
        return SoftmaxPolicyProblem(mdp, pc.samples, model_mdp, noise)
    return PolicyProblem(mdp, pc.loss, pc.samples, model_mdp, pc.init, noise)


def build_algorithm(cfg: ExperimentConfig, problem):
    a = cfg.algorithm
    fset = problem.set
    if a.name in ("BasicMD", "FTRL"):
        if a.geometry == "entropy":
            if not isinstance(fset, ProductSimplex):
                raise ConfigError("algorithm.geometry: entropy needs a simplex feasible set")
            geo = entropy_for(fset, a.scale)
        else:
            geo = SquaredEuclidean(a.scale)
        return make_algorithm(a.name, fset, geo, eta=a.eta, c=a.c, G=a.G)
    if a.name == "AdaGrad":
        return make_algorithm("AdaGrad", fset, eta=a.eta, eps=a.eps)
    if a.name == "Adam":
        return make_algorithm("Adam", fset, eta=a.eta, c=a.c, beta1=a.beta1, beta2=a.beta2, eps=a.eps)
    return make_algorithm("AdaNatGrad", fset, fisher_fn=problem.fisher, eta=a.eta, c=a.c, beta2=a.beta2,
                          floor=a.floor, g_init=a.g_init)


def build_model(cfg: ExperimentConfig):
    m = cfg.meta
    if m.model == "replay":
        return make_model("replay", K=m.replay_k, reevaluate=m.reevaluate)
    if m.model == "last":
        return make_model("last", reevaluate=m.reevaluate)
    if m.model == "learned":
        return make_model("learned", lr=m.learned_lr)
    return make_model(m.model)


def build_mode(cfg: ExperimentConfig) -> MetaMode:
    shift = cfg.meta.shift or cfg.algorithm.name == "AdaNatGrad"
    return MetaMode(Mode(cfg.meta.mode), shift_enabled=shift, adam_m_in_prediction=cfg.meta.adam_m_in_prediction)


def build_fixed_point(cfg: ExperimentConfig):
    m = cfg.meta
    if not m.fixed_point:
        return None
    return FixedPointConfig(m.fp_max_iters, m.fp_tol, m.fp_method, m.fp_memory)


# ---------------------------------------------------------------------------
# Running seeds
# ---------------------------------------------------------------------------


@dataclass
class SeedOutcome:
    seed_index: int
    rows: list
    report: dict
    states: dict | None


def _audit_allowed(alg, mode, H0) -> bool:
    # an unbounded regularizer size (entropy on the simplex) makes the bound vacuous
    return alg.auditable and mode.kind in (Mode.PICCOLO, Mode.MODEL_FREE) and np.isfinite(alg.reg_size(H0))


def run_seed(cfg: ExperimentConfig, seed_index: int) -> SeedOutcome:
    problem = build_problem(cfg)
    alg = build_algorithm(cfg, problem)
    model = build_model(cfg)
    mode = build_mode(cfg)
    schedule = WeightSchedule(cfg.run.p)
    J_star = getattr(problem, "J_star", None)
    try:
        res = run(problem, alg, mode, model, schedule, cfg.run.N, seed=cfg.run.seed, seed_index=seed_index,
                  fixed_point=build_fixed_point(cfg))
    except NumericAbort as exc:
        report = {"seed": seed_index, "status": "aborted", "abort_round": exc.round_index, "N": cfg.run.N,
                  "K": None, "final_avg_regret": None, "audit_slack_min": None, "audit_passed": None,
                  "J_pibar": None, "J_star": J_star}
        return SeedOutcome(seed_index, [], report, None)

    trace = res.trace
    N = len(trace)
    w = np.array([t.w for t in trace])
    wsum = np.cumsum(w)
    reg = np.full(N, np.nan)
    if isinstance(trace[0].round_loss, LinQuadLoss):
        losses = ([LinQuadLoss(t.g) for t in trace] if cfg.run.regret_on == "sampled"
                  else [t.round_loss for t in trace])
        try:
            reg = prefix_regret(res.decisions, losses, problem.set, w)
        except UnsupportedError:
            pass
    lhs = rhs = slack = np.full(N, np.nan)
    audit_ok = None
    if cfg.run.audit and _audit_allowed(alg, mode, res.H0):
        lhs, rhs, slack = prefix_bound(trace, alg, res.H0, mode)
        audit_ok = bool(np.all(slack >= -1e-9 * (1.0 + np.abs(lhs))))

    def opt(x):
        return None if x is None or not np.isfinite(x) else x

    rows = []
    for i, t in enumerate(trace):
        rows.append([t.n, t.w, t.loss, t.J, opt(reg[i]), opt(reg[i] / wsum[i]), float(np.linalg.norm(t.g)),
                     float(np.linalg.norm(t.ghat)), t.e_dual, opt(lhs[i]), opt(rhs[i]), opt(slack[i]),
                     t.fp_residual, seed_index])
    report = {
        "seed": seed_index, "status": "ok", "abort_round": None, "N": N, "K": res.K,
        "final_avg_regret": opt(reg[-1] / wsum[-1]),
        "audit_slack_min": opt(float(np.min(slack))) if audit_ok is not None else None,
        "audit_passed": None if audit_ok is None else int(audit_ok),
        "J_pibar": problem.performance(res.pibar), "J_star": J_star,
    }
    states = None
    if cfg.run.save_states:
        states = {"w": w, "pi": res.decisions, "pihat": np.array([t.pihat for t in trace]),
                  "g": np.array([t.g for t in trace]), "ghat": np.array([t.ghat for t in trace])}
        for prefix, snaps in (("H0", [res.H0]), ("Hpred", [t.H_pred for t in trace]), ("H", [t.H for t in trace])):
            for key in snaps[0].arrays():
                states[f"{prefix}__{key}"] = np.array([s.arrays()[key] for s in snaps])
    return SeedOutcome(seed_index, rows, report, states)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PICCOLO_THREADS", "1")))
    except ValueError:
        return 1


def run_seeds(cfg: ExperimentConfig) -> list[SeedOutcome]:
    """All seeds, possibly concurrently; results come back in seed order."""
    indices = range(cfg.run.seeds)
    workers = min(_threads(), cfg.run.seeds)
    if workers == 1:
        return [run_seed(cfg, i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: run_seed(cfg, i), indices))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_run(cfg: ExperimentConfig, out: Path) -> list[SeedOutcome]:
    """Run every seed and write trace.csv, report.csv, meta.txt and states/."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = run_seeds(cfg)
    rows = [r for o in outcomes for r in o.rows]
    (out / "trace.csv").write_text(csv_text(TRACE_COLUMNS, rows))
    (out / "report.csv").write_text(csv_text(REPORT_COLUMNS, [[o.report[c] for c in REPORT_COLUMNS]
                                                               for o in outcomes]))
    meta = cfg.dumps() + f'\n[library]\nversion = "{__version__}"\n'
    (out / "meta.txt").write_text(meta)
    if cfg.run.save_states:
        sdir = out / "states"
        sdir.mkdir(exist_ok=True)
        (sdir / "config.toml").write_text(cfg.dumps())
        for o in outcomes:
            if o.states is not None:
                np.savez(sdir / f"seed{o.seed_index}.npz", **o.states)
    return outcomes


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS_TAIL = ["run_dir", "N", "seeds", "median_final_avg_regret", "aborted", "slope"]


def write_sweep(cfg: ExperimentConfig, out: Path) -> list[dict]:
    """One run directory per sweep point plus sweep.csv.

    The slope column is the log-log fit of median final average regret against
    N over points that differ only in run.N (empty when fewer than three).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    points = expand(cfg)
    keys = list(cfg.sweep)
    records = []
    for i, (point, sub) in enumerate(points):
        name = f"run{i:03d}"
        outcomes = write_run(sub, out / name)
        vals = [o.report["final_avg_regret"] for o in outcomes if o.report["final_avg_regret"] is not None]
        records.append({**point, "run_dir": name, "N": sub.run.N, "seeds": sub.run.seeds,
                        "median_final_avg_regret": float(np.median(vals)) if vals else None,
                        "aborted": sum(o.report["status"] == "aborted" for o in outcomes)})
    group_keys = [k for k in keys if k != "run.N"]
    groups: dict = {}
    for r in records:
        groups.setdefault(tuple(str(r[k]) for k in group_keys), []).append(r)
    for members in groups.values():
        pts = [(m["N"], m["median_final_avg_regret"]) for m in members if m["median_final_avg_regret"] is not None]
        slope = None
        if len({n for n, _ in pts}) >= 3:
            slope = fit_rate([n for n, _ in pts], [v for _, v in pts]).slope
        for m in members:
            m["slope"] = slope
    header = keys + [c for c in SWEEP_COLUMNS_TAIL if c not in keys]
    rows = [[r.get(k) if not isinstance(r.get(k), str) else r[k] for k in header] for r in records]
    text = io.StringIO()
    writer = csv.writer(text, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    (out / "sweep.csv").write_text(text.getvalue())
    return records


# ---------------------------------------------------------------------------
# Offline audit
# ---------------------------------------------------------------------------


def _snapshots(data, prefix: str, count: int) -> list[RegularizerState]:
    keys = [k for k in data.files if k.startswith(prefix + "__")]
    return [RegularizerState.from_arrays({k.split("__", 1)[1]: data[k][i] for k in keys}) for i in range(count)]


def audit_states(states_dir: Path) -> list[dict]:
    """Recompute the regret-bound audit of every saved seed from its snapshots."""
    from .config import load

    states_dir = Path(states_dir)
    cfg = load(states_dir / "config.toml")
    problem = build_problem(cfg)
    alg = build_algorithm(cfg, problem)
    mode = build_mode(cfg)
    out = []
    for path in sorted(states_dir.glob("seed*.npz"), key=lambda p: int(p.stem[4:])):
        with np.load(path) as data:
            N = len(data["w"])
            H0 = _snapshots(data, "H0", 1)[0]
            Hp, H = _snapshots(data, "Hpred", N), _snapshots(data, "H", N)
            trace = [SimpleNamespace(w=float(data["w"][i]), pi=data["pi"][i], pihat=data["pihat"][i],
                                     g=data["g"][i], e=data["g"][i] - data["ghat"][i], H_pred=Hp[i], H=H[i])
                     for i in range(N)]
        seed = int(path.stem[4:])
        if not _audit_allowed(alg, mode, H0):
            out.append({"seed": seed, "vacuous": True})
            continue
        audit = audit_regret_bound(trace, alg, H0, mode)
        out.append({"seed": seed, "vacuous": False, "lhs": audit.lhs, "rhs": audit.rhs, "slack": audit.slack,
                    "M": audit.M, "passed": audit.passed()})
    return out
