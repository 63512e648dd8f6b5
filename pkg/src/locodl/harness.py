"""Experiment driver: reference solutions, metric traces, and scaling fits.

A run builds the problem, validates the schedule against the convergence
conditions, iterates the chosen algorithm, and records a metric trace at a
configurable cadence (every communication round plus every `cadence`-th
iteration by default).  Traces serialize to CSV with a fixed column order and
a key=value metadata sidecar; identical seeds give byte-identical files.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import algorithms as alg
from . import objectives as obj
from .compressors import make_spec
from .data import dirichlet_synthetic, load_libsvm, partition
from .errors import ConfigurationError, ConvergenceError, InputError

CSV_COLUMNS = ["algorithm", "dataset", "n", "d", "kappa", "compressor", "seed",
               "t", "rounds", "bits_per_client", "sqdist_mean", "sqdist_ybar",
               "obj_gap", "lyapunov"]

REFERENCE_ITER_CAP = 10_000_000


def solve_reference(problem, tol=1e-12):
    """Gradient descent on the full objective down to gradient norm tol * mu * (1 + ||x||).

    If the target is below the float64 floor, the solve stops once the gradient
    norm stagnates and returns the best iterate found (the numerical optimum).
    """
    if problem.mu <= 0:
        raise InputError("reference solve needs a strongly convex problem")
    gamma = 1.0 / problem.L
    x = np.zeros(problem.d)
    threshold_scale = tol * problem.mu
    best_gnorm = np.inf
    best_x = x
    stalled = 0
    for _ in range(REFERENCE_ITER_CAP):
        g = problem.grad_mean(x)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= threshold_scale * (1.0 + float(np.linalg.norm(x))):
            break
        if gnorm < 0.999 * best_gnorm:
            best_gnorm, best_x, stalled = gnorm, x, 0
        else:
            stalled += 1
            if stalled >= 2000:   # no relative progress: at the float64 floor
                x = best_x
                break
        x = x - gamma * g
    else:
        raise ConvergenceError(
            f"reference solver hit {REFERENCE_ITER_CAP} iterations; residual {gnorm:.3e}")
    u_star = problem.grads_locals(x)
    return alg.ReferenceSolution(x, u_star, problem.grad_g(x), problem.value_mean(x))


@dataclass
class ExperimentConfig:
    problem: dict                 # {'source': 'libsvm'|'quadratic'|'dirichlet', ...}
    n: int
    kappa: float
    algorithm: str                # locodl | gd | diana | scaffnew
    compressor: str = "identity"
    k: int | None = None
    seeds: tuple = (0,)
    stop_metric: str = "psi"      # psi | sqdist
    stop_ratio: float = 1e-8
    max_iters: int = 10_000_000
    cadence: int = 100
    round_cadence: int = 1
    overrides: dict = field(default_factory=dict)
    data_seed: int = 0
    label: str = ""

    def __post_init__(self):
        if not self.seeds:
            raise InputError("seeds must be nonempty")
        if self.stop_ratio <= 0 or self.max_iters < 0:
            raise InputError("stop rule must be positive")
        if self.stop_metric not in ("psi", "sqdist"):
            raise InputError(f"unknown stop metric {self.stop_metric!r}")
        if self.algorithm not in ("locodl", "gd", "diana", "scaffnew"):
            raise InputError(f"unknown algorithm {self.algorithm!r}")

    def content_hash(self):
        text = repr(sorted(self.__dict__.items(), key=lambda kv: kv[0]))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class ExperimentTrace:
    columns: dict              # column name -> list, keys follow CSV_COLUMNS
    metadata: dict

    def last(self, name):
        return self.columns[name][-1]

    def array(self, name):
        return np.asarray(self.columns[name])


def build_problem(config):
    """Returns (problem, baseline_problem, dataset_name)."""
    src = dict(config.problem)
    source = src.pop("source")
    if source == "quadratic":
        d = int(src["d"])
        rng = np.random.default_rng(config.data_seed)
        problem = obj.random_quadratic_problem(d, config.n, config.kappa, rng)
        baseline = obj.fold_shared(problem)
        return problem, baseline, "quadratic"
    if source == "libsvm":
        dataset = load_libsvm(src["path"])
        name = os.path.basename(src["path"])
    elif source == "dirichlet":
        dataset = dirichlet_synthetic(config.n, int(src["d"]), float(src["alpha"]),
                                      config.data_seed)
        name = f"dirichlet_a{src['alpha']}"
    else:
        raise InputError(f"unknown problem source {source!r}")
    shards = partition(dataset, config.n, config.data_seed)
    mu = obj.regularization_for_kappa(dataset.union_shard(), config.kappa)
    problem = obj.logistic_problem(shards, mu)
    baseline = obj.folded_logistic_problem(shards, mu)
    return problem, baseline, name


def resolve_params(config, problem, spec):
    """Theoretical schedule with optional per-field overrides from the config."""
    defaults = alg.default_params(problem.L, problem.mu, spec.omega, spec.omega / config.n)
    if not config.overrides:
        return defaults
    fields = {name: getattr(defaults, name) for name in
              ("gamma", "chi", "rho", "p", "omega", "omega_av")}
    for key, value in config.overrides.items():
        if key not in ("gamma", "chi", "rho", "p"):
            raise InputError(f"unknown parameter override {key!r}")
        fields[key] = float(value)
    return alg.AlgoParams(**fields)


class _Recorder:
    def __init__(self, config, meta_common, ref, problem):
        self.columns = {name: [] for name in CSV_COLUMNS}
        self.meta = meta_common
        self.ref = ref
        self.problem = problem
        self.config = config

    def record(self, t, rounds, bits, x_mean, x_clients, y, psi):
        cols = self.columns
        cols["t"].append(t)
        cols["rounds"].append(rounds)
        cols["bits_per_client"].append(bits)
        dx = x_clients - self.ref.x_star[None, :]
        cols["sqdist_mean"].append(float(np.mean(np.sum(dx * dx, axis=1))))
        dy = y - self.ref.x_star
        cols["sqdist_ybar"].append(float(dy @ dy))
        cols["obj_gap"].append(self.problem.value_mean(x_mean) - self.ref.f_star)
        cols["lyapunov"].append(psi)
        for name in ("algorithm", "dataset", "n", "d", "kappa", "compressor", "seed"):
            cols[name].append(self.meta[name])

    def trace(self, extra_meta):
        meta = dict(self.meta)
        meta.update(extra_meta)
        return ExperimentTrace(self.columns, meta)


def _stop_value(recorder, metric):
    if metric == "psi":
        return recorder.columns["lyapunov"][-1]
    return recorder.columns["sqdist_mean"][-1]


def run_single(config, problem, baseline, ref, seed):
    """One seeded trajectory of the configured algorithm; returns an ExperimentTrace."""
    n, d = config.n, problem.d
    spec = make_spec(config.compressor, d, n, config.k)
    specs = [spec] * n
    rng = alg.RngBundle.from_seed(seed, n)

    meta = {"algorithm": config.algorithm, "dataset": config.problem.get("path", config.problem["source"]),
            "n": n, "d": d, "kappa": problem.kappa, "compressor": _compressor_name(config),
            "seed": seed}
    extra = {"config_hash": config.content_hash(), "stop_metric": config.stop_metric,
             "stop_ratio": config.stop_ratio, "dirichlet_labels": "seeded fair coin"}

    if config.algorithm == "locodl":
        params = resolve_params(config, problem, spec)
        tau = alg.rate_bound(params, problem.L, problem.mu)
        extra.update(gamma=params.gamma, chi=params.chi, rho=params.rho, p=params.p,
                     omega=params.omega, omega_av=params.omega_av, tau=tau)
        rec = _Recorder(config, meta, ref, problem)
        state = alg.LoCoDLState.zeros(n, d)
        rec.record(0, 0, 0, state.x.mean(axis=0), state.x, state.y,
                   alg.lyapunov(state, ref, params))
        initial = _stop_value(rec, config.stop_metric)
        rounds_seen = 0
        while state.t < config.max_iters:
            alg.locodl_step(state, problem, specs, params, rng)
            new_round = state.rounds != rounds_seen
            rounds_seen = state.rounds
            due = (new_round and state.rounds % config.round_cadence == 0) \
                or state.t % config.cadence == 0
            if due:
                rec.record(state.t, state.rounds, state.bits_uplink,
                           state.x.mean(axis=0), state.x, state.y,
                           alg.lyapunov(state, ref, params))
                if _stop_value(rec, config.stop_metric) <= config.stop_ratio * initial:
                    break
        extra.update(max_dual_residual=state.max_dual_residual,
                     max_dual_scale=float(np.max(np.abs(state.u))) if state.u.size else 0.0,
                     natural_saturation_events=state.saturation_events)
        return rec.trace(extra)

    # baselines run on the folded problem
    if config.stop_metric == "psi":
        raise ConfigurationError("stop metric 'psi' is only defined for locodl runs")
    prob = baseline
    rec = _Recorder(config, meta, ref, prob)
    if config.algorithm == "gd":
        gamma = float(config.overrides.get("gamma", 1.0 / prob.L))
        extra.update(gamma=gamma)
        state = alg.GDState.zeros(d)

        def step():
            alg.gd_step(state, prob, gamma)

        def snapshot():
            x2 = state.x[None, :]
            rec.record(state.t, state.rounds, state.bits_uplink, state.x, x2, state.x,
                       float("nan"))
    elif config.algorithm == "diana":
        gamma = float(config.overrides.get("gamma",
                                           alg.diana_gamma(prob.L, prob.mu, spec.omega, n)))
        extra.update(gamma=gamma, omega=spec.omega)
        state = alg.DianaState.zeros(n, d)

        def step():
            alg.diana_step(state, prob, specs, gamma, rng)

        def snapshot():
            x2 = state.x[None, :]
            rec.record(state.t, state.rounds, state.bits_uplink, state.x, x2, state.x,
                       float("nan"))
    else:  # scaffnew
        gamma = float(config.overrides.get("gamma", 1.0 / prob.L))
        p = float(config.overrides.get("p", min(1.0, 1.0 / np.sqrt(prob.kappa))))
        extra.update(gamma=gamma, p=p)
        state = alg.ScaffnewState.zeros(n, d)

        def step():
            alg.scaffnew_step(state, prob, gamma, p, rng)

        def snapshot():
            xm = state.x.mean(axis=0)
            rec.record(state.t, state.rounds, state.bits_uplink, xm, state.x, xm,
                       float("nan"))

    snapshot()
    initial = _stop_value(rec, config.stop_metric)
    rounds_seen = 0
    while state.t < config.max_iters:
        step()
        new_round = state.rounds != rounds_seen
        rounds_seen = state.rounds
        if (new_round and state.rounds % config.round_cadence == 0) \
                or state.t % config.cadence == 0:
            snapshot()
            if _stop_value(rec, config.stop_metric) <= config.stop_ratio * initial:
                break
    return rec.trace(extra)


def _compressor_name(config):
    if config.k is not None:
        return f"{config.compressor}{config.k}"
    return config.compressor


def run_experiment(config, problem=None, baseline=None, ref=None):
    """Run every seed of the config; returns one ExperimentTrace per seed."""
    if problem is None:
        problem, baseline, name = build_problem(config)
    if ref is None:
        ref = solve_reference(problem)
    return [run_single(config, problem, baseline, ref, seed) for seed in config.seeds]


def bits_to_target(trace, target_ratio, metric="sqdist_mean"):
    """Per-client uplink bits at the first record where metric/initial <= target_ratio."""
    vals = trace.array(metric)
    bits = trace.array("bits_per_client")
    ok = vals <= target_ratio * vals[0]
    idx = np.argmax(ok)
    if not ok[idx]:
        raise ConvergenceError(f"trace never reached {metric} ratio {target_ratio}")
    return int(bits[idx])


def fit_communication_exponent(results):
    """Least-squares slope of log(bits-to-target) against log(kappa)."""
    if len(results) < 3:
        raise InputError("need at least 3 kappa values for a scaling fit")
    kappas = np.array(sorted(results))
    bits = np.array([results[k] for k in kappas], dtype=np.float64)
    slope, _ = np.polyfit(np.log(kappas), np.log(bits), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# trace serialization
# ---------------------------------------------------------------------------


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_to_csv(trace):
    lines = [",".join(CSV_COLUMNS)]
    length = len(trace.columns["t"])
    for i in range(length):
        lines.append(",".join(_fmt(trace.columns[name][i]) for name in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def metadata_text(trace):
    lines = [f"{key}={_fmt(trace.metadata[key])}" for key in sorted(trace.metadata)]
    return "\n".join(lines) + "\n"


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace(trace, csv_path):
    atomic_write(csv_path, trace_to_csv(trace))
    atomic_write(csv_path[:-4] + ".meta" if csv_path.endswith(".csv") else csv_path + ".meta",
                 metadata_text(trace))
