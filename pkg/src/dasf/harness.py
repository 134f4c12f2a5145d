"""
Scenario files, Monte-Carlo ensembles and the artifacts they write.

A scenario is a YAML document with a versioned schema.  Unknown keys are
rejected with the offending field and line.  Every run ``r`` draws all its
randomness (mixing vector, initial filter, sample batches) from
``default_rng(seed + r)``, so ensembles of different solvers are paired and
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import platform
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy
import yaml

from .core import (_other_nodes, assemble_local_problem, initial_filter, node_payload,
                   run_dasf, warm_start)
from .diagnostics import (compressed_licq_check, optimal_value, rate_bound_check,
                          relative_excess_cost, trace_statistics)
from .errors import (CapabilityError, CertificateUnavailableError, ConfigError, DasfError,
                     NumericalError, SolverDivergenceError)
from .problems import PROBLEMS, make_problem
from .signals import ORACLE, SAMPLED, MixtureSource, NetworkModel
from .solvers import SolverConfig, certify_contract, certify_sequence, check_compatible, solve

SCHEMA_VERSION = 1

_SCHEMA = {
    "schema_version": None,
    "name": None,
    "network": {"K": None, "M_k": None, "channels": None, "Q": None},
    "problem": {"name": None, "params": "*"},
    "solver": {"kind": None, "n_iter": None, "step": None, "step_factor": None,
               "backtracking": {"beta": None, "armijo": None}, "reg": None, "lipschitz": None,
               "label": None},
    "compare": "solvers",
    "statistics": {"mode": None, "N": None},
    "source": {"source_var": None, "noise_var": None},
    "runs": None,
    "seed": None,
    "budget": None,
    "stop_tol": None,
    "workers": None,
    "output": None,
    "certify": {"contract": None, "rate": None, "licq": None},
}

TRACE_COLUMNS = ("run", "i", "q", "L", "excess", "residual", "w", "w_global",
                 "scalars_tx", "n_i", "R_hat", "c_hat")


@dataclass
class Scenario:
    """Everything needed to reproduce an ensemble."""

    network: NetworkModel
    problem: str
    problem_params: dict
    solver: SolverConfig
    name: str = "scenario"
    solver_label: str = ""
    compare: list = field(default_factory=list)
    mode: str = ORACLE
    N: int = 1000
    source_var: float = 1.0
    noise_var: float = 10.0
    runs: int = 1
    seed: int = 0
    budget: int = 100
    stop_tol: float = 1e-10
    workers: int = 1
    output: str = "out"
    certify: dict = field(default_factory=lambda: {"contract": True, "rate": True, "licq": True})
    raw: dict = field(default_factory=dict)

    def with_solver(self, solver, label=None):
        new = copy.copy(self)
        new.solver = solver
        new.solver_label = label or solver_label(solver)
        return new


def solver_label(solver):
    sched = solver.n_iter if np.isscalar(solver.n_iter) else "-".join(map(str, solver.n_iter))
    return f"{solver.kind}-n{sched}"


# loading

def _line_map(text):
    """Map dotted key paths to 1-based line numbers of a YAML document."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                lines[path] = key.start_mark.line + 1
                walk(value, path)
        elif isinstance(node, yaml.SequenceNode):
            for n, item in enumerate(node.value):
                path = f"{prefix}[{n}]"
                lines[path] = item.start_mark.line + 1
                walk(item, path)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, "")
    return lines


def _check_keys(data, schema, prefix, lines):
    if not isinstance(data, dict):
        raise ConfigError(f"'{prefix}' must be a mapping", prefix, lines.get(prefix))
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in schema:
            raise ConfigError(f"unknown key '{path}'", path, lines.get(path))
        sub = schema[key]
        if isinstance(sub, dict) and value is not None:
            _check_keys(value, sub, path, lines)
        elif sub == "solvers":
            if not isinstance(value, list):
                raise ConfigError(f"'{path}' must be a list of solvers", path, lines.get(path))
            for n, item in enumerate(value):
                _check_keys(item, _SCHEMA["solver"], f"{path}[{n}]", lines)


def _solver_from(data, path, lines):
    data = dict(data or {})
    label = data.pop("label", None)
    bt = data.pop("backtracking", None)
    if bt is not None:
        data["backtracking"] = (bt.get("beta", 0.5), bt.get("armijo", 1e-4))
    if "kind" not in data:
        raise ConfigError(f"'{path}.kind' is required", f"{path}.kind", lines.get(path))
    try:
        solver = SolverConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver in '{path}': {exc}", path, lines.get(path)) from None
    return solver, label or solver_label(solver)


def parse_scenario(text, source="<string>"):
    """Parse and validate scenario YAML text."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: malformed YAML: {exc}", None,
                          None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: scenario must be a mapping")
    lines = _line_map(text)
    _check_keys(data, _SCHEMA, "", lines)

    def need(cond, path, msg):
        if not cond:
            raise ConfigError(f"{source}: {msg}", path, lines.get(path))

    version = data.get("schema_version")
    need(version == SCHEMA_VERSION, "schema_version",
         f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    for key in ("network", "problem", "solver"):
        need(key in data, key, f"'{key}' is required")

    net = data["network"]
    need("Q" in net, "network.Q", "'network.Q' is required")
    if net.get("channels") is not None:
        need("K" not in net and "M_k" not in net, "network.channels",
             "give either 'channels' or 'K' and 'M_k'")
        channels = net["channels"]
    else:
        need("K" in net and "M_k" in net, "network", "'network' needs 'K' and 'M_k' or 'channels'")
        channels = [net["M_k"]] * int(net["K"])
    try:
        network = NetworkModel(tuple(channels), int(net["Q"]))
    except (DasfError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: invalid network: {exc}", "network", lines.get("network")) from None

    prob = data["problem"]
    need(prob.get("name") in PROBLEMS, "problem.name",
         f"unknown problem {prob.get('name')!r}; choose from {sorted(PROBLEMS)}")
    params = dict(prob.get("params") or {})
    try:
        make_problem(prob["name"], network, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: invalid problem parameters: {exc}", "problem.params",
                          lines.get("problem.params")) from None

    solver, label = _solver_from(data["solver"], "solver", lines)
    compare = [_solver_from(item, f"compare[{n}]", lines) for n, item in enumerate(data.get("compare") or [])]

    stats = data.get("statistics") or {}
    mode = stats.get("mode", ORACLE)
    need(mode in (ORACLE, SAMPLED), "statistics.mode", f"statistics.mode must be oracle or sampled, got {mode!r}")
    N = stats.get("N", 1000)
    need(isinstance(N, int) and N >= 2, "statistics.N", "statistics.N must be an integer >= 2")
    src = data.get("source") or {}

    runs = data.get("runs", 1)
    need(isinstance(runs, int) and runs >= 1, "runs", "runs must be a positive integer")
    need(runs == 1 or "seed" in data, "seed", "a seed is required when runs > 1")
    seed = data.get("seed", 0)
    need(isinstance(seed, int) and seed >= 0, "seed", "seed must be a non-negative integer")
    budget = data.get("budget", 100)
    need(isinstance(budget, int) and budget >= 0, "budget", "budget must be a non-negative integer")
    workers = data.get("workers", 1)
    need(isinstance(workers, int) and workers >= 1, "workers", "workers must be a positive integer")
    certify = {"contract": True, "rate": True, "licq": True}
    certify.update({k: bool(v) for k, v in (data.get("certify") or {}).items()})
    stop_tol = float(data.get("stop_tol", 1e-10))
    need(stop_tol >= 0, "stop_tol", "stop_tol must be non-negative")

    return Scenario(
        network=network, problem=prob["name"], problem_params=params, solver=solver,
        name=str(data.get("name", "scenario")), solver_label=label, compare=compare,
        mode=mode, N=N, source_var=float(src.get("source_var", 1.0)),
        noise_var=float(src.get("noise_var", 10.0)), runs=runs, seed=seed, budget=budget,
        stop_tol=stop_tol, workers=workers, output=str(data.get("output", "out")),
        certify=certify, raw=data)


def load_scenario(path):
    """Load a scenario from a file path, or a shipped scenario by name."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        shipped = resources.files("dasf") / "scenarios" / f"{path}.yaml"
        if shipped.is_file():
            return parse_scenario(shipped.read_text(), str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, str(path))


def shipped_scenarios():
    root = resources.files("dasf") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".yaml"))


# single runs

def make_source(scenario, rng):
    sources = scenario.network.Q if scenario.problem == "mwf" else 1
    return MixtureSource.random(scenario.network, rng, sources=sources, mode=scenario.mode,
                                source_var=scenario.source_var, noise_var=scenario.noise_var)


@dataclass
class RunResult:
    """Trace and certificates of one Monte-Carlo run, in plain arrays."""

    run: int
    seed: int
    status: str
    message: str
    L: np.ndarray
    L_star: float
    excess: np.ndarray
    q: np.ndarray
    residual: np.ndarray
    w: np.ndarray
    w_global: np.ndarray
    scalars_tx: np.ndarray
    n_i: np.ndarray
    R_hat: np.ndarray
    c_hat: np.ndarray
    contract_ok: bool
    sequence_ok: bool | None
    rate_ok: bool | None
    rate_constant: float | None
    licq: dict | None
    checks: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.q)

    def summary(self):
        return {
            "run": self.run, "seed": self.seed, "status": self.status, "message": self.message,
            "iterations": self.iterations, "initial_L": _num(self.L[0]), "final_L": _num(self.L[-1]),
            "L_star": _num(self.L_star), "final_excess": _num(self.excess[-1]),
            "final_residual": _num(self.residual[-1]) if self.iterations else None,
            "scalars_transmitted": int(np.sum(self.scalars_tx)),
            "sub_iterations": int(np.sum(self.n_i)),
            "certificates": {"contract": self.contract_ok, "sequence": self.sequence_ok,
                             "rate": self.rate_ok, "rate_constant": _num(self.rate_constant),
                             "licq": self.licq},
        }


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else repr(x)


def execute_run(scenario, run, verify=False):
    """Run one member of the ensemble; numerical failures are recorded, not raised."""
    seed = scenario.seed + run
    rng = np.random.default_rng(seed)
    source = make_source(scenario, rng)
    problem = make_problem(scenario.problem, scenario.network, **scenario.problem_params)
    truth = source.statistics()
    L_star = optimal_value(problem, truth)
    status, message = "ok", ""
    try:
        state = run_dasf(problem, source, scenario.solver, scenario.budget, rng=rng,
                         N=scenario.N, stop_tol=scenario.stop_tol, verify=verify)
    except SolverDivergenceError as exc:
        state, status, message = exc.state, "diverged", str(exc)
    except (NumericalError, DasfError, np.linalg.LinAlgError) as exc:
        return _failed_run(run, seed, L_star, f"{type(exc).__name__}: {exc}")

    trace = state.trace
    col = lambda name: np.array([getattr(t, name) for t in trace], dtype=float)
    L = state.objectives
    excess = np.array([relative_excess_cost(v, L_star) for v in L])
    R_hat, c_hat = col("R_hat"), col("c_hat")
    contract_ok = all(t.c1_ok and t.c2_ok and t.c3_ok for t in trace)
    seq = certify_sequence(R_hat, c_hat, contract_ok)
    rate_ok = rate_constant = licq = None
    if scenario.certify.get("rate") and scenario.mode == ORACLE and trace:
        try:
            cert = rate_bound_check(col("w"), R_hat, c_hat, L[0], L_star)
            rate_ok, rate_constant = cert.passed, cert.r_hat
        except CertificateUnavailableError:
            rate_ok = False
    if scenario.certify.get("licq") and problem.n_constraints:
        try:
            rep = compressed_licq_check(problem, truth, state.X)
            licq = {"passed": rep.passed, "sigma_min": _num(rep.sigma_min),
                    "sigma_max": _num(rep.sigma_max), "auto_failed": rep.auto_failed}
        except DasfError as exc:
            licq = {"passed": False, "error": str(exc)}
    checks = {}
    if verify and trace:
        for key in trace[0].checks:
            checks[key] = float(max(t.checks[key] for t in trace))
    return RunResult(run, seed, status, message, L, L_star, excess, col("q").astype(int),
                     col("residual"), col("w"), col("w_global"), col("scalars_tx").astype(int),
                     col("n_iter").astype(int), R_hat, c_hat, contract_ok,
                     seq.passed if scenario.certify.get("contract") else None,
                     rate_ok, rate_constant, licq, checks)


def _failed_run(run, seed, L_star, message):
    empty = np.zeros(0)
    return RunResult(run, seed, "failed", message, np.array([np.nan]), L_star,
                     np.array([np.nan]), empty.astype(int), empty, empty, empty,
                     empty.astype(int), empty.astype(int), empty, empty, False, False, None,
                     None, None)


def _execute(args):
    return execute_run(*args)


def run_ensemble(scenario, workers=None, verify=False):
    """All runs of ``scenario``, ordered by run index."""
    workers = scenario.workers if workers is None else workers
    jobs = [(scenario, r, verify) for r in range(scenario.runs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(job) for job in jobs]
    return sorted(results, key=lambda r: r.run)


def ensemble_statistics(results):
    ok = [r for r in results if r.status != "failed"]
    if not ok:
        raise NumericalError("every run of the ensemble failed")
    return trace_statistics([r.excess for r in ok], [r.n_i for r in ok])


# random local problems for solver certification

def random_local_problem(problem, source, rng, q=None):
    """
    Local problem of a random network state: random (projected) filter,
    random updating node, exact compressed statistics.
    """
    network = source.network
    truth = source.statistics()
    X = initial_filter(problem, truth, network, rng)
    q = int(rng.integers(1, network.K + 1)) if q is None else q
    payloads = {k: node_payload(problem, network, X, k) for k in _other_nodes(network, q)}
    local = assemble_local_problem(problem, network, X, q, payloads, global_stats=truth)
    return local, warm_start(network, X, q)


@dataclass
class SolverCertification:
    solver: str
    count: int
    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    c4_ok: bool
    R_inf: float
    c_sup: float
    violations: list

    @property
    def passed(self):
        return self.c1_ok and self.c2_ok and self.c3_ok and self.c4_ok


def certify_solver(scenario, count=None, solver=None):
    """
    Run the scenario's solver on ``count`` random local problems (one per run
    seed) and certify the contract on each, and the constants across all.
    """
    solver = scenario.solver if solver is None else solver
    count = scenario.runs if count is None else count
    reports = []
    for r in range(count):
        rng = np.random.default_rng(scenario.seed + r)
        source = make_source(scenario, rng)
        problem = make_problem(scenario.problem, scenario.network, **scenario.problem_params)
        local, x0 = random_local_problem(problem, source, rng)
        run = solve(solver, local.problem, local.stats, x0, solver.n_at(0))
        reports.append(certify_contract(run, local.problem, local.stats, warm_start=x0))
    R = [rep.R_min for rep in reports]
    c = [rep.c_max for rep in reports]
    seq = certify_sequence(R, c)
    violations = [(r, *v) for r, rep in enumerate(reports) for v in rep.violations]
    return SolverCertification(
        solver_label(solver), count, all(rep.c1_ok for rep in reports),
        all(rep.c2_ok for rep in reports), all(rep.c3_ok for rep in reports), seq.passed,
        seq.R_inf, seq.c_sup, violations)


# writing artifacts

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def trace_rows(result):
    """Long-format rows: row i holds the state after i DASF iterations."""
    rows = [[result.run, 0, "", _fmt(result.L[0]), _fmt(result.excess[0]), "", "", "", 0, 0, "", ""]]
    for t in range(result.iterations):
        rows.append([result.run, t + 1, int(result.q[t]), _fmt(result.L[t + 1]),
                     _fmt(result.excess[t + 1]), _fmt(result.residual[t]), _fmt(result.w[t]),
                     _fmt(result.w_global[t]), int(result.scalars_tx[t]), int(result.n_i[t]),
                     _fmt(result.R_hat[t]), _fmt(result.c_hat[t])])
    return rows


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _num(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_ensemble_csv(stats, out):
    _write_csv(out / "ensemble_iterations.csv", ("iteration", "median", "p5", "p95"),
               [[int(i), _fmt(m), _fmt(a), _fmt(b)]
                for i, m, a, b in zip(stats.iterations, stats.median, stats.p5, stats.p95)])
    _write_csv(out / "ensemble_budget.csv", ("sub_iterations", "median", "p5", "p95"),
               [[int(i), _fmt(m), _fmt(a), _fmt(b)] for i, m, a, b in
                zip(stats.budgets, stats.budget_median, stats.budget_p5, stats.budget_p95)])


def write_run_artifacts(scenario, results, out):
    """Per-run traces and summaries, ensemble percentiles and diagnostics."""
    out.mkdir(parents=True, exist_ok=True)
    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    for res in results:
        _write_csv(runs_dir / f"run_{res.run:04d}.csv", TRACE_COLUMNS, trace_rows(res))
        summary = res.summary()
        summary["config"] = scenario_echo(scenario)
        _write_json(runs_dir / f"run_{res.run:04d}.json", summary)
    ok = [r for r in results if r.status != "failed"]
    if ok:
        write_ensemble_csv(ensemble_statistics(results), out)
    diag = diagnostics_summary(scenario, results)
    _write_json(out / "diagnostics.json", diag)
    return diag


def diagnostics_summary(scenario, results):
    failed_runs = [r.run for r in results if r.status != "ok"]
    cert = scenario.certify
    failing = []
    for r in results:
        if r.status != "ok":
            continue
        if cert.get("contract") and not (r.contract_ok and r.sequence_ok):
            failing.append((r.run, "contract"))
        if cert.get("rate") and r.rate_ok is False:
            failing.append((r.run, "rate"))
        if cert.get("licq") and r.licq is not None and not r.licq.get("passed"):
            failing.append((r.run, "licq"))
    finals = [r.excess[-1] for r in results if r.status != "failed"]
    return {
        "scenario": scenario.name,
        "solver": scenario.solver_label,
        "runs": len(results),
        "numerical_failures": failed_runs,
        "certificate_failures": [{"run": r, "certificate": c} for r, c in failing],
        "median_final_excess": _num(np.median(finals)) if finals else None,
        "certificates_passed": not failing,
        "per_run": [r.summary()["certificates"] | {"run": r.run, "status": r.status}
                    for r in results],
    }


def scenario_echo(scenario):
    return {"raw": scenario.raw, "effective": {
        "name": scenario.name, "channels": list(scenario.network.channels),
        "Q": scenario.network.Q, "problem": scenario.problem, "params": scenario.problem_params,
        "solver": asdict(scenario.solver), "mode": scenario.mode, "N": scenario.N,
        "runs": scenario.runs, "seed": scenario.seed, "budget": scenario.budget,
        "stop_tol": scenario.stop_tol}}


def write_manifest(scenario, out, seeds):
    from . import __version__

    files = {}
    for path in sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"):
        files[path.relative_to(out).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
    _write_json(out / "manifest.json", {
        "config": scenario_echo(scenario),
        "versions": {"dasf": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__},
        "seeds": list(seeds),
        "files": files,
    })


def exit_status(diag):
    if diag["numerical_failures"]:
        return 3
    return 0 if diag["certificates_passed"] else 1


def run_experiment(scenario, out=None, workers=None):
    """Run an ensemble and write all artifacts; returns the exit status."""
    out = Path(scenario.output if out is None else out)
    results = run_ensemble(scenario, workers)
    diag = write_run_artifacts(scenario, results, out)
    write_manifest(scenario, out, [r.seed for r in results])
    return exit_status(diag)


def compare_solvers(scenario, solvers=None, out=None, workers=None):
    """
    One ensemble per solver with shared per-run seeds.

    Returns the exit status and a dict label -> EnsembleStatistics.
    Solvers that cannot run on the scenario's problem are skipped with a
    warning.
    """
    out = Path(scenario.output if out is None else out)
    solvers = solvers if solvers is not None else (scenario.compare or [(scenario.solver, scenario.solver_label)])
    problem = make_problem(scenario.problem, scenario.network, **scenario.problem_params)
    statuses, ensembles, rows_it, rows_b = [], {}, [], []
    for solver, label in solvers:
        try:
            check_compatible(solver, problem)
        except CapabilityError as exc:
            warnings.warn(f"skipping solver {label}: {exc}")
            continue
        sc = scenario.with_solver(solver, label)
        results = run_ensemble(sc, workers)
        diag = write_run_artifacts(sc, results, out / label)
        statuses.append(exit_status(diag))
        stats = ensemble_statistics(results)
        ensembles[label] = stats
        rows_it += [[label, int(i), _fmt(m), _fmt(a), _fmt(b)]
                    for i, m, a, b in zip(stats.iterations, stats.median, stats.p5, stats.p95)]
        rows_b += [[label, int(i), _fmt(m), _fmt(a), _fmt(b)] for i, m, a, b in
                   zip(stats.budgets, stats.budget_median, stats.budget_p5, stats.budget_p95)]
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "comparison_iterations.csv", ("solver", "iteration", "median", "p5", "p95"), rows_it)
    _write_csv(out / "comparison_budget.csv", ("solver", "sub_iterations", "median", "p5", "p95"), rows_b)
    write_manifest(scenario, out, [scenario.seed + r for r in range(scenario.runs)])
    status = 3 if 3 in statuses else (1 if 1 in statuses else 0)
    return status, ensembles


def certify_experiment(scenario, out=None):
    """Solver-contract certification on random local problems; returns the exit status."""
    out = Path(scenario.output if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cert = certify_solver(scenario)
    except (NumericalError, DasfError) as exc:
        _write_json(out / "certification.json", {"solver": scenario.solver_label, "error": str(exc)})
        write_manifest(scenario, out, [])
        return 3
    report = asdict(cert) | {"passed": cert.passed}
    _write_json(out / "certification.json", report)
    write_manifest(scenario, out, [scenario.seed + r for r in range(cert.count)])
    return 0 if cert.passed else 1


def read_trace_csv(path):
    """Read a per-run trace back into (excess curve, n_i per iteration)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    excess = np.array([float(r["excess"]) if r["excess"] else np.nan for r in rows])
    n_i = np.array([int(r["n_i"]) for r in rows[1:]], dtype=int)
    return excess, n_i


def report(out):
    """Re-aggregate the traces under ``out/runs`` into ensemble CSVs."""
    out = Path(out)
    paths = sorted((out / "runs").glob("run_*.csv"))
    if not paths:
        raise ConfigError(f"no traces found under {out / 'runs'}")
    curves, n_iters = zip(*(read_trace_csv(p) for p in paths))
    keep = [k for k, c in enumerate(curves) if np.all(np.isfinite(c))]
    stats = trace_statistics([curves[k] for k in keep], [n_iters[k] for k in keep])
    write_ensemble_csv(stats, out)
    return stats
