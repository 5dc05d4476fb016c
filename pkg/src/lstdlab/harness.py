"""Seeded Monte-Carlo experiment driver.

Generates batches of random chain + feature instances, runs the trace-based
estimator across a (lambda, n) grid with one trajectory per instance and
prefix checkpoints, records real/estimation/approximation errors next to
the corresponding bound values, and persists everything as CSV. All
randomness is derived from a master seed by counter-based splitting, so a
run is byte-identical regardless of the worker-pool size.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
import numpy as np

from .bounds import BoundInputs, MixingParams, estimation_bound, global_bound, h_explicit
from .bounds import approximation_bound
from .chain import (
    GarnetSpec,
    MarkovRewardProcess,
    NonConvergence,
    StationaryDistribution,
    exact_value,
    garnet_generate,
    sample_trajectory,
    stationary_distribution,
)
from .features import (
    FeatureMap,
    MuGeometry,
    RankDeficient,
    SingularGram,
    mu_geometry,
    mu_norm,
    random_features,
)
from .lstd import (
    SingularA,
    estimate_at,
    exact_A_b,
    lstd_error,
    perturbation_check,
    trace_matrix,
)

__all__ = [
    "RUN_CSV_COLUMNS",
    "SUMMARY_CSV_COLUMNS",
    "SWEEP_CSV_COLUMNS",
    "TooManyFailures",
    "ExperimentConfig",
    "RunRecord",
    "ExperimentDiagnostics",
    "ExperimentResult",
    "run_experiment",
    "sweep_bounds",
    "summarize",
    "write_run_csv",
    "read_run_csv",
    "write_summary_csv",
    "write_sweep_csv",
    "instance_document",
    "instance_from_document",
]

RUN_CSV_COLUMNS = [
    "instance_id",
    "lambda",
    "n",
    "seed",
    "real_error",
    "estimation_error",
    "approx_error",
    "bound_estimation",
    "bound_global",
    "used_pseudo_inverse",
    "wall_time_ms",
]

SUMMARY_CSV_COLUMNS = [
    "lambda",
    "n",
    "mean_real_error",
    "std_real_error",
    "mean_estimation_error",
    "count",
]

SWEEP_CSV_COLUMNS = [
    "lambda",
    "n",
    "lambda_cap",
    "I",
    "m_star",
    "estimation_bound",
    "h_explicit",
    "approx_plain",
    "approx_improved",
    "global_bound",
    "n0",
    "n0_ok",
]

# Generated feature entries live in [0, 1], matching the unit reward bound.
FEATURE_BOUND = 1.0

# Sub-seed stream tags for counter-based splitting.
_STREAM_GARNET = 0
_STREAM_FEATURES = 1
_STREAM_TRAJECTORY = 2

_BUILD_ATTEMPTS = 3
_FAILURE_BUDGET = 0.05

# Relative cushion for float accumulation when auditing exact inequalities.
_CHECK_SLACK = 1e-10


class TooManyFailures(RuntimeError):
    """More than 5% of the requested instances failed to build."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and scale of one Monte-Carlo experiment.

    ``error_metric`` selects absolute mu-norm errors or errors relative to
    |v|_mu; bounds are scaled the same way so comparisons stay valid.
    ``timing`` opts into measured wall times per record; it defaults off so
    that output files are byte-reproducible.
    """

    n_instances: int = 100
    n_states: int = 100
    d: int = 20
    branching: int = 5
    eta: float = 0.01
    gamma: float = 0.99
    lambdas: tuple = (0.0, 0.3, 0.5, 0.7, 0.9, 1.0)
    n_grid: tuple = (1_000, 10_000, 100_000)
    delta: float = 0.05
    mixing: MixingParams = MixingParams()
    master_seed: int = 0
    error_metric: str = "absolute_mu_norm"
    parallelism: int = 1
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")
        if any(not 0.0 <= l <= 1.0 for l in self.lambdas) or not self.lambdas:
            raise ValueError("lambdas must be a non-empty subset of [0, 1]")
        if list(self.n_grid) != sorted(self.n_grid) or self.n_grid[0] < 2:
            raise ValueError("n_grid must be ascending with entries >= 2")
        if self.error_metric not in ("absolute_mu_norm", "relative_mu_norm"):
            raise ValueError(f"unknown error_metric {self.error_metric!r}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        if "mixing" in raw and isinstance(raw["mixing"], dict):
            raw["mixing"] = MixingParams(**raw["mixing"])
        return cls(**raw)


@dataclass(frozen=True)
class RunRecord:
    """One (instance, lambda, n) evaluation; fields follow the run CSV order."""

    instance_id: int
    lam: float
    n: int
    seed: int
    real_error: float
    estimation_error: float
    approx_error: float
    bound_estimation: float
    bound_global: float
    used_pseudo_inverse: bool
    wall_time_ms: float

    def __post_init__(self):
        if self.real_error > self.estimation_error + self.approx_error + 1e-9:
            raise ValueError(
                f"triangle inequality violated: {self.real_error} > "
                f"{self.estimation_error} + {self.approx_error}"
            )


@dataclass
class ExperimentDiagnostics:
    """Counters accumulated across all instances of a run."""

    instances_built: int = 0
    regenerations: int = 0
    failed_instances: list = field(default_factory=list)
    decomposition_checks: int = 0
    decomposition_applicable: int = 0
    decomposition_skipped: int = 0
    decomposition_violations: int = 0
    structural_checks: int = 0
    structural_violations: int = 0

    def merge(self, other: "ExperimentDiagnostics") -> None:
        self.instances_built += other.instances_built
        self.regenerations += other.regenerations
        self.failed_instances.extend(other.failed_instances)
        self.decomposition_checks += other.decomposition_checks
        self.decomposition_applicable += other.decomposition_applicable
        self.decomposition_skipped += other.decomposition_skipped
        self.decomposition_violations += other.decomposition_violations
        self.structural_checks += other.structural_checks
        self.structural_violations += other.structural_violations


@dataclass
class ExperimentResult:
    records: list
    summary: list
    diagnostics: ExperimentDiagnostics


@dataclass
class _InstanceBundle:
    instance_id: int
    attempt: int
    mrp: MarkovRewardProcess
    mu: StationaryDistribution
    phi: FeatureMap
    geom: MuGeometry
    v: np.ndarray
    proj_residual: float
    exact_by_lambda: dict
    trajectory_seed: int


def _derive_seed(master_seed: int, instance_id: int, attempt: int, stream: int) -> int:
    seq = np.random.SeedSequence((master_seed, instance_id, attempt, stream))
    return int(seq.generate_state(1, np.uint64)[0])


def _build_instance(config: ExperimentConfig, instance_id: int) -> tuple:
    """Build one instance, regenerating on failure; returns (bundle, regenerations)."""
    last_error = None
    for attempt in range(_BUILD_ATTEMPTS):
        garnet_seed = _derive_seed(config.master_seed, instance_id, attempt, _STREAM_GARNET)
        feature_seed = _derive_seed(config.master_seed, instance_id, attempt, _STREAM_FEATURES)
        spec = GarnetSpec(
            n_states=config.n_states,
            branching=config.branching,
            seed=garnet_seed,
            ergodicity_blend=config.eta,
        )
        try:
            mrp = garnet_generate(spec, config.gamma)
            mu = stationary_distribution(mrp)
            phi = random_features(config.n_states, config.d, FEATURE_BOUND, feature_seed)
            geom = mu_geometry(phi, mu)
            v = exact_value(mrp)
            exact_by_lambda = {lam: exact_A_b(mrp, phi, geom, lam) for lam in config.lambdas}
        except (NonConvergence, SingularGram, RankDeficient, SingularA) as exc:
            last_error = exc
            continue
        proj_residual = mu_norm(mu, v - geom.project(v))
        bundle = _InstanceBundle(
            instance_id=instance_id,
            attempt=attempt,
            mrp=mrp,
            mu=mu,
            phi=phi,
            geom=geom,
            v=v,
            proj_residual=proj_residual,
            exact_by_lambda=exact_by_lambda,
            trajectory_seed=_derive_seed(
                config.master_seed, instance_id, attempt, _STREAM_TRAJECTORY
            ),
        )
        return bundle, attempt
    raise _InstanceBuildFailure(instance_id, last_error)


class _InstanceBuildFailure(RuntimeError):
    def __init__(self, instance_id, cause):
        super().__init__(f"instance {instance_id} failed after {_BUILD_ATTEMPTS} attempts: {cause}")
        self.instance_id = instance_id


@dataclass
class _InstanceOutput:
    instance_id: int
    records: list
    diagnostics: ExperimentDiagnostics
    failed: bool


def _instance_worker(config: ExperimentConfig, instance_id: int) -> _InstanceOutput:
    diag = ExperimentDiagnostics()
    try:
        bundle, attempt = _build_instance(config, instance_id)
    except _InstanceBuildFailure:
        diag.failed_instances.append(instance_id)
        return _InstanceOutput(instance_id, [], diag, failed=True)
    diag.instances_built = 1
    diag.regenerations = attempt

    mrp, mu, phi, geom = bundle.mrp, bundle.mu, bundle.phi, bundle.geom
    relative = config.error_metric == "relative_mu_norm"
    denom = mu_norm(mu, bundle.v) if relative else 1.0
    if denom == 0.0:
        denom = 1.0

    # nu never exceeds d L^2 on a valid instance
    diag.structural_checks += 1
    if geom.nu > config.d * FEATURE_BOUND**2 * (1.0 + _CHECK_SLACK):
        diag.structural_violations += 1

    traj = sample_trajectory(mrp, mu, max(config.n_grid), bundle.trajectory_seed)
    feats = phi.Phi[traj.states]
    diffs_cache = feats[:-1] - config.gamma * feats[1:]
    rewards = traj.rewards[:-1]

    theta_cap = mrp.v_max / np.sqrt(geom.nu)
    delta_cap = 2.0 * np.sqrt(config.d) * FEATURE_BOUND * theta_cap
    records = []
    for lam in config.lambdas:
        exact = bundle.exact_by_lambda[lam]
        traces = trace_matrix(feats[:-1], lam * config.gamma)

        diag.structural_checks += 1
        if np.linalg.norm(exact.theta) > theta_cap * (1.0 + _CHECK_SLACK):
            diag.structural_violations += 1
        diag.structural_checks += 1
        trace_cap = FEATURE_BOUND / (1.0 - lam * config.gamma)
        if np.abs(traces).max() > trace_cap * (1.0 + _CHECK_SLACK):
            diag.structural_violations += 1
        diag.structural_checks += 1
        td_residuals = (
            exact.v_fixed[traj.states[:-1]]
            - config.gamma * exact.v_fixed[traj.states[1:]]
            - traj.rewards[:-1]
        )
        if np.abs(td_residuals).max() > delta_cap * (1.0 + _CHECK_SLACK):
            diag.structural_violations += 1

        approx_error = mu_norm(mu, bundle.v - exact.v_fixed)
        for n in config.n_grid:
            started = time.perf_counter() if config.timing else 0.0
            est = estimate_at(traces, diffs_cache, rewards, n)
            estimation_error = lstd_error(est, exact, phi, mu)
            real_error = mu_norm(mu, phi.Phi @ est.theta_hat - bundle.v)
            inputs = BoundInputs(
                n=n,
                delta=config.delta,
                lam=lam,
                gamma=config.gamma,
                d=config.d,
                L=FEATURE_BOUND,
                nu=geom.nu,
                r_max=mrp.R_max,
                mixing=config.mixing,
            )
            bound_est = estimation_bound(inputs) + h_explicit(inputs)
            plain, _ = approximation_bound(lam, config.gamma, bundle.proj_residual)
            bound_glob = plain + bound_est

            check = perturbation_check(est, exact, phi, mu, geom, lam, config.gamma)
            diag.decomposition_checks += 1
            if check.applicable:
                diag.decomposition_applicable += 1
                invertible = check.min_singular_value > 0.0
                if not invertible or check.lhs > check.rhs * (1.0 + _CHECK_SLACK):
                    diag.decomposition_violations += 1
            else:
                diag.decomposition_skipped += 1

            elapsed_ms = (time.perf_counter() - started) * 1000.0 if config.timing else 0.0
            records.append(
                RunRecord(
                    instance_id=instance_id,
                    lam=lam,
                    n=n,
                    seed=bundle.trajectory_seed,
                    real_error=real_error / denom,
                    estimation_error=estimation_error / denom,
                    approx_error=approx_error / denom,
                    bound_estimation=bound_est / denom,
                    bound_global=bound_glob / denom,
                    used_pseudo_inverse=est.used_pseudo_inverse,
                    wall_time_ms=elapsed_ms,
                )
            )
    return _InstanceOutput(instance_id, records, diag, failed=False)


def run_experiment(
    config: ExperimentConfig,
    out_csv=None,
    summary_csv=None,
) -> ExperimentResult:
    """Run the full grid; returns records, the per-(lambda, n) summary, and counters.

    Instances are processed independently (in a process pool when
    ``config.parallelism`` > 1) and merged in instance order, so the output
    does not depend on the degree of parallelism.

    Raises
    ------
    TooManyFailures
        If more than 5% of instances fail to build after regeneration.
    """
    ids = range(config.n_instances)
    worker = partial(_instance_worker, config)
    if config.parallelism > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            outputs = list(pool.map(worker, ids))
    else:
        outputs = [worker(i) for i in ids]

    diagnostics = ExperimentDiagnostics()
    records = []
    for output in outputs:
        diagnostics.merge(output.diagnostics)
        records.extend(output.records)
    if len(diagnostics.failed_instances) > _FAILURE_BUDGET * config.n_instances:
        raise TooManyFailures(
            f"{len(diagnostics.failed_instances)} of {config.n_instances} instances failed: "
            f"{diagnostics.failed_instances}"
        )
    summary = summarize(records)
    if out_csv is not None:
        write_run_csv(records, out_csv)
    if summary_csv is not None:
        write_summary_csv(summary, summary_csv)
    return ExperimentResult(records=records, summary=summary, diagnostics=diagnostics)


def summarize(records) -> list:
    """Mean and standard deviation of the real error per (lambda, n) cell."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.lam, rec.n), []).append(rec)
    rows = []
    for (lam, n) in sorted(cells):
        bucket = cells[(lam, n)]
        real = np.array([r.real_error for r in bucket])
        est = np.array([r.estimation_error for r in bucket])
        rows.append(
            {
                "lambda": lam,
                "n": n,
                "mean_real_error": float(real.mean()),
                "std_real_error": float(real.std(ddof=1)) if len(real) > 1 else 0.0,
                "mean_estimation_error": float(est.mean()),
                "count": len(bucket),
            }
        )
    return rows


def sweep_bounds(config: ExperimentConfig, out_csv=None) -> list:
    """Evaluate every bound over the (lambda, n) grid.

    Uses the instance-measured smallest Gram eigenvalue and projection
    residual, averaged over the configured batch of instances.
    """
    nus, residuals = [], []
    for instance_id in range(config.n_instances):
        bundle, _ = _build_instance(config, instance_id)
        nus.append(bundle.geom.nu)
        residuals.append(bundle.proj_residual)
    nu_bar = float(np.mean(nus))
    resid_bar = float(np.mean(residuals))
    rows = []
    for lam in config.lambdas:
        for n in config.n_grid:
            inputs = BoundInputs(
                n=n,
                delta=config.delta,
                lam=lam,
                gamma=config.gamma,
                d=config.d,
                L=FEATURE_BOUND,
                nu=nu_bar,
                r_max=1.0,
                mixing=config.mixing,
            )
            report = global_bound(inputs, resid_bar)
            rows.append({"lambda": lam, "n": n, **asdict(report)})
    if out_csv is not None:
        write_sweep_csv(rows, out_csv)
    return rows


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip form, numpy scalars normalized
    return str(value)


def write_run_csv(records, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RUN_CSV_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    _format_cell(v)
                    for v in (
                        rec.instance_id,
                        rec.lam,
                        rec.n,
                        rec.seed,
                        rec.real_error,
                        rec.estimation_error,
                        rec.approx_error,
                        rec.bound_estimation,
                        rec.bound_global,
                        rec.used_pseudo_inverse,
                        rec.wall_time_ms,
                    )
                ]
            )


def read_run_csv(path) -> list:
    """Parse a run CSV back into records (validating the triangle inequality)."""
    records = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            records.append(
                RunRecord(
                    instance_id=int(row["instance_id"]),
                    lam=float(row["lambda"]),
                    n=int(row["n"]),
                    seed=int(row["seed"]),
                    real_error=float(row["real_error"]),
                    estimation_error=float(row["estimation_error"]),
                    approx_error=float(row["approx_error"]),
                    bound_estimation=float(row["bound_estimation"]),
                    bound_global=float(row["bound_global"]),
                    used_pseudo_inverse=row["used_pseudo_inverse"] == "1",
                    wall_time_ms=float(row["wall_time_ms"]),
                )
            )
    return records


def write_summary_csv(rows, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in SUMMARY_CSV_COLUMNS])


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in SWEEP_CSV_COLUMNS])


def instance_document(
    mrp: MarkovRewardProcess,
    phi: FeatureMap | None = None,
    seed_provenance: dict | None = None,
) -> dict:
    """JSON-shaped document for persistence and replay of one instance."""
    doc = {
        "n_states": mrp.n_states,
        "gamma": mrp.gamma,
        "P": mrp.P.tolist(),
        "r": mrp.r.tolist(),
        "seed_provenance": seed_provenance,
        "R_max": mrp.R_max,
    }
    if phi is not None:
        doc["Phi"] = phi.Phi.tolist()
        doc["L"] = phi.L
    return doc


def instance_from_document(doc: dict):
    """Rebuild (mrp, phi-or-None) from :func:`instance_document` output."""
    r = np.asarray(doc["r"], dtype=np.float64)
    r_max = float(doc.get("R_max", max(1.0, float(r.max()) if r.size else 1.0)))
    mrp = MarkovRewardProcess(
        P=np.asarray(doc["P"], dtype=np.float64),
        r=r,
        gamma=float(doc["gamma"]),
        R_max=r_max,
    )
    if mrp.n_states != int(doc["n_states"]):
        raise ValueError("document n_states disagrees with the kernel shape")
    phi = None
    if "Phi" in doc:
        phi = FeatureMap(Phi=np.asarray(doc["Phi"], dtype=np.float64), L=float(doc["L"]))
    return mrp, phi
