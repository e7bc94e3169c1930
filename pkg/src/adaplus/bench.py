"""Deterministic experiment runner: seeded multi-replica trainings with step-decay schedules.

A run is described by a flat ``key = value`` config file (see ``parse_config``
for the key set), executed identically for every seed in the config, and
recorded as per-step log rows plus a summary.  Everything except wall time is
a pure function of the config: identical configs produce byte-identical CSV
output.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, NonFiniteValue
from .kernels import KERNEL_IDS, KERNEL_STEPS, HyperParams, LrSchedule, OptimizerState, ParamVector, lr_at
from .problems import (
    GradientSource,
    NoiseSpec,
    Problem,
    large_grad_small_curvature,
    logistic_regression_synthetic,
    quadratic,
    rosenbrock,
)

# Environment variable overriding how many seed replicas run concurrently.
PARALLELISM_ENV = "ADAPLUS_BENCH_PARALLEL"

CSV_HEADER = "seed,epoch,step,lr,loss,grad_norm,param_norm"

_REQUIRED = object()

# problem identifier -> (param key -> (converter, default)); _REQUIRED means mandatory
_PROBLEM_PARAMS = {
    "quadratic": {"dim": (int, _REQUIRED), "condition_number": (float, 1.0)},
    "rosenbrock": {"dim": (int, _REQUIRED)},
    "large_grad_small_curvature": {"g_mag": (float, _REQUIRED), "curvature": (float, _REQUIRED)},
    "logistic_regression_synthetic": {
        "n_samples": (int, _REQUIRED),
        "dim": (int, _REQUIRED),
        "margin": (float, _REQUIRED),
        "seed": (int, 0),
    },
}

_THETA0_MODES = ("seeded", "zeros")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    problem_params: tuple[tuple[str, float | int], ...]
    optimizer: str
    hp: HyperParams
    epochs: int
    steps_per_epoch: int
    schedule: LrSchedule
    seeds: tuple[int, ...]
    log_every: int
    noise: NoiseSpec
    theta0: str = "seeded"

    def __post_init__(self):
        if self.problem not in _PROBLEM_PARAMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {tuple(_PROBLEM_PARAMS)}")
        if self.optimizer not in KERNEL_IDS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {KERNEL_IDS}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.steps_per_epoch < 1:
            raise ConfigError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")
        if self.theta0 not in _THETA0_MODES:
            raise ConfigError(f"theta0 must be one of {_THETA0_MODES}, got {self.theta0!r}")

    def canonical_items(self) -> list[tuple[str, str]]:
        """Flat key/value view with all defaults materialized, sorted by key."""
        items = {
            "problem": self.problem,
            "optimizer": self.optimizer,
            "lr": repr(self.hp.lr),
            "beta1": repr(self.hp.beta1),
            "beta2": repr(self.hp.beta2),
            "eps": repr(self.hp.eps),
            "weight_decay": repr(self.hp.weight_decay),
            "use_nesterov": _fmt_bool(self.hp.use_nesterov),
            "use_belief": _fmt_bool(self.hp.use_belief),
            "decoupled_decay": _fmt_bool(self.hp.decoupled_decay),
            "epochs": str(self.epochs),
            "steps_per_epoch": str(self.steps_per_epoch),
            "log_every": str(self.log_every),
            "milestones": ",".join(str(m) for m in self.schedule.milestones),
            "decay_factor": repr(self.schedule.decay_factor),
            "seeds": ",".join(str(s) for s in self.seeds),
            "theta0": self.theta0,
            "noise": self.noise.kind,
            "noise.scale": repr(self.noise.scale),
            "noise.seed": str(self.noise.seed),
        }
        for key, value in self.problem_params:
            items[f"problem.{key}"] = str(value) if isinstance(value, int) else repr(value)
        return sorted(items.items())

    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in self.canonical_items())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def problem_id(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.problem_params))
        return f"{self.problem}({inner})"


def _fmt_bool(value: bool) -> str:
    return "true" if value else "false"


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered not in ("true", "false"):
        raise ConfigError(f"expected true or false, got {text!r}")
    return lowered == "true"


def _parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(tok.strip()) for tok in text.split(","))


def parse_config(text: str) -> RunConfig:
    """Parse the flat ``key = value`` run-config format.

    Blank lines and ``#`` comments are ignored.  Recognized keys:

    - ``problem`` plus its ``problem.*`` parameters (``quadratic``:
      ``dim``, ``condition_number``; ``rosenbrock``: ``dim``;
      ``large_grad_small_curvature``: ``g_mag``, ``curvature``;
      ``logistic_regression_synthetic``: ``n_samples``, ``dim``,
      ``margin``, ``seed``)
    - ``optimizer`` (one of ``adaplus adam adamw nadam adabelief sgdm``)
    - ``lr``, ``beta1``, ``beta2``, ``eps``, ``weight_decay``,
      ``use_nesterov``, ``use_belief``, ``decoupled_decay``
    - ``epochs``, ``steps_per_epoch``, ``log_every``
    - ``milestones`` (comma-separated epochs, may be empty), ``decay_factor``
    - ``seeds`` (comma-separated, unique), ``theta0`` (``seeded`` or ``zeros``)
    - ``noise`` (``none``, ``gaussian_additive``, ``minibatch_subset``),
      ``noise.scale``, ``noise.seed``

    Unknown keys are rejected.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    def take(key, conv, default=_REQUIRED):
        if key in raw:
            value = raw.pop(key)
            try:
                return conv(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        return default

    problem = take("problem", str)
    if problem not in _PROBLEM_PARAMS:
        raise ConfigError(f"unknown problem {problem!r}; expected one of {tuple(_PROBLEM_PARAMS)}")
    problem_params = []
    for pkey, (conv, default) in _PROBLEM_PARAMS[problem].items():
        problem_params.append((pkey, take(f"problem.{pkey}", conv, default)))

    optimizer = take("optimizer", str)
    try:
        hp = HyperParams(
            lr=take("lr", float, 1e-3),
            beta1=take("beta1", float, 0.9),
            beta2=take("beta2", float, 0.999),
            eps=take("eps", float, 1e-8),
            weight_decay=take("weight_decay", float, 1e-2),
            use_nesterov=take("use_nesterov", _parse_bool, True),
            use_belief=take("use_belief", _parse_bool, True),
            decoupled_decay=take("decoupled_decay", _parse_bool, False),
        )
        schedule = LrSchedule(
            milestones=take("milestones", _parse_int_list, ()),
            decay_factor=take("decay_factor", float, 0.1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    config = RunConfig(
        problem=problem,
        problem_params=tuple(problem_params),
        optimizer=optimizer,
        hp=hp,
        epochs=take("epochs", int),
        steps_per_epoch=take("steps_per_epoch", int),
        schedule=schedule,
        seeds=take("seeds", _parse_int_list),
        log_every=take("log_every", int, 1),
        noise=NoiseSpec(
            kind=take("noise", str, "none"),
            scale=take("noise.scale", float, 0.0),
            seed=take("noise.seed", int, 0),
        ),
        theta0=take("theta0", str, "seeded"),
    )
    if raw:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(raw))}")
    return config


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_text(config: RunConfig) -> str:
    """Canonical flat-file rendering; ``parse_config`` round-trips it."""
    return "\n".join(f"{k} = {v}" for k, v in config.canonical_items()) + "\n"


def build_problem(config: RunConfig) -> Problem:
    params = dict(config.problem_params)
    if config.problem == "quadratic":
        return quadratic(params["dim"], params["condition_number"])
    if config.problem == "rosenbrock":
        return rosenbrock(params["dim"])
    if config.problem == "large_grad_small_curvature":
        return large_grad_small_curvature(params["g_mag"], params["curvature"])
    return logistic_regression_synthetic(
        params["n_samples"], params["dim"], params["margin"], params["seed"]
    )


@dataclass(frozen=True)
class LogRow:
    seed: int
    epoch: int
    step: int
    lr: float
    loss: float
    grad_norm: float
    param_norm: float


@dataclass(frozen=True)
class RunSummary:
    final_loss: float
    best_loss: float
    wall_time_s: float
    aborted: bool = False
    abort_reason: str = ""


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    problem_id: str
    optimizer_id: str
    config: tuple[tuple[str, str], ...]
    rows: tuple[LogRow, ...]
    summary: RunSummary

    def per_seed_final(self) -> dict[int, float]:
        finals: dict[int, float] = {}
        for row in self.rows:
            finals[row.seed] = row.loss
        return finals

    def per_seed_best(self) -> dict[int, float]:
        bests: dict[int, float] = {}
        for row in self.rows:
            bests[row.seed] = min(bests.get(row.seed, np.inf), row.loss)
        return bests


def _parallelism() -> int:
    raw = os.environ.get(PARALLELISM_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{PARALLELISM_ENV} must be an integer, got {raw!r}") from exc
    return max(1, workers)


def _run_replica(config: RunConfig, problem: Problem, seed: int):
    hp = config.hp
    rng = np.random.default_rng(seed)
    if config.theta0 == "seeded":
        theta0 = rng.standard_normal(problem.dim)
    else:
        theta0 = np.zeros(problem.dim)
    params = ParamVector(theta0)
    state = OptimizerState(problem.dim)
    source = GradientSource(problem, config.noise, replica_seed=seed)
    step_fn = KERNEL_STEPS[config.optimizer]

    rows = []
    total = config.epochs * config.steps_per_epoch
    global_step = 0
    # divergence shows up as non-finite values and is handled by aborting;
    # numpy's overflow warnings on that path are redundant
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            lr_t = lr_at(config.schedule, hp.lr, epoch)
            for _ in range(config.steps_per_epoch):
                global_step += 1
                grad = source.gradient(params.values)
                try:
                    step_fn(state, params, grad, hp, lr_t)
                except NonFiniteValue as exc:
                    return rows, f"seed {seed}: {exc}"
                if global_step % config.log_every == 0 or global_step == total:
                    loss, full_grad = problem.evaluate(params.values)
                    if not np.isfinite(loss):
                        return rows, f"seed {seed}: non-finite loss at step {global_step}"
                    rows.append(
                        LogRow(
                            seed=seed,
                            epoch=epoch,
                            step=global_step,
                            lr=lr_t,
                            loss=loss,
                            grad_norm=float(np.linalg.norm(full_grad)),
                            param_norm=float(np.linalg.norm(params.values)),
                        )
                    )
    return rows, None


def run(config: RunConfig) -> RunRecord:
    """Execute every seed replica and assemble the record.

    Replicas are independent; with ``ADAPLUS_BENCH_PARALLEL > 1`` they run on
    a thread pool.  Row order and content are identical either way.  A
    non-finite loss or parameter aborts the run and flags the partial record.
    """
    started = time.perf_counter()
    problem = build_problem(config)
    workers = min(_parallelism(), len(config.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda seed: _run_replica(config, problem, seed), config.seeds))
    else:
        results = [_run_replica(config, problem, seed) for seed in config.seeds]

    rows: list[LogRow] = []
    abort_reasons = []
    for replica_rows, reason in results:
        rows.extend(replica_rows)
        if reason is not None:
            abort_reasons.append(reason)
    rows.sort(key=lambda r: (r.seed, r.epoch, r.step))

    finals: dict[int, float] = {}
    bests: dict[int, float] = {}
    for row in rows:
        finals[row.seed] = row.loss
        bests[row.seed] = min(bests.get(row.seed, np.inf), row.loss)
    final_loss = float(np.mean(list(finals.values()))) if finals else float("nan")
    best_loss = float(np.mean(list(bests.values()))) if bests else float("nan")

    return RunRecord(
        config_hash=config.config_hash(),
        problem_id=config.problem_id(),
        optimizer_id=config.optimizer,
        config=tuple(config.canonical_items()),
        rows=tuple(rows),
        summary=RunSummary(
            final_loss=final_loss,
            best_loss=best_loss,
            wall_time_s=time.perf_counter() - started,
            aborted=bool(abort_reasons),
            abort_reason="; ".join(abort_reasons),
        ),
    )


def record_to_csv(record: RunRecord) -> str:
    """CSV rendering: the fixed header plus one line per log row, 17 significant digits."""
    if record.summary.aborted:
        raise ValueError("aborted record: emit as json, which carries the abort flag")
    lines = [CSV_HEADER]
    for r in record.rows:
        lines.append(
            f"{r.seed},{r.epoch},{r.step},{r.lr:.17g},{r.loss:.17g},{r.grad_norm:.17g},{r.param_norm:.17g}"
        )
    return "\n".join(lines) + "\n"


def record_to_json(record: RunRecord) -> str:
    doc = {
        "config_hash": record.config_hash,
        "problem_id": record.problem_id,
        "optimizer_id": record.optimizer_id,
        "config": {k: v for k, v in record.config},
        "rows": [list(asdict(r).values()) for r in record.rows],
        "summary": asdict(record.summary),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit(record: RunRecord, format: str, path) -> None:
    """Write the record to ``path`` as ``csv`` or ``json``."""
    if format == "csv":
        payload = record_to_csv(record)
    elif format == "json":
        payload = record_to_json(record)
    else:
        raise ValueError(f"unknown format {format!r}; expected csv or json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload)


def load_record(path) -> RunRecord:
    """Read back a JSON record emitted by :func:`emit`."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return RunRecord(
        config_hash=doc["config_hash"],
        problem_id=doc["problem_id"],
        optimizer_id=doc["optimizer_id"],
        config=tuple(sorted(doc["config"].items())),
        rows=tuple(LogRow(int(r[0]), int(r[1]), int(r[2]), r[3], r[4], r[5], r[6]) for r in doc["rows"]),
        summary=RunSummary(**doc["summary"]),
    )


@dataclass(frozen=True)
class CompareRow:
    label: str
    final_mean: float
    final_std: float
    best_mean: float
    best_std: float


@dataclass(frozen=True)
class ComparisonTable:
    problem_id: str
    rows: tuple[CompareRow, ...]
    best_final_label: str
    best_best_label: str

    def render(self) -> str:
        lines = [
            f"problem: {self.problem_id}",
            f"{'optimizer':<14} {'final_loss (mean +/- std)':<34} {'best_loss (mean +/- std)':<34}",
        ]
        for row in self.rows:
            fmark = "*" if row.label == self.best_final_label else " "
            bmark = "*" if row.label == self.best_best_label else " "
            final = f"{fmark} {row.final_mean:.6e} +/- {row.final_std:.3e}"
            best = f"{bmark} {row.best_mean:.6e} +/- {row.best_std:.3e}"
            lines.append(f"{row.label:<14} {final:<34} {best:<34}")
        return "\n".join(lines) + "\n"


def compare(records) -> ComparisonTable:
    """Aggregate records over seeds into one table row each; lowest means get marked.

    All records must describe the same problem.
    """
    records = list(records)
    if not records:
        raise ValueError("compare needs at least one record")
    problem_ids = {r.problem_id for r in records}
    if len(problem_ids) != 1:
        raise ConfigError(f"records describe different problems: {sorted(problem_ids)}")

    rows = []
    for record in records:
        finals = np.array(list(record.per_seed_final().values()))
        bests = np.array(list(record.per_seed_best().values()))
        rows.append(
            CompareRow(
                label=record.optimizer_id,
                final_mean=float(finals.mean()),
                final_std=float(finals.std()),
                best_mean=float(bests.mean()),
                best_std=float(bests.std()),
            )
        )
    best_final = min(rows, key=lambda r: r.final_mean).label
    best_best = min(rows, key=lambda r: r.best_mean).label
    return ComparisonTable(
        problem_id=records[0].problem_id,
        rows=tuple(rows),
        best_final_label=best_final,
        best_best_label=best_best,
    )
