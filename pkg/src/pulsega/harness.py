"""Experiment orchestration: configuration, baseline-vs-optimized runs, logs.

An experiment builds one benchmark circuit, scores the fixed baseline genome
under the configured noise, runs the adaptive optimizer, and writes:

* ``generation_log.csv``   one row per generation (exact header below),
* ``best_genome.json``     the winning genome with fitness and seed,
* ``summary.json``         the ExperimentResult fields,
* ``baseline_schedule.csv`` / ``best_schedule.csv``  per-slice pulse tables,
* plot-ready fidelity and waveform CSVs via :func:`emit_plot_data`.

``n_qubits`` counts total qubits, matching the benchmark tables: a 4-qubit
Deutsch-Jozsa run uses 3 input qubits plus the ancilla.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .circuits import Circuit, build_deutsch_jozsa, build_grover
from .ga import GAConfig, GeneBounds, GenerationStats, Individual, baseline_individual, evaluate_fitness, run
from .noise import NoiseParams
from .pulse import CompilationCache, build_spin_chain_processor, schedule_for_circuit, write_schedule_csv

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "GENERATION_LOG_HEADER",
    "load_config",
    "run_experiment",
    "write_generation_log",
    "emit_plot_data",
]

logger = logging.getLogger(__name__)

GENERATION_LOG_HEADER = "gen,nevals,avg,std,min,max,diversity,p_mut,p_cross"
ALGORITHMS = ("deutsch-jozsa", "grover")
PRESET_DIR = Path(__file__).parent / "presets"


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "deutsch-jozsa"
    n_qubits: int = 4
    noise: NoiseParams = field(default_factory=lambda: NoiseParams(t1=50.0, t2=30.0, p_bit_flip=0.02, p_phase_flip=0.02))
    ga: GAConfig = field(default_factory=GAConfig)
    workers: int = 1
    output_dir: str = "runs"
    run_baseline: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.build_circuit()  # validates n_qubits against the algorithm's range

    def build_circuit(self) -> Circuit:
        if self.algorithm == "deutsch-jozsa":
            return build_deutsch_jozsa(self.n_qubits - 1)
        return build_grover(self.n_qubits)


@dataclass(frozen=True)
class ExperimentResult:
    baseline_fidelity: float
    best_fidelity: float
    best_avg_fidelity: float
    best_generation: int
    wall_time_seconds: float
    log_path: str
    best_genome_path: str

    def __post_init__(self):
        for name in ("baseline_fidelity", "best_fidelity", "best_avg_fidelity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentResult":
        return cls(**json.loads(text))


def _ga_config_from_dict(data: dict) -> GAConfig:
    data = dict(data)
    bounds = data.pop("bounds", None)
    if bounds is not None:
        if isinstance(bounds, (list, tuple)):
            bounds = GeneBounds(*bounds)
        elif isinstance(bounds, dict):
            bounds = GeneBounds(**bounds)
        data["bounds"] = bounds
    return GAConfig(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    if "noise" in data and isinstance(data["noise"], dict):
        data["noise"] = NoiseParams(**data["noise"])
    if "ga" in data and isinstance(data["ga"], dict):
        data["ga"] = _ga_config_from_dict(data["ga"])
    return ExperimentConfig(**data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data = dataclasses.asdict(cfg)
    data["ga"]["bounds"] = list(dataclasses.astuple(cfg.ga.bounds))
    return data


def load_config(path_or_preset: str) -> ExperimentConfig:
    """Load a config file; bare names (``short``, ``long``) resolve to the
    bundled presets."""
    path = Path(path_or_preset)
    if not path.suffix and not path.exists():
        candidate = PRESET_DIR / f"{path_or_preset}.json"
        if candidate.exists():
            path = candidate
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def _format_stats_row(s: GenerationStats) -> str:
    return (
        f"{s.gen},{s.nevals},{s.avg:.6f},{s.std:.6f},{s.min:.6f},{s.max:.6f},"
        f"{s.diversity:.6f},{s.p_mut_current:.6f},{s.p_cross_current:.6f}"
    )


def write_generation_log(stats: list[GenerationStats], path) -> None:
    if not stats:
        raise ValueError("no generation stats to write")
    try:
        with open(path, "w") as fh:
            fh.write(GENERATION_LOG_HEADER + "\n")
            for s in stats:
                fh.write(_format_stats_row(s) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing generation log to {path}: {exc}") from exc


def _write_best_genome(ind: Individual, path) -> None:
    payload = {
        "genes": [{"evo_time": g.evo_time, "num_tslots": g.num_tslots} for g in ind.genes],
        "fitness": ind.fitness,
        "seed": ind.seed,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc

    circuit = cfg.build_circuit()
    proc = build_spin_chain_processor(cfg.n_qubits)
    compile_cache = CompilationCache(cfg.ga.master_seed)

    baseline = baseline_individual(circuit)
    baseline.fitness = evaluate_fitness(baseline, circuit, proc, cfg.noise, cache=compile_cache)
    logger.info("%s %dQ baseline fidelity %.4f", cfg.algorithm, cfg.n_qubits, baseline.fitness)

    t0 = time.perf_counter()
    best, log = run(cfg.ga, circuit, proc, cfg.noise, workers=cfg.workers)
    wall_time = time.perf_counter() - t0
    logger.info("best fidelity %.4f after %d generations (%.1f s)", best.fitness, len(log) - 1, wall_time)

    log_path = out_dir / "generation_log.csv"
    write_generation_log(log, log_path)
    genome_path = out_dir / "best_genome.json"
    _write_best_genome(best, genome_path)

    best_schedule = schedule_for_circuit(circuit, proc, best, compile_cache)
    write_schedule_csv(best_schedule, out_dir / "best_schedule.csv")
    if cfg.run_baseline:
        baseline_schedule = schedule_for_circuit(circuit, proc, baseline, compile_cache)
        write_schedule_csv(baseline_schedule, out_dir / "baseline_schedule.csv")

    best_generation = next(i for i, s in enumerate(log) if s.max >= best.fitness - 1e-12)
    result = ExperimentResult(
        baseline_fidelity=baseline.fitness,
        best_fidelity=best.fitness,
        best_avg_fidelity=max(s.avg for s in log),
        best_generation=best_generation,
        wall_time_seconds=wall_time,
        log_path=str(log_path),
        best_genome_path=str(genome_path),
    )
    (out_dir / "summary.json").write_text(result.to_json())
    emit_plot_data(log_path, out_dir / "plot_fidelity.csv")
    return result


def _parse_log(log_path) -> list[dict]:
    rows = []
    with open(log_path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != GENERATION_LOG_HEADER:
        raise ValueError(f"{log_path}:1: unexpected log header")
    names = lines[0].split(",")
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise ValueError(f"{log_path}:{lineno}: expected {len(names)} fields, found {len(parts)}")
        try:
            rows.append({name: float(value) for name, value in zip(names, parts)})
        except ValueError as exc:
            raise ValueError(f"{log_path}:{lineno}: {exc}") from exc
    return rows


def _schedule_to_waveform(schedule_path, out_path) -> None:
    with open(schedule_path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    n_controls = len(header) - 3
    out = ["time," + ",".join(f"u_{j}" for j in range(n_controls))]
    t = 0.0
    for line in lines[1:]:
        parts = line.split(",")
        duration = float(parts[2])
        out.append(f"{t:.12g}," + ",".join(parts[3:]))
        t += duration
    Path(out_path).write_text("\n".join(out) + "\n")


def emit_plot_data(log_path, out_path) -> None:
    """Write the fidelity-curve CSV (gen, avg, avg-std, avg+std, max); any
    conventional schedule CSVs next to the log get waveform companions."""
    rows = _parse_log(log_path)
    lines = ["gen,avg,avg_minus_std,avg_plus_std,max"]
    for r in rows:
        lines.append(
            f"{int(r['gen'])},{r['avg']:.6f},{r['avg'] - r['std']:.6f},{r['avg'] + r['std']:.6f},{r['max']:.6f}"
        )
    out_path = Path(out_path)
    out_path.write_text("\n".join(lines) + "\n")
    for stem in ("baseline_schedule", "best_schedule"):
        schedule_path = Path(log_path).parent / f"{stem}.csv"
        if schedule_path.exists():
            _schedule_to_waveform(schedule_path, out_path.parent / f"{stem}_waveform.csv")
