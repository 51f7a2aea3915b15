from ppcc.eval.experiments import (
    ExperimentConfig,
    ExperimentReport,
    bench_timing,
    compute_mre,
    run_experiment,
    run_mre_sweep,
)
from ppcc.eval.oracles import brute_force_oracles

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "bench_timing",
    "brute_force_oracles",
    "compute_mre",
    "run_experiment",
    "run_mre_sweep",
]
