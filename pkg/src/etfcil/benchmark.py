"""Multi-seed desk benchmark: three ablation arms, shared data per seed.

For every seed the three arms (learnable classifier + CE, fixed ETF + CE,
fixed ETF + DR) train on the identical dataset with identical seeds; per
seed we record final/average accuracy, the performance drop, the
accumulate-scope cross-class cosine series and its spread, and the growth
factor of the base-class trace ratio from the first to the last session.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .data import generate_dataset
from .etf_geometry import make_etf
from .fscil_engine import ABLATION_ARMS, RunResult, run_ablation


@dataclass
class SeedOutcome:
    seed: int
    results: dict[str, RunResult]

    def final(self, arm: str) -> float:
        return self.results[arm].final

    def average(self, arm: str) -> float:
        return self.results[arm].average

    def pd(self, arm: str) -> float:
        return self.results[arm].pd

    def cross_series(self, arm: str) -> list[float]:
        return [
            m["accumulate_test"].cross_class_cosine
            for m in self.results[arm].session_metrics
        ]

    def cross_spread(self, arm: str) -> float:
        series = self.cross_series(arm)
        return max(series) - min(series)

    def trace_base_series(self, arm: str) -> list[float]:
        return [m["base_test"].trace_ratio for m in self.results[arm].session_metrics]

    def trace_base_growth(self, arm: str) -> float:
        series = self.trace_base_series(arm)
        return series[-1] / series[0]


def run_desk_benchmark(fscil_cfg: dict, seeds=None, keep_artifacts: bool = False) -> list[SeedOutcome]:
    """Run the 3-arm ablation for every seed; the seed drives plan, training and ETF."""
    seeds = list(seeds) if seeds is not None else list(fscil_cfg["ablation"]["seeds"])
    outcomes = []
    for seed in seeds:
        plan = cfgmod.session_plan({**fscil_cfg["plan"], "seed": seed})
        dims = cfgmod.model_dims(fscil_cfg["model"], plan.input_dim)
        train_cfg = cfgmod.train_config({**fscil_cfg["train"], "seed": seed})
        dataset = generate_dataset(
            plan, float(fscil_cfg["data"]["r_mean"]), float(fscil_cfg["data"]["sigma_noise"])
        )
        protos = make_etf(dims.feature_dim, plan.total_classes, seed)
        results = run_ablation(dataset, train_cfg, protos, dims, keep_artifacts=keep_artifacts)
        outcomes.append(SeedOutcome(seed=seed, results={r.arm: r for r in results}))
    return outcomes


def ordering_counts(outcomes: list[SeedOutcome]) -> dict[str, int]:
    """How many seeds satisfy each qualitative ablation ordering."""
    counts = {
        "final_etf_dr_ge_etf_ce": 0,
        "final_etf_ce_ge_learnable_ce": 0,
        "pd_etf_dr_le_learnable_ce": 0,
        "cross_spread_etf_dr_le_half_learnable_ce": 0,
        "trace_growth_etf_dr_le_learnable_ce": 0,
    }
    for out in outcomes:
        if out.final("etf_dr") >= out.final("etf_ce"):
            counts["final_etf_dr_ge_etf_ce"] += 1
        if out.final("etf_ce") >= out.final("learnable_ce"):
            counts["final_etf_ce_ge_learnable_ce"] += 1
        if out.pd("etf_dr") <= out.pd("learnable_ce"):
            counts["pd_etf_dr_le_learnable_ce"] += 1
        if out.cross_spread("etf_dr") <= 0.5 * out.cross_spread("learnable_ce"):
            counts["cross_spread_etf_dr_le_half_learnable_ce"] += 1
        if out.trace_base_growth("etf_dr") <= out.trace_base_growth("learnable_ce"):
            counts["trace_growth_etf_dr_le_learnable_ce"] += 1
    return counts


def benchmark_summary(outcomes: list[SeedOutcome]) -> dict:
    """JSON-ready record of everything the acceptance thresholds pin."""
    per_seed = []
    for out in outcomes:
        per_seed.append(
            {
                "seed": out.seed,
                "final": {arm: out.final(arm) for arm in ABLATION_ARMS},
                "average": {arm: out.average(arm) for arm in ABLATION_ARMS},
                "pd": {arm: out.pd(arm) for arm in ABLATION_ARMS},
                "session_acc": {
                    arm: [row.acc_all for row in out.results[arm].rows] for arm in ABLATION_ARMS
                },
                "cross_series": {arm: out.cross_series(arm) for arm in ABLATION_ARMS},
                "cross_spread": {arm: out.cross_spread(arm) for arm in ABLATION_ARMS},
                "trace_base_series": {arm: out.trace_base_series(arm) for arm in ABLATION_ARMS},
                "trace_base_growth": {arm: out.trace_base_growth(arm) for arm in ABLATION_ARMS},
            }
        )
    counts = ordering_counts(outcomes)
    return {
        "seeds": [out.seed for out in outcomes],
        "arms": list(ABLATION_ARMS),
        "per_seed": per_seed,
        "ordering_counts": counts,
        "mean_final": {
            arm: float(np.mean([o.final(arm) for o in outcomes])) for arm in ABLATION_ARMS
        },
        "mean_pd": {arm: float(np.mean([o.pd(arm) for o in outcomes])) for arm in ABLATION_ARMS},
    }
