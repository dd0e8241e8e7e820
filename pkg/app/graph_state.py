# app/graph_state.py
from typing import Dict, List, Mapping, Optional, TypedDict

from app.schemas import CandidateSet, GainLedger, Metric, ModelConfig, OptimizationPlan, ProfileTable


class OptimizerState(TypedDict):
    """Shared state passed between the optimizer nodes"""
    # Input
    model: ModelConfig
    tables: Mapping[str, ProfileTable]
    m: int
    tau: float
    delta: float
    max_retries: int
    metric: Metric

    # Pre-analysis
    candidates: Optional[Dict[str, CandidateSet]]
    ledger: Optional[GainLedger]
    latency_old: Optional[float]

    # Current round
    widths: Optional[List[int]]
    round_notes: List[str]
    latency_new: Optional[float]
    target_met: bool
    retries: int

    # Best round so far, kept for the infeasible outcome
    best_widths: Optional[List[int]]
    best_latency: Optional[float]
    best_notes: List[str]

    # Output
    plan: Optional[OptimizationPlan]
