from typing import Dict, List

from app.schemas import OptimizationPlan, RunManifest

# Simple in-memory stores
RUN_LOG: List[RunManifest] = []
PLANS: Dict[str, OptimizationPlan] = {}
