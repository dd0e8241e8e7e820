# app/optimizer_graph.py
from functools import lru_cache
from typing import Mapping

from langgraph.graph import END, StateGraph

from app.graph_nodes import OptimizerNodes
from app.graph_state import OptimizerState
from app.schemas import Metric, ModelConfig, OptimizationPlan, ProfileTable


class OptimizerGraph:
    """LangGraph state machine for the latency-oriented optimization"""

    def __init__(self):
        self.nodes = OptimizerNodes()
        self.graph = self._build_graph()

    def _build_graph(self):
        """Build the optimization graph"""
        workflow = StateGraph(OptimizerState)

        workflow.add_node("identify_candidates", self.nodes.identify_candidates)
        workflow.add_node("estimate_gains", self.nodes.estimate_gains)
        workflow.add_node("adjust_widths", self.nodes.adjust_widths)
        workflow.add_node("evaluate", self.nodes.evaluate)
        workflow.add_node("relax_tau", self.nodes.relax_tau)
        workflow.add_node("finalize", self.nodes.finalize)

        workflow.set_entry_point("identify_candidates")
        workflow.add_edge("identify_candidates", "estimate_gains")
        workflow.add_edge("estimate_gains", "adjust_widths")
        workflow.add_edge("adjust_widths", "evaluate")

        # Retry with a doubled tau until the target is met or retries run out
        workflow.add_conditional_edges(
            "evaluate",
            self._route_after_evaluate,
            {
                "accept": "finalize",
                "retry": "relax_tau",
                "exhausted": "finalize",
            }
        )
        workflow.add_edge("relax_tau", "adjust_widths")
        workflow.add_edge("finalize", END)

        return workflow.compile()

    def _route_after_evaluate(self, state: OptimizerState) -> str:
        if state["target_met"]:
            return "accept"
        if state["retries"] < state["max_retries"]:
            return "retry"
        return "exhausted"

    def run(
        self,
        model: ModelConfig,
        tables: Mapping[str, ProfileTable],
        m: int,
        tau: float,
        delta: float,
        max_retries: int,
        metric: Metric,
    ) -> OptimizationPlan:
        """Execute the graph"""
        initial_state: OptimizerState = {
            "model": model,
            "tables": tables,
            "m": m,
            "tau": tau,
            "delta": delta,
            "max_retries": max_retries,
            "metric": metric,
            "candidates": None,
            "ledger": None,
            "latency_old": None,
            "widths": None,
            "round_notes": [],
            "latency_new": None,
            "target_met": False,
            "retries": 0,
            "best_widths": None,
            "best_latency": None,
            "best_notes": [],
            "plan": None,
        }

        # three steps per round plus the fixed entry and exit nodes
        limit = 3 * (max_retries + 1) + 10
        final_state = self.graph.invoke(initial_state, config={"recursion_limit": limit})
        return final_state["plan"]


@lru_cache(maxsize=1)
def get_optimizer_graph() -> OptimizerGraph:
    return OptimizerGraph()
