# app/graph_nodes.py
import logging

from app.graph_state import OptimizerState
from app.optimizer import build_plan, candidate_sets, estimate_gains, greedy_round, model_latency

logger = logging.getLogger(__name__)


class OptimizerNodes:
    """All nodes for the latency optimization graph"""

    def identify_candidates(self, state: OptimizerState) -> OptimizerState:
        """Node 1: tail-free candidate widths per layer"""
        candidates = candidate_sets(state["model"], state["tables"], state["m"])
        return {**state, "candidates": candidates}

    def estimate_gains(self, state: OptimizerState) -> OptimizerState:
        """Node 2: one-time LG / PG estimates for every layer's moves"""
        model = state["model"]
        ledger = estimate_gains(model, state["tables"], state["candidates"], state["metric"])
        latency_old = model_latency(model, state["tables"], [e.width for e in model.layers])
        return {**state, "ledger": ledger, "latency_old": latency_old}

    def adjust_widths(self, state: OptimizerState) -> OptimizerState:
        """Node 3: greedy scale-down / scale-up pass at the current tau"""
        widths, notes = greedy_round(state["ledger"], state["tau"])
        return {**state, "widths": widths, "round_notes": notes}

    def evaluate(self, state: OptimizerState) -> OptimizerState:
        """Node 4: model latency of the adjusted widths against the target"""
        latency_new = model_latency(state["model"], state["tables"], state["widths"])
        target_met = latency_new <= state["delta"] * state["latency_old"]
        logger.info(
            "optimizer round model=%s tau=%g latency_old=%r latency_new=%r target_met=%s",
            state["model"].name, state["tau"], state["latency_old"], latency_new, target_met,
        )

        update = {"latency_new": latency_new, "target_met": target_met}
        if state["best_latency"] is None or latency_new < state["best_latency"]:
            update.update(
                best_widths=list(state["widths"]),
                best_latency=latency_new,
                best_notes=list(state["round_notes"]),
            )
        return {**state, **update}

    def relax_tau(self, state: OptimizerState) -> OptimizerState:
        """Node: widen the parameter-gain band and try again"""
        return {**state, "tau": state["tau"] * 2, "retries": state["retries"] + 1}

    def finalize(self, state: OptimizerState) -> OptimizerState:
        """Node 5: assemble the plan from the accepted or the best round"""
        if state["target_met"]:
            widths, notes = state["widths"], list(state["round_notes"])
        else:
            widths, notes = state["best_widths"], list(state["best_notes"])
            notes.append(
                f"latency target delta={state['delta']:g} not reached after "
                f"{state['retries']} retries; returning the lowest-latency round"
            )

        plan = build_plan(
            state["model"], state["tables"], widths,
            mode="latency", metric=state["metric"], tau=state["tau"], delta=state["delta"], notes=notes,
        )
        return {**state, "plan": plan}
