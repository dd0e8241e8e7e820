# app/optimizer.py
"""
Width optimization over per-layer profile tables.

Latency gain (LG) of a move is the profiled latency at the old width minus the
latency at the new one. Parameter gain (PG) is the capacity change, negative
when a layer shrinks; it is measured either in filters ("width") or in filter
weights ("params"). The latency objective maximizes total LG while keeping
total PG inside (-tau, tau); the accuracy objective fills every layer's tail
so total PG grows at zero latency cost.
"""
import itertools
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from app import config
from app.errors import ConfigurationError, InputError, SearchSpaceError
from app.profile import identify_candidates
from app.schemas import (
    CandidateSet, GainLedger, LayerDecision, LayerGain, LayerSpec, Metric, ModelConfig,
    OptimizationPlan, ProfileTable,
)

logger = logging.getLogger(__name__)

Tables = Mapping[str, ProfileTable]

PENDING_STEPS = [
    "train the optimized width configuration",
    "evaluate model accuracy",
]


def latency_gain(table: ProfileTable, r_old: int, r_new: int) -> float:
    return table.latency(r_old) - table.latency(r_new)


def params_per_filter(layer: LayerSpec) -> int:
    return layer.kernel_h * layer.kernel_w * layer.effective_depth


def parameter_gain(layer: LayerSpec, r_old: int, r_new: int, metric: Metric = "params") -> int:
    # positive when the layer grows
    delta = r_new - r_old
    return delta if metric == "width" else delta * params_per_filter(layer)


def scale_down(candidates: CandidateSet, r_old: int) -> Optional[int]:
    below = [c for c in candidates.candidates if c < r_old]
    return max(below) if below else None


def scale_up(candidates: CandidateSet, r_old: int) -> Optional[int]:
    above = [c for c in candidates.candidates if c > r_old]
    return min(above) if above else None


def in_band(total_pg: float, tau: float) -> bool:
    return -tau < total_pg < tau


def check_coverage(model: ModelConfig, tables: Tables) -> None:
    for entry in model.layers:
        layer_id = entry.layer.layer_id
        table = tables.get(layer_id)
        if table is None:
            raise ConfigurationError(f"no profile table for layer {layer_id}")
        if not table.has_width(entry.width):
            raise ConfigurationError(f"profile for layer {layer_id} does not cover its current width {entry.width}")


def check_parameters(m: int, tau: Optional[float] = None, delta: Optional[float] = None) -> None:
    if m < 1:
        raise InputError(f"m must be at least 1, got {m}")
    if tau is not None and not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    if delta is not None and not 0 < delta <= 1:
        raise InputError(f"delta must be in (0, 1], got {delta}")


def default_tau(model: ModelConfig, metric: Metric) -> float:
    """Configured fraction of the model's full size in the metric's units."""
    total = sum(
        e.layer.filters * (1 if metric == "width" else params_per_filter(e.layer)) for e in model.layers
    )
    return max(config.DEFAULT_TAU_FRACTION * total, 1.0)


def model_latency(model: ModelConfig, tables: Tables, widths: Sequence[int]) -> float:
    return sum(tables[e.layer.layer_id].latency(w) for e, w in zip(model.layers, widths))


def candidate_sets(model: ModelConfig, tables: Tables, m: int) -> Dict[str, CandidateSet]:
    # a layer never grows past its declared filters, whatever the profile covers
    return {
        e.layer.layer_id: identify_candidates(tables[e.layer.layer_id].up_to(e.layer.filters), m)
        for e in model.layers
    }


def estimate_gains(
    model: ModelConfig, tables: Tables, candidates: Mapping[str, CandidateSet], metric: Metric
) -> GainLedger:
    entries = []
    for e in model.layers:
        lid = e.layer.layer_id
        down = scale_down(candidates[lid], e.width)
        up = scale_up(candidates[lid], e.width)
        entries.append(
            LayerGain(
                layer_id=lid,
                r_old=e.width,
                scale_down=down,
                scale_up=up,
                latency_gain=latency_gain(tables[lid], e.width, down) if down is not None else 0.0,
                pg_down=parameter_gain(e.layer, e.width, down, metric) if down is not None else 0,
                pg_up=parameter_gain(e.layer, e.width, up, metric) if up is not None else 0,
            )
        )
    return GainLedger(metric=metric, entries=entries)


def greedy_round(ledger: GainLedger, tau: float) -> Tuple[List[int], List[str]]:
    """
    One pass of the greedy adjustment at a fixed tau.

    Layers are popped in decreasing LG order and scaled down. Whenever total
    PG leaves (-tau, tau), the remaining layers with the smallest LG are
    scaled up until it is back inside. Scale-ups that would overshoot +tau are
    skipped. If no remaining layer can restore the band, the scale-down and
    the scale-ups it triggered are undone; the popped layer keeps its width.
    """
    entries = ledger.entries
    widths = [e.r_old for e in entries]
    pg = [0] * len(entries)
    remaining = list(range(len(entries)))
    notes: List[str] = []

    while remaining:
        j = min(remaining, key=lambda i: (-entries[i].latency_gain, i))
        remaining.remove(j)
        if entries[j].scale_down is None:
            continue
        widths[j], pg[j] = entries[j].scale_down, entries[j].pg_down

        raised: List[int] = []
        while not in_band(sum(pg), tau):
            total = sum(pg)
            k = next(
                (
                    i for i in sorted(remaining, key=lambda i: (entries[i].latency_gain, i))
                    if entries[i].scale_up is not None and total + entries[i].pg_up < tau
                ),
                None,
            )
            if k is None:
                for i in [j, *raised]:
                    widths[i], pg[i] = entries[i].r_old, 0
                remaining.extend(raised)
                notes.append(
                    f"{entries[j].layer_id}: scale-down to {entries[j].scale_down} undone, "
                    f"parameter gain could not be brought back inside +/-{tau:g}"
                )
                break
            remaining.remove(k)
            widths[k], pg[k] = entries[k].scale_up, entries[k].pg_up
            raised.append(k)

    return widths, notes


def build_plan(
    model: ModelConfig,
    tables: Tables,
    widths: Sequence[int],
    *,
    mode: str,
    metric: Metric,
    tau: Optional[float] = None,
    delta: Optional[float] = None,
    notes: Optional[List[str]] = None,
) -> OptimizationPlan:
    decisions = []
    for e, r_new in zip(model.layers, widths):
        r_old = e.width
        decisions.append(
            LayerDecision(
                layer_id=e.layer.layer_id,
                r_old=r_old,
                r_new=r_new,
                lg_seconds=latency_gain(tables[e.layer.layer_id], r_old, r_new),
                pg=parameter_gain(e.layer, r_old, r_new, metric),
                params_per_filter=1 if metric == "width" else params_per_filter(e.layer),
                action="down" if r_new < r_old else "up" if r_new > r_old else "keep",
            )
        )
    total_lg = sum(d.lg_seconds for d in decisions)
    total_pg = sum(d.pg for d in decisions)
    latency_old = model_latency(model, tables, [e.width for e in model.layers])
    latency_new = model_latency(model, tables, widths)

    if mode == "accuracy":
        feasible = total_lg >= 0
    else:
        feasible = in_band(total_pg, tau) and latency_new <= delta * latency_old

    return OptimizationPlan(
        model_name=model.name,
        mode=mode,
        metric=metric,
        layers=decisions,
        total_lg=total_lg,
        total_pg=total_pg,
        latency_old=latency_old,
        latency_new=latency_new,
        tau_final=tau,
        delta_target=delta,
        feasible=feasible,
        notes=list(notes or []),
        pending_steps=list(PENDING_STEPS) if feasible else [],
    )


def optimize_latency(
    model: ModelConfig,
    tables: Tables,
    m: Optional[int] = None,
    tau: Optional[float] = None,
    delta: Optional[float] = None,
    max_retries: Optional[int] = None,
    metric: Optional[Metric] = None,
) -> OptimizationPlan:
    """Greedy latency-oriented optimization with tau doubling on a missed target."""
    from app.optimizer_graph import get_optimizer_graph

    metric = metric or config.DEFAULT_METRIC
    m = config.DEFAULT_M if m is None else m
    delta = config.DEFAULT_DELTA if delta is None else delta
    max_retries = config.DEFAULT_MAX_RETRIES if max_retries is None else max_retries
    tau = default_tau(model, metric) if tau is None else tau
    check_parameters(m, tau, delta)
    if max_retries < 0:
        raise InputError(f"max_retries must be non-negative, got {max_retries}")
    check_coverage(model, tables)

    return get_optimizer_graph().run(
        model=model, tables=tables, m=m, tau=tau, delta=delta, max_retries=max_retries, metric=metric
    )


def optimize_latency_sweep(
    model: ModelConfig, tables: Tables, deltas: Sequence[float], **kwargs
) -> List[OptimizationPlan]:
    """Independent plans for several latency targets, e.g. a mild and an aggressive operating point."""
    return [optimize_latency(model, tables, delta=d, **kwargs) for d in deltas]


def _tail_fill_width(table: ProfileTable, r_old: int, cap: int) -> int:
    """Largest width past r_old reachable without the profiled latency changing."""
    base = table.latency(r_old)
    best = r_old
    for row in table.rows:
        if row.width <= r_old:
            continue
        if row.width > cap or row.latency != base:
            break
        best = row.width
    return best


def optimize_accuracy(
    model: ModelConfig,
    tables: Tables,
    m: Optional[int] = None,
    metric: Optional[Metric] = None,
) -> OptimizationPlan:
    """
    Grow each layer to the right edge of its current steady interval.

    Every layer keeps its exact profiled latency, so total LG is zero, and no
    wider width satisfies that per layer. This reconstructs the accuracy
    objective as a per-layer rule.
    """
    metric = metric or config.DEFAULT_METRIC
    m = config.DEFAULT_M if m is None else m
    check_parameters(m)
    check_coverage(model, tables)

    cands = candidate_sets(model, tables, m)
    widths, notes = [], []
    for e in model.layers:
        lid = e.layer.layer_id
        filled = _tail_fill_width(tables[lid], e.width, e.layer.filters)
        widths.append(filled)
        if filled != e.width and filled not in cands[lid].candidates:
            notes.append(f"{lid}: filled width {filled} is not among the top-{m} candidates")

    plan = build_plan(model, tables, widths, mode="accuracy", metric=metric, notes=notes)
    logger.info("accuracy plan model=%s total_pg=%d total_lg=%r", model.name, plan.total_pg, plan.total_lg)
    return plan


def brute_force_plan(
    model: ModelConfig,
    tables: Tables,
    m: Optional[int] = None,
    tau: Optional[float] = None,
    delta: Optional[float] = None,
    metric: Optional[Metric] = None,
    cap: Optional[int] = None,
    moves: str = "candidates",
) -> OptimizationPlan:
    """
    Exhaustive search: every layer takes its old width or one of its moves.

    moves="candidates" offers every candidate width; moves="neighbors" offers
    only the scale-down and scale-up targets the greedy can reach. The best
    assignment maximizes total LG with total PG inside (-tau, tau); ties go to
    larger total PG, then to the lexicographically smallest width vector.
    """
    metric = metric or config.DEFAULT_METRIC
    m = config.DEFAULT_M if m is None else m
    delta = config.DEFAULT_DELTA if delta is None else delta
    tau = default_tau(model, metric) if tau is None else tau
    cap = config.BRUTE_FORCE_CAP if cap is None else cap
    check_parameters(m, tau, delta)
    check_coverage(model, tables)
    if moves not in ("candidates", "neighbors"):
        raise InputError(f"unknown move set {moves!r}")

    cands = candidate_sets(model, tables, m)
    options: List[List[int]] = []
    for e in model.layers:
        cs = cands[e.layer.layer_id]
        if moves == "candidates":
            opts = {e.width, *cs.candidates}
        else:
            opts = {e.width, *(w for w in (scale_down(cs, e.width), scale_up(cs, e.width)) if w is not None)}
        options.append(sorted(opts))

    size = math.prod(len(o) for o in options)
    if size > cap:
        raise SearchSpaceError(size, cap)

    # per-layer gains for every option, summed in layer order like build_plan does
    lg = [
        {w: latency_gain(tables[e.layer.layer_id], e.width, w) for w in opts}
        for e, opts in zip(model.layers, options)
    ]
    pg = [
        {w: parameter_gain(e.layer, e.width, w, metric) for w in opts}
        for e, opts in zip(model.layers, options)
    ]

    best: Optional[Tuple[float, int]] = None
    best_widths: Tuple[int, ...] = tuple(e.width for e in model.layers)
    for assignment in itertools.product(*options):
        total_pg = sum(pg[i][w] for i, w in enumerate(assignment))
        if not in_band(total_pg, tau):
            continue
        total_lg = sum(lg[i][w] for i, w in enumerate(assignment))
        # product() walks options in ascending lexicographic order; only strictly better replaces
        if best is None or (total_lg, total_pg) > best:
            best, best_widths = (total_lg, total_pg), assignment

    logger.debug("brute force model=%s assignments=%d best=%s", model.name, size, best)
    return build_plan(
        model, tables, list(best_widths), mode="latency", metric=metric, tau=tau, delta=delta,
        notes=[f"exhaustive search over {size} assignments ({moves})"],
    )
