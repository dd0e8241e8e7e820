# app/verify.py
import math
from typing import List, Mapping, Optional

from app.errors import ConfigurationError
from app.optimizer import params_per_filter
from app.schemas import LayerDecision, OptimizationPlan, ProfileTable, VerifyCheck, VerifyReport

REL_TOL = 1e-9


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=1e-15)


def _weights_per_filter(plan: OptimizationPlan, d: LayerDecision, table: ProfileTable) -> int:
    """From the layer geometry when the table carries it, else as the plan states it."""
    if plan.metric == "width":
        return 1
    if table.base_layer is None:
        return d.params_per_filter
    return params_per_filter(table.base_layer)


def verify_plan(
    plan: OptimizationPlan, tables: Mapping[str, ProfileTable], delta: Optional[float] = None
) -> VerifyReport:
    """Recompute a plan's latencies and gains from `tables` and compare with what it claims."""
    for d in plan.layers:
        table = tables.get(d.layer_id)
        if table is None:
            raise ConfigurationError(f"no profile rows for layer {d.layer_id}")
        for width in (d.r_old, d.r_new):
            if not table.has_width(width):
                raise ConfigurationError(f"profile for layer {d.layer_id} does not cover width {width}")

    checks: List[VerifyCheck] = []
    bad_lg, bad_pg, too_wide, changed = [], [], [], []
    lgs, pgs = [], []
    for d in plan.layers:
        table = tables[d.layer_id]
        lg = table.latency(d.r_old) - table.latency(d.r_new)
        pg = (d.r_new - d.r_old) * _weights_per_filter(plan, d, table)
        lgs.append(lg)
        pgs.append(pg)
        if not _close(lg, d.lg_seconds):
            bad_lg.append(d.layer_id)
        if pg != d.pg:
            bad_pg.append(d.layer_id)
        if table.base_layer is not None and d.r_new > table.base_layer.filters:
            too_wide.append(d.layer_id)
        if table.latency(d.r_new) != table.latency(d.r_old):
            changed.append(d.layer_id)

    checks.append(VerifyCheck(name="layer_lg", passed=not bad_lg, detail=", ".join(bad_lg)))
    checks.append(VerifyCheck(name="layer_pg", passed=not bad_pg, detail=", ".join(bad_pg)))
    checks.append(VerifyCheck(name="within_filters", passed=not too_wide, detail=", ".join(too_wide)))

    total_lg = sum(lgs)
    checks.append(VerifyCheck(
        name="total_lg", passed=_close(total_lg, plan.total_lg),
        detail=f"recomputed {total_lg!r}, plan {plan.total_lg!r}",
    ))
    total_pg = sum(pgs)
    checks.append(VerifyCheck(
        name="total_pg", passed=total_pg == plan.total_pg,
        detail=f"recomputed {total_pg}, plan {plan.total_pg}",
    ))

    latency_old = sum(tables[d.layer_id].latency(d.r_old) for d in plan.layers)
    latency_new = sum(tables[d.layer_id].latency(d.r_new) for d in plan.layers)
    checks.append(VerifyCheck(
        name="latency_old", passed=_close(latency_old, plan.latency_old),
        detail=f"recomputed {latency_old!r}, plan {plan.latency_old!r}",
    ))
    checks.append(VerifyCheck(
        name="latency_new", passed=_close(latency_new, plan.latency_new),
        detail=f"recomputed {latency_new!r}, plan {plan.latency_new!r}",
    ))

    if plan.mode == "latency":
        target = delta if delta is not None else plan.delta_target
        if target is not None:
            checks.append(VerifyCheck(
                name="latency_target", passed=latency_new <= target * latency_old,
                detail=f"ratio {latency_new / latency_old:.6f}, delta {target:g}",
            ))
        if plan.tau_final is not None:
            checks.append(VerifyCheck(
                name="pg_band", passed=-plan.tau_final < total_pg < plan.tau_final,
                detail=f"total_pg {total_pg}, tau {plan.tau_final:g}",
            ))
    else:
        # every layer keeps its exact latency, not just the total
        checks.append(VerifyCheck(
            name="zero_latency_overhead", passed=not changed, detail=", ".join(changed),
        ))
    return VerifyReport(checks=checks)
