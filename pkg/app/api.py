# app/api.py
import hashlib
import json

from fastapi import FastAPI, HTTPException, Query

from app import __version__, config
from app.catalog import GPU_CATALOG, resolve_gpu
from app.errors import TailTrimError
from app.gpu_model import map_to_blocks
from app.manifest import RECORDER
from app.optimizer import optimize_accuracy, optimize_latency
from app.profile import generate_analytical_profile, identify_candidates, parse_width_range
from app.schemas import CandidatesRequest, OptimizationPlan, OptimizeRequest, StaircaseRequest, VerifyRequest
from app.sources import AnalyticalProfileSource
from app.state import PLANS
from app.verify import verify_plan

app = FastAPI(title="TailTrim – GPU tail-aware width tuning", version=__version__)


def _request_id(payload) -> str:
    body = json.dumps(payload.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(body.encode()).hexdigest()[:16]


def _keep_plan(plan_id: str, plan: OptimizationPlan) -> None:
    PLANS.pop(plan_id, None)
    PLANS[plan_id] = plan
    while len(PLANS) > config.MAX_STORED_PLANS:
        del PLANS[next(iter(PLANS))]


@app.get("/")
async def root():
    return {"ok": True, "service": app.title, "docs": "/docs"}


@app.get("/gpus")
async def gpus():
    return {name: spec.model_dump() for name, spec in GPU_CATALOG.items()}


@app.post("/staircase")
async def staircase(req: StaircaseRequest):
    """Block, wave and latency view of a width sweep"""
    try:
        gpu = resolve_gpu(req.gpu, files=False)
        table = generate_analytical_profile(req.layer, gpu, parse_width_range(req.widths, req.layer.filters))
    except TailTrimError as e:
        raise HTTPException(status_code=422, detail=str(e))

    rows = []
    for r in table.rows:
        mapping = map_to_blocks(req.layer.with_filters(r.width), gpu)
        rows.append({
            "width": r.width,
            "blocks": mapping.blocks,
            "waves": mapping.waves,
            "latency_s": r.latency,
            "utilization": r.utilization,
            "throughput_flops": r.throughput,
        })
    RECORDER.record("staircase", params={"gpu": gpu.name, "widths": req.widths})
    return {"layer_id": req.layer.layer_id, "gpu": gpu.name, "rows": rows}


@app.post("/candidates")
async def candidates(req: CandidatesRequest):
    try:
        gpu = resolve_gpu(req.gpu, files=False)
        table = generate_analytical_profile(req.layer, gpu, parse_width_range(req.widths, req.layer.filters))
        result = identify_candidates(table, req.m)
    except TailTrimError as e:
        raise HTTPException(status_code=422, detail=str(e))
    RECORDER.record("candidates", params={"gpu": gpu.name, "m": req.m, "widths": req.widths})
    return result.model_dump()


@app.post("/optimize")
async def optimize(req: OptimizeRequest):
    """Latency- or accuracy-oriented plan from analytical profiles"""
    try:
        tables = AnalyticalProfileSource(resolve_gpu(req.gpu, files=False)).tables_for_model(req.model)
        if req.mode == "accuracy":
            plan = optimize_accuracy(req.model, tables, m=req.m, metric=req.metric)
        else:
            plan = optimize_latency(
                req.model, tables, m=req.m, tau=req.tau, delta=req.delta,
                max_retries=req.max_retries, metric=req.metric,
            )
    except TailTrimError as e:
        raise HTTPException(status_code=422, detail=str(e))

    plan_id = _request_id(req)
    _keep_plan(plan_id, plan)
    RECORDER.record("optimize", params={"mode": req.mode, "plan_id": plan_id}, notes=plan.notes)
    return {"plan_id": plan_id, "plan": plan.model_dump()}


@app.get("/plans/{plan_id}")
async def get_plan(plan_id: str):
    if plan_id not in PLANS:
        raise HTTPException(status_code=404, detail="Unknown plan")
    return PLANS[plan_id].model_dump()


@app.post("/verify")
async def verify(req: VerifyRequest):
    try:
        tables = AnalyticalProfileSource(resolve_gpu(req.gpu, files=False)).tables_for_model(req.model)
        report = verify_plan(req.plan, tables, req.delta)
    except TailTrimError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {"passed": report.passed, "checks": [c.model_dump() for c in report.checks]}


@app.get("/runs")
async def runs(limit: int = Query(50, ge=1)):
    return [m.model_dump() for m in RECORDER.recent(limit)]
