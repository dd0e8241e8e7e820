# app/gpu_model.py
"""
Analytical model of a convolution layer running on a GPU.

Each thread computes one spatial output cell of one filter for one sample.
Threads are grouped into blocks according to the GPU's mapping policy, blocks
are dealt to SMs in waves, and every wave costs one processing cycle no matter
how many SMs it actually occupies. The last, partially filled wave is the
tail; it is what makes latency grow as a staircase in the filter count.
"""
import logging
from typing import Iterable, List, Sequence

from app.schemas import FixedThreadsPerBlock, GpuSpec, LayerSpec, ThreadMapping

logger = logging.getLogger(__name__)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def threads_per_filter(layer: LayerSpec) -> int:
    # batch is folded into the per-filter thread count, not the block count
    return layer.in_h * layer.in_w * layer.batch


def per_thread_flops(layer: LayerSpec) -> int:
    """One multiply and one accumulate per kernel cell."""
    return 2 * layer.kernel_h * layer.kernel_w * layer.effective_depth


def layer_flops(layer: LayerSpec) -> int:
    return threads_per_filter(layer) * layer.filters * per_thread_flops(layer)


def _threads_and_blocks(layer: LayerSpec, gpu: GpuSpec):
    tpf = threads_per_filter(layer)
    policy = gpu.mapping_policy
    if isinstance(policy, FixedThreadsPerBlock):
        tpb = policy.threads_per_block
        return tpf, tpb, ceil_div(tpf * layer.filters, tpb)
    return tpf, tpf, layer.filters


def per_block_cycle(layer: LayerSpec, gpu: GpuSpec) -> float:
    """Seconds one SM needs to finish one block at its share of peak throughput."""
    _, tpb, _ = _threads_and_blocks(layer, gpu)
    return (tpb * per_thread_flops(layer)) / (gpu.peak_flops_per_sm * gpu.efficiency)


def map_to_blocks(layer: LayerSpec, gpu: GpuSpec) -> ThreadMapping:
    tpf, tpb, blocks = _threads_and_blocks(layer, gpu)
    return ThreadMapping(
        threads_per_filter=tpf,
        threads_per_block=tpb,
        blocks=blocks,
        waves=ceil_div(blocks, gpu.sm_count),
        cycle_time=per_block_cycle(layer, gpu),
    )


def predict_latency(layer: LayerSpec, gpu: GpuSpec) -> float:
    mapping = map_to_blocks(layer, gpu)
    return gpu.launch_overhead_s + mapping.cycle_time * mapping.waves


def predict_utilization(layer: LayerSpec, gpu: GpuSpec) -> float:
    """Average SM occupancy over all waves; 1.0 exactly when the last wave is full."""
    mapping = map_to_blocks(layer, gpu)
    return mapping.blocks / (mapping.waves * gpu.sm_count)


def predict_throughput(layer: LayerSpec, gpu: GpuSpec) -> float:
    return layer_flops(layer) / predict_latency(layer, gpu)


def predict_gpu_throughput(layer: LayerSpec, gpu: GpuSpec) -> float:
    """Peak per SM x number of SMs x SM utilization, scaled by the calibration knob."""
    return gpu.peak_flops_per_sm * gpu.sm_count * predict_utilization(layer, gpu) * gpu.efficiency


def sweep_parameter(layer: LayerSpec, gpu: GpuSpec, field: str, values: Iterable[int]) -> List[float]:
    """Latency of `layer` with one geometry field varied (batch, in_h, in_w, ...)."""
    if field not in LayerSpec.model_fields or field in ("layer_id", "filter_style"):
        raise ValueError(f"cannot sweep field {field!r}")
    latencies = []
    for value in values:
        varied = LayerSpec.model_validate({**layer.model_dump(), field: value})
        latencies.append(predict_latency(varied, gpu))
    logger.debug("swept layer=%s field=%s points=%d", layer.layer_id, field, len(latencies))
    return latencies


def staircase_flatness(latencies: Sequence[float]) -> float:
    """Largest step between consecutive sweep points relative to the mean latency."""
    if len(latencies) < 2:
        return 0.0
    biggest = max(b - a for a, b in zip(latencies, latencies[1:]))
    return biggest / (sum(latencies) / len(latencies))
