import math

import pytest
from hypothesis import given, settings, strategies as st

from app.gpu_model import (
    layer_flops, map_to_blocks, per_block_cycle, per_thread_flops, predict_gpu_throughput, predict_latency,
    predict_throughput, predict_utilization, staircase_flatness, sweep_parameter, threads_per_filter,
)
from app.schemas import FixedThreadsPerBlock, GpuSpec, LayerSpec


def _layer(**overrides):
    fields = dict(layer_id="conv", filters=64, in_depth=64, in_h=8, in_w=8)
    fields.update(overrides)
    return LayerSpec(**fields)


def _dealt_waves(blocks: int, slots: int) -> int:
    waves, left = 0, blocks
    while left > 0:
        left -= min(slots, left)
        waves += 1
    return waves


@pytest.mark.parametrize("h, w, batch, expected", [(64, 64, 1, 4096), (1, 1, 1, 1), (32, 32, 4, 4096)])
def test_threads_per_filter(h, w, batch, expected):
    assert threads_per_filter(_layer(in_h=h, in_w=w, batch=batch)) == expected


def test_per_thread_flops():
    assert per_thread_flops(_layer(in_depth=512)) == 9216
    assert per_thread_flops(_layer(kernel_h=1, kernel_w=1, in_depth=1)) == 2
    assert per_thread_flops(_layer(in_depth=512, filter_style="depthwise")) == 18


def test_layer_flops():
    assert layer_flops(_layer(filters=512, in_depth=512, in_h=64, in_w=64)) == 4096 * 512 * 9216
    assert layer_flops(_layer(filters=1, kernel_h=1, kernel_w=1, in_depth=1, in_h=1, in_w=1)) == 2
    depthwise = _layer(filters=4, in_depth=4, in_h=8, in_w=8, batch=2, filter_style="depthwise")
    assert layer_flops(depthwise) == 9216


def test_block_per_filter_mapping(titan_v):
    mapping = map_to_blocks(_layer(filters=160), titan_v)
    assert (mapping.blocks, mapping.waves) == (160, 2)
    assert mapping.threads_per_block == mapping.threads_per_filter == 64

    mapping = map_to_blocks(_layer(filters=80), titan_v)
    assert (mapping.blocks, mapping.waves) == (80, 1)


def test_fixed_threads_per_block_mapping(titan_v):
    gpu = titan_v.model_copy(update={"mapping_policy": FixedThreadsPerBlock(threads_per_block=1024)})
    mapping = map_to_blocks(_layer(filters=100, in_h=64, in_w=64), gpu)
    assert mapping.blocks == 400
    assert mapping.waves == 5


def test_cycle_time(titan_v, unit_gpu, unit_layer):
    layer = _layer(filters=512, in_depth=512, in_h=64, in_w=64)
    assert per_block_cycle(layer, titan_v) == pytest.approx(4096 * 9216 / (14.9e12 / 80), rel=1e-12)
    assert per_block_cycle(layer, titan_v) == pytest.approx(2.03e-4, abs=5e-7)
    assert per_block_cycle(unit_layer(), unit_gpu) == 1.0


def test_batch_doubles_cycle_time(titan_v):
    single = per_block_cycle(_layer(batch=1), titan_v)
    assert per_block_cycle(_layer(batch=2), titan_v) == 2 * single


def test_latency_examples(unit_gpu, unit_layer):
    assert predict_latency(unit_layer(81), unit_gpu) == 2.0
    assert predict_latency(unit_layer(160), unit_gpu) == 2.0
    assert predict_latency(unit_layer(80), unit_gpu) == 1.0


def test_launch_overhead_is_added_once(unit_gpu, unit_layer):
    gpu = unit_gpu.model_copy(update={"launch_overhead_s": 0.25})
    assert predict_latency(unit_layer(161), gpu) == 3.25


def test_staircase_exactness(titan_v, conv512):
    latencies = [predict_latency(conv512.with_filters(f), titan_v) for f in range(1, 513)]

    assert len(set(latencies)) == 7
    jumps = [f for f in range(2, 513) if latencies[f - 1] != latencies[f - 2]]
    assert jumps == [81, 161, 241, 321, 401, 481]

    cycle = per_block_cycle(conv512, titan_v)
    for f in range(1, 513):
        # every width in ((k-1)S, kS] shares one bit-identical latency
        k = math.ceil(f / 80)
        assert latencies[f - 1] == latencies[80 * k - 1 if 80 * k <= 512 else 511]
        assert latencies[f - 1] == cycle * k


def test_latency_monotone_in_filters(titan_v):
    latencies = [predict_latency(_layer(filters=f), titan_v) for f in range(1, 300)]
    assert all(a <= b for a, b in zip(latencies, latencies[1:]))


@given(st.integers(min_value=1, max_value=1000), st.integers(min_value=1, max_value=1000))
@settings(max_examples=1000, deadline=None)
def test_waves_match_dealing_loop(blocks, sm_count):
    gpu = GpuSpec(name="gpu", sm_count=sm_count, peak_flops=1e12)
    assert map_to_blocks(_layer(filters=blocks), gpu).waves == _dealt_waves(blocks, sm_count)


def test_utilization_examples(titan_v):
    assert predict_utilization(_layer(filters=80), titan_v) == 1.0
    assert predict_utilization(_layer(filters=81), titan_v) == 0.50625
    # left edge of a step is less occupied than its right edge
    assert predict_utilization(_layer(filters=161), titan_v) < predict_utilization(_layer(filters=240), titan_v)


@given(st.integers(min_value=1, max_value=800), st.integers(min_value=1, max_value=120))
@settings(max_examples=300, deadline=None)
def test_utilization_bounds(blocks, sm_count):
    gpu = GpuSpec(name="gpu", sm_count=sm_count, peak_flops=1e12)
    u = predict_utilization(_layer(filters=blocks), gpu)
    assert 0 < u <= 1
    assert (u == 1.0) == (blocks % sm_count == 0)


@pytest.mark.parametrize("name", ["jetson-nano", "p6000", "titan-v"])
def test_peak_throughput_only_on_full_waves(name):
    from app.catalog import GPU_CATALOG

    gpu = GPU_CATALOG[name]
    target = gpu.peak_flops * gpu.efficiency
    for blocks in range(1, 3 * gpu.sm_count + 1):
        throughput = predict_throughput(_layer(filters=blocks), gpu)
        if blocks % gpu.sm_count == 0:
            assert math.isclose(throughput, target, rel_tol=1e-12)
        else:
            assert throughput < target


def test_single_block_gets_one_sm(unit_gpu, unit_layer):
    assert predict_throughput(unit_layer(1), unit_gpu) == 160.0 / 80


def test_throughput_rises_across_a_step(titan_v):
    assert predict_throughput(_layer(filters=161), titan_v) < predict_throughput(_layer(filters=240), titan_v)


def test_gpu_throughput_tracks_utilization(titan_v):
    layer = _layer(filters=81)
    assert predict_gpu_throughput(layer, titan_v) == pytest.approx(14.9e12 * 0.50625)
    assert predict_gpu_throughput(layer, titan_v) == pytest.approx(predict_throughput(layer, titan_v))


def test_depthwise_sweep_is_flatter(titan_v, conv512):
    gpu = titan_v.model_copy(update={"launch_overhead_s": 1e-5})
    depthwise = conv512.model_copy(update={"filter_style": "depthwise"})
    widths = range(1, 513)

    dense_curve = [predict_latency(conv512.with_filters(f), gpu) for f in widths]
    depthwise_curve = [predict_latency(depthwise.with_filters(f), gpu) for f in widths]
    assert staircase_flatness(depthwise_curve) < staircase_flatness(dense_curve)


def test_batch_sweep_raises_steps_not_count(titan_v):
    layer = _layer(filters=100)
    latencies = sweep_parameter(layer, titan_v, "batch", [1, 2, 4])
    assert latencies[1] == 2 * latencies[0]
    assert latencies[2] == 4 * latencies[0]
    assert map_to_blocks(layer.model_copy(update={"batch": 4}), titan_v).waves == 2


def test_sweep_rejects_non_numeric_fields(titan_v):
    with pytest.raises(ValueError):
        sweep_parameter(_layer(), titan_v, "filter_style", [1])
