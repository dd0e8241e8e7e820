import io
import math

import pytest
from hypothesis import given, settings, strategies as st

from app.errors import (
    InputError, ProfileParseError, ProfileSchemaError, ProfileValueError, ReconciliationError, WidthLookupError,
)
from app.profile import (
    generate_analytical_profile, identify_candidates, load_empirical_profile, parse_width_range,
    profile_csv_text, read_profile_csv,
)
from app.schemas import GpuSpec, LayerSpec, ProfileRow, ProfileTable


def _csv(text: str):
    return read_profile_csv(io.StringIO(text), "test.csv")


def _table(rows, layer_id="conv"):
    return ProfileTable(
        layer_id=layer_id,
        source="empirical",
        rows=[ProfileRow(width=w, latency=l, flops=f, utilization=u, throughput=f / l) for w, l, f, u in rows],
    )


def test_width_range_forms():
    assert parse_width_range("64:512", 512) == list(range(64, 513))
    assert parse_width_range("1:512:8", 512)[:3] == [1, 9, 17]
    assert parse_width_range("80", 512) == [80]
    assert parse_width_range(None, 5) == [1, 2, 3, 4, 5]

    percents = parse_width_range("10%:100%:10%", 512)
    assert len(percents) == 10
    assert percents[0] == 51
    assert percents[-1] == 512


@pytest.mark.parametrize("text", ["a:b", "512:64", "1:10:0", "1:2:3:4", ":10"])
def test_width_range_rejects(text):
    with pytest.raises(InputError):
        parse_width_range(text, 512)


def test_analytical_profile_shape(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, parse_width_range("10%:100%:10%", 512))
    latencies = [r.latency for r in table.rows]
    assert table.source == "analytical"
    assert table.base_layer == conv512
    assert all(a <= b for a, b in zip(latencies, latencies[1:]))
    assert len(set(latencies)) < len(latencies)


def test_analytical_profile_full_waves(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, [80, 160, 240])
    assert [r.utilization for r in table.rows] == [1.0, 1.0, 1.0]

    single = generate_analytical_profile(conv512, titan_v, [100])
    assert single.widths == [100]


@pytest.mark.parametrize("widths", [[], [10, 10], [20, 10], [0, 1], [1, 5000]])
def test_analytical_profile_rejects_widths(titan_v, conv512, widths):
    with pytest.raises(InputError):
        generate_analytical_profile(conv512, titan_v, widths)


def test_unknown_width_lookup(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, [80, 160])
    with pytest.raises(WidthLookupError) as exc:
        table.latency(100)
    assert "width 100" in str(exc.value)


def test_csv_round_trip_is_exact(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, list(range(1, 200, 7)))
    for text in (profile_csv_text([table]), profile_csv_text([table], titan_v)):
        loaded = _csv(text)["conv512"]
        assert loaded.rows == table.rows
        assert loaded.source == "empirical"
        assert not loaded.utilization_estimated


def test_well_formed_csv():
    tables = _csv(
        "layer_id,width,latency_s,flops,utilization\n"
        "a,1,0.5,1.0,0.5\n"
        "a,2,0.5,2.0,1.0\n"
        "a,3,1.0,3.0,0.75\n"
        "b,8,1.0,4.0,1.0\n"
    )
    assert list(tables) == ["a", "b"]
    assert tables["a"].widths == [1, 2, 3]
    assert tables["a"].row(2).throughput == 4.0


def test_zero_latency_is_a_value_error():
    with pytest.raises(ProfileValueError) as exc:
        _csv("layer_id,width,latency_s,flops\na,1,0.5,1.0\na,2,0,2.0\n")
    assert exc.value.line == 3


def test_utilization_out_of_range():
    with pytest.raises(ProfileValueError):
        _csv("layer_id,width,latency_s,flops,utilization\na,1,0.5,1.0,1.5\n")


def test_unparseable_row_names_its_line():
    with pytest.raises(ProfileParseError) as exc:
        _csv("layer_id,width,latency_s,flops\na,1,0.5,1.0\na,two,0.5,2.0\n")
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_short_row_is_a_parse_error():
    with pytest.raises(ProfileParseError):
        _csv("layer_id,width,latency_s,flops\na,1,0.5\n")


@pytest.mark.parametrize("text", [
    "layer_id,width,latency_s,flops\na,2,0.5,1.0\na,1,0.5,1.0\n",
    "layer_id,width,latency_s,flops\na,1,0.5,1.0\nb,1,0.5,1.0\na,2,0.5,1.0\n",
    "layer_id,width,flops\na,1,1.0\n",
    "layer_id,width,latency_s,flops\n",
    "",
])
def test_schema_errors(text):
    with pytest.raises(ProfileSchemaError):
        _csv(text)


def test_throughput_must_reconcile():
    with pytest.raises(ReconciliationError):
        _csv("layer_id,width,latency_s,flops,throughput_flops\na,1,0.5,1.0,2.2\n")
    assert _csv("layer_id,width,latency_s,flops,throughput_flops\na,1,0.5,1.0,2.0000000001\n")


def test_missing_utilization_is_backfilled():
    table = _csv(
        "layer_id,width,latency_s,flops\n"
        "a,1,1.0,1.0\n"
        "a,2,1.0,2.0\n"
        "a,3,2.0,3.0\n"
    )["a"]
    assert table.utilization_estimated
    assert [r.utilization for r in table.rows] == [0.5, 1.0, 0.75]


def test_load_single_layer_from_file(tmp_path):
    path = tmp_path / "profile.csv"
    path.write_text("layer_id,width,latency_s,flops\na,1,1.0,1.0\nb,1,1.0,1.0\n")
    assert load_empirical_profile(path, "b").layer_id == "b"
    with pytest.raises(ProfileSchemaError):
        load_empirical_profile(path)
    with pytest.raises(InputError):
        load_empirical_profile(tmp_path / "missing.csv")


def test_candidates_on_full_sweep(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, list(range(1, 513)))
    assert identify_candidates(table, 5).candidates == [160, 240, 320, 400, 480]
    assert identify_candidates(table, 1).candidates == [480]
    assert identify_candidates(table, 5) == identify_candidates(table, 5)


def test_candidates_mark_right_edges_of_five_steps():
    # five 4-filter steps, each wave costing 1 ms
    rows = []
    for w in range(1, 21):
        waves = math.ceil(w / 4)
        rows.append((w, waves * 1e-3, w * 1e6, w / (waves * 4)))
    result = identify_candidates(_table(rows), 5)
    assert result.candidates == [4, 8, 12, 16, 20]
    assert len(result.scores) == 5


def test_monotone_scores_give_the_last_width():
    rows = [(w, 1.0, float(w), w / 10) for w in range(1, 11)]
    assert identify_candidates(_table(rows), 5).candidates == [10]


def test_candidates_beat_their_neighbours(p6000):
    layer = LayerSpec(layer_id="conv", filters=256, in_depth=128, in_h=8, in_w=8)
    table = generate_analytical_profile(layer, p6000, list(range(1, 257, 3)))
    scores = {r.width: r.utilization * r.throughput for r in table.rows}
    widths = table.widths
    for c in identify_candidates(table, 10).candidates:
        i = widths.index(c)
        for j in (i - 1, i + 1):
            if 0 <= j < len(widths):
                assert scores[c] >= scores[widths[j]] * (1 - 1e-9)


def test_candidates_reject_m_zero(titan_v, conv512):
    table = generate_analytical_profile(conv512, titan_v, [80])
    with pytest.raises(InputError):
        identify_candidates(table, 0)


def test_grid_end_off_a_wave_boundary_is_not_a_candidate(titan_v, conv512, unit_gpu, unit_layer):
    table = generate_analytical_profile(conv512, titan_v, list(range(1, 513)))
    assert identify_candidates(table, 10).candidates == [80, 160, 240, 320, 400, 480]

    short = generate_analytical_profile(unit_layer(100), unit_gpu, list(range(1, 101)))
    assert identify_candidates(short, 5).candidates == [80]


def test_grid_starting_on_a_wave_boundary_keeps_it(unit_gpu, unit_layer):
    table = generate_analytical_profile(unit_layer(200), unit_gpu, list(range(80, 201)))
    assert identify_candidates(table, 5).candidates == [80, 160]


def test_falling_scores_give_the_first_width():
    rows = [(w, float(w), 1.0, 1 / w) for w in range(1, 6)]
    assert identify_candidates(_table(rows), 5).candidates == [1]


@st.composite
def wave_grids(draw):
    sm_count = draw(st.integers(min_value=1, max_value=64))
    step = draw(st.sampled_from([d for d in range(1, sm_count + 1) if sm_count % d == 0]))
    # the grid holds at least one full-wave width and may stop anywhere past it
    full = draw(st.integers(min_value=1, max_value=6)) * sm_count
    start = draw(st.integers(min_value=1, max_value=full // step)) * step
    end = full + draw(st.integers(min_value=0, max_value=2 * sm_count))
    return sm_count, list(range(start, end + 1, step))


@given(wave_grids())
@settings(max_examples=100, deadline=None)
def test_analytical_candidates_are_full_waves(grid):
    sm_count, widths = grid
    gpu = GpuSpec(name="gpu", sm_count=sm_count, peak_flops=1e13)
    layer = LayerSpec(layer_id="conv", filters=widths[-1], in_depth=16, in_h=4, in_w=4)
    table = generate_analytical_profile(layer, gpu, widths)

    result = identify_candidates(table, len(widths))
    assert result.candidates == [w for w in widths if w % sm_count == 0]
