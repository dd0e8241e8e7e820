# app/profile.py
"""
Per-layer width sweeps and the tail-free candidate widths they reveal.

A profile table maps each measured (or modeled) width of a layer to latency,
FLOPs, SM utilization and throughput. Candidates are the widths where
utilization x throughput peaks locally: the right edges of the latency
staircase, where the last wave is full.
"""
import csv
import io
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Union

from pydantic import ValidationError

from app import config
from app.errors import InputError, ProfileParseError, ProfileSchemaError, ProfileValueError, ReconciliationError
from app.gpu_model import layer_flops, map_to_blocks, predict_latency, predict_utilization
from app.schemas import CandidateSet, GpuSpec, LayerSpec, ProfileRow, ProfileTable

logger = logging.getLogger(__name__)

PROFILE_FIELDS = ["layer_id", "width", "latency_s", "flops", "utilization"]
STAIRCASE_FIELDS = ["layer_id", "width", "blocks", "waves", "latency_s", "flops", "utilization", "throughput_flops"]
REQUIRED_FIELDS = ("layer_id", "width", "latency_s", "flops")

# scores this close are ties, broken toward the larger width
SCORE_REL_TOL = 1e-9


def parse_width_range(text: Optional[str], filters: int) -> List[int]:
    """
    Width grid from `start:end[:step]` or a single value. Every part may be a
    filter count or a percentage of `filters` (`10%:100%:10%`). No text means
    every width from 1 to `filters`.
    """
    if not text:
        return list(range(1, filters + 1))
    parts = text.split(":")
    if len(parts) not in (1, 2, 3) or not all(p.strip() for p in parts):
        raise InputError(f"bad width range {text!r}")

    def to_width(part: str) -> float:
        part = part.strip()
        try:
            if part.endswith("%"):
                return float(part[:-1]) * filters / 100.0
            return float(int(part))
        except ValueError:
            raise InputError(f"bad width {part!r} in range {text!r}") from None

    if len(parts) == 1:
        values = [to_width(parts[0])]
    else:
        start, end = to_width(parts[0]), to_width(parts[1])
        step = to_width(parts[2]) if len(parts) == 3 else 1.0
        if start > end:
            raise InputError(f"range start {parts[0]} is after end {parts[1]}")
        if step <= 0:
            raise InputError(f"range step must be positive in {text!r}")
        count = int(math.floor((end - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    widths = sorted({max(1, int(round(v))) for v in values})
    return widths


def _validate_widths(widths: Sequence[int]) -> None:
    if not widths:
        raise InputError("width list is empty")
    for prev, cur in zip(widths, widths[1:]):
        if cur <= prev:
            raise InputError(f"widths must be strictly increasing, got {prev} then {cur}")
    if widths[0] < 1:
        raise InputError(f"widths must be positive, got {widths[0]}")
    if widths[-1] > config.WIDTH_CAP:
        raise InputError(f"width {widths[-1]} exceeds cap {config.WIDTH_CAP}")


def generate_analytical_profile(layer: LayerSpec, gpu: GpuSpec, widths: Sequence[int]) -> ProfileTable:
    _validate_widths(widths)
    rows = []
    for width in widths:
        at_width = layer.with_filters(width)
        latency = predict_latency(at_width, gpu)
        flops = float(layer_flops(at_width))
        rows.append(
            ProfileRow(
                width=width,
                latency=latency,
                flops=flops,
                utilization=predict_utilization(at_width, gpu),
                throughput=flops / latency,
            )
        )
    logger.debug("analytical profile layer=%s gpu=%s rows=%d", layer.layer_id, gpu.name, len(rows))
    return ProfileTable(layer_id=layer.layer_id, base_layer=layer, rows=rows, source="analytical")


# --- CSV ---------------------------------------------------------------------

def write_profile_csv(fh: TextIO, tables: Iterable[ProfileTable]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PROFILE_FIELDS)
    for table in tables:
        for r in table.rows:
            writer.writerow([table.layer_id, r.width, repr(r.latency), repr(r.flops), repr(r.utilization)])


def write_staircase_csv(fh: TextIO, tables: Iterable[ProfileTable], gpu: GpuSpec) -> None:
    """Profile columns plus the block/wave view of each width."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(STAIRCASE_FIELDS)
    for table in tables:
        if table.base_layer is None:
            raise InputError(f"layer {table.layer_id}: staircase output needs layer geometry")
        for r in table.rows:
            mapping = map_to_blocks(table.base_layer.with_filters(r.width), gpu)
            writer.writerow([
                table.layer_id, r.width, mapping.blocks, mapping.waves,
                repr(r.latency), repr(r.flops), repr(r.utilization), repr(r.throughput),
            ])


def profile_csv_text(tables: Iterable[ProfileTable], gpu: Optional[GpuSpec] = None) -> str:
    buf = io.StringIO()
    if gpu is None:
        write_profile_csv(buf, tables)
    else:
        write_staircase_csv(buf, tables, gpu)
    return buf.getvalue()


def _parse_number(raw: str, kind, column: str, line: int):
    try:
        return kind(raw.strip())
    except ValueError:
        raise ProfileParseError(line, f"column {column}: cannot parse {raw!r} as {kind.__name__}") from None


def _read_groups(reader, header: List[str]) -> Dict[str, list]:
    col = {name: i for i, name in enumerate(header)}
    has_util = "utilization" in col
    has_tput = "throughput_flops" in col
    groups: Dict[str, list] = {}
    last_id = None
    for fields in reader:
        line = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ProfileParseError(line, f"expected {len(header)} fields, found {len(fields)}")
        layer_id = fields[col["layer_id"]].strip()
        if not layer_id:
            raise ProfileParseError(line, "empty layer_id")
        width = _parse_number(fields[col["width"]], int, "width", line)
        latency = _parse_number(fields[col["latency_s"]], float, "latency_s", line)
        flops = _parse_number(fields[col["flops"]], float, "flops", line)
        util = _parse_number(fields[col["utilization"]], float, "utilization", line) if has_util else None

        if width < 1:
            raise ProfileValueError(line, f"width must be positive, got {width}")
        if not latency > 0:
            raise ProfileValueError(line, f"latency must be positive, got {latency!r}")
        if not flops > 0:
            raise ProfileValueError(line, f"flops must be positive, got {flops!r}")
        if util is not None and not 0 < util <= 1:
            raise ProfileValueError(line, f"utilization must be in (0, 1], got {util!r}")
        throughput = flops / latency
        if has_tput:
            given = _parse_number(fields[col["throughput_flops"]], float, "throughput_flops", line)
            if not math.isclose(given, throughput, rel_tol=config.RECONCILE_REL_TOL):
                raise ReconciliationError(
                    line, f"throughput {given!r} disagrees with flops/latency {throughput!r}"
                )

        if layer_id != last_id and layer_id in groups:
            raise ProfileSchemaError(f"line {line}: rows for layer {layer_id} are not contiguous")
        last_id = layer_id
        rows = groups.setdefault(layer_id, [])
        if rows and width <= rows[-1][0]:
            raise ProfileSchemaError(
                f"line {line}: widths for layer {layer_id} must be strictly increasing "
                f"({rows[-1][0]} then {width})"
            )
        rows.append((width, latency, flops, util, throughput))
    return groups


def _build_table(layer_id: str, raw_rows: list, estimated: bool) -> ProfileTable:
    if estimated:
        peak = max(t for *_, t in raw_rows)
        raw_rows = [(w, l, f, t / peak, t) for w, l, f, _, t in raw_rows]
    try:
        rows = [
            ProfileRow(width=w, latency=l, flops=f, utilization=u, throughput=t)
            for w, l, f, u, t in raw_rows
        ]
        return ProfileTable(layer_id=layer_id, rows=rows, source="empirical", utilization_estimated=estimated)
    except ValidationError as e:
        raise ProfileSchemaError(f"layer {layer_id}: {e.errors()[0]['msg']}") from e


def read_profile_csv(fh: TextIO, source: str = "<profile>") -> Dict[str, ProfileTable]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise ProfileSchemaError(f"{source} is empty")
    header = [h.strip() for h in header]
    missing = [f for f in REQUIRED_FIELDS if f not in header]
    if missing:
        raise ProfileSchemaError(f"{source}: header is missing {', '.join(missing)}")
    groups = _read_groups(reader, header)
    if not groups:
        raise ProfileSchemaError(f"{source} has a header but no rows")

    estimated = "utilization" not in header
    if estimated:
        logger.warning("profile=%s has no utilization column; using normalized throughput", source)
    return {layer_id: _build_table(layer_id, rows, estimated) for layer_id, rows in groups.items()}


def load_empirical_profiles(path: Union[str, Path]) -> Dict[str, ProfileTable]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return read_profile_csv(fh, str(path))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e


def load_empirical_profile(path: Union[str, Path], layer_id: Optional[str] = None) -> ProfileTable:
    tables = load_empirical_profiles(path)
    if layer_id is None:
        if len(tables) != 1:
            raise ProfileSchemaError(f"{path} holds {len(tables)} layers; pick one of {', '.join(tables)}")
        return next(iter(tables.values()))
    if layer_id not in tables:
        raise ProfileSchemaError(f"{path} has no rows for layer {layer_id}")
    return tables[layer_id]


# --- candidates --------------------------------------------------------------

def _at_least(a: float, b: float) -> bool:
    return a >= b - SCORE_REL_TOL * max(abs(a), abs(b))


def identify_candidates(table: ProfileTable, m: int) -> CandidateSet:
    """
    Local maxima of U x T along the width grid, best `m` of them.

    A first or last row has one neighbour and nothing beyond it, so it only
    counts when it also reaches the table's best score. A grid that stops
    partway up a step therefore does not make its last width a candidate,
    while a monotone table still yields its peak end.
    """
    if m < 1:
        raise InputError(f"m must be at least 1, got {m}")
    rows = table.rows
    scores = [r.utilization * r.throughput for r in rows]
    n = len(rows)
    best = max(scores)
    maxima = [
        i for i in range(n)
        if (i == 0 or _at_least(scores[i], scores[i - 1]))
        and (i == n - 1 or _at_least(scores[i], scores[i + 1]))
        and (0 < i < n - 1 or _at_least(scores[i], best))
    ]
    ranked = sorted(maxima, key=lambda i: (-round(scores[i] / best, 9), -rows[i].width))
    chosen = sorted(ranked[:m], key=lambda i: rows[i].width)
    return CandidateSet(
        layer_id=table.layer_id,
        candidates=[rows[i].width for i in chosen],
        scores=[scores[i] for i in chosen],
        m=m,
    )
