# app/catalog.py
from pathlib import Path
from typing import Dict, Union

from app.errors import SpecError
from app.files import read_json, validate
from app.schemas import BlockPerFilter, FixedThreadsPerBlock, GpuSpec, MappingPolicy

# Published SM counts and FP32 peaks. The Jetson Nano's single 128-core unit
# is modeled as one SM.
GPU_CATALOG: Dict[str, GpuSpec] = {
    "titan-v": GpuSpec(name="Titan-V", sm_count=80, peak_flops=14.9e12),
    "p6000": GpuSpec(name="Quadro P6000", sm_count=30, peak_flops=12.0e12),
    "jetson-nano": GpuSpec(name="Jetson Nano", sm_count=1, peak_flops=0.24e12),
}


def parse_policy(text: str) -> MappingPolicy:
    """`block-per-filter` or `fixed:<threads_per_block>`."""
    if text == "block-per-filter":
        return BlockPerFilter()
    if text.startswith("fixed:"):
        try:
            threads = int(text.split(":", 1)[1])
        except ValueError:
            raise SpecError(f"bad thread count in {text!r}", field="policy") from None
        if threads < 1:
            raise SpecError("threads per block must be positive", field="policy")
        return FixedThreadsPerBlock(threads_per_block=threads)
    raise SpecError(f"unknown policy {text!r}", field="policy")


def resolve_gpu(ref: Union[GpuSpec, str], policy: Union[str, None] = None, files: bool = True) -> GpuSpec:
    """Catalog name, path to a JSON spec file (unless `files` is off), or an already-built spec."""
    if isinstance(ref, GpuSpec):
        gpu = ref
    elif ref.lower() in GPU_CATALOG:
        gpu = GPU_CATALOG[ref.lower()]
    elif not files:
        raise SpecError(f"{ref!r} is not a catalog GPU ({', '.join(GPU_CATALOG)})", field="gpu")
    elif Path(ref).suffix.lower() == ".json" or Path(ref).exists():
        gpu = validate(GpuSpec, read_json(ref), ref)
    else:
        raise SpecError(f"{ref!r} is neither a catalog GPU ({', '.join(GPU_CATALOG)}) nor a spec file", field="gpu")
    if policy:
        gpu = gpu.model_copy(update={"mapping_policy": parse_policy(policy)})
    return gpu
