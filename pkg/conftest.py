import json

import pytest

from app.catalog import GPU_CATALOG
from app.files import parse_model
from app.schemas import GpuSpec, LayerSpec

# 13 conv layers of a CIFAR-sized VGG16: (filters, input side, input depth)
VGG16_SHAPES = [
    (64, 32, 3), (64, 32, 64),
    (128, 16, 64), (128, 16, 128),
    (256, 8, 128), (256, 8, 256), (256, 8, 256),
    (512, 4, 256), (512, 4, 512), (512, 4, 512),
    (512, 2, 512), (512, 2, 512), (512, 2, 512),
]

# Current widths sit off the wave boundaries of a 30-SM GPU: the first four
# layers spill 8 filters into a second wave, the rest stop 4 short of a full one.
VGG16_WIDTHS = [38, 38, 38, 38, 116, 116, 116, 386, 386, 386, 386, 386, 386]


def vgg16_payload():
    return {
        "name": "vgg16-cifar",
        "layers": [
            {"layer_id": f"conv{i + 1}", "filters": f, "in_depth": d, "in_h": h, "in_w": h, "width": w}
            for i, ((f, h, d), w) in enumerate(zip(VGG16_SHAPES, VGG16_WIDTHS))
        ],
    }


@pytest.fixture
def unit_gpu():
    """80 SMs, and a 1x1x1 layer on one output cell takes exactly 1 s per wave."""
    return GpuSpec(name="unit", sm_count=80, peak_flops=160.0)


@pytest.fixture
def unit_layer():
    def make(filters: int = 160, layer_id: str = "conv") -> LayerSpec:
        return LayerSpec(layer_id=layer_id, filters=filters, kernel_h=1, kernel_w=1, in_depth=1, in_h=1, in_w=1)
    return make


@pytest.fixture
def titan_v():
    return GPU_CATALOG["titan-v"]


@pytest.fixture
def p6000():
    return GPU_CATALOG["p6000"]


@pytest.fixture
def conv512():
    """3x3x512 dense layer on a 64x64 input."""
    return LayerSpec(layer_id="conv512", filters=512, in_depth=512, in_h=64, in_w=64)


@pytest.fixture
def vgg_payload():
    return vgg16_payload()


@pytest.fixture
def vgg_model():
    return parse_model(vgg16_payload())


@pytest.fixture
def vgg_model_file(tmp_path):
    path = tmp_path / "vgg16.json"
    path.write_text(json.dumps(vgg16_payload()))
    return path


@pytest.fixture
def write_json(tmp_path):
    def write(name: str, payload) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)
    return write
