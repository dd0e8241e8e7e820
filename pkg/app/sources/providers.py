import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from app.errors import ConfigurationError
from app.profile import generate_analytical_profile, load_empirical_profiles, parse_width_range
from app.schemas import GpuSpec, LayerSpec, ProfileTable
from app.sources.clients import ProfileSource

logger = logging.getLogger(__name__)


class AnalyticalProfileSource(ProfileSource):
    """Sweeps each layer through the GPU model."""

    def __init__(self, gpu: GpuSpec, widths: Optional[str] = None):
        self.gpu = gpu
        self.widths = widths
        self.notes: List[str] = []

    def table_for(self, layer: LayerSpec) -> ProfileTable:
        grid = parse_width_range(self.widths, layer.filters)
        return generate_analytical_profile(layer, self.gpu, grid)


class EmpiricalProfileSource(ProfileSource):
    """Measured tables read from a profile CSV, matched by layer_id."""

    def __init__(self, path: Union[str, Path]):
        self.path = str(path)
        self.tables: Dict[str, ProfileTable] = load_empirical_profiles(path)
        self.notes = []
        estimated = [lid for lid, t in self.tables.items() if t.utilization_estimated]
        if estimated:
            self.notes.append(
                f"{self.path}: utilization backfilled from normalized throughput for {', '.join(estimated)}"
            )
        logger.info("loaded profile=%s layers=%d", self.path, len(self.tables))

    def table_for(self, layer: LayerSpec) -> ProfileTable:
        table = self.tables.get(layer.layer_id)
        if table is None:
            raise ConfigurationError(f"{self.path} has no rows for layer {layer.layer_id}")
        return table.model_copy(update={"base_layer": layer})
