from typing import Dict, Iterable, List

from app.schemas import LayerSpec, ModelConfig, ProfileTable


class ProfileSource:
    """Where per-layer profile tables come from."""

    notes: List[str]

    def table_for(self, layer: LayerSpec) -> ProfileTable:
        raise NotImplementedError

    def tables_for(self, layers: Iterable[LayerSpec]) -> Dict[str, ProfileTable]:
        return {layer.layer_id: self.table_for(layer) for layer in layers}

    def tables_for_model(self, model: ModelConfig) -> Dict[str, ProfileTable]:
        return self.tables_for(entry.layer for entry in model.layers)
