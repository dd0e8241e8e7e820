from app.sources.clients import ProfileSource
from app.sources.providers import AnalyticalProfileSource, EmpiricalProfileSource

__all__ = ["ProfileSource", "AnalyticalProfileSource", "EmpiricalProfileSource"]
