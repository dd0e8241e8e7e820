# app/errors.py
from typing import Optional


class TailTrimError(Exception):
    """Base class for everything this package raises on purpose."""


class InputError(TailTrimError):
    """Bad user input: spec files, profiles, parameters. CLI exit code 2."""


class SpecError(InputError):
    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ProfileParseError(InputError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ProfileSchemaError(InputError):
    pass


class ProfileValueError(InputError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ReconciliationError(ProfileValueError):
    pass


class WidthLookupError(InputError, KeyError):
    def __init__(self, layer_id: str, width: int):
        self.layer_id = layer_id
        self.width = width
        super().__init__(f"layer {layer_id}: width {width} is not in the profile")

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return self.args[0]


class ConfigurationError(InputError):
    """Missing profile tables or width coverage for an optimization run."""


class SearchSpaceError(InputError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"search space of {size} assignments exceeds cap {cap}")
