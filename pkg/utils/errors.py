"""Exception types raised by the PCNN simulator, twin and tooling."""

from typing import List, Optional


class PcnnError(Exception):
    """Base class for every error raised by this package."""


class TopologyError(PcnnError, ValueError):
    """A mesh or network topology cannot be built."""


class DimensionError(PcnnError, ValueError):
    """An optical field, patch or feature map has the wrong shape."""


class LayoutError(PcnnError, ValueError):
    """A phase vector does not match the parameter layout."""


class InputError(PcnnError, ValueError):
    """Raw input data is out of range."""


class ConfigError(PcnnError, ValueError):
    """Configuration is invalid."""


class IdxParseError(PcnnError, ValueError):
    """An IDX file is malformed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointError(PcnnError, ValueError):
    """A phase checkpoint is malformed."""


class NumericError(PcnnError, RuntimeError):
    """A non-finite value appeared inside the network."""

    def __init__(self, layer: str, detail: str = "non-finite values"):
        super().__init__(f"{detail} in layer {layer}")
        self.layer = layer


class TrainingDiverged(PcnnError, RuntimeError):
    """Pre-training produced a NaN loss."""

    def __init__(self, message: str, records: Optional[List] = None):
        super().__init__(message)
        self.records = list(records or [])
