"""Exception types shared across the pipeline."""
from __future__ import annotations


class TxLensError(Exception):
    """Base class for all operational errors."""


class SchemaError(TxLensError):
    """A document is missing a field or a field has the wrong type/value.

    ``path`` is a JSON path (``$.tx.gas_limit``) for trace documents and a
    bare field name (``risk``) for model replies.
    """

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)

    @property
    def field(self) -> str:
        return self.path


class ValidationError(TxLensError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class TransportError(TxLensError):
    """Network or external-tool failure. Retriable."""


class AdapterError(TxLensError):
    """An external tool produced output in a format we do not recognize."""


class NoJsonError(TxLensError):
    """A model reply contained no JSON object."""


class LoadError(TxLensError):
    def __init__(self, file: str, line: int | None, message: str):
        self.file = file
        self.line = line
        where = f"{file}:{line}" if line is not None else file
        super().__init__(f"{where}: {message}")


class ConfigError(TxLensError):
    pass


class ConsensusAbort(TxLensError):
    """Fewer than two models survived a consensus round."""
