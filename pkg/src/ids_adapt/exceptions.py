"""Exception hierarchy shared by every pipeline stage."""


class AdaptError(Exception):
    """Base class for all errors raised by ids_adapt."""


class ConfigurationError(AdaptError, ValueError):
    """Invalid architecture, hyperparameters or pipeline configuration."""


class ShapeError(AdaptError, ValueError):
    """Array dimensions do not match the model or mask."""


class DivergenceError(AdaptError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}: non-finite loss")


class EvaluationError(AdaptError, ValueError):
    """Metric requested on an empty or inconsistent evaluation set."""


class IngestionError(AdaptError, ValueError):
    """Raw data could not be turned into a usable dataset."""


class DataIOError(AdaptError, OSError):
    """A data file could not be read or written."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")


class BalanceError(AdaptError, ValueError):
    """Class balancing is impossible (a class has no samples)."""


class SelectionError(AdaptError, ValueError):
    """A category/split selection matched no rows."""


class SpecError(AdaptError, ValueError):
    """Malformed synthetic-data or fine-tuning specification."""


class RatioError(AdaptError, ValueError):
    """A feature or pruning ratio is outside its valid range."""


class PruneError(AdaptError):
    """Pruning would leave the network structurally invalid."""


class CatalogError(AdaptError):
    """Catalog index or artifact failed an integrity check."""
