"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class MarrowCellError(Exception):
    exit_code = 1


class ConfigError(MarrowCellError, ValueError):
    exit_code = 2


class TaxonomyError(ConfigError):
    pass


class DataError(MarrowCellError):
    exit_code = 3


class EmptyDatasetError(DataError):
    pass


class ImageDecodeError(DataError):
    def __init__(self, path, reason: str):
        super().__init__(f"cannot decode image {path}: {reason}")
        self.path = path


class UndefinedMetricError(DataError, ValueError):
    pass


class TrainingError(MarrowCellError):
    exit_code = 4


class ModelInitError(TrainingError):
    pass


class TrainingDivergedError(TrainingError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


class CheckpointError(TrainingError):
    pass


class StorageError(MarrowCellError, OSError):
    exit_code = 5


class ManifestError(StorageError):
    pass


class BatchShapeError(DataError, ValueError):
    pass
