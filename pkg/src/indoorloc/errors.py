"""Exception types shared across the package."""


class DegenerateQuaternionError(ValueError):
    """Quaternion norm too close to zero to normalize."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class CapacityError(RuntimeError):
    """An operation would exceed a configured resource cap."""


class DatasetError(RuntimeError):
    """Dataset read or write failure."""


class EmptyDatasetError(DatasetError):
    """Dataset generation produced no samples."""


class RegistryError(RuntimeError):
    """Model registry is missing a component required for inference."""
