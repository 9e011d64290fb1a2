"""Exception hierarchy. Each category maps to a CLI exit code."""


class HybridTradeError(Exception):
    exit_code = 1


class ConfigError(HybridTradeError):
    exit_code = 2


class DataError(HybridTradeError):
    exit_code = 3


class MissingArtifactError(DataError):
    """An upstream pipeline artifact is absent."""

    def __init__(self, path, producer):
        self.path = path
        self.producer = producer
        super().__init__(f"missing artifact {path}: run {producer} first")


class NumericError(HybridTradeError):
    exit_code = 4
