"""Exception types shared across the pipeline."""


class DataError(ValueError):
    """Input data cannot be used (malformed, empty, inconsistent)."""


class MissingArtifactError(DataError):
    """A downstream step was started before the step producing its input."""

    def __init__(self, path, producer):
        self.path = path
        self.producer = producer
        super().__init__(f"missing artifact {path}; run `{producer}` first")
