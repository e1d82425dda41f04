"""Exception types shared across the package."""


class PromptSegError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PromptSegError):
    """Invalid configuration: unknown preset/mode, bad geometry, bad config keys."""


class InputError(PromptSegError):
    """Caller-supplied data violates an operation's preconditions."""


class CheckpointError(PromptSegError):
    """Checkpoint archive cannot be parsed or does not match the model."""


class DatasetError(PromptSegError):
    """Dataset directory is malformed (unpaired files, bad mask values, ...)."""
