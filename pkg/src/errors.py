"""
Exception hierarchy shared by all layerlight packages
"""


class LayerlightError(Exception):
    """Base class for errors the CLI reports as runtime failures"""


class InputValidationError(LayerlightError, ValueError):
    """Value, range, shape or index violation on an input"""


class CheckpointError(LayerlightError):
    """Corrupt, truncated or incompatible checkpoint container"""


class TrainingDivergedError(LayerlightError, RuntimeError):
    """Loss became NaN or Inf during optimization"""


class UntrainedModelError(LayerlightError):
    """A model with no recorded training steps was used where a trained one is required"""


class OutputExistsError(LayerlightError, FileExistsError):
    """Refusing to overwrite an existing artifact without --force"""


class EmptySplitError(LayerlightError):
    """Requested dataset split has no scenes"""


class TargetMissedError(LayerlightError):
    """A reproduction finished but its benchmark fell short of the accuracy targets"""
