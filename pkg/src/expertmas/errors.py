"""Exception hierarchy for the classification kernel."""


class KernelError(Exception):
    """Base class for every error raised by this package."""


class DuplicateFeatureError(KernelError):
    pass


class UnknownFeatureError(KernelError, KeyError):
    pass


class IllegalPromotionError(KernelError):
    """A D-region feature was promoted straight to K."""


class RegionError(KernelError):
    """Operation required the feature to sit in a particular region."""


class EmptyQueryError(KernelError, ValueError):
    pass


class OverlapError(KernelError):
    def __init__(self, feature, first, second):
        super().__init__(
            f"feature {feature!r} is a base feature of both {first!r} and {second!r}"
        )
        self.feature = feature
        self.classes = (first, second)


class DuplicateClassError(KernelError):
    pass


class DuplicateSessionError(KernelError):
    pass


class StaleStateError(KernelError):
    """A protocol reply arrived for a session that is not expecting it."""


class ConfigError(KernelError, ValueError):
    pass


class CorpusError(KernelError, ValueError):
    pass


class SnapshotError(KernelError):
    pass


class SnapshotVersionError(SnapshotError):
    pass
