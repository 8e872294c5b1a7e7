"""Exception hierarchy shared by every module of the package."""


class MetarepError(Exception):
    """Base class for all errors raised by metarep."""


# linear algebra
class NonSquare(MetarepError, ValueError):
    pass


class AsymmetryTooLarge(MetarepError, ValueError):
    pass


class ConvergenceFailure(MetarepError, RuntimeError):
    pass


class RankDeficient(MetarepError, ValueError):
    pass


# data generation / moments
class OddSampleCount(MetarepError, ValueError):
    pass


class EmptyDataset(MetarepError, ValueError):
    pass


class MixedTaskKinds(MetarepError, ValueError):
    pass


# subspace
class RankOutOfRange(MetarepError, ValueError):
    pass


class DimensionMismatch(MetarepError, ValueError):
    pass


class GapViolated(MetarepError, ValueError):
    """The Davis-Kahan precondition fails, so the check is vacuous."""


# few-shot
class NonFiniteLoss(MetarepError, FloatingPointError):
    pass


# mnist
class BadMagic(MetarepError, ValueError):
    pass


class TruncatedPayload(MetarepError, ValueError):
    pass


class InsufficientSamples(MetarepError, ValueError):
    pass


class DuplicatePair(MetarepError, ValueError):
    pass


# reporting
class EmptyRecords(MetarepError, ValueError):
    pass
