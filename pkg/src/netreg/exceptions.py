"""Exception and warning classes raised by netreg."""

import numpy as np


class NetRegError(Exception):
    """Base class for all netreg errors."""


class InputError(NetRegError, ValueError):
    """Invalid user input (shapes, files, columns). Mapped to CLI exit code 2."""


class NumericalError(NetRegError, ArithmeticError):
    """A numerical condition prevents the computation. Mapped to CLI exit code 3."""


class RankDeficient(NumericalError, np.linalg.LinAlgError):
    pass


class DegenerateAngle(NumericalError):
    """An un-retained principal angle is (numerically) zero, so M^T M is singular."""


class BadPartition(NumericalError):
    pass


class DegreesOfFreedomExhausted(NumericalError):
    pass


class DegenerateDirection(NumericalError):
    """The requested contrast carries no identifiable signal."""


class SingularGammaCovariance(NumericalError):
    pass


class NoNetworkComponent(NumericalError):
    pass


class SingularSystem(NumericalError, np.linalg.LinAlgError):
    pass


class ConstraintViolation(NumericalError):
    pass


class EmptyCommunity(InputError):
    pass


class ZeroDegreeCommunity(InputError):
    pass


class IsolatedNodes(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class MissingColumn(InputError, KeyError):
    def __str__(self):
        # KeyError would quote the message
        return str(self.args[0]) if self.args else ""


class NonNumericResponse(InputError):
    pass


class EigenGapWarning(UserWarning):
    """Eigenvalues K and K+1 (nearly) coincide; the eigenspace is ill-defined."""


class IsolatedNodeWarning(UserWarning):
    pass


class ClampingWarning(UserWarning):
    pass


class UnreliableThresholdWarning(UserWarning):
    pass
