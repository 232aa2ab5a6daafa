"""Exception hierarchy shared across the package.

Plain precondition violations (bad argument values, out-of-range queries)
raise ValueError; the classes below mark *scientific* failures that a caller
may want to branch on, e.g. a shooting iteration that did not converge or a
bisection bracket whose endpoints do not straddle the threshold.
"""


class WavemapsError(Exception):
    """Base class for scientific failures."""


class InvalidStateError(WavemapsError):
    """A field state contains NaN/Inf samples."""


class DegreeError(WavemapsError):
    """Boundary value is not close to an integer multiple of pi."""


class BlownShotError(WavemapsError):
    """A trial shooting trajectory left the admissible corridor."""

    def __init__(self, rho, value):
        super().__init__(f"|f| exceeded 10 at rho={rho:.6g} (f={value:.6g})")
        self.rho = rho
        self.value = value


class ShootingError(WavemapsError):
    """Root-find for a shooting problem diverged or found the wrong branch."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EvolutionError(WavemapsError):
    """Numerical instability (NaN/Inf) not attributable to physical blowup."""


class BracketError(WavemapsError):
    """Bisection endpoints do not classify as (Disperse, Blowup)."""


class UndecidedError(WavemapsError):
    """A run could not be classified within its budget."""
