"""Exception and warning types shared across the package."""


class DDStabError(Exception):
    """Base class for every error raised by this package."""


class InputError(DDStabError, ValueError):
    """Malformed or inconsistent input: bad shapes, non-finite values, bad files."""


class InvalidOrderError(InputError):
    """Requested block-window order exceeds the available signal length."""


class DivergenceError(DDStabError, RuntimeError):
    """Simulation produced a non-finite state.

    Attributes:
        first_bad_index: time index of the first non-finite state.
    """

    def __init__(self, message: str, first_bad_index: int):
        super().__init__(message)
        self.first_bad_index = first_bad_index


class ExcitationError(DDStabError, RuntimeError):
    """Failed to produce a persistently exciting input after bounded retries."""


class GammaUndefinedError(DDStabError, RuntimeError):
    """No finite residual-dominance bound exists (X1 is row-rank deficient)."""


class OracleRequiredError(DDStabError, RuntimeError):
    """Operation needs residual data (D0) that only oracle mode provides."""


class ExtractionError(DDStabError, RuntimeError):
    """Gain extraction failed: X0 @ Q is singular or too ill-conditioned."""


class DataRankWarning(UserWarning):
    """Data fail the row-rank requirement; the design will likely be degenerate."""
