"""Exception hierarchy and resource budgets shared across the package.

Exit-code convention used by the CLI:
  0  success / positive verdict
  1  domain failure or negative verdict (raised as ShiftCodecError)
  2  usage error (bad arguments, malformed input)
  3  resource budget exceeded
"""

from dataclasses import dataclass


class ShiftCodecError(Exception):
    """Base class for domain errors.  CLI maps these to exit code 1."""

    exit_code = 1


class UsageError(ShiftCodecError):
    """Malformed input or bad arguments.  CLI exit code 2."""

    exit_code = 2


class BudgetExceeded(ShiftCodecError):
    """A computation hit its resource budget.  CLI exit code 3."""

    exit_code = 3


class EmptyShiftError(ShiftCodecError):
    """Operation needs a nonempty subshift."""


class NotSFTError(ShiftCodecError):
    """Operation needs a faithful SFT presentation."""


class NotInLanguageError(ShiftCodecError):
    """A word or point fails membership where membership is required."""


class WindowTooShort(ShiftCodecError):
    """Input word shorter than the code's window."""


class UndefinedWindow(NotInLanguageError):
    """A window fell outside the code's declared domain."""


class NoPreimageError(ShiftCodecError):
    """No lift with the required properties exists."""


class SyncFailure(ShiftCodecError):
    """Decoder could not localize enough marker stamps to synchronize."""


class DecodeMismatch(ShiftCodecError):
    """Decoded content fails the re-encode consistency check."""


class ConstructionError(ShiftCodecError):
    """A constructive step could not certify its own postcondition."""


class StampNotFound(ConstructionError):
    """Stamp search exhausted its length budget without a verified stamp."""


class StampInvalid(ConstructionError):
    """A stamp handed to a construction fails re-verification."""


class NoSynchronizingWord(ConstructionError):
    """No synchronizing word found within the search budget."""


class NoExcludablePoint(ConstructionError):
    """No periodic point of the image avoids the given sub-sofic shift."""


class ParameterSearchExhausted(ConstructionError):
    """Counting parameter search hit its cap without satisfying the
    required inequalities."""


class NotLocallyPeriodic(ShiftCodecError):
    """A word fails the local-periodicity hypothesis for periodic extension."""


class NotConjugateError(ShiftCodecError):
    """A claimed conjugacy failed its round-trip verification."""


class CountingHypothesisError(ShiftCodecError):
    """An exact counting inequality required by a construction is violated."""


@dataclass
class Budget:
    """Soft resource limits for enumerative routines.

    max_words bounds the number of words any single enumeration may
    visit; max_states bounds determinization / product constructions.
    """

    max_words: int = 10_000_000
    max_states: int = 65536

    def charge_words(self, n: int, context: str = "") -> None:
        if n > self.max_words:
            raise BudgetExceeded(
                f"word enumeration needs {n} > {self.max_words} words"
                + (f" ({context})" if context else "")
            )

    def charge_states(self, n: int, context: str = "") -> None:
        if n > self.max_states:
            raise BudgetExceeded(
                f"state construction needs {n} > {self.max_states} states"
                + (f" ({context})" if context else "")
            )


DEFAULT_BUDGET = Budget()
