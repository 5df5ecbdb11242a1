"""shiftcodec: subshift presentations, sliding block codes, periodic-point
invariants, and zero-error embedding of a low-entropy source through a
finite-state channel, with machine-checked certificates and a stream codec.
"""

from .errors import (
    Budget,
    BudgetExceeded,
    ConstructionError,
    DecodeMismatch,
    EmptyShiftError,
    NotInLanguageError,
    NotSFTError,
    ShiftCodecError,
    SyncFailure,
    UsageError,
)
from .shifts import (
    Presentation,
    from_forbidden,
    higher_block,
    intersect,
    language_blocks,
    language_equal,
    markov_approximation,
    membership,
    structure,
    word,
    word_str,
)

__version__ = "0.1.0"
