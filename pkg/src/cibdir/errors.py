"""Exception types shared across the package."""


class CibError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBounds(CibError):
    """A read or write falls outside the region."""


class MisalignedAtomic(CibError):
    """Atomic 64-bit access at a non-8-byte-aligned offset."""


class OutOfSpace(CibError):
    """Region capacity exhausted."""


class SimulatedCrash(CibError):
    """Raised by a persist barrier designated as a crash point.

    The region snapshot taken at the barrier is available in
    ``region.snapshots``; the in-flight operation must be abandoned.
    """


class EmptyName(CibError):
    pass


class NameTooLong(CibError):
    pass


class CorruptRecord(CibError):
    """A name-heap record fails validation."""


class BlockFull(CibError):
    """No free dentry slot left in a directory block."""


class SlotNotValid(CibError):
    """Operation on a slot whose validity bit is clear."""


class NotFound(CibError):
    """The requested filename does not exist in the directory."""


class AlreadyExists(CibError):
    """Create of a filename that is already present."""


class UnsplittableBlock(CibError):
    """A full block whose dentries all share one hash key cannot be divided."""


class CorruptLayout(CibError):
    """Recovery could not restore the range-partition invariant."""


class OracleMismatch(CibError):
    """A benchmark operation disagreed with the shadow oracle."""
