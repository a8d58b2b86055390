"""Exception hierarchy shared across the package."""


class ComorphError(Exception):
    """Base class for all package errors."""


# --- design space ---------------------------------------------------------

class MalformedSpec(ComorphError):
    """Design-space spec file could not be parsed or has the wrong shape."""


class InvalidBounds(ComorphError):
    """A dimension has lower >= upper, or a non-positive lower bound."""


class DimensionMismatch(ComorphError):
    """A vector does not match the expected dimensionality."""


# --- MJCF -----------------------------------------------------------------

class MjcfParseError(ComorphError):
    """XML parse failure; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedConstruct(ComorphError):
    """Document uses an XML construct outside the supported subset."""


class MissingBinding(ComorphError):
    """A design-space link has no target element in the link map."""


class MissingAttribute(ComorphError):
    """Target element lacks the attribute to scale and injection is off."""


# --- optimizers -----------------------------------------------------------

class NotReady(ComorphError):
    """ask() called while the optimizer is waiting for a full-batch tell()."""


class LengthMismatch(ComorphError):
    """tell() received point and score sequences of different lengths."""


class SingularGram(ComorphError):
    """GP Gram matrix stayed singular after jitter escalation."""


class UnknownFunction(ComorphError):
    """Benchmark function name not in the registry."""


# --- simulator ------------------------------------------------------------

class UnmappedLink(ComorphError):
    """MorphParams references a link the planar model does not expose."""


class NumericalBlowup(ComorphError):
    """Simulation state left the sane range; episode must be aborted."""


# --- co-design loop -------------------------------------------------------

class EvaluatorFailure(ComorphError):
    """A morphology evaluation failed; the sample is discarded."""


class CheckpointCorrupt(ComorphError):
    """Persisted run state cannot be loaded for resume."""


class IncompleteTable(ComorphError):
    """Return table misses a lattice entry needed by the decomposition."""


class DegenerateImprovement(ComorphError):
    """Total improvement is non-positive; contribution shares undefined."""


class ConfigError(ComorphError):
    """Run configuration file is malformed or inconsistent."""
