"""Exception hierarchy. Every error a lab operation raises is a ``LabError``."""


class LabError(ValueError):
    """Base class for all laboratory errors."""


# ── Geometry ──────────────────────────────────────────────
class InvalidDomain(LabError):
    pass


class LengthMismatch(LabError):
    pass


class ExponentTooSmall(LabError):
    pass


# ── Spectral models ───────────────────────────────────────
class IncompatibleModel(LabError):
    pass


class EigenFailure(LabError):
    pass


class ScaleNonpositive(LabError):
    pass


class ScaleOrderViolation(LabError):
    pass


# ── Multipliers ───────────────────────────────────────────
class NotEven(LabError):
    pass


class NotDecaying(LabError):
    pass


class TauberianGapUncovered(LabError):
    pass


# ── Weights ───────────────────────────────────────────────
class InvalidP(LabError):
    pass


class HypothesisViolated(LabError):
    pass


# ── Square functions ──────────────────────────────────────
class EmptyRange(LabError):
    pass


class GridMismatch(LabError):
    pass


class NonpositiveLambda(LabError):
    pass


class NonpositiveSigma(LabError):
    pass


# ── Equivalence lab ───────────────────────────────────────
class BandLimitExceeded(LabError):
    pass


class EmptyCorpus(LabError):
    pass


class ProfileNotAdmissible(LabError):
    pass


# ── CLI / reporting ───────────────────────────────────────
class ConfigInvalid(LabError):
    """Config problems. ``diagnostics`` holds ``(field_path, message)`` pairs."""

    def __init__(self, message: str, diagnostics: list[tuple[str, str]] | None = None):
        self.diagnostics = list(diagnostics or [])
        if self.diagnostics:
            detail = "; ".join(f"{path}: {msg}" for path, msg in self.diagnostics)
            message = f"{message} ({detail})"
        super().__init__(message)


class IoFailure(LabError):
    pass
