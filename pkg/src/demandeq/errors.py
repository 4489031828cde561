"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from
:class:`DemandeqError` so the command-line driver can report a structured
message (module, exception type, cause) and exit non-zero.
"""


class DemandeqError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateCrossSectionError(DemandeqError):
    """A cross-section has too few observations to rank-normalize."""


class EquilibriumIllPosedError(DemandeqError):
    """Aggregate log-price demand slope is not negative; clearing is invalid."""


class PanelAlignmentError(DemandeqError):
    """Date/firm index sets of two panels do not line up."""


class InvalidDesignError(DemandeqError):
    """A regression design violates its size or completeness requirements."""


class SingularDesignError(DemandeqError):
    """Cross-product matrix is rank deficient or too ill-conditioned to solve."""


class EmptyWindowError(DemandeqError):
    """An estimation window contains no usable rows."""


class ThinCrossSectionError(DemandeqError):
    """Too few eligible firms to split into long and short legs."""


class CoverageError(DemandeqError):
    """A portfolio leg member lacks a required fixed effect, score or residual."""


class InconsistentBeliefsError(DemandeqError):
    """Belief inputs imply a return covariance that is not positive definite."""


class IllConditionedBeliefsError(DemandeqError):
    """The small inner matrix of the covariance inversion cannot be solved."""


class NotPositiveSemidefiniteError(DemandeqError):
    """A covariance matrix fails the symmetric PSD factorization check."""


class ResampleError(DemandeqError):
    """Monte Carlo sampling degenerated (e.g. all draws on one side of the split)."""


class InputFormatError(DemandeqError):
    """Malformed input file; the message carries row-level diagnostics."""
