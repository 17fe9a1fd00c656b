"""Exception types shared across the package."""


class PanelFormatError(ValueError):
    """Malformed panel or inflation CSV (bad header, row, or value)."""


class DimensionError(ValueError):
    """Array shapes or panel dimensions outside the supported range."""


class DegenerateSeriesError(ValueError):
    """A product series carries no usable signal (zero return variance)."""


class NumericalBlowupError(RuntimeError):
    """Integration produced a non-finite state."""


class CalibrationError(RuntimeError):
    """A fit failed to converge or the regression is singular."""
