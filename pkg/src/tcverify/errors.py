"""Exception types raised across the verification engine."""


class TCVerifyError(Exception):
    """Base class for all engine errors."""


class DegenerateSegment(TCVerifyError):
    """Zero-length motion segment (start and end positions coincide)."""


class DegenerateMean(TCVerifyError):
    """Mean of unit vectors too short to renormalize (antipodal cancellation)."""


class SchemaError(TCVerifyError):
    """Input file does not conform to the expected CSV schema."""

    def __init__(self, message, path=None, row=None, column=None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class EmptyStore(TCVerifyError):
    """No storms survived loading and filtering."""


class EmptyClimatology(TCVerifyError):
    """No (basin, lead) cell received a tendency sample."""


class MissingCell(TCVerifyError):
    """Climatology has no cell for the requested (basin, lead)."""


class UnknownCandidate(TCVerifyError):
    """Match result references a candidate track absent from the forecast set."""


class ZeroReferenceScore(TCVerifyError):
    """Reference Brier score is zero while the forecast score is not."""


class NoKeys(TCVerifyError):
    """The verification key grid is empty."""


class UnknownBaseline(TCVerifyError):
    """Requested scorecard baseline is not among the evaluated models."""
