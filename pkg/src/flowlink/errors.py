"""Exception hierarchy shared across the toolkit."""


class FlowlinkError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameters(FlowlinkError):
    """A distribution or model was built with out-of-range parameters."""


class UndefinedMoment(FlowlinkError):
    """A requested moment does not exist for the configured distribution."""


class InvalidConfig(FlowlinkError):
    """A simulation or ingest configuration violates its invariants."""


# --- capacity analyzer ---

class FitError(FlowlinkError):
    """Base class for line-fitting failures."""


class InsufficientWorkingData(FitError):
    """Too few samples below the working-utilization threshold."""


class DegenerateData(FitError):
    """Qualifying samples carry no usable information (e.g. all N_a = 0)."""


class InsufficientSaturationData(FitError):
    """Too few samples qualify for the saturation-line fit."""


class NoSaturationObserved(FitError):
    """No sample departs from the working line; the link never saturated."""


class ParallelLines(FitError):
    """Working and saturation lines have (numerically) equal slopes."""


class NegativeIntersection(FitError):
    """The fitted lines cross at a non-positive flow count."""


# --- netflow ingest ---

class DatagramError(FlowlinkError):
    """Base class for NetFlow datagram parse failures.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadVersion(DatagramError):
    pass


class BadCount(DatagramError):
    pass


class TruncatedDatagram(DatagramError):
    pass


class ClockInconsistent(FlowlinkError):
    """Header/record timestamps map to a negative absolute time."""


class MalformedRow(FlowlinkError):
    """A CSV sample row violates the schema.

    Carries the 1-based line number.
    """

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
