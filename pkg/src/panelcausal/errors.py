"""Exception hierarchy shared by every pipeline stage."""


class PanelCausalError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


# ingest
class MalformedCsv(PanelCausalError, ValueError):
    pass


class NonMonotoneCumulative(PanelCausalError, ValueError):
    def __init__(self, country, date, what):
        super().__init__(f"{what} for {country} decreases on {date}")
        self.country = country
        self.date = date


class DateGap(PanelCausalError, ValueError):
    def __init__(self, country, date):
        super().__init__(f"missing day for {country}: {date}")
        self.country = country
        self.date = date


class DuplicateCountry(PanelCausalError, ValueError):
    pass


class OutOfRangeFraction(PanelCausalError, ValueError):
    pass


class SentimentOutOfRange(PanelCausalError, ValueError):
    pass


class MissingCountry(PanelCausalError, KeyError):
    def __init__(self, country, source=""):
        super().__init__(country)
        self.country = country
        self.source = source

    def __str__(self):
        where = f" in {self.source}" if self.source else ""
        return f"country {self.country!r} missing{where}"


class MissingDateCoverage(PanelCausalError, ValueError):
    def __init__(self, country, date, source=""):
        where = f" ({source})" if source else ""
        super().__init__(f"{country} has no data for {date}{where}")
        self.country = country
        self.date = date


# features
class NegativeNewCount(PanelCausalError, ValueError):
    pass


class EmptyMatrix(PanelCausalError, ValueError):
    pass


class ColumnMismatch(PanelCausalError, ValueError):
    pass


# structure learning
class DimensionMismatch(PanelCausalError, ValueError):
    pass


class DidNotConverge(RuntimeWarning):
    """Warning category: rho_max was hit before h(W) reached tolerance.

    The solver still returns its best iterate; callers decide what to do.
    """


# bayesian network
class UnknownVariable(PanelCausalError, KeyError):
    def __str__(self):
        return f"unknown variable or level: {self.args[0]!r}"


class InconsistentEvidence(PanelCausalError, ValueError):
    pass


class StateSpaceTooLarge(PanelCausalError, ValueError):
    pass


class IncompleteRow(PanelCausalError, ValueError):
    pass


# evaluation
class SingleCountry(PanelCausalError, ValueError):
    pass


class DegenerateLabels(PanelCausalError, ValueError):
    pass


class CyclicSpec(PanelCausalError, ValueError):
    pass
