"""Exception hierarchy for the gridsplit toolkit."""


class GridsplitError(Exception):
    """Base class for all toolkit errors."""


# --- case parsing / validation ---

class CaseError(GridsplitError):
    """Base class for case-file problems."""


class MalformedMatrix(CaseError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingSection(CaseError):
    pass


class NumberParse(CaseError):
    def __init__(self, token, line):
        self.token = token
        self.line = line
        super().__init__(f"line {line}: cannot parse {token!r} as a number")


class SchemaViolation(CaseError):
    def __init__(self, path, message=""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class DanglingReference(CaseError):
    pass


class NonPositiveReactance(CaseError):
    pass


class NoGeneration(CaseError):
    pass


class CostModelUnsupported(CaseError):
    pass


# --- topology decisions ---

class DecisionError(GridsplitError):
    pass


class DuplicateSplit(DecisionError):
    pass


class DecisionConflict(DecisionError):
    pass


class MissingInjection(DecisionError):
    pass


class AmbiguousDecision(DecisionError):
    """More than one transfer selector active for one line in a solver vector."""


# --- numerics / solving ---

class SingularSystem(GridsplitError):
    pass


class UnbalancedInjection(GridsplitError):
    pass


class NumericalBreakdown(GridsplitError):
    pass


class EmptyNetwork(GridsplitError):
    pass


class BudgetExceedsLines(GridsplitError):
    """Raised only internally; the builder clamps and warns instead."""


# --- CLI / reports ---

class MismatchedCases(GridsplitError):
    pass
