"""Exception hierarchy; the CLI maps each class to an exit code."""


class DxDecayError(Exception):
    exit_code = 1


class InputError(DxDecayError):
    """Unreadable, malformed or inconsistent input, or a bad configuration."""

    exit_code = 2


class InfeasibleModelError(DxDecayError):
    """A statistical model cannot be identified from the available data."""

    exit_code = 3


class ContractViolation(ValueError):
    """A caller broke a documented precondition."""


class UndefinedScoreError(DxDecayError):
    """Every random skewer produced a zero response, so no score exists."""

    exit_code = 3
