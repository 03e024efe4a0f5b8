"""Exception types shared across the package."""

from __future__ import annotations


class AmmLabError(Exception):
    pass


class AdmissibilityError(AmmLabError):
    """Raised when an action sequence is not admissible from a state.

    ``index`` is the position of the first offending element.
    """

    def __init__(self, message: str, index: int = 0) -> None:
        super().__init__(message)
        self.index = index


class UnsupportedPool(AmmLabError):
    pass


class ConfigError(AmmLabError):
    pass


class CompetitivenessViolation(AmmLabError):
    pass


class PoolNotFrictionless(AmmLabError):
    pass
