"""Exception types shared across the package."""


class AuctionError(Exception):
    """Base class for all errors raised by adtradeoffs."""


class DomainError(AuctionError, ValueError):
    """An argument lies outside the support or domain of a function."""


class SingularityError(AuctionError, ArithmeticError):
    """A density vanished where a virtual value was requested."""


class RegularityError(AuctionError):
    """The score function is not monotone on the probe grid.

    Callers should fall back to :func:`adtradeoffs.valuations.linear_fit_virtual`.
    """


class UnsupportedRuleError(AuctionError):
    """The ranking rule does not support the requested operation."""


class NotImplementableError(AuctionError):
    """The truthful outcome cannot be reproduced by GSP bids."""


class DegenerateInputError(AuctionError, ValueError):
    pass


class BudgetExceededError(AuctionError):
    pass


class InfeasibleError(AuctionError):
    pass


class ConfigError(AuctionError, ValueError):
    """Invalid scenario or problem configuration; message names the field path."""


class InternalError(AuctionError, RuntimeError):
    """A computed quantity contradicts a property the construction guarantees."""
