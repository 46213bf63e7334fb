class InputError(ValueError):
    """Rejected input: bad dimensions, non-finite values, out-of-range parameters."""


class InvariantError(RuntimeError):
    """An internal numerical invariant was violated (e.g. a ratio above 1)."""


class UndefinedConditionError(ValueError):
    pass


class ConstructionError(ValueError):
    pass
