"""Exception types shared across the toolkit."""


class InvalidInputError(ValueError):
    """Inputs are dimensionally or structurally incompatible."""


class DegenerateLikelihoodError(RuntimeError):
    """An observation has zero probability under the model at some step."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"observation at step {step} has zero probability under the model")


class DegenerateBeliefError(RuntimeError):
    """A belief update produced zero total mass.

    Carries the pre-normalization vector so the caller can decide a
    fallback policy (e.g. reset to the initial distribution).
    """

    def __init__(self, premass, step: int | None = None):
        self.premass = premass
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"belief update produced zero total mass{where}")


class NumericFaultError(RuntimeError):
    """A learner produced NaN or infinity; indicates misconfiguration."""


class GuardSizeError(ValueError):
    """A brute-force or clustering guard refused an oversized problem."""
