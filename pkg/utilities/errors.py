"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Literal

if TYPE_CHECKING:
    from os import PathLike

    from .geometry import Family

__all__ = (
    "CapacityError",
    "ConfigurationError",
    "DomainError",
    "FamilyMismatchError",
    "MaxCondError",
    "RejectionFailure",
    "SamplerStepError",
    "SingularCovarianceError",
)

type SamplerStep = Literal["partition", "extremal", "sub-extremal"]


class MaxCondError(Exception):
    """Base class for every error raised by this package."""


class FamilyMismatchError(MaxCondError):
    def __init__(self, expected: Family, got: Family, /) -> None:
        self.expected: Family = expected
        self.got: Family = got
        super().__init__(f"Operation requires a {expected.value} model, got {got.value}.")


class DomainError(MaxCondError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularCovarianceError(MaxCondError):
    """A covariance matrix is singular, not positive definite, or built from duplicate sites."""


class CapacityError(MaxCondError):
    """The request exceeds a hard size guard (enumeration, QMC dimension)."""


class ConfigurationError(MaxCondError):
    def __init__(
        self, message: str, /, *, path: str | PathLike[str] | None = None, field: str | None = None
    ) -> None:
        self.message: str = message
        self.path: str | None = None if path is None else str(path)
        self.field: str | None = field
        context = ", ".join(part for part in (self.path and f"file {self.path!r}", field and f"field {field!r}") if part)
        super().__init__(f"{message} ({context})" if context else message)


class RejectionFailure(MaxCondError):
    def __init__(self, *, attempts: int, accepted: int, rectangle_probability: float | None = None) -> None:
        self.attempts: int = attempts
        self.accepted: int = accepted
        self.rectangle_probability: float | None = rectangle_probability
        msg = f"Rejection sampler gave up after {attempts} attempts (acceptance rate {self.acceptance_rate:.3g}"
        if rectangle_probability is not None:
            msg += f", theoretical acceptance probability {rectangle_probability:.3g}"
        super().__init__(msg + ").")

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


class SamplerStepError(MaxCondError):
    def __init__(self, step: SamplerStep, /, *, replicate: int | None = None, reason: str = "") -> None:
        self.step: SamplerStep = step
        self.replicate: int | None = replicate
        self.reason: str = reason
        where = f"replicate {replicate}, " if replicate is not None else ""
        super().__init__(f"Conditional simulation failed ({where}step {step!r}): {reason}")

    def with_replicate(self, replicate: int | None, /) -> SamplerStepError:
        if replicate is None or replicate == self.replicate:
            return self
        error = SamplerStepError(self.step, replicate=replicate, reason=self.reason)
        error.__cause__ = self.__cause__
        return error
