"""Local coupling operators V[m] evaluated nodewise, with derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["CouplingOperator", "eval_coupling", "parse_coupling"]


@dataclass(frozen=True)
class CouplingOperator:
    """Nodewise coupling m -> V(m) together with V'(m).

    Built-in kinds:

    * ``power``   V(m) = m^gamma (gamma = 2 default).  Nondecreasing for
      gamma >= 1, which is the regime where the coupled system has a unique
      solution.  Negative masses occur in intermediate iterations of the
      unconstrained solver; with integer gamma they are evaluated as-is,
      with non-integer gamma they are rejected.
    * ``arctan``  V(m) = 1 - (4/pi) arctan(m), decreasing, so uniqueness is
      not guaranteed; runs are labeled accordingly.
    * ``custom``  caller-supplied value/derivative callables.
    """

    kind: str = "power"
    gamma: float = 2.0
    value_fn: Callable | None = None
    deriv_fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("power", "arctan", "custom"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind == "custom" and (self.value_fn is None or self.deriv_fn is None):
            raise ValueError("custom coupling needs value_fn and deriv_fn")

    @classmethod
    def power(cls, gamma: float = 2.0) -> "CouplingOperator":
        return cls(kind="power", gamma=float(gamma))

    @classmethod
    def arctan(cls) -> "CouplingOperator":
        return cls(kind="arctan")

    @classmethod
    def custom(cls, value_fn, deriv_fn) -> "CouplingOperator":
        return cls(kind="custom", value_fn=value_fn, deriv_fn=deriv_fn)

    @property
    def monotone_nondecreasing(self) -> bool:
        """True when monotonicity guarantees uniqueness of the solution."""
        if self.kind == "power":
            return self.gamma >= 1.0
        return False

    @property
    def label(self) -> str:
        if self.kind == "power":
            g = self.gamma
            name = f"power:{int(g) if float(g).is_integer() else g}"
        else:
            name = self.kind
        if not self.monotone_nondecreasing:
            name += " (uniqueness not guaranteed)"
        return name

    def _check_domain(self, m: np.ndarray):
        if self.kind == "power" and not float(self.gamma).is_integer():
            if np.any(m < 0):
                raise ValueError(
                    "power coupling with non-integer exponent is undefined for "
                    "negative mass; use a custom sign-preserving extension such "
                    "as V(m) = sign(m) |m|^gamma")

    def value(self, m):
        m = np.asarray(m, dtype=float)
        self._check_domain(m)
        if self.kind == "power":
            return m ** self.gamma
        if self.kind == "arctan":
            return 1.0 - (4.0 / np.pi) * np.arctan(m)
        return np.asarray(self.value_fn(m), dtype=float)

    def derivative(self, m):
        m = np.asarray(m, dtype=float)
        self._check_domain(m)
        if self.kind == "power":
            if self.gamma == 1.0:
                return np.ones_like(m)
            return self.gamma * m ** (self.gamma - 1.0)
        if self.kind == "arctan":
            return -(4.0 / np.pi) / (1.0 + m * m)
        return np.asarray(self.deriv_fn(m), dtype=float)


def eval_coupling(op: CouplingOperator, M):
    """Nodewise (V, V') for a grid function or plain array of masses."""
    from .operators import GridFunction

    if isinstance(M, GridFunction):
        v = op.value(M.values)
        dv = op.derivative(M.values)
        return GridFunction(M.grid, v), GridFunction(M.grid, dv)
    return op.value(M), op.derivative(M)


def parse_coupling(text: str) -> CouplingOperator:
    """Parse a CLI-style descriptor: 'power:<gamma>' or 'arctan'."""
    if text == "arctan":
        return CouplingOperator.arctan()
    if text == "power":
        return CouplingOperator.power()
    if text.startswith("power:"):
        return CouplingOperator.power(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown coupling descriptor {text!r}")
