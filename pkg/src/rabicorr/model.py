"""Quantum Rabi Hamiltonian and the four Lindblad channels.

Everything is expressed in units of the common mode/atom frequency, which is
1 by default.

Rate convention
---------------
Each channel is stored as a jump operator ``L`` with coefficient ``kappa``
acting as ``kappa * (L rho L+ - 1/2 {L+ L, rho})``:

==============  ===========  ===================
channel         operator     kappa
==============  ===========  ===================
cavity decay    a            2 gamma_a
atomic decay    sigma        2 gamma_d
pump            sigma+       2 gamma_p
dephasing       D            gamma_sigma / 2
==============  ===========  ===================

With these coefficients the J = 0 moment equations in
:mod:`rabicorr.hierarchy` hold with no rescaling: <a+^n a^n> relaxes at
``2 gamma_a n`` and the atomic coherence sigma dephases at
``gamma_sigma + gamma_p + gamma_d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

from rabicorr.operators import (
    SpaceDims,
    SparseOperator,
    make_annihilator,
    make_atomic_ops,
    make_number,
)

ModelLevel = Literal["rwa", "full"]


class ParameterError(ValueError):
    """Invalid model parameters."""


@dataclass(frozen=True)
class RabiParams:
    """Hamiltonian parameters.

    ``d_a = None`` selects the lower bound ``coupling**2 / (2 omega0)``.
    """

    coupling: float
    omega0: float = 1.0
    d_a: float | None = None
    include_counter_rotating: bool = False
    include_diamagnetic: bool = False

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ParameterError(f"omega0 must be positive, got {self.omega0}")
        if self.coupling < 0:
            raise ParameterError(f"coupling must be >= 0, got {self.coupling}")
        if self.include_diamagnetic and not self.include_counter_rotating:
            raise ParameterError("the diamagnetic term requires the counter-rotating term")
        if self.d_a is not None and self.d_a < self.d_a_min * (1 - 1e-12):
            raise ParameterError(
                f"d_a={self.d_a} is below coupling^2/(2 omega0)={self.d_a_min}; "
                "the spectrum would be unbounded from below"
            )

    @classmethod
    def for_level(cls, level: ModelLevel, coupling: float, omega0: float = 1.0,
                  d_a: float | None = None) -> "RabiParams":
        """Build params from the external ``rwa``/``full`` switch."""
        if level not in ("rwa", "full"):
            raise ParameterError(f"model level must be 'rwa' or 'full', got {level!r}")
        full = level == "full"
        return cls(coupling=coupling, omega0=omega0, d_a=d_a,
                   include_counter_rotating=full, include_diamagnetic=full)

    @property
    def d_a_min(self) -> float:
        return self.coupling**2 / (2.0 * self.omega0)

    @property
    def diamagnetic(self) -> float:
        """Effective diamagnetic coefficient (bound applied when unset)."""
        return self.d_a_min if self.d_a is None else self.d_a

    @property
    def model_level(self) -> str:
        if self.include_counter_rotating and self.include_diamagnetic:
            return "full"
        if not self.include_counter_rotating and not self.include_diamagnetic:
            return "rwa"
        return "custom"


@dataclass(frozen=True)
class RateSet:
    """Relaxation, pump and dephasing rates (units of omega0)."""

    gamma_a: float = 0.0
    gamma_d: float = 0.0
    gamma_p: float = 0.0
    gamma_sigma: float = 0.0

    def __post_init__(self):
        for name in ("gamma_a", "gamma_d", "gamma_p", "gamma_sigma"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")

    @property
    def any_positive(self) -> bool:
        return any(r > 0 for r in (self.gamma_a, self.gamma_d, self.gamma_p, self.gamma_sigma))


@dataclass(frozen=True)
class Dissipator:
    """One Lindblad channel ``kappa * D[op]``."""

    name: str
    op: SparseOperator
    kappa: float


def build_hamiltonian(params: RabiParams, dims: SpaceDims) -> SparseOperator:
    """H = w0 a+a + w0 s+s + W(a+s + as+) [+ W(a+s+ + as)] [+ D_a (a+ + a)^2]."""
    a = make_annihilator(dims)
    ad = a.dag()
    sigma, sigma_dag, _ = make_atomic_ops(dims)
    w0, g = params.omega0, params.coupling

    h = w0 * make_number(dims) + w0 * (sigma_dag @ sigma)
    h = h + g * (ad @ sigma + a @ sigma_dag)
    if params.include_counter_rotating:
        h = h + g * (ad @ sigma_dag + a @ sigma)
    if params.include_diamagnetic:
        x = a + ad
        h = h + params.diamagnetic * (x @ x)
    return SparseOperator(dims, h.matrix, hermitian_hint=True)


def build_dissipators(rates: RateSet, dims: SpaceDims) -> list[Dissipator]:
    """The four channels in the fixed order cavity, decay, pump, dephasing.

    Channels with zero rate are dropped.
    """
    a = make_annihilator(dims)
    sigma, sigma_dag, inversion = make_atomic_ops(dims)
    channels = [
        Dissipator("cavity", a, 2.0 * rates.gamma_a),
        Dissipator("decay", sigma, 2.0 * rates.gamma_d),
        Dissipator("pump", sigma_dag, 2.0 * rates.gamma_p),
        Dissipator("dephasing", inversion, 0.5 * rates.gamma_sigma),
    ]
    return [c for c in channels if c.kappa > 0]
