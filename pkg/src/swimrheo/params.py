"""Physical parameters of a swimmer suspension and the unit system."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ParameterRangeError

WCA_CUTOFF = 2.0 ** (1.0 / 6.0)


@dataclass(frozen=True)
class SuspensionParams:
    """Constants of the point-dipole swimmer model.

    Lengths are in body lengths, times in body lengths per swim speed and
    viscosities in units of the solvent viscosity unless a physical preset is
    used.  The box is the cube [-L, L]^3.  ``D`` and ``rho`` are derived and
    never stored.
    """

    N: int = 200
    L: float = 10.0
    V0: float = 1.0
    U0: float = -1.0
    B: float = 0.2
    gamma: float = 0.1
    eta0: float = 1.0
    D0: float = 0.0
    eps_lj: float = 1.0
    sigma_lj: float = 1.0
    r_cut: float | None = None
    f_max: float = 1.0e3
    semi_major: float = 1.0
    semi_minor: float = 0.437
    r_min_factor: float = 0.9

    def __post_init__(self):
        if self.r_cut is None:
            object.__setattr__(self, "r_cut", WCA_CUTOFF * self.sigma_lj)
        self.validate()

    def validate(self):
        checks = [
            ("N", self.N >= 1 and int(self.N) == self.N, "must be a positive integer"),
            ("L", self.L > 0, "must be positive"),
            ("eta0", self.eta0 > 0, "must be positive"),
            ("gamma", self.gamma >= 0, "must be non-negative"),
            ("B", 0 <= self.B < 1, "must lie in [0, 1)"),
            ("D0", self.D0 >= 0, "must be non-negative"),
            ("V0", np.isfinite(self.V0), "must be finite"),
            ("U0", np.isfinite(self.U0), "must be finite"),
            ("eps_lj", self.eps_lj >= 0, "must be non-negative"),
            ("sigma_lj", self.sigma_lj > 0, "must be positive"),
            ("r_cut", 0 < self.r_cut <= WCA_CUTOFF * self.sigma_lj * (1 + 1e-12),
             "must satisfy 0 < r_cut <= 2^(1/6) sigma_lj"),
            ("f_max", self.f_max > 0, "must be positive"),
            ("semi_major", self.semi_major > 0, "must be positive"),
            ("semi_minor", self.semi_minor > 0, "must be positive"),
            ("r_min_factor", self.r_min_factor >= 0, "must be non-negative"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ParameterRangeError(f"{key}={getattr(self, key)!r} {msg}", key=key)

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** 3

    @property
    def rho(self) -> float:
        return self.N / self.volume

    @property
    def D(self) -> float:
        return self.D0 * self.B**2

    @property
    def body_volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.semi_major * self.semi_minor**2

    @property
    def phi(self) -> float:
        return self.rho * self.body_volume

    @property
    def r_min(self) -> float:
        return self.r_min_factor * self.sigma_lj

    def with_(self, **changes) -> "SuspensionParams":
        return replace(self, **changes)

    def with_phi(self, phi: float) -> "SuspensionParams":
        """Same N, box resized so that the volume fraction equals ``phi``."""
        if phi <= 0:
            raise ParameterRangeError(f"phi={phi} must be positive", key="phi")
        volume = self.N * self.body_volume / phi
        return replace(self, L=0.5 * volume ** (1.0 / 3.0))

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(rho=self.rho, D=self.D, phi=self.phi, volume=self.volume)
        return out

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class UnitSystem:
    """Scales that turn dimensionless model values into SI values."""

    length: float = 1.0
    velocity: float = 1.0
    viscosity: float = 1.0
    name: str = "dimensionless"

    @property
    def time(self):
        return self.length / self.velocity

    @property
    def stress(self):
        return self.viscosity * self.velocity / self.length

    @property
    def dipole(self):
        # force times length
        return self.stress * self.length**3


#: body length 1 micron, swim speed 20 micron/s, water viscosity
PHYSICAL_UNITS = UnitSystem(length=1e-6, velocity=20e-6, viscosity=1e-3, name="bacterial-SI")
DIMENSIONLESS = UnitSystem()
