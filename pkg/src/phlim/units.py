"""SI <-> natural unit conversion.

Natural units set hbar = c = 1 and measure wavenumbers in a reference
k_ref (in 1/m). Constants are the exact SI values (c, and hbar = h / 2 pi
with the exact h of the 2019 SI), as tabulated by CODATA 2018.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# CODATA 2018 recommended values (exact in the revised SI).
HBAR = 1.054571817e-34  # J s
C = 299792458.0  # m / s

NATURAL_LABELS = {
    "wavenumber": "k_ref",
    "angular_frequency": "c*k_ref",
    "length": "1/k_ref",
    "time": "1/(c*k_ref)",
    "energy": "hbar*c*k_ref",
    "momentum": "hbar*k_ref",
    "mass": "hbar*k_ref/c",
    "speed": "c",
    "angle": "rad",
    "dimensionless": "1",
    "count": "1",
}

SI_LABELS = {
    "wavenumber": "1/m",
    "angular_frequency": "rad/s",
    "length": "m",
    "time": "s",
    "energy": "J",
    "momentum": "kg*m/s",
    "mass": "kg",
    "speed": "c",
    "angle": "rad",
    "dimensionless": "1",
    "count": "1",
}


@dataclass(frozen=True)
class UnitSystem:
    """Conversion between natural values and the chosen output system."""

    system: str = "natural"
    k_ref: float = 1.0  # 1/m

    def __post_init__(self):
        if self.system not in ("si", "natural"):
            raise ValueError(f"unknown unit system {self.system!r}")
        if not self.k_ref > 0.0:
            raise ValueError("k_ref must be positive")

    def factor(self, kind: str) -> float:
        """Multiply a natural value by this to get the output value."""
        if self.system == "natural" or kind in ("speed", "angle", "dimensionless", "count"):
            return 1.0
        k = self.k_ref
        return {
            "wavenumber": k,
            "angular_frequency": C * k,
            "length": 1.0 / k,
            "time": 1.0 / (C * k),
            "energy": HBAR * C * k,
            "momentum": HBAR * k,
            "mass": HBAR * k / C,
        }[kind]

    def label(self, kind: str) -> str:
        return (SI_LABELS if self.system == "si" else NATURAL_LABELS)[kind]

    def out(self, value, kind: str) -> dict:
        """Unit-labelled value (scalars or lists)."""
        f = self.factor(kind)

        def conv(v):
            # integers (counts, sizes) stay integers when no scaling applies
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool) and f == 1.0:
                return int(v)
            return float(v) * f

        if value is None:
            return {"value": None, "unit": self.label(kind)}
        if isinstance(value, (list, tuple)):
            return {"value": [conv(v) for v in value], "unit": self.label(kind)}
        return {"value": conv(value), "unit": self.label(kind)}

    def to_natural(self, value, kind: str):
        """Convert an input value given in this system into natural units."""
        f = self.factor(kind)
        if isinstance(value, (list, tuple)):
            return [float(v) / f for v in value]
        return float(value) / f
