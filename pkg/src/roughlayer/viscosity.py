"""Temperature-dependent viscosity with a clamped temperature range."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ViscosityLaw:
    """Vogel-Fulcher-Tammann law ``mu0 exp(a / (theta - T0))``.

    Temperatures are clamped to ``[clamp_lo, clamp_hi]`` before evaluation,
    which keeps the law bounded and Lipschitz.  The clamp interval may not
    contain ``T0``.  ``a = 0`` gives a constant viscosity.
    """

    mu0: float = 0.2
    a: float = 3.0
    T0: float = 0.6
    clamp_lo: float = 0.0
    clamp_hi: float = 0.5
    kind: str = "vft"

    def __post_init__(self):
        if self.kind not in ("vft", "constant"):
            raise ConfigError(f"unknown viscosity kind {self.kind!r}")
        if not self.mu0 > 0:
            raise ConfigError("bounded viscosity: mu0 must be positive")
        if not self.clamp_lo <= self.clamp_hi:
            raise ConfigError("viscosity clamp interval is empty")
        if self.kind == "vft" and self.a != 0 and self.clamp_lo <= self.T0 <= self.clamp_hi:
            raise ConfigError(f"bounded viscosity: clamp interval [{self.clamp_lo}, {self.clamp_hi}] contains T0={self.T0}")

    @property
    def is_constant(self):
        return self.kind == "constant" or self.a == 0

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.is_constant:
            out = np.full_like(theta, self.mu0)
        else:
            th = np.clip(theta, self.clamp_lo, self.clamp_hi)
            out = self.mu0 * np.exp(self.a / (th - self.T0))
        return out if out.ndim else float(out)

    def derivative(self, theta):
        """d mu / d theta (zero outside the clamp interval)."""
        theta = np.asarray(theta, dtype=float)
        if self.is_constant:
            return np.zeros_like(theta)
        inside = (theta >= self.clamp_lo) & (theta <= self.clamp_hi)
        th = np.clip(theta, self.clamp_lo, self.clamp_hi)
        d = -self.a / (th - self.T0) ** 2 * self.mu0 * np.exp(self.a / (th - self.T0))
        return np.where(inside, d, 0.0)

    @property
    def bounds(self):
        """(mu_min, mu_max) over all real temperatures."""
        if self.is_constant:
            return self.mu0, self.mu0
        ends = [self(self.clamp_lo), self(self.clamp_hi)]
        return min(ends), max(ends)

    @property
    def lipschitz(self):
        """``max |mu'|`` on the clamp interval.

        ``|mu'|`` has a single interior critical point at ``theta = T0 - a/2``,
        so the maximum is attained there or at an endpoint.
        """
        if self.is_constant:
            return 0.0
        cand = [self.clamp_lo, self.clamp_hi]
        crit = self.T0 - 0.5 * self.a
        if self.clamp_lo < crit < self.clamp_hi:
            cand.append(crit)
        return float(np.max(np.abs(self.derivative(np.array(cand)))))


def constant_viscosity(mu0=0.2) -> ViscosityLaw:
    return ViscosityLaw(mu0=mu0, a=0.0, kind="constant")


def vft_viscosity(law: ViscosityLaw, theta):
    return law(theta)


__all__ = ["ViscosityLaw", "constant_viscosity", "vft_viscosity"]
