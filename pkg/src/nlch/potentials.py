"""Double-well potentials split as ``Psi = gamma_hat + Pi_hat``.

``gamma`` is maximal monotone with ``0 in gamma(0)``, ``Pi`` is Lipschitz
with ``Pi(0) = 0`` and ``Pi_hat`` is concave for all three kinds:

============  ==========================  ===========  ==============
kind          gamma_hat(r)                Pi(r)        Psi - (g^ + P^)
============  ==========================  ===========  ==============
polynomial    r^4 / 4                     -r           1/4
logarithmic   th/2 [(1+r)ln(1+r)          -th0 r       -th0/2
              + (1-r)ln(1-r)]
obstacle      indicator of [-1, 1]        -2 c r       c
============  ==========================  ===========  ==============

The constant offsets in the last column are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import _backend
from .errors import ConvergenceError
from .geometry import Field, lr_sum

KINDS = ("polynomial", "logarithmic", "obstacle")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "polynomial"
    theta: float = 0.5
    theta0: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential {self.kind!r}")
        if self.kind == "logarithmic" and not 0 < self.theta < self.theta0:
            raise ValueError("logarithmic potential needs 0 < theta < theta0")
        if self.kind == "obstacle" and not self.c > 0:
            raise ValueError("obstacle potential needs c > 0")

    @property
    def lipschitz_Pi(self) -> float:
        return {"polynomial": 1.0, "logarithmic": self.theta0, "obstacle": 2.0 * self.c}[self.kind]

    @property
    def domain_bound(self) -> float | None:
        """Open bound on ``|u|`` for singular kinds, ``None`` otherwise."""
        return None if self.kind == "polynomial" else 1.0

    def pi(self, r):
        return -self.lipschitz_Pi * np.asarray(r, dtype=float)

    def pi_hat(self, r):
        r = np.asarray(r, dtype=float)
        return -0.5 * self.lipschitz_Pi * r * r

    def gamma(self, r):
        """The unregularised (single-valued part of) ``gamma`` on its domain."""
        r = np.asarray(r, dtype=float)
        if self.kind == "polynomial":
            return r**3
        if self.kind == "logarithmic":
            return self.theta * np.arctanh(r)
        if np.any(np.abs(r) > 1):
            raise ValueError("obstacle gamma is empty outside [-1, 1]")
        return np.zeros_like(r)

    def gamma_hat(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "polynomial":
            return 0.25 * r**4
        if self.kind == "logarithmic":
            return 0.5 * self.theta * (xlogy(1 + r, 1 + r) + xlogy(1 - r, 1 - r))
        return np.where(np.abs(r) <= 1.0, 0.0, np.inf)

    def psi(self, r):
        """The full potential including the dropped offset (for reference checks)."""
        offset = {"polynomial": 0.25, "logarithmic": -0.5 * self.theta0, "obstacle": self.c}[self.kind]
        return self.gamma_hat(r) + self.pi_hat(r) + offset


def _log_gamma_hat_from_t(theta, t):
    """``gamma_hat(tanh t)`` without forming ``1 - tanh t`` by cancellation."""
    a = np.exp(-2.0 * np.abs(t))
    one_minus = 2.0 * a / (1.0 + a)
    one_plus = 2.0 / (1.0 + a)
    return 0.5 * theta * (xlogy(one_plus, one_plus) + xlogy(one_minus, one_minus))


@dataclass(frozen=True)
class YosidaApprox:
    """Yosida regularisation ``gamma_lambda = (Id - J_lambda) / lambda``."""

    potential: PotentialSpec
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("Yosida parameter must be positive")

    def evaluate(self, r, backend=None):
        """Return ``(J, gamma_lam, gamma_lam')`` elementwise.

        ``gamma_lam'`` is the derivative where it exists; at the kinks of the
        obstacle case the value from the inside is used.
        """
        r = np.asarray(r, dtype=float)
        p, lam = self.potential, self.lam
        impl = backend or _backend.kernels
        if p.kind == "polynomial":
            return impl.resolvent_poly(r, lam)
        if p.kind == "logarithmic":
            J, g, dg, _ = impl.resolvent_log(r, lam, p.theta)
            return J, g, dg
        J = np.clip(r, -1.0, 1.0)
        return J, (r - J) / lam, np.where(np.abs(r) > 1.0, 1.0 / lam, 0.0)

    def resolvent(self, r):
        return self.evaluate(r)[0]

    def gamma(self, r):
        return self.evaluate(r)[1]

    def gamma_prime(self, r):
        return self.evaluate(r)[2]

    def gamma_hat(self, r):
        """Moreau envelope ``gamma_hat(J) + lam/2 gamma_lam^2``."""
        r = np.asarray(r, dtype=float)
        p = self.potential
        if p.kind == "logarithmic":
            _, g, _, t = _backend.kernels.resolvent_log(r, self.lam, p.theta)
            return _log_gamma_hat_from_t(p.theta, t) + 0.5 * self.lam * g * g
        J, g, _ = self.evaluate(r)
        base = 0.25 * J**4 if p.kind == "polynomial" else 0.0
        return base + 0.5 * self.lam * g * g

    def residual(self, r):
        """``|J + lam gamma(J) - r|`` (zero by construction for the obstacle)."""
        r = np.asarray(r, dtype=float)
        p = self.potential
        if p.kind == "obstacle":
            return np.zeros_like(r)
        if p.kind == "logarithmic":
            _, _, _, t = _backend.kernels.resolvent_log(r, self.lam, p.theta)
            return np.abs(np.tanh(t) + self.lam * p.theta * t - r)
        J = self.resolvent(r)
        return np.abs(J + self.lam * J**3 - r)


def resolvent_J(y: YosidaApprox, r):
    J = y.resolvent(r)
    res = np.max(np.atleast_1d(y.residual(r)), initial=0.0)
    if not res <= 1e-12 * max(1.0, float(np.max(np.abs(r), initial=0.0))):
        raise ConvergenceError("scalar resolvent did not converge", float(res))
    return J


def yosida_gamma(y: YosidaApprox, r):
    return y.gamma(r)


def pi_part(p: PotentialSpec, r):
    return p.pi(r)


def potential_energy(y: YosidaApprox, u: Field) -> float:
    """``h^d sum_i [gamma_hat_lam(u_i) + Pi_hat(u_i)]``."""
    vals = y.gamma_hat(u.values) + y.potential.pi_hat(u.values)
    return u.grid.cell_volume * lr_sum(vals)
