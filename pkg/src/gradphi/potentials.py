"""Interaction potentials V with derivatives and ellipticity constants.

Every potential is uniformly convex (lam <= V'' <= Lam), even, and has a
Holder-continuous second derivative with exponent gamma and seminorm
holder_M.  Potentials are immutable and treated as black-box callables;
``validate`` checks the assumptions on a sample grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Potential:
    name: str
    params: tuple
    v: Callable
    dv: Callable
    d2v: Callable
    lam: float
    Lam: float
    gamma: float = 1.0
    holder_M: float = 0.0

    def __str__(self):
        args = ",".join(f"{p:g}" for p in self.params)
        return f"{self.name}({args})"


def quadratic(c: float) -> Potential:
    """V(t) = c t^2 / 2, the discrete Gaussian free field interaction."""
    if c <= 0:
        raise ValueError("quadratic coefficient must be positive")
    c = float(c)
    return Potential(
        name="quadratic",
        params=(c,),
        v=lambda t: 0.5 * c * np.square(t),
        dv=lambda t: c * np.asarray(t, dtype=float),
        d2v=lambda t: np.full_like(np.asarray(t, dtype=float), c),
        lam=c,
        Lam=c,
        gamma=1.0,
        holder_M=0.0,
    )


# max over t of |d/dt sech^2(t)| = |2 sech^2 t tanh t| = 4/(3*sqrt(3))
_SECH2_LIPSCHITZ = 4.0 / (3.0 * np.sqrt(3.0))


def logcosh_perturbed(a: float) -> Potential:
    """V(t) = t^2/2 + a log cosh t, a concrete non-Gaussian instance.

    V''(t) = 1 + a sech^2(t) stays in [1 + min(a,0), 1 + max(a,0)],
    so the potential is uniformly convex for a > -1.
    """
    if a <= -1:
        raise ValueError("perturbation must satisfy a > -1")
    if a == 0:
        raise ValueError("a = 0 degenerates to quadratic(1); use that instead")
    a = float(a)

    def v(t):
        t = np.asarray(t, dtype=float)
        # log cosh t = |t| + log((1 + exp(-2|t|))/2), overflow-safe
        at = np.abs(t)
        return 0.5 * t * t + a * (at + np.log1p(np.exp(-2 * at)) - np.log(2.0))

    def dv(t):
        t = np.asarray(t, dtype=float)
        return t + a * np.tanh(t)

    def d2v(t):
        t = np.asarray(t, dtype=float)
        return 1.0 + a / np.square(np.cosh(t))

    return Potential(
        name="logcosh_perturbed",
        params=(a,),
        v=v,
        dv=dv,
        d2v=d2v,
        lam=1.0 + min(a, 0.0),
        Lam=1.0 + max(a, 0.0),
        gamma=1.0,
        holder_M=abs(a) * _SECH2_LIPSCHITZ,
    )


def from_config(name: str, params) -> Potential:
    """Potential selection by name + parameter list (config entry point)."""
    table = {"quadratic": quadratic, "logcosh_perturbed": logcosh_perturbed}
    if name not in table:
        raise ValueError(f"unknown potential {name!r}")
    return table[name](*params)


@dataclass
class ValidationReport:
    potential: str
    d2v_min: float
    d2v_max: float
    symmetry_residual: float
    holder_ratio: float
    dv_fd_error: float
    d2v_fd_error: float
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def validate(pot: Potential, t_max: float = 10.0, n: int = 2001,
             tol: float = 1e-9) -> ValidationReport:
    """Sample-based check of convexity, symmetry and the Holder bound."""
    t = np.linspace(-t_max, t_max, n)
    d2 = np.asarray(pot.d2v(t), dtype=float)
    sym = float(np.max(np.abs(pot.v(t) - pot.v(-t))))

    # Holder ratio |V''(s)-V''(t)| / |s-t|^gamma on adjacent grid pairs
    dt = t[1] - t[0]
    ratios = np.abs(np.diff(d2)) / dt ** pot.gamma
    holder = float(ratios.max()) if len(ratios) else 0.0

    h = 1e-4
    tt = np.linspace(-t_max / 2, t_max / 2, 101)
    dv_err = float(np.max(np.abs(
        (pot.v(tt + h) - pot.v(tt - h)) / (2 * h) - pot.dv(tt))))
    d2v_err = float(np.max(np.abs(
        (pot.dv(tt + h) - pot.dv(tt - h)) / (2 * h) - pot.d2v(tt))))

    flags = []
    if d2.min() < pot.lam - tol:
        flags.append(f"convexity: min V'' = {d2.min():.6g} < lam = {pot.lam:.6g}")
    if d2.max() > pot.Lam + tol:
        flags.append(f"ellipticity: max V'' = {d2.max():.6g} > Lam = {pot.Lam:.6g}")
    if d2.min() <= 0:
        flags.append("convexity violated: V'' <= 0 somewhere")
    if sym > tol:
        flags.append(f"symmetry residual {sym:.3g}")
    if pot.holder_M > 0 and holder > pot.holder_M * (1 + 1e-6):
        flags.append(f"Holder ratio {holder:.6g} exceeds M = {pot.holder_M:.6g}")

    return ValidationReport(
        potential=str(pot),
        d2v_min=float(d2.min()),
        d2v_max=float(d2.max()),
        symmetry_residual=sym,
        holder_ratio=holder,
        dv_fd_error=dv_err,
        d2v_fd_error=d2v_err,
        flags=flags,
    )
