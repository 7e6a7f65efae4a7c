"""Stationary adversary lead and ultimate ruin probabilities.

The adversary's lead right after honest mining instants follows the
recursion Q' = (Q + count - 1)+; its stationary pmf feeds the pre-mining
phase.  The honest lead during the race is a unit-premium surplus process
whose ultimate ruin probabilities psi(u) are computed two independent ways:
the direct recursion and the complement of the stationary lead cdf.  The
routes must agree, which downstream tests exploit as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phi import PhiDistribution

__all__ = [
    "UnstableRegimeError", "LeadDistribution", "RuinTable",
    "lead_pmf", "ruin_recursive", "ruin_via_lindley",
]


class UnstableRegimeError(ValueError):
    """Mean adversary count per interval >= 1: the attack trivially succeeds."""


@dataclass(frozen=True)
class LeadDistribution:
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if np.any(masses < -1e-12):
            raise ValueError("negative lead mass")
        # large assembled models carry ~1e-10 absolute error per mass
        if masses.sum() > 1 + 1e-8:
            raise ValueError("lead masses sum above one")
        object.__setattr__(self, "masses", np.maximum(masses, 0.0))


@dataclass(frozen=True)
class RuinTable:
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if np.any(psi < -1e-12) or np.any(psi > 1 + 1e-12):
            raise ValueError("ruin probability out of [0, 1]")
        object.__setattr__(self, "psi", np.clip(psi, 0.0, 1.0))


def _check_stable(phi: PhiDistribution):
    if phi.mean >= 1.0:
        raise UnstableRegimeError(
            f"mean adversary count {phi.mean} >= 1: attack always succeeds")
    if phi.masses[0] <= 0.0:
        raise ValueError("p(0) = 0: recursions are undefined")


def _ccdf(phi: PhiDistribution, upto: int) -> np.ndarray:
    """Tail values P(count > j) for j = 0..upto-1."""
    return 1.0 - np.cumsum(phi.masses[:upto])


def lead_pmf(phi: PhiDistribution, k: int) -> LeadDistribution:
    """First k stationary masses of the lead recursion Q' = (Q + count - 1)+."""
    _check_stable(phi)
    if k < 1 or k > phi.k:
        raise ValueError(f"k={k} needs phi masses up to index {k - 1}")
    p0 = phi.masses[0]
    tail = _ccdf(phi, k)
    q = np.empty(k)
    q[0] = (1.0 - phi.mean) / p0
    for n in range(1, k):
        # sum_{j<n} q(j) * P(count > n-j)
        q[n] = float(q[:n] @ tail[n:0:-1]) / p0
    return LeadDistribution(masses=q)


def ruin_recursive(phi: PhiDistribution, k: int) -> RuinTable:
    """Ruin probabilities psi(0..k-1) by the direct recursion.

    The defining relation contains psi(u) on both sides (the j=0 term);
    rearranging and dividing by p(0) makes it explicit.
    """
    _check_stable(phi)
    if k < 1 or k > phi.k:
        raise ValueError(f"k={k} needs phi masses up to index {k - 1}")
    p0 = phi.masses[0]
    tail = _ccdf(phi, k)
    psi = np.empty(k)
    psi[0] = phi.mean
    for u in range(1, k):
        acc = phi.mean - tail[:u].sum()
        if u > 1:
            acc += float(tail[1:u] @ psi[u - 1:0:-1])
        psi[u] = acc / p0
    return RuinTable(psi=np.clip(psi, 0.0, 1.0))


def ruin_via_lindley(phi: PhiDistribution, k: int) -> RuinTable:
    """Ruin probabilities via the stationary lead: psi(u) = P(Q >= u)."""
    lead = lead_pmf(phi, k)
    psi = np.empty(k)
    psi[0] = phi.mean
    psi[1:] = 1.0 - np.cumsum(lead.masses[:k - 1])
    return RuinTable(psi=np.clip(psi, 0.0, 1.0))
