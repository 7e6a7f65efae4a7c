"""Double-spend probability under the k-deep confirmation rule.

The adversary's block count at the confirmation instant combines three
independent pieces: the stationary pre-mining lead, the blocks mined over k
honest inter-mining intervals, and a Poisson count over the final
propagation window.  All generating-function algebra is carried out on
k-partial pgfs (polynomials truncated to degree k-1); truncation is exact
for the retained coefficients since degrees only add.

The honest lead at confirmation is the index reversal Z = k-1-V, and the
violation probability is q = 1 - sum_u p_Z(u) (1 - psi(u)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import delaymodel
from .delaymodel import HashrateProfile, calibrate_alpha
from .medist import MEDistribution
from .phi import PhiDistribution, phi_from_theta
from .ruinlindley import LeadDistribution, RuinTable, lead_pmf, ruin_via_lindley

__all__ = [
    "PartialPGF", "DoubleSpendResult", "DelayModel",
    "poisson_partial_pgf", "truncated_product", "truncated_power",
    "adversary_lead_pmf", "honest_lead_pmf", "compute_q", "analyze",
]


@dataclass(frozen=True)
class PartialPGF:
    """Coefficients p(0..k-1) of a truncated probability generating function."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or len(c) == 0:
            raise ValueError("coefficients must be a nonempty vector")
        if np.any(c < -1e-12):
            raise ValueError("negative pgf coefficient")
        c = np.maximum(c, 0.0)
        if c.sum() > 1 + 1e-8:
            raise ValueError(f"coefficients sum to {c.sum()} > 1")
        object.__setattr__(self, "coefficients", c)

    @property
    def k(self) -> int:
        return len(self.coefficients)

    def __call__(self, z: float) -> float:
        return float(np.polyval(self.coefficients[::-1], z))


@dataclass(frozen=True)
class DoubleSpendResult:
    q: float
    p_V: PartialPGF
    p_Z: np.ndarray
    deficit_mass: float
    model_tag: str
    k: int
    unstable_regime: bool = False


@dataclass(frozen=True)
class DelayModel:
    """Delay-model selection for :func:`analyze`.

    kind: 'zero' | 'fixed' | 'random' | 'variable'.
    'fixed' needs ``delay``; 'random' needs ``delay_dist`` plus an explicit
    ``delta_conf`` at analyze time; 'variable' needs ``profile``.
    """

    kind: str
    delay: float | None = None
    delay_dist: MEDistribution | None = None
    profile: HashrateProfile | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "fixed", "random", "variable"):
            raise ValueError(f"unknown delay model kind {self.kind!r}")
        if self.kind == "fixed" and (self.delay is None or self.delay < 0):
            raise ValueError("fixed model needs a nonnegative delay")
        if self.kind == "random" and self.delay_dist is None:
            raise ValueError("random model needs a delay distribution")
        if self.kind == "variable" and self.profile is None:
            raise ValueError("variable model needs a hashrate profile")


def poisson_partial_pgf(lam: float, k: int) -> PartialPGF:
    """First k Poisson masses as a partial pgf."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return PartialPGF(stats.poisson.pmf(np.arange(k), lam))


def truncated_product(a: PartialPGF, b: PartialPGF) -> PartialPGF:
    """Polynomial product truncated to degree k-1.

    Exact for all retained coefficients: the discarded cross terms only
    contribute to degrees >= k.
    """
    if a.k != b.k:
        raise ValueError(f"length mismatch: {a.k} vs {b.k}")
    return PartialPGF(np.convolve(a.coefficients, b.coefficients)[:a.k])


def truncated_power(a: PartialPGF, n: int) -> PartialPGF:
    """n-fold truncated product by binary exponentiation."""
    if n < 0:
        raise ValueError("power must be nonnegative")
    ident = np.zeros(a.k)
    ident[0] = 1.0
    result = PartialPGF(ident)
    base = a
    while n:
        if n & 1:
            result = truncated_product(result, base)
        n >>= 1
        if n:
            base = truncated_product(base, base)
    return result


def adversary_lead_pmf(leadQ: LeadDistribution, phi: PhiDistribution,
                       delta_conf: float, beta: float, k: int) -> PartialPGF:
    """Adversary block count V at the confirmation instant.

    V = pre-mining lead + counts over k honest intervals + Poisson blocks
    over the final delta_conf propagation window.
    """
    gq = PartialPGF(np.asarray(leadQ.masses[:k], dtype=float))
    gphi = PartialPGF(np.asarray(phi.masses[:k], dtype=float))
    if gq.k != k or gphi.k != k:
        raise ValueError("lead and phi must carry k masses")
    gd = poisson_partial_pgf(delta_conf * beta, k)
    return truncated_product(truncated_product(gq, truncated_power(gphi, k)), gd)


def honest_lead_pmf(p_V: PartialPGF, k: int):
    """Honest lead masses p_Z(i) = p_V(k-1-i) and the deficit mass P(Z < 0)."""
    if p_V.k != k:
        raise ValueError(f"p_V has {p_V.k} coefficients, expected {k}")
    p_Z = p_V.coefficients[::-1].copy()
    deficit = max(1.0 - float(p_V.coefficients.sum()), 0.0)
    return p_Z, deficit


def compute_q(p_Z: np.ndarray, deficit_mass: float, ruin: RuinTable,
              model_tag: str = "", p_V: PartialPGF | None = None) -> DoubleSpendResult:
    """Violation probability q = 1 - sum_u p_Z(u) (1 - psi(u)).

    The deficit mass (adversary already at or past the honest tip) is
    covered automatically by the 1-minus-sum structure.
    """
    p_Z = np.asarray(p_Z, dtype=float)
    k = len(p_Z)
    psi = ruin.psi[:k]
    if len(psi) < k:
        raise ValueError("ruin table shorter than p_Z")
    if np.any(p_Z < 0) or np.any(p_Z > 1):
        raise ValueError("p_Z out of [0, 1]")
    q = 1.0 - float(np.sum(p_Z * (1.0 - psi)))
    q = min(max(q, 0.0), 1.0)
    if p_V is None:
        p_V = PartialPGF(p_Z[::-1].copy())
    return DoubleSpendResult(q=q, p_V=p_V, p_Z=p_Z, deficit_mass=deficit_mass,
                             model_tag=model_tag, k=k)


def _build_theta(model: DelayModel, block_interval: float, K: int,
                 rel_tol: float = 1e-6):
    """Calibrated (theta, fullrate, default delta_conf, tag) for a model."""
    if model.kind == "zero":
        alpha = 1.0 / block_interval
        return delaymodel.zero_delay_theta(alpha), alpha, 0.0, "zero"
    if model.kind == "fixed":
        if model.delay == 0:
            alpha = 1.0 / block_interval
            return delaymodel.zero_delay_theta(alpha), alpha, 0.0, "fixed(0)"
        if model.delay >= block_interval:
            raise ValueError("delay must be below the block interval")
        # mean = delay + 1/alpha, so the calibrated rate is closed-form
        alpha = 1.0 / (block_interval - model.delay)
        theta = delaymodel.fixed_delay_theta(model.delay, alpha, K)
        return theta, alpha, float(model.delay), f"fixed({model.delay:g})"
    if model.kind == "random":
        dmean = model.delay_dist.mean()
        if dmean >= block_interval:
            raise ValueError("mean delay must be below the block interval")
        alpha = 1.0 / (block_interval - dmean)
        theta = delaymodel.random_delay_theta(model.delay_dist, alpha)
        return theta, alpha, None, f"random(mean={dmean:g})"
    cal = calibrate_alpha(model.profile, block_interval, K, rel_tol=rel_tol)
    profile = model.profile.with_fullrate(cal.calibrated_rate)
    theta = delaymodel.assemble_theta(profile, K)
    tag = f"variable(N={profile.n_segments})"
    return theta, cal.calibrated_rate, profile.max_delay, tag


def analyze(model: DelayModel, beta_fraction: float, block_interval: float,
            k_max: int, K: int = 27, delta_conf: float | None = None,
            calibration_tol: float = 1e-6) -> list[DoubleSpendResult]:
    """Violation probabilities for confirmation depths k = 1..k_max.

    Calibrates the honest rate to the block interval, builds the adversary
    count distribution once with k_max masses, and reuses it per depth.
    The adversary rate is beta_fraction times the calibrated full rate.
    """
    if not 0 < beta_fraction < 1:
        raise ValueError("beta_fraction must lie in (0, 1)")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    theta, fullrate, default_dconf, tag = _build_theta(
        model, block_interval, K, rel_tol=calibration_tol)
    if delta_conf is None:
        if default_dconf is None:
            raise ValueError(
                "random-delay models need an explicit delta_conf")
        delta_conf = default_dconf
    beta = beta_fraction * fullrate
    tag = f"{tag},beta={beta_fraction:g},T={block_interval:g},K={K}"

    phi = phi_from_theta(theta, beta, k_max)
    if phi.mean >= 1.0:
        p_unstable = PartialPGF(np.zeros(1))
        return [DoubleSpendResult(q=1.0, p_V=p_unstable, p_Z=np.zeros(k),
                                  deficit_mass=1.0, model_tag=tag, k=k,
                                  unstable_regime=True)
                for k in range(1, k_max + 1)]
    lead_full = lead_pmf(phi, k_max)
    ruin_full = ruin_via_lindley(phi, k_max)

    results = []
    for k in range(1, k_max + 1):
        phi_k = PhiDistribution(masses=phi.masses[:k].copy(), mean=phi.mean)
        lead_k = LeadDistribution(masses=lead_full.masses[:k].copy())
        p_V = adversary_lead_pmf(lead_k, phi_k, delta_conf, beta, k)
        p_Z, deficit = honest_lead_pmf(p_V, k)
        ruin_k = RuinTable(psi=ruin_full.psi[:k].copy())
        results.append(compute_q(p_Z, deficit, ruin_k, model_tag=tag, p_V=p_V))
    return results
