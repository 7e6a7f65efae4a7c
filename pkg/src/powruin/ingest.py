"""Block propagation delay datasets and their reduction to hashrate profiles.

Processing follows three steps: drop the largest delays beyond the
100(1-epsilon)-th percentile (assumed to be non-mining echo nodes), split
off sub-millisecond reports (the mining node itself, pinned to exactly one
millisecond), then partition the rest into equal-count bins whose sample
means become the hashrate thresholds.  The cumulative fraction of reports
at or below each threshold becomes the mining-rate fraction of the segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .delaymodel import HashrateProfile

__all__ = [
    "DelayDataset", "BinningResult", "SynthSpec", "BITCOIN_LIKE",
    "load_delays", "apply_cutoff", "bin_delays", "to_profile", "synth_delays",
]

_SUB_MS = 1e-3


@dataclass(frozen=True)
class DelayDataset:
    delays: np.ndarray  # seconds, sorted ascending
    source_tag: str = ""

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        if len(d) == 0:
            raise ValueError("empty delay dataset")
        if np.any(d < 0):
            raise ValueError("negative delay in dataset")
        object.__setattr__(self, "delays", np.sort(d))

    def __len__(self):
        return len(self.delays)


@dataclass(frozen=True)
class BinningResult:
    sub_ms_fraction: float
    bin_means: np.ndarray  # b_0 .. b_{N-1}, strictly increasing
    counts: np.ndarray
    M: int
    M_prime: int
    N: int

    def __post_init__(self):
        means = np.asarray(self.bin_means, dtype=float)
        if np.any(np.diff(means) <= 0):
            raise ValueError("bin means must be strictly increasing")
        if not 0 <= self.sub_ms_fraction <= 1:
            raise ValueError("sub-ms fraction out of [0, 1]")
        if int(np.sum(self.counts)) != self.M:
            raise ValueError("bin counts do not sum to the dataset size")
        object.__setattr__(self, "bin_means", means)
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=int))


def load_delays(path, source_tag: str | None = None) -> DelayDataset:
    """Parse a delay file: one delay in seconds per line.

    Lines starting with '#' are ignored; an optional second comma-separated
    column (e.g. a date) is dropped.  Malformed or negative rows are
    reported with their line number.
    """
    path = Path(path)
    delays = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            token = line.split(",")[0].strip()
            try:
                value = float(token)
            except ValueError as exc:
                raise ValueError(
                    f"{path}:{lineno}: cannot parse delay {token!r}") from exc
            if not math.isfinite(value) or value < 0:
                raise ValueError(
                    f"{path}:{lineno}: invalid delay {value}")
            delays.append(value)
    if not delays:
        raise ValueError(f"{path}: no delay rows found")
    return DelayDataset(np.array(delays), source_tag or str(path))


def apply_cutoff(ds: DelayDataset, epsilon: float):
    """Drop delays above the 100(1-epsilon)-th percentile.

    Nearest-rank percentile: the value at 1-based index ceil((1-eps) * n)
    of the sorted data.  Returns the retained dataset and the cutoff delay.
    """
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    n = len(ds)
    if epsilon == 0:
        return ds, float(ds.delays[-1])
    rank = max(math.ceil((1.0 - epsilon) * n), 1)
    cutoff = float(ds.delays[rank - 1])
    kept = ds.delays[ds.delays <= cutoff]
    return DelayDataset(kept, ds.source_tag), cutoff


def bin_delays(ds: DelayDataset, N_prime: int) -> BinningResult:
    """Split sub-millisecond reports, then bin the rest by equal counts.

    The sub-ms bin pins each report to exactly one millisecond.  The
    remaining delays form N' bins of floor(M'/N') entries in ascending
    order, with any leftover largest delays in one final bin.
    """
    if N_prime < 1:
        raise ValueError("N_prime must be >= 1")
    M = len(ds)
    sub = ds.delays < _SUB_MS
    n_sub = int(sub.sum())
    rest = ds.delays[~sub]
    M_prime = len(rest)
    if M_prime == 0:
        raise ValueError("all delays are sub-millisecond; nothing to bin")
    if N_prime > M_prime:
        raise ValueError(f"N_prime={N_prime} exceeds {M_prime} binnable delays")

    per_bin = M_prime // N_prime
    counts = [n_sub]
    means = [_SUB_MS]
    for i in range(N_prime):
        chunk = rest[i * per_bin:(i + 1) * per_bin]
        counts.append(len(chunk))
        means.append(float(chunk.mean()))
    leftover = rest[N_prime * per_bin:]
    if len(leftover):
        counts.append(len(leftover))
        means.append(float(leftover.mean()))
    return BinningResult(sub_ms_fraction=n_sub / M,
                         bin_means=np.array(means),
                         counts=np.array(counts),
                         M=M, M_prime=M_prime, N=len(means))


def to_profile(binning: BinningResult, fullrate_seed: float) -> HashrateProfile:
    """Hashrate profile with thresholds at the bin means.

    Segment i runs up to threshold b_{i-1}; the first segment mines at
    fraction 0, the second at the sub-ms fraction, and each further segment
    adds one equal-count bin's share of the data.
    """
    N = binning.N
    thresholds = np.concatenate([[0.0], binning.bin_means])
    fractions = np.empty(N)
    fractions[0] = 0.0
    if N > 1:
        fractions[1] = binning.sub_ms_fraction
    if N > 2:
        # every equal-count bin carries floor(M'/N') entries
        increment = binning.counts[1] / binning.M
        for i in range(2, N):
            fractions[i] = fractions[i - 1] + increment
    if np.any(fractions > 1.0 + 1e-12):
        raise ValueError("cumulative fractions exceed one")
    return HashrateProfile(tuple(thresholds), tuple(np.minimum(fractions, 1.0)),
                           fullrate_seed)


@dataclass(frozen=True)
class SynthSpec:
    """Mixture of a sub-ms atom and right-skewed lognormal components.

    components: tuples (weight, median_seconds, sigma) of lognormals.
    """

    atom_weight: float
    components: tuple

    def __post_init__(self):
        total = self.atom_weight + sum(w for w, _, _ in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {total}, expected 1")
        if self.atom_weight < 0 or any(w < 0 for w, _, _ in self.components):
            raise ValueError("negative mixture weight")
        if any(med <= 0 or sig <= 0 for _, med, sig in self.components):
            raise ValueError("component medians and sigmas must be positive")


# Tuned so the sample median/mean land near 6.5 s / 12.6 s.
BITCOIN_LIKE = SynthSpec(
    atom_weight=0.01,
    components=((0.99, 6.5, math.sqrt(2.0 * math.log(12.6 / 6.5))),),
)


def synth_delays(spec: SynthSpec, n: int, seed: int = 0) -> DelayDataset:
    """Reproducible synthetic delay dataset for a mixture spec."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    weights = [spec.atom_weight] + [w for w, _, _ in spec.components]
    choices = rng.choice(len(weights), size=n, p=weights)
    out = np.empty(n)
    out[choices == 0] = 0.5 * _SUB_MS
    for ci, (_, median, sigma) in enumerate(spec.components, start=1):
        mask = choices == ci
        out[mask] = rng.lognormal(math.log(median), sigma, size=int(mask.sum()))
    return DelayDataset(out, source_tag=f"synthetic(seed={seed})")
