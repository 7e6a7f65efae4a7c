import numpy as np
import pytest
from numpy.testing import assert_allclose

from powruin.ingest import (BITCOIN_LIKE, DelayDataset, SynthSpec,
                            apply_cutoff, bin_delays, load_delays, synth_delays,
                            to_profile)


def write(tmp_path, text, name="delays.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_basic(tmp_path):
    p = write(tmp_path, "# header\n1.5\n0.25, 2024-01-01\n\n3.0\n")
    ds = load_delays(p)
    assert_allclose(ds.delays, [0.25, 1.5, 3.0])


def test_load_reports_line_numbers(tmp_path):
    p = write(tmp_path, "1.0\nnot-a-number\n")
    with pytest.raises(ValueError, match=r":2:"):
        load_delays(p)
    p2 = write(tmp_path, "1.0\n2.0\n-3.0\n", name="neg.csv")
    with pytest.raises(ValueError, match=r":3:"):
        load_delays(p2)


def test_load_rejects_empty(tmp_path):
    p = write(tmp_path, "# only comments\n")
    with pytest.raises(ValueError, match="no delay rows"):
        load_delays(p)


def test_dataset_sorts_and_validates():
    ds = DelayDataset(np.array([3.0, 1.0, 2.0]))
    assert_allclose(ds.delays, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        DelayDataset(np.array([]))
    with pytest.raises(ValueError):
        DelayDataset(np.array([-1.0]))


def test_cutoff_nearest_rank():
    ds = DelayDataset(np.arange(1.0, 101.0))  # 1..100
    kept, cutoff = apply_cutoff(ds, 0.1)
    assert cutoff == 90.0
    assert len(kept) == 90
    assert kept.delays[-1] == 90.0


def test_cutoff_epsilon_zero_keeps_all():
    ds = DelayDataset(np.array([1.0, 5.0, 2.0]))
    kept, cutoff = apply_cutoff(ds, 0.0)
    assert len(kept) == 3
    assert cutoff == 5.0


def test_cutoff_rejects_bad_epsilon():
    ds = DelayDataset(np.array([1.0]))
    with pytest.raises(ValueError):
        apply_cutoff(ds, 1.0)
    with pytest.raises(ValueError):
        apply_cutoff(ds, -0.1)


def test_bin_hand_example():
    # one sub-ms report + four delays in two equal-count bins
    ds = DelayDataset(np.array([0.0005, 1.0, 2.0, 3.0, 4.0]))
    b = bin_delays(ds, 2)
    assert b.sub_ms_fraction == pytest.approx(0.2)
    assert_allclose(b.bin_means, [0.001, 1.5, 3.5])
    assert list(b.counts) == [1, 2, 2]
    assert (b.M, b.M_prime, b.N) == (5, 4, 3)


def test_bin_leftover_goes_to_extra_bin():
    ds = DelayDataset(np.array([1.0, 2.0, 3.0, 4.0, 10.0]))
    b = bin_delays(ds, 2)
    # floor(5/2)=2 per bin, one leftover delay in its own bin
    assert list(b.counts) == [0, 2, 2, 1]
    assert_allclose(b.bin_means, [0.001, 1.5, 3.5, 10.0])


def test_bin_rejects_bad_args():
    ds = DelayDataset(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        bin_delays(ds, 0)
    with pytest.raises(ValueError):
        bin_delays(ds, 3)
    with pytest.raises(ValueError):
        bin_delays(DelayDataset(np.array([0.0001])), 1)


def test_to_profile_hand_example():
    ds = DelayDataset(np.array([0.0005, 1.0, 2.0, 3.0, 4.0]))
    prof = to_profile(bin_delays(ds, 2), 1 / 600)
    assert prof.thresholds == (0.0, 0.001, 1.5, 3.5)
    assert_allclose(prof.fractions, (0.0, 0.2, 0.6))
    assert prof.fullrate == 1 / 600


def test_pipeline_fractions_bounded():
    ds = synth_delays(BITCOIN_LIKE, 5_000, seed=11)
    kept, _ = apply_cutoff(ds, 0.01)
    prof = to_profile(bin_delays(kept, 32), 1.0)
    f = np.array(prof.fractions)
    assert np.all(np.diff(f) >= 0)
    assert f[-1] <= 1.0


def test_synth_reproducible():
    a = synth_delays(BITCOIN_LIKE, 1000, seed=42)
    b = synth_delays(BITCOIN_LIKE, 1000, seed=42)
    c = synth_delays(BITCOIN_LIKE, 1000, seed=43)
    assert_allclose(a.delays, b.delays)
    assert not np.allclose(a.delays, c.delays)


def test_synth_statistics():
    ds = synth_delays(BITCOIN_LIKE, 200_000, seed=0)
    assert np.median(ds.delays) == pytest.approx(6.5, rel=0.1)
    assert ds.delays.mean() == pytest.approx(12.6, rel=0.1)
    sub = np.mean(ds.delays < 1e-3)
    assert sub == pytest.approx(0.01, rel=0.25)


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(atom_weight=0.5, components=((0.4, 1.0, 1.0),))
    with pytest.raises(ValueError):
        SynthSpec(atom_weight=0.5, components=((0.5, -1.0, 1.0),))
