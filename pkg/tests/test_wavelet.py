"""4-tap Daubechies cascade and band-energy features."""

import numpy as np
import pytest

from csicount.wavelet import (
    D4_HIGHPASS,
    D4_LOWPASS,
    FeatureMatrix,
    WaveletDecomposition,
    dwt_decompose,
    dwt_reconstruct,
    extract_features,
    feature_matrix_from_components,
    level_band,
)

RATE = 1500.0


def tone(freq_hz, n=2560, rate=RATE):
    return np.sin(2 * np.pi * freq_hz * np.arange(n) / rate)


# ------------------------------------------------------------- filters


def test_filter_bank_identities():
    assert np.isclose(D4_LOWPASS.sum(), np.sqrt(2.0))
    assert abs(D4_HIGHPASS.sum()) < 1e-15
    assert np.isclose(np.dot(D4_LOWPASS, D4_LOWPASS), 1.0)
    assert np.isclose(np.dot(D4_HIGHPASS, D4_HIGHPASS), 1.0)
    assert abs(np.dot(D4_LOWPASS, D4_HIGHPASS)) < 1e-15


def test_single_level_matches_direct_convolution():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(8)
    decomp = dwt_decompose(x, levels=1)
    approx, detail = decomp.approx, decomp.details[0]
    for i in range(4):
        taps = x[(2 * i + np.arange(4)) % 8]
        assert abs(approx[i] - np.dot(taps, D4_LOWPASS)) < 1e-12
        assert abs(detail[i] - np.dot(taps, D4_HIGHPASS)) < 1e-12


# -------------------------------------------------------------- cascade


def test_constant_signal_details_vanish():
    x = np.full(1024, 2.0)
    decomp = dwt_decompose(x, levels=10)
    for d in decomp.details:
        assert np.max(np.abs(d)) < 1e-12
    # each level multiplies a constant by sqrt(2); after 10 levels the
    # single approximation coefficient is 2 * 2^5
    assert decomp.approx.shape == (1,)
    assert abs(decomp.approx[0] - 2.0 * 2.0**5) < 1e-9


def test_parseval_energy_conservation():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(1024)
    decomp = dwt_decompose(x, levels=10)
    total = sum(float(np.square(d).sum()) for d in decomp.details)
    total += float(np.square(decomp.approx).sum())
    ref = float(np.square(x).sum())
    assert abs(total - ref) / ref < 1e-9


def test_perfect_reconstruction():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(1024)
    decomp = dwt_decompose(x, levels=10)
    back = dwt_reconstruct(decomp)
    assert np.max(np.abs(back - x)) < 1e-9


def test_impulse_round_trip_and_energy():
    x = np.zeros(256)
    x[100] = 1.0
    decomp = dwt_decompose(x, levels=8)
    total = sum(float(np.square(d).sum()) for d in decomp.details)
    total += float(np.square(decomp.approx).sum())
    assert abs(total - 1.0) < 1e-9
    assert np.max(np.abs(dwt_reconstruct(decomp) - x)) < 1e-9


def test_level_coefficient_counts():
    decomp = dwt_decompose(np.zeros(1024), levels=10)
    assert decomp.levels == 10
    assert [d.shape[0] for d in decomp.details] == [
        512, 256, 128, 64, 32, 16, 8, 4, 2, 1,
    ]
    assert decomp.signal_len == 1024


def test_odd_split_cannot_be_inverted():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1000)  # 1000 -> 500 -> 250 -> 125 -> 63
    decomp = dwt_decompose(x, levels=4)
    with pytest.raises(ValueError):
        dwt_reconstruct(decomp)


def test_decompose_validation():
    with pytest.raises(ValueError):
        dwt_decompose(np.zeros(512), levels=10)  # 512 < 2^10
    with pytest.raises(ValueError):
        dwt_decompose(np.zeros(64), levels=0)
    with pytest.raises(ValueError):
        dwt_decompose(np.zeros((8, 8)), levels=1)
    bad = np.zeros(64)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        dwt_decompose(bad, levels=2)


# ------------------------------------------------------------- features


def test_zero_signal_zero_features():
    fm = extract_features(dwt_decompose(np.zeros(2560), levels=10))
    assert fm.values.shape == (20, 20)
    assert np.array_equal(fm.values, np.zeros((20, 20)))
    assert fm.levels == 10 and fm.n_windows == 20


def test_tone_energy_lands_in_its_band():
    # 300 Hz at 1500 Hz sampling falls in the 187.5-375 Hz band: level 2
    fm = extract_features(dwt_decompose(tone(300.0), levels=10))
    energy = fm.values[:10].mean(axis=1)
    assert int(np.argmax(energy)) == 1  # level 2 -> row index 1
    lo, hi = level_band(RATE, 2)
    assert lo < 300.0 <= hi


def test_tone_sweep_monotone_band_index():
    rows = []
    for freq in (500.0, 300.0, 150.0, 60.0, 30.0, 15.0):
        fm = extract_features(dwt_decompose(tone(freq), levels=10))
        rows.append(int(np.argmax(fm.values[:10].mean(axis=1))))
    assert rows == [0, 1, 2, 3, 4, 5]


def test_level_band_edges():
    assert level_band(RATE, 1) == (375.0, 750.0)
    assert level_band(RATE, 2) == (187.5, 375.0)
    with pytest.raises(ValueError):
        level_band(RATE, 0)


def test_feature_scaling_law():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(2560)
    f1 = extract_features(dwt_decompose(x, levels=10)).values
    f3 = extract_features(dwt_decompose(3.0 * x, levels=10)).values
    energy = slice(0, 10)
    variance = slice(10, 20)
    ref_e = np.abs(f1[energy]).max()
    ref_v = np.abs(f1[variance]).max()
    assert np.max(np.abs(f3[energy] - 9.0 * f1[energy])) < 1e-9 * ref_e * 9
    assert np.max(np.abs(f3[variance] - 81.0 * f1[variance])) < 1e-9 * ref_v * 81


def test_coefficient_window_mapping_and_forward_fill():
    # hand-built 8-level decomposition of a 512-sample signal: level 8
    # coefficients sit at samples 0 and 256, i.e. windows 0 and 2 of 4;
    # windows 1 and 3 must carry the last defined value forward
    details = [np.zeros(512 // 2**lv) for lv in range(1, 9)]
    details[7] = np.array([3.0, 5.0])
    decomp = WaveletDecomposition(tuple(details), np.zeros(2), 512)
    fm = extract_features(decomp, window=128)
    assert fm.values.shape == (16, 4)
    assert np.allclose(fm.values[7], [9.0, 9.0, 25.0, 25.0])
    assert np.allclose(fm.values[8 + 7], [0.0, 0.0, 0.0, 0.0])  # single-coeff var


def test_window_energy_is_mean_of_squares():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(256)
    decomp = dwt_decompose(x, levels=1)
    fm = extract_features(decomp, window=128)
    d = decomp.details[0]
    first = d[: 64]  # coefficients n with 2n // 128 == 0
    assert np.isclose(fm.values[0, 0], np.square(first).mean())
    assert np.isclose(fm.values[1, 0], np.square(first).var())


def test_incomplete_windows_dropped():
    fm = extract_features(dwt_decompose(np.zeros(300), levels=1), window=128)
    assert fm.n_windows == 2


def test_feature_window_validation():
    decomp = dwt_decompose(np.zeros(64), levels=1)
    with pytest.raises(ValueError):
        extract_features(decomp, window=0)
    with pytest.raises(ValueError):
        extract_features(decomp, window=128)  # shorter than one window


# ------------------------------------------------- component averaging


def test_component_average():
    rng = np.random.default_rng(6)
    cols = rng.standard_normal((2560, 3))
    fm = feature_matrix_from_components(cols, levels=10)
    singles = [
        extract_features(dwt_decompose(cols[:, c], levels=10)).values for c in range(3)
    ]
    assert np.allclose(fm.values, np.mean(singles, axis=0), atol=1e-12)


def test_component_average_accepts_1d():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(2560)
    fm = feature_matrix_from_components(x, levels=10)
    single = extract_features(dwt_decompose(x, levels=10)).values
    assert np.array_equal(fm.values, single)
