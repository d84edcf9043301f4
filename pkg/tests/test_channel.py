import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwave_link.channel import (
    SPEED_OF_LIGHT, ArrayGeometry, ChannelParams, ChannelRealization, array_response, composite_from_paths,
    composite_taps, effective_channel, los_indicator, los_probability, path_loss, sample_realization,
)
from mmwave_link.frontend import PulseShape
from conftest import crandn


# -- array response ----------------------------------------------------------------------

def test_single_element_response():
    assert np.allclose(array_response(ArrayGeometry(1), 0.3, 1.1), [1.0])


def test_broadside_two_elements():
    a = array_response(ArrayGeometry(2), 0.0, np.pi / 2)
    assert np.allclose(a, np.ones(2) / np.sqrt(2), atol=1e-15)


def test_ula_phase_progression():
    a = array_response(ArrayGeometry(4), np.pi / 6, np.pi / 2)
    expected = 0.5 * np.exp(-1j * np.pi / 2 * np.arange(4))
    assert np.allclose(a, expected, atol=1e-14)


def test_planar_row_major_ordering():
    geom = ArrayGeometry(3, 2, 0.5)
    az, el = 0.4, 1.2
    a = array_response(geom, az, el)
    k = 2 * np.pi * 0.5
    expected = np.array([np.exp(-1j * k * (m * np.sin(az) * np.sin(el) + n * np.cos(el)))
                         for m in range(3) for n in range(2)]) / np.sqrt(6)
    assert np.allclose(a, expected, atol=1e-14)


@given(st.integers(1, 12), st.integers(1, 4), st.floats(-np.pi, np.pi), st.floats(0, np.pi))
@settings(max_examples=60, deadline=None)
def test_array_response_unit_norm(y, z, az, el):
    a = array_response(ArrayGeometry(y, z), az, el)
    assert a.size == y * z
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(0)
    with pytest.raises(ValueError):
        ArrayGeometry(2, 1, 0.0)


# -- LOS probability and path loss --------------------------------------------------------

def test_los_probability_at_39m():
    p = min(20 / 39, 1) * (1 - np.exp(-1)) + np.exp(-1)
    assert los_probability(39.0) == pytest.approx(p, rel=1e-12)
    assert los_probability(39.0) == pytest.approx(0.6920, abs=5e-5)


def test_los_probability_short_range_limit():
    assert los_probability(1e-6) == pytest.approx(1.0, abs=1e-6)
    assert los_probability(10.0) == 1.0


def test_los_indicator_frequency(rng):
    d, n = 60.0, 100_000
    p = los_probability(d)
    hits = sum(los_indicator(d, rng) for _ in range(n))
    assert abs(hits / n - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_path_loss_values():
    assert path_loss(1.0, True) == pytest.approx(10 ** (-6.98), rel=1e-12)
    assert path_loss(1.0, True) == pytest.approx(1.047e-7, rel=1e-3)
    assert 10 * np.log10(path_loss(100.0, True)) == pytest.approx(-109.8, abs=1e-10)
    assert 10 * np.log10(path_loss(100.0, False)) == pytest.approx(-(82.7 + 53.8), abs=1e-10)


@given(st.floats(0.5, 500), st.floats(0.5, 500), st.booleans())
def test_path_loss_monotone(d1, d2, los):
    lo, hi = sorted((d1, d2))
    assert path_loss(lo, los) >= path_loss(hi, los)


def test_path_loss_rejects_nonpositive():
    with pytest.raises(ValueError):
        path_loss(0.0, True)
    with pytest.raises(ValueError):
        los_probability(-1.0)


# -- realizations ---------------------------------------------------------------------------

def test_single_path_normalization(rng):
    params = ChannelParams(n_clusters=1, rays_per_cluster=1, los_enabled=False)
    real = sample_realization(params, 50.0, 10, 50, rng)
    assert real.normalization == pytest.approx(np.sqrt(500))


def test_normalization_identity(rng):
    real = sample_realization(ChannelParams(), 50.0, 10, 50, rng)
    assert real.normalization**2 * real.n_rays == pytest.approx(500, rel=1e-14)


def test_gain_variance(rng):
    params = ChannelParams(n_clusters=100, rays_per_cluster=100, los_enabled=False)
    gains = np.concatenate([sample_realization(params, 50.0, 1, 1, rng).gains for _ in range(10)])
    assert gains.size == 100_000
    assert np.mean(np.abs(gains) ** 2) == pytest.approx(1.0, abs=0.02)


def test_delay_range(rng):
    d = 80.0
    for _ in range(20):
        real = sample_realization(ChannelParams(), d, 4, 4, rng)
        assert np.all(real.delays >= d / SPEED_OF_LIGHT - 1e-18)
        assert np.all(real.delays <= 1.1 * d / SPEED_OF_LIGHT + 1e-18)
        assert np.all((real.attenuations > 0) & (real.attenuations <= 1))
        if real.los_present:
            assert 0 <= real.los.phase < 2 * np.pi


def test_cluster_structure(rng):
    real = sample_realization(ChannelParams(n_clusters=3, rays_per_cluster=4), 40.0, 2, 2, rng)
    clusters = real.clusters
    assert [len(c) for c in clusters] == [4, 4, 4]
    assert clusters[1][0].length == real.lengths[4]


def test_realization_determinism():
    a = sample_realization(ChannelParams(), 70.0, 10, 50, np.random.default_rng(5))
    b = sample_realization(ChannelParams(), 70.0, 10, 50, np.random.default_rng(5))
    assert a.to_json() == b.to_json()


def test_realization_json_round_trip(rng):
    real = sample_realization(ChannelParams(), 30.0, 3, 5, rng)
    back = ChannelRealization.from_json(real.to_json())
    assert back.to_json() == real.to_json()
    assert np.array_equal(back.gains, real.gains)


def test_realization_is_immutable(rng):
    real = sample_realization(ChannelParams(), 30.0, 3, 5, rng)
    with pytest.raises(ValueError):
        real.gains[0] = 0


# -- composite taps --------------------------------------------------------------------------

def test_on_grid_single_path_rect():
    # rectangular pulses give an exactly Nyquist cascade: one nonzero tap
    g = np.array([[[0.3 - 0.2j]]])
    ch = composite_from_paths(g, np.array([0.0]), PulseShape("rect"), 1e-9)
    assert ch.tap_count == 2  # P + 2 P_h - 1 with P = P_h = 1
    assert ch.taps[0, 0, 0] == pytest.approx(0.3 - 0.2j, abs=1e-15)
    assert ch.taps[1, 0, 0] == 0


def test_on_grid_single_path_realization():
    params = ChannelParams(n_clusters=1, rays_per_cluster=1, los_enabled=False)
    real = sample_realization(params, 45.0, 4, 6, np.random.default_rng(1))
    tx, rx = ArrayGeometry(6), ArrayGeometry(4)
    ch = composite_taps(real, PulseShape("rect"), 2e-9, tx, rx)
    expected = (real.normalization * real.gains[0] * np.sqrt(real.attenuations[0])
                * np.outer(array_response(rx, real.azimuth_rx[0], real.elevation_rx[0]),
                           array_response(tx, real.azimuth_tx[0], real.elevation_tx[0]).conj()))
    assert np.allclose(ch.taps[0], expected, rtol=0, atol=1e-14 * np.abs(expected).max())
    assert np.all(ch.taps[1:] == 0)


def test_reference_multipath_span():
    # 50 ns of delay spread at 2.44 ns per symbol
    delays = np.array([0.0, 0.05e-6 / 2.44e-9])
    g = np.ones((2, 1, 1), dtype=complex)
    ch = composite_from_paths(g, delays, PulseShape(), 2.44e-9)
    assert ch.multipath_span == 21
    assert ch.filter_span == 9
    assert ch.tap_count == ch.multipath_span + 2 * ch.filter_span - 1


def _raised_cosine(t, a):
    t = np.asarray(t, dtype=float)
    den = 1 - (2 * a * t) ** 2
    safe = np.where(np.abs(den) < 1e-12, 1.0, den)
    out = np.sinc(t) * np.cos(np.pi * a * t) / safe
    return np.where(np.abs(den) < 1e-12, np.pi / 4 * np.sinc(1 / (2 * a)), out)


@pytest.mark.parametrize("delta", [0.0, 0.25, 0.5])
def test_off_grid_energy_matches_raised_cosine(delta):
    # energy of the sampled cascade vs the untruncated raised cosine at the same offset
    pulse = PulseShape(span=8, oversampling=16)
    ch = composite_from_paths(np.ones((1, 1, 1), dtype=complex), np.array([delta]), pulse, 1.0)
    energy = np.sum(np.abs(ch.taps) ** 2)
    n = np.arange(-200, 201)
    oracle = np.sum(_raised_cosine(n - delta, 0.22) ** 2)
    assert energy == pytest.approx(oracle, abs=5e-3)


def test_composite_linear_in_gains(rng):
    params = ChannelParams(los_enabled=False)
    real = sample_realization(params, 50.0, 3, 4, rng)
    c = 0.7 - 1.3j
    pulse = PulseShape()
    tx, rx = ArrayGeometry(4), ArrayGeometry(3)
    a = composite_taps(real, pulse, 2.44e-9, tx, rx).taps
    b = composite_taps(real.scaled(c), pulse, 2.44e-9, tx, rx).taps
    assert np.max(np.abs(b - c * a)) <= 1e-12 * np.max(np.abs(a))


def test_tap_count_relation(rng):
    for d in (30.0, 90.0, 150.0):
        real = sample_realization(ChannelParams(), d, 2, 2, rng)
        ch = composite_taps(real, PulseShape(), 2.44e-9, ArrayGeometry(2), ArrayGeometry(2))
        assert ch.tap_count == ch.multipath_span + 2 * ch.filter_span - 1
        assert ch.offset == ch.filter_span - 1


def test_empty_realization_rejected():
    empty = ChannelRealization(10.0, *(np.zeros(0) for _ in range(7)), rays_per_cluster=(),
                               normalization=1.0, los=None)
    with pytest.raises(ValueError, match="degenerate"):
        composite_taps(empty, PulseShape(), 1e-9, ArrayGeometry(2), ArrayGeometry(2))


def test_frequency_response_needs_full_memory():
    ch = composite_from_paths(np.ones((1, 1, 1), dtype=complex), np.array([2.5]), PulseShape("rect"), 1.0)
    with pytest.raises(ValueError):
        ch.frequency_response(ch.tap_count - 1)
    assert ch.frequency_response(8).shape == (8, 1, 1)


# -- effective channel -------------------------------------------------------------------------

def test_effective_identity(rng):
    taps = crandn(rng, 3, 4, 5)
    assert np.allclose(effective_channel(taps, np.eye(5), np.eye(4)), taps)


def test_effective_nullspace(rng):
    u, v = crandn(rng, 4), crandn(rng, 6)
    taps = np.outer(u, v.conj())[None]
    q = np.linalg.svd(v.conj()[None])[2][1:3].conj().T  # orthogonal to v
    out = effective_channel(taps, q, np.eye(4))
    assert np.max(np.abs(out)) < 1e-12


def test_effective_matches_product(rng):
    taps = crandn(rng, 2, 3, 4)
    q, d = crandn(rng, 4, 2), crandn(rng, 3, 2)
    out = effective_channel(taps, q, d)
    for n in range(2):
        assert np.allclose(out[n], d.conj().T @ taps[n] @ q, atol=1e-14)


def test_effective_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        effective_channel(crandn(rng, 2, 3, 4), crandn(rng, 5, 2), crandn(rng, 3, 2))
