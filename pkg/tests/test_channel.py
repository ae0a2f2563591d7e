import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jcaskf.channel import (
    ClockDraws,
    ClockModel,
    CsiTensor,
    OfdmConfig,
    calibrate_power_for_snr,
    draw_clock_offsets,
    draw_reflections,
    simulate_csi,
    uplink_snr,
)
from jcaskf.geometry import derive_paths, steering_vector

from conftest import make_ofdm, make_scene


def scalar_csi(scene, ofdm, draws, beta):
    """Entry-by-entry evaluation of the CSI model, one antenna/subcarrier/packet at a time."""
    paths = derive_paths(scene)
    out = np.zeros((scene.bs_array.size, ofdm.subcarriers, ofdm.packets), complex)
    for k, p in enumerate(paths):
        b = p.gain if k == 0 else p.gain * beta[k - 1]
        a = steering_vector(scene.bs_array, p.aoa)
        for n in range(ofdm.subcarriers):
            for m in range(ofdm.packets):
                ph = np.exp(2j * np.pi * m * ofdm.packet_interval * (p.doppler + draws.cfo[m]))
                ph *= np.exp(-2j * np.pi * n * ofdm.subcarrier_spacing * (p.delay + draws.timing[m]))
                for i in range(a.size):
                    out[i, n, m] += np.sqrt(ofdm.tx_power) * b * ph * a[i]
    return out


def test_packet_interval():
    o = make_ofdm()
    assert o.packet_interval == pytest.approx(7 / 480e3)
    assert o.bandwidth == pytest.approx(122.88e6)


def test_matches_scalar_loop():
    scene = make_scene(rows=2)
    ofdm = make_ofdm(subcarriers=5, packets=4, tx_power=3.0)
    draws = draw_clock_offsets(ClockModel(5e-9, 240.0), 4, 1)
    beta = np.array([0.3 - 1.2j])
    csi = simulate_csi(scene, ofdm, draws, reflections=beta)
    assert np.allclose(csi.data, scalar_csi(scene, ofdm, draws, beta), rtol=1e-10, atol=0)


def test_first_entry_is_scaled_steering():
    scene = make_scene(rows=3)
    ofdm = make_ofdm(subcarriers=4, packets=3, tx_power=2.0)
    los = derive_paths(scene)[:1]
    csi = simulate_csi(scene, ofdm, ClockDraws.zeros(3), paths=los)
    expect = np.sqrt(2.0) * los[0].gain * steering_vector(scene.bs_array, los[0].aoa)
    assert np.allclose(csi.data[:, 0, 0], expect)


def test_tensor_shape_and_validation(scene, ofdm):
    csi = simulate_csi(scene, ofdm, ClockDraws.zeros(64))
    assert csi.data.shape == (64, 256, 64)
    with pytest.raises(ValueError):
        CsiTensor(csi.data[:, :10], ofdm, scene.bs_array)
    with pytest.raises(ValueError):
        simulate_csi(scene, ofdm, ClockDraws.zeros(63))
    with pytest.raises(ValueError):
        simulate_csi(scene, ofdm, ClockDraws.zeros(64), w_t=np.array([2.0]))


def test_single_path_rank_one():
    scene = make_scene(rows=4)
    ofdm = make_ofdm(subcarriers=8, packets=6)
    csi = simulate_csi(scene, ofdm, draw_clock_offsets(ClockModel(5e-9, 240), 6, 0), paths=derive_paths(scene)[:1])
    flat = csi.data.reshape(16, -1)
    s = np.linalg.svd(flat, compute_uv=False)
    assert s[1] / s[0] < 1e-12


def test_clock_phase_common_to_antennas():
    scene = make_scene(rows=3)
    ofdm = make_ofdm(subcarriers=6, packets=5)
    csi = simulate_csi(scene, ofdm, draw_clock_offsets(ClockModel(5e-9, 240), 5, 2), paths=derive_paths(scene)[:1])
    ratio = csi.data[4] / csi.data[0]
    assert np.allclose(ratio, ratio[0, 0])


def test_clock_draws():
    assert not np.any(draw_clock_offsets(ClockModel(), 10, 0).timing)
    a = draw_clock_offsets(ClockModel(5e-9, 240), 8, 3)
    b = draw_clock_offsets(ClockModel(5e-9, 240), 8, 3)
    assert np.array_equal(a.timing, b.timing) and np.array_equal(a.cfo, b.cfo)
    big = draw_clock_offsets(ClockModel(5e-9, 240), 100_000, 4)
    assert np.std(big.timing) == pytest.approx(5e-9, rel=0.02)
    assert np.std(big.cfo) == pytest.approx(240, rel=0.02)
    assert np.isrealobj(big.timing)


def test_noise_variance(scene):
    ofdm = make_ofdm(subcarriers=32, packets=8)
    silent = make_ofdm(subcarriers=32, packets=8, tx_power=0.0)
    csi = simulate_csi(scene, silent, ClockDraws.zeros(8), noise_power=2.5, seed=5)
    assert np.var(csi.data) == pytest.approx(2.5, rel=0.05)
    assert ofdm.packets == 8


def test_reflection_draws_variance(scene):
    rng = np.random.default_rng(0)
    draws = np.array([draw_reflections(scene, rng)[0] for _ in range(20000)])
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(10.0, rel=0.05)


def test_snr_unit_cases(scene):
    ofdm = make_ofdm()
    p = calibrate_power_for_snr(scene, ofdm, 0.0, 1e-12)
    assert uplink_snr(scene, ofdm.with_power(p), None, 1e-12) == pytest.approx(0.0, abs=1e-9)
    assert uplink_snr(scene, ofdm.with_power(2 * p), None, 1e-12) == pytest.approx(10 * np.log10(2), abs=1e-9)
    with pytest.raises(ValueError):
        uplink_snr(scene, ofdm, None, 0.0)


@given(st.floats(-20, 40))
@settings(max_examples=25, deadline=None)
def test_snr_calibration_round_trip(target):
    scene = make_scene(rows=2)
    ofdm = make_ofdm()
    p = calibrate_power_for_snr(scene, ofdm, target, 4.9177e-12)
    assert uplink_snr(scene, ofdm.with_power(p), None, 4.9177e-12) == pytest.approx(target, abs=1e-9)
    assert calibrate_power_for_snr(scene, ofdm, target + 1, 4.9177e-12) > p
