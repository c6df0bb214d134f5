import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from conftest import points
from isarfusion.constants import SPEED_OF_LIGHT as C
from isarfusion.isar import (
    CfarConfigError,
    Detections,
    ImageGateError,
    IsarImage,
    StretchConfig,
    chirp_wavelength,
    cluster_to_measurement,
    compensate_and_stretch,
    form_image,
    image_gate,
    interferogram,
    measurements_from_clusters,
    motion_compensate,
    os_cfar_detect,
    os_cfar_scale,
    stretch_process,
)
from isarfusion.metrics import image_entropy
from isarfusion.radar_synth import RadarConfig, synthesize_cpi


def _cube(cfg, scat):
    return synthesize_cpi(cfg, scat, None, 0, noise=False)


def _peak(img):
    return np.unravel_index(np.abs(img.data).argmax(), img.data.shape)


def test_motion_compensate_zero_velocity_is_constant_phase(small_radar):
    cube = _cube(small_radar, points([[9.0, 1.0, 0.2]], vel=[1.5]))
    out = motion_compensate(cube, 7.3, 0.0)
    nz = np.abs(cube.data) > 1e-9 * np.abs(cube.data).max()
    ratio = out.data[nz] / cube.data[nz]
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
    scfg = StretchConfig.centered(small_radar)
    a = form_image(stretch_process(cube, scfg))
    b = form_image(stretch_process(out, scfg))
    np.testing.assert_allclose(np.abs(b.data), np.abs(a.data), rtol=1e-9, atol=1e-15)


def test_compensated_centroid_lands_in_zero_doppler(small_radar):
    r0, vr = 10.0, -4.0
    cube = _cube(small_radar, points([[r0, 0.0, 0.0]], vel=[vr]))
    img = form_image(compensate_and_stretch(cube, StretchConfig.centered(small_radar), r0, vr))
    d, r = _peak(img)
    assert img.doppler_axis[d] == 0.0
    assert abs(img.range_axis[r] - r0) <= img.range_step / 2


def test_rotational_residual_doppler():
    cfg = RadarConfig.desk()
    omega, rho = 0.3, 1.0
    f_expected = 2 * omega * rho / cfg.wavelength
    assert f_expected == pytest.approx(154, abs=0.5)
    # scatterer 1 m off the line of sight of a centroid at 10 m, rotating at omega
    cube = _cube(cfg, points([[10.0, rho, 0.0]], vel=[omega * rho]))
    img = form_image(compensate_and_stretch(cube, StretchConfig.centered(cfg), 10.0, 0.0))
    d, _ = _peak(img)
    assert abs(img.doppler_axis[d] - f_expected) <= 1.5 * img.doppler_step


def test_dechirp_at_reference_is_dc(small_radar):
    cube = _cube(small_radar, points([[10.0, 0.0, 0.0]]))
    st_ = stretch_process(cube, StretchConfig(reference_range=10.0))
    spec = np.abs(np.fft.fft(st_.data[0, 0]))
    assert spec.argmax() == 0


def test_beat_frequency_600khz():
    cfg = RadarConfig.fast_chirp(n_pulses=8)
    assert cfg.chirp_rate == 60e12
    r_ref = 10.0
    cube = _cube(cfg, points([[r_ref + 1.5, 0.0, 0.0]]))
    st_ = stretch_process(cube, StretchConfig(reference_range=r_ref))
    freqs = np.fft.fftfreq(cfg.n_fast, 1 / cfg.sample_rate)
    beat = abs(freqs[np.abs(np.fft.fft(st_.data[0, 0])).argmax()])
    assert 2 * cfg.chirp_rate * 1.5 / C == pytest.approx(600e3, rel=1e-3)
    assert abs(beat - 2 * cfg.chirp_rate * 1.5 / C) <= cfg.sample_rate / cfg.n_fast / 2


def test_range_mirror_about_reference(small_radar):
    r_ref = 10.0
    scfg = StretchConfig(reference_range=r_ref)
    near = form_image(stretch_process(_cube(small_radar, points([[r_ref - 2.0, 0, 0]])), scfg))
    far = form_image(stretch_process(_cube(small_radar, points([[r_ref + 2.0, 0, 0]])), scfg))
    rn = near.range_axis[_peak(near)[1]]
    rf = far.range_axis[_peak(far)[1]]
    assert rn - r_ref == pytest.approx(-(rf - r_ref), abs=near.range_step)


def test_parseval(small_radar):
    cube = stretch_process(_cube(small_radar, points([[9.0, 0, 0], [13.0, 1, 0.2]], vel=[1, -2])),
                           StretchConfig.centered(small_radar))
    img = form_image(cube)
    n = small_radar.n_pulses * small_radar.n_fast
    scale = (small_radar.pri / small_radar.sample_rate) ** 2
    assert np.sum(img.power) == pytest.approx(n * scale * np.sum(np.abs(cube.data[0]) ** 2),
                                              rel=1e-9)


def test_form_image_requires_stretch(small_radar):
    with pytest.raises(ValueError):
        form_image(_cube(small_radar, points([[9.0, 0, 0]])))


def test_image_gate():
    assert not image_gate(0.005)
    assert not image_gate(0.0)
    assert not image_gate(None)
    assert image_gate(0.01)
    assert image_gate(-0.2)


def test_crossrange_mapping_and_gate(small_radar):
    st_ = stretch_process(_cube(small_radar, points([[9.0, 0, 0]])),
                          StretchConfig.centered(small_radar))
    img = form_image(st_, omega=0.2)
    np.testing.assert_allclose(img.crossrange_axis,
                               img.doppler_axis * small_radar.wavelength / 0.4)
    with pytest.raises(ImageGateError):
        form_image(st_, omega=0.005)


def _pair(cfg, scat, window=None):
    st_ = stretch_process(_cube(cfg, scat), StretchConfig.centered(cfg))
    return form_image(st_, channel=0, window=window), form_image(st_, channel=1, window=window)


def test_interferogram_identical_channels(small_radar):
    i0, _ = _pair(small_radar, points([[9.0, 0, 0.5], [12.0, 1, -0.4]]))
    ifg = interferogram(i0, i0, small_radar.d)
    assert ifg.mask.any()
    np.testing.assert_allclose(ifg.theta[ifg.mask], 0.0, atol=1e-15)


@pytest.mark.parametrize("r", [6.0, 10.0, 18.0])
def test_interferogram_two_degrees(small_radar, r):
    th = np.deg2rad(2.0)
    i0, i1 = _pair(small_radar, points([[r * np.cos(th), 0, r * np.sin(th)]]))
    ifg = interferogram(i0, i1, small_radar.d, wavelength=chirp_wavelength(small_radar,
                                                                           i0.range_axis))
    d, k = _peak(i0)
    assert ifg.mask[d, k]
    assert np.rad2deg(ifg.theta[d, k]) == pytest.approx(2.0, abs=0.1)


def test_interferogram_height(small_radar):
    r, height = 12.0, 0.6
    i0, i1 = _pair(small_radar, points([[np.sqrt(r**2 - height**2), 0, height]]))
    ifg = interferogram(i0, i1, small_radar.d, wavelength=chirp_wavelength(small_radar,
                                                                           i0.range_axis))
    d, k = _peak(i0)
    assert ifg.theta[d, k] * r == pytest.approx(height, rel=0.01)


def test_interferogram_channel_swap(small_radar):
    i0, i1 = _pair(small_radar, points([[9.0, 0, 0.8], [14.0, 0, -1.0]], vel=[1, 2]))
    a = interferogram(i0, i1, small_radar.d)
    b = interferogram(i1, i0, small_radar.d)
    np.testing.assert_array_equal(a.mask, b.mask)
    np.testing.assert_allclose(a.theta[a.mask], -b.theta[b.mask], atol=1e-12)


def test_interferogram_shape_mismatch(small_radar):
    i0, _ = _pair(small_radar, points([[9.0, 0, 0]]))
    other = IsarImage(i0.data[:-1], i0.range_axis, i0.doppler_axis[:-1])
    with pytest.raises(ValueError):
        interferogram(i0, other, small_radar.d)


def test_point_scatterer_peaks_and_elevation():
    """Every scatterer of a sparse multi-point scene peaks within half a bin."""
    cfg = RadarConfig.desk(n_pulses=128)
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        r = rng.uniform(4, 20, n)
        v = rng.uniform(-5, 5, n)
        el = np.deg2rad(rng.uniform(-15, 15, n))
        rr = r + v * cfg.cpi / 2
        fd = 2 * v / chirp_wavelength(cfg, r)
        if n > 1:
            dr = np.abs(rr[:, None] - rr[None]) / cfg.range_resolution
            dd = np.abs(fd[:, None] - fd[None]) * cfg.cpi
            if np.any((dr < 4) & (dd < 4) & ~np.eye(n, dtype=bool)):
                continue
        pos = np.column_stack([r * np.cos(el), np.zeros(n), r * np.sin(el)])
        i0, i1 = _pair(cfg, points(pos, vel=v), window="hann")
        ifg = interferogram(i0, i1, cfg.d, -80, chirp_wavelength(cfg, i0.range_axis))
        mag = np.abs(i0.data)
        for b in range(n):
            ri = (rr[b] - i0.range_axis[0]) / i0.range_step
            di = (fd[b] - i0.doppler_axis[0]) / i0.doppler_step
            r0, d0 = int(round(ri)), int(round(di))
            win = mag[d0 - 2:d0 + 3, r0 - 2:r0 + 3]
            a, c = np.unravel_index(win.argmax(), win.shape)
            assert abs(d0 - 2 + a - di) <= 0.5 + 1e-9
            assert abs(r0 - 2 + c - ri) <= 0.5 + 1e-9
            assert abs(np.rad2deg(ifg.theta[d0 - 2 + a, r0 - 2 + c] - el[b])) < 0.1


def test_focusing_of_turning_target():
    from isarfusion.scene import TargetModel, TargetState, scatterer_snapshot

    cfg = RadarConfig.desk(noise_power=1e-6)
    radar = np.array([0.0, 0.0, 0.1])
    state = TargetState(14.0, 3.0, 3.0, 5.2, 0.5)
    snap = scatterer_snapshot(TargetModel(), state, radar, cfg.wavelength)
    cube = synthesize_cpi(cfg, snap, None, 1, radar)
    scfg = StretchConfig.centered(cfg)
    rel = np.array([state.x, state.y]) - radar[:2]
    r0 = float(np.hypot(*rel))
    vr = float(rel @ [state.vx, state.vy] / r0)
    focused = form_image(compensate_and_stretch(cube, scfg, r0, vr), window="hann")
    raw = form_image(stretch_process(cube, scfg), window="hann")
    assert image_entropy(focused) < image_entropy(raw)


def test_cfar_all_zero_image():
    assert len(os_cfar_detect(np.zeros((64, 128)), 1e-3)) == 0


def test_cfar_scale_matches_monte_carlo():
    rng = np.random.default_rng(0)
    n, k, pfa = 24, 18, 1e-2
    alpha = os_cfar_scale(n, k, pfa)
    train = rng.exponential(size=(200_000, n))
    stat = np.sort(train, axis=1)[:, k - 1]
    cut = rng.exponential(size=200_000)
    rate = np.mean(cut > alpha * stat)
    sigma = np.sqrt(pfa * (1 - pfa) / 200_000)
    assert abs(rate - pfa) < 4 * sigma


def test_cfar_rank_bounds():
    with pytest.raises(CfarConfigError):
        os_cfar_scale(10, 11, 1e-3)
    with pytest.raises(CfarConfigError):
        os_cfar_detect(np.ones((4, 8)), 1e-3, train=(0, 12), guard=(0, 2))


@pytest.mark.parametrize("pfa", [1e-3, 1e-4])
def test_cfar_false_alarm_rate(pfa):
    rng = np.random.default_rng(1)
    power = rng.exponential(size=(1024, 1024))
    n = os_cfar_detect(power, pfa).__len__()
    cells = power.size
    sigma = np.sqrt(cells * pfa * (1 - pfa))
    assert abs(n - cells * pfa) <= 3 * sigma


def test_cfar_2d_false_alarm_rate():
    rng = np.random.default_rng(2)
    power = rng.exponential(size=(512, 512))
    pfa = 1e-3
    n = len(os_cfar_detect(power, pfa, train=(4, 4), guard=(1, 1)))
    sigma = np.sqrt(power.size * pfa)
    assert abs(n - power.size * pfa) <= 3 * sigma


@pytest.mark.parametrize("pfa", [1e-3, 1e-4])
def test_cfar_stride_calibrates_tapered_noise(pfa):
    # a Hann taper before the range FFT correlates neighbouring bins
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1024, 1024)) + 1j * rng.standard_normal((1024, 1024))
    power = np.abs(np.fft.fft(x * np.hanning(1024), axis=1)) ** 2
    cells = power.size
    sigma = np.sqrt(cells * pfa)
    n = len(os_cfar_detect(power, pfa, stride=3))
    assert abs(n - cells * pfa) <= 3 * sigma
    assert len(os_cfar_detect(power, pfa)) > cells * pfa + 5 * sigma


def test_cfar_stride_needs_range_only_window():
    with pytest.raises(CfarConfigError):
        os_cfar_detect(np.ones((8, 8)), 1e-3, train=(2, 2), guard=(1, 1), stride=2)


def test_cfar_injected_point():
    rng = np.random.default_rng(3)
    power = rng.exponential(size=(128, 256))
    power[60, 100] = 100.0          # 20 dB above the unit noise floor
    dets = os_cfar_detect(power, 1e-4)
    hit = [(d, r) for d, r in zip(dets.doppler_index, dets.range_index)
           if abs(d - 60) <= 1 and abs(r - 100) <= 1]
    assert hit
    g = np.unravel_index(power.argmax(), power.shape)
    assert any(abs(d - g[0]) <= 1 and abs(r - g[1]) <= 1 for d, r in hit)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), train=st.integers(4, 16), guard=st.integers(0, 3),
       pfa=st.sampled_from([1e-1, 1e-2, 1e-3]), stride=st.integers(1, 3))
def test_cfar_fast_path_matches_rank_filter(seed, train, guard, pfa, stride):
    rng = np.random.default_rng(seed)
    power = rng.exponential(size=(16, 128))
    power[rng.integers(0, 16, 5), rng.integers(0, 128, 5)] *= 50
    dets = os_cfar_detect(power, pfa, train=(0, train), guard=(0, guard), stride=stride)
    # brute force with the generic footprint filter
    h = guard + 1 + (train - 1) * stride
    fp = np.zeros((1, 2 * h + 1), bool)
    for i in range(train):
        fp[0, h + guard + 1 + i * stride] = fp[0, h - guard - 1 - i * stride] = True
    rank = max(1, int(round(0.75 * fp.sum())))
    alpha = os_cfar_scale(int(fp.sum()), rank, pfa)
    stat = ndimage.rank_filter(power, rank - 1, footprint=fp, mode="wrap")
    d, r = np.nonzero(power > alpha * stat)
    assert sorted(zip(dets.doppler_index, dets.range_index)) == sorted(zip(d, r))


def _toy_image(n_d=32, n_r=64):
    return IsarImage(np.zeros((n_d, n_r), complex), np.arange(n_r) * 0.1,
                     (np.arange(n_d) - n_d // 2) * 10.0)


def test_cluster_empty():
    dets = Detections(np.array([], int), np.array([], int), np.array([]))
    assert cluster_to_measurement(dets, _toy_image()) is None


def test_cluster_power_weighted_centroid():
    img = _toy_image()
    d = np.array([10, 10, 11, 11, 12])
    r = np.array([20, 21, 20, 21, 22])
    p = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    m = cluster_to_measurement(Detections(d, r, p), img)
    assert m.n_detections == 5
    assert m.r == pytest.approx(np.sum(p * img.range_axis[r]) / p.sum())
    assert m.f_d == pytest.approx(np.sum(p * img.doppler_axis[d]) / p.sum())


def test_largest_cluster_wins():
    img = _toy_image()
    big_d, big_r = np.meshgrid(np.arange(3, 7), np.arange(40, 43), indexing="ij")
    d = np.r_[big_d.ravel(), [25, 25, 26]]
    r = np.r_[big_r.ravel(), [5, 6, 5]]
    p = np.r_[np.ones(12), [50.0, 50.0, 50.0]]
    m = cluster_to_measurement(Detections(d, r, p), img)
    assert m.n_detections == 12
    assert m.r == pytest.approx(img.range_axis[40:43].mean())
    ms = measurements_from_clusters(Detections(d, r, p), img)
    assert [x.n_detections for x in ms] == [12, 3]


def test_cluster_wraps_in_doppler():
    img = _toy_image()
    d = np.array([0, 31])
    r = np.array([10, 10])
    m = cluster_to_measurement(Detections(d, r, np.ones(2)), img)
    assert m.n_detections == 2
    # halfway between the two edge bins, i.e. at the Nyquist edge
    assert m.f_d == pytest.approx(img.doppler_axis[0] - img.doppler_step / 2) or \
        m.f_d == pytest.approx(img.doppler_axis[-1] + img.doppler_step / 2)
