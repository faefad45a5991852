import numpy as np
import pytest

from echomap import make_grid, make_phantom
from echomap.io import (MeasurementSet, load_config, parse_config, preprocess_mira,
                        read_image, read_measurements, read_truth, write_image,
                        write_measurements, write_truth)


def test_parse_config_types():
    cfg = parse_config(
        """
        # comment line
        n_transducers = 10
        pixel_pitch = 0.01   # trailing comment
        speed = 2620
        phantom = plates
        apodize = true
        offsets = 0, 10, 20
        """
    )
    assert cfg["n_transducers"] == 10
    assert cfg["pixel_pitch"] == 0.01
    assert cfg["speed"] == 2620
    assert cfg["phantom"] == "plates"
    assert cfg["apodize"] is True
    assert cfg["offsets"] == [0, 10, 20]


def test_parse_config_rejects_garbage():
    with pytest.raises(ValueError):
        parse_config("this line has no equals sign")


def test_measurement_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((2, 3 * 50)).astype("<f4")
    ms = MeasurementSet(data=data, n_transducers=3, n_pairs=3, n_samples=50,
                        sampling_freq=200e3, speed=2620.0, offsets=(0, 5), width=12)
    path = tmp_path / "m.dat"
    write_measurements(path, ms)
    back = read_measurements(path)
    assert np.array_equal(back.data, data)  # bit-identical float payload
    assert back.n_pairs == 3 and back.n_samples == 50
    assert back.offsets == (0, 5) and back.width == 12
    assert back.layout.joint_width == 17


def test_measurement_header_mismatch(tmp_path):
    data = np.zeros((1, 10), dtype="<f4")
    ms = MeasurementSet(data=data, n_transducers=2, n_pairs=1, n_samples=11,
                        sampling_freq=1.0, speed=1.0, offsets=(0,), width=2)
    with pytest.raises(ValueError):
        write_measurements(tmp_path / "bad.dat", ms)


def test_image_round_trip_and_pgm(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.standard_normal((7, 9)).astype(np.float32).astype(float)
    base = tmp_path / "img"
    write_image(base, img, 0.01)
    back, pitch = read_image(str(base) + ".f32")
    assert np.array_equal(back, img.astype(np.float32))
    assert pitch == 0.01
    pgm = (str(base) + ".pgm").encode if False else str(base) + ".pgm"
    raw = open(pgm, "rb").read()
    assert raw.startswith(b"P5\n9 7\n255\n")
    assert len(raw) == len(b"P5\n9 7\n255\n") + 63


def test_truth_round_trip(tmp_path):
    grid = make_grid(10, 12, 0.01)
    ph = make_phantom("plates", grid)
    path = tmp_path / "truth.dat"
    write_truth(path, ph)
    img, pitch, targets = read_truth(path)
    assert np.array_equal(img, ph.values.astype(np.float32))
    assert pitch == 0.01
    assert len(targets) == len(ph.targets)
    for (label, centroid), t in zip(targets, ph.targets):
        assert label == t.label
        assert centroid == (pytest.approx(t.centroid[0]), pytest.approx(t.centroid[1]))


def test_write_is_atomic(tmp_path):
    # a failing payload write must not leave the target file behind
    target = tmp_path / "x.dat"

    class Boom(Exception):
        pass

    import echomap.io as fio

    try:
        fio._atomic_write(target, lambda fh: (_ for _ in ()).throw(Boom()))
    except Boom:
        pass
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []


def test_preprocess_lengths():
    records = np.zeros((4, 2048))
    out = preprocess_mira(records)
    assert out.shape == (4, 409)
    single = preprocess_mira(np.zeros(2048))
    assert single.shape == (409,)
    with pytest.raises(ValueError):
        preprocess_mira(np.zeros(30))
    with pytest.raises(ValueError):
        preprocess_mira(np.zeros(1000))  # would need gross padding to reach 409


def test_preprocess_preserves_dc():
    rec = np.full(2048, 3.7)
    out = preprocess_mira(rec)
    assert out.shape == (409,)
    assert np.all(np.abs(out - 3.7) < 0.01 * 3.7)


def _tone_amplitude(x, freq, fs):
    # projection on the complex exponential over whole cycles
    period = fs / freq
    n = int(period * np.floor((x.size - 80) / period))
    seg = x[40:40 + n]
    t = np.arange(n) / fs
    return 2 * abs(np.sum(seg * np.exp(-2j * np.pi * freq * t))) / n


def test_preprocess_passband_and_stopband():
    fs_in = 1e6
    t = np.arange(2048) / fs_in
    tone10k = np.cos(2 * np.pi * 10e3 * t)
    out = preprocess_mira(tone10k)
    amp = _tone_amplitude(out, 10e3, 200e3)
    assert abs(amp - 1.0) < 0.01

    tone450k = np.cos(2 * np.pi * 450e3 * t)
    out = preprocess_mira(tone450k)
    # 450 kHz aliases to 50 kHz after decimation; demand > 40 dB suppression
    alias = _tone_amplitude(out, 50e3, 200e3)
    assert alias < 10 ** (-40 / 20)


def test_load_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("n_rows = 4\nn_cols = 5\npixel_pitch = 0.01\n")
    cfg = load_config(p)
    assert cfg == {"n_rows": 4, "n_cols": 5, "pixel_pitch": 0.01}
