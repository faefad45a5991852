"""File formats, record preconditioning, and the key = value config reader.

All formats are self-describing text headers (``key = value`` lines, SI units)
terminated by ``end_header``, optionally followed by a little-endian float32
payload. Writes are atomic (temp file then rename) and round-trip losslessly
on the float payload.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .geometry import ImageGrid, ScanGeometry, make_grid
from .prior import PriorParams
from .pulse import PulseModel
from .stitching import ScanLayout

__all__ = [
    "load_config",
    "parse_config",
    "geometry_from_config",
    "pulse_from_config",
    "grid_from_config",
    "prior_from_config",
    "layout_from_config",
    "MeasurementSet",
    "write_measurements",
    "read_measurements",
    "write_image",
    "read_image",
    "write_truth",
    "read_truth",
    "write_pr_csv",
    "write_cost_csv",
    "preprocess_mira",
]

_MAGIC = "echomap"


# -- config ------------------------------------------------------------------

def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(p) for p in raw.split(",")]
    low = raw.lower()
    if low in ("true", "on", "yes"):
        return True
    if low in ("false", "off", "no"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        cfg[key.strip()] = _parse_value(raw)
    return cfg


def load_config(path) -> dict:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def geometry_from_config(cfg: dict) -> ScanGeometry:
    """Line array centered over the footprint width, on the surface."""
    n = int(cfg["n_transducers"])
    pitch = float(cfg["transducer_pitch"])
    width = int(cfg["n_cols"]) * float(cfg["pixel_pitch"])
    return ScanGeometry.line_array(n, pitch, center_x=width / 2.0)


def pulse_from_config(cfg: dict) -> PulseModel:
    return PulseModel(
        carrier_freq=float(cfg.get("carrier_freq", 52e3)),
        sampling_freq=float(cfg.get("sampling_freq", 200e3)),
        speed=float(cfg.get("speed", 2620.0)),
        n_samples=int(cfg.get("n_samples", 409)),
        alpha0=float(cfg.get("alpha0", 30.0)),
        transmittance=float(cfg.get("transmittance", 1.0)),
        fractional_bandwidth=float(cfg.get("fractional_bandwidth", 0.6)),
        t0=float(cfg["t0"]) if "t0" in cfg else None,
    )


def grid_from_config(cfg: dict) -> ImageGrid:
    return make_grid(int(cfg["n_rows"]), int(cfg["n_cols"]),
                     float(cfg["pixel_pitch"]), n_slices=int(cfg.get("n_slices", 1)))


def prior_from_config(cfg: dict) -> PriorParams:
    defaults = PriorParams()
    return PriorParams(
        p=float(cfg.get("p", defaults.p)),
        q=float(cfg.get("q", defaults.q)),
        T=float(cfg.get("T", defaults.T)),
        sigma_g=float(cfg.get("sigma_g", defaults.sigma_g)),
        sigma_e=float(cfg.get("sigma_e", defaults.sigma_e)),
        c_min=float(cfg.get("c_min", defaults.c_min)),
        c_max=float(cfg.get("c_max", defaults.c_max)),
        a=float(cfg.get("a", defaults.a)),
        gamma=float(cfg.get("gamma", defaults.gamma)),
    )


def layout_from_config(cfg: dict) -> ScanLayout:
    n_positions = int(cfg.get("n_positions", 1))
    stride = int(cfg.get("stride_cols", 0))
    return ScanLayout.regular(n_positions, int(cfg["n_cols"]), stride)


# -- atomic text+binary files --------------------------------------------------

def _atomic_write(path, emit):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-echomap-")
    try:
        with os.fdopen(fd, "wb") as fh:
            emit(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_header(fh, kind: str, fields: dict):
    lines = [f"{_MAGIC} {kind}"]
    lines += [f"{k} = {v}" for k, v in fields.items()]
    lines.append("end_header\n")
    fh.write("\n".join(lines).encode("ascii"))


def _read_header(fh, kind: str) -> dict:
    first = fh.readline().decode("ascii").strip()
    if first != f"{_MAGIC} {kind}":
        raise ValueError(f"not a {kind} file")
    fields = {}
    while True:
        line = fh.readline()
        if not line:
            raise ValueError("truncated header")
        line = line.decode("ascii").strip()
        if line == "end_header":
            return fields
        key, raw = line.split("=", 1)
        fields[key.strip()] = _parse_value(raw)


@dataclass(frozen=True)
class MeasurementSet:
    """Records of one scanned cross-section: (L, K*M) float samples plus the
    acquisition parameters needed to rebuild the forward model."""

    data: np.ndarray
    n_transducers: int
    n_pairs: int
    n_samples: int
    sampling_freq: float
    speed: float
    offsets: tuple
    width: int

    @property
    def layout(self) -> ScanLayout:
        return ScanLayout(offsets=self.offsets, width=self.width)


def write_measurements(path, ms: MeasurementSet) -> None:
    data = np.ascontiguousarray(ms.data, dtype="<f4")
    L = data.shape[0]
    if data.shape != (L, ms.n_pairs * ms.n_samples):
        raise ValueError("payload shape does not match header fields")
    if len(ms.offsets) != L:
        raise ValueError("need one column offset per position")
    if min(ms.n_transducers, ms.n_pairs, ms.n_samples, ms.width) < 1 \
            or ms.sampling_freq <= 0 or ms.speed <= 0:
        raise ValueError("header fields must be positive")
    fields = {
        "n_transducers": ms.n_transducers,
        "n_pairs": ms.n_pairs,
        "n_samples": ms.n_samples,
        "sampling_freq": repr(float(ms.sampling_freq)),
        "speed": repr(float(ms.speed)),
        "n_positions": L,
        "offsets": ",".join(str(o) for o in ms.offsets),
        "width": ms.width,
    }

    def emit(fh):
        _write_header(fh, "measurements", fields)
        fh.write(data.tobytes())

    _atomic_write(path, emit)


def read_measurements(path) -> MeasurementSet:
    with open(path, "rb") as fh:
        fields = _read_header(fh, "measurements")
        L = int(fields["n_positions"])
        K = int(fields["n_pairs"])
        M = int(fields["n_samples"])
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != L * K * M:
        raise ValueError("payload length does not match header")
    offsets = fields["offsets"]
    offsets = tuple(offsets) if isinstance(offsets, list) else (int(offsets),)
    if len(offsets) != L:
        raise ValueError("need one column offset per position")
    return MeasurementSet(
        data=payload.reshape(L, K * M).copy(),
        n_transducers=int(fields["n_transducers"]),
        n_pairs=K,
        n_samples=M,
        sampling_freq=float(fields["sampling_freq"]),
        speed=float(fields["speed"]),
        offsets=offsets,
        width=int(fields["width"]),
    )


def write_image(path_base, values: np.ndarray, pixel_pitch: float) -> None:
    """Write <base>.f32 (lossless float sidecar) and <base>.pgm (8-bit view)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("expected a 2-D image")
    rows, cols = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4")

    def emit_f32(fh):
        _write_header(fh, "image", {"rows": rows, "cols": cols,
                                    "pixel_pitch": repr(float(pixel_pitch))})
        fh.write(payload.tobytes())

    _atomic_write(str(path_base) + ".f32", emit_f32)

    lo, hi = float(payload.min()), float(payload.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    gray = ((payload - lo) * scale).round().astype(np.uint8)

    def emit_pgm(fh):
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())

    _atomic_write(str(path_base) + ".pgm", emit_pgm)


def read_image(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        fields = _read_header(fh, "image")
        rows, cols = int(fields["rows"]), int(fields["cols"])
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != rows * cols:
        raise ValueError("payload length does not match header")
    return payload.reshape(rows, cols).copy(), float(fields["pixel_pitch"])


def write_truth(path, phantom) -> None:
    """Ground-truth file: target table in the header, reflectivity as payload."""
    values = np.asarray(phantom.values, dtype="<f4")
    rows, cols = values.shape
    fields = {"rows": rows, "cols": cols,
              "pixel_pitch": repr(float(phantom.grid.pixel_pitch)),
              "n_targets": len(phantom.targets)}
    for i, t in enumerate(phantom.targets):
        fields[f"target{i}"] = f"{t.label} {t.centroid[0]!r} {t.centroid[1]!r}"

    def emit(fh):
        _write_header(fh, "truth", fields)
        fh.write(np.ascontiguousarray(values).tobytes())

    _atomic_write(path, emit)


def read_truth(path):
    """Returns (reflectivity image, pixel_pitch, [(label, (depth, lateral)), ...])."""
    with open(path, "rb") as fh:
        fields = _read_header(fh, "truth")
        rows, cols = int(fields["rows"]), int(fields["cols"])
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != rows * cols:
        raise ValueError("payload length does not match header")
    targets = []
    for i in range(int(fields["n_targets"])):
        label, depth, lateral = str(fields[f"target{i}"]).split()
        targets.append((label, (float(depth), float(lateral))))
    return payload.reshape(rows, cols).copy(), float(fields["pixel_pitch"]), targets


def write_pr_csv(path, curve) -> None:
    def emit(fh):
        fh.write(b"threshold,tp,fp,fn,precision,recall\n")
        for t, tp, fp, fn, p, r in zip(curve.thresholds, curve.tp, curve.fp,
                                       curve.fn, curve.precision, curve.recall):
            fh.write(f"{t:.3f},{tp},{fp},{fn},{float(p)!r},{float(r)!r}\n".encode("ascii"))

    _atomic_write(path, emit)


def write_cost_csv(path, history: np.ndarray) -> None:
    def emit(fh):
        fh.write(b"iteration,data,prior,total\n")
        for i, (d, p, t) in enumerate(np.atleast_2d(history), 1):
            fh.write(f"{i},{float(d)!r},{float(p)!r},{float(t)!r}\n".encode("ascii"))

    _atomic_write(path, emit)


# -- record preconditioning ----------------------------------------------------

def _lowpass_taps(cutoff_frac: float, n_taps: int = 64) -> np.ndarray:
    """Windowed-sinc low-pass, cutoff as a fraction of the input sample rate."""
    n = np.arange(n_taps) - (n_taps - 1) / 2.0
    taps = 2.0 * cutoff_frac * np.sinc(2.0 * cutoff_frac * n) * np.hamming(n_taps)
    return taps / taps.sum()


def preprocess_mira(records: np.ndarray, trigger_skip: int = 27, factor: int = 5,
                    out_samples: int = 409) -> np.ndarray:
    """Condition raw tomograph records: trigger skip, anti-alias, decimate.

    Drops the first ``trigger_skip`` samples, low-pass filters with a 64-tap
    windowed sinc cut at 0.8x the post-decimation Nyquist (edge padding keeps
    DC exact), keeps every ``factor``-th sample, and fixes the record length at
    ``out_samples`` (edge-value padding / truncation; the published stated
    lengths 2048 -> 409 leave a 4-sample remainder).
    """
    arr = np.asarray(records, dtype=float)
    single = arr.ndim == 1
    records = np.atleast_2d(arr)
    if records.shape[-1] < trigger_skip + 2 * factor:
        raise ValueError("record too short")
    trimmed = records[..., trigger_skip:]
    taps = _lowpass_taps(0.8 * 0.5 / factor)
    half = taps.size // 2
    padded = np.pad(trimmed, [(0, 0)] * (trimmed.ndim - 1) + [(half, half)], mode="edge")
    filtered = np.apply_along_axis(lambda r: np.convolve(r, taps, mode="valid"), -1, padded)
    filtered = filtered[..., : trimmed.shape[-1]]
    dec = filtered[..., ::factor]
    n = dec.shape[-1]
    if n < out_samples - factor:
        raise ValueError("record too short for the requested output length")
    if n >= out_samples:
        out = dec[..., :out_samples]
    else:
        pad = np.repeat(dec[..., -1:], out_samples - n, axis=-1)
        out = np.concatenate([dec, pad], axis=-1)
    return out[0] if single else out
