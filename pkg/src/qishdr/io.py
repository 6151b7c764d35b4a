"""File formats: PGM scenes and displays, QISF float maps, CSV curves, key=value configs.

QISF layout (little-endian): ``b"QISF"``, ``u32 width``, ``u32 height``, then
``width * height`` float64 values in row-major order.
"""

from dataclasses import dataclass, field
import os
from pathlib import Path
import struct

import numpy as np

from .errors import FormatError
from .hdr import FusionConfig, HdrEstimate
from .sensor import ExposureConfig, PhotonFluxMap, SumImage

QISF_MAGIC = b"QISF"
_QISF_HEADER = struct.Struct("<4sII")
DEFAULT_CMAX = 6e6


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _write_bytes(path, data):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


# -- PGM ---------------------------------------------------------------------

def _pgm_token(data, pos, path):
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(data)
    while True:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header", offset=start, path=path)
    return data[start:pos], start, pos


def _pgm_int(data, pos, path, what):
    tok, start, pos = _pgm_token(data, pos, path)
    if not tok.isdigit():
        raise FormatError(f"bad PGM {what} {tok!r}", offset=start, path=path)
    return int(tok), pos


def parse_pgm(data, path=None):
    """Decode a binary (P5) PGM into ``(pixels, maxval)``."""
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (missing P5 magic)", offset=0, path=path)
    pos = 2
    width, pos = _pgm_int(data, pos, path, "width")
    height, pos = _pgm_int(data, pos, path, "height")
    maxval_at = pos
    maxval, pos = _pgm_int(data, pos, path, "maxval")
    if width < 1 or height < 1:
        raise FormatError("PGM dimensions must be positive", offset=2, path=path)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"PGM maxval {maxval} out of range", offset=maxval_at, path=path)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", offset=pos, path=path)
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise FormatError(
            f"PGM pixel data truncated: need {need} bytes, have {len(data) - pos}",
            offset=len(data), path=path,
        )
    if len(data) - pos > need:
        raise FormatError("trailing bytes after PGM pixel data", offset=pos + need, path=path)
    pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    pixels = pixels.reshape(height, width)
    if np.any(pixels > maxval):
        bad = int(np.argmax(pixels.ravel() > maxval))
        raise FormatError("PGM sample exceeds maxval", offset=pos + bad * dtype.itemsize, path=path)
    return pixels.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def encode_pgm(image, maxval=None):
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if maxval is None:
        maxval = 255 if img.dtype == np.uint8 else 65535
    if np.any(img < 0) or np.any(img > maxval):
        raise ValueError(f"PGM samples must lie in [0, {maxval}]")
    h, w = img.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(img, dtype=dtype).tobytes()


def read_pgm(path):
    return parse_pgm(_read_bytes(path), path=path)


def write_display(path, image):
    """Write an 8-bit display image as P5 PGM."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("display images must be uint8")
    _write_bytes(path, encode_pgm(img, 255))


# -- QISF --------------------------------------------------------------------

def encode_qisf(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError("QISF maps must be 2-D")
    h, w = arr.shape
    return _QISF_HEADER.pack(QISF_MAGIC, w, h) + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def parse_qisf(data, path=None):
    if len(data) < _QISF_HEADER.size:
        raise FormatError("QISF header truncated", offset=len(data), path=path)
    magic, w, h = _QISF_HEADER.unpack_from(data)
    if magic != QISF_MAGIC:
        raise FormatError(f"bad QISF magic {magic!r}", offset=0, path=path)
    if w < 1 or h < 1:
        raise FormatError("QISF dimensions must be positive", offset=4, path=path)
    need = _QISF_HEADER.size + 8 * w * h
    if len(data) < need:
        raise FormatError(
            f"QISF payload truncated: need {need} bytes, have {len(data)}",
            offset=len(data), path=path,
        )
    if len(data) > need:
        raise FormatError("trailing bytes after QISF payload", offset=need, path=path)
    vals = np.frombuffer(data, dtype="<f8", offset=_QISF_HEADER.size, count=w * h)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise FormatError("non-finite value in QISF payload", offset=_QISF_HEADER.size + 8 * i, path=path)
    return vals.astype(float).reshape(h, w)


def read_qisf(path):
    return parse_qisf(_read_bytes(path), path=path)


def write_flux(path, estimate):
    """Write a flux map (an :class:`HdrEstimate` or a 2-D array) as QISF."""
    values = estimate.flux_hat if isinstance(estimate, HdrEstimate) else estimate
    _write_bytes(path, encode_qisf(values))


# -- scenes ------------------------------------------------------------------

def read_scene(path, c_max=DEFAULT_CMAX):
    """Load a ground-truth flux map.

    A PGM is scaled linearly so its brightest pixel maps to ``c_max``
    photons per second (an all-black image stays zero); a QISF file is taken
    verbatim.
    """
    data = _read_bytes(path)
    if data[:4] == QISF_MAGIC:
        return PhotonFluxMap(parse_qisf(data, path=path))
    if data[:2] == b"P5":
        pixels, _ = parse_pgm(data, path=path)
        pixels = pixels.astype(float)
        peak = pixels.max()
        flux = pixels / peak * c_max if peak > 0 else pixels
        return PhotonFluxMap(flux)
    raise FormatError("unrecognised scene format (expected P5 PGM or QISF)", offset=0, path=path)


# -- CSV ---------------------------------------------------------------------

def format_csv(curve):
    lines = [",".join(("theta",) + tuple(curve.labels))]
    for j, theta in enumerate(curve.theta):
        cells = [f"{theta:.9g}"] + [f"{v:.9g}" for v in curve.values[:, j]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, curve):
    _write_bytes(path, format_csv(curve).encode("ascii"))


# -- key=value configs -------------------------------------------------------

def parse_keyvalue(text, path=None):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped.

    Repeated keys accumulate into a list, in file order.
    """
    out = {}
    offset = 0
    for raw in text.splitlines(keepends=True):
        line = raw.split("#", 1)[0].strip()
        if line:
            if "=" not in line:
                raise FormatError(f"expected key=value, got {line!r}", offset=offset, path=path)
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise FormatError("empty key", offset=offset, path=path)
            out.setdefault(key, []).append(value)
        offset += len(raw.encode("utf-8"))
    return out


def _single(kv, key, path, default=None):
    vals = kv.get(key)
    if vals is None:
        if default is None:
            raise FormatError(f"missing key {key!r}", path=path)
        return default
    if len(vals) != 1:
        raise FormatError(f"key {key!r} given {len(vals)} times", path=path)
    return vals[0]


def _number(text, kind, key, path):
    try:
        return kind(text)
    except ValueError:
        raise FormatError(f"bad value for {key!r}: {text!r}", path=path) from None


def format_exposure_config(cfg):
    return (
        f"tau={cfg.tau!r}\n"
        f"capacity={cfg.capacity}\n"
        f"frames={cfg.frames}\n"
        f"oversample={cfg.oversample}\n"
        f"seed={cfg.seed}\n"
    )


def parse_exposure_config(text, path=None):
    kv = parse_keyvalue(text, path)
    known = {"tau", "capacity", "frames", "oversample", "seed"}
    extra = set(kv) - known
    if extra:
        raise FormatError(f"unknown keys {sorted(extra)}", path=path)
    try:
        return ExposureConfig(
            tau=_number(_single(kv, "tau", path), float, "tau", path),
            capacity=_number(_single(kv, "capacity", path), int, "capacity", path),
            frames=_number(_single(kv, "frames", path, "1"), int, "frames", path),
            oversample=_number(_single(kv, "oversample", path, "1"), int, "oversample", path),
            seed=_number(_single(kv, "seed", path, "0"), int, "seed", path),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), path=path) from None


def sidecar_path(path):
    return Path(f"{os.fspath(path)}.cfg")


def write_sum_image(path, image):
    """Write a sum image as QISF plus its ``<path>.cfg`` exposure sidecar."""
    _write_bytes(path, encode_qisf(image.sum))
    _write_bytes(sidecar_path(path), format_exposure_config(image.config).encode("ascii"))


def read_sum_image(path):
    values = read_qisf(path)
    side = sidecar_path(path)
    cfg = parse_exposure_config(_read_bytes(side).decode("utf-8"), path=side)
    try:
        return SumImage(values, cfg)
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from None


@dataclass(frozen=True)
class RunConfig:
    """Everything one end-to-end simulate + reconstruct run needs.

    The file form is flat ``key=value``. ``exposure`` repeats, once per
    capture, as ``tau,capacity,frames[,oversample]``; each capture gets seed
    ``seed + index``.
    """

    scene: str
    exposures: tuple
    fusion: FusionConfig = field(default_factory=FusionConfig)
    c_max: float = DEFAULT_CMAX
    gamma: float = 2.2
    flux_out: str = "hdr.qisf"
    display_out: str = "hdr.pgm"
    seed: int = 0

    def __post_init__(self):
        for name in ("scene", "flux_out", "display_out"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be a non-empty path")
        if not self.exposures:
            raise ValueError("at least one exposure is required")
        if not self.c_max > 0 or not self.gamma > 0:
            raise ValueError("c_max and gamma must be positive")


_RUN_KEYS = {
    "scene", "exposure", "cmax", "gamma", "flux_out", "display_out", "seed",
    "max_iters", "rel_tol", "denoise_sigma", "saturation_margin", "weighting",
}


def parse_run_config(text, path=None):
    kv = parse_keyvalue(text, path)
    extra = set(kv) - _RUN_KEYS
    if extra:
        raise FormatError(f"unknown keys {sorted(extra)}", path=path)
    seed = _number(_single(kv, "seed", path, "0"), int, "seed", path)
    exposures = []
    for i, spec in enumerate(kv.get("exposure", [])):
        parts = [p.strip() for p in spec.split(",")]
        if len(parts) not in (3, 4):
            raise FormatError(f"exposure needs tau,capacity,frames[,oversample]: {spec!r}", path=path)
        try:
            exposures.append(ExposureConfig(
                tau=float(parts[0]),
                capacity=int(parts[1]),
                frames=int(parts[2]),
                oversample=int(parts[3]) if len(parts) == 4 else 1,
                seed=seed + i,
            ))
        except ValueError as exc:
            raise FormatError(f"bad exposure {spec!r}: {exc}", path=path) from None
    try:
        fusion = FusionConfig(
            max_iters=_number(_single(kv, "max_iters", path, "10"), int, "max_iters", path),
            rel_tol=_number(_single(kv, "rel_tol", path, "1e-4"), float, "rel_tol", path),
            denoise_sigma=_number(_single(kv, "denoise_sigma", path, "0"), float, "denoise_sigma", path),
            saturation_margin=_number(
                _single(kv, "saturation_margin", path, "0.995"), float, "saturation_margin", path
            ),
            weighting=_single(kv, "weighting", path, "snr2"),
        )
        return RunConfig(
            scene=_single(kv, "scene", path),
            exposures=tuple(exposures),
            fusion=fusion,
            c_max=_number(_single(kv, "cmax", path, repr(DEFAULT_CMAX)), float, "cmax", path),
            gamma=_number(_single(kv, "gamma", path, "2.2"), float, "gamma", path),
            flux_out=_single(kv, "flux_out", path, "hdr.qisf"),
            display_out=_single(kv, "display_out", path, "hdr.pgm"),
            seed=seed,
        )
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from None


def read_run_config(path):
    return parse_run_config(_read_bytes(path).decode("utf-8"), path=path)


def format_run_config(run):
    lines = [f"scene={run.scene}"]
    for cfg in run.exposures:
        lines.append(f"exposure={cfg.tau!r},{cfg.capacity},{cfg.frames},{cfg.oversample}")
    f = run.fusion
    lines += [
        f"cmax={run.c_max!r}",
        f"gamma={run.gamma!r}",
        f"flux_out={run.flux_out}",
        f"display_out={run.display_out}",
        f"seed={run.seed}",
        f"max_iters={f.max_iters}",
        f"rel_tol={f.rel_tol!r}",
        f"denoise_sigma={f.denoise_sigma!r}",
        f"saturation_margin={f.saturation_margin!r}",
        f"weighting={f.weighting}",
    ]
    return "\n".join(lines) + "\n"
