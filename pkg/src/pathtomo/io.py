"""File formats: JSON for states, geometries, configs, results and
calibrations; 16-bit binary PGM plus a JSON sidecar for frames."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InvalidStateError
from .geometry import PathGeometry
from .optics import MAXVAL_16BIT, CameraImage, NoiseModel, OpticalConfig
from .prep import PrepSettings
from .quantum import HERMITIAN_ATOL, TRACE_ATOL, DensityMatrix
from .reconstruct import Calibration, FrameSet, ReconstructionResult


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def _r17(x) -> float:
    # json writes floats via repr: shortest form that round-trips (<= 17 digits).
    return float(x)


# ------------------------------------------------------------- density matrices


def density_to_dict(rho) -> dict:
    a = np.asarray(rho, dtype=complex)
    return {
        "dim": int(a.shape[0]),
        "re": [[_r17(v) for v in row] for row in a.real],
        "im": [[_r17(v) for v in row] for row in a.imag],
    }


def density_from_dict(obj: dict) -> DensityMatrix:
    try:
        d = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidStateError(f"malformed density-matrix JSON: {exc}") from exc
    if re.shape != (d, d) or im.shape != (d, d):
        raise InvalidStateError(f"expected {d}x{d} re/im arrays, got {re.shape} and {im.shape}")
    a = re + 1j * im
    dev = np.abs(a - a.conj().T)
    if dev.max() > HERMITIAN_ATOL:
        i, j = np.unravel_index(np.argmax(dev), dev.shape)
        raise InvalidStateError(f"not Hermitian at indices ({i},{j}) and ({j},{i})")
    tr = np.trace(a).real
    if abs(tr - 1) > TRACE_ATOL:
        raise InvalidStateError(f"trace is {tr:.12g}, expected 1")
    return DensityMatrix(a)


def write_density(rho, path) -> None:
    _dump(density_to_dict(rho), path)


def read_density(path) -> DensityMatrix:
    return density_from_dict(_load(path))


# ------------------------------------------------------------- small configs


def write_geometry(g: PathGeometry, path) -> None:
    _dump(g.to_dict(), path)


def read_geometry(path) -> PathGeometry:
    return PathGeometry.from_dict(_load(path))


def write_config(cfg: OpticalConfig, path) -> None:
    _dump(cfg.to_dict(), path)


def read_config(path) -> OpticalConfig:
    return OpticalConfig.from_dict(_load(path))


def write_prep(settings: PrepSettings, path) -> None:
    _dump(settings.to_dict(), path)


def read_prep(path) -> PrepSettings:
    return PrepSettings.from_dict(_load(path))


# ------------------------------------------------------------- frames


def write_pgm(path, data: np.ndarray) -> None:
    """Binary 16-bit greyscale PGM (P5), big-endian samples."""
    a = np.asarray(data)
    if a.ndim != 2:
        raise ValueError("PGM data must be 2-D")
    if a.min() < 0 or a.max() > MAXVAL_16BIT:
        raise ValueError("PGM samples must lie in 0..65535")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAXVAL_16BIT}\n".encode("ascii"))
        fh.write(np.rint(a).astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    body = raw[pos:pos + n]
    if len(body) != n:
        raise ValueError(f"{path}: expected {n} bytes of samples, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(float)


def write_frame(img: CameraImage, stem, *, reveal_truth: bool = False) -> Path:
    """Write ``<stem>.pgm`` and ``<stem>.json``. Non-integer (noiseless)
    frames are rescaled so the peak uses the full 16-bit range; the factor
    is stored as ``scale`` and undone on reading."""
    stem = Path(stem)
    data = img.intensities
    integral = np.all(data == np.rint(data)) and data.max() <= MAXVAL_16BIT
    peak = float(data.max())
    scale = 1.0 if integral or peak <= 0 else MAXVAL_16BIT / peak
    write_pgm(stem.with_suffix(".pgm"), np.clip(np.rint(data * scale), 0, MAXVAL_16BIT))
    side = {
        "theta_deg": img.theta,
        "config": img.config.to_dict(),
        "seed": img.seed,
        "scale": scale,
        "frame": img.frame,
        "noise": img.noise.to_dict(),
    }
    if reveal_truth:
        side["origin_offset_px"] = img.origin_offset
        side["mirrored"] = img.mirrored
    _dump(side, stem.with_suffix(".json"))
    return stem.with_suffix(".pgm")


def read_frame(path) -> CameraImage:
    stem = Path(path).with_suffix("")
    side = _load(stem.with_suffix(".json"))
    data = read_pgm(stem.with_suffix(".pgm")) / float(side.get("scale", 1.0))
    cfg = OpticalConfig.from_dict(side["config"])
    noise = NoiseModel(**side["noise"]) if side.get("noise") else NoiseModel()
    return CameraImage(data, cfg, side.get("theta_deg"), side.get("frame", "lens"),
                       side.get("seed"), noise, side.get("origin_offset_px", 0.0),
                       side.get("mirrored", False))


def frame_stem(img: CameraImage, index: int = 0) -> str:
    if img.theta is None:
        return "direct"
    return f"theta_{img.theta:09.4f}_{index:02d}".replace(".", "p")


def write_frameset(fs: FrameSet, directory, *, reveal_truth: bool = False) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    if fs.direct is not None:
        out.append(write_frame(fs.direct, d / "direct", reveal_truth=reveal_truth))
    for key in sorted(fs.oft):
        for n, img in enumerate(fs.oft[key]):
            out.append(write_frame(img, d / frame_stem(img, n), reveal_truth=reveal_truth))
    return out


def read_frameset(directory) -> FrameSet:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: frame directory not found")
    fs = FrameSet()
    for p in sorted(d.glob("*.pgm")):
        fs.add(read_frame(p))
    if fs.direct is None and not fs.oft:
        raise ValueError(f"{d}: no frames found")
    return fs


# ------------------------------------------------------------- results


def result_to_dict(res: ReconstructionResult) -> dict:
    readings = [
        {
            "kind": r.kind, "i": r.i, "j": r.j, "theta_deg": r.theta, "x_m_mm": r.x_m,
            "re": _r17(r.raw.real), "im": _r17(r.raw.imag), "dc": _r17(r.dc),
            "norm": _r17(r.norm), "snr": None if not np.isfinite(r.snr) else _r17(r.snr),
            "flagged": r.flagged, "members": list(r.members),
        }
        for r in res.readings
    ]
    return {
        "rho_raw": density_to_dict(res.rho_raw),
        "rho_physical": density_to_dict(res.rho_physical),
        "readings": readings,
        "diagnostics": _jsonable(res.diagnostics),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _r17(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_result(res: ReconstructionResult, path) -> None:
    _dump(result_to_dict(res), path)


def read_result(path) -> ReconstructionResult:
    from .reconstruct import PeakReading

    obj = _load(path)
    readings = [
        PeakReading(r["kind"], r["i"], r["j"], r["theta_deg"], r["x_m_mm"],
                    complex(r["re"], r["im"]), r["dc"], r["norm"],
                    float("inf") if r["snr"] is None else r["snr"], r["flagged"],
                    tuple(r["members"]))
        for r in obj["readings"]
    ]
    return ReconstructionResult(density_from_dict(obj["rho_raw"]),
                                density_from_dict(obj["rho_physical"]),
                                readings, obj["diagnostics"])


def write_pair_csv(res: ReconstructionResult, path) -> None:
    rows = res.pair_table()
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["i", "j", "magnitude", "phase_rad"],
                            lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_calibration(cal: Calibration, path) -> None:
    entries = [
        {"theta_deg": k[0], "i": k[1], "j": k[2],
         "reference": [_r17(cal.reference[k].real), _r17(cal.reference[k].imag)],
         "known": [_r17(cal.known[k].real), _r17(cal.known[k].imag)]}
        for k in sorted(cal.reference)
    ]
    _dump({"conjugate": cal.conjugate, "reference_ids": list(cal.reference_ids),
           "entries": entries}, path)


def read_calibration(path) -> Calibration:
    obj = _load(path)
    cal = Calibration(conjugate=bool(obj["conjugate"]),
                      reference_ids=tuple(obj.get("reference_ids", ("", ""))))
    for e in obj["entries"]:
        key = (round(float(e["theta_deg"]), 6), int(e["i"]), int(e["j"]))
        cal.reference[key] = complex(*e["reference"])
        cal.known[key] = complex(*e["known"])
    return cal


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
