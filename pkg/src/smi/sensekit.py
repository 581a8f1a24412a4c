"""Sensor frame data model, patch geometry, and frame-level transforms.

A patch holds 43 cells, each reporting 7 channels normalized to [0, 1]:
three vertical force taps, one proximity value, and a 3-axis
accelerometer whose rest reading is 0.5 (signed acceleration mapped
into the unit interval).  All operations here are pure functions on
immutable inputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AllMasked, ConfigInvalid, DimensionMismatch, OutOfRange

N_CELLS = 43
N_CHANNELS = 7
FRAME_DIM = N_CELLS * N_CHANNELS  # 301

# channel layout within a cell
FORCE_CH = (0, 1, 2)
PROX_CH = (3,)
ACCEL_CH = (4, 5, 6)

# rest values used when a modality is masked out
FORCE_REST = 0.0
PROX_REST = 0.0
ACCEL_REST = 0.5

GRID_SIDE = 7
# corner/edge positions left unpopulated on the default 7x7 layout
_UNUSED_GRID = {(0, 0), (0, 3), (0, 6), (6, 0), (6, 3), (6, 6)}


@dataclass(frozen=True)
class CellReading:
    """One cell's 7 channels: (f_z1, f_z2, f_z3), p_z, (a_x, a_y, a_z)."""

    force: np.ndarray
    proximity: float
    accel: np.ndarray


@dataclass(frozen=True)
class SensorFrame:
    """One 100 Hz observation: (43, 7) channel matrix plus frame index."""

    values: np.ndarray
    timestamp_index: int = 0

    @classmethod
    def from_flat(cls, flat, timestamp_index: int = 0) -> "SensorFrame":
        flat = np.asarray(flat, dtype=np.float32)
        if flat.size != FRAME_DIM:
            raise DimensionMismatch(
                f"expected {FRAME_DIM} values, got {flat.size}"
            )
        return cls(flat.reshape(N_CELLS, N_CHANNELS), timestamp_index)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def cell(self, i: int) -> CellReading:
        row = self.values[i]
        return CellReading(force=row[:3].copy(), proximity=float(row[3]),
                           accel=row[4:].copy())

    @classmethod
    def rest(cls, timestamp_index: int = 0) -> "SensorFrame":
        v = np.zeros((N_CELLS, N_CHANNELS), dtype=np.float32)
        v[:, ACCEL_CH] = ACCEL_REST
        return cls(v, timestamp_index)


def validate_frame(frame: SensorFrame) -> SensorFrame:
    """Return the frame unchanged if all 301 values are finite and in [0,1]."""
    v = frame.values
    if v.shape != (N_CELLS, N_CHANNELS):
        raise DimensionMismatch(
            f"frame shape {v.shape}, expected ({N_CELLS}, {N_CHANNELS})"
        )
    validate_array(v)
    return frame


def validate_array(arr) -> np.ndarray:
    """Vectorized range/finiteness check for stacked frame data.

    Accepts any array whose trailing dimensions flatten to multiples of
    the frame layout; raises OutOfRange on the first offending value.
    """
    arr = np.asarray(arr)
    if arr.size % FRAME_DIM != 0:
        raise DimensionMismatch(
            f"array of {arr.size} values is not a whole number of frames"
        )
    finite = np.isfinite(arr)
    if not finite.all():
        idx = np.unravel_index(int(np.argmin(finite)), arr.shape)
        raise OutOfRange(f"non-finite value at {idx}")
    bad = (arr < 0.0) | (arr > 1.0)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), arr.shape)
        raise OutOfRange(f"value {arr[idx]} at {idx} outside [0, 1]")
    return arr


def default_cell_positions() -> np.ndarray:
    """Grid coordinates of the default flat layout, centered on the patch.

    7x7 grid with 6 unused border positions -> 43 cells, enumerated
    row-major.  The set of unused positions is symmetric under column
    flip so the default mirror map stays within the layout.
    """
    pos = []
    for row in range(GRID_SIDE):
        for col in range(GRID_SIDE):
            if (row, col) in _UNUSED_GRID:
                continue
            pos.append((col - 3.0, 3.0 - row))
    return np.asarray(pos, dtype=np.float64)


@dataclass(frozen=True)
class PatchGeometry:
    """Cell-frame to patch-frame rotations, force scale, and mirror layout."""

    rotations: np.ndarray            # (43, 3, 3)
    force_scale: float               # Newtons per normalized unit
    mirror_map: np.ndarray           # (43,) permutation
    accel_flips: np.ndarray          # (43, 3) entries in {-1, +1}
    cell_positions: np.ndarray = field(
        default_factory=default_cell_positions)  # (43, 2) patch-plane coords

    def validate(self) -> "PatchGeometry":
        if self.rotations.shape != (N_CELLS, 3, 3):
            raise ConfigInvalid("rotations must be 43 3x3 matrices")
        eye = np.eye(3)
        for i, r in enumerate(self.rotations):
            if np.max(np.abs(r.T @ r - eye)) > 1e-9:
                raise ConfigInvalid(f"rotation {i} is not orthonormal")
            if abs(np.linalg.det(r) - 1.0) > 1e-9:
                raise ConfigInvalid(f"rotation {i} has det != +1")
        if self.force_scale <= 0:
            raise ConfigInvalid("force_scale must be positive")
        m = self.mirror_map
        if sorted(m.tolist()) != list(range(N_CELLS)):
            raise ConfigInvalid("mirror_map is not a permutation of 0..42")
        if not np.array_equal(m[m], np.arange(N_CELLS)):
            raise ConfigInvalid("mirror_map applied twice is not the identity")
        if self.accel_flips.shape != (N_CELLS, 3) or not np.isin(
                self.accel_flips, (-1, 1)).all():
            raise ConfigInvalid("accel_flips must be 43x3 entries of +-1")
        # flips must agree across mirrored pairs so mirroring stays involutive
        if not np.array_equal(self.accel_flips[m], self.accel_flips):
            raise ConfigInvalid("accel_flips inconsistent with mirror_map")
        if self.cell_positions.shape != (N_CELLS, 2):
            raise ConfigInvalid("cell_positions must be 43x2")
        return self


def default_geometry(force_scale: float = 1.0) -> PatchGeometry:
    """Flat patch: identity rotations, column-flip mirror, accel-x flip."""
    positions = default_cell_positions()
    # mirror partner = cell at (-x, y); the unused-position set is
    # column-symmetric so the partner always exists
    index_of = {(float(x), float(y)): i for i, (x, y) in enumerate(positions)}
    mirror = np.array(
        [index_of[(-float(x), float(y))] for x, y in positions],
        dtype=np.int64)
    flips = np.ones((N_CELLS, 3), dtype=np.int64)
    flips[:, 0] = -1  # mirroring the patch negates x-axis acceleration
    return PatchGeometry(
        rotations=np.broadcast_to(np.eye(3), (N_CELLS, 3, 3)).copy(),
        force_scale=force_scale,
        mirror_map=mirror,
        accel_flips=flips,
        cell_positions=positions,
    ).validate()


def pseudo_force(frame: SensorFrame, geom: PatchGeometry) -> np.ndarray:
    """Translational pseudo-force in the patch frame, Newtons.

    Sums each cell's three vertical force taps along the cell z-axis,
    rotates into the patch frame, and scales by force_scale / 3.
    Proximity is excluded: its contribution is small next to the force
    taps.
    """
    sums = frame.values[:, FORCE_CH].sum(axis=1).astype(np.float64)  # (43,)
    # R_i @ (0, 0, s) is the third column of R_i times s
    z_cols = geom.rotations[:, :, 2]
    return (geom.force_scale / 3.0) * (z_cols * sums[:, None]).sum(axis=0)


def mirror_frame(frame: SensorFrame, geom: PatchGeometry) -> SensorFrame:
    """Left/right mirror: permute cells and sign-flip accel axes.

    Flipped accel axes map x -> 1-x because the normalized accel
    channel centers its signed zero at 0.5.
    """
    values = frame.values[geom.mirror_map].copy()
    accel = values[:, ACCEL_CH]
    flip = geom.accel_flips == -1
    values[:, ACCEL_CH] = np.where(flip, 1.0 - accel, accel)
    return SensorFrame(values, frame.timestamp_index)


def mirror_array(obs, geom: PatchGeometry) -> np.ndarray:
    """mirror_frame applied to stacked frames of shape (..., 301)."""
    obs = np.asarray(obs)
    lead = obs.shape[:-1]
    cells = obs.reshape(lead + (N_CELLS, N_CHANNELS))[..., geom.mirror_map, :].copy()
    accel = cells[..., ACCEL_CH]
    flip = geom.accel_flips == -1
    cells[..., ACCEL_CH] = np.where(flip, 1.0 - accel, accel)
    return cells.reshape(lead + (FRAME_DIM,))


@dataclass(frozen=True)
class ModalityMask:
    include_force: bool = True
    include_proximity: bool = True
    include_accel: bool = True

    def validate(self) -> "ModalityMask":
        if not (self.include_force or self.include_proximity
                or self.include_accel):
            raise AllMasked("at least one modality must stay enabled")
        return self

    @property
    def name(self) -> str:
        if self.include_force and self.include_proximity and self.include_accel:
            return "full"
        if not self.include_force:
            return "no-force"
        if not self.include_proximity:
            return "no-prox"
        return "no-accel"


MASK_PRESETS = {
    "full": ModalityMask(),
    "no-force": ModalityMask(include_force=False),
    "no-prox": ModalityMask(include_proximity=False),
    "no-accel": ModalityMask(include_accel=False),
}


def apply_mask(frame: SensorFrame, mask: ModalityMask) -> SensorFrame:
    """Replace excluded modalities with rest values; keeps the 301 layout
    so one model architecture serves every ablation."""
    mask.validate()
    if mask.include_force and mask.include_proximity and mask.include_accel:
        return frame
    values = frame.values.copy()
    if not mask.include_force:
        values[:, FORCE_CH] = FORCE_REST
    if not mask.include_proximity:
        values[:, PROX_CH] = PROX_REST
    if not mask.include_accel:
        values[:, ACCEL_CH] = ACCEL_REST
    return SensorFrame(values, frame.timestamp_index)


def apply_mask_array(obs, mask: ModalityMask) -> np.ndarray:
    """apply_mask over stacked frames (..., 301); always returns a copy."""
    mask.validate()
    obs = np.asarray(obs)
    cells = obs.reshape(obs.shape[:-1] + (N_CELLS, N_CHANNELS)).copy()
    if not mask.include_force:
        cells[..., FORCE_CH] = FORCE_REST
    if not mask.include_proximity:
        cells[..., PROX_CH] = PROX_REST
    if not mask.include_accel:
        cells[..., ACCEL_CH] = ACCEL_REST
    return cells.reshape(obs.shape)


# --- wire formats ---------------------------------------------------------

_FRAME_HEADER = struct.Struct("<I")
FRAME_WIRE_SIZE = 4 + FRAME_DIM * 4


def frame_to_bytes(frame: SensorFrame) -> bytes:
    """Binary wire form: u32 LE frame index + 301 f32 LE."""
    payload = frame.flat.astype("<f4", copy=False).tobytes()
    return _FRAME_HEADER.pack(frame.timestamp_index & 0xFFFFFFFF) + payload


def frame_from_bytes(buf: bytes) -> SensorFrame:
    if len(buf) != FRAME_WIRE_SIZE:
        raise DimensionMismatch(
            f"frame record is {len(buf)} bytes, expected {FRAME_WIRE_SIZE}")
    (t,) = _FRAME_HEADER.unpack_from(buf)
    flat = np.frombuffer(buf, dtype="<f4", offset=4)
    return SensorFrame.from_flat(flat, t)


def frame_to_json(frame: SensorFrame) -> str:
    o = [round(float(x), 6) for x in frame.flat]
    return json.dumps({"t": int(frame.timestamp_index), "o": o})


def frame_from_json(line: str) -> SensorFrame:
    doc = json.loads(line)
    if not isinstance(doc, dict) or "t" not in doc or "o" not in doc:
        raise DimensionMismatch("frame JSON must carry 't' and 'o'")
    return SensorFrame.from_flat(doc["o"], int(doc["t"]))


# --- geometry config ------------------------------------------------------

def geometry_to_json(geom: PatchGeometry) -> str:
    return json.dumps({
        "rotations": geom.rotations.reshape(N_CELLS, 9).tolist(),
        "force_scale": geom.force_scale,
        "mirror_map": geom.mirror_map.tolist(),
        "accel_flips": geom.accel_flips.tolist(),
        "positions": geom.cell_positions.tolist(),
    }, indent=2)


def geometry_from_json(text: str) -> PatchGeometry:
    try:
        doc = json.loads(text)
        rotations = np.asarray(doc["rotations"], dtype=np.float64)
        geom = PatchGeometry(
            rotations=rotations.reshape(N_CELLS, 3, 3),
            force_scale=float(doc["force_scale"]),
            mirror_map=np.asarray(doc["mirror_map"], dtype=np.int64),
            accel_flips=np.asarray(doc["accel_flips"], dtype=np.int64),
            cell_positions=np.asarray(
                doc.get("positions", default_cell_positions()),
                dtype=np.float64),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigInvalid(f"bad geometry config: {exc}") from exc
    return geom.validate()


def load_geometry(path=None) -> PatchGeometry:
    if path is None:
        return default_geometry()
    with open(path, "r", encoding="utf-8") as fh:
        return geometry_from_json(fh.read())
