"""Labeled synthetic skin-stream generator for the 17 contact classes.

The generator stands in for human data collection: each class owns a
template (where the hand sits, how the force envelope evolves, which way
the patch is dragged or twisted) and trajectories are synthesized from
those templates plus channel noise, a firmware-style moving-average
filter, and the cross-class prefix trick.

Support physics: on a soft (elastomer) support the accelerometers read
the tangential drive and the force rate; on a rigid support the coupling
is zero and accelerometer channels carry nothing but noise.  The class
pairs that differ only in twist direction (Torque/Grab clock vs.
anticlock) are therefore separable only through the accel channels by
construction.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, IoFailure
from .sensekit import (
    ACCEL_REST, FRAME_DIM, N_CELLS, PatchGeometry, default_geometry,
    mirror_array,
)


class ContactClass(enum.IntEnum):
    TORQUE_LEFT = 0
    TORQUE_RIGHT = 1
    TORQUE_FORWARD = 2
    TORQUE_BACKWARD = 3
    TORQUE_CLOCK = 4
    TORQUE_ANTICLOCK = 5
    GRAB_LEFT = 6
    GRAB_RIGHT = 7
    GRAB_FORWARD = 8
    GRAB_BACKWARD = 9
    GRAB_CLOCK = 10
    GRAB_ANTICLOCK = 11
    TOUCH_OUTSIDE = 12
    TOUCH_INSIDE = 13
    PUSH = 14
    PULL = 15
    NO_TOUCH = 16


N_CLASSES = len(ContactClass)
CLASS_NAMES = [c.name.lower() for c in ContactClass]

# Gesture executed by the mirrored hand for each class: directional and
# chiral classes swap partners, everything else mirrors onto itself.
# Rendering a right-side sample = render the partner gesture in the left
# frame, then apply the geometric mirror; the result lands on the target
# class's signature, which is what lets one classifier serve both patches.
MIRROR_CLASS = {c: c for c in ContactClass}
MIRROR_CLASS.update({
    ContactClass.TORQUE_LEFT: ContactClass.TORQUE_RIGHT,
    ContactClass.TORQUE_RIGHT: ContactClass.TORQUE_LEFT,
    ContactClass.TORQUE_CLOCK: ContactClass.TORQUE_ANTICLOCK,
    ContactClass.TORQUE_ANTICLOCK: ContactClass.TORQUE_CLOCK,
    ContactClass.GRAB_LEFT: ContactClass.GRAB_RIGHT,
    ContactClass.GRAB_RIGHT: ContactClass.GRAB_LEFT,
    ContactClass.GRAB_CLOCK: ContactClass.GRAB_ANTICLOCK,
    ContactClass.GRAB_ANTICLOCK: ContactClass.GRAB_CLOCK,
})

# rendering constants
ATTACK_FRAMES = 12        # force rise time for hold-style motions
CONTACT_FRAMES = 6        # proximity rise time
PUSH_PULSE_FRAMES = 50    # rhythmic pressing period
PULL_DECAY_FRAMES = 180
CROSSFADE_FRAMES = 3
FILTER_WINDOW = 5         # firmware low-pass approximation
RATE_GAIN = 8.0           # force-rate to accel-z coupling multiplier
SPIN_RADIUS = 3.0         # twist field normalization

FORCE_SIGMA = 0.015
PROX_SIGMA = 0.012


@dataclass(frozen=True)
class ForceProfile:
    pattern: np.ndarray      # (43,) per-cell force weights, max 1
    envelope: str            # hold | push | pull | rest


@dataclass(frozen=True)
class ClassTemplate:
    contact_footprint: np.ndarray    # (43,) untilted contact weights
    force_profile: ForceProfile
    proximity_profile: np.ndarray    # (43,)
    tangential_dir: np.ndarray       # (2,) unit vector or zero
    spin: float                      # +1 clock, -1 anticlock, 0 none
    noise_sigma: dict = field(
        default_factory=lambda: {"force": FORCE_SIGMA, "prox": PROX_SIGMA})


@dataclass(frozen=True)
class SupportModel:
    kind: str                        # soft | rigid
    coupling: float                  # accel response gain
    accel_noise_sigma: float

    def validate(self) -> "SupportModel":
        if self.kind not in ("soft", "rigid"):
            raise ConfigInvalid(f"unknown support kind {self.kind!r}")
        if self.kind == "rigid" and self.coupling != 0.0:
            raise ConfigInvalid("rigid support must have zero coupling")
        if self.coupling < 0 or self.accel_noise_sigma < 0:
            raise ConfigInvalid("support gains must be non-negative")
        return self


SOFT_SUPPORT = SupportModel(kind="soft", coupling=0.30, accel_noise_sigma=0.02)
RIGID_SUPPORT = SupportModel(kind="rigid", coupling=0.0, accel_noise_sigma=0.06)


def support_preset(name: str) -> SupportModel:
    try:
        return {"soft": SOFT_SUPPORT, "rigid": RIGID_SUPPORT}[name]
    except KeyError:
        raise ConfigInvalid(f"unknown support preset {name!r}") from None


@dataclass(frozen=True)
class GenConfig:
    n_per_class: int = 15
    traj_len: int = 375
    prefix_fraction_range: tuple = (0.01, 0.04)
    seed: int = 0
    support: SupportModel = SOFT_SUPPORT

    def validate(self) -> "GenConfig":
        if self.traj_len < 2:
            raise ConfigInvalid("traj_len must be >= 2")
        lo, hi = self.prefix_fraction_range
        if not (0.0 <= lo <= hi <= 0.5):
            raise ConfigInvalid("prefix_fraction_range must lie within [0, 0.5]")
        if self.n_per_class < 1:
            raise ConfigInvalid("n_per_class must be >= 1")
        self.support.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "n_per_class": self.n_per_class,
            "traj_len": self.traj_len,
            "prefix_fraction_range": list(self.prefix_fraction_range),
            "seed": self.seed,
            "support": {
                "kind": self.support.kind,
                "coupling": self.support.coupling,
                "accel_noise_sigma": self.support.accel_noise_sigma,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GenConfig":
        sup = doc.get("support", {"kind": "soft"})
        if isinstance(sup, str):
            support = support_preset(sup)
        elif "coupling" in sup:
            support = SupportModel(sup["kind"], sup["coupling"],
                                   sup["accel_noise_sigma"])
        else:
            support = support_preset(sup["kind"])
        return cls(
            n_per_class=int(doc.get("n_per_class", 15)),
            traj_len=int(doc.get("traj_len", 375)),
            prefix_fraction_range=tuple(doc.get("prefix_fraction_range",
                                                (0.01, 0.04))),
            seed=int(doc.get("seed", 0)),
            support=support,
        ).validate()


@dataclass
class LabeledTrajectory:
    frames: np.ndarray           # (traj_len, 301) float32
    label: ContactClass          # target class, even during the prefix
    side: str                    # 'L' | 'R'
    prefix_class: ContactClass
    prefix_len: int


@dataclass
class Dataset:
    trajectories: list
    manifest: dict
    _obs: np.ndarray | None = None
    _labels: np.ndarray | None = None

    def __len__(self):
        return len(self.trajectories)

    def obs_array(self) -> np.ndarray:
        """(N, T, 301) float32 view of all trajectories."""
        if self._obs is None:
            self._obs = np.stack([t.frames for t in self.trajectories])
        return self._obs

    def labels_array(self) -> np.ndarray:
        if self._labels is None:
            self._labels = np.array([int(t.label) for t in self.trajectories],
                                    dtype=np.int64)
        return self._labels

    def prefix_lens(self) -> np.ndarray:
        return np.array([t.prefix_len for t in self.trajectories], dtype=np.int64)

    def prefix_classes(self) -> np.ndarray:
        return np.array([int(t.prefix_class) for t in self.trajectories],
                        dtype=np.int64)


# --- templates -------------------------------------------------------------

def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _tilt(footprint, positions, direction, strength=0.55):
    proj = positions @ np.asarray(direction, dtype=np.float64) / 3.0
    pattern = footprint * np.clip(1.0 + strength * proj, 0.0, None)
    return pattern / pattern.max()


def class_templates_default(geometry: PatchGeometry | None = None):
    """The 17 default templates keyed by ContactClass.

    Torque motions press the whole palm onto the patch; Grab motions ring
    the rim with the fingertips and leave a proximity gap over the hollow
    palm; Touch motions localize to the outer or inner cells; Push and
    Pull share the palm footprint but carry opposite force-rate
    signatures; the clock/anticlock twists share their partner's force
    and proximity patterns exactly and differ only in the twist field.
    """
    geom = geometry or default_geometry()
    pos = geom.cell_positions
    r = np.linalg.norm(pos, axis=1)

    palm = np.clip(1.15 * np.exp(-((r / 2.9) ** 2)), 0.0, 1.0)
    ring = np.exp(-(((r - 2.55) / 0.7) ** 2))
    outer = _expit((r - 3.0) / 0.15)
    inner = _expit((1.4 - r) / 0.15)

    palm_prox = 0.9 * np.clip(2.2 * palm, 0.0, 1.0)
    grab_prox = np.maximum(0.92 * np.clip(2.2 * ring, 0.0, 1.0),
                           0.3 * (r < 1.8))
    outer_prox = 0.9 * np.clip(2.5 * outer, 0.0, 1.0)
    inner_prox = 0.9 * np.clip(2.5 * inner, 0.0, 1.0)

    unit = {
        "left": np.array([-1.0, 0.0]), "right": np.array([1.0, 0.0]),
        "forward": np.array([0.0, 1.0]), "backward": np.array([0.0, -1.0]),
        "zero": np.zeros(2),
    }

    def tmpl(footprint, pattern, envelope, prox, tdir, spin=0.0):
        return ClassTemplate(
            contact_footprint=footprint.copy(),
            force_profile=ForceProfile(pattern.copy(), envelope),
            proximity_profile=prox.copy(),
            tangential_dir=unit[tdir].copy(),
            spin=spin,
        )

    t = {}
    for name in ("left", "right", "forward", "backward"):
        t[ContactClass[f"TORQUE_{name.upper()}"]] = tmpl(
            palm, _tilt(palm, pos, unit[name]), "hold", palm_prox, name)
        t[ContactClass[f"GRAB_{name.upper()}"]] = tmpl(
            ring, _tilt(ring, pos, unit[name]), "hold", grab_prox, name)
    # twist pairs: identical force/prox patterns, opposite spin fields
    t[ContactClass.TORQUE_CLOCK] = tmpl(palm, palm, "hold", palm_prox, "zero", +1.0)
    t[ContactClass.TORQUE_ANTICLOCK] = tmpl(palm, palm, "hold", palm_prox, "zero", -1.0)
    t[ContactClass.GRAB_CLOCK] = tmpl(ring, ring, "hold", grab_prox, "zero", +1.0)
    t[ContactClass.GRAB_ANTICLOCK] = tmpl(ring, ring, "hold", grab_prox, "zero", -1.0)
    t[ContactClass.TOUCH_OUTSIDE] = tmpl(outer, outer, "hold", outer_prox, "zero")
    t[ContactClass.TOUCH_INSIDE] = tmpl(inner, inner, "hold", inner_prox, "zero")
    # push bears on the palm heel at the center, pull hooks the rim;
    # both keep whole-palm contact and their opposite rate signatures
    push_pat = palm * (0.45 + 0.55 * np.exp(-((r / 1.6) ** 2)))
    pull_pat = palm * (0.45 + 0.55 * _expit((r - 2.3) / 0.3))
    t[ContactClass.PUSH] = tmpl(palm, push_pat / push_pat.max(), "push",
                                palm_prox, "zero")
    t[ContactClass.PULL] = tmpl(palm, pull_pat / pull_pat.max(), "pull",
                                palm_prox, "zero")
    zero = np.zeros(N_CELLS)
    t[ContactClass.NO_TOUCH] = tmpl(zero, zero, "rest", zero, "zero")
    return t


def _envelope(kind: str, taus: np.ndarray) -> np.ndarray:
    taus = taus.astype(np.float64)
    if kind == "hold":
        return _smoothstep(taus / ATTACK_FRAMES)
    if kind == "push":
        # rhythmic pressing: strong positive-rate bursts, never settles
        pulse = 0.55 + 0.45 * np.sin(
            2.0 * np.pi * taus / PUSH_PULSE_FRAMES - np.pi / 2.0)
        return _smoothstep(taus / ATTACK_FRAMES) * pulse
    if kind == "pull":
        return (_smoothstep(taus / ATTACK_FRAMES)
                * (0.3 + 0.7 * np.exp(-taus / PULL_DECAY_FRAMES)))
    if kind == "rest":
        return np.zeros_like(taus)
    raise ConfigInvalid(f"unknown envelope {kind!r}")


def _drive_field(template: ClassTemplate, positions: np.ndarray) -> np.ndarray:
    """(43, 2) in-plane drive: linear drag plus the twist field.

    Rows are normalized to unit length: the elastomer's tilt response
    saturates with lever arm, so every contacted cell reads the full
    drive direction rather than a radius-scaled one.
    """
    spin_field = np.stack([positions[:, 1], -positions[:, 0]],
                          axis=1) / SPIN_RADIUS
    field = template.tangential_dir[None, :] + template.spin * spin_field
    norms = np.linalg.norm(field, axis=1, keepdims=True)
    return np.where(norms > 1e-9, field / np.maximum(norms, 1e-9), 0.0)


def _render_clean(template: ClassTemplate, taus, support: SupportModel,
                  positions) -> dict:
    """Noise-free per-cell signals at the given motion phases."""
    env = _envelope(template.force_profile.envelope, taus)          # (n,)
    contact = _smoothstep(taus / CONTACT_FRAMES)
    if template.force_profile.envelope == "rest":
        contact = np.zeros_like(contact)
    force = env[:, None] * template.force_profile.pattern[None, :]   # (n, 43)
    prox = contact[:, None] * template.proximity_profile[None, :]
    drive = _drive_field(template, positions)                        # (43, 2)
    accel_xy = (support.coupling
                * env[:, None, None]
                * template.contact_footprint[None, :, None]
                * drive[None, :, :])                                 # (n, 43, 2)
    return {"force": force, "prox": prox, "accel_xy": accel_xy}


def _causal_moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average along axis 0 with partial warm-up windows."""
    cs = np.cumsum(x, axis=0, dtype=np.float64)
    out = np.empty_like(cs)
    n = x.shape[0]
    k = min(window, n)
    out[:k] = cs[:k] / np.arange(1, k + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    if n > window:
        out[window:] = (cs[window:] - cs[:-window]) / window
    return out


def generate_trajectory(target: ContactClass, cfg: GenConfig,
                        geometry: PatchGeometry | None = None,
                        templates=None, index: int = 0,
                        side: str = "L") -> LabeledTrajectory:
    """One labeled trajectory: random other-class prefix, 3-frame
    cross-fade, then the target motion; channel noise and a 5-frame
    firmware-style moving average on top.

    The RNG stream is derived from (seed, class, index) so generation is
    independent of scheduling order; `side` only controls mirroring.
    """
    cfg.validate()
    geom = geometry or default_geometry()
    templates = templates or class_templates_default(geom)
    rng = np.random.default_rng([cfg.seed, 3, int(target), index])
    T = cfg.traj_len

    others = [c for c in ContactClass if c != target]
    prefix_class = others[int(rng.integers(len(others)))]
    lo, hi = cfg.prefix_fraction_range
    prefix_len = int(round(rng.uniform(lo, hi) * T))
    tau_mid = int(rng.integers(100, 251))

    # the mirrored hand executes the partner gesture; labels stay put
    render_target = MIRROR_CLASS[target] if side == "R" else target
    render_prefix = MIRROR_CLASS[prefix_class] if side == "R" else prefix_class

    pos = geom.cell_positions
    tgt = _render_clean(templates[render_target], np.arange(T - prefix_len),
                        cfg.support, pos)
    if prefix_len > 0:
        fade = min(CROSSFADE_FRAMES, T - prefix_len)
        pre = _render_clean(templates[render_prefix],
                            tau_mid + np.arange(prefix_len + fade),
                            cfg.support, pos)
        w = np.zeros(T)
        w[prefix_len:] = 1.0
        w[prefix_len:prefix_len + fade] = (np.arange(fade) + 1) / (fade + 1)

        def blend(key):
            shape = (T,) + tgt[key].shape[1:]
            out = np.zeros(shape)
            wx = w.reshape((T,) + (1,) * (out.ndim - 1))
            out[prefix_len:] = tgt[key]
            out[:prefix_len + fade] = (1 - wx[:prefix_len + fade]) * pre[key] \
                + wx[:prefix_len + fade] * out[:prefix_len + fade]
            return out

        force, prox, accel_xy = blend("force"), blend("prox"), blend("accel_xy")
    else:
        force, prox, accel_xy = tgt["force"], tgt["prox"], tgt["accel_xy"]

    # accel z reads the force rate through the support coupling
    rate = np.diff(force, axis=0, prepend=force[:1])
    accel_z = cfg.support.coupling * RATE_GAIN * rate

    cells = np.empty((T, N_CELLS, 7))
    cells[:, :, 0] = cells[:, :, 1] = cells[:, :, 2] = force
    cells[:, :, 3] = prox
    cells[:, :, 4:6] = ACCEL_REST + accel_xy
    cells[:, :, 6] = ACCEL_REST + accel_z

    sigma = np.empty(7)
    sigma[:3] = templates[target].noise_sigma["force"]
    sigma[3] = templates[target].noise_sigma["prox"]
    sigma[4:] = cfg.support.accel_noise_sigma
    cells += rng.normal(0.0, 1.0, cells.shape) * sigma

    cells = _causal_moving_average(cells, FILTER_WINDOW)
    flat = np.clip(cells, 0.0, 1.0).reshape(T, FRAME_DIM).astype(np.float32)
    if side == "R":
        flat = mirror_array(flat, geom).astype(np.float32)
    elif side != "L":
        raise ConfigInvalid(f"side must be 'L' or 'R', got {side!r}")
    return LabeledTrajectory(flat, target, side, prefix_class, prefix_len)


DATASET_FORMAT_VERSION = 1


def generate_dataset(cfg: GenConfig, geometry: PatchGeometry | None = None,
                     extras=()) -> Dataset:
    """n_per_class trajectories per class per side, deterministically
    shuffled.  Right-side samples are generated in the left frame and
    mirrored so both sides share one classifier.

    extras: optional (class, side) pairs appended beyond the uniform
    allocation (used by the full-scale preset's iterative top-up).
    """
    cfg.validate()
    geom = geometry or default_geometry()
    templates = class_templates_default(geom)
    trajs = []
    for cls in ContactClass:
        for side, offset in (("L", 0), ("R", cfg.n_per_class)):
            for i in range(cfg.n_per_class):
                trajs.append(generate_trajectory(
                    cls, cfg, geom, templates, index=offset + i, side=side))
    for k, (cls, side) in enumerate(extras):
        trajs.append(generate_trajectory(
            ContactClass(cls), cfg, geom, templates,
            index=2 * cfg.n_per_class + k, side=side))
    order = np.random.default_rng([cfg.seed, 5]).permutation(len(trajs))
    trajs = [trajs[i] for i in order]
    counts = {}
    for t in trajs:
        key = f"{CLASS_NAMES[t.label]}/{t.side}"
        counts[key] = counts.get(key, 0) + 1
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "config": cfg.to_dict(),
        "n_trajectories": len(trajs),
        "counts": counts,
        "classes": CLASS_NAMES,
        "extras": [[int(c), s] for c, s in extras],
    }
    return Dataset(trajs, manifest)


def subset_dataset(ds: Dataset, classes, per_class: int, seed: int = 0) -> Dataset:
    """Deterministic stratified subset (e.g. the 6-class twist-motion
    selection used by the support comparison)."""
    classes = [ContactClass(c) for c in classes]
    rng = np.random.default_rng([seed, 7])
    keep = []
    for cls in classes:
        idx = [i for i, t in enumerate(ds.trajectories) if t.label == cls]
        if len(idx) < per_class:
            raise ConfigInvalid(
                f"dataset has {len(idx)} trajectories of {cls.name}, "
                f"need {per_class}")
        pick = rng.choice(len(idx), size=per_class, replace=False)
        keep.extend(idx[i] for i in sorted(pick))
    keep.sort()
    manifest = dict(ds.manifest)
    manifest["subset"] = {
        "classes": [c.name.lower() for c in classes],
        "per_class": per_class,
        "seed": seed,
    }
    manifest["n_trajectories"] = len(keep)
    manifest["counts"] = None
    return Dataset([ds.trajectories[i] for i in keep], manifest)


TORQUE_CLASSES = [
    ContactClass.TORQUE_LEFT, ContactClass.TORQUE_RIGHT,
    ContactClass.TORQUE_FORWARD, ContactClass.TORQUE_BACKWARD,
    ContactClass.TORQUE_CLOCK, ContactClass.TORQUE_ANTICLOCK,
]


# --- dataset file I/O -------------------------------------------------------

_MAGIC = b"SMID"
_SIDE_CODE = {"L": 0, "R": 1}
_SIDE_NAME = {0: "L", 1: "R"}
_REC_HEAD = struct.Struct("<BBBBI")


def write_dataset(ds: Dataset, path) -> None:
    manifest = json.dumps(ds.manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", DATASET_FORMAT_VERSION, len(manifest)))
        fh.write(manifest)
        for t in ds.trajectories:
            fh.write(_REC_HEAD.pack(int(t.label), _SIDE_CODE[t.side],
                                    int(t.prefix_class), 0, t.prefix_len))
            fh.write(np.ascontiguousarray(t.frames, dtype="<f4").tobytes())


def read_dataset(path) -> Dataset:
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise IoFailure(f"{path} is not a dataset file")
            version, mlen = struct.unpack("<II", fh.read(8))
            if version != DATASET_FORMAT_VERSION:
                raise IoFailure(f"dataset format {version} not supported")
            manifest = json.loads(fh.read(mlen).decode("utf-8"))
            T = manifest["config"]["traj_len"]
            n = manifest["n_trajectories"]
            trajs = []
            rec_bytes = T * FRAME_DIM * 4
            for _ in range(n):
                head = fh.read(_REC_HEAD.size)
                label, side, prefix_class, _, prefix_len = _REC_HEAD.unpack(head)
                frames = np.frombuffer(fh.read(rec_bytes), dtype="<f4")
                trajs.append(LabeledTrajectory(
                    frames.reshape(T, FRAME_DIM).copy(),
                    ContactClass(label), _SIDE_NAME[side],
                    ContactClass(prefix_class), prefix_len))
            return Dataset(trajs, manifest)
    except (OSError, struct.error, KeyError, ValueError) as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
