"""Dim-target emergence detection on a pixel grid.

The hidden chain has one state per pixel plus a terminal
"not visually apparent" (NVA) state.  In-image motion follows a small
offset patch; patch mass that would cross the image boundary goes to
NVA, and the NVA state re-enters every pixel with equal probability.
Measurement weights are the unnormalized per-pixel likelihood ratios
y + 1 (and 1 for NVA), which the filter tolerates because beliefs only
depend on ratios.  The emergence statistic is the total posterior mass
on pixel states, thresholded exactly like the two-state rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    InvalidPatchError,
    ScheduleOutOfBoundsError,
)
from .hmm_filter import filter_step
from .signal_core import Belief, _readonly
from .stopping import StoppingRule, should_stop

PATCH_ATOL = 1e-12

# offsets are (row change, column change); row 0 is the top of the image
DEFAULT_PATCH: Mapping[tuple[int, int], float] = {(0, 0): 0.5, (-1, 0): 0.5}

NAMED_OFFSETS = {
    "stay": (0, 0),
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
    "up_left": (-1, -1),
    "up_right": (-1, 1),
    "down_left": (1, -1),
    "down_right": (1, 1),
}


@dataclass(frozen=True)
class GridModel:
    """Pixel-grid chain: geometry, motion patch, and NVA coupling.

    nva_to_image_total is split equally over all pixels; the NVA
    self-transition keeps the rest.  Transitions leaving the image
    boundary are redirected to NVA.
    """

    width: int
    height: int
    patch: Mapping[tuple[int, int], float] = field(
        default_factory=lambda: dict(DEFAULT_PATCH)
    )
    nva_to_image_total: float = 0.1

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        patch = {
            (int(dr), int(dc)): float(prob) for (dr, dc), prob in self.patch.items()
        }
        if any(prob < 0.0 for prob in patch.values()):
            raise InvalidPatchError("patch probabilities must be nonnegative")
        total = math.fsum(patch.values())
        if abs(total - 1.0) > PATCH_ATOL:
            raise InvalidPatchError(f"patch mass must sum to 1, got {total!r}")
        if not 0.0 <= self.nva_to_image_total <= 1.0:
            raise ValueError("nva_to_image_total must lie in [0, 1]")
        object.__setattr__(self, "patch", patch)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_states(self) -> int:
        return self.n_pixels + 1

    @property
    def nva_state(self) -> int:
        """1-based index of the NVA state (the last one)."""
        return self.n_states

    def pixel_index(self, row: int, col: int) -> int:
        """0-based row-major pixel index."""
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"pixel ({row}, {col}) outside the grid")
        return row * self.width + col

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


def build_grid_transition(gm: GridModel) -> sp.csc_matrix:
    """Sparse column-stochastic (N+1) x (N+1) chain matrix."""
    n = gm.n_pixels
    rows, cols, data = [], [], []
    for r in range(gm.height):
        for c in range(gm.width):
            j = gm.pixel_index(r, c)
            for (dr, dc), prob in gm.patch.items():
                if prob == 0.0:
                    continue
                rr, cc = r + dr, c + dc
                target = gm.pixel_index(rr, cc) if gm.in_bounds(rr, cc) else n
                rows.append(target)
                cols.append(j)
                data.append(prob)
    per_pixel = gm.nva_to_image_total / n
    for i in range(n):
        rows.append(i)
        cols.append(n)
        data.append(per_pixel)
    rows.append(n)
    cols.append(n)
    data.append(1.0 - gm.nva_to_image_total)
    # duplicate (row, col) entries from patch offsets that share a
    # redirected target are summed by the COO -> CSC conversion
    return sp.coo_matrix(
        (data, (rows, cols)), shape=(gm.n_states, gm.n_states)
    ).tocsc()


@dataclass(frozen=True)
class ImageObservation:
    """One nonnegative greyscale frame."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=float)
        if arr.ndim != 2:
            raise ValueError("image must be a 2-d array")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("pixel intensities must be finite and nonnegative")
        object.__setattr__(self, "pixels", _readonly(arr))


def unnormalized_output(image: ImageObservation | np.ndarray) -> np.ndarray:
    """Diagonal measurement weights: y + 1 per pixel and 1 for NVA."""
    pixels = image.pixels if isinstance(image, ImageObservation) else np.asarray(image)
    return np.append(pixels.ravel() + 1.0, 1.0)


class ImageLikelihood:
    """Adapter exposing the image weights through the filter's
    observation interface."""

    def __init__(self, gm: GridModel):
        self.shape = (gm.height, gm.width)

    def state_weights(self, image) -> np.ndarray:
        pixels = (
            image.pixels if isinstance(image, ImageObservation) else np.asarray(image)
        )
        if pixels.shape != self.shape:
            raise ValueError(f"expected a {self.shape} frame, got {pixels.shape}")
        return unnormalized_output(pixels)


@dataclass(frozen=True)
class AircraftStatistic:
    """Posterior over the grid chain plus the emergence statistic."""

    belief: Belief
    zeta: float

    def __post_init__(self):
        if abs(self.zeta - (1.0 - float(self.belief.p[-1]))) > 1e-12:
            raise ValueError("zeta must equal 1 minus the NVA mass")


@dataclass(frozen=True)
class EmergenceDetection:
    """Alarm time (None if never) plus per-frame traces.

    zeta[k] is the statistic after frame k, with zeta[0] from the
    prior; nva_mass mirrors it; log_normalizers has one entry per
    frame and refers to the common-factor-scaled likelihood.
    """

    alarm_time: int | None
    zeta: np.ndarray
    nva_mass: np.ndarray
    log_normalizers: np.ndarray
    beliefs: tuple[Belief, ...] | None = None

    def __post_init__(self):
        for name in ("zeta", "nva_mass", "log_normalizers"):
            object.__setattr__(
                self, name, _readonly(np.asarray(getattr(self, name), dtype=float))
            )


def detect_emergence(
    images: Sequence,
    gm: GridModel,
    initial: Belief | None = None,
    h_c: float = 0.99,
    transition: sp.spmatrix | None = None,
    record_beliefs: bool = False,
) -> EmergenceDetection:
    """Filter an image sequence and report the first statistic crossing.

    The default prior puts all mass on NVA (nothing visible yet).  The
    full trace is always computed so crossings can be audited.
    """
    frames = np.asarray(images, dtype=float)
    if frames.ndim != 3:
        raise ValueError("images must be a (frames, height, width) stack")
    if frames.shape[1:] != (gm.height, gm.width):
        raise ValueError(
            f"frames are {frames.shape[1:]}, grid is {(gm.height, gm.width)}"
        )
    if initial is None:
        initial = Belief.point_mass(gm.nva_state, gm.n_states)
    if initial.n_states != gm.n_states:
        raise ValueError("initial belief size does not match the grid")
    A = build_grid_transition(gm) if transition is None else transition
    likelihood = ImageLikelihood(gm)
    rule = StoppingRule(threshold=h_c, normal_state=gm.nva_state)

    zeta = np.empty(frames.shape[0] + 1)
    nva = np.empty_like(zeta)
    log_norms = np.empty(frames.shape[0])
    beliefs = [initial] if record_beliefs else None

    belief = initial
    nva[0] = float(belief.p[-1])
    zeta[0] = 1.0 - nva[0]
    alarm_time = 0 if should_stop(rule, belief) else None

    for k in range(1, frames.shape[0] + 1):
        step = filter_step(belief, frames[k - 1], A, likelihood, k=k)
        belief = step.belief
        log_norms[k - 1] = step.log_normalizer
        nva[k] = float(belief.p[-1])
        zeta[k] = 1.0 - nva[k]
        if beliefs is not None:
            beliefs.append(belief)
        if alarm_time is None and should_stop(rule, belief):
            alarm_time = k

    return EmergenceDetection(
        alarm_time=alarm_time,
        zeta=zeta,
        nva_mass=nva,
        log_normalizers=log_norms,
        beliefs=tuple(beliefs) if beliefs is not None else None,
    )


@dataclass(frozen=True)
class ExponentialBackground:
    """Background intensity model: exponential with the given mean.

    Mimics morphologically flattened imagery where unoccupied pixels sit
    near zero, keeping the y + 1 weights close to 1 off target.
    """

    mean: float = 0.05

    def __post_init__(self):
        if not self.mean > 0.0:
            raise ValueError("background mean must be positive")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(self.mean, size)


@dataclass(frozen=True)
class OffsetTarget:
    """Occupied-pixel intensity: a constant offset added to background."""

    offset: float = 25.0

    def __post_init__(self):
        if not self.offset >= 0.0:
            raise ValueError("target offset must be nonnegative")


@dataclass(frozen=True)
class EmergenceSchedule:
    """Scripted emergence for the synthetic generator.

    The target is NVA before emergence_frame, appears at start_pixel
    (or a chain-drawn pixel when None), then follows the grid chain
    dynamics unless an explicit pixel path is given.  A scripted path
    starts at its first entry; after it is exhausted the target leaves
    the image.  emergence_frame None means never visible.
    """

    frames: int
    emergence_frame: int | None = None
    start_pixel: tuple[int, int] | None = None
    path: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if self.path is not None:
            object.__setattr__(
                self, "path", tuple((int(r), int(c)) for r, c in self.path)
            )
        if self.start_pixel is not None:
            object.__setattr__(
                self, "start_pixel", (int(self.start_pixel[0]), int(self.start_pixel[1]))
            )

    def validate_against(self, gm: GridModel):
        if self.emergence_frame is not None and not (
            0 <= self.emergence_frame <= self.frames
        ):
            raise ScheduleOutOfBoundsError(
                f"emergence frame {self.emergence_frame} outside 0..{self.frames}"
            )
        if self.start_pixel is not None and not gm.in_bounds(*self.start_pixel):
            raise ScheduleOutOfBoundsError(f"start pixel {self.start_pixel} off grid")
        if self.path is not None:
            if self.emergence_frame is None:
                raise ScheduleOutOfBoundsError("a pixel path needs an emergence frame")
            for pos in self.path:
                if not gm.in_bounds(*pos):
                    raise ScheduleOutOfBoundsError(f"path pixel {pos} off grid")


def generate_synthetic_sequence(
    gm: GridModel,
    target: OffsetTarget,
    background: ExponentialBackground,
    schedule: EmergenceSchedule,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Images (frames, H, W) plus the ground-truth state track.

    The track has frames + 1 entries of 1-based states (pixels 1..N in
    row-major order, NVA last) so index k is the state under frame k;
    index 0 is the pre-measurement state.  The draw order (track first,
    then one background field per frame) is fixed for reproducibility.
    """
    schedule.validate_against(gm)
    rng = np.random.default_rng(seed)
    n = gm.n_pixels
    nva = gm.n_states  # 1-based
    dense_columns = build_grid_transition(gm).toarray()

    track = np.full(schedule.frames + 1, nva, dtype=np.int64)
    f = schedule.emergence_frame
    if f is not None:
        if schedule.start_pixel is not None:
            start_idx = gm.pixel_index(*schedule.start_pixel)
        elif schedule.path is not None:
            start_idx = gm.pixel_index(*schedule.path[0])
        else:
            start_idx = int(rng.integers(n))
        track[f] = start_idx + 1
        for k in range(f + 1, schedule.frames + 1):
            if schedule.path is not None:
                offset = k - f
                track[k] = (
                    gm.pixel_index(*schedule.path[offset]) + 1
                    if offset < len(schedule.path)
                    else nva
                )
            else:
                column = dense_columns[:, track[k - 1] - 1]
                track[k] = int(rng.choice(gm.n_states, p=column)) + 1

    images = np.empty((schedule.frames, gm.height, gm.width))
    for k in range(1, schedule.frames + 1):
        frame = background.sample(rng, (gm.height, gm.width))
        state = track[k]
        if state != nva:
            r, c = divmod(state - 1, gm.width)
            frame[r, c] += target.offset
        images[k - 1] = frame
    return images, track
