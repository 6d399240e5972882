"""Design representation: controllable constants plus grouped observation times.

A design flattens into a coordinate vector (box coordinates first, then each
time group in order) so the optimizer can walk it one coordinate at a time.
Times within a group must stay at least ``min_sep`` apart; box coordinates
only respect their bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError

_SEP_TOL = 1e-9


@dataclass(frozen=True)
class BoxCoord:
    name: str
    lo: float
    hi: float


@dataclass(frozen=True)
class TimeGroupSpec:
    size: int
    lo: float
    hi: float
    min_sep: float = 0.0


@dataclass(frozen=True)
class DesignSpec:
    box: Tuple[BoxCoord, ...] = ()
    groups: Tuple[TimeGroupSpec, ...] = ()

    @property
    def n_box(self) -> int:
        return len(self.box)

    @property
    def n_coords(self) -> int:
        return self.n_box + sum(g.size for g in self.groups)

    def is_time_coord(self, i: int) -> bool:
        self._check_index(i)
        return i >= self.n_box

    def locate_time_coord(self, i: int) -> Tuple[int, int]:
        """(group index, position within group) for a time coordinate."""
        off = i - self.n_box
        for g_idx, g in enumerate(self.groups):
            if off < g.size:
                return g_idx, off
            off -= g.size
        raise IndexError(i)

    def bounds(self, i: int) -> Tuple[float, float]:
        if i < self.n_box:
            c = self.box[i]
            return c.lo, c.hi
        g_idx, _ = self.locate_time_coord(i)
        g = self.groups[g_idx]
        return g.lo, g.hi

    def coord_name(self, i: int) -> str:
        if i < self.n_box:
            return self.box[i].name
        g_idx, pos = self.locate_time_coord(i)
        return f"t{g_idx}[{pos}]"

    def _check_index(self, i: int):
        if not 0 <= i < self.n_coords:
            raise IndexError(i)


@dataclass
class Design:
    spec: DesignSpec
    box: np.ndarray  # (n_box,)
    times: List[np.ndarray]  # one array per group

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(self.spec.n_box)
        if len(self.times) != len(self.spec.groups):
            raise ConfigError("design has the wrong number of time groups")
        self.times = [
            np.asarray(t, dtype=float).reshape(g.size)
            for t, g in zip(self.times, self.spec.groups)
        ]

    @property
    def vector(self) -> np.ndarray:
        parts = [self.box] + self.times
        return np.concatenate(parts) if parts else np.empty(0)

    @classmethod
    def from_vector(cls, spec: DesignSpec, vec: Sequence[float]) -> "Design":
        vec = np.asarray(vec, dtype=float)
        if vec.size != spec.n_coords:
            raise ConfigError("design vector has the wrong length")
        box = vec[: spec.n_box]
        times = []
        off = spec.n_box
        for g in spec.groups:
            times.append(vec[off : off + g.size].copy())
            off += g.size
        return cls(spec=spec, box=box.copy(), times=times)

    def replace_coord(self, i: int, value: float) -> "Design":
        vec = self.vector
        vec[i] = value
        return Design.from_vector(self.spec, vec)

    def copy(self) -> "Design":
        return Design(self.spec, self.box.copy(), [t.copy() for t in self.times])


def violations(design: Design) -> List[str]:
    """Human-readable list of broken constraints; empty means feasible."""
    out = []
    spec = design.spec
    for c, v in zip(spec.box, design.box):
        if not (c.lo - _SEP_TOL <= v <= c.hi + _SEP_TOL):
            out.append(f"{c.name}={v:.6g} outside [{c.lo:.6g}, {c.hi:.6g}]")
    for g_idx, (g, t) in enumerate(zip(spec.groups, design.times)):
        for pos, v in enumerate(t):
            if not (g.lo - _SEP_TOL <= v <= g.hi + _SEP_TOL):
                out.append(
                    f"t{g_idx}[{pos}]={v:.6g} outside [{g.lo:.6g}, {g.hi:.6g}]"
                )
        if g.min_sep > 0:
            srt = np.sort(t)
            gaps = np.diff(srt)
            for k, gap in enumerate(gaps):
                if gap < g.min_sep - _SEP_TOL:
                    out.append(
                        f"times {srt[k]:.6g} and {srt[k + 1]:.6g} in group "
                        f"{g_idx} closer than {g.min_sep:.6g}"
                    )
    return out


def is_feasible(design: Design) -> bool:
    return not violations(design)


def feasible_interval(design: Design, i: int) -> List[Tuple[float, float]]:
    """Feasible values for coordinate ``i`` with the others held fixed.

    Returns a union of closed intervals.  For a time coordinate the open
    ball of radius ``min_sep`` around each sibling time is removed, so the
    endpoints themselves (exactly ``min_sep`` away) stay feasible.
    """
    spec = design.spec
    lo, hi = spec.bounds(i)
    segments = [(lo, hi)]
    if spec.is_time_coord(i):
        g_idx, pos = spec.locate_time_coord(i)
        g = spec.groups[g_idx]
        if g.min_sep > 0:
            for k, sib in enumerate(design.times[g_idx]):
                if k == pos:
                    continue
                segments = _subtract_open(segments, sib - g.min_sep, sib + g.min_sep)
    if not segments:
        raise ConfigError(
            f"coordinate {spec.coord_name(i)} has no feasible values left"
        )
    return segments


def _subtract_open(segments, cut_lo, cut_hi):
    out = []
    for a, b in segments:
        if cut_hi <= a or cut_lo >= b:
            out.append((a, b))
            continue
        if cut_lo >= a:
            out.append((a, min(cut_lo, b)))
        if cut_hi <= b:
            out.append((max(cut_hi, a), b))
    return [(a, b) for a, b in out if b >= a - _SEP_TOL]


def separated_times(
    rng: np.random.Generator, g: TimeGroupSpec, sort: bool = True
) -> np.ndarray:
    """Uniform draw of ``g.size`` times respecting the minimum separation."""
    slack = (g.hi - g.lo) - (g.size - 1) * g.min_sep
    if slack < 0:
        raise ConfigError("time group cannot hold that many separated points")
    base = np.sort(rng.uniform(0.0, slack, size=g.size))
    t = g.lo + base + g.min_sep * np.arange(g.size)
    return t if sort else rng.permutation(t)


def random_feasible(spec: DesignSpec, rng: np.random.Generator) -> Design:
    box = np.array([rng.uniform(c.lo, c.hi) for c in spec.box])
    times = [separated_times(rng, g) for g in spec.groups]
    return Design(spec=spec, box=box, times=times)


def spread_times(g: TimeGroupSpec) -> np.ndarray:
    """Equally spaced times across the group's full range."""
    if g.size == 1:
        return np.array([0.5 * (g.lo + g.hi)])
    return np.linspace(g.lo, g.hi, g.size)
