"""Per-branch discrete curve maps: xi <-> s <-> (w, w_prev, level).

The parametric coordinate xi is the stable key: jobs reference entries by
their exact stored xi value, never by approximate comparison. Curve-length
coordinates s may shift when an interval is stretched; xi never moves for
pre-existing entries.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .problems import SolutionPoint


class CurveStructureError(RuntimeError):
    """An insertion would violate the map's monotonicity invariants."""


class LookupError_(KeyError):
    """Requested xi is not a stored key."""


@dataclass
class CurveEntry:
    xi: float
    s: float
    w: SolutionPoint
    w_prev: SolutionPoint | None
    level: int


@dataclass(frozen=True)
class IntervalDescriptor:
    """One sub-interval work unit reference: [xi_lo, xi_hi) on a branch."""

    branch: int
    xi_lo: float
    xi_hi: float
    delta_L0: float
    level: int

    def __post_init__(self):
        if not self.xi_lo < self.xi_hi:
            raise ValueError("xi_lo must be < xi_hi")
        if self.delta_L0 <= 0:
            raise ValueError("delta_L0 must be positive")


class CurveMap:
    """Ordered map of CurveEntry keyed by exact xi, for one branch."""

    def __init__(self, branch: int = 0):
        self.branch = branch
        self._entries: dict[float, CurveEntry] = {}
        self._keys: list[float] = []

    # -- construction ------------------------------------------------------

    @classmethod
    def from_serial(cls, branch: int, solutions: list[SolutionPoint],
                    s_coords: list[float],
                    w_prev0: SolutionPoint | None = None) -> "CurveMap":
        """Initialize from the serial solve: xi_i = s_i / s_I, level 0.

        w_prev0 optionally sets a virtual predecessor for the branch start
        (used by branches spawned at a bifurcation, whose predictor must
        point along the new branch).
        """
        if len(solutions) != len(s_coords):
            raise CurveStructureError("solutions and s_coords length mismatch")
        if len(solutions) < 1:
            raise CurveStructureError("need at least one solution")
        if s_coords[0] != 0.0:
            raise CurveStructureError("s_coords must start at 0")
        if any(b <= a for a, b in zip(s_coords, s_coords[1:])):
            raise CurveStructureError("s_coords must be strictly increasing")
        m = cls(branch)
        s_total = s_coords[-1]
        for i, (w, s) in enumerate(zip(solutions, s_coords)):
            xi = s / s_total if s_total > 0 else 0.0
            w_prev = solutions[i - 1] if i > 0 else w_prev0
            m._add(CurveEntry(xi=xi, s=float(s), w=w, w_prev=w_prev, level=0))
        return m

    def _add(self, entry: CurveEntry) -> None:
        if entry.xi in self._entries:
            raise CurveStructureError(f"duplicate xi key {entry.xi!r}")
        idx = bisect.bisect_left(self._keys, entry.xi)
        # Strict double monotonicity against the neighbours.
        if idx > 0:
            left = self._entries[self._keys[idx - 1]]
            if not left.s < entry.s:
                raise CurveStructureError("s not increasing with xi")
        if idx < len(self._keys):
            right = self._entries[self._keys[idx]]
            if not entry.s < right.s:
                raise CurveStructureError("s not increasing with xi")
        self._keys.insert(idx, entry.xi)
        self._entries[entry.xi] = entry

    # -- access ------------------------------------------------------------

    def lookup(self, xi: float) -> CurveEntry:
        try:
            return self._entries[xi]
        except KeyError:
            raise LookupError_(f"xi={xi!r} is not a stored key") from None

    def xi_keys(self) -> list[float]:
        return list(self._keys)

    def __len__(self) -> int:
        return len(self._keys)

    def collect(self) -> list[tuple[int, float, float, int, SolutionPoint]]:
        """All entries as (branch, xi, s, level, w), sorted by xi."""
        return [
            (self.branch, k, self._entries[k].s, self._entries[k].level,
             self._entries[k].w)
            for k in self._keys
        ]

    def validate_monotone(self) -> None:
        """Raise unless both xi and s sequences are strictly increasing."""
        prev_s = None
        prev_xi = None
        for k in self._keys:
            e = self._entries[k]
            if prev_xi is not None and not (prev_xi < e.xi and prev_s < e.s):
                raise CurveStructureError(
                    f"monotonicity violated at xi={e.xi!r}"
                )
            prev_xi, prev_s = e.xi, e.s

    # -- insertion ---------------------------------------------------------

    def insert_interior(self, parent: IntervalDescriptor, result) -> None:
        """Store a converged interval's interior fine points.

        Points k = 1..M-1 get s from cumulative distances and xi by
        proportional rescaling within the parent; the fine end-point is not
        stored and no existing coordinate changes.
        """
        lo = self.lookup(parent.xi_lo)
        hi = self.lookup(parent.xi_hi)
        span_s = hi.s - lo.s
        span_xi = hi.xi - lo.xi
        s = lo.s
        xi = lo.xi
        w_prev = lo.w
        dists = list(result.distances)
        sols = list(result.solutions)
        for k in range(1, len(sols) - 1):
            s = s + dists[k - 1]
            xi = xi + span_xi * dists[k - 1] / span_s
            if not (s < hi.s and xi < hi.xi):
                raise CurveStructureError(
                    "interior insertion exceeds parent end"
                )
            self._add(CurveEntry(xi=xi, s=s, w=sols[k], w_prev=w_prev,
                                 level=parent.level))
            w_prev = sols[k]

    def insert_stretch(self, parent: IntervalDescriptor, result,
                       refine_lower: bool, refine_upper: bool
                       ) -> list[IntervalDescriptor]:
        """Store all fine points and stretch downstream curve coordinates.

        Every entry at or beyond the old parent end shifts in s by
        (sum d_k + delta_L) - width, which equals the closing distance when
        no step cut occurred. Fine xi values are assigned chord-length style
        with the post-stretch length as denominator, so the last fine point
        stays strictly inside the parent. Returns the child intervals to
        queue: the fine subintervals if refine_lower, the closing
        subinterval if refine_upper (suppressed when degenerate).
        """
        lo = self.lookup(parent.xi_lo)
        hi = self.lookup(parent.xi_hi)
        dists = list(result.distances)
        sols = list(result.solutions)
        dl_close = float(result.closing_distance)
        width = hi.s - lo.s
        span_xi = hi.xi - lo.xi
        total = sum(dists) + dl_close
        suppress_closing = dl_close <= 1e-12 * width
        shift = total - width

        # Shift everything at or beyond the old parent end first, so the
        # new fine points never collide with a stale downstream coordinate.
        if shift != 0.0:
            at_or_beyond = self._keys[bisect.bisect_left(self._keys, hi.xi):]
            for key in reversed(at_or_beyond) if shift < 0 else at_or_beyond:
                self._entries[key].s += shift

        children: list[IntervalDescriptor] = []
        child_level = parent.level + 1
        s = lo.s
        xi = lo.xi
        w_prev = lo.w
        last = len(sols) - 1
        for k in range(1, len(sols)):
            if k == last and suppress_closing:
                break  # fine end-point coincides with the retained end
            s_new = s + dists[k - 1]
            xi_new = xi + span_xi * dists[k - 1] / total
            self._add(CurveEntry(xi=xi_new, s=s_new, w=sols[k], w_prev=w_prev,
                                 level=parent.level))
            if refine_lower:
                children.append(IntervalDescriptor(
                    branch=self.branch, xi_lo=xi, xi_hi=xi_new,
                    delta_L0=dists[k - 1], level=child_level))
            s, xi, w_prev = s_new, xi_new, sols[k]
        if suppress_closing:
            if refine_lower and last >= 1:
                children.append(IntervalDescriptor(
                    branch=self.branch, xi_lo=xi, xi_hi=hi.xi,
                    delta_L0=dists[last - 1], level=child_level))
        elif refine_upper:
            children.append(IntervalDescriptor(
                branch=self.branch, xi_lo=xi, xi_hi=hi.xi,
                delta_L0=dl_close, level=child_level))
        return children
