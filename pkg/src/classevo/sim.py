"""Growth models for an evolving classification system.

Three models share one state representation, a category label per patent:

* ``SIMON``: with probability alpha the new patent founds a new category,
  otherwise it joins a category chosen proportionally to size.
* ``UNIFORM``: as ``SIMON`` but the target category is chosen uniformly.
* ``SPLIT``: the new patent always joins a size-proportional category, which
  is then split in two with probability alpha.  Splitting moves every member
  of the old category into one of two fresh categories, i.e. reclassifies it.

Two engines produce a :class:`SimResult`: :func:`run` (vectorised, used for
production runs up to ~10^7 patents) and :func:`run_stepwise`, a literal
one-patent-at-a-time implementation built on :func:`step`.  They consume the
random stream differently, so they agree in distribution only.

Indexing: patents are numbered 1..horizon in arrival order.  Step ``t`` adds
patent ``t + 1`` to a system currently holding ``t`` patents and uses
``alpha_t``; patent 1 is the initial patent in the initial category.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_C0 = 1.07
DEFAULT_B = 0.378
DEFAULT_GRID_POINTS = 400


class Model(str, enum.Enum):
    SIMON = "simon"
    UNIFORM = "uniform"
    SPLIT = "split"


@dataclass(frozen=True)
class Constant:
    """Time-invariant alpha."""

    probability: float

    def __post_init__(self):
        p = self.probability
        if not (math.isfinite(p) and 0.0 <= p <= 1.0):
            raise ValueError(f"constant alpha must lie in [0, 1], got {p!r}")


@dataclass(frozen=True)
class HeapsSchedule:
    """alpha_t = c0 * b * t**(b - 1), the rate that makes C_t = c0 * t**b.

    ``first_step_one`` forces alpha_1 = 1 (the formula alone gives c0 * b).
    """

    c0: float = DEFAULT_C0
    b: float = DEFAULT_B
    first_step_one: bool = True

    def __post_init__(self):
        _check_schedule(self.c0, self.b)


AlphaSpec = Constant | HeapsSchedule


def _check_schedule(c0, b):
    if not (isinstance(c0, (int, float)) and math.isfinite(c0) and c0 > 0):
        raise ValueError(f"c0 must be a positive finite number, got {c0!r}")
    if not (isinstance(b, (int, float)) and math.isfinite(b) and 0 < b < 1):
        raise ValueError(f"b must lie in (0, 1), got {b!r}")


def alpha_schedule(t: int, c0: float = DEFAULT_C0, b: float = DEFAULT_B,
                   first_step_one: bool = True) -> float:
    """Probability of creating a category at step ``t`` under Heaps scaling."""
    _check_schedule(c0, b)
    if t < 1:
        raise ValueError(f"step must be >= 1, got {t}")
    if t == 1 and first_step_one:
        return 1.0
    return min(1.0, c0 * b * float(t) ** (b - 1.0))


def alpha_values(spec: AlphaSpec, steps: np.ndarray) -> np.ndarray:
    """Vectorised alpha for an array of step numbers (all >= 1)."""
    steps = np.asarray(steps, dtype=np.float64)
    if isinstance(spec, Constant):
        return np.full(steps.shape, float(spec.probability))
    out = np.minimum(1.0, spec.c0 * spec.b * steps ** (spec.b - 1.0))
    if spec.first_step_one:
        out[steps == 1] = 1.0
    return out


def map_step_to_year(step: int, patents_per_year: Sequence[tuple[int, int]]) -> int:
    """Year whose cumulative patent-count interval contains patent ``step``."""
    years, counts = _calendar_arrays(patents_per_year)
    cum = np.cumsum(counts)
    if step < 1 or cum.size == 0 or step > cum[-1]:
        total = int(cum[-1]) if cum.size else 0
        raise ValueError(f"step {step} outside calendar of {total} patents")
    return int(years[np.searchsorted(cum, step, side="left")])


def _calendar_arrays(patents_per_year):
    pairs = list(patents_per_year)
    years = np.array([int(y) for y, _ in pairs], dtype=np.int64)
    counts = np.array([int(c) for _, c in pairs], dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("calendar counts must be non-negative")
    if years.size > 1 and np.any(np.diff(years) <= 0):
        raise ValueError("calendar years must be strictly increasing")
    return years, counts


def years_for_steps(steps: np.ndarray, patents_per_year) -> np.ndarray:
    """Vectorised :func:`map_step_to_year`."""
    years, counts = _calendar_arrays(patents_per_year)
    cum = np.cumsum(counts)
    steps = np.asarray(steps)
    if steps.size and (steps.min() < 1 or cum.size == 0 or steps.max() > cum[-1]):
        raise ValueError("steps fall outside the calendar")
    return years[np.searchsorted(cum, steps, side="left")]


def default_grid(horizon: int, points: int = DEFAULT_GRID_POINTS,
                 patents_per_year=None) -> np.ndarray:
    """Log-spaced patent counts in [1, horizon], plus year boundaries."""
    grid = np.rint(np.logspace(0.0, math.log10(horizon), points)).astype(np.int64)
    parts = [grid, [1, horizon]]
    if patents_per_year is not None:
        cum = np.cumsum(_calendar_arrays(patents_per_year)[1])
        parts.append(cum[(cum >= 1) & (cum <= horizon)])
    return np.unique(np.concatenate(parts).astype(np.int64))


@dataclass(frozen=True)
class SimParams:
    model: Model = Model.SPLIT
    alpha: AlphaSpec = field(default_factory=HeapsSchedule)
    horizon: int = 1000
    seed: int = 0
    sample_grid: tuple[int, ...] | None = None
    # (year, count) pairs; when set, cohorts and ages are calendar years
    calendar: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.sample_grid is not None:
            g = np.asarray(self.sample_grid)
            if g.size == 0 or np.any(np.diff(g) <= 0):
                raise ValueError("sample_grid must be strictly increasing and non-empty")
            if g[0] < 1 or g[-1] > self.horizon:
                raise ValueError("sample_grid must lie within [1, horizon]")
        if self.calendar is not None:
            total = sum(c for _, c in self.calendar)
            if total < self.horizon:
                raise ValueError(f"calendar covers {total} patents, horizon is {self.horizon}")

    def grid(self) -> np.ndarray:
        if self.sample_grid is not None:
            return np.asarray(self.sample_grid, dtype=np.int64)
        return default_grid(self.horizon, patents_per_year=self.calendar)


@dataclass(frozen=True, eq=False)
class SimResult:
    """Output of one simulation run.

    Series are sampled at ``grid`` (patents so far).  Final-state arrays are
    aligned on ``category_ids`` (live categories, ascending id).  ``birth`` and
    ``current`` hold one category id per patent, patent ``i`` at index ``i-1``.
    """

    params: SimParams
    grid: np.ndarray
    historical: np.ndarray
    reconstructed: np.ndarray
    established: np.ndarray
    category_ids: np.ndarray
    sizes: np.ndarray
    established_step: np.ndarray
    first_patent_step: np.ndarray
    birth: np.ndarray
    current: np.ndarray
    growth_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_splits: int = 0
    n_skipped_splits: int = 0

    def historical_at(self, points) -> np.ndarray:
        """Live-category count after each of the given patent counts."""
        return 1 + np.searchsorted(self.growth_steps, np.asarray(points), side="right")

    @property
    def patents_so_far(self) -> np.ndarray:
        return self.grid

    @property
    def n_categories(self) -> int:
        return int(self.category_ids.size)

    @property
    def reclassified(self) -> np.ndarray:
        return self.birth != self.current

    @property
    def reclassified_share(self) -> float:
        return float(self.reclassified.mean())

    def cohort_shares(self, edges=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cohort, reclassified share, patents) per non-empty cohort.

        Cohorts are calendar years when the run has a calendar.  Otherwise a
        patent's cohort is its own index (the year stand-in used on export),
        unless ``edges`` is given: then patent ``i`` falls in the bin labelled
        by the smallest edge ``>= i`` (``horizon`` is always an edge).
        """
        h = self.params.horizon
        idx = np.arange(1, h + 1)
        if self.params.calendar is not None:
            labels = years_for_steps(idx, self.params.calendar)
        elif edges is not None:
            edges = np.union1d(np.asarray(edges, dtype=np.int64), [h])
            labels = edges[np.searchsorted(edges, idx, side="left")]
        else:
            return idx, self.reclassified.astype(np.float64), np.ones(h, dtype=np.int64)
        cohorts, inverse, n = np.unique(labels, return_inverse=True, return_counts=True)
        moved = np.bincount(inverse, weights=self.reclassified, minlength=cohorts.size)
        return cohorts, moved / n, n

    @property
    def reclassified_share_by_cohort(self) -> dict[int, float]:
        cohorts, share, _ = self.cohort_shares()
        return dict(zip(cohorts.tolist(), share.tolist()))

    def category_years(self) -> tuple[np.ndarray, np.ndarray]:
        """(year established, year of first patent) per live category.

        Without a calendar the step number stands in for the year.
        """
        if self.params.calendar is None:
            return self.established_step.copy(), self.first_patent_step.copy()
        cal = self.params.calendar
        return years_for_steps(self.established_step, cal), years_for_steps(self.first_patent_step, cal)

    def series_equal(self, other: "SimResult") -> bool:
        names = ("grid", "historical", "reconstructed", "established", "category_ids",
                 "sizes", "established_step", "first_patent_step", "birth", "current")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


# --------------------------------------------------------------------------
# Step-by-step engine


@dataclass
class CategoryState:
    id: int
    members: list[int]
    established_step: int

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def first_patent_step(self) -> int | None:
        return min(self.members) if self.members else None


@dataclass
class PatentState:
    index: int
    birth_category: int
    current_category: int


@dataclass(frozen=True)
class StepEvent:
    step: int
    patent: int
    category: int
    new_category: bool = False
    split_into: tuple[int, int] | None = None
    split_skipped: bool = False


class SimState:
    """Mutable state for :func:`step`; starts with one patent in one category."""

    def __init__(self, model: Model = Model.SPLIT, alpha: AlphaSpec | None = None):
        self.model = Model(model)
        self.alpha = HeapsSchedule() if alpha is None else alpha
        self.patents = [PatentState(1, 0, 0)]
        self.categories = {0: CategoryState(0, [1], 1)}
        self.next_id = 1
        self.n_splits = 0
        self.n_skipped_splits = 0
        # patent counts at which the live-category count went up by one
        self.increments: list[int] = []
        self.established_by_id = {0: 1}

    @property
    def n_patents(self) -> int:
        return len(self.patents)

    def _new_category(self, members, step_no):
        cid = self.next_id
        self.next_id += 1
        self.categories[cid] = CategoryState(cid, members, step_no)
        self.established_by_id[cid] = step_no
        return cid


def select_category(state: SimState, rng: np.random.Generator) -> int:
    """Size-proportional draw: the category of a uniformly random patent."""
    if state.n_patents == 0:
        raise ValueError("cannot select from an empty system")
    return state.patents[int(rng.integers(state.n_patents))].current_category


def _draw_split(k: int, rng: np.random.Generator) -> np.ndarray:
    # Both the cut point and the assignment are redrawn until both children
    # are non-empty; with s == k a fixed cut could never succeed.
    while True:
        s = int(rng.integers(1, k + 1))
        to_first = rng.random(k) < s / k
        n1 = int(to_first.sum())
        if 0 < n1 < k:
            return to_first


def split_category(state: SimState, j: int, rng: np.random.Generator) -> tuple[int, int]:
    cat = state.categories.get(j)
    if cat is None:
        raise KeyError(f"category {j} is not live")
    if cat.size < 2:
        raise ValueError(f"category {j} has {cat.size} patent(s); a split needs at least 2")
    to_first = _draw_split(cat.size, rng)
    first = [p for p, f in zip(cat.members, to_first) if f]
    second = [p for p, f in zip(cat.members, to_first) if not f]
    now = state.n_patents
    c1 = state._new_category(first, now)
    c2 = state._new_category(second, now)
    for p in first:
        state.patents[p - 1].current_category = c1
    for p in second:
        state.patents[p - 1].current_category = c2
    del state.categories[j]
    state.n_splits += 1
    state.increments.append(now)
    return c1, c2


def step(state: SimState, rng: np.random.Generator) -> StepEvent:
    t = state.n_patents
    patent = t + 1
    a = float(alpha_values(state.alpha, np.array([t]))[0])

    if state.model is Model.SPLIT:
        j = select_category(state, rng)
        state.categories[j].members.append(patent)
        state.patents.append(PatentState(patent, j, j))
        if rng.random() < a:
            if state.categories[j].size < 2:
                state.n_skipped_splits += 1
                logger.debug("step %d: split of category %d skipped (size < 2)", t, j)
                return StepEvent(t, patent, j, split_skipped=True)
            children = split_category(state, j, rng)
            return StepEvent(t, patent, j, split_into=children)
        return StepEvent(t, patent, j)

    if rng.random() < a:
        j = state._new_category([patent], patent)
        state.patents.append(PatentState(patent, j, j))
        state.increments.append(patent)
        return StepEvent(t, patent, j, new_category=True)
    if state.model is Model.SIMON:
        j = select_category(state, rng)
    else:
        live = sorted(state.categories)
        j = live[int(rng.integers(len(live)))]
    state.categories[j].members.append(patent)
    state.patents.append(PatentState(patent, j, j))
    return StepEvent(t, patent, j)


def run_stepwise(params: SimParams) -> SimResult:
    """Reference engine: :func:`step` applied ``horizon - 1`` times."""
    rng = np.random.default_rng(params.seed)
    state = SimState(params.model, params.alpha)
    for _ in range(params.horizon - 1):
        step(state, rng)
    birth = np.array([p.birth_category for p in state.patents], dtype=np.int64)
    current = np.array([p.current_category for p in state.patents], dtype=np.int64)
    established = np.array([state.established_by_id[i] for i in range(state.next_id)],
                           dtype=np.int64)
    return _assemble(params, birth, current, established, np.array(state.increments),
                     state.n_splits, state.n_skipped_splits)


# --------------------------------------------------------------------------
# Vectorised engine


def _resolve_chain(labels, parent, idx, done):
    """Give each patent in ``idx`` the label at the end of its parent chain.

    ``parent[p - 1]`` is the uniformly drawn earlier patent (0-based) for
    0-based patent ``p``.  ``done(ptr)`` marks pointers whose label is final.
    """
    ptr = parent[idx - 1]
    pending = np.flatnonzero(~done(ptr))
    while pending.size:
        ptr[pending] = parent[ptr[pending] - 1]
        pending = pending[~done(ptr[pending])]
    labels[idx] = labels[ptr]


def _run_split(params, rng):
    h = params.horizon
    current = np.zeros(h, dtype=np.int64)
    if h == 1:
        return current, current.copy(), np.array([1]), np.array([], dtype=np.int64), 0
    steps = np.arange(1, h, dtype=np.int64)
    split_steps = np.flatnonzero(rng.random(h - 1) < alpha_values(params.alpha, steps)) + 1
    parent = rng.integers(0, steps)
    birth = np.empty(h, dtype=np.int64)
    birth[0] = 0
    established = [1]
    lo = 1
    stops = split_steps.tolist()
    if not stops or stops[-1] != h - 1:
        stops.append(None)
    for s in stops:
        hi = h if s is None else s + 1
        if hi > lo:
            _resolve_chain(current, parent, np.arange(lo, hi), lambda p, lo=lo: p < lo)
            birth[lo:hi] = current[lo:hi]
        lo = hi
        if s is None:
            break
        # 0-based patent s was just added; its category always has >= 2 members
        j = current[s]
        members = np.flatnonzero(current[:s + 1] == j)
        to_first = _draw_split(members.size, rng)
        c1 = len(established)
        current[members[to_first]] = c1
        current[members[~to_first]] = c1 + 1
        established += [s + 1, s + 1]
    return current, birth, np.array(established), split_steps + 1, split_steps.size


def _run_growth(params, rng):
    h = params.horizon
    if h == 1:
        z = np.zeros(1, dtype=np.int64)
        return z, z.copy(), np.array([1]), np.array([], dtype=np.int64), 0
    steps = np.arange(1, h, dtype=np.int64)
    founder = np.empty(h, dtype=bool)
    founder[0] = True
    founder[1:] = rng.random(h - 1) < alpha_values(params.alpha, steps)
    labels = np.cumsum(founder) - 1
    if params.model is Model.SIMON:
        parent = rng.integers(0, steps)
        _resolve_chain(labels, parent, np.flatnonzero(~founder), lambda p: founder[p])
    else:
        # categories alive before step t are ids 0..labels[t-1]
        target = rng.integers(0, labels[:-1] + 1)
        joiners = ~founder[1:]
        labels[1:][joiners] = target[joiners]
    established = np.flatnonzero(founder) + 1
    return labels, labels.copy(), established, established[1:], 0


def run(params: SimParams) -> SimResult:
    """Simulate ``params.horizon`` patents; deterministic given ``params.seed``."""
    rng = np.random.default_rng(params.seed)
    if params.model is Model.SPLIT:
        current, birth, established, increments, n_splits = _run_split(params, rng)
    else:
        current, birth, established, increments, n_splits = _run_growth(params, rng)
    return _assemble(params, birth, current, established, increments, n_splits, 0)


def _assemble(params, birth, current, established_by_id, increments, n_splits, n_skipped):
    grid = params.grid()
    ids, first_idx, sizes = np.unique(current, return_index=True, return_counts=True)
    established_step = established_by_id[ids]
    first_patent_step = first_idx + 1

    increments = np.sort(np.asarray(increments, dtype=np.int64))
    historical = 1 + np.searchsorted(increments, grid, side="right")
    reconstructed = np.searchsorted(np.sort(first_patent_step), grid, side="right")
    established = np.searchsorted(np.sort(established_step), grid, side="right")

    return SimResult(
        params=params, grid=grid,
        historical=historical.astype(np.int64),
        reconstructed=reconstructed.astype(np.int64),
        established=established.astype(np.int64),
        category_ids=ids, sizes=sizes.astype(np.int64),
        established_step=established_step.astype(np.int64),
        first_patent_step=first_patent_step.astype(np.int64),
        birth=birth, current=current, growth_steps=increments,
        n_splits=int(n_splits), n_skipped_splits=int(n_skipped),
    )
