"""Hyperfine-matrix inversion from measured echo-modulation frequencies.

Given effective Larmor frequency pairs measured at several bias fields,
recover the symmetric 3x3 coupling matrix of a single spin-1/2 nucleus
by brute-force least squares: an exhaustive coarse scan of all six
independent components, then an exhaustive cascade of progressively
finer hypercube scans around the argmin, down to the requested fine
step.  No gradient descent, so runs are reproducible point for point.

Frequencies alone cannot distinguish a matrix from its reflection
through the xz plane (jointly flipped A_xy and A_yz signs); the mirror
partner is therefore computed and reported alongside every result
instead of being silently collapsed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import islice

import numpy as np

from .hamiltonian import (
    GAMMA_C13,
    SpinSystem,
    TargetSpin,
    build_static,
)
from .spincore import spin_operators

TRANSITIONS = ("minus_one", "plus_one")

# upper-triangle components in lexicographic order; also the tie-break order
COMPONENT_ORDER = ("a_xx", "a_xy", "a_xz", "a_yy", "a_yz", "a_zz")
_COMPONENT_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

# sorted-eigenvalue manifold grouping (ascending: m_s=0, -1, +1) holds while
# the electron Zeeman shift stays below the zero-field splitting
MAX_FIELD_T = 0.102

_TIE_REL = 1e-9
_NEAR_TIE_REL = 0.01

_CHUNK = 65536


class MeasurementFormatError(ValueError):
    """A measurement CSV could not be parsed; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class EseemMeasurement:
    """One measured effective-Larmor pair at a field configuration.

    Attributes:
        b0: Bias field magnitude (T), below the manifold-grouping limit.
        theta: Polar misalignment (degrees).
        transition: "minus_one" or "plus_one"; names the electron
            manifold paired with m_s=0 in the echo.
        omega_slow, omega_fast: Measured frequencies (MHz), fast > slow.
        weight: Relative weight in the least-squares objective.
    """

    b0: float
    theta: float
    transition: str
    omega_slow: float
    omega_fast: float
    weight: float = 1.0

    def __post_init__(self):
        if not 0 < self.b0 < MAX_FIELD_T:
            raise ValueError(
                f"b0 must lie in (0, {MAX_FIELD_T}) T for unambiguous manifold "
                f"grouping, got {self.b0}"
            )
        if self.transition not in TRANSITIONS:
            raise ValueError(f"transition must be one of {TRANSITIONS}")
        if not 0 < self.omega_slow < self.omega_fast:
            raise ValueError("need omega_fast > omega_slow > 0")
        if self.weight <= 0:
            raise ValueError("weight must be positive")


@dataclass(frozen=True)
class EseemMeasurementSet:
    """A collection of measurements driving one inversion.

    Fewer than 3 entries or fewer than 2 distinct fields leaves the six
    components underdetermined; such sets are accepted but flagged so
    callers can surface the warning instead of failing outright.
    """

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("measurement set is empty")
        if not all(isinstance(e, EseemMeasurement) for e in entries):
            raise TypeError("entries must be EseemMeasurement instances")
        object.__setattr__(self, "entries", entries)

    @property
    def fields(self) -> tuple:
        return tuple(sorted({e.b0 for e in self.entries}))

    @property
    def identifiable(self) -> bool:
        return len(self.entries) >= 3 and len(self.fields) >= 2

    def identifiability_warnings(self) -> list:
        warnings = []
        if len(self.entries) < 3:
            warnings.append(
                f"only {len(self.entries)} measurement(s); at least 3 are "
                "needed to constrain all six components"
            )
        if len(self.fields) < 2:
            warnings.append(
                "all measurements share one bias field; components are "
                "underdetermined without a second field"
            )
        return warnings


@dataclass(frozen=True)
class HyperfineSearchSpec:
    """Grid geometry: symmetric coarse range and the refinement steps."""

    coarse_range: float = 4.0
    coarse_step: float = 0.5
    fine_step: float = 0.01
    fine_halfwidth: float = 0.5

    def __post_init__(self):
        if self.coarse_range <= 0 or self.coarse_step <= 0:
            raise ValueError("coarse range and step must be positive")
        if not 0 < self.fine_step < self.coarse_step:
            raise ValueError("need 0 < fine_step < coarse_step")
        if self.fine_halfwidth <= 0:
            raise ValueError("fine_halfwidth must be positive")
        n = self.coarse_range / self.coarse_step
        if abs(n - round(n)) > 1e-9:
            raise ValueError("coarse_range must be a multiple of coarse_step")

    def coarse_axis(self) -> np.ndarray:
        n = round(self.coarse_range / self.coarse_step)
        return np.linspace(-self.coarse_range, self.coarse_range, 2 * n + 1)


def components_to_matrix(comps) -> np.ndarray:
    """Pack the six upper-triangle components into a symmetric 3x3."""
    comps = np.asarray(comps, dtype=float)
    a = np.zeros((3, 3))
    for value, (i, j) in zip(comps, _COMPONENT_INDEX):
        a[i, j] = a[j, i] = value
    return a


def matrix_to_components(a) -> tuple:
    """Inverse of components_to_matrix; validates symmetry."""
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3) or np.max(np.abs(a - a.T)) > 1e-9:
        raise ValueError("hyperfine matrix must be symmetric 3x3")
    return tuple(float(a[i, j]) for i, j in _COMPONENT_INDEX)


def mirror_components(comps) -> tuple:
    """Reflection through the xz plane: A_xy and A_yz flip sign jointly."""
    comps = list(comps)
    comps[1] = -comps[1]
    comps[4] = -comps[4]
    return tuple(comps)


def _hyperfine_generators() -> np.ndarray:
    """Basis operators G_k with S.A.I = sum_k comps[k] G_k, shape (6,6,6)."""
    s_ops = spin_operators(1.0)
    i_ops = spin_operators(0.5)
    gens = []
    for i, j in _COMPONENT_INDEX:
        g = np.kron(s_ops[i], i_ops[j])
        if i != j:
            g = g + np.kron(s_ops[j], i_ops[i])
        gens.append(g)
    return np.array(gens)


_GENERATORS = _hyperfine_generators()


def _measurement_system(meas: EseemMeasurement) -> SpinSystem:
    return SpinSystem(
        nitrogen=None, target=TargetSpin.carbon13(), b0=meas.b0, theta=meas.theta
    )


def _measurement_base(meas: EseemMeasurement) -> np.ndarray:
    # electron internal + carbon Zeeman: everything except the hyperfine term
    return build_static(_measurement_system(meas))


def _predicted_pairs(comps: np.ndarray, bases, transitions) -> np.ndarray:
    """Predicted (slow, fast) pairs, shape (n_meas, N, 2).

    ``comps`` is (N, 6).  Manifold gaps come from sorted eigenvalues of
    the 6-dim electron+nucleus Hamiltonian: ascending order groups the
    levels as (m_s=0)x2, (m_s=-1)x2, (m_s=+1)x2 below MAX_FIELD_T.
    """
    h_hyper = np.einsum("nk,kij->nij", comps, _GENERATORS)
    out = np.empty((len(bases), len(comps), 2))
    for row, (base, transition) in enumerate(zip(bases, transitions)):
        levels = np.linalg.eigvalsh(base[None] + h_hyper)
        gap_zero = levels[:, 1] - levels[:, 0]
        if transition == "minus_one":
            gap_t = levels[:, 3] - levels[:, 2]
        else:
            gap_t = levels[:, 5] - levels[:, 4]
        out[row, :, 0] = np.minimum(gap_zero, gap_t)
        out[row, :, 1] = np.maximum(gap_zero, gap_t)
    return out


def _batch_objective(comps: np.ndarray, measurements: EseemMeasurementSet) -> np.ndarray:
    entries = measurements.entries
    bases = [_measurement_base(e) for e in entries]
    transitions = [e.transition for e in entries]
    total = np.zeros(len(comps))
    for start in range(0, len(comps), _CHUNK):
        block = comps[start : start + _CHUNK]
        pairs = _predicted_pairs(block, bases, transitions)
        acc = np.zeros(len(block))
        for row, e in enumerate(entries):
            acc += e.weight * (
                (pairs[row, :, 0] - e.omega_slow) ** 2
                + (pairs[row, :, 1] - e.omega_fast) ** 2
            )
        total[start : start + len(block)] = acc
    return total


def objective(a, measurements: EseemMeasurementSet) -> float:
    """Weighted squared error (MHz^2) of a candidate hyperfine matrix.

    Predictions are the slow/fast manifold gaps of the full static
    Hamiltonian at each measurement's field configuration.
    """
    comps = np.array([matrix_to_components(a)])
    return float(_batch_objective(comps, measurements)[0])


def synthesize_measurements(a, configurations, *, weight: float = 1.0) -> EseemMeasurementSet:
    """Measurement set predicted by a known matrix (plant-and-recover aid).

    ``configurations`` is an iterable of (b0_T, theta_deg, transition).
    """
    comps = np.array([matrix_to_components(a)])
    entries = []
    for b0, theta, transition in configurations:
        probe = EseemMeasurement(
            b0=b0, theta=theta, transition=transition,
            omega_slow=1.0, omega_fast=2.0, weight=weight,
        )
        pair = _predicted_pairs(comps, [_measurement_base(probe)], [transition])[0, 0]
        entries.append(
            EseemMeasurement(
                b0=b0, theta=theta, transition=transition,
                omega_slow=float(pair[0]), omega_fast=float(pair[1]),
                weight=weight,
            )
        )
    return EseemMeasurementSet(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZRowConstraint:
    """Spherical prune on the z row: |norm(A_zx, A_zy, A_zz) - norm| <= tolerance."""

    norm: float
    tolerance: float

    def mask(self, comps: np.ndarray) -> np.ndarray:
        z_norm = np.sqrt(
            comps[:, 2] ** 2 + comps[:, 4] ** 2 + comps[:, 5] ** 2
        )
        return np.abs(z_norm - self.norm) <= self.tolerance


def zero_field_seed(omega_zero_field: float, coarse_step: float = 0.5) -> ZRowConstraint:
    """Prune constraint from a zero-field measurement.

    At zero field the ms=+-1 frequency equals the z-row norm exactly, so
    coarse points whose z row misses it by more than two coarse steps
    cannot be the argmin.
    """
    if omega_zero_field < 0:
        raise ValueError("frequency must be non-negative")
    return ZRowConstraint(norm=float(omega_zero_field), tolerance=2 * coarse_step)


@dataclass(frozen=True)
class CandidateRanking:
    """Ranked (components, objective) pairs plus the evaluation count."""

    candidates: tuple
    evaluations: int


@dataclass(frozen=True)
class HyperfineFitResult:
    """Outcome of the coarse-to-fine search.

    Attributes:
        a: Recovered symmetric matrix (tuple rows).
        objective: Its squared error (MHz^2).
        runners_up: Coarse-stage near-ties, ((matrix, objective), ...).
        mirror: The xz-mirror partner and its (equal) objective.
        evaluations: Total objective evaluations across all stages.
        warnings: Identifiability notes, empty when well determined.
    """

    a: tuple
    objective: float
    runners_up: tuple
    mirror: tuple
    evaluations: int
    warnings: tuple = ()

    @property
    def a_matrix(self) -> np.ndarray:
        return np.array(self.a)


def _rank_key(comps: tuple, obj: float, scale: float):
    # declared tie-break: objective, then Frobenius norm, then lexicographic
    quantized = round(obj / scale) if scale > 0 else 0
    frobenius = float(np.sum(components_to_matrix(comps) ** 2))
    return (quantized, frobenius, comps)


def _rank(pairs, top_k: int):
    objs = [obj for _, obj in pairs]
    scale = _TIE_REL * max(1.0, min(objs) if objs else 1.0)
    ranked = sorted(pairs, key=lambda co: _rank_key(co[0], co[1], scale))
    return tuple(islice(ranked, top_k))


def coarse_shard(
    measurements: EseemMeasurementSet,
    spec: HyperfineSearchSpec,
    shard: tuple = (0, 1),
    *,
    zero_field: ZRowConstraint | None = None,
    top_k: int = 16,
) -> CandidateRanking:
    """Exhaustive coarse scan of one shard of the leading-component axis.

    ``shard = (index, count)`` takes every count-th leading value
    starting at index; shard results merge deterministically because
    the ranking key is global.
    """
    index, count = shard
    if not 0 <= index < count:
        raise ValueError("shard must satisfy 0 <= index < count")
    axis = spec.coarse_axis()
    lead = axis[index::count]
    rest = np.stack(
        [g.ravel() for g in np.meshgrid(*([axis] * 5), indexing="ij")], axis=-1
    )
    kept = []
    evaluations = 0
    for value in lead:
        comps = np.empty((len(rest), 6))
        comps[:, 0] = value
        comps[:, 1:] = rest
        if zero_field is not None:
            comps = comps[zero_field.mask(comps)]
        if not len(comps):
            continue
        objs = _batch_objective(comps, measurements)
        evaluations += len(comps)
        keep = np.argsort(objs)[: 4 * top_k]
        kept.extend((tuple(comps[i]), float(objs[i])) for i in keep)
    if not kept:
        raise RuntimeError("pruning removed every coarse candidate")
    return CandidateRanking(candidates=_rank(kept, top_k), evaluations=evaluations)


def merge_shards(shards, *, top_k: int = 16) -> CandidateRanking:
    """Deterministic merge of shard rankings (same key as the scan)."""
    pairs = [pair for shard in shards for pair in shard.candidates]
    evaluations = sum(s.evaluations for s in shards)
    return CandidateRanking(candidates=_rank(pairs, top_k), evaluations=evaluations)


def _refine_stages(spec: HyperfineSearchSpec):
    """Hypercube stages from the coarse step down to fine_step.

    The first stage covers fine_halfwidth; later stages shrink with
    their step.  Every stage is re-centered on its argmin and repeated,
    so the search can walk along nearly flat valleys (these data sets
    constrain some component combinations orders of magnitude more
    weakly than others) instead of being trapped in its start hypercube.
    """
    stages = []
    halfwidth = spec.fine_halfwidth
    step = spec.coarse_step / 5
    while step > spec.fine_step:
        stages.append((halfwidth, step))
        previous = step
        step = max(step / 5, spec.fine_step)
        halfwidth = max(3 * step, previous)
    stages.append((halfwidth, spec.fine_step))
    return stages


_WALK_CAP = 60


def _axis_sweeps(center, step, measurements, bound):
    """One full-box line scan per component at the given resolution.

    Some component combinations are constrained orders of magnitude more
    weakly than others, leaving valleys that are several MHz long but
    nearly flat.  A windowed hypercube crosses such a valley in dozens of
    re-centering hops; a line scan over the whole physical box crosses it
    in one jump for a few hundred evaluations.  An axis only moves when
    the scan finds a strictly better point, so the descent objective is
    monotone and the walk cannot cycle.
    """
    comps = list(center)
    evaluations = 0
    count = 2 * round(bound / step) + 1
    values = np.linspace(-bound, bound, count)
    for axis in range(6):
        trial = np.tile(np.asarray(comps), (count + 1, 1))
        trial[:count, axis] = values
        objs = _batch_objective(trial, measurements)
        evaluations += len(trial)
        best = int(np.argmin(objs[:count]))
        if objs[best] < objs[count]:
            comps[axis] = float(values[best])
    return tuple(comps), evaluations


def _descend(center, measurements, spec):
    """Iterated hypercube descent from one coarse basin representative."""
    evaluations = 0
    best_obj = None
    for halfwidth, step in _refine_stages(spec):
        window = halfwidth
        for _ in range(_WALK_CAP):
            start = center
            center, n_swept = _axis_sweeps(
                center, step, measurements, spec.coarse_range
            )
            (center, best_obj), n_pts = _scan_hypercube(
                center, window, step, measurements, spec.coarse_range
            )
            evaluations += n_swept + n_pts
            window = min(halfwidth, 3 * step)
            if center == start:
                break
    return center, best_obj, evaluations


def _scan_hypercube(center, halfwidth, step, measurements, bound):
    n = round(halfwidth / step)
    offsets = np.linspace(-n * step, n * step, 2 * n + 1)
    grids = np.meshgrid(*([offsets] * 6), indexing="ij")
    comps = np.stack([g.ravel() for g in grids], axis=-1) + np.asarray(center)
    # the coarse range is a physical bound, not just a seed box
    comps = comps[np.all(np.abs(comps) <= bound + 1e-9, axis=1)]
    objs = _batch_objective(comps, measurements)
    order = np.argsort(objs)
    best = order[0]
    # keep the declared tie-break among numerically tied points
    ties = [
        (tuple(comps[i]), float(objs[i]))
        for i in order
        if objs[i] - objs[best] <= _TIE_REL * max(1.0, objs[best])
    ]
    return _rank(ties, 1)[0], len(comps)


def _basin_representatives(candidates, coarse_step, limit):
    """Best candidate of each coarse basin, up to ``limit`` basins.

    Near-degenerate objectives can rank a wrong basin's coarse point
    above the true one, so refinement descends the best few distinct
    basins instead of trusting the single coarse argmin.  Candidates
    within one coarse step (all components) of an accepted basin, or of
    its xz-mirror, belong to that basin: the mirror twin's descent is
    reconstructed analytically, never repeated.
    """

    def same_basin(comps, rep):
        return all(
            abs(a - b) <= coarse_step * (1 + 1e-9) for a, b in zip(comps, rep)
        )

    reps = []
    for comps, obj in candidates:
        if any(
            same_basin(comps, rep) or same_basin(comps, mirror_components(rep))
            for rep, _ in reps
        ):
            continue
        reps.append((comps, obj))
        if len(reps) == limit:
            break
    return reps


def grid_search(
    measurements: EseemMeasurementSet,
    spec: HyperfineSearchSpec | None = None,
    *,
    zero_field: ZRowConstraint | None = None,
    top_k: int = 16,
    shards: int = 1,
    refine_basins: int = 4,
) -> HyperfineFitResult:
    """Coarse-to-fine least-squares inversion of a measurement set.

    The coarse stage scans the full symmetric component grid (optionally
    pruned by a zero-field constraint and split into shards); the fine
    cascade then scans progressively finer hypercubes around each of the
    best ``refine_basins`` distinct coarse basins, down to fine_step
    resolution, and keeps the best refined point.  Deterministic:
    equal-objective ties fall to smallest Frobenius norm, then
    lexicographic component order.
    """
    spec = spec or HyperfineSearchSpec()
    coarse = merge_shards(
        [
            coarse_shard(
                measurements, spec, (i, shards),
                zero_field=zero_field, top_k=top_k,
            )
            for i in range(shards)
        ],
        top_k=top_k,
    )
    evaluations = coarse.evaluations
    refined = []
    for start, _ in _basin_representatives(
        coarse.candidates, spec.coarse_step, refine_basins
    ):
        end, end_obj, n_evals = _descend(start, measurements, spec)
        evaluations += n_evals
        refined.append((end, end_obj))
        # the mirror twin descends to the mirrored point by symmetry
        refined.append((mirror_components(end), end_obj))
    center, best_obj = _rank(refined, 1)[0]
    warnings = list(measurements.identifiability_warnings())
    coarse_best, coarse_min_obj = coarse.candidates[0]
    mirror_of_best = mirror_components(coarse_best)
    for comps, obj in coarse.candidates[1:]:
        if comps == mirror_of_best:
            continue  # the known mirror degeneracy is reported, not warned
        adjacent = all(
            abs(a - b) <= spec.coarse_step * (1 + 1e-9)
            for a, b in zip(comps, coarse_best)
        )
        near_tie = obj <= coarse_min_obj + _NEAR_TIE_REL * max(coarse_min_obj, 1e-30)
        if not adjacent and near_tie:
            warnings.append(
                "a non-adjacent coarse candidate ties the minimum within 1%; "
                "the solution may not be unique"
            )
            break
    mirror = mirror_components(center)
    mirror_obj = objective(components_to_matrix(mirror), measurements)
    evaluations += 1

    def matrix_tuple(comps):
        # plain floats so repr-based serialization stays loadable
        return tuple(tuple(float(v) for v in row) for row in components_to_matrix(comps))

    runners = tuple(
        (matrix_tuple(c), float(o)) for c, o in coarse.candidates[1:]
    )
    return HyperfineFitResult(
        a=matrix_tuple(center),
        objective=float(best_obj),
        runners_up=runners,
        mirror=(matrix_tuple(mirror), float(mirror_obj)),
        evaluations=evaluations,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

MEASUREMENT_COLUMNS = (
    "b0_T", "theta_deg", "transition", "w_slow_MHz", "w_fast_MHz", "weight"
)


def parse_measurements_csv(text: str) -> EseemMeasurementSet:
    """Parse a measurement CSV; errors carry 1-based line numbers."""
    header = None
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if tuple(cells) != MEASUREMENT_COLUMNS:
                raise MeasurementFormatError(
                    f"header must be {','.join(MEASUREMENT_COLUMNS)}", lineno
                )
            header = cells
            continue
        if len(cells) != 6:
            raise MeasurementFormatError(
                f"expected 6 columns, got {len(cells)}", lineno
            )
        try:
            entries.append(
                EseemMeasurement(
                    b0=float(cells[0]), theta=float(cells[1]), transition=cells[2],
                    omega_slow=float(cells[3]), omega_fast=float(cells[4]),
                    weight=float(cells[5]),
                )
            )
        except ValueError as exc:
            raise MeasurementFormatError(str(exc), lineno) from None
    if header is None:
        raise MeasurementFormatError("no header line found")
    if not entries:
        raise MeasurementFormatError("no measurement rows found")
    return EseemMeasurementSet(entries=tuple(entries))


def read_measurements(path) -> EseemMeasurementSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_measurements_csv(fh.read())


def measurements_to_csv(measurements: EseemMeasurementSet) -> str:
    lines = [",".join(MEASUREMENT_COLUMNS)]
    for e in measurements.entries:
        lines.append(
            f"{e.b0!r},{e.theta!r},{e.transition},"
            f"{e.omega_slow!r},{e.omega_fast!r},{e.weight!r}"
        )
    return "\n".join(lines) + "\n"


def result_to_config(result: HyperfineFitResult) -> str:
    """Config-format matrix plus the ranked runner-up report."""

    def row_text(a):
        return " ; ".join(" ".join(repr(v) for v in row) for row in a)

    lines = [
        "[hyperfine]",
        f"a_MHz = {row_text(result.a)}",
        f"objective_MHz2 = {result.objective!r}",
        f"evaluations = {result.evaluations}",
        "",
        "[mirror]",
        f"a_MHz = {row_text(result.mirror[0])}",
        f"objective_MHz2 = {result.mirror[1]!r}",
    ]
    for warning in result.warnings:
        lines.append(f"# warning: {warning}")
    lines.append("")
    lines.append("[runners_up]")
    for rank, (a, obj) in enumerate(result.runners_up, start=1):
        lines.append(f"rank_{rank} = {obj!r} : {row_text(a)}")
    return "\n".join(lines) + "\n"
