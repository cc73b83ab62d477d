"""Fit simulator parameters by maximising mean mutual information against references.

Parameters are addressed by dotted names (``material.wall.A``,
``noise.ambient.amplitude``, ``trace.f_rx``, ...) and applied to a
:class:`~radarsim.config.SimConfig`. The simulation seed is held fixed so
the objective is a deterministic function of the parameters.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .imaging import PolarImage
from .metrics import DEFAULT as DEFAULT_METRICS, MetricConfig, mutual_information

log = logging.getLogger(__name__)

AB_MARGIN = 1e-3
_AB_NAME = re.compile(r"^material\.(.+)\.(A|B)$")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    lower: float
    upper: float
    initial: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise CalibrationError(f"{self.name}: lower bound must be < upper bound")
        if not self.lower <= self.initial <= self.upper:
            raise CalibrationError(f"{self.name}: initial value outside bounds")


@dataclass(frozen=True)
class ParamSpec:
    params: List[Param]

    def __post_init__(self):
        object.__setattr__(self, "params", list(self.params))
        if not self.params:
            raise CalibrationError("parameter spec is empty")
        names = self.names
        if len(set(names)) != len(names):
            raise CalibrationError("duplicate parameter names")

    @classmethod
    def from_tuples(cls, rows) -> "ParamSpec":
        return cls([Param(*r) for r in rows])

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params])

    @property
    def initial(self) -> np.ndarray:
        return np.array([p.initial for p in self.params])

    def _ab_pairs(self):
        groups: Dict[str, Dict[str, int]] = {}
        for i, name in enumerate(self.names):
            m = _AB_NAME.match(name)
            if m:
                groups.setdefault(m.group(1), {})[m.group(2)] = i
        return [(g["A"], g["B"]) for g in groups.values() if "A" in g and "B" in g]

    def project(self, x) -> np.ndarray:
        """Clip to the box, then push jointly-fitted (A, B) pairs below A+B = 1."""
        x = np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)
        for ia, ib in self._ab_pairs():
            excess = x[ia] + x[ib] - (1.0 - AB_MARGIN)
            if excess > 0:
                x[ia] -= excess / 2
                x[ib] -= excess / 2
                x = np.clip(x, self.lower, self.upper)
                excess = x[ia] + x[ib] - (1.0 - AB_MARGIN)
                if excess > 0:
                    # one side sits on a bound; move the other
                    if x[ia] > self.lower[ia]:
                        x[ia] = max(self.lower[ia], x[ia] - excess)
                    else:
                        x[ib] = max(self.lower[ib], x[ib] - excess)
        return x

    def check(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise CalibrationError(f"expected {self.dim} parameters, got shape {x.shape}")
        bad = (x < self.lower) | (x > self.upper) | ~np.isfinite(x)
        if np.any(bad):
            names = [n for n, b in zip(self.names, bad) if b]
            raise CalibrationError(f"parameters out of bounds: {', '.join(names)}")

    def as_dict(self, x) -> Dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, x)}


@dataclass
class CalibrationResult:
    best_params: Dict[str, float]
    best_value: float
    trace: List[float] = field(default_factory=list)
    n_evals: int = 0
    points: List[np.ndarray] = field(default_factory=list)

    @property
    def best_vector(self) -> np.ndarray:
        return np.array(list(self.best_params.values()))


class _Tracker:
    """Counts evaluations and keeps the running best (first one wins ties)."""

    def __init__(self, objective, spec: ParamSpec):
        self.objective = objective
        self.spec = spec
        self.best_x = None
        self.best_f = -np.inf
        self.trace: List[float] = []
        self.points: List[np.ndarray] = []

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        f = float(self.objective(x))
        if not np.isfinite(f):
            f = -np.inf
        self.points.append(x.copy())
        if self.best_x is None or f > self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        self.trace.append(self.best_f)
        return f

    @property
    def n_evals(self) -> int:
        return len(self.trace)

    def result(self) -> CalibrationResult:
        return CalibrationResult(self.spec.as_dict(self.best_x), self.best_f, list(self.trace),
                                 self.n_evals, self.points)


def nelder_mead(objective: Callable[[np.ndarray], float], spec: ParamSpec, max_evals: int = 200,
                tolerance: float = 1e-6, initial_step: float = 0.25) -> CalibrationResult:
    """Maximise ``objective`` with a box-projected Nelder-Mead simplex.

    Every proposal is projected onto the feasible set before it is
    evaluated. Stops when the spread of objective values over the simplex
    drops below ``tolerance`` or after ``max_evals`` evaluations.
    """
    n = spec.dim
    if max_evals < n + 1:
        raise CalibrationError("max_evals must be at least dimension + 1")
    track = _Tracker(objective, spec)
    lo, hi = spec.lower, spec.upper
    x0 = spec.project(spec.initial)

    simplex = [x0]
    for i in range(n):
        step = initial_step * (hi[i] - lo[i])
        x = x0.copy()
        x[i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
        simplex.append(spec.project(x))
    # minimise the negated objective
    values = [-track(x) for x in simplex]
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5

    while track.n_evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if values[-1] - values[0] < tolerance:
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]

        xr = spec.project(centroid + alpha * (centroid - worst))
        fr = -track(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            if track.n_evals >= max_evals:
                simplex[-1], values[-1] = xr, fr
                break
            xe = spec.project(centroid + gamma * (xr - centroid))
            fe = -track(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if track.n_evals >= max_evals:
            break
        if fr < values[-1]:
            xc = spec.project(centroid + rho * (xr - centroid))
            fc = -track(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = spec.project(centroid + rho * (worst - centroid))
            fc = -track(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        # shrink towards the best vertex
        for i in range(1, len(simplex)):
            if track.n_evals >= max_evals:
                break
            simplex[i] = spec.project(simplex[0] + sigma * (simplex[i] - simplex[0]))
            values[i] = -track(simplex[i])
    log.debug("nelder_mead: %d evaluations, best %.6g", track.n_evals, track.best_f)
    return track.result()


def grid_search(objective: Callable[[np.ndarray], float], spec: ParamSpec,
                points_per_dim: int = 11) -> CalibrationResult:
    """Evaluate every point of a regular lattice over the parameter box."""
    if points_per_dim < 2:
        raise CalibrationError("points_per_dim must be >= 2")
    axes = [np.linspace(p.lower, p.upper, points_per_dim) for p in spec.params]
    track = _Tracker(objective, spec)
    for pt in itertools.product(*axes):
        track(spec.project(np.array(pt)))
    return track.result()


def _as_reference(sim_config, ref) -> np.ndarray:
    if isinstance(ref, PolarImage):
        return sim_config.quantize(ref)
    return np.asarray(ref)


def evaluate_objective(params, sim_config, poses: Sequence, reference_frames: Sequence,
                       fixed_seed: int, spec: Optional[ParamSpec] = None,
                       metric: MetricConfig = DEFAULT_METRICS, threads: int = 1) -> float:
    """Mean mutual information between simulated and reference frames.

    ``params`` is a name->value mapping, or a vector matching ``spec``.
    Frame ``i`` is simulated with seed ``fixed_seed + i`` and quantised with
    the config's output settings; float references are quantised the same way.
    """
    from .config import apply_params  # local: config imports this module

    if len(poses) != len(reference_frames) or not poses:
        raise CalibrationError("poses and reference frames must be non-empty and equally long")
    if not isinstance(params, dict):
        if spec is None:
            raise CalibrationError("a ParamSpec is needed to interpret a parameter vector")
        spec.check(params)
        params = spec.as_dict(params)
    elif spec is not None:
        spec.check(np.array([params[n] for n in spec.names]))
    cfg = apply_params(sim_config, params)
    scores = []
    for i, (pose, ref) in enumerate(zip(poses, reference_frames)):
        sim = cfg.quantize(cfg.render(pose, fixed_seed + i, threads=threads))
        scores.append(mutual_information(sim, _as_reference(cfg, ref), metric))
    return float(np.mean(scores))


def make_objective(sim_config, poses, reference_frames, fixed_seed: int, spec: ParamSpec,
                   metric: MetricConfig = DEFAULT_METRICS, threads: int = 1):
    refs = [_as_reference(sim_config, r) for r in reference_frames]

    def objective(x):
        return evaluate_objective(x, sim_config, poses, refs, fixed_seed, spec, metric, threads)
    return objective
