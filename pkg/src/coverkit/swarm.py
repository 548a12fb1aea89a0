"""Swarm reconfiguration toward a target density via sampled transport rays.

Each step matches a batch of agents to a stratified draw from the
discretized target with an exact assignment, then slides every matched
agent a fraction tau along its ray. The target draw uses a fixed
stratification offset, so repeated full-batch steps chase one common
target multiset and the matching objective can only shrink.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .density import DensityField, DiscreteMeasure, UniformDensity, discretize
from .errors import SiteOutsideWorkspace
from .geometry import ConvexPolygon, chord_interval, voronoi_cells
from .poi import _project_into
from .transport import wasserstein_sinkhorn

log = logging.getLogger(__name__)

SHARED_EDGE_MIN = 1e-9
STOP_FRACTION = 1e-4


def _all_inside(poly: ConvexPolygon, pts: np.ndarray, tol: float = 1e-9) -> bool:
    v = poly.vertices
    e = np.roll(v, -1, axis=0) - v
    dx = pts[:, None, 0] - v[None, :, 0]
    dy = pts[:, None, 1] - v[None, :, 1]
    cross = e[None, :, 0] * dy - e[None, :, 1] * dx
    return bool((cross >= -tol).all())


@dataclass
class SwarmState:
    """Agent positions plus the step counter and latest distance estimate."""

    positions: np.ndarray
    workspace: ConvexPolygon
    iteration: int = 0
    w2_estimate: float | None = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be an (n, 2) array")
        if not _all_inside(self.workspace, self.positions):
            raise SiteOutsideWorkspace("swarm positions must lie in the workspace")

    def __len__(self):
        return len(self.positions)


def systematic_resample(weights, n: int, offset: float = 0.5) -> np.ndarray:
    """Stratified index draw: n marks at (i + offset)/n against the weight CDF.

    With uniform weights and n equal to the atom count every atom is drawn
    exactly once. The offset is fixed by default so repeated draws agree.
    """
    w = np.asarray(weights, dtype=float)
    if n < 1:
        raise ValueError("need at least one draw")
    if not 0.0 <= offset < 1.0:
        raise ValueError("offset must lie in [0, 1)")
    total = w.sum()
    if total <= 0:
        raise ValueError("total weight must be positive")
    marks = (np.arange(n) + offset) / n
    idx = np.searchsorted(np.cumsum(w / total), marks, side="left")
    return np.minimum(idx, len(w) - 1)


def transport_step(state: SwarmState, target: DiscreteMeasure, tau: float,
                   batch: int | None = None, seed: int = 0) -> SwarmState:
    """Move a batch of agents a fraction tau along exact transport rays.

    The batch is drawn without replacement; everyone else stays put. The
    returned state's w2_estimate is the root mean squared matched distance
    measured before the move, so it prices the state the step started from.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    n = len(state)
    batch = n if batch is None else int(batch)
    if not 1 <= batch <= n:
        raise ValueError(f"batch must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    moving = np.sort(rng.permutation(n)[:batch])
    draws = target.points[systematic_resample(target.weights, batch)]
    src = state.positions[moving]
    cost = cdist(src, draws, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    objective = float(cost[rows, cols].sum())
    moved = state.positions.copy()
    moved[moving] = (1.0 - tau) * src + tau * draws[cols]
    moved = _project_into(state.workspace, moved)
    return SwarmState(moved, state.workspace, state.iteration + 1,
                      w2_estimate=math.sqrt(objective / batch))


@dataclass
class SwarmRun:
    """Trajectory endpoints, periodic snapshots, and per-step metric records."""

    initial: np.ndarray
    final: SwarmState
    target: DiscreteMeasure
    metrics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def run_reconfiguration(phi_target: DensityField, n_agents: int, iters: int,
                        tau: float = 0.5, batch: int | None = None, seed: int = 0,
                        resolution: int | None = None, metric_every: int | None = 1,
                        epsilon: float | None = None,
                        snapshot_every: int = 0) -> SwarmRun:
    """Drive a uniform-random swarm toward the target density.

    The target is discretized at roughly one atom per agent unless a
    resolution is given. Stops early once the swarm-wide mean displacement
    drops below 1e-4 of the workspace diameter. metric_every controls how
    often the entropic distance to the target is measured: every k steps
    for k > 0, endpoints only for 0, never for None.
    """
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    workspace = phi_target.workspace
    if resolution is None:
        resolution = max(2, int(math.isqrt(n_agents)))
    target = discretize(phi_target, resolution, resolution)
    master = np.random.default_rng(seed)
    x0 = UniformDensity(workspace).sample(n_agents, int(master.integers(2 ** 31)))
    state = SwarmState(x0, workspace)
    stop_displacement = STOP_FRACTION * workspace.diameter

    def sinkhorn_to_target(positions):
        mu = DiscreteMeasure(positions, np.full(len(positions), 1.0 / len(positions)))
        value, _ = wasserstein_sinkhorn(mu, target, p=2, epsilon=epsilon)
        return float(value)

    def want_metric(t, last):
        if metric_every is None:
            return False
        if t == 0 or last:
            return True
        return metric_every > 0 and t % metric_every == 0

    metrics = [{
        "iteration": 0,
        "mean_displacement": 0.0,
        "w2_batch": None,
        "w2_sinkhorn": sinkhorn_to_target(state.positions) if want_metric(0, False) else None,
    }]
    snapshots = [(0, state.positions.copy())]

    for t in range(1, iters + 1):
        before = state.positions
        state = transport_step(state, target, tau, batch, seed=int(master.integers(2 ** 31)))
        displacement = float(np.mean(np.linalg.norm(state.positions - before, axis=1)))
        stopping = displacement < stop_displacement or t == iters
        metrics.append({
            "iteration": t,
            "mean_displacement": displacement,
            "w2_batch": state.w2_estimate,
            "w2_sinkhorn": sinkhorn_to_target(state.positions) if want_metric(t, stopping) else None,
        })
        if snapshot_every > 0 and t % snapshot_every == 0:
            snapshots.append((t, state.positions.copy()))
        if stopping:
            if t < iters:
                log.info("swarm settled after %d steps (mean displacement %.3g)",
                         t, displacement)
            break

    if snapshots[-1][0] != state.iteration:
        snapshots.append((state.iteration, state.positions.copy()))
    return SwarmRun(initial=x0, final=state, target=target,
                    metrics=metrics, snapshots=snapshots)


def voronoi_graph(workspace: ConvexPolygon, positions) -> list[tuple[int, int]]:
    """Pairs of sites whose Voronoi cells share a boundary segment.

    Point contacts do not count: the shared piece of the bisector must be
    longer than SHARED_EDGE_MIN.
    """
    P = np.atleast_2d(np.asarray(positions, dtype=float))
    cells = voronoi_cells(workspace, P)
    pairs = []
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            gap = P[j] - P[i]
            mid = 0.5 * (P[i] + P[j])
            direction = np.array([-gap[1], gap[0]])
            direction = direction / np.linalg.norm(direction)
            span_i = chord_interval(cells[i], mid, direction)
            span_j = chord_interval(cells[j], mid, direction)
            if span_i is None or span_j is None:
                continue
            shared = min(span_i[1], span_j[1]) - max(span_i[0], span_j[0])
            if shared > SHARED_EDGE_MIN:
                pairs.append((i, j))
    return pairs
