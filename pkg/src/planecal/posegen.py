"""Contact-posture generation.

Random configurations are projected onto the contact manifold with a damped
Gauss-Newton on the 5-component constraint

    g(q) = (z, roll, pitch, x - x_t, y - y_t)

of the contact frame in the plane frame: partial-pose coincidence plus an
in-plane target location.  Projection runs under whatever parameter vector is
supplied, so pools can be built against a perturbed (true) model as well as
the nominal one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateOrientationError, InvalidArgumentError, PartialPoolError
from .kinematics import ChainFactors, _placement_matrix, whole_chain_com, wrap_angle
from .residual import (
    ParameterVector,
    _effective_kappa,
    _extract_partial_pose,
    _extract_rows,
    _plane_six,
    _rigid_inverse,
)

REJECT_DIVERGED = "diverged"
REJECT_LIMITS = "limits"
REJECT_MAX_ITER = "max-iter"

_MAX_HALVINGS = 10


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """In-plane contact locations and how many postures each should get.

    `quota` is an int applied to every target or one value per target; the
    optional `workspace` box (xmin, xmax, ymin, ymax) rejects misplaced
    targets at construction time.
    """

    points: np.ndarray
    quota: object = 1
    workspace: tuple = None

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise InvalidArgumentError("targets must be a non-empty (T, 2) array")
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("non-finite targets")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        if self.workspace is not None:
            xmin, xmax, ymin, ymax = (float(v) for v in self.workspace)
            if not (xmin < xmax and ymin < ymax):
                raise InvalidArgumentError("workspace box is empty")
            inside = (
                (p[:, 0] >= xmin)
                & (p[:, 0] <= xmax)
                & (p[:, 1] >= ymin)
                & (p[:, 1] <= ymax)
            )
            if not np.all(inside):
                raise InvalidArgumentError("targets outside the workspace box")
            object.__setattr__(self, "workspace", (xmin, xmax, ymin, ymax))

    def quotas(self):
        q = np.broadcast_to(
            np.asarray(self.quota, dtype=int), (self.points.shape[0],)
        ).copy()
        if np.any(q < 0):
            raise InvalidArgumentError("quotas must be non-negative")
        return q


@dataclass(frozen=True, eq=False)
class PoolSpec:
    size: int
    seed: int
    max_iterations: int = 50
    tolerance: float = 1e-8
    balance: bool = False
    margin: float = 0.01

    def __post_init__(self):
        if self.size < 1:
            raise InvalidArgumentError("pool size must be positive")
        if self.max_iterations < 1 or self.tolerance <= 0:
            raise InvalidArgumentError("bad projection settings")


@dataclass(frozen=True)
class Rejection:
    reason: str
    residual_norm: float = np.nan


@dataclass(frozen=True, eq=False)
class PosturePool:
    """Accepted contact postures with their targets and rejection accounting."""

    postures: np.ndarray
    target_ids: np.ndarray
    posture_ids: np.ndarray
    stats: dict
    seed: int
    chain_name: str

    @property
    def size(self):
        return self.postures.shape[0]


def _constraint(chain, plane, params, target, q):
    """g(q) and its joint-space Jacobian at the given parameter vector."""
    kappa = _effective_kappa(plane, params)
    factors = ChainFactors.build(chain, q, params.dx, contact3=kappa[:3])
    t_p_inv = _rigid_inverse(_placement_matrix(_plane_six(kappa[3:])))
    t_rel = t_p_inv @ factors.pose_matrix()
    triple = _extract_partial_pose(t_rel)
    d_rels = np.einsum("ab,nbc->nac", t_p_inv, factors.q_derivatives())
    rows3 = _extract_rows(t_rel, d_rels)
    g = np.array(
        [
            triple.z,
            triple.roll,
            triple.pitch,
            t_rel[0, 3] - target[0],
            t_rel[1, 3] - target[1],
        ]
    )
    jac = np.empty((5, chain.n_joints))
    jac[0:3] = rows3.T
    jac[3] = d_rels[:, 0, 3]
    jac[4] = d_rels[:, 1, 3]
    return g, jac


def project(chain, plane, target, q0, params=None, max_iterations=50, tolerance=1e-8):
    """Project a configuration onto the contact manifold.

    Damped Gauss-Newton with up to 10 step halvings per iteration; each
    accepted step decreases ||g||^2.  Returns the projected configuration or a
    Rejection(diverged | limits | max-iter).
    """
    if params is None:
        params = ParameterVector.zeros(chain)
    q = np.array(q0, dtype=float)
    target = np.asarray(target, dtype=float)

    def finish(q, norm):
        # revolute motion is 2pi-periodic: fold iterates that wandered a full
        # turn back into the limit-centred period before checking
        lo, hi = chain.lower_limits(), chain.upper_limits()
        mid = 0.5 * (lo + hi)
        q = q.copy()
        for i, (joint, _) in enumerate(chain.joints):
            if joint.kind == "revolute":
                q[i] = mid[i] + wrap_angle(q[i] - mid[i])
        if np.all(q >= lo) and np.all(q <= hi):
            return q
        return Rejection(REJECT_LIMITS, norm)

    try:
        g, jac = _constraint(chain, plane, params, target, q)
    except DegenerateOrientationError:
        return Rejection(REJECT_DIVERGED)
    if not np.all(np.isfinite(g)):
        return Rejection(REJECT_DIVERGED)
    for _ in range(max_iterations):
        norm = np.max(np.abs(g))
        if norm < tolerance:
            return finish(q, norm)
        delta = np.linalg.lstsq(jac, -g, rcond=None)[0]
        sq = g @ g
        step = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            q_new = q + step * delta
            try:
                g_new, jac_new = _constraint(chain, plane, params, target, q_new)
            except DegenerateOrientationError:
                step *= 0.5
                continue
            if np.all(np.isfinite(g_new)) and g_new @ g_new < sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return Rejection(REJECT_DIVERGED, norm)
        q, g, jac = q_new, g_new, jac_new
    norm = np.max(np.abs(g))
    if norm < tolerance:
        return finish(q, norm)
    return Rejection(REJECT_MAX_ITER, norm)


def sample_and_project(
    chain, plane, target, seed, params=None, max_iterations=50, tolerance=1e-8
):
    """Draw a configuration uniformly inside the limits and project it."""
    rng = np.random.default_rng(seed)
    q0 = rng.uniform(chain.lower_limits(), chain.upper_limits())
    return project(
        chain,
        plane,
        target,
        q0,
        params=params,
        max_iterations=max_iterations,
        tolerance=tolerance,
    )


def _polygon_inner_distance(point, polygon):
    """Distance from a point to a convex polygon boundary, negative outside."""
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise InvalidArgumentError("support polygon needs at least 3 (x, y) vertices")
    # signed area: enforce counter-clockwise winding
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area < 0:
        poly = poly[::-1]
    d = np.inf
    for i in range(poly.shape[0]):
        a, b = poly[i], poly[(i + 1) % poly.shape[0]]
        edge = b - a
        length = np.linalg.norm(edge)
        if length == 0:
            raise InvalidArgumentError("degenerate polygon edge")
        rel = point - a
        d = min(d, float(edge[0] * rel[1] - edge[1] * rel[0]) / length)
    return d


def balance_check(chain, q, support_polygon, margin=0.01, delta=None):
    """Quasi-static balance: CoM ground projection strictly deeper than `margin`.

    The comparison is strict (distance > margin).  Returns None when the chain
    carries no mass data, leaving the caller to flag the check as skipped.
    """
    if chain.link_masses is None:
        return None
    com = whole_chain_com(chain, q, delta)
    return bool(_polygon_inner_distance(com[:2], support_polygon) > margin)


def build_pool(
    chain,
    plane,
    tspec,
    pspec,
    params=None,
    feasibility=None,
    support_polygon=None,
):
    """Build a pool of `pspec.size` accepted contact postures.

    Targets are filled round-robin against their quotas (surplus demand keeps
    cycling once every quota is met).  Each attempt re-seeds from
    (pspec.seed, attempt), so results do not depend on scheduling.  Raises
    PartialPoolError carrying the partial pool when the attempt cap 100 * size
    is exhausted.
    """
    if pspec.balance and support_polygon is None and chain.link_masses is not None:
        raise InvalidArgumentError("balance check requested without a support polygon")
    quotas = tspec.quotas()
    n_targets = tspec.points.shape[0]
    counts = np.zeros(n_targets, dtype=int)
    stats = {
        "attempts": 0,
        "accepted": 0,
        REJECT_DIVERGED: 0,
        REJECT_LIMITS: 0,
        REJECT_MAX_ITER: 0,
        "balance": 0,
        "predicate": 0,
        "balance_skipped": False,
    }
    rows, targets = [], []
    cap = 100 * pspec.size
    cursor = 0
    for attempt in range(cap):
        if len(rows) >= pspec.size:
            break
        under = np.flatnonzero(counts < quotas)
        pick_from = under if under.size else np.arange(n_targets)
        t = int(pick_from[cursor % pick_from.size])
        cursor += 1
        stats["attempts"] += 1
        res = sample_and_project(
            chain,
            plane,
            tspec.points[t],
            seed=(pspec.seed, attempt),
            params=params,
            max_iterations=pspec.max_iterations,
            tolerance=pspec.tolerance,
        )
        if isinstance(res, Rejection):
            stats[res.reason] += 1
            continue
        if pspec.balance:
            ok = balance_check(chain, res, support_polygon, pspec.margin, delta=params)
            if ok is None:
                stats["balance_skipped"] = True
            elif not ok:
                stats["balance"] += 1
                continue
        if feasibility is not None and not feasibility(res):
            stats["predicate"] += 1
            continue
        rows.append(res)
        targets.append(t)
        counts[t] += 1
        stats["accepted"] += 1
    pool = PosturePool(
        postures=np.array(rows) if rows else np.empty((0, chain.n_joints)),
        target_ids=np.array(targets, dtype=int),
        posture_ids=np.arange(len(rows)),
        stats=stats,
        seed=pspec.seed,
        chain_name=chain.name,
    )
    if pool.size < pspec.size:
        raise PartialPoolError(
            f"accepted {pool.size}/{pspec.size} postures after {stats['attempts']} attempts",
            pool,
        )
    return pool


def _path_length(dist, route):
    return float(sum(dist[route[i], route[i + 1]] for i in range(len(route) - 1)))


def order_route(postures):
    """Order postures to shorten the joint-space path between measurements.

    Nearest-neighbour from the first posture, improved by 2-opt until no
    reversal helps; never returns an order longer than the input order.
    """
    p = np.asarray(postures, dtype=float)
    if p.ndim != 2:
        raise InvalidArgumentError("postures must be a 2-d array")
    n = p.shape[0]
    if n <= 2:
        return np.arange(n)
    dist = cdist(p, p)
    route = [0]
    left = set(range(1, n))
    while left:
        last = route[-1]
        nxt = min(left, key=lambda j: (dist[last, j], j))
        route.append(nxt)
        left.remove(nxt)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                gain = dist[route[i - 1], route[i]] - dist[route[i - 1], route[j]]
                if j + 1 < n:
                    gain += dist[route[j], route[j + 1]] - dist[route[i], route[j + 1]]
                if gain > 1e-15:
                    route[i : j + 1] = route[i : j + 1][::-1]
                    improved = True
    route = np.array(route)
    if _path_length(dist, route) > _path_length(dist, np.arange(n)):
        return np.arange(n)
    return route
