"""Eigen-subspace utilities shared by the AoA, Doppler and range estimators."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenPair:
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # columns aligned with values

    def noise_subspace(self, order: int) -> np.ndarray:
        return self.vectors[:, order:]

    def signal_subspace(self, order: int) -> np.ndarray:
        return self.vectors[:, :order]


def herm_eig(r: np.ndarray) -> EigenPair:
    """Eigendecomposition of a Hermitian matrix, sorted by decreasing eigenvalue.

    The input is symmetrised first.  Each eigenvector is rotated so that its
    largest-magnitude entry is real and positive, which makes results reproducible.
    """
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(r)):
        raise ValueError("matrix has non-finite entries")
    r = 0.5 * (r + r.conj().T)
    w, u = np.linalg.eigh(r)
    order = np.argsort(-w, kind="stable")
    w, u = w[order], u[:, order]
    lead = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
    u = u * (np.abs(lead) / lead)[None, :]
    return EigenPair(w.real, u)


def estimate_model_order(v, eps_gap: float = 1.0, rel_floor: float = 1e-10) -> int:
    """Number of dominant eigenvalues from the eigen-gap rule.

    Successive gaps ``v[i] - v[i+1]`` are compared against ``(1 + eps_gap)`` times
    the mean gap over the lower half of the spectrum; the order is the largest
    (1-based) gap index that exceeds it.  ``rel_floor`` keeps the threshold away
    from zero on noiseless data, where round-off would otherwise look like signal.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if n < 4:
        raise ValueError("need at least four eigenvalues")
    gaps = v[:-1] - v[1:]
    start = (n - 1) // 2  # 1-based floor((N-1)/2) -> 0-based start-1
    vbar = gaps[start - 1:].sum() / (n - start)
    thresh = max((1 + eps_gap) * vbar, rel_floor * abs(v[0]))
    above = np.nonzero(gaps > thresh)[0]
    return int(above[-1] + 1) if above.size else 0


def estimate_noise_power(v, n_sources: int) -> float:
    """Mean of the eigenvalues past the first ``n_sources``."""
    v = np.asarray(v, dtype=float)
    if n_sources >= v.size:
        raise ValueError("no noise eigenvalues left")
    return max(float(v[n_sources:].mean()), 0.0)


@dataclass(frozen=True)
class SearchConfig:
    bounds: tuple[tuple[float, float], ...]
    grid_points: tuple[int, ...]
    max_iterations: int = 50
    tol: float = 1e-5
    periodic: tuple[bool, ...] | None = None

    def __post_init__(self):
        if len(self.bounds) != len(self.grid_points) or len(self.bounds) not in (1, 2):
            raise ValueError("one or two axes with matching bounds and grid sizes")
        if any(g < 2 for g in self.grid_points):
            raise ValueError("at least two grid points per axis")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if any(hi <= lo for lo, hi in self.bounds):
            raise ValueError("empty search interval")
        if self.periodic is None:
            object.__setattr__(self, "periodic", (False,) * len(self.bounds))

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    def axes(self) -> list[np.ndarray]:
        out = []
        for (lo, hi), n, per in zip(self.bounds, self.grid_points, self.periodic):
            out.append(np.linspace(lo, hi, n, endpoint=not per))
        return out

    def spacing(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] for ax in self.axes()])


@dataclass(frozen=True)
class SearchResult:
    point: np.ndarray
    value: float
    iterations: int
    converged: bool
    fallback: bool = False  # True when a singular Hessian forced a return to the seed


def _grid_maxima(s: np.ndarray, periodic) -> list[tuple[int, ...]]:
    """Indices of strict local maxima (2 or 4 neighbours, boundary points eligible)."""
    is_max = np.ones(s.shape, dtype=bool)
    for ax in range(s.ndim):
        for shift in (1, -1):
            nb = np.roll(s, shift, axis=ax)
            ok = s > nb
            if not periodic[ax]:
                edge = [slice(None)] * s.ndim
                edge[ax] = 0 if shift == 1 else -1
                ok[tuple(edge)] = True
            is_max &= ok
    idx = list(zip(*np.nonzero(is_max)))
    idx.sort(key=lambda i: -s[i])
    return idx


def _wrap(x: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    x = x.copy()
    for i, ((lo, hi), per) in enumerate(zip(cfg.bounds, cfg.periodic)):
        if per:
            x[i] = lo + np.mod(x[i] - lo, hi - lo)
        else:
            x[i] = np.clip(x[i], lo, hi)
    return x


def _axis_distance(a: np.ndarray, b: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    d = np.abs(a - b)
    for i, ((lo, hi), per) in enumerate(zip(cfg.bounds, cfg.periodic)):
        if per:
            d[i] = min(d[i], (hi - lo) - d[i])
    return d


def _make_positive_definite(h: np.ndarray) -> np.ndarray:
    # Away from a minimum the Hessian can be indefinite and the raw Newton step
    # points uphill; shifting the spectrum keeps the step a descent direction.
    if not np.all(np.isfinite(h)):
        return h
    w = np.linalg.eigvalsh(0.5 * (h + h.T))
    if w[0] > 0:
        return h
    shift = -w[0] + 1e-3 * max(abs(w[-1]), np.finfo(float).tiny)
    return h + shift * np.eye(h.shape[0])


def _escape_saddle(f, hessian, x: np.ndarray, fx: float, cfg: SearchConfig):
    """Probe half a grid step along the most negative curvature direction.

    A stationary point that is not a minimum (for instance on the mirror plane of
    a planar array, where one gradient component vanishes identically) stops the
    Newton iteration; returns a lower point, or ``None`` if there is none.
    """
    h = np.atleast_2d(hessian(x))
    if not np.all(np.isfinite(h)):
        return None
    w, v = np.linalg.eigh(0.5 * (h + h.T))
    if w[0] >= 0:
        return None
    d = v[:, 0] * 0.5 * cfg.spacing()
    best = None
    for sgn in (1.0, -1.0):
        cand = _wrap(x + sgn * d, cfg)
        fc = float(f(cand))
        if fc < fx and (best is None or fc < best[1]):
            best = (cand, fc)
    return best


def newton_refine(f, grad, hessian, seed: np.ndarray, cfg: SearchConfig, max_escapes: int = 3) -> SearchResult:
    """Newton descent from ``seed``; steps that raise ``f`` are halved, then abandoned.

    Steps are clipped to one grid spacing per axis.
    When the iteration stalls at a saddle, up to ``max_escapes`` restarts are made
    from a nearby lower point along the negative-curvature direction.
    """
    x = np.asarray(seed, dtype=float)
    fx = float(f(x))
    escapes = 0
    it = 0
    while it < cfg.max_iterations:
        it += 1
        g = np.atleast_1d(grad(x))
        h = np.atleast_2d(hessian(x))
        h = _make_positive_definite(h)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            return SearchResult(np.asarray(seed, float), float(f(seed)), it, False, fallback=True)
        if not np.all(np.isfinite(step)):
            return SearchResult(np.asarray(seed, float), float(f(seed)), it, False, fallback=True)
        # trust region of one grid cell, so a flat direction cannot fling the
        # iterate into another basin
        scale = np.max(np.abs(step) / cfg.spacing())
        if scale > 1:
            step = step / scale
        accepted = False
        for _ in range(30):
            cand = _wrap(x - step, cfg)
            fc = float(f(cand))
            if fc <= fx:
                accepted = True
                break
            step = step / 2
        moved = np.linalg.norm(_axis_distance(cand, x, cfg)) if accepted else 0.0
        if accepted:
            x, fx = cand, fc
        if not accepted or moved <= cfg.tol:
            esc = _escape_saddle(f, hessian, x, fx, cfg) if escapes < max_escapes else None
            if esc is None:
                return SearchResult(x, fx, it, True)
            escapes += 1
            x, fx = esc
    return SearchResult(x, fx, cfg.max_iterations, False)


def newton_minimum_search(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    cfg: SearchConfig,
    n_peaks: int,
    f_grid: Callable[[Sequence[np.ndarray]], np.ndarray] | None = None,
    extra_seeds: int = 2,
) -> list[SearchResult]:
    """Grid search on ``1/f`` for seeds, then Newton refinement of each seed.

    ``f_grid`` optionally evaluates ``f`` on the full grid in one shot; it receives
    the per-axis grid vectors and must return an array of shape ``grid_points``.
    Up to ``n_peaks + extra_seeds`` distinct minima are refined, taking grid maxima
    in decreasing order of ``1/f`` and merging seeds that converge to the same point;
    the ``n_peaks`` smallest refined values are returned, sorted by increasing ``f``.
    The extra seeds stop a shallow grid sample of a deep null (or a grating-lobe
    near-null with a larger grid value) from crowding out the true minimum.
    """
    if n_peaks < 1:
        return []
    axes = cfg.axes()
    if f_grid is not None:
        vals = np.asarray(f_grid(axes), dtype=float)
    else:
        vals = np.empty(cfg.grid_points)
        for idx in itertools.product(*(range(n) for n in cfg.grid_points)):
            vals[idx] = f(np.array([axes[a][i] for a, i in enumerate(idx)]))
    with np.errstate(divide="ignore"):
        spec = 1.0 / np.maximum(vals, np.finfo(float).tiny)
    seeds = _grid_maxima(spec, cfg.periodic)
    if not seeds:
        raise ValueError("spectrum has no local maxima on the grid")

    merge_radius = 0.5 * cfg.spacing()
    found: list[SearchResult] = []
    for idx in seeds:
        seed = np.array([axes[a][i] for a, i in enumerate(idx)])
        res = newton_refine(f, grad, hessian, seed, cfg)
        if res.fallback:
            log.debug("singular Hessian at seed %s", seed)
        if any(np.all(_axis_distance(res.point, r.point, cfg) <= merge_radius) for r in found):
            continue
        found.append(res)
        if len(found) >= n_peaks + extra_seeds:
            break
    found.sort(key=lambda r: r.value)
    return found[:n_peaks]


def music_derivatives(proj: np.ndarray, a: np.ndarray, da: np.ndarray, d2a: np.ndarray):
    """Value, gradient and Hessian of ``a^H P a`` given steering derivatives.

    ``da`` has shape (d, N) and ``d2a`` shape (d, d, N).
    """
    pa = proj @ a
    pda = (proj @ da.T).T
    val = float(np.real(np.vdot(a, pa)))
    g = 2 * np.real(da.conj() @ pa)
    d = da.shape[0]
    h = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            h[i, j] = 2 * np.real(np.vdot(d2a[i, j], pa) + np.vdot(da[i], pda[j]))
    return val, g, h


def music_grid_values(noise_basis: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """``||U_N^H a||^2`` for every column of ``steering``."""
    return np.sum(np.abs(noise_basis.conj().T @ steering) ** 2, axis=0)
