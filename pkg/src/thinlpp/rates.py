"""GUE rate functions.

``j_gue`` is the right-tail rate in closed form.  The left-tail rate is
``I(1 - eps) - I(inf)`` where ``I(t)`` is the minimal logarithmic energy

    I_mu = 2 int x^2 dmu - int int log|x - y| dmu(x) dmu(y)

over probability measures on ``(-inf, t]``.  Measures are discretised as step
densities on a grid of cells; the log kernel is integrated exactly over each
pair of cells, which also regularises the diagonal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

log = logging.getLogger(__name__)

SEMICIRCLE_ENERGY = math.log(2.0) + 0.75
BOUNDARY_FRACTION = 0.02
BOUNDARY_MASS = 1e-4


class DomainError(ValueError):
    pass


def j_gue(epsilon: float) -> float:
    """4 * int_0^eps sqrt(x (x + 2)) dx, via the antiderivative in u = x + 1."""
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    root = math.sqrt(epsilon * (epsilon + 2.0))
    return 2.0 * (epsilon + 1.0) * root - 2.0 * math.log1p(epsilon + root)


def j_gue_quadrature(epsilon: float) -> float:
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    val, _ = integrate.quad(lambda x: math.sqrt(x * (x + 2.0)), 0.0, epsilon, epsabs=0.0, epsrel=1e-12, limit=200)
    return 4.0 * val


# -- discrete measures and their energy ----------------------------------------

@dataclass
class DiscreteMeasure:
    """Masses on a strictly increasing grid, each spread uniformly over its cell.

    ``edges`` has one more entry than ``nodes``; by default cells are bounded
    by midpoints between nodes, with the end cells mirrored.
    """

    nodes: np.ndarray
    masses: np.ndarray
    edges: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.shape != self.masses.shape or self.nodes.size == 0:
            raise ValueError("nodes and masses must be matching non-empty vectors")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing (no duplicates)")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be non-negative and sum to 1")
        if self.edges is None:
            if self.nodes.size == 1:
                raise ValueError("a single atom needs explicit cell edges")
            mid = 0.5 * (self.nodes[1:] + self.nodes[:-1])
            first = self.nodes[0] - (mid[0] - self.nodes[0])
            last = self.nodes[-1] + (self.nodes[-1] - mid[-1])
            self.edges = np.concatenate(([first], mid, [last]))
        else:
            self.edges = np.asarray(self.edges, dtype=float)
            if self.edges.shape != (self.nodes.size + 1,) or np.any(np.diff(self.edges) < 0):
                raise ValueError("edges must be non-decreasing with one more entry than nodes")

    def mass_outside(self, lo: float, hi: float) -> float:
        return float(self.masses[(self.nodes < lo) | (self.nodes > hi)].sum())


def _phi(u: np.ndarray) -> np.ndarray:
    """Second antiderivative of log|u|, vanishing at 0."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    out = np.zeros_like(u)
    nz = au > 0
    out[nz] = 0.5 * u[nz] ** 2 * np.log(au[nz]) - 0.75 * u[nz] ** 2
    return out


def cell_log_kernel(edges: np.ndarray) -> np.ndarray:
    """K_ij = mean of log|x - y| over cell i x cell j; ``-inf`` on zero-width cells."""
    a, b = edges[:-1], edges[1:]
    width = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        total = (
            _phi(b[:, None] - a[None, :])
            - _phi(b[:, None] - b[None, :])
            - _phi(a[:, None] - a[None, :])
            + _phi(a[:, None] - b[None, :])
        )
        k = total / np.outer(width, width)
    zero = width == 0
    k[zero, :] = -np.inf
    k[:, zero] = -np.inf
    return k


def _uniform_kernel(m: int, h: float) -> np.ndarray:
    """Cell kernel for ``m`` equal cells of width ``h`` (Toeplitz)."""
    phi1 = _phi(np.arange(-1.0, m + 1.0))  # phi1[j] = phi(j - 1)
    col = phi1[2:] - 2.0 * phi1[1:-1] + phi1[:-2]
    return linalg.toeplitz(col + math.log(h))


def potential_energy(mu: DiscreteMeasure) -> float:
    """Energy of the step density: 2 E[x^2] - sum_ij w_i w_j K_ij.

    ``K`` is the cell-averaged log kernel, so the result is the exact energy of
    the measure that spreads ``w_i`` uniformly over cell ``i``.  A supported
    cell of zero width is a point mass and gives ``+inf``.
    """
    w = mu.masses
    support = w > 0
    width = np.diff(mu.edges)
    if np.any(width[support] == 0):
        return math.inf
    centre = 0.5 * (mu.edges[1:] + mu.edges[:-1])
    second = centre**2 + width**2 / 12.0
    k = cell_log_kernel(mu.edges)
    ws, ks = w[support], k[np.ix_(support, support)]
    return float(2.0 * ws @ second[support] - ws @ ks @ ws)


# -- constrained minimisation ----------------------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


@dataclass
class EnergyReport:
    t: float
    energy: float
    measure: DiscreteMeasure
    iterations: int
    kkt_residual: float
    converged: bool
    left_cut: float
    objective_trace: list[float] = field(default_factory=list, repr=False)


def _initial_masses(nodes: np.ndarray) -> np.ndarray:
    dens = np.sqrt(np.clip(1.0 - nodes**2, 0.0, None))
    if dens.sum() <= 0:
        dens = np.ones_like(nodes)
    return dens / dens.sum()


def _face_solve(kernel, q, support):
    """Stationary point of the quadratic restricted to the face ``support``.

    Solves ``K_SS w = q_S - lam 1, sum w = 1`` by the bordered system.
    """
    idx = np.flatnonzero(support)
    n = idx.size
    a = np.empty((n + 1, n + 1))
    a[:n, :n] = kernel[np.ix_(idx, idx)]
    a[:n, n] = 1.0
    a[n, :n] = 1.0
    a[n, n] = 0.0
    rhs = np.concatenate((q[idx], [1.0]))
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return None
    w = np.zeros(q.size)
    w[idx] = sol[:n]
    return w


def _solve(nodes, q2, kernel, tol, max_iter, w0, keep_trace, polish_every=50):
    def objective(w):
        kw = kernel @ w
        return float(q2 @ w - w @ kw), kw

    w = w0
    f, kw = objective(w)
    step = 1e-3
    trace = [f] if keep_trace else []
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = q2 - 2.0 * kw
        residual = float(np.abs(w - project_simplex(w - grad)).max())
        if residual < tol:
            break
        while True:
            w_new = project_simplex(w - step * grad)
            diff = w_new - w
            f_new, kw_new = objective(w_new)
            if f_new <= f + grad @ diff + (diff @ diff) / (2.0 * step) or step < 1e-14:
                break
            step *= 0.5
        w, f, kw = w_new, f_new, kw_new
        step *= 1.5
        if it % polish_every == 0:
            # Newton step on the current face, shrinking it while it leaves the simplex
            support = w > 0
            for _ in range(20):
                cand = _face_solve(kernel, 0.5 * q2, support)
                if cand is None or not np.any(cand < 0):
                    break
                support &= cand > 0
            if cand is not None and not np.any(cand < 0):
                f_cand, kw_cand = objective(cand)
                if f_cand <= f:
                    w, f, kw = cand, f_cand, kw_cand
        if keep_trace:
            trace.append(f)
    return w, f, it, residual, trace


def minimize_energy(
    t: float,
    left_cut: float = -3.0,
    node_count: int = 800,
    right_cut: float = 3.0,
    tol: float = 1e-7,
    max_iter: int = 100_000,
    keep_trace: bool = False,
) -> EnergyReport:
    """Minimise the discretised energy over measures on ``[left_cut, min(t, right_cut)]``.

    The equilibrium measure is compactly supported, so the window is finite;
    if more than ``1e-4`` of the mass sits on the outer 2% of cells of a cut
    boundary, that cut is pushed out and the solve repeated.
    """
    if node_count < 50:
        raise DomainError("node_count must be >= 50")
    if not left_cut < min(-1.0, t):
        raise DomainError("left_cut must lie below min(-1, t)")
    for _ in range(8):
        right = min(t, right_cut)
        h = (right - left_cut) / node_count
        nodes = left_cut + h * (np.arange(node_count) + 0.5)
        kernel = _uniform_kernel(node_count, h)
        # second moment of the uniform law on each cell
        q2 = 2.0 * (nodes**2 + h**2 / 12.0)
        w, f, it, residual, trace = _solve(nodes, q2, kernel, tol, max_iter, _initial_masses(nodes), keep_trace)
        edge_cells = max(1, math.ceil(BOUNDARY_FRACTION * node_count))
        extend_left = w[:edge_cells].sum() >= BOUNDARY_MASS
        extend_right = right < t and w[-edge_cells:].sum() >= BOUNDARY_MASS
        if not (extend_left or extend_right):
            break
        if extend_left:
            left_cut -= 2.0
        if extend_right:
            right_cut += 2.0
        log.info("extending energy window to [%g, %g]", left_cut, min(t, right_cut))
    edges = left_cut + h * np.arange(node_count + 1)
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    measure = DiscreteMeasure(nodes, w, edges)
    converged = residual < tol
    if not converged:
        log.warning("energy solve at t=%g stopped after %d iterations (residual %.2e)", t, it, residual)
    return EnergyReport(t, f, measure, it, residual, converged, left_cut, trace)


def energy_curve(t: float, **grid) -> float:
    return minimize_energy(t, **grid).energy


def i_gue(epsilon: float, **grid) -> float:
    """I(1 - eps) - (log 2 + 3/4), clamped at zero."""
    if not 0.0 < epsilon <= 1.0:
        raise DomainError("epsilon must lie in (0, 1]")
    return max(0.0, minimize_energy(1.0 - epsilon, **grid).energy - SEMICIRCLE_ENERGY)


def continuity_check(t: float, etas, **grid) -> list[dict[str, float]]:
    """Rows of ``I(t - eta) - I(t)`` and ``I(t) - I(t + eta)`` for each eta."""
    etas = list(etas)
    if any(e <= 0 for e in etas) or any(b >= a for a, b in zip(etas, etas[1:])):
        raise DomainError("etas must be positive and decreasing")
    base = energy_curve(t, **grid)
    rows = []
    for eta in etas:
        rows.append(
            {
                "eta": eta,
                "left_gap": energy_curve(t - eta, **grid) - base,
                "right_gap": base - energy_curve(t + eta, **grid),
            }
        )
    return rows
