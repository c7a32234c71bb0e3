"""P1 finite element building blocks.

Tridiagonal assembly on uniform meshes (optionally batched over many
independent cells), a cyclic tridiagonal solver, the shared IMEX time
stepper (Adams-Bashforth 2 for transport, Crank-Nicolson for diffusion),
and the high-resolution reference solver in shifted coordinates.

Band layout: ``bands[..., i, 0]`` is the subdiagonal entry ``(i, i-1)``,
``bands[..., i, 1]`` the diagonal and ``bands[..., i, 2]`` the
superdiagonal entry ``(i, i+1)``; the unused first/last slots are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .analysis import FieldSnapshot
from .coeffs import CoefficientSet
from .transform import mean_flow_shift, periodic_interp


class SolverError(RuntimeError):
    """A linear solve or time step failed."""


# 3-point Gauss-Legendre rule mapped to the unit interval; exact for
# quintics, which covers all polynomial parts of the P1 integrands
_G3_X, _G3_W = np.polynomial.legendre.leggauss(3)
GAUSS3_POINTS = 0.5 * (_G3_X + 1.0)
GAUSS3_WEIGHTS = 0.5 * _G3_W


def quad_fractions(n_elements: int) -> np.ndarray:
    """Gauss point positions of every element as fractions of [0, 1]."""
    lefts = np.arange(n_elements) / n_elements
    return lefts[:, None] + GAUSS3_POINTS[None, :] / n_elements


def _gauss_sum(weighted, values):
    # fixed evaluation order keeps results independent of batch shape
    return (weighted[0] * values[..., 0] + weighted[1] * values[..., 1]
            + weighted[2] * values[..., 2])


def hat_mass_bands(n_nodes: int, h: float) -> np.ndarray:
    """Mass matrix of the P1 hat basis on a uniform mesh with Dirichlet ends."""
    bands = np.zeros((n_nodes, 3))
    bands[:-1, 1] += 2.0 * h / 6.0
    bands[1:, 1] += 2.0 * h / 6.0
    bands[:-1, 2] = h / 6.0
    bands[1:, 0] = h / 6.0
    return bands


def _element_blocks_advection(ctilde_q: np.ndarray):
    # entries of  int psi_a * c~ * d(psi_b)  over one element; the b-derivative
    # contributes +-1/h which cancels the element length, so no h factor
    i_left = _gauss_sum(GAUSS3_WEIGHTS * (1.0 - GAUSS3_POINTS), ctilde_q)
    i_right = _gauss_sum(GAUSS3_WEIGHTS * GAUSS3_POINTS, ctilde_q)
    return (-i_left, i_left, -i_right, i_right)  # (LL, LR, RL, RR)


def _element_blocks_diffusion(coef_q: np.ndarray, h: float):
    # entries of  -int coef * d(psi_a) * d(psi_b); coef already contains the
    # squared inverse map slope
    s = _gauss_sum(GAUSS3_WEIGHTS, coef_q) / h
    return (-s, s, s, -s)


def _scatter_dirichlet(blocks, n_nodes: int) -> np.ndarray:
    ll, lr, rl, rr = blocks
    lead = ll.shape[:-1]
    bands = np.zeros(lead + (n_nodes, 3))
    bands[..., :-1, 1] += ll
    bands[..., 1:, 1] += rr
    bands[..., :-1, 2] = lr
    bands[..., 1:, 0] = rl
    return bands


def advection_bands(ctilde_q: np.ndarray, h: float) -> np.ndarray:
    """Transport matrix from effective-velocity values at the Gauss points.

    ``ctilde_q`` has shape (..., n_elements, 3); the result has shape
    (..., n_elements + 1, 3).
    """
    return _scatter_dirichlet(_element_blocks_advection(ctilde_q), ctilde_q.shape[-2] + 1)


def diffusion_bands(coef_q: np.ndarray, h: float) -> np.ndarray:
    """Diffusion matrix (negative semidefinite) from coefficient Gauss values."""
    return _scatter_dirichlet(_element_blocks_diffusion(coef_q, h), coef_q.shape[-2] + 1)


def load_values(g_q: np.ndarray, h: float) -> np.ndarray:
    """Load vector entries from forcing values at the Gauss points."""
    l_left = h * _gauss_sum(GAUSS3_WEIGHTS * (1.0 - GAUSS3_POINTS), g_q)
    l_right = h * _gauss_sum(GAUSS3_WEIGHTS * GAUSS3_POINTS, g_q)
    lead = l_left.shape[:-1]
    out = np.zeros(lead + (g_q.shape[-2] + 1,))
    out[..., :-1] += l_left
    out[..., 1:] += l_right
    return out


def tri_matvec(bands: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Tridiagonal matrix-vector product, broadcasting over leading axes."""
    out = bands[..., 1] * v
    out[..., 1:] += bands[..., 1:, 0] * v[..., :-1]
    out[..., :-1] += bands[..., :-1, 2] * v[..., 1:]
    return out


def tri_solve(bands: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Thomas factorization, batched over leading axes.

    No pivoting: intended for the diagonally dominant implicit matrices
    arising from mass plus Crank-Nicolson diffusion.
    """
    sub, diag, sup = bands[..., 0], bands[..., 1], bands[..., 2]
    n = diag.shape[-1]
    cp = np.empty_like(diag)
    dp = np.empty(np.broadcast_shapes(diag.shape, rhs.shape))
    cp[..., 0] = sup[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        denom = diag[..., i] - sub[..., i] * cp[..., i - 1]
        cp[..., i] = sup[..., i] / denom
        dp[..., i] = (rhs[..., i] - sub[..., i] * dp[..., i - 1]) / denom
    x = np.empty_like(dp)
    x[..., -1] = dp[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x


def apply_dirichlet(bands: np.ndarray, rhs: np.ndarray, left: float, right: float):
    """Replace boundary rows by identity rows carrying the boundary values."""
    bands[..., 0, :] = (0.0, 1.0, 0.0)
    bands[..., -1, :] = (0.0, 1.0, 0.0)
    rhs[..., 0] = left
    rhs[..., -1] = right


@dataclass
class PeriodicTriDiag:
    """Tridiagonal matrix with periodic corner entries.

    ``corner_tr`` is the ``(0, n-1)`` entry and ``corner_bl`` the
    ``(n-1, 0)`` entry.  Supports the linear combinations needed by the
    IMEX stepper and an O(n) solve via a rank-1 (Sherman-Morrison)
    correction of the plain banded factorization.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    corner_tr: float
    corner_bl: float

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.sub[1:] * v[:-1]
        out[:-1] += self.sup[:-1] * v[1:]
        out[0] += self.corner_tr * v[-1]
        out[-1] += self.corner_bl * v[0]
        return out

    def __add__(self, other: "PeriodicTriDiag") -> "PeriodicTriDiag":
        return PeriodicTriDiag(self.sub + other.sub, self.diag + other.diag,
                               self.sup + other.sup, self.corner_tr + other.corner_tr,
                               self.corner_bl + other.corner_bl)

    def __mul__(self, scalar: float) -> "PeriodicTriDiag":
        return PeriodicTriDiag(self.sub * scalar, self.diag * scalar, self.sup * scalar,
                               self.corner_tr * scalar, self.corner_bl * scalar)

    __rmul__ = __mul__

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        idx = np.arange(self.n)
        a[idx, idx] = self.diag
        a[idx[1:], idx[:-1]] += self.sub[1:]
        a[idx[:-1], idx[1:]] += self.sup[:-1]
        a[0, -1] += self.corner_tr
        a[-1, 0] += self.corner_bl
        return a

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A x = rhs`` exactly via banded LU plus rank-1 correction."""
        n = self.n
        if n < 4:
            # corners overlap the band for n <= 2 and a dense solve is
            # cheaper than special-casing tiny systems
            return np.linalg.solve(self.to_dense(), rhs)
        gamma = -self.diag[0] if self.diag[0] != 0 else 1.0
        ab = np.zeros((3, n))
        ab[0, 1:] = self.sup[:-1]
        ab[1, :] = self.diag
        ab[2, :-1] = self.sub[1:]
        ab[1, 0] -= gamma
        ab[1, -1] -= self.corner_tr * self.corner_bl / gamma
        u = np.zeros((n, 2))
        u[:, 0] = rhs
        u[0, 1] = gamma
        u[-1, 1] = self.corner_bl
        try:
            sol = solve_banded((1, 1), ab, u)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise SolverError(f"cyclic tridiagonal solve failed: {exc}") from exc
        y, z = sol[:, 0], sol[:, 1]
        vy = y[0] + self.corner_tr / gamma * y[-1]
        vz = z[0] + self.corner_tr / gamma * z[-1]
        return y - z * (vy / (1.0 + vz))


def periodic_mass(n_elements: int, h: float) -> PeriodicTriDiag:
    """Mass matrix of the periodic P1 basis on a uniform mesh."""
    n = n_elements
    return PeriodicTriDiag(np.full(n, h / 6.0), np.full(n, 4.0 * h / 6.0),
                           np.full(n, h / 6.0), h / 6.0, h / 6.0)


def _scatter_periodic(blocks) -> PeriodicTriDiag:
    ll, lr, rl, rr = blocks
    n = ll.shape[0]
    diag = ll + np.roll(rr, 1)
    sup = np.concatenate([lr[:-1], [0.0]])
    sub = np.concatenate([[0.0], rl[:-1]])
    return PeriodicTriDiag(sub, diag, sup, corner_tr=rl[-1], corner_bl=lr[-1])


def periodic_advection(ctilde_q: np.ndarray, h: float) -> PeriodicTriDiag:
    return _scatter_periodic(_element_blocks_advection(ctilde_q))


def periodic_diffusion(coef_q: np.ndarray, h: float) -> PeriodicTriDiag:
    return _scatter_periodic(_element_blocks_diffusion(coef_q, h))


def periodic_load(g_q: np.ndarray, h: float) -> np.ndarray:
    l_left = h * _gauss_sum(GAUSS3_WEIGHTS * (1.0 - GAUSS3_POINTS), g_q)
    l_right = h * _gauss_sum(GAUSS3_WEIGHTS * GAUSS3_POINTS, g_q)
    return l_left + np.roll(l_right, 1)


@dataclass
class LocalSystem:
    """System matrices of one fine-scale cell problem at one stored time.

    Band arrays may carry leading batch axes so that many independent cell
    problems advance together.
    """

    mass: np.ndarray
    advection: np.ndarray
    diffusion: np.ndarray
    load: Optional[np.ndarray] = None
    cell: Optional[int] = None
    time_index: Optional[int] = None


@dataclass
class PeriodicSystem:
    """Global system matrices at one stored time (periodic boundary)."""

    mass: PeriodicTriDiag
    advection: PeriodicTriDiag
    diffusion: PeriodicTriDiag
    motion: Optional[PeriodicTriDiag] = None
    load: Optional[np.ndarray] = None


@dataclass
class StepperState:
    """Two-level history carried by the IMEX scheme.

    ``explicit_prev`` stores the previous transport term for the
    Adams-Bashforth combination; ``None`` marks the bootstrap step, which
    uses an explicit-trapezoid (Heun) predictor-corrector instead.
    """

    u: np.ndarray
    dt: float
    step: int = 0
    u_prev: Optional[np.ndarray] = None
    explicit_prev: Optional[np.ndarray] = None


def _explicit_term(system, u):
    if isinstance(system, PeriodicSystem):
        out = system.advection.matvec(u)
        if system.motion is not None:
            out = out + system.motion.matvec(u)
        return out
    return tri_matvec(system.advection, u)


def _load_average(sys_now, sys_next, dt):
    if sys_now.load is None and sys_next.load is None:
        return None
    now = 0.0 if sys_now.load is None else sys_now.load
    nxt = 0.0 if sys_next.load is None else sys_next.load
    return 0.5 * dt * (now + nxt)


def imex_step(state: StepperState, sys_now, sys_next, bc="periodic",
              mass_midpoint: bool = False) -> StepperState:
    """Advance one step: AB2 transport, Crank-Nicolson diffusion.

    Solves ``(M - dt/2 D^{n+1}) u^{n+1} = M u^n - dt*AB2[(A+N) u]
    + dt/2 D^n u^n + dt/2 (G^n + G^{n+1})`` where the mass matrix of
    ``sys_next`` multiplies both sides (with ``mass_midpoint`` the average
    of the two mass matrices is used instead, which symmetrizes the
    difference quotient when the basis evolves quickly).  ``bc`` is
    ``"periodic"`` or ``("dirichlet", left_value, right_value)`` with
    values constant in time.  The first step bootstraps the transport
    history with a Heun predictor-corrector.
    """
    dt = state.dt
    u = state.u
    periodic = bc == "periodic"
    explicit_now = _explicit_term(sys_now, u)

    if periodic:
        mass = (0.5 * (sys_now.mass + sys_next.mass)) if mass_midpoint else sys_next.mass
        base = mass.matvec(u) + 0.5 * dt * sys_now.diffusion.matvec(u)
        implicit = mass + (-0.5 * dt) * sys_next.diffusion

        def solve(rhs):
            return implicit.solve(rhs)
    else:
        mass = (0.5 * (sys_now.mass + sys_next.mass)) if mass_midpoint else sys_next.mass
        base = tri_matvec(mass, u) + 0.5 * dt * tri_matvec(sys_now.diffusion, u)
        implicit = mass - 0.5 * dt * sys_next.diffusion
        _, left, right = bc

        def solve(rhs):
            bands = np.broadcast_to(implicit, rhs.shape + (3,)).copy()
            rhs = rhs.copy()
            apply_dirichlet(bands, rhs, left, right)
            return tri_solve(bands, rhs)

    loads = _load_average(sys_now, sys_next, dt)
    if loads is not None:
        base = base + loads

    if state.explicit_prev is None:
        predictor = solve(base - dt * explicit_now)
        explicit_pred = _explicit_term(sys_next, predictor)
        u_new = solve(base - 0.5 * dt * (explicit_now + explicit_pred))
    else:
        u_new = solve(base - dt * (1.5 * explicit_now - 0.5 * state.explicit_prev))

    if not np.all(np.isfinite(u_new)):
        raise SolverError(f"non-finite solution at step {state.step + 1}")
    return StepperState(u=u_new, dt=dt, step=state.step + 1, u_prev=u,
                        explicit_prev=explicit_now)


@dataclass
class P1Result:
    """Trajectory of a standard P1 periodic solve in shifted coordinates."""

    times: np.ndarray
    snapshots: list
    dof_history: Optional[np.ndarray] = None


def solve_shifted_p1(cs: CoefficientSet, n_elements: int, dt: float, n_steps: int,
                     shift: np.ndarray, shift_rate: np.ndarray,
                     record_indices, eval_points: int,
                     keep_dofs: bool = False) -> P1Result:
    """Standard P1 periodic FEM for the transformed equation.

    The coordinate frame moves rigidly by ``shift(t)`` (zero arrays give the
    plain Eulerian method); the advecting field is the velocity composed
    with the shift minus ``shift_rate``.  Snapshots are pulled back to a
    uniform Eulerian grid of ``eval_points`` points.
    """
    times = dt * np.arange(n_steps + 1)
    h = 1.0 / n_elements
    nodes = np.linspace(0.0, 1.0, n_elements + 1)
    xi_q = quad_fractions(n_elements)
    mass = periodic_mass(n_elements, h)
    x_eval = np.arange(eval_points) / eval_points
    record = set(int(i) for i in record_indices)

    def assemble(idx):
        t = times[idx]
        x = xi_q + shift[idx]
        ct = cs.c(x, t) - shift_rate[idx]
        adv = periodic_advection(ct, h)
        diff = periodic_diffusion(cs.mu(x, t), h)
        load = periodic_load(cs.g(x), h) if cs.has_forcing else None
        return PeriodicSystem(mass, adv, diff, load=load)

    # L2 projection of the initial condition onto the periodic hat basis
    f_q = cs.f(xi_q + shift[0])
    u = mass.solve(periodic_load(f_q, h))

    snapshots = []
    history = np.empty((n_steps + 1, n_elements)) if keep_dofs else None

    def take(idx, vec):
        if history is not None:
            history[idx] = vec
        if idx in record:
            pos = nodes[:-1] + shift[idx]
            snapshots.append(FieldSnapshot(times[idx], x_eval,
                                           periodic_interp(pos, vec, x_eval)))

    take(0, u)
    state = StepperState(u=u, dt=dt)
    sys_now = assemble(0)
    for idx in range(1, n_steps + 1):
        sys_next = assemble(idx)
        state = imex_step(state, sys_now, sys_next, bc="periodic")
        sys_now = sys_next
        take(idx, state.u)
    return P1Result(times, snapshots, history)


def reference_solve(cs: CoefficientSet, n_elements: int, dt: float, t_end: float,
                    record_times=None, eval_points: Optional[int] = None,
                    tol: float = 1e-9, shift=None, shift_rate=None) -> list:
    """High-resolution standard FEM in mean-flow coordinates.

    Returns one :class:`FieldSnapshot` per requested record time (default:
    the final time only), evaluated on a uniform Eulerian grid that
    defaults to one point per element.
    """
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError(f"dt={dt} does not divide t_end={t_end}")
    times = dt * np.arange(n_steps + 1)
    if shift is None or shift_rate is None:
        shift, shift_rate = mean_flow_shift(cs, times, tol)
    if record_times is None:
        record_times = [t_end]
    record_indices = [time_to_index(t, dt) for t in record_times]
    if eval_points is None:
        eval_points = n_elements
    result = solve_shifted_p1(cs, n_elements, dt, n_steps, shift, shift_rate,
                              record_indices, eval_points)
    return result.snapshots


def time_to_index(t: float, dt: float) -> int:
    """Index of ``t`` on the uniform step grid; rejects off-grid times."""
    idx = int(round(t / dt))
    if abs(idx * dt - t) > 1e-9:
        raise ValueError(f"time {t} is not on the dt={dt} grid")
    return idx
