"""Propagation loss in the squeezed frame: Lindblad integration and MCWF.

Photon loss during the parametric interaction enters the effective frame
through the conjugated jump operators

    L_eff,c = S^dag (sqrt(kappa_c) c) S = sqrt(kappa_c) (r_c x_c + i p_c / r_c),

so the master equation in the squeezed frame reads

    drho/dt = -i [H_eff, rho] + sum_c D[L_eff,c] rho,
    D[L] rho = L rho L^dag - (L^dag L rho + rho L^dag L) / 2.

Two engines are provided.  `integrate_master` is the adaptive-step ground
truth for small joint dimensions.  `mcwf_trajectories` unravels the same
equation into Monte-Carlo wavefunction trajectories: non-Hermitian drift
H - (i/2) sum L^dag L, jump probability per step kept below a ceiling by
adaptive halving of dt, jump channel chosen proportional to <L^dag L>, and
renormalization after every step.  Trajectory RNG is counter-based
(Philox keyed by (master seed, trajectory index)), so ensembles are
order-independent and parallelizable, and every trajectory is reproducible
in isolation.

The drift propagator for one step is built from a Strang splitting
exp(-K dt/4) exp(-i H dt) exp(-K dt/4) (K = sum L^dag L) assembled from two
one-time Hermitian eigendecompositions, which keeps rebuilding it cheap when
the step size adapts; diagonal generators short-circuit to vector
exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import fock
from .errors import StepSizeError, StiffnessError
from .fock import DensityState, FockOperator, PureState

__all__ = [
    "LossParams",
    "TrajectoryEnsemble",
    "effective_lindblad",
    "lindblad_rhs",
    "integrate_master",
    "mcwf_trajectories",
    "mcwf_ensemble",
    "negativity_sweep",
]

import logging

log = logging.getLogger(__name__)

JUMP_CEILING = 0.1      # max jump probability per MCWF step
MASTER_DIM_LIMIT = 16 * 12  # ground-truth integrator intended below this joint dim


@dataclass(frozen=True)
class LossParams:
    """Energy decay rates of the two modes (same inverse-time unit as g)."""

    kappa_a: float = 0.0
    kappa_b: float = 0.0

    def __post_init__(self):
        if self.kappa_a < 0 or self.kappa_b < 0:
            raise ValueError("decay rates must be >= 0")

    def any_loss(self) -> bool:
        return self.kappa_a > 0 or self.kappa_b > 0


def effective_lindblad(kappa: float, r: float, mode: int, dims) -> FockOperator:
    """Squeezed-frame jump operator sqrt(kappa) (r x + i p / r) on one mode."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if r < 1:
        raise ValueError("field gain r must be >= 1")
    dims = tuple(dims)
    if mode not in range(len(dims)):
        raise ValueError(f"mode {mode} out of range for dims {dims}")
    x, p = fock.quadratures(dims[mode])
    local = sqrt(kappa) * (r * x + (1j / r) * p)
    factors = [fock.identity(d) for d in dims]
    factors[mode] = FockOperator((dims[mode],), local.matrix)
    return fock.tensor(*factors)


def lindblad_rhs(rho, H: FockOperator, lindblad_ops) -> np.ndarray:
    """drho/dt = -i [H, rho] + sum_c D[L_c] rho, returned as a plain matrix."""
    m = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)
    h = H.dense() if isinstance(H, FockOperator) else H
    out = -1j * (h @ m - m @ h)
    for L in lindblad_ops:
        lm = L.dense() if isinstance(L, FockOperator) else L
        ldag = lm.conj().T
        ldl = ldag @ lm
        out += lm @ m @ ldag - 0.5 * (ldl @ m + m @ ldl)
    return out


def integrate_master(rho0: DensityState, H: FockOperator, lindblad_ops, t: float,
                     tol: float = 1e-9) -> DensityState:
    """Adaptive integration of the Lindblad master equation.

    Output is hermitized, eigenvalues below -1e-8 are clipped to zero with
    trace renormalization, and both events are logged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t == 0:
        return rho0
    n = rho0.dim
    h = H.dense()
    ls = [(L.dense() if isinstance(L, FockOperator) else np.asarray(L)) for L in lindblad_ops]
    ldags = [l.conj().T for l in ls]
    ldls = [d @ l for d, l in zip(ldags, ls)]

    def rhs(_t, y):
        m = y.reshape(n, n)
        out = -1j * (h @ m - m @ h)
        for l, d, k in zip(ls, ldags, ldls):
            out += l @ m @ d - 0.5 * (k @ m + m @ k)
        return out.reshape(-1)

    sol = solve_ivp(rhs, (0.0, t), rho0.matrix.reshape(-1).astype(complex),
                    method="DOP853", rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise StiffnessError(f"master-equation integration failed: {sol.message}")
    m = sol.y[:, -1].reshape(n, n)
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    if w.min() < -1e-6:
        raise StiffnessError(
            f"master-equation output eigenvalue {w.min():.3e} below -1e-6; tighten tol"
        )
    if w.min() < -1e-8:
        clipped = np.clip(w, 0.0, None)
        shift = float(np.sum(clipped) - np.sum(w))
        log.info("integrate_master: clipped negative eigenvalues (trace shift %.2e)", shift)
        m = (v * clipped) @ v.conj().T
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > 1e-8:
        log.info("integrate_master: renormalizing trace deviation %.2e", tr - 1.0)
    m = m / tr
    return DensityState(rho0.dims, m)


def _offdiag_is_zero(m) -> bool:
    if sp.issparse(m):
        d = m - sp.diags(m.diagonal(), shape=m.shape)
        return d.nnz == 0 or np.abs(d.data).max() == 0.0
    return bool(np.abs(m - np.diag(np.diag(m))).max() == 0.0)


class _DriftPropagator:
    """exp(-i H_nh dt) for H_nh = H - (i/2) K, rebuilt cheaply for any dt.

    Diagonal H and K (the pure-loss case) short-circuit to a vector
    exponential without ever densifying, so large joint dimensions stay
    affordable; otherwise one Hermitian eigendecomposition each of H and K
    serves every step size through a Strang splitting.
    """

    def __init__(self, H, lindblad_ops):
        hm = H.matrix if isinstance(H, FockOperator) else H
        dim = hm.shape[0]
        if sp.issparse(lindblad_ops[0].matrix if isinstance(lindblad_ops[0], FockOperator) else lindblad_ops[0]):
            k = sp.csr_matrix((dim, dim), dtype=complex)
        else:
            k = np.zeros((dim, dim), dtype=complex)
        for L in lindblad_ops:
            lm = L.matrix if isinstance(L, FockOperator) else L
            lm = lm if sp.issparse(lm) == sp.issparse(k) else (
                sp.csr_matrix(lm) if sp.issparse(k) else np.asarray(lm))
            k = k + lm.conj().T @ lm
        self._h_diag_only = _offdiag_is_zero(hm)
        self._k_diag_only = _offdiag_is_zero(k)
        if self._h_diag_only:
            self._h_eigs = np.real(hm.diagonal() if sp.issparse(hm) else np.diag(hm))
        else:
            self._h_eigs, self._h_vecs = np.linalg.eigh(
                hm.toarray() if sp.issparse(hm) else hm)
        if self._k_diag_only:
            self._k_eigs = np.real(k.diagonal() if sp.issparse(k) else np.diag(k))
        else:
            self._k_eigs, self._k_vecs = np.linalg.eigh(
                k.toarray() if sp.issparse(k) else k)
        self._cache: dict[float, object] = {}
        self.diagonal = self._h_diag_only and self._k_diag_only

    def _build(self, dt: float):
        if self.diagonal:
            return np.exp(-1j * self._h_eigs * dt - 0.5 * self._k_eigs * dt)
        if self._h_diag_only:
            hu = np.exp(-1j * self._h_eigs * dt)
            half = (self._k_vecs * np.exp(-0.25 * self._k_eigs * dt)) @ self._k_vecs.conj().T
            return half @ (hu[:, None] * half)
        hu = (self._h_vecs * np.exp(-1j * self._h_eigs * dt)) @ self._h_vecs.conj().T
        if self._k_diag_only:
            half = np.exp(-0.25 * self._k_eigs * dt)
            return half[:, None] * hu * half[None, :]
        half = (self._k_vecs * np.exp(-0.25 * self._k_eigs * dt)) @ self._k_vecs.conj().T
        return half @ hu @ half

    def apply(self, psi: np.ndarray, dt: float) -> np.ndarray:
        u = self._cache.get(dt)
        if u is None:
            u = self._build(dt)
            if len(self._cache) < 64:
                self._cache[dt] = u
        return u * psi if self.diagonal else u @ psi


@dataclass
class TrajectoryEnsemble:
    """MCWF ensemble: mean state, per-trajectory seeds and jump statistics."""

    n_traj: int
    master_seed: int
    seeds: list
    mean_state: DensityState | None
    jump_counts: np.ndarray
    stats: dict = field(default_factory=dict)


def _trajectory_rng(master_seed: int, index: int):
    """Counter-based per-trajectory stream: Philox keyed by (seed, index)."""
    return np.random.Generator(
        np.random.Philox(key=np.array([master_seed, index], dtype=np.uint64))
    )


def mcwf_trajectories(psi0: PureState, H, lindblad_ops, t: float, n_traj: int,
                      seed: int, dt_max: float, jump_ceiling: float = JUMP_CEILING,
                      dt_min_factor: float = 1e-9):
    """Yield (index, final amplitudes, n_jumps) for independent trajectories.

    First-order unraveling: Strang-split drift under H - (i/2) sum L^dag L,
    no-jump probability taken from the norm decay of the drifted state, jump
    channel proportional to <L_c^dag L_c>, renormalization after each step.
    dt halves whenever the estimated jump probability exceeds
    ``jump_ceiling`` and re-doubles when safely below it.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    drift = _DriftPropagator(H, lindblad_ops)
    ls = [(L.sparse() if isinstance(L, FockOperator) else sp.csr_matrix(L))
          for L in lindblad_ops]
    dt_min = dt_max * dt_min_factor
    v0 = psi0.amplitudes
    for idx in range(n_traj):
        rng = _trajectory_rng(seed, idx)
        psi = v0.copy()
        elapsed = 0.0
        dt = dt_max
        jumps = 0
        while elapsed < t * (1 - 1e-12):
            dt = min(dt, t - elapsed)
            rates = np.array([np.linalg.norm(l @ psi) ** 2 for l in ls])
            total = float(rates.sum())
            while total * dt > jump_ceiling:
                dt /= 2
                if dt < dt_min:
                    raise StepSizeError(
                        f"trajectory {idx}: jump probability {total * dt:.3f} still "
                        f"above {jump_ceiling} at dt = {dt:.3e}"
                    )
            drifted = drift.apply(psi, dt)
            p_nojump = float(np.linalg.norm(drifted) ** 2)
            if rng.random() < 1.0 - p_nojump:
                channel = int(rng.choice(len(ls), p=rates / total)) if len(ls) > 1 else 0
                psi = ls[channel] @ psi
                psi = psi / np.linalg.norm(psi)
                jumps += 1
            else:
                psi = drifted / sqrt(p_nojump)
            elapsed += dt
            if total * dt < jump_ceiling / 4 and dt < dt_max:
                dt = min(2 * dt, dt_max)
        yield idx, psi, jumps


def mcwf_ensemble(psi0: PureState, H, lindblad_ops, t: float, n_traj: int,
                  seed: int, dt_max: float, jump_ceiling: float = JUMP_CEILING,
                  store_mean: bool = True) -> TrajectoryEnsemble:
    """Run an MCWF ensemble and average it into a density matrix.

    The ensemble mean converges to the integrate_master solution; the
    equivalence is quantified in the test suite.
    """
    dim = psi0.dim
    mean = np.zeros((dim, dim), dtype=complex) if store_mean else None
    jumps = np.zeros(n_traj, dtype=int)
    for idx, psi, nj in mcwf_trajectories(psi0, H, lindblad_ops, t, n_traj, seed,
                                          dt_max, jump_ceiling=jump_ceiling):
        jumps[idx] = nj
        if store_mean:
            mean += np.outer(psi, psi.conj())
    mean_state = None
    if store_mean:
        mean_state = DensityState(psi0.dims, mean / n_traj)
    return TrajectoryEnsemble(
        n_traj=n_traj,
        master_seed=seed,
        seeds=[(seed, i) for i in range(n_traj)],
        mean_state=mean_state,
        jump_counts=jumps,
        stats={"t": t, "dt_max": dt_max, "mean_jumps": float(jumps.mean())},
    )


def negativity_sweep(xi_values, tau_values, *, r: float, kappa_over_g: float,
                     w_a: float, dims, n_traj: int = 400, seed: int = 0,
                     window_width: float = 0.0, n_points: int = 512,
                     master_dim_limit: int = MASTER_DIM_LIMIT,
                     wigner_shape=(141, 181)) -> list[dict]:
    """Wigner-negativity table of lossy heralded cats over a (xi, tau) grid.

    Each point runs the cat pipeline with squeezed-frame loss (master
    equation below ``master_dim_limit`` joint dimension, MCWF above), heralds
    at p_b = xi^2 tau / 4, and integrates |W|.  Failures are recorded per
    point and the sweep continues.  Rows carry the tau >= 4 / xi^2 cat
    orthogonality flag.
    """
    from .protocols import CatSpec, cat_protocol
    from . import analysis
    from .dynamics import InteractionParams

    rows = []
    for i, xi in enumerate(xi_values):
        for j, tau in enumerate(tau_values):
            row = {"xi": float(xi), "tau": float(tau),
                   "orthogonal": bool(tau * xi**2 >= 4.0),
                   "negativity": None, "herald_probability": None, "error": ""}
            try:
                spec = CatSpec(xi=float(xi), tau=float(tau), w_a=w_a,
                               delta_p_b=window_width)
                params = InteractionParams(g=1.0, r_a=r, r_b=r, tau=float(tau))
                loss = LossParams(kappa_a=kappa_over_g, kappa_b=kappa_over_g)
                point_seed = seed + 1000003 * (i * len(tau_values) + j)
                rec = cat_protocol(spec, params, dims=dims, loss=loss,
                                   n_traj=n_traj, seed=point_seed,
                                   n_points=n_points,
                                   master_dim_limit=master_dim_limit)
                st = rec.post_state
                wdt = spec.peak_width
                x_ext = xi / 2 + max(8 * wdt, 1.2)
                p_ext = max(1.5 / wdt, 4.0)  # ~6 sigma_p, sigma_p = 1/(4w)
                xs = np.linspace(-x_ext, x_ext, wigner_shape[0])
                ps = np.linspace(-p_ext, p_ext, wigner_shape[1])
                wg = analysis.wigner(st, xs, ps, edge_tol=None)
                row["negativity"] = analysis.negativity_volume(wg)
                row["herald_probability"] = rec.probability
            except Exception as exc:  # per-point failures do not stop the sweep
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows
