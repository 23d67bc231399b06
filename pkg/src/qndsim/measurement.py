"""Kraus model of the squared-quadrature QND measurement and homodyne readout.

Evolving a product state |phi_a>|phi_b> under the leading cubic coupling for
normalized time tau displaces the SH p quadrature conditionally on x_a^2.
Conditioning on the SH p-homodyne outcome p_b therefore applies the Kraus
operator

    M(p_b) = integral dx_a  phi_b(p_b - tau x_a^2) |x_a><x_a|

to the fundamental mode, with phi_b the probe's p-space wavefunction.  For a
vacuum probe phi_b(u) = (2/pi)^(1/4) exp(-u^2) and, for p_b well above vacuum
noise, the amplitude is the two-Gaussian ridge

    C(x_a) ~= C+ + C-,   peaks at +-xi/2,  xi = 2 sqrt(p_b/tau),
    width w = 1 / (2 tau xi),

which is what projects squeezed inputs onto squeezed cat states.

Homodyne detection is discretized on a quadrature grid with trapezoidal
weights: outcome k carries Born mass P(p_k) w_k, so window probabilities,
sampling and conditioning all live in one consistent representation.  A
zero-width window returns the pure conditional state at the grid point
nearest the requested center, with the single-cell Born mass as its
probability; windows of nonzero width return the incoherent mixture over
the covered grid points (the ensemble-averaged heralded state).

Detector imperfection is modeled as ideal phase-sensitive pre-amplification
of the measured p quadrature by field gain sqrt(G) (the adjoint of a squeeze
operator), followed by a beam-splitter loss channel of transmissivity eta on
the SH mode, followed by ideal p-homodyne conditioning.  Reported outcomes
are raw detector values; herald windows written in ideal units are rescaled
by sqrt(G eta) (both center and width), which reduces to the ideal chain at
G = eta = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
import scipy.linalg

from . import fock
from .errors import ApproximationDomainError, GridCoverageError, NegligibleHeraldError
from .fock import DensityState, FockOperator, PureState, QuadratureBasis

__all__ = [
    "vacuum_probe",
    "kraus_amplitude",
    "gaussian_sum_approx",
    "KrausOp",
    "kraus_operator",
    "HeraldRecord",
    "homodyne_probability_density",
    "homodyne_condition",
    "homodyne_sample",
    "DetectionParams",
    "detect_with_qe",
    "loss_channel_kraus",
    "auto_p_basis",
]

AMP0 = (2.0 / pi) ** 0.25  # vacuum wavefunction peak value


def vacuum_probe(p):
    """Vacuum p-space wavefunction (2/pi)^(1/4) exp(-p^2), Var(p) = 1/4."""
    return AMP0 * np.exp(-np.asarray(p, dtype=float) ** 2)


def kraus_amplitude(x_a, p_b, tau: float, probe=vacuum_probe):
    """Conditional amplitude C_{p_b}(x_a) = probe(p_b - tau x_a^2)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    x_a = np.asarray(x_a, dtype=float)
    return probe(p_b - tau * x_a**2)


def gaussian_sum_approx(x_a, p_b: float, tau: float):
    """Two-Gaussian ridge C+ + C- valid for p_b well above vacuum noise.

    Peaks sit at +-xi/2 with xi = 2 sqrt(p_b/tau) and width w = (2 tau xi)^-1.
    """
    if p_b <= 0:
        raise ApproximationDomainError(
            f"two-Gaussian approximation needs p_b > 0, got {p_b}"
        )
    if tau <= 0:
        raise ApproximationDomainError("two-Gaussian approximation needs tau > 0")
    x_a = np.asarray(x_a, dtype=float)
    xi = 2.0 * sqrt(p_b / tau)
    w = 1.0 / (2.0 * tau * xi)
    c_plus = AMP0 * np.exp(-((x_a - xi / 2) ** 2) / (4 * w**2))
    c_minus = AMP0 * np.exp(-((x_a + xi / 2) ** 2) / (4 * w**2))
    return c_plus + c_minus


@dataclass(frozen=True)
class KrausOp:
    """Measurement operator M(p_b) for one homodyne outcome, in the Fock basis.

    Diagonal in the x-quadrature basis by construction (a function of x_a).
    """

    outcome: float
    tau: float
    probe: object
    matrix: np.ndarray

    def apply(self, state: PureState) -> PureState:
        """Unnormalized conditional state M(p_b)|psi>."""
        if state.dims != (self.matrix.shape[0],):
            raise ValueError("dimension mismatch between Kraus operator and state")
        return PureState(state.dims, self.matrix @ state.amplitudes)


def kraus_operator(p_b: float, tau: float, probe, fh_dim: int,
                   x_basis: QuadratureBasis, edge_tol: float = 1e-6) -> KrausOp:
    """Discretized M(p_b) = sum_k w_k C(x_k) |x_k><x_k| in the Fock basis."""
    if x_basis.kind != "x":
        raise ValueError("kraus_operator needs an x-quadrature basis")
    if x_basis.mode_dim != fh_dim:
        raise ValueError("x_basis dimension does not match fh_dim")
    amps = kraus_amplitude(x_basis.grid, p_b, tau, probe)
    peak = np.abs(amps).max()
    # tau = 0 is the identity-measurement limit: C is x-independent and the
    # decay audit does not apply
    if tau > 0 and peak > 0 and max(abs(amps[0]), abs(amps[-1])) > edge_tol * peak:
        raise GridCoverageError(
            f"kraus_operator(p_b={p_b}): amplitude at grid edge exceeds "
            f"{edge_tol:.0e} of peak; widen the x grid"
        )
    t = x_basis.transform  # real Hermite values for the x basis
    m = (t * (x_basis.weights * amps)) @ t.conj().T
    return KrausOp(p_b, tau, probe, m)


@dataclass(frozen=True)
class HeraldRecord:
    """Outcome, Born probability and conditioned fundamental-mode state."""

    outcome: float
    probability: float
    post_state: object  # PureState or DensityState
    window_width: float = 0.0


def _conditional_slices(branches, p_basis: QuadratureBasis):
    """<p_k| applied to the SH mode of each weighted pure joint branch.

    branches: iterable of (weight, PureState(da, db)).
    Returns (da, n_pts) conditional vectors per branch and the pooled
    probability density P(p_k) = sum_j w_j ||V_j[:, k]||^2.
    """
    tconj = p_basis.transform.conj()
    slices = []
    density = None
    for weight, st in branches:
        v = st.mode_matrix() @ tconj  # (da, n_pts)
        slices.append((weight, v))
        dens = weight * np.sum(np.abs(v) ** 2, axis=0)
        density = dens if density is None else density + dens
    return slices, density


def _branches_of(joint):
    """Decompose a joint state into weighted pure branches."""
    if isinstance(joint, PureState):
        return [(1.0, joint)]
    if isinstance(joint, DensityState):
        w, vecs = np.linalg.eigh(joint.matrix)
        keep = w > max(w.max() * 1e-14, 1e-14)
        return [(float(wi), PureState(joint.dims, vecs[:, i].copy()))
                for i, wi in enumerate(w) if keep[i]]
    if isinstance(joint, (list, tuple)):
        return list(joint)
    raise TypeError(f"unsupported joint state type {type(joint)!r}")


def homodyne_probability_density(joint, p_basis: QuadratureBasis) -> np.ndarray:
    """Born density P(p_k) of the SH p-homodyne outcome on the grid."""
    _, density = _conditional_slices(_branches_of(joint), p_basis)
    return density


def homodyne_condition(joint, p_basis: QuadratureBasis, center: float,
                       width: float = 0.0, min_probability: float = 1e-12) -> HeraldRecord:
    """Project the SH p quadrature into a window and return the FH state.

    width == 0 returns the PureState at the grid point nearest ``center``
    (the herald probability is that single cell's Born mass); width > 0
    returns the ensemble-averaged DensityState over the window.  The SH mode
    is removed either way.
    """
    grid, weights = p_basis.grid, p_basis.weights
    if not (grid[0] <= center - width / 2 and center + width / 2 <= grid[-1]):
        raise GridCoverageError(
            f"herald window {center} +- {width/2} extends outside the p grid "
            f"[{grid[0]:.3g}, {grid[-1]:.3g}]"
        )
    branches = _branches_of(joint)
    slices, density = _conditional_slices(branches, p_basis)
    da = slices[0][1].shape[0]

    if width == 0.0:
        k = int(np.argmin(np.abs(grid - center)))
        prob = float(density[k] * weights[k])
        if prob < min_probability:
            raise NegligibleHeraldError(
                f"herald at p_b = {grid[k]:.4g} caught probability {prob:.3e}"
            )
        if len(slices) == 1:
            vec = slices[0][1][:, k]
            post = PureState((da,), vec / np.linalg.norm(vec))
        else:
            rho = np.zeros((da, da), dtype=complex)
            for w_j, v in slices:
                rho += w_j * np.outer(v[:, k], v[:, k].conj())
            post = DensityState((da,), rho / np.trace(rho).real)
        return HeraldRecord(float(grid[k]), prob, post, 0.0)

    mask = np.abs(grid - center) <= width / 2 + 1e-12 * max(1.0, abs(center))
    prob = float(np.sum(density[mask] * weights[mask]))
    if prob < min_probability:
        raise NegligibleHeraldError(
            f"herald window {center} +- {width/2} caught probability {prob:.3e}"
        )
    rho = np.zeros((da, da), dtype=complex)
    for w_j, v in slices:
        vw = v[:, mask] * np.sqrt(weights[mask] * w_j)
        rho += vw @ vw.conj().T
    rho /= np.trace(rho).real
    return HeraldRecord(float(center), prob, DensityState((da,), rho), float(width))


def homodyne_sample(joint, p_basis: QuadratureBasis, rng) -> float:
    """Draw one p_b from the Born distribution by inverse CDF over the grid."""
    density = homodyne_probability_density(joint, p_basis)
    masses = density * p_basis.weights
    cdf = np.cumsum(masses)
    total = cdf[-1]
    if total <= 0:
        raise NegligibleHeraldError("homodyne distribution has zero mass on the grid")
    u = rng.random() * total
    k = int(np.searchsorted(cdf, u))
    return float(p_basis.grid[min(k, len(cdf) - 1)])


def auto_p_basis(joint, db: int, n_points: int = 512, n_sigma: float = 6.0) -> QuadratureBasis:
    """p basis for the SH mode spanning mean +- n_sigma standard deviations.

    Accepts a PureState or a weighted branch list; moments are pooled.
    """
    _, pb = fock.quadratures(db)
    pbm = pb.matrix
    pb2m = pbm @ pbm
    m1 = m2 = 0.0
    for w, st in _branches_of(joint):
        m = st.mode_matrix()  # (da, db)
        m1 += w * np.einsum("an,nm,am->", m.conj(), pbm, m).real
        m2 += w * np.einsum("an,nm,am->", m.conj(), pb2m, m).real
    sig = sqrt(max(m2 - m1**2, 1e-12))
    return fock.quadrature_basis(db, m1 - n_sigma * sig, m1 + n_sigma * sig,
                                 n_points, kind="p")


# ---------------------------------------------------------------------------
# detection chain with quantum efficiency and pre-amplification


@dataclass(frozen=True)
class DetectionParams:
    """Quantum efficiency, pre-amplifier power gain and herald window.

    ``window_center`` and ``window_width`` are written in ideal units; the
    detection chain rescales both by sqrt(gain * eta) to raw detector units.
    """

    eta: float = 1.0
    gain: float = 1.0
    window_center: float = 0.0
    window_width: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta = {self.eta} must satisfy 0 < eta <= 1")
        if self.gain < 1.0:
            raise ValueError(f"gain = {self.gain} must be >= 1")
        if self.window_width < 0.0:
            raise ValueError("window_width must be >= 0")

    @property
    def readout_scale(self) -> float:
        return sqrt(self.gain * self.eta)


def loss_channel_kraus(dim: int, eta: float, weight_floor: float = 0.0):
    """Beam-splitter loss channel Kraus operators E_k (vacuum ancilla traced out).

    E_k |n> = sqrt(C(n, k) eta^(n-k) (1-eta)^k) |n-k>; sum_k E_k^dag E_k = 1.
    Returned as sparse single-stripe matrices (each E_k has dim - k entries).
    """
    import scipy.sparse as sp

    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    if eta == 1.0:
        return [sp.identity(dim, dtype=complex, format="csr")]
    ns = np.arange(dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim)))))
    ops = []
    for k in range(dim):
        n = ns[k:]
        log_binom = log_fact[n] - log_fact[k] - log_fact[n - k]
        coef = np.exp(0.5 * (log_binom + (n - k) * np.log(eta) + k * np.log(1 - eta)))
        ops.append(sp.csr_matrix((coef.astype(complex), (n - k, n)), shape=(dim, dim)))
    return ops


def _amplifier(db: int, gain: float) -> FockOperator:
    """Ideal phase-sensitive amplifier of p by field gain sqrt(G).

    This is the adjoint of a squeeze: S(sqrt(G))^dag stretches p and shrinks x.
    """
    return fock._squeeze_unchecked(db, sqrt(gain)).dag()


def detect_with_qe(joint, det: DetectionParams, *, n_points: int = 512,
                   dim_b_amplified: int | None = None, method: str = "exact",
                   n_traj: int = 2000, seed: int = 0, dt_max: float = 0.05,
                   min_probability: float = 1e-12) -> HeraldRecord:
    """Measurement chain: pre-amplify SH p, apply loss eta, p-homodyne herald.

    ``method`` selects how the loss channel is realized: "exact" sums the
    beam-splitter Kraus branches (deterministic), "mcwf" unravels the
    equivalent damping Lindbladian exp(kappa t) = 1/eta into ``n_traj``
    quantum trajectories, matching the stochastic method used for the
    efficiency study.  Both reduce to plain homodyne conditioning at
    eta = 1, G = 1.
    """
    if not isinstance(joint, PureState):
        raise TypeError("detect_with_qe expects a pure joint state")
    da, db = joint.dims

    # (i) phase-sensitive amplification (embed SH mode first if needed)
    if det.gain > 1.0:
        db_amp = dim_b_amplified or db
        if db_amp < db:
            raise ValueError("dim_b_amplified must be >= the SH dimension")
        m = np.zeros((da, db_amp), dtype=complex)
        m[:, :db] = joint.mode_matrix()
        amp = _amplifier(db_amp, det.gain)
        m = m @ amp.matrix.T
        joint = PureState((da, db_amp), m.reshape(-1))
        db = db_amp

    # (ii) loss channel on the SH mode
    if det.eta < 1.0:
        if method == "exact":
            kraus = loss_channel_kraus(db, det.eta)
            m = joint.mode_matrix()
            branches = []
            for e in kraus:
                v = (e @ m.T).T  # apply E_k on the SH index
                w = float(np.linalg.norm(v) ** 2)
                if w > 1e-14:
                    branches.append((w, PureState((da, db), (v / np.linalg.norm(v)).reshape(-1))))
        elif method == "mcwf":
            import scipy.sparse as sp

            from .decoherence import mcwf_trajectories

            kappa_t = -np.log(det.eta)
            b = fock.annihilation(db)
            L = fock.tensor(fock.identity(da), b)
            h0 = FockOperator((da, db), sp.csr_matrix((da * db, da * db), dtype=complex))
            w = 1.0 / n_traj
            branches = [(w, PureState((da, db), psi))
                        for _, psi, _ in mcwf_trajectories(joint, h0, [L], kappa_t,
                                                           n_traj, seed, dt_max)]
        else:
            raise ValueError(f"unknown loss method {method!r}")
    else:
        branches = [(1.0, joint)]

    # (iii) ideal p-homodyne conditioning at rescaled window
    scale = det.readout_scale
    pooled = branches if len(branches) > 1 else branches[0][1]
    basis = auto_p_basis(branches, db, n_points=n_points)
    return homodyne_condition(pooled, basis, scale * det.window_center,
                              scale * det.window_width, min_probability=min_probability)
