"""Chi(2) and squeezed-frame effective Hamiltonians, time propagation.

The bare interaction is H = -g (a^2 b^dag + a^dag^2 b).  Sandwiching the
evolution between single-mode squeezers S_a, S_b (field gains r_a, r_b)
is equivalent to evolving under the effective Hamiltonian obtained by the
substitutions a -> r_a x_a + i p_a / r_a and b -> r_b x_b + i p_b / r_b:

    H_eff = -2 g r_b (r_a^2 x_a^2 - r_a^-2 p_a^2) x_b
            - 2 g r_b^-1 (x_a p_a + p_a x_a) p_b
          = -2 g_eff x_a^2 x_b + O(r_b^-1) + O(r_a^-2 r_b),

with g_eff = r_a^2 r_b g.  The leading term is a cubic QND coupling: it
commutes with x_a^2 exactly, so the second-harmonic p quadrature reads out
x_a^2 without disturbing it.

Time is carried as the pair (tau, g_eff) with tau = g_eff * t; the physical
t is derived.  Propagation uses exact eigendecomposition below a joint
dimension threshold and sparse Krylov action (expm_multiply) above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from . import fock
from .fock import FockOperator, PureState

__all__ = [
    "InteractionParams",
    "chi2_hamiltonian",
    "effective_hamiltonian_full",
    "effective_hamiltonian_leading",
    "Propagator",
    "evolve",
]

EIGH_THRESHOLD = 4096  # joint dimension above which evolve() switches to Krylov


@dataclass(frozen=True)
class InteractionParams:
    """Nonlinear coupling g, squeezer field gains, and normalized time.

    tau = g_eff * t with g_eff = r_a^2 r_b g; the physical interaction time
    is derived, never stored, to avoid unit ambiguity.
    """

    g: float
    r_a: float
    r_b: float
    tau: float

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError(f"coupling g = {self.g} must be positive")
        if self.r_a < 1 or self.r_b < 1:
            raise ValueError("field gains r_a, r_b must be >= 1")
        if self.tau < 0:
            raise ValueError("normalized time tau must be >= 0")

    @property
    def g_eff(self) -> float:
        return self.r_a**2 * self.r_b * self.g

    @property
    def t(self) -> float:
        return self.tau / self.g_eff


def _two_mode(dims) -> tuple[int, int]:
    dims = tuple(dims)
    if len(dims) != 2:
        raise ValueError(f"expected two-mode dims, got {dims}")
    return dims


def chi2_hamiltonian(g: float, dims) -> FockOperator:
    """Bare interaction H = -g (a^2 b^dag + a^dag^2 b)."""
    da, db = _two_mode(dims)
    if g <= 0:
        raise ValueError("coupling g must be positive")
    a = fock.annihilation(da)
    b = fock.annihilation(db)
    a2 = FockOperator((da,), a.matrix @ a.matrix)
    term = fock.tensor(a2, b.dag())
    h = -g * (term + term.dag())
    return h


def effective_hamiltonian_full(params: InteractionParams, dims) -> FockOperator:
    """Exact squeezed-frame Hamiltonian (all orders in 1/r).

    Built from the quadrature polynomial
    -2 g r_b (r_a^2 x_a^2 - r_a^-2 p_a^2) x_b - 2 g r_b^-1 (x_a p_a + p_a x_a) p_b,
    which equals the conjugation S^dag H S on the untruncated algebra.
    """
    da, db = _two_mode(dims)
    xa, pa = fock.quadratures(da)
    xb, pb = fock.quadratures(db)
    g, ra, rb = params.g, params.r_a, params.r_b
    quad_a = (ra**2) * (xa @ xa) - (ra**-2) * (pa @ pa)
    sym_a = xa @ pa + pa @ xa
    h = (-2 * g * rb) * fock.tensor(quad_a, xb) + (-2 * g / rb) * fock.tensor(sym_a, pb)
    return h


def effective_hamiltonian_leading(params: InteractionParams, dims) -> FockOperator:
    """Leading cubic QND term -2 g_eff x_a^2 x_b (commutes with x_a^2)."""
    da, db = _two_mode(dims)
    xa, _ = fock.quadratures(da)
    xb, _ = fock.quadratures(db)
    return (-2 * params.g_eff) * fock.tensor(xa @ xa, xb)


class Propagator:
    """Caches whatever is needed to apply exp(-i H t) repeatedly.

    method "eigh" diagonalizes once (exact on the truncated space) and is the
    default below EIGH_THRESHOLD; "krylov" applies expm_multiply to a sparse
    matrix and scales to large joint dimensions.
    """

    def __init__(self, H: FockOperator, method: str = "auto",
                 eigh_threshold: int = EIGH_THRESHOLD, check_hermitian: bool = True):
        if check_hermitian and not H.is_hermitian(tol=1e-10):
            raise ValueError(
                f"Hamiltonian is not Hermitian (defect {H.hermiticity_defect():.3e})"
            )
        self.H = H
        if method == "auto":
            method = "eigh" if H.dim <= eigh_threshold else "krylov"
        self.method = method
        if method == "eigh":
            self._evals, self._evecs = np.linalg.eigh(H.dense())
        elif method == "krylov":
            self._sparse = H.sparse()
        else:
            raise ValueError(f"unknown propagation method {method!r}")

    def apply(self, state: PureState, t: float) -> PureState:
        if state.dims != self.H.dims:
            raise ValueError("state dims do not match Hamiltonian dims")
        v0 = state.amplitudes
        if self.method == "eigh":
            phases = np.exp(-1j * self._evals * t)
            v = self._evecs @ (phases * (self._evecs.conj().T @ v0))
        else:
            v = expm_multiply(-1j * t * self._sparse, v0)
        drift = abs(np.linalg.norm(v) - np.linalg.norm(v0))
        if drift > 1e-9:
            raise RuntimeError(f"propagation norm drift {drift:.3e} exceeds 1e-9")
        return PureState(state.dims, v)


def evolve(state: PureState, H: FockOperator, t: float,
           leak_tol: float | None = None, stage: str = "evolve",
           method: str = "auto") -> PureState:
    """|psi(t)> = exp(-i H t) |psi(0)| with norm and leakage audits."""
    if t == 0:
        return state
    out = Propagator(H, method=method).apply(state, t)
    if leak_tol is not None:
        fock.assert_leakage(out, leak_tol, stage)
    return out
