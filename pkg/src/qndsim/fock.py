"""Truncated Fock-space operators, states and quadrature bases.

Conventions used throughout the package:

* quadratures  x = (a + a^dag)/2,  p = (a - a^dag)/2i,
* commutator   [x, p] = i/2,
* vacuum       Var(x) = Var(p) = 1/4.

Note that most CV libraries use the vacuum-variance-1/2 convention; every
analytic formula in this package (Hermite functions, Wigner kernels, squeeze
and displacement actions) is written for the 1/4 convention above.

Multi-mode objects use fundamental-major index ordering: for dims (da, db)
the flat index is  n_a * db + n_b,  i.e. ``amplitudes.reshape(da, db)``
recovers the mode matrix.  All serialization headers state this ordering.

All types are immutable after construction; operations return new values.
Truncation is guarded by an explicit leakage audit (`assert_leakage`):
population in the top two levels of a mode above the tolerance is a hard
error, because strong squeezing makes silent truncation the dominant
failure mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cosh, log, sqrt, tanh

import numpy as np
import scipy.sparse as sp

from .errors import GridCoverageError, TruncationLeakageError

__all__ = [
    "FockOperator",
    "PureState",
    "DensityState",
    "QuadratureBasis",
    "annihilation",
    "creation",
    "number_operator",
    "identity",
    "parity_operator",
    "quadratures",
    "squeeze_operator",
    "displacement",
    "displacement_p",
    "tensor",
    "basis_state",
    "vacuum",
    "coherent_state",
    "squeezed_vacuum_amplitudes",
    "hermite_functions",
    "quadrature_basis",
    "partial_trace",
    "reduced_density",
    "expectation",
    "variance",
    "assert_leakage",
]

# Matrices this large and above are kept sparse by tensor/hamiltonian builders.
SPARSE_THRESHOLD = 4096


def _check_dim(dim: int) -> int:
    if int(dim) != dim or dim < 2:
        raise ValueError(f"invalid dimension {dim!r}: mode truncation must be an integer >= 2")
    return int(dim)


def _as_dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


@dataclass(frozen=True)
class FockOperator:
    """Operator on a truncated single- or multi-mode Fock space.

    ``matrix`` may be a dense ndarray or a scipy sparse matrix; large joint
    operators are kept sparse so Krylov propagation stays cheap.
    """

    dims: tuple[int, ...]
    matrix: object  # np.ndarray or scipy.sparse matrix

    def __post_init__(self):
        dims = tuple(_check_dim(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        n = int(np.prod(dims))
        if self.matrix.shape != (n, n):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match dims {dims}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return _as_dense(self.matrix)

    def sparse(self) -> sp.csr_matrix:
        return self.matrix.tocsr() if self.is_sparse else sp.csr_matrix(self.matrix)

    def dag(self) -> "FockOperator":
        return FockOperator(self.dims, self.matrix.conj().T)

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.conj().T
        if sp.issparse(d):
            return float(np.abs(d.data).max()) if d.nnz else 0.0
        return float(np.abs(d).max())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_defect() < tol

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            if other.dims != self.dims:
                raise ValueError(f"dimension mismatch: {self.dims} @ {other.dims}")
            return FockOperator(self.dims, self.matrix @ other.matrix)
        if isinstance(other, PureState):
            if other.dims != self.dims:
                raise ValueError(f"dimension mismatch: {self.dims} @ {other.dims}")
            return PureState(self.dims, np.asarray(self.matrix @ other.amplitudes))
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, FockOperator):
            if other.dims != self.dims:
                raise ValueError("dimension mismatch in operator sum")
            return FockOperator(self.dims, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, FockOperator):
            if other.dims != self.dims:
                raise ValueError("dimension mismatch in operator difference")
            return FockOperator(self.dims, self.matrix - other.matrix)
        return NotImplemented

    def __mul__(self, scalar):
        return FockOperator(self.dims, scalar * self.matrix)

    __rmul__ = __mul__


@dataclass(frozen=True)
class PureState:
    """Normalized state vector on the (joint) truncated Fock basis."""

    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(_check_dim(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (int(np.prod(dims)),):
            raise ValueError(f"amplitude vector length {amps.shape} does not match dims {dims}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "PureState":
        n = self.norm()
        if n < 1e-300:
            raise ValueError("cannot normalize a zero state")
        return PureState(self.dims, self.amplitudes / n)

    def mode_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per mode (FH-major)."""
        return self.amplitudes.reshape(self.dims)

    def overlap(self, other: "PureState") -> complex:
        if other.dims != self.dims:
            raise ValueError("dimension mismatch in overlap")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def mode_populations(self, mode: int) -> np.ndarray:
        """Marginal Fock populations of one mode."""
        probs = np.abs(self.mode_matrix()) ** 2
        axes = tuple(i for i in range(len(self.dims)) if i != mode)
        return probs.sum(axis=axes)

    def leakage(self, mode: int = 0) -> float:
        """Population in the top two levels of ``mode``."""
        pops = self.mode_populations(mode)
        return float(pops[-2:].sum())


@dataclass(frozen=True)
class DensityState:
    """Hermitian, trace-one density matrix on the (joint) truncated basis."""

    dims: tuple[int, ...]
    matrix: np.ndarray

    HERM_TOL = 1e-10
    TRACE_TOL = 1e-8
    EIG_FLOOR = -1e-8

    def __post_init__(self):
        dims = tuple(_check_dim(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        m = np.asarray(self.matrix, dtype=complex)
        n = int(np.prod(dims))
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, eig_floor: float | None = None) -> "DensityState":
        """Check Hermiticity, unit trace and positivity; raise on violation."""
        m = self.matrix
        if np.abs(m - m.conj().T).max() > self.HERM_TOL:
            raise ValueError("density matrix is not Hermitian within tolerance")
        if abs(self.trace() - 1.0) > self.TRACE_TOL:
            raise ValueError(f"density matrix trace {self.trace()} deviates from 1")
        floor = self.EIG_FLOOR if eig_floor is None else eig_floor
        w = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if w.min() < floor:
            raise ValueError(f"density matrix has eigenvalue {w.min():.3e} below {floor:.0e}")
        return self

    def mode_populations(self, mode: int) -> np.ndarray:
        n_modes = len(self.dims)
        t = self.matrix.reshape(self.dims + self.dims)
        # trace out every mode except `mode`
        for i in reversed([i for i in range(n_modes) if i != mode]):
            t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
        return np.abs(np.diag(t.reshape(self.dims[mode], self.dims[mode])))

    def leakage(self, mode: int = 0) -> float:
        return float(self.mode_populations(mode)[-2:].sum())

    @staticmethod
    def from_pure(state: PureState) -> "DensityState":
        v = state.amplitudes
        return DensityState(state.dims, np.outer(v, v.conj()))


# ---------------------------------------------------------------------------
# elementary operators


def annihilation(dim: int) -> FockOperator:
    """Ladder operator with <n-1|a|n> = sqrt(n)."""
    dim = _check_dim(dim)
    m = np.zeros((dim, dim), dtype=complex)
    ns = np.arange(1, dim)
    m[ns - 1, ns] = np.sqrt(ns)
    return FockOperator((dim,), m)


def creation(dim: int) -> FockOperator:
    return annihilation(dim).dag()


def number_operator(dim: int) -> FockOperator:
    dim = _check_dim(dim)
    return FockOperator((dim,), np.diag(np.arange(dim, dtype=complex)))


def identity(dim: int) -> FockOperator:
    dim = _check_dim(dim)
    return FockOperator((dim,), np.eye(dim, dtype=complex))


def parity_operator(dim: int) -> FockOperator:
    dim = _check_dim(dim)
    return FockOperator((dim,), np.diag(((-1.0) ** np.arange(dim)).astype(complex)))


def quadratures(dim: int) -> tuple[FockOperator, FockOperator]:
    """x = (a + a^dag)/2 and p = (a - a^dag)/2i; both Hermitian."""
    a = annihilation(dim).matrix
    x = (a + a.conj().T) / 2
    p = (a - a.conj().T) / 2j
    return FockOperator((dim,), x), FockOperator((dim,), p)


def squeeze_operator(dim: int, r: float, leak_tol: float = 1e-6) -> FockOperator:
    """Unitary S with S^dag a S = r x + i p / r (field gain r >= 1).

    Implemented as expm of (ln r)/2 (a^dag^2 - a^2); the sign is fixed so the
    conjugation above holds, i.e. S stretches x by r and shrinks p by 1/r.
    Raises TruncationLeakageError if the squeezed vacuum S|0> leaks more than
    ``leak_tol`` into the top two levels.
    """
    dim = _check_dim(dim)
    if r < 1:
        raise ValueError(f"field gain r = {r} must be >= 1")
    op = _squeeze_unchecked(dim, r)
    if leak_tol is not None:
        sq_vac = PureState((dim,), op.matrix[:, 0].copy())
        leak = sq_vac.leakage()
        if leak > leak_tol:
            raise TruncationLeakageError(
                f"squeeze(r={r}) at dim {dim}: squeezed-vacuum top-level population "
                f"{leak:.3e} exceeds {leak_tol:.0e}; increase the truncation"
            )
    return op


def _squeeze_unchecked(dim: int, r: float) -> FockOperator:
    """Squeeze/antisqueeze for any r > 0, without the leakage audit."""
    import scipy.linalg

    if r <= 0:
        raise ValueError("field gain must be positive")
    a = annihilation(dim).matrix
    gen = 0.5 * log(r) * (a.conj().T @ a.conj().T - a @ a)
    return FockOperator((dim,), scipy.linalg.expm(gen))


def displacement(dim: int, alpha: complex) -> FockOperator:
    """D(alpha) = expm(alpha a^dag - conj(alpha) a); displaces (x, p) by (Re, Im) alpha."""
    import scipy.linalg

    dim = _check_dim(dim)
    a = annihilation(dim).matrix
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return FockOperator((dim,), scipy.linalg.expm(gen))


def displacement_p(dim: int, shift: float, leak_tol: float = 1e-6) -> FockOperator:
    """Unitary D with D^dag p D = p + shift and x untouched.

    Post-hoc leakage check on D|0>; large shifts on small truncations fail.
    """
    op = displacement(dim, 1j * shift)
    if leak_tol is not None:
        disp_vac = PureState((dim,), op.matrix[:, 0].copy())
        leak = disp_vac.leakage()
        if leak > leak_tol:
            raise TruncationLeakageError(
                f"displacement_p(shift={shift}) at dim {dim}: displaced-vacuum "
                f"top-level population {leak:.3e} exceeds {leak_tol:.0e}"
            )
    return op


def tensor(*factors):
    """Kronecker product of operators or states, FH factor first.

    Dims are concatenated in argument order; sparse matrices are used when
    any factor is sparse or the joint dimension exceeds SPARSE_THRESHOLD.
    """
    if not factors:
        raise ValueError("tensor() needs at least one factor")
    if all(isinstance(f, PureState) for f in factors):
        amps = factors[0].amplitudes
        dims = list(factors[0].dims)
        for f in factors[1:]:
            amps = np.kron(amps, f.amplitudes)
            dims.extend(f.dims)
        return PureState(tuple(dims), amps)
    if all(isinstance(f, FockOperator) for f in factors):
        dims = []
        for f in factors:
            dims.extend(f.dims)
        joint = int(np.prod(dims))
        use_sparse = joint > SPARSE_THRESHOLD or any(f.is_sparse for f in factors)
        if use_sparse:
            m = factors[0].sparse()
            for f in factors[1:]:
                m = sp.kron(m, f.sparse(), format="csr")
        else:
            m = factors[0].dense()
            for f in factors[1:]:
                m = np.kron(m, f.dense())
        return FockOperator(tuple(dims), m)
    raise TypeError("tensor factors must be all operators or all states")


def basis_state(dims, occupation) -> PureState:
    dims = tuple(_check_dim(d) for d in np.atleast_1d(dims))
    occupation = tuple(np.atleast_1d(occupation))
    if len(occupation) != len(dims):
        raise ValueError("occupation length does not match number of modes")
    for n, d in zip(occupation, dims):
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} outside [0, {d})")
    amps = np.zeros(int(np.prod(dims)), dtype=complex)
    amps[int(np.ravel_multi_index(occupation, dims))] = 1.0
    return PureState(dims, amps)


def vacuum(dims) -> PureState:
    dims = tuple(np.atleast_1d(dims))
    return basis_state(dims, (0,) * len(dims))


def coherent_state(dim: int, alpha: complex) -> PureState:
    """|alpha> with <x> = Re alpha, <p> = Im alpha (closed-form amplitudes)."""
    dim = _check_dim(dim)
    if alpha == 0:
        return vacuum((dim,))
    n = np.arange(dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim)))))
    amps = np.exp(-0.5 * abs(alpha) ** 2 + n * np.log(complex(alpha)) - 0.5 * log_fact)
    return PureState((dim,), amps).normalize()


def squeezed_vacuum_amplitudes(dim: int, r: float) -> np.ndarray:
    """Closed-form amplitudes of the squeezed vacuum S(r)|0> for any r > 0.

    r is the x-quadrature field gain: sqrt(Var x) = r/2.  r < 1 gives an
    x-squeezed (p-antisqueezed) state, which squeeze_operator cannot produce
    because its contract restricts to protocol gains r >= 1.
    """
    if r <= 0:
        raise ValueError("width gain must be positive")
    s = log(r)
    t = tanh(s)
    amps = np.zeros(dim, dtype=complex)
    # c_{2k} = t^k sqrt((2k)!)/(2^k k!) / sqrt(cosh s), accumulated in log space
    c = 1.0 / sqrt(cosh(s))
    amps[0] = c
    for k in range(1, (dim - 1) // 2 + 1):
        # ratio c_{2k}/c_{2k-2} = t * sqrt((2k-1)(2k)) / (2k)
        c *= t * sqrt((2 * k - 1) * (2 * k)) / (2 * k)
        amps[2 * k] = c
    v = amps / np.linalg.norm(amps)
    return v


# ---------------------------------------------------------------------------
# quadrature eigenbases


def hermite_functions(n_max: int, xs: np.ndarray) -> np.ndarray:
    """psi_n(x) for n = 0..n_max in the vacuum-variance-1/4 convention.

    psi_0(x) = (2/pi)^(1/4) exp(-x^2); recurrence
    psi_{n+1} = (2 x psi_n - sqrt(n) psi_{n-1}) / sqrt(n+1),
    which follows from the tridiagonal action of x = (a + a^dag)/2.
    """
    xs = np.asarray(xs, dtype=float)
    out = np.zeros((n_max + 1, xs.size))
    out[0] = (2.0 / np.pi) ** 0.25 * np.exp(-xs**2)
    if n_max >= 1:
        out[1] = 2.0 * xs * out[0]
    for n in range(1, n_max):
        out[n + 1] = (2.0 * xs * out[n] - sqrt(n) * out[n - 1]) / sqrt(n + 1)
    return out


@dataclass(frozen=True)
class QuadratureBasis:
    """Discretized x- or p-eigenbasis of one mode.

    ``transform[n, k] = <n | q_k>``: Hermite-function values for the x basis,
    the same values times the Fock-space Fourier phase i^n for the p basis.
    ``weights`` are trapezoidal integration weights on ``grid``; together they
    give the approximate resolution of identity
    sum_k w_k |q_k><q_k| ~= 1 on the low-lying subspace.
    """

    mode_dim: int
    kind: str  # "x" or "p"
    grid: np.ndarray
    weights: np.ndarray
    transform: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def wavefunction(self, amplitudes: np.ndarray) -> np.ndarray:
        """<q_k|psi> on the grid for a single-mode amplitude vector."""
        return self.transform.conj().T @ np.asarray(amplitudes)

    def synthesize(self, values: np.ndarray) -> np.ndarray:
        """Fock amplitudes from wavefunction samples: c_n = sum_k w_k <n|q_k> psi(q_k)."""
        return self.transform @ (self.weights * np.asarray(values))

    def orthonormality_defect(self) -> float:
        """max |sum_k w_k <n|q_k><q_k|m> - delta_nm| over the mode space."""
        gram = (self.transform * self.weights) @ self.transform.conj().T
        return float(np.abs(gram - np.eye(self.mode_dim)).max())

    def edge_mass(self, amplitudes: np.ndarray) -> float:
        """|psi|^2 at the two grid ends relative to the peak (coverage audit)."""
        wf = np.abs(self.wavefunction(amplitudes)) ** 2
        peak = wf.max()
        return float(max(wf[0], wf[-1]) / peak) if peak > 0 else 0.0


def quadrature_basis(dim: int, grid_min: float, grid_max: float, n_points: int,
                     kind: str = "x") -> QuadratureBasis:
    """Build a discretized quadrature eigenbasis.

    The p basis composes the x-basis Hermite values with the phase i^n, since
    Fock states are Fourier eigenvectors: <n|p> = i^n psi_n(p).
    """
    dim = _check_dim(dim)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if not grid_max > grid_min:
        raise ValueError("grid_max must exceed grid_min")
    if kind not in ("x", "p"):
        raise ValueError(f"unknown quadrature kind {kind!r}")
    grid = np.linspace(grid_min, grid_max, n_points)
    dq = grid[1] - grid[0]
    weights = np.full(n_points, dq)
    weights[0] = weights[-1] = dq / 2
    psi = hermite_functions(dim - 1, grid)
    if kind == "p":
        phases = (1j) ** np.arange(dim)
        transform = phases[:, None] * psi
    else:
        transform = psi.astype(complex)
    return QuadratureBasis(dim, kind, grid, weights, transform)


# ---------------------------------------------------------------------------
# reductions and moments


def partial_trace(state: DensityState, keep_mode: int) -> DensityState:
    """Reduced density matrix of one mode of a two-mode state."""
    if len(state.dims) != 2:
        raise ValueError("partial_trace expects a two-mode state")
    if keep_mode not in (0, 1):
        raise IndexError(f"keep_mode {keep_mode} out of range for two modes")
    da, db = state.dims
    t = state.matrix.reshape(da, db, da, db)
    if keep_mode == 0:
        red = np.einsum("ikjk->ij", t)
        return DensityState((da,), red)
    red = np.einsum("kikj->ij", t)
    return DensityState((db,), red)


def reduced_density(state, keep_mode: int) -> DensityState:
    """Reduced density matrix of one mode from a pure or mixed joint state."""
    if isinstance(state, DensityState):
        return partial_trace(state, keep_mode)
    if len(state.dims) != 2:
        raise ValueError("reduced_density expects a two-mode state")
    m = state.mode_matrix()
    if keep_mode == 0:
        return DensityState((state.dims[0],), m @ m.conj().T)
    if keep_mode == 1:
        return DensityState((state.dims[1],), m.T @ m.conj())
    raise IndexError(f"keep_mode {keep_mode} out of range for two modes")


def expectation(state, op: FockOperator) -> complex:
    """<psi|O|psi> or Tr(rho O)."""
    if isinstance(state, PureState):
        if state.dims != op.dims:
            raise ValueError(f"dimension mismatch: state {state.dims}, operator {op.dims}")
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    if isinstance(state, DensityState):
        if state.dims != op.dims:
            raise ValueError(f"dimension mismatch: state {state.dims}, operator {op.dims}")
        m = op.matrix
        if sp.issparse(m):
            return complex((m @ state.matrix).diagonal().sum())
        return complex(np.trace(m @ state.matrix))
    raise TypeError(f"unsupported state type {type(state)!r}")


def variance(state, op: FockOperator) -> float:
    """<O^2> - <O>^2 (real for Hermitian O)."""
    mean = expectation(state, op)
    sq = expectation(state, op @ op)
    return float((sq - mean**2).real)


def assert_leakage(state, tol: float, stage: str, modes=None) -> None:
    """Hard truncation audit: top-two-level population of each mode <= tol."""
    if tol is None:
        return
    n_modes = len(state.dims)
    modes = range(n_modes) if modes is None else modes
    for mode in modes:
        leak = state.leakage(mode)
        if leak > tol:
            raise TruncationLeakageError(
                f"stage {stage!r}: mode {mode} top-level population {leak:.3e} "
                f"exceeds tolerance {tol:.0e} (dims {state.dims})"
            )
