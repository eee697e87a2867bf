"""Truncated multi-mode Fock space: operators, states, expectations.

Conventions frozen here and relied on everywhere else:

* Basis ordering is the Kronecker order with mode 0 as the slowest-varying
  tensor index: the basis state |k_0, k_1, ..., k_{K-1}> sits at flat index
  k_0 * (N_1 * ... * N_{K-1}) + k_1 * (N_2 * ...) + ... + k_{K-1}.
* All matrices are dense complex (dimensions here stay <= a few hundred).
* hbar = 1; Hamiltonian matrix entries are angular frequencies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NotHermitianError, SpaceMismatchError, TruncationError

HERMITICITY_ATOL = 1e-12
NORM_ATOL = 1e-9
TRACE_ATOL = 1e-8
HERMITIAN_STATE_ATOL = 1e-10
MIN_EIGENVALUE_FLOOR = -1e-8

#: warn when a coherent state's truncated tail weight exceeds this
COHERENT_TAIL_WARN = 1e-6
#: hard error when the tail weight exceeds this
COHERENT_TAIL_ERROR = 1e-3


@dataclass(frozen=True)
class FockSpace:
    """A truncated bosonic Hilbert space: ``cutoffs[j]`` levels for mode j.

    Immutable after construction; safe to share across parallel workers.
    """

    cutoffs: tuple[int, ...]

    def __post_init__(self):
        if len(self.cutoffs) == 0:
            raise ValueError("need at least one mode")
        if any(int(n) < 2 for n in self.cutoffs):
            raise ValueError(f"every mode needs >= 2 levels, got {self.cutoffs}")
        object.__setattr__(self, "cutoffs", tuple(int(n) for n in self.cutoffs))

    @property
    def n_modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dim(self) -> int:
        return math.prod(self.cutoffs)

    def check_mode(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes} modes")
        return mode

    def fock_index(self, occupation: tuple[int, ...]) -> int:
        """Flat index of |k_0, ..., k_{K-1}> (mode 0 slowest-varying)."""
        if len(occupation) != self.n_modes:
            raise ValueError("occupation length must match mode count")
        idx = 0
        for k, n in zip(occupation, self.cutoffs):
            if not 0 <= k < n:
                raise ValueError(f"occupation {occupation} exceeds cutoffs {self.cutoffs}")
            idx = idx * n + k
        return idx

    def mode_occupations(self, mode: int) -> np.ndarray:
        """Occupation number of ``mode`` for every flat basis index."""
        self.check_mode(mode)
        occ = np.zeros(1)
        for j, n in enumerate(self.cutoffs):
            col = np.arange(n) if j == mode else np.zeros(n)
            occ = (occ[:, None] + col[None, :]).ravel()
        return occ


def _require_same_space(a: "Operator | StateVector | DensityMatrix",
                        b: "Operator | StateVector | DensityMatrix") -> None:
    if a.space != b.space:
        raise SpaceMismatchError(
            f"objects live on different spaces: {a.space.cutoffs} vs {b.space.cutoffs}"
        )


@dataclass
class Operator:
    """Dense operator on a :class:`FockSpace`."""

    space: FockSpace
    matrix: np.ndarray
    hermitian: bool = field(default=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")
        if self.hermitian:
            dev = np.abs(self.matrix - self.matrix.conj().T).max()
            if dev > HERMITICITY_ATOL * max(1.0, np.abs(self.matrix).max()):
                raise NotHermitianError(f"hermitian-flagged operator deviates by {dev:.3e}")

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, hermitian=self.hermitian)

    def __add__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.matrix + other.matrix,
                        hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.matrix - other.matrix,
                        hermitian=self.hermitian and other.hermitian)

    def __mul__(self, scalar: complex) -> "Operator":
        herm = self.hermitian and float(np.imag(scalar)) == 0.0
        return Operator(self.space, self.matrix * scalar, hermitian=herm)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.matrix @ other.matrix)

    def commutator_norm(self, other: "Operator") -> float:
        """Frobenius norm of [self, other]; cheap conservation check."""
        _require_same_space(self, other)
        c = self.matrix @ other.matrix - other.matrix @ self.matrix
        return float(np.linalg.norm(c))

    def hermiticity_deviation(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def spectral_norm_bound(self) -> float:
        """Upper bound on the spectral norm (exact for Hermitian input)."""
        if self.hermitian:
            return float(np.abs(np.linalg.eigvalsh(self.matrix)).max())
        return float(np.linalg.norm(self.matrix, 2))


@dataclass
class StateVector:
    """Normalized pure state on a :class:`FockSpace`."""

    space: FockSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.shape != (self.space.dim,):
            raise ValueError("amplitude vector length must equal space dimension")
        nrm = np.linalg.norm(self.amplitudes)
        if abs(nrm - 1.0) > NORM_ATOL:
            raise ValueError(f"state norm {nrm} deviates from 1 beyond {NORM_ATOL}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        _require_same_space(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class DensityMatrix:
    """Trace-one positive-semidefinite operator on a :class:`FockSpace`."""

    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_ATOL}")
        herm_dev = np.abs(self.matrix - self.matrix.conj().T).max()
        if herm_dev > HERMITIAN_STATE_ATOL:
            raise ValueError(f"density matrix not Hermitian: deviation {herm_dev:.3e}")

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2).min())

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# ---------------------------------------------------------------------------
# operator builders
# ---------------------------------------------------------------------------

def _single_mode_lowering(n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        a[k - 1, k] = math.sqrt(k)
    return a


def _embed(space: FockSpace, mode: int, local: np.ndarray) -> np.ndarray:
    """Tensor ``local`` on ``mode`` with identities on all other modes."""
    out = np.ones((1, 1), dtype=complex)
    for j, n in enumerate(space.cutoffs):
        factor = local if j == mode else np.eye(n, dtype=complex)
        out = np.kron(out, factor)
    return out


def annihilation(space: FockSpace, mode: int) -> Operator:
    """Lowering operator for ``mode``: <k-1| a |k> = sqrt(k)."""
    space.check_mode(mode)
    return Operator(space, _embed(space, mode, _single_mode_lowering(space.cutoffs[mode])))


def creation(space: FockSpace, mode: int) -> Operator:
    return annihilation(space, mode).dagger()


def number(space: FockSpace, mode: int) -> Operator:
    a = annihilation(space, mode)
    return Operator(space, a.matrix.conj().T @ a.matrix, hermitian=True)


def total_number(space: FockSpace) -> Operator:
    m = sum(number(space, j).matrix for j in range(space.n_modes))
    return Operator(space, m, hermitian=True)


def quad_x(space: FockSpace, mode: int) -> Operator:
    """x = a^dag + a."""
    a = annihilation(space, mode).matrix
    return Operator(space, a.conj().T + a, hermitian=True)


def quad_p(space: FockSpace, mode: int) -> Operator:
    """p = -i (a^dag - a)."""
    a = annihilation(space, mode).matrix
    return Operator(space, -1j * (a.conj().T - a), hermitian=True)


def parity_total(space: FockSpace) -> Operator:
    """Product over modes of exp(i pi a^dag a): diagonal (-1)^(sum_j k_j)."""
    diag = np.ones(1)
    for n in space.cutoffs:
        diag = np.kron(diag, (-1.0) ** np.arange(n))
    return Operator(space, np.diag(diag.astype(complex)), hermitian=True)


def identity(space: FockSpace) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex), hermitian=True)


def zero_operator(space: FockSpace) -> Operator:
    return Operator(space, np.zeros((space.dim, space.dim), dtype=complex), hermitian=True)


def fock_state(space: FockSpace, occupation: tuple[int, ...]) -> StateVector:
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.fock_index(occupation)] = 1.0
    return StateVector(space, amps)


def vacuum_state(space: FockSpace) -> StateVector:
    return fock_state(space, (0,) * space.n_modes)


def coherent_tail_weight(alpha: complex, cutoff: int) -> float:
    """Poisson weight above the cutoff: sum_{k>=N} e^{-|a|^2} |a|^{2k} / k!."""
    mean = abs(alpha) ** 2
    if mean == 0.0:
        return 0.0
    kept = 0.0
    term = math.exp(-mean)
    for k in range(cutoff):
        kept += term
        term *= mean / (k + 1)
    return max(0.0, 1.0 - kept)


def coherent_state(space: FockSpace, mode_amplitudes) -> StateVector:
    """Truncated product coherent state |alpha_0> x ... x |alpha_{K-1}>.

    Each factor carries amplitudes e^{-|a|^2/2} a^k / sqrt(k!), renormalized
    after truncation.  Raises :class:`TruncationError` when the discarded
    Poisson tail of any mode exceeds ``COHERENT_TAIL_ERROR``; warns above
    ``COHERENT_TAIL_WARN``.
    """
    alphas = [complex(a) for a in np.atleast_1d(mode_amplitudes)]
    if len(alphas) != space.n_modes:
        raise ValueError("need one amplitude per mode")
    vec = np.ones(1, dtype=complex)
    for alpha, n in zip(alphas, space.cutoffs):
        tail = coherent_tail_weight(alpha, n)
        if tail > COHERENT_TAIL_ERROR:
            raise TruncationError(
                f"coherent amplitude |alpha|^2={abs(alpha)**2:.3f} loses tail weight "
                f"{tail:.2e} at cutoff {n}"
            )
        if tail > COHERENT_TAIL_WARN:
            warnings.warn(
                f"coherent state tail weight {tail:.2e} above {COHERENT_TAIL_WARN:.0e} "
                f"at cutoff {n}; raise the cutoff for tighter tolerances",
                stacklevel=2,
            )
        ks = np.arange(n)
        log_fact = np.cumsum(np.log(np.maximum(ks, 1)))
        local = np.exp(-abs(alpha) ** 2 / 2) * alpha ** ks / np.exp(log_fact / 2)
        vec = np.kron(vec, local)
    vec = vec / np.linalg.norm(vec)
    return StateVector(space, vec)


def expectation(op: Operator, state: StateVector | DensityMatrix) -> complex:
    """<psi|O|psi> for pure states, Tr(O rho) for density matrices."""
    _require_same_space(op, state)
    if isinstance(state, StateVector):
        val = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    else:
        val = complex(np.trace(op.matrix @ state.matrix))
    if op.hermitian and abs(val.imag) > HERMITIAN_STATE_ATOL * max(1.0, abs(val)):
        raise NotHermitianError(
            f"Hermitian expectation has imaginary part {val.imag:.3e}"
        )
    return val
