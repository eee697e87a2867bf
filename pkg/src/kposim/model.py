"""Hamiltonians and time programs for networks of Kerr parametric oscillators.

The static builders produce the problem Hamiltonian

    H_P = sum_j [ chi_j a_j^dag2 a_j^2 + Delta_j a_j^dag a_j
                  - p_j (a_j^2 + a_j^dag2) + r_j (a_j + a_j^dag) ]
          + sum_{j>j'} [ J_{jj'} a_j^dag a_j' + J*_{jj'} a_j'^dag a_j ]

and the driver Hamiltonian H_D, identical except that every pump term
-p_j (a^2 + a^dag2) is absent.  Consequently

    H_D - H_P = sum_j p_j (a_j^2 + a_j^dag2),

which is the only piece the external drive modulates: the protocol never
oscillates couplings or detunings, only pump amplitudes.

Time programs: the anneal interpolates H(s) = A(s) H_D + (1 - A(s)) H_P with
A(s) = f(s) = 1 - s up to the hold point s1, then freezes A and switches on

    H_ext(s) = lambda * fdot(s1) * cos(omega T (s - s1)) * (H_D - H_P)

for a dwell window of length tau.  fdot is evaluated analytically (= -1 for
the linear ramp); everything internal works in physical time t = s * T.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import fock
from .errors import ConfigError
from .fock import FockSpace, Operator


@dataclass(frozen=True)
class KpoNetworkParams:
    """Physical constants of a KPO network.

    ``chi`` sets the global unit scale (all chi_j > 0); ``coupling`` is the
    Hermitian K x K matrix of exchange couplings with zero diagonal;
    ``gamma`` is the single-photon decay rate shared by all modes.
    """

    chi: tuple[float, ...]
    detuning: tuple[float, ...]
    pump: tuple[float, ...]
    coherent_drive: tuple[float, ...]
    coupling: tuple[tuple[complex, ...], ...] = ()
    gamma: float = 0.0

    def __post_init__(self):
        k = len(self.chi)
        object.__setattr__(self, "chi", tuple(float(c) for c in self.chi))
        object.__setattr__(self, "detuning", tuple(float(d) for d in self.detuning))
        object.__setattr__(self, "pump", tuple(float(p) for p in self.pump))
        object.__setattr__(self, "coherent_drive", tuple(float(r) for r in self.coherent_drive))
        if not (len(self.detuning) == len(self.pump) == len(self.coherent_drive) == k):
            raise ConfigError("chi, detuning, pump, coherent_drive must share length K")
        if any(c <= 0 for c in self.chi):
            raise ConfigError("every chi_j must be positive (it sets the unit scale)")
        if self.gamma < 0:
            raise ConfigError("decay rate gamma must be >= 0")
        cpl = self.coupling if self.coupling else tuple(tuple(0j for _ in range(k)) for _ in range(k))
        mat = np.array([[complex(x) for x in row] for row in cpl])
        if mat.shape != (k, k):
            raise ConfigError(f"coupling matrix must be {k}x{k}")
        if np.abs(np.diag(mat)).max(initial=0.0) > 0:
            raise ConfigError("coupling diagonal must be zero")
        if np.abs(mat - mat.conj().T).max(initial=0.0) > 1e-12:
            raise ConfigError("coupling matrix must be Hermitian")
        object.__setattr__(self, "coupling", tuple(tuple(row) for row in mat))

    @property
    def n_modes(self) -> int:
        return len(self.chi)

    def coupling_matrix(self) -> np.ndarray:
        return np.array([[complex(x) for x in row] for row in self.coupling])


@dataclass(frozen=True)
class ProtocolSchedule:
    """Piecewise time program: linear ramp, hold at s1, drive for tau.

    ``t_ann`` is the total annealing time T; ``s1`` the dimensionless hold
    point; ``tau_max`` the longest dwell; ``omega`` the drive angular
    frequency; ``lam`` the dimensionless drive amplitude.
    """

    t_ann: float
    s1: float
    tau_max: float
    omega: float
    lam: float

    def __post_init__(self):
        if self.t_ann <= 0:
            raise ConfigError("t_ann must be positive")
        if not 0.0 < self.s1 < 1.0:
            raise ConfigError("s1 must lie strictly inside (0, 1)")
        if self.tau_max < 0:
            raise ConfigError("tau_max must be >= 0")
        if self.omega < 0:
            raise ConfigError("omega must be >= 0")

    @staticmethod
    def ramp(s: float) -> float:
        """Annealing schedule f(s) = 1 - s."""
        return 1.0 - s

    #: analytic derivative of the linear ramp (exact, never differenced)
    ramp_rate: float = field(default=-1.0, init=False, repr=False)

    @property
    def t_hold(self) -> float:
        """Physical time at which the ramp freezes."""
        return self.s1 * self.t_ann

    @property
    def drive_end_s(self) -> float:
        return self.s1 + self.tau_max / self.t_ann

    def interpolation_weight(self, s: float) -> float:
        """A(s): follows the ramp to s1, frozen afterwards.

        The hold may extend past s = 1: dwell time does not advance the
        anneal, so only the ramp segment is bounded by the protocol.
        """
        if s < -1e-12:
            raise ConfigError(f"s={s} before the protocol start")
        return self.ramp(min(s, self.s1))

    def drive_amplitude(self, s: float) -> float:
        """lambda(s): exactly ``lam`` on (s1, s1 + tau/T], zero elsewhere."""
        if self.s1 < s <= self.drive_end_s:
            return self.lam
        return 0.0

    def with_omega(self, omega: float) -> "ProtocolSchedule":
        return replace(self, omega=omega)

    def validate_drive_window(self) -> None:
        """The dwell happens at frozen interpolation, so it may extend past
        s = 1; only a degenerate window is rejected."""
        if self.tau_max < 0:
            raise ConfigError("tau_max must be >= 0")


@dataclass
class TimeDependentHamiltonian:
    """Affine time-dependent family H(t) = h_base + g(t) * h_mod.

    Every Hamiltonian in this package (anneal + drive protocol, lab-frame
    two-tone pump, rotating-frame effective form) fits this shape, which the
    propagators exploit.  ``h_d``/``h_p`` keep the constituent pieces when
    the family comes from an annealing protocol; ``generator`` caches
    H_D - H_P.
    """

    space: FockSpace
    h_base: Operator
    h_mod: Operator
    g_fn: Callable[[float], float]
    h_d: Operator | None = None
    h_p: Operator | None = None

    def __post_init__(self):
        if self.h_base.space != self.space or self.h_mod.space != self.space:
            raise ConfigError("Hamiltonian pieces must live on the declared space")

    @property
    def generator(self) -> Operator | None:
        """H_D - H_P when the protocol pieces are known."""
        if self.h_d is None or self.h_p is None:
            return None
        return self.h_d - self.h_p

    def at(self, t: float) -> Operator:
        m = self.h_base.matrix + self.g_fn(t) * self.h_mod.matrix
        return Operator(self.space, m, hermitian=True)

    def norm_bound(self, t0: float, t1: float, samples: int = 32) -> float:
        """Coarse bound on max_t ||H(t)||_2 over [t0, t1]."""
        gs = [abs(self.g_fn(t)) for t in np.linspace(t0, t1, samples)]
        return self.h_base.spectral_norm_bound() + max(gs) * self.h_mod.spectral_norm_bound()


# ---------------------------------------------------------------------------
# static builders
# ---------------------------------------------------------------------------

def _network_common(params: KpoNetworkParams, space: FockSpace) -> np.ndarray:
    """Kerr + detuning + coherent drive + exchange coupling (pump excluded)."""
    if space.n_modes != params.n_modes:
        raise ConfigError("space mode count must match params")
    dim = space.dim
    h = np.zeros((dim, dim), dtype=complex)
    lowering = [fock.annihilation(space, j).matrix for j in range(params.n_modes)]
    for j in range(params.n_modes):
        a = lowering[j]
        ad = a.conj().T
        h += params.chi[j] * (ad @ ad @ a @ a)
        h += params.detuning[j] * (ad @ a)
        h += params.coherent_drive[j] * (a + ad)
    cpl = params.coupling_matrix()
    for j in range(params.n_modes):
        for jp in range(j):
            jc = cpl[j, jp]
            if jc != 0:
                h += jc * lowering[j].conj().T @ lowering[jp]
                h += np.conj(jc) * lowering[jp].conj().T @ lowering[j]
    return h


def pump_operator(params: KpoNetworkParams, space: FockSpace) -> Operator:
    """sum_j p_j (a_j^2 + a_j^dag2) = H_D - H_P."""
    dim = space.dim
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(params.n_modes):
        a = fock.annihilation(space, j).matrix
        h += params.pump[j] * (a @ a + a.conj().T @ a.conj().T)
    return Operator(space, h, hermitian=True)


def build_problem_hamiltonian(params: KpoNetworkParams, space: FockSpace) -> Operator:
    """H_P: full network Hamiltonian including the two-photon pumps."""
    h = _network_common(params, space) - pump_operator(params, space).matrix
    return Operator(space, h, hermitian=True)


def build_driver_hamiltonian(params: KpoNetworkParams, space: FockSpace) -> Operator:
    """H_D: same network with every pump term removed."""
    return Operator(space, _network_common(params, space), hermitian=True)


def qa_hamiltonian_at(params: KpoNetworkParams, schedule: ProtocolSchedule,
                      s: float, space: FockSpace) -> Operator:
    """A(s) H_D + (1 - A(s)) H_P."""
    if not 0.0 <= s <= 1.0:
        raise ConfigError(f"s={s} outside [0, 1]")
    a_s = schedule.interpolation_weight(s)
    hd = build_driver_hamiltonian(params, space)
    hp = build_problem_hamiltonian(params, space)
    return Operator(space, a_s * hd.matrix + (1 - a_s) * hp.matrix, hermitian=True)


def drive_hamiltonian_at(params: KpoNetworkParams, schedule: ProtocolSchedule,
                         s: float, space: FockSpace) -> Operator:
    """lambda(s) * fdot(s1) * cos(omega T (s - s1)) * (H_D - H_P).

    With the linear ramp this is -lambda cos(...) sum_j p_j (a_j^2 + a_j^dag2):
    only pump amplitudes oscillate.  Zero outside the dwell window.
    """
    lam = schedule.drive_amplitude(s)
    if lam == 0.0:
        return fock.zero_operator(space)
    phase = np.cos(schedule.omega * schedule.t_ann * (s - schedule.s1))
    coeff = lam * schedule.ramp_rate * phase
    return coeff * pump_operator(params, space)


def protocol_hamiltonian(params: KpoNetworkParams, schedule: ProtocolSchedule,
                         space: FockSpace) -> TimeDependentHamiltonian:
    """The full protocol H(t) = H_QA(s) + H_ext(s), s = t / T.

    Written in affine form H(t) = H_P + g(t) (H_D - H_P) with
    g(t) = A(s) + lambda(s) * fdot * cos(omega (t - t1)).
    """
    schedule.validate_drive_window()
    hd = build_driver_hamiltonian(params, space)
    hp = build_problem_hamiltonian(params, space)
    t_ann = schedule.t_ann
    t1 = schedule.t_hold

    def g(t: float) -> float:
        s = t / t_ann
        val = schedule.interpolation_weight(s)
        lam = schedule.drive_amplitude(s)
        if lam != 0.0:
            val += lam * schedule.ramp_rate * np.cos(schedule.omega * (t - t1))
        return val

    return TimeDependentHamiltonian(space, h_base=hp, h_mod=hd - hp, g_fn=g,
                                    h_d=hd, h_p=hp)


def lindblad_ops(params: KpoNetworkParams, space: FockSpace) -> list[Operator]:
    """One decay operator sqrt(gamma) a_j per mode."""
    if params.gamma < 0:
        raise ConfigError("gamma must be >= 0")
    root = np.sqrt(params.gamma)
    return [root * fock.annihilation(space, j) for j in range(space.n_modes)]


# ---------------------------------------------------------------------------
# lab-frame single-KPO Hamiltonian (two-tone pump)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabFrameParams:
    """Single-KPO lab-frame constants: resonator frequency ``omega_lab``,
    Kerr ``chi``, static-pump tone amplitude ``pump`` at frequency
    ``omega_pump``, and a pair of extra tones of amplitude ``pump_mod`` at
    ``omega_pump +- delta``."""

    omega_lab: float
    chi: float
    pump: float
    pump_mod: float
    omega_pump: float
    delta: float


def build_labframe_hamiltonian(lab: LabFrameParams, space: FockSpace) -> TimeDependentHamiltonian:
    """H(t) = w a^dag a + chi (a^dag a)^2
              + p' (a^2 + a^dag2) [cos((w'+d) t) + cos((w'-d) t)]
              + 2 p (a^2 + a^dag2) cos(w' t).

    Note the (a^dag a)^2 Kerr form: it differs from chi a^dag2 a^2 by a
    chi * n relabelling of the detuning, and is kept verbatim so the
    rotating-frame comparison stays term-for-term.
    """
    if space.n_modes != 1:
        raise ConfigError("lab-frame builder is single-mode")
    a = fock.annihilation(space, 0).matrix
    n = a.conj().T @ a
    base = Operator(space, lab.omega_lab * n + lab.chi * (n @ n), hermitian=True)
    mod = Operator(space, a @ a + a.conj().T @ a.conj().T, hermitian=True)

    def g(t: float) -> float:
        return (lab.pump_mod * (np.cos((lab.omega_pump + lab.delta) * t)
                                + np.cos((lab.omega_pump - lab.delta) * t))
                + 2 * lab.pump * np.cos(lab.omega_pump * t))

    return TimeDependentHamiltonian(space, h_base=base, h_mod=mod, g_fn=g)


def build_rotating_effective_hamiltonian(lab: LabFrameParams, space: FockSpace) -> TimeDependentHamiltonian:
    """Co-rotating approximation of the lab-frame Hamiltonian.

    In the frame U = exp(i (w'/2) t a^dag a) the surviving slow terms are

        (w - w'/2) a^dag a + chi (a^dag a)^2
        + p (a^2 + a^dag2) + p' (a^2 + a^dag2) cos(d t).

    The detuning is w - w'/2 because a^2 rotates at w' in this frame, which
    is what makes all three pump tones slow.
    """
    if space.n_modes != 1:
        raise ConfigError("rotating-frame builder is single-mode")
    a = fock.annihilation(space, 0).matrix
    n = a.conj().T @ a
    pumpm = a @ a + a.conj().T @ a.conj().T
    base = Operator(space,
                    (lab.omega_lab - lab.omega_pump / 2) * n + lab.chi * (n @ n)
                    + lab.pump * pumpm,
                    hermitian=True)
    mod = Operator(space, pumpm, hermitian=True)

    def g(t: float) -> float:
        return lab.pump_mod * np.cos(lab.delta * t)

    return TimeDependentHamiltonian(space, h_base=base, h_mod=mod, g_fn=g)
