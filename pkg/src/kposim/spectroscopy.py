"""Pump-modulation Rabi spectroscopy: protocol runs, sweeps, spectra,
dispersion extraction and the adiabatic-condition estimate.

A single protocol point prepares the driver ground state, ramps the
interpolation to the hold point s1, freezes it, switches on the pump
modulation at frequency omega for a dwell tau and records the observable at
switch-off.  Sweeping (omega, tau) yields the signal surface; per-omega
discrete Fourier transforms locate the oscillation frequency Omega_exp;
its minimum over omega estimates the transition element and the gap, and
from those the adiabatic-condition value

    value_est = (min_omega Omega_exp / lambda) / (argmin_omega Omega_exp)^2.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import fock, model, oracle
from .dynamics import IntegratorConfig, Trajectory, evolve_density, evolve_state
from .errors import ConfigError, InconclusiveEstimateError
from .fock import FockSpace, Operator, StateVector
from .model import KpoNetworkParams, ProtocolSchedule

#: ground-state preparation: accept the vacuum when it is an eigenstate of
#: the driver within this residual and degenerate with the ground level
VACUUM_RESIDUAL_ATOL = 1e-9


@dataclass
class SignalGrid:
    """Measured observable surface <O>(omega, tau) at fixed s1."""

    omega_grid: np.ndarray
    tau_grid: np.ndarray
    values: np.ndarray           # shape (n_omega, n_tau)
    s1: float
    observable: str
    open_system: bool

    def __post_init__(self):
        self.omega_grid = np.asarray(self.omega_grid, dtype=float)
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.omega_grid), len(self.tau_grid)):
            raise ConfigError("signal matrix shape must match the grids")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("signal contains non-finite values")
        if np.any(np.diff(self.omega_grid) <= 0) or np.any(np.diff(self.tau_grid) <= 0):
            raise ConfigError("grids must be strictly ascending")


@dataclass
class Spectrum:
    """Per-omega magnitude of the Fourier transform of the dwell signal."""

    omega_grid: np.ndarray
    bin_grid: np.ndarray         # positive DFT frequencies (angular)
    power: np.ndarray            # shape (n_omega, n_bins), >= 0
    window: str
    mean_subtracted: bool

    @property
    def bin_width(self) -> float:
        return float(self.bin_grid[1] - self.bin_grid[0])


@dataclass(frozen=True)
class AdiabaticEstimate:
    numerator_est: float
    gap_est: float
    value_est: float
    min_frequency: float        # min_omega Omega_exp, before dividing by lambda
    lam: float


def _observable(space: FockSpace, kind: str, mode: int | None) -> Operator:
    if kind == "n":
        return fock.number(space, mode) if mode is not None else fock.total_number(space)
    if kind == "x":
        if mode is None:
            raise ConfigError("quadrature observables need a mode index")
        return fock.quad_x(space, mode)
    if kind == "p":
        if mode is None:
            raise ConfigError("quadrature observables need a mode index")
        return fock.quad_p(space, mode)
    if kind == "parity":
        return fock.parity_total(space)
    raise ConfigError(f"unknown observable kind {kind!r}")


def observable_operator(space: FockSpace, selector: str) -> Operator:
    """Parse an observable selector like ``n1``, ``x2``, ``n_total``, ``parity``."""
    sel = selector.strip().lower()
    if sel in ("n_total", "ntotal", "n"):
        return _observable(space, "n", None)
    if sel == "parity":
        return _observable(space, "parity", None)
    kind, digits = sel[0], sel[1:]
    if kind in ("n", "x", "p") and digits.isdigit():
        mode = int(digits) - 1
        space.check_mode(mode)
        return _observable(space, kind, mode)
    raise ConfigError(f"cannot parse observable selector {selector!r}")


def prepare_initial_state(params: KpoNetworkParams, space: FockSpace) -> StateVector:
    """Ground state of the driver Hamiltonian.

    The vacuum is used directly whenever it is a driver eigenstate at the
    ground energy (detuned, drive-free networks), which also pins the
    physically prepared member of a degenerate ground pair.  Otherwise the
    diagonalized ground state is returned.
    """
    hd = model.build_driver_hamiltonian(params, space)
    vac = fock.vacuum_state(space)
    hv = hd.matrix @ vac.amplitudes
    e_vac = float(np.real(np.vdot(vac.amplitudes, hv)))
    scale = max(1.0, float(np.abs(hd.matrix).max()))
    residual = float(np.linalg.norm(hv - e_vac * vac.amplitudes))
    sys = oracle.eigensystem(hd)
    if residual <= VACUUM_RESIDUAL_ATOL * scale and \
            e_vac <= float(sys.energies[0]) + 1e-9 * scale:
        return vac
    return sys.state(0)


def _dwell_hamiltonian(params: KpoNetworkParams, schedule: ProtocolSchedule,
                       space: FockSpace) -> model.TimeDependentHamiltonian:
    """Frozen interpolation plus pump modulation, parameterized by absolute t."""
    hd = model.build_driver_hamiltonian(params, space)
    hp = model.build_problem_hamiltonian(params, space)
    a1 = schedule.interpolation_weight(schedule.s1)
    t1 = schedule.t_hold
    lam = schedule.lam
    omega = schedule.omega
    rate = schedule.ramp_rate

    def g(t: float) -> float:
        return a1 + lam * rate * np.cos(omega * (t - t1))

    return model.TimeDependentHamiltonian(space, h_base=hp, h_mod=hd - hp, g_fn=g,
                                          h_d=hd, h_p=hp)


def _ramp_hamiltonian(params: KpoNetworkParams, schedule: ProtocolSchedule,
                      space: FockSpace) -> model.TimeDependentHamiltonian:
    hd = model.build_driver_hamiltonian(params, space)
    hp = model.build_problem_hamiltonian(params, space)
    t_ann = schedule.t_ann

    def g(t: float) -> float:
        return schedule.ramp(min(t / t_ann, schedule.s1))

    return model.TimeDependentHamiltonian(space, h_base=hp, h_mod=hd - hp, g_fn=g,
                                          h_d=hd, h_p=hp)


def ramp_to_hold(params: KpoNetworkParams, schedule: ProtocolSchedule,
                 space: FockSpace, open_system: bool,
                 cfg: IntegratorConfig) -> StateVector | fock.DensityMatrix:
    """Stage shared by every sweep point: vacuum-side preparation and the
    adiabatic ramp to the hold point."""
    psi0 = prepare_initial_state(params, space)
    h_ramp = _ramp_hamiltonian(params, schedule, space)
    t1 = schedule.t_hold
    if open_system:
        traj = evolve_density(h_ramp, model.lindblad_ops(params, space),
                              psi0.to_density(), 0.0, t1, cfg)
    else:
        traj = evolve_state(h_ramp, psi0, 0.0, t1, cfg)
    return traj.final()


def dwell_series(params: KpoNetworkParams, schedule: ProtocolSchedule,
                 space: FockSpace, omega: float, tau_grid: np.ndarray,
                 obs: Operator, open_system: bool, cfg: IntegratorConfig,
                 state_at_hold=None) -> np.ndarray:
    """<O> at every dwell time in ``tau_grid`` for one drive frequency.

    Measuring at dwell tau means switching the drive off at tau and reading
    the observable immediately; since the readout is an instantaneous
    expectation, all tau points lie on one continuously recorded trajectory.
    """
    sched = schedule.with_omega(omega)
    sched.validate_drive_window()
    if state_at_hold is None:
        state_at_hold = ramp_to_hold(params, sched, space, open_system, cfg)
    h_dwell = _dwell_hamiltonian(params, sched, space)
    t1 = sched.t_hold
    tau_grid = np.asarray(tau_grid, dtype=float)
    l_ops = model.lindblad_ops(params, space) if open_system else None
    from .dynamics import evolve_recording

    return evolve_recording(h_dwell, state_at_hold, t1 + tau_grid, obs, cfg,
                            l_ops=l_ops, t0=t1, drive_omega=omega)


def run_point(params: KpoNetworkParams, schedule: ProtocolSchedule,
              space: FockSpace, omega: float, tau: float, observable: str,
              open_system: bool = False,
              cfg: IntegratorConfig = IntegratorConfig()) -> float:
    """One protocol point: <O> at drive switch-off after a dwell of tau."""
    sched = replace(schedule, omega=omega, tau_max=tau)
    sched.validate_drive_window()
    obs = observable_operator(space, observable)
    series = dwell_series(params, sched, space, omega, np.asarray([tau]), obs,
                          open_system, cfg)
    return float(series[-1])


_WORKER_STATE: dict = {}


def _sweep_worker_init(params, schedule, cutoffs, observable, open_system, cfg, hold_state_payload):
    # keep BLAS single-threaded inside workers; parallelism lives at the
    # omega-point level
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    space = FockSpace(cutoffs)
    _WORKER_STATE["args"] = (params, schedule, space,
                             observable_operator(space, observable),
                             open_system, cfg)
    kind, payload = hold_state_payload
    if kind == "pure":
        _WORKER_STATE["hold"] = StateVector(space, payload)
    else:
        _WORKER_STATE["hold"] = fock.DensityMatrix(space, payload)


def _sweep_worker_run(job):
    omega, tau_grid = job
    params, schedule, space, obs, open_system, cfg = _WORKER_STATE["args"]
    hold = _WORKER_STATE["hold"]
    if isinstance(hold, StateVector):
        hold = StateVector(space, hold.amplitudes.copy())
    else:
        hold = fock.DensityMatrix(space, hold.matrix.copy())
    return dwell_series(params, schedule, space, omega, tau_grid, obs,
                        open_system, cfg, state_at_hold=hold)


def sweep(params: KpoNetworkParams, schedule: ProtocolSchedule, space: FockSpace,
          omega_grid, tau_grid, observable: str, open_system: bool = False,
          cfg: IntegratorConfig = IntegratorConfig(), n_workers: int = 1) -> SignalGrid:
    """Signal surface over (omega, tau).

    The ramp to the hold point is drive-free, hence shared by every omega
    point and computed once.  Each omega is one dwell propagation recorded
    at all tau samples; points are distributed over processes and written to
    disjoint rows, so results do not depend on scheduling order.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if len(omega_grid) == 0 or len(tau_grid) == 0:
        raise ConfigError("sweep grids must be nonempty")
    sched_max = replace(schedule, tau_max=float(tau_grid[-1]))
    sched_max.validate_drive_window()
    obs = observable_operator(space, observable)
    hold = ramp_to_hold(params, sched_max, space, open_system, cfg)
    values = np.empty((len(omega_grid), len(tau_grid)))
    jobs = [(float(om), tau_grid) for om in omega_grid]
    if n_workers <= 1 or len(omega_grid) == 1:
        for i, job in enumerate(jobs):
            hold_copy = (StateVector(space, hold.amplitudes.copy())
                         if isinstance(hold, StateVector)
                         else fock.DensityMatrix(space, hold.matrix.copy()))
            values[i] = dwell_series(params, sched_max, space, job[0], tau_grid,
                                     obs, open_system, cfg, state_at_hold=hold_copy)
    else:
        payload = (("pure", hold.amplitudes) if isinstance(hold, StateVector)
                   else ("density", hold.matrix))
        failures: list[tuple[int, str]] = []
        with ProcessPoolExecutor(
                max_workers=n_workers,
                initializer=_sweep_worker_init,
                initargs=(params, sched_max, space.cutoffs, observable,
                          open_system, cfg, payload)) as pool:
            futures = [pool.submit(_sweep_worker_run, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    values[i] = fut.result()
                except Exception as exc:  # aggregate, do not lose the indices
                    failures.append((i, repr(exc)))
        if failures:
            raise ConfigError(f"sweep failed at omega indices {failures}")
    return SignalGrid(omega_grid, tau_grid, values, s1=schedule.s1,
                      observable=observable, open_system=open_system)


def power_spectrum(grid: SignalGrid, window: str = "hann",
                   mean_subtract: bool = True, pad_factor: int = 1) -> Spectrum:
    """Per-omega magnitude of the discrete Fourier transform over tau.

    Mean subtraction removes the static peak at zero frequency; the Hann
    window suppresses leakage from finite records.  Both are switchable.
    The tau grid must be uniform.
    """
    tau = grid.tau_grid
    steps = np.diff(tau)
    if np.abs(steps - steps[0]).max() > 1e-9 * steps[0]:
        raise ConfigError("power spectrum needs a uniform tau grid")
    dtau = float(steps[0])
    n = len(tau)
    if window == "hann":
        win = np.hanning(n)
    elif window in ("none", "rect", "boxcar"):
        win = np.ones(n)
    else:
        raise ConfigError(f"unknown window {window!r}")
    data = grid.values.copy()
    if mean_subtract:
        data = data - data.mean(axis=1, keepdims=True)
    data = data * win[None, :]
    n_pad = n * max(1, int(pad_factor))
    amp = np.abs(np.fft.rfft(data, n=n_pad, axis=1))
    freqs = 2 * np.pi * np.fft.rfftfreq(n_pad, d=dtau)
    return Spectrum(grid.omega_grid, freqs, amp, window=window,
                    mean_subtracted=mean_subtract)


def _refine_peak(freqs: np.ndarray, power: np.ndarray, idx: int) -> float:
    """Quadratic three-point interpolation of a peak location."""
    if idx <= 0 or idx >= len(freqs) - 1:
        return float(freqs[idx])
    y0, y1, y2 = power[idx - 1], power[idx], power[idx + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(freqs[idx])
    shift = 0.5 * (y0 - y2) / denom
    shift = float(np.clip(shift, -0.5, 0.5))
    return float(freqs[idx] + shift * (freqs[1] - freqs[0]))


def extract_rabi(spec: Spectrum, band_centers=None, band_halfwidth_bins: float = 5.0) -> np.ndarray:
    """Per-omega location of the dominant positive-frequency peak.

    When ``band_centers`` (one predicted frequency per omega) is given, the
    search is restricted to a band of ``band_halfwidth_bins`` DFT bins
    around the prediction, which rejects unrelated spectral lines.  The
    returned locations are refined by three-point quadratic interpolation.
    """
    n_omega, _ = spec.power.shape
    out = np.empty(n_omega)
    freqs = spec.bin_grid
    width = band_halfwidth_bins * spec.bin_width
    for i in range(n_omega):
        mask = freqs > 0
        if band_centers is not None:
            mask &= np.abs(freqs - float(band_centers[i])) <= width
            if not mask.any():
                raise ConfigError(
                    f"empty search band around {band_centers[i]:.4f} rad/time"
                )
        cand = np.where(mask)[0]
        best = cand[np.argmax(spec.power[i, cand])]
        out[i] = _refine_peak(freqs, spec.power[i], int(best))
    return out


def estimate_condition(omega_grid, rabi_freqs, lam: float,
                       exact: oracle.AdiabaticMetric | None = None) -> AdiabaticEstimate:
    """Invert the dispersion minimum into the adiabatic-condition value.

    The gap estimate is the argmin of the extracted dispersion, refined by
    a parabola through the minimum and its neighbours; the minimum value
    over lambda estimates the transition element.  A minimum on the sweep
    boundary means the swept range missed the resonance and is reported as
    inconclusive rather than extrapolated.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    freqs = np.asarray(rabi_freqs, dtype=float)
    if len(omega_grid) != len(freqs) or len(freqs) < 3:
        raise ConfigError("need matching grids with at least 3 points")
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    i_min = int(np.argmin(freqs))
    if i_min == 0 or i_min == len(freqs) - 1:
        raise InconclusiveEstimateError(
            "dispersion minimum sits on the sweep boundary; widen the omega range"
        )
    x0, x1, x2 = omega_grid[i_min - 1:i_min + 2]
    y0, y1, y2 = freqs[i_min - 1:i_min + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
    if a > 0:
        gap_est = float(-b / (2 * a))
        gap_est = float(np.clip(gap_est, x0, x2))
        c = y1 - a * x1 ** 2 - b * x1
        min_freq = float(max(a * gap_est ** 2 + b * gap_est + c, 0.0))
    else:
        gap_est = float(omega_grid[i_min])
        min_freq = float(freqs[i_min])
    numerator_est = min_freq / lam
    if gap_est <= 0:
        raise InconclusiveEstimateError("refined gap estimate is not positive")
    return AdiabaticEstimate(numerator_est=numerator_est, gap_est=gap_est,
                             value_est=numerator_est / gap_est ** 2,
                             min_frequency=min_freq, lam=lam)
