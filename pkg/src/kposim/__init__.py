"""Simulation and spectroscopy toolkit for quantum annealing on networks of
Kerr parametric oscillators."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    InconclusiveEstimateError,
    IntegrationError,
    KposimError,
    NotHermitianError,
    SingularTwoPhotonError,
    SpaceMismatchError,
    TruncationError,
    VanishingGapError,
)
from .fock import (
    DensityMatrix,
    FockSpace,
    Operator,
    StateVector,
    annihilation,
    coherent_state,
    creation,
    expectation,
    fock_state,
    number,
    parity_total,
    quad_p,
    quad_x,
    total_number,
    vacuum_state,
)
from .model import (
    KpoNetworkParams,
    LabFrameParams,
    ProtocolSchedule,
    TimeDependentHamiltonian,
    build_driver_hamiltonian,
    build_labframe_hamiltonian,
    build_problem_hamiltonian,
    drive_hamiltonian_at,
    lindblad_ops,
    protocol_hamiltonian,
    qa_hamiltonian_at,
)
from .dynamics import (
    IntegratorConfig,
    Trajectory,
    evolve_density,
    evolve_recording,
    evolve_state,
    expectation_series,
)
from .oracle import (
    AdiabaticMetric,
    EigenSystem,
    MagnusLine,
    adiabatic_metric_exact,
    eigensystem,
    parity_sector_labels,
    protocol_ground_index,
    rabi_frequency_analytic,
    rabi_frequency_excited_pair,
    rwa_equivalence_check,
    suggest_target_level,
    two_photon_rabi,
    visibility_check,
)
from .spectroscopy import (
    AdiabaticEstimate,
    SignalGrid,
    Spectrum,
    estimate_condition,
    extract_rabi,
    power_spectrum,
    run_point,
    sweep,
)
