"""Canonical experiment presets: reference systems, dataset generators, and
the model initializations that go with them.

Three benchmark families are provided.

* An undriven two-level system relaxing into an isothermal bath, with a
  Lindblad counterpart generated on the same grid (useful to show the
  nonlinear surrogate can also absorb linear dynamics).
* A resonantly driven qutrit in the rotating frame, excited by a two-quadrature
  pulse family parametrized by the amplitude pair (Omega_01, Omega_12), with
  randomized pulses for generalization tests.
* A driven two-level "data protocol" that mirrors working with measured
  tomography trajectories: a single constant-drive trajectory, optionally
  noised and clamped, trained in continuation increments.

Frequencies are angular; the time unit is whatever the preset's frequencies
imply (dimensionless for the undriven two-level family, microseconds for the
driven presets).
"""

import numpy as np

from .basis import structure_constants, to_bloch
from .datasets import ConfusionMatrix, TrajectoryDataset, TrajectoryRecord, add_noise
from .dynamics import (
    ControlSpec,
    CouplingSpec,
    IntegratorConfig,
    SystemSpec,
    annihilation_operator,
    build_driven_system,
    hermitian_to_coeffs,
    integrate,
    integrate_system,
    rhs_lindblad,
)
from .errors import ConfigError
from .model import ControlEncoding, LearnableModel, init_model, lower_triangular_factor

__all__ = [
    "TWO_LEVEL_OMEGA",
    "TWO_LEVEL_GAMMA1",
    "TWO_LEVEL_KT",
    "QUTRIT_KT",
    "CONTROL_BOUNDS",
    "DATA_PULSE",
    "DATA_T_FINAL",
    "DATA_N_INTERVALS",
    "two_level_truth",
    "uniform_bloch_sphere",
    "gen_two_level",
    "gen_two_level_lindblad",
    "qutrit_coupling",
    "qutrit_control",
    "qutrit_truth",
    "qutrit_ground_bloch",
    "training_amplitudes",
    "gen_qutrit",
    "random_control_set",
    "drive_encoding",
    "reference_confusion_matrix",
    "two_level_drive_truth",
    "gen_data_protocol",
    "initial_two_level_model",
    "initial_qutrit_model",
    "initial_data_model",
    "simulate_truth_controls",
]

_TWO_PI = 2.0 * np.pi

# Undriven two-level benchmark (dimensionless units).
TWO_LEVEL_OMEGA = 1.5
TWO_LEVEL_GAMMA1 = 0.0785
TWO_LEVEL_KT = 0.65

# Driven qutrit benchmark (angular frequencies in rad/us).
QUTRIT_OMEGA = _TWO_PI * 344.8
QUTRIT_XI = _TWO_PI * 3.48
QUTRIT_KT = 1310.0
QUTRIT_AMP_BASE = _TWO_PI * 0.0625
QUTRIT_AMP_OFFSET = -0.1
CONTROL_BOUNDS = (_TWO_PI * 0.0625, _TWO_PI * 0.5)

# Constant-drive data protocol (two-level, rad/us).
DATA_OMEGA = TWO_LEVEL_OMEGA
DATA_PULSE = _TWO_PI * 0.0181 * 47.9
DATA_T_FINAL = 14.98
DATA_N_INTERVALS = 750


def two_level_truth(omega: float = TWO_LEVEL_OMEGA, gamma1: float = TWO_LEVEL_GAMMA1, kT: float = TWO_LEVEL_KT) -> SystemSpec:
    """Undriven two-level reference: drift omega sigma_3/2, transverse decay coupling."""
    x = np.sqrt(gamma1 / 2.0) * np.diag([1.0, 1.0, 0.0])
    return SystemSpec(n_levels=2, h=np.array([0.0, 0.0, omega]), coupling=CouplingSpec(x_cols=x), kT=kT)


def uniform_bloch_sphere(count: int, seed: int) -> np.ndarray:
    """Unit Bloch vectors drawn uniformly on the sphere (normalized Gaussians)."""
    rng = np.random.default_rng(seed)
    out = rng.normal(size=(count, 3))
    norms = np.linalg.norm(out, axis=1)
    while np.any(norms < 1e-12):  # pragma: no cover - vanishing probability
        bad = norms < 1e-12
        out[bad] = rng.normal(size=(int(bad.sum()), 3))
        norms = np.linalg.norm(out, axis=1)
    return out / norms[:, None]


def _sample_grid(t_max: float, dt: float) -> np.ndarray:
    n_steps = int(round(t_max / dt))
    return dt * np.arange(n_steps + 1)


def _two_level_records(trajectories, times, provenance, n_train, meta=None):
    records = []
    for k, states in enumerate(trajectories):
        records.append(
            TrajectoryRecord(
                record_id=f"{k:04d}",
                n_levels=2,
                times=times,
                states=states,
                provenance=provenance,
                role="train" if k < n_train else "test",
                meta=meta or {},
            )
        )
    return records


def gen_two_level(
    n_train: int = 12,
    n_test: int = 188,
    seed: int = 0,
    t_max: float = 60.0,
    dt: float = 0.1,
    integrator: IntegratorConfig = None,
) -> TrajectoryDataset:
    """Relaxation trajectories of the two-level truth from uniformly random pure states."""
    sys = two_level_truth()
    times = _sample_grid(t_max, dt)
    starts = uniform_bloch_sphere(n_train + n_test, seed)
    trajs = [integrate_system(sys, v0, times, integrator) for v0 in starts]
    metadata = {
        "experiment": "two-level",
        "omega": TWO_LEVEL_OMEGA,
        "gamma1": TWO_LEVEL_GAMMA1,
        "kT": TWO_LEVEL_KT,
        "t_max": t_max,
        "dt": dt,
        "seed": seed,
        "n_train": n_train,
        "n_test": n_test,
    }
    return TrajectoryDataset(2, _two_level_records(trajs, times, "synthetic-nonlinear", n_train), metadata)


def gen_two_level_lindblad(
    n_train: int = 12,
    n_test: int = 188,
    seed: int = 0,
    t_max: float = 60.0,
    dt: float = 0.1,
    integrator: IntegratorConfig = None,
) -> TrajectoryDataset:
    """Same grid and initial conditions, but evolved under the GKLS decay channel.

    The jump operator lowers the sigma_3 = +1 level into the sigma_3 = -1
    ground state, so every trajectory relaxes to the pure south pole instead
    of the interior thermal state of the nonlinear family.
    """
    sc = structure_constants(2)
    h_mat = 0.5 * TWO_LEVEL_OMEGA * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    lower = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
    channels = [(TWO_LEVEL_GAMMA1, lower)]
    times = _sample_grid(t_max, dt)
    starts = uniform_bloch_sphere(n_train + n_test, seed)
    rhs = lambda v, t: rhs_lindblad(v, h_mat, channels, sc)
    trajs = [integrate(rhs, v0, times, integrator) for v0 in starts]
    metadata = {
        "experiment": "two-level-lindblad",
        "omega": TWO_LEVEL_OMEGA,
        "gamma1": TWO_LEVEL_GAMMA1,
        "t_max": t_max,
        "dt": dt,
        "seed": seed,
        "n_train": n_train,
        "n_test": n_test,
    }
    return TrajectoryDataset(2, _two_level_records(trajs, times, "synthetic-lindblad", n_train), metadata)


def qutrit_coupling() -> CouplingSpec:
    """Three decoherence channels of the qutrit benchmark (relaxation + dephasing)."""
    x = np.zeros((8, 3))
    x[0, 0], x[2, 0] = 0.044, 0.07
    x[3, 1], x[5, 1] = 0.044, 0.07
    x[6, 2], x[7, 2] = -0.16, -0.3
    return CouplingSpec(x_cols=x)


def qutrit_control(amps) -> ControlSpec:
    """Resonant rotating-frame control with the standard qutrit frequencies.

    ``amps`` holds (Omega_01^p, Omega_12^p, Omega_01^q, Omega_12^q) in rad/us.
    """
    amps = np.asarray(amps, dtype=float)
    return ControlSpec(
        omega=QUTRIT_OMEGA,
        xi=QUTRIT_XI,
        omega_d=QUTRIT_OMEGA,
        amp_p=(amps[0], amps[1]),
        amp_q=(amps[2], amps[3]),
    )


def qutrit_truth(amps=None, kT: float = QUTRIT_KT) -> SystemSpec:
    """Driven qutrit reference system for one pulse-amplitude setting."""
    if amps is None:
        amps = training_amplitudes()[0]
    return build_driven_system(qutrit_control(amps), qutrit_coupling(), kT=kT, n_levels=3)


def qutrit_ground_bloch() -> np.ndarray:
    sc = structure_constants(3)
    rho0 = np.zeros((3, 3), dtype=complex)
    rho0[0, 0] = 1.0
    return to_bloch(rho0, sc)


def _amp_row(omega01: float) -> np.ndarray:
    omega12 = omega01 + QUTRIT_AMP_OFFSET
    return np.array([omega01, omega12, omega01, omega12])


def training_amplitudes() -> np.ndarray:
    """The four training pulse settings: Omega_01 doubling from the base amplitude."""
    return np.stack([_amp_row(QUTRIT_AMP_BASE * 2.0**n) for n in range(4)])


def random_control_set(n: int, bounds=CONTROL_BOUNDS, seed: int = 0) -> np.ndarray:
    """n iid pulse settings with Omega_01 uniform on [bounds[0], bounds[1]]."""
    lo, hi = bounds
    if not lo < hi:
        raise ConfigError(f"control bounds must satisfy lo < hi, got {bounds}")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, 4))
    return np.stack([_amp_row(om) for om in rng.uniform(lo, hi, size=n)])


def gen_qutrit(
    amplitudes=None,
    t_max: float = 12.0,
    dt: float = 0.1,
    seed: int = 0,
    integrator: IntegratorConfig = None,
) -> TrajectoryDataset:
    """Driven-qutrit trajectories from the ground state, one record per pulse setting."""
    amplitudes = training_amplitudes() if amplitudes is None else np.atleast_2d(amplitudes)
    times = _sample_grid(t_max, dt)
    v0 = qutrit_ground_bloch()
    records = []
    for k, amps in enumerate(amplitudes):
        sys = qutrit_truth(amps)
        states = integrate_system(sys, v0, times, integrator)
        records.append(
            TrajectoryRecord(
                record_id=f"{k:04d}",
                n_levels=3,
                times=times,
                states=states,
                provenance="synthetic-nonlinear",
                role="train",
                amps=amps,
            )
        )
    metadata = {
        "experiment": "qutrit",
        "omega": QUTRIT_OMEGA,
        "xi": QUTRIT_XI,
        "kT": QUTRIT_KT,
        "t_max": t_max,
        "dt": dt,
        "seed": seed,
    }
    return TrajectoryDataset(3, records, metadata)


def drive_encoding(n_levels: int, xi: float) -> ControlEncoding:
    """Bloch encoding of the two drive quadratures a + a^dag and i(a - a^dag)."""
    sc = structure_constants(n_levels)
    a = annihilation_operator(n_levels)
    _, u_p = hermitian_to_coeffs(a + a.conj().T, sc)
    _, u_q = hermitian_to_coeffs(1j * (a - a.conj().T), sc)
    return ControlEncoding(u_p=u_p, u_q=u_q, xi=xi)


def reference_confusion_matrix():
    """Measured three-state readout calibration table used by the ingestion demos.

    Rows index the prepared state, columns the classified label; rows sum to 1
    up to the rounding of the published calibration.
    """
    return ConfusionMatrix(
        np.array(
            [
                [0.988875, 0.010875, 0.00025],
                [0.054875, 0.936375, 0.00875],
                [0.016750, 0.042625, 0.940630],
            ]
        )
    )


def two_level_drive_truth(p: float = DATA_PULSE, q: float = DATA_PULSE, kT: float = TWO_LEVEL_KT) -> SystemSpec:
    """Constant-resonant-drive two-level system used by the data protocol.

    The rotating frame at resonance removes the drift from the unitary part;
    the dissipative part keeps the lab-frame level splitting via the frame
    shift.
    """
    if not (np.isfinite(p) and np.isfinite(q)):
        raise ConfigError(f"pulse amplitudes must be finite, got p={p}, q={q}")
    ctrl = ControlSpec(omega=DATA_OMEGA, xi=0.0, omega_d=DATA_OMEGA, amp_p=(p, 0.0), amp_q=(q, 0.0))
    x = np.sqrt(TWO_LEVEL_GAMMA1 / 2.0) * np.diag([1.0, 1.0, 0.0])
    return build_driven_system(ctrl, CouplingSpec(x_cols=x), kT=kT, n_levels=2)


def gen_data_protocol(
    p: float = DATA_PULSE,
    q: float = DATA_PULSE,
    sigma: float = 0.1,
    seed: int = 0,
    t_max: float = DATA_T_FINAL,
    n_intervals: int = DATA_N_INTERVALS,
    integrator: IntegratorConfig = None,
) -> TrajectoryDataset:
    """Single constant-drive trajectory from the ground state, noised and clamped.

    Stands in for measured tomography data when no device trace is available:
    same drive protocol, same sampling cadence, Gaussian component noise of
    width sigma clamped to [-1, 1].
    """
    sys = two_level_drive_truth(p, q)
    times = t_max / n_intervals * np.arange(n_intervals + 1)
    v0 = np.array([0.0, 0.0, 1.0])  # ground state of the oscillator convention
    states = integrate_system(sys, v0, times, integrator)
    record = TrajectoryRecord(
        record_id="0000",
        n_levels=2,
        times=times,
        states=states,
        provenance="synthetic-nonlinear",
        role="train",
        amps=np.array([p, 0.0, q, 0.0]),
        meta={"protocol": "constant-drive tomography substitute"},
    )
    metadata = {
        "experiment": "experimental",
        "p": p,
        "q": q,
        "sigma": sigma,
        "omega": DATA_OMEGA,
        "gamma1": TWO_LEVEL_GAMMA1,
        "kT": TWO_LEVEL_KT,
        "t_max": t_max,
        "n_intervals": n_intervals,
        "seed": seed,
    }
    dataset = TrajectoryDataset(2, [record], metadata)
    return add_noise(dataset, sigma, seed)


def initial_two_level_model(seed: int = 0, kT: float = TWO_LEVEL_KT) -> LearnableModel:
    """Blank-slate surrogate: zero drift, small random coupling factor, fresh network."""
    return init_model(n_levels=2, kT=kT, seed=seed)


def initial_qutrit_model(seed: int = 0, kT: float = QUTRIT_KT) -> LearnableModel:
    """Qutrit surrogate started from a noisy guess of the reference operators.

    The coupling entries get independent N(0, 0.05) perturbations; the drift's
    last Bloch component (the anharmonicity direction) gets N(0, 5), mimicking
    the relative precision of standard frequency calibrations.
    """
    rng = np.random.default_rng(seed)
    truth = qutrit_truth()
    x_pert = truth.coupling.x_cols + rng.normal(0.0, 0.05, size=truth.coupling.x_cols.shape)
    h_init = truth.h.copy()
    h_init[-1] += rng.normal(0.0, 5.0)
    return init_model(
        n_levels=3,
        kT=kT,
        seed=seed,
        h_init=h_init,
        x_hat_init=lower_triangular_factor(x_pert @ x_pert.T),
        diss_shift=truth.diss_shift,
        control=drive_encoding(3, QUTRIT_XI),
    )


def initial_data_model(seed: int = 0, kT: float = TWO_LEVEL_KT, learn_temperature: bool = False) -> LearnableModel:
    """Surrogate for the data protocol: blank operators, known drive frame."""
    truth = two_level_drive_truth()
    return init_model(
        n_levels=2,
        kT=kT,
        seed=seed,
        diss_shift=truth.diss_shift,
        control=drive_encoding(2, 0.0),
        learn_temperature=learn_temperature,
    )


def simulate_truth_controls(amps_set, t_grid, v0=None, kT: float = QUTRIT_KT, integrator: IntegratorConfig = None) -> np.ndarray:
    """Exact qutrit trajectories for a batch of pulse settings, stacked (n, T, d)."""
    v0 = qutrit_ground_bloch() if v0 is None else np.asarray(v0, dtype=float)
    out = [integrate_system(qutrit_truth(amps, kT=kT), v0, t_grid, integrator) for amps in np.atleast_2d(amps_set)]
    return np.stack(out)
