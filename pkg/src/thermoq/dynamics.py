"""Exact reference dynamics of open N-level systems in Bloch-vector form.

The central object is the nonlinear thermodynamic master equation for a system
coupled to an isothermal heat bath,

    d rho/dt = -(i/hbar) [H, rho] - sum_k [Q_k, [Q_k, rho]]
               - (1/kT) sum_k [Q_k, C_rho [Q_k, H]],

with Hermitian coupling operators Q_k and the canonical correlation
superoperator (C_rho A) = int_0^1 rho^s A rho^(1-s) ds.  In Bloch coordinates
the equation closes into a real vector field

    dv/dt = (1/hbar) L(v) h_u
            + sum_ij Gamma_ij L_i L_j v
            + (beta/2) sum_ij Gamma_ij L_i ((2/N) I + G(v) - M(v)) L_j h_d,

where L(a), G(a) contract the Bloch vector a with the antisymmetric and
symmetric structure constants, Gamma = X X^T collects the coupling
coefficients, and the state-dependent matrix M(v) carries the non-commutative
part of C_rho.  h_u and h_d are the Bloch vectors of the Hamiltonians entering
the unitary and the dissipative part; they coincide for undriven systems and
differ by the frame shift of the drive frequency when the dynamics is written
in a rotating frame.

Everything here is plain NumPy and serves as ground truth for data generation
and for validating the learnable surrogate; Boltzmann's constant is set to 1
(temperatures are measured in energy units) and hbar defaults to 1.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .basis import StructureConstants, hermitian_to_coeffs, structure_constants
from .errors import ConfigError, IntegrationError, StateError

__all__ = [
    "AdmissibilityWarning",
    "op_L",
    "op_G",
    "log_mean",
    "nonlinear_M",
    "m_tilde",
    "canonical_correlation",
    "CouplingSpec",
    "ControlSpec",
    "SystemSpec",
    "IntegratorConfig",
    "GenericBlocks",
    "annihilation_operator",
    "hamiltonian_at",
    "build_driven_system",
    "rhs_nonlinear",
    "rhs_lindblad",
    "generic_blocks",
    "total_entropy",
    "gibbs_state",
    "integrate",
    "integrate_system",
    "rk4_fixed",
]

# Eigenvalues of a density matrix below this magnitude count as zero in the
# log-mean weights.  Negatives above -PSD_TOL are clamped silently: trial
# stages of explicit solvers overshoot the admissible set by O(step^2), so the
# hard error is reserved for clearly invalid states.
ZERO_EIG = 1e-12
PSD_TOL = 2e-2


class AdmissibilityWarning(UserWarning):
    """A Bloch vector left the admissible ball by more than the tolerance."""


def op_L(a: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Commutator matrix L(a)_ij = sum_k a_k f_ijk (skew-symmetric).

    For Hermitian A, B with Bloch vectors a, b: L(a) b is the Bloch vector of
    i [A, B].
    """
    return np.einsum("k,ijk->ij", a, sc.f)


def op_G(a: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Anticommutator matrix G(a)_ij = sum_k a_k g_ijk (symmetric).

    For traceless Hermitian A, B with Bloch vectors a, b: G(a) b is the Bloch
    vector of {A, B}.
    """
    return np.einsum("k,ijk->ij", a, sc.g)


def log_mean(x: float, y: float) -> float:
    """Logarithmic mean (x - y) / (log x - log y) of two nonnegative reals.

    Returns 0 when either argument is below the zero threshold, and the
    arithmetic midpoint (the limit value) for relatively equal arguments.
    """
    if x < ZERO_EIG or y < ZERO_EIG:
        return 0.0
    if abs(x - y) < 1e-12 * max(x, y, 1.0):
        return 0.5 * (x + y)
    return (x - y) / (np.log(x) - np.log(y))


def _state_eig(v: np.ndarray, sc: StructureConstants):
    """Eigendecomposition of rho(v) with PSD check and clamping of tiny negatives."""
    n = sc.n_levels
    rho = np.eye(n, dtype=complex) / n + 0.5 * np.einsum("j,jab->ab", v, sc.sigma)
    lam, u = np.linalg.eigh(rho)
    if lam[0] < -PSD_TOL:
        raise StateError(f"state has negative eigenvalue {lam[0]:.3e} beyond tolerance")
    return np.clip(lam, 0.0, None), u


def _projector_bloch(u: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Bloch vectors of the eigenprojectors |u_i><u_i|, stacked as rows."""
    phi = np.einsum("ai,jab,bi->ij", u.conj(), sc.sigma, u)
    return np.ascontiguousarray(phi.real)


def _log_mean_matrix(lam: np.ndarray) -> np.ndarray:
    n = lam.size
    lm = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            lm[i, j] = lm[j, i] = log_mean(lam[i], lam[j])
    return lm


def nonlinear_M(v: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """State-dependent matrix M(v) = int_0^1 L(v^s)^T L(v^(1-s)) ds.

    Evaluated spectrally: with rho = sum_i lam_i |psi_i><psi_i| and phi_i the
    Bloch vector of the i-th eigenprojector,

        M(v) = sum_ij lm(lam_i, lam_j) L(phi_i)^T L(phi_j),

    where lm is the logarithmic mean.  M(v) is symmetric positive
    semidefinite, annihilates every a with L(v) a = 0, and collapses to
    L(v)^T L(v) on pure states.
    """
    v = np.asarray(v, dtype=float)
    lam, u = _state_eig(v, sc)
    phi = _projector_bloch(u, sc)
    lphi = np.einsum("ik,abk->iab", phi, sc.f)
    lm = _log_mean_matrix(lam)
    return np.einsum("ij,iqa,jqb->ab", lm, lphi, lphi)


def m_tilde(v: np.ndarray, s: float, sc: StructureConstants) -> np.ndarray:
    """Integrand slice L(v^s)^T L(v^(1-s)), where v^x is the Bloch image of rho^x."""
    lam, u = _state_eig(np.asarray(v, dtype=float), sc)
    phi = _projector_bloch(u, sc)
    v_s = np.power(lam, s) @ phi
    v_1ms = np.power(lam, 1.0 - s) @ phi
    return op_L(v_s, sc).T @ op_L(v_1ms, sc)


def canonical_correlation(rho: np.ndarray, a_mat: np.ndarray) -> np.ndarray:
    """Canonical correlation (C_rho A) = int_0^1 rho^s A rho^(1-s) ds.

    Computed in the eigenbasis of rho, where the integral weights matrix
    elements by the logarithmic mean of the eigenvalue pairs.
    """
    rho = np.asarray(rho, dtype=complex)
    lam, u = np.linalg.eigh(rho)
    if lam[0] < -PSD_TOL:
        raise StateError(f"state has negative eigenvalue {lam[0]:.3e} beyond tolerance")
    lam = np.clip(lam, 0.0, None)
    a_eig = u.conj().T @ np.asarray(a_mat, dtype=complex) @ u
    return u @ (_log_mean_matrix(lam) * a_eig) @ u.conj().T


# ---------------------------------------------------------------------------
# System specification
# ---------------------------------------------------------------------------


@dataclass
class CouplingSpec:
    """Bath coupling coefficients: columns of x_cols are the Bloch vectors of Q_k.

    Q_k = (1/2) sum_j x_cols[j, k] sigma_j, and Gamma = x_cols @ x_cols.T.
    """

    x_cols: np.ndarray

    def __post_init__(self):
        self.x_cols = np.atleast_2d(np.asarray(self.x_cols, dtype=float))
        if not np.all(np.isfinite(self.x_cols)):
            raise ConfigError("coupling coefficients must be finite")
        self.gamma = self.x_cols @ self.x_cols.T

    @property
    def dim(self) -> int:
        return self.x_cols.shape[0]

    @property
    def n_channels(self) -> int:
        return self.x_cols.shape[1]


@dataclass
class ControlSpec:
    """Resonantly modulated two-quadrature drive on a truncated oscillator.

    The rotating-frame Hamiltonian is
        (omega - omega_d) n_hat - xi * k_hat + Omega(t) a + Omega(t)* a^dagger
    with n_hat = a^dag a, k_hat = a^dag a^dag a a, Omega = p + i q, and pulse
    quadratures
        p(t) = amp_p[0] + amp_p[1] (cos(xi t) + sin(xi t))
        q(t) = amp_q[0] + amp_q[1] (cos(xi t) - sin(xi t)).
    Constant drives are the special case amp[1] = 0.  All frequencies are
    angular (rad per time unit).
    """

    omega: float
    xi: float
    omega_d: float
    amp_p: tuple[float, float] = (0.0, 0.0)
    amp_q: tuple[float, float] = (0.0, 0.0)

    def pulse(self, t):
        """Quadratures (p, q) at time t (vectorized over t)."""
        c, s = np.cos(self.xi * t), np.sin(self.xi * t)
        p = self.amp_p[0] + self.amp_p[1] * (c + s)
        q = self.amp_q[0] + self.amp_q[1] * (c - s)
        return p, q


def annihilation_operator(n_levels: int) -> np.ndarray:
    """Truncated oscillator annihilation operator, a |n> = sqrt(n) |n-1>."""
    a = np.zeros((n_levels, n_levels), dtype=complex)
    for j in range(1, n_levels):
        a[j - 1, j] = np.sqrt(j)
    return a


def hamiltonian_at(ctrl: ControlSpec, t: float, sc: StructureConstants, frame: str = "rotating") -> np.ndarray:
    """Drive Hamiltonian matrix at time t, in the rotating or the lab frame."""
    a = annihilation_operator(sc.n_levels)
    n_hat = a.conj().T @ a
    k_hat = a.conj().T @ a.conj().T @ a @ a
    p, q = ctrl.pulse(t)
    omega_c = p + 1j * q
    if frame == "rotating":
        return (ctrl.omega - ctrl.omega_d) * n_hat - ctrl.xi * k_hat + omega_c * a + np.conj(omega_c) * a.conj().T
    if frame == "lab":
        f = 2.0 * np.real(omega_c * np.exp(1j * ctrl.omega_d * t))
        return ctrl.omega * n_hat - ctrl.xi * k_hat + f * (a + a.conj().T)
    raise ConfigError(f"unknown frame {frame!r}")


@dataclass
class SystemSpec:
    """Full specification of one open system in Bloch coordinates.

    h is the Bloch vector of the (rotating-frame) drift Hamiltonian entering
    the unitary part; the dissipative part uses h + diss_shift, which restores
    the lab-frame drift when the dynamics is written in a rotating frame.  The
    optional control adds the drive quadratures to the unitary part only.
    """

    n_levels: int
    h: np.ndarray
    coupling: CouplingSpec
    kT: float
    diss_shift: np.ndarray = None
    control: ControlSpec = None
    hbar: float = 1.0

    def __post_init__(self):
        self.sc = structure_constants(self.n_levels)
        d = self.sc.dim
        self.h = np.asarray(self.h, dtype=float)
        if self.h.shape != (d,):
            raise ConfigError(f"drift Bloch vector must have shape ({d},)")
        if self.diss_shift is None:
            self.diss_shift = np.zeros(d)
        self.diss_shift = np.asarray(self.diss_shift, dtype=float)
        if self.coupling.dim != d:
            raise ConfigError("coupling dimension does not match the system")
        if not self.kT > 0.0:
            raise ConfigError("bath temperature kT must be positive")
        gam = self.coupling.gamma
        # Precontract the coupling sums once: the linear dissipator matrix
        # sum_ij Gamma_ij L_i L_j and the left factors sum_i Gamma_ij L_i.
        ls = self.sc.l_stack
        self._dissipator = np.einsum("ij,iab,jbc->ac", gam, ls, ls)
        self._thermal_left = np.einsum("ij,iab->jab", gam, ls)
        if self.control is not None:
            a = annihilation_operator(self.n_levels)
            _, self._u_p = hermitian_to_coeffs(a + a.conj().T, self.sc)
            _, self._u_q = hermitian_to_coeffs(1j * (a - a.conj().T), self.sc)

    @property
    def beta(self) -> float:
        return 1.0 / self.kT

    @property
    def dim(self) -> int:
        return self.sc.dim

    def h_unitary(self, t: float) -> np.ndarray:
        """Bloch vector of the Hamiltonian driving the unitary part at time t."""
        if self.control is None:
            return self.h
        p, q = self.control.pulse(t)
        return self.h + p * self._u_p + q * self._u_q

    @property
    def h_dissipative(self) -> np.ndarray:
        """Bloch vector of the (time-independent) Hamiltonian in the dissipative part."""
        return self.h + self.diss_shift


def build_driven_system(ctrl: ControlSpec, coupling: CouplingSpec, kT: float, n_levels: int) -> SystemSpec:
    """Assemble a SystemSpec for a driven oscillator-truncation system.

    The drift and frame shift Bloch vectors are derived from the control's
    frequencies; the drive quadratures enter through the control itself.
    """
    sc = structure_constants(n_levels)
    a = annihilation_operator(n_levels)
    n_hat = a.conj().T @ a
    k_hat = a.conj().T @ a.conj().T @ a @ a
    _, h_rot = hermitian_to_coeffs((ctrl.omega - ctrl.omega_d) * n_hat - ctrl.xi * k_hat, sc)
    _, shift = hermitian_to_coeffs(ctrl.omega_d * n_hat, sc)
    return SystemSpec(n_levels=n_levels, h=h_rot, coupling=coupling, kT=kT, diss_shift=shift, control=ctrl)


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


def _rhs_bloch(v, h_u, h_d, m_mat, sys: SystemSpec):
    """Assemble the Bloch vector field from a given nonlinearity matrix m_mat."""
    sc = sys.sc
    lv = op_L(v, sc)
    bracket = (2.0 / sys.n_levels) * np.eye(sc.dim) + op_G(v, sc) - m_mat
    thermal = np.einsum("jab,bc,jcd,d->a", sys._thermal_left, bracket, sc.l_stack, h_d)
    return lv @ h_u / sys.hbar + sys._dissipator @ v + 0.5 * sys.beta * thermal


def rhs_nonlinear(v: np.ndarray, sys: SystemSpec, t: float = 0.0) -> np.ndarray:
    """Right-hand side of the nonlinear thermodynamic master equation at state v."""
    v = np.asarray(v, dtype=float)
    r_max_sq = 2.0 * (sys.n_levels - 1) / sys.n_levels
    if v @ v > r_max_sq + 1e-2:
        warnings.warn(
            f"Bloch vector norm {np.sqrt(v @ v):.6f} outside the admissible ball",
            AdmissibilityWarning,
            stacklevel=2,
        )
    return _rhs_bloch(v, sys.h_unitary(t), sys.h_dissipative, nonlinear_M(v, sys.sc), sys)


def rhs_lindblad(v: np.ndarray, h_mat: np.ndarray, channels, sc: StructureConstants) -> np.ndarray:
    """Bloch image of the GKLS (Lindblad) generator.

    channels is an iterable of (rate, jump operator matrix) pairs; the
    right-hand side is assembled at the density-matrix level and mapped back,
    so arbitrary (not necessarily Hermitian) jump operators are supported.
    """
    n = sc.n_levels
    rho = np.eye(n, dtype=complex) / n + 0.5 * np.einsum("j,jab->ab", np.asarray(v, float), sc.sigma)
    drho = -1j * (h_mat @ rho - rho @ h_mat)
    for rate, l_op in channels:
        l_op = np.asarray(l_op, dtype=complex)
        ldl = l_op.conj().T @ l_op
        drho += rate * (l_op @ rho @ l_op.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    return np.einsum("jab,ba->j", sc.sigma, drho).real


# ---------------------------------------------------------------------------
# Metriplectic structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenericBlocks:
    """Poisson and friction blocks of the metriplectic form of the equation.

    The Bloch field for a constant Hamiltonian is
        dv/dt = l11 (h/2) - (1/2) m11 w + m12 / T,
    with w the Bloch vector of log rho, and the extended friction matrix
    [[m11, m12], [m12^T, m22]] is symmetric positive semidefinite.
    """

    l11: np.ndarray
    m11: np.ndarray
    m12: np.ndarray
    m22: float

    def friction_matrix(self) -> np.ndarray:
        """Assembled (d+1) x (d+1) friction block."""
        top = np.hstack([self.m11, self.m12[:, None]])
        bottom = np.hstack([self.m12, [self.m22]])
        return np.vstack([top, bottom[None, :]])


def generic_blocks(v: np.ndarray, sys: SystemSpec) -> GenericBlocks:
    """Evaluate the metriplectic blocks at state v (constant-Hamiltonian systems only)."""
    if sys.control is not None or np.any(sys.diss_shift != 0.0):
        raise ConfigError("metriplectic blocks are defined for constant-Hamiltonian systems")
    sc = sys.sc
    v = np.asarray(v, dtype=float)
    bracket = (2.0 / sys.n_levels) * np.eye(sc.dim) + op_G(v, sc) - nonlinear_M(v, sc)
    m11 = -np.einsum("jab,bc,jcd->ad", sys._thermal_left, bracket, sc.l_stack)
    m12 = -0.5 * m11 @ sys.h
    m22 = 0.25 * sys.h @ m11 @ sys.h
    return GenericBlocks(l11=(2.0 / sys.hbar) * op_L(v, sc), m11=m11, m12=m12, m22=float(m22))


def total_entropy(v: np.ndarray, sys: SystemSpec) -> float:
    """Total entropy (system plus bath) along a trajectory, up to a constant.

    S = -Tr(rho log rho) - Tr(rho H)/kT with the dissipative Hamiltonian; the
    nonlinear dynamics never decreases this quantity.
    """
    lam, _ = _state_eig(np.asarray(v, dtype=float), sys.sc)
    lam = lam[lam > 0.0]
    s_vn = -float(lam @ np.log(lam))
    return s_vn - 0.5 * float(np.asarray(v) @ sys.h_dissipative) / sys.kT


def gibbs_state(h_mat: np.ndarray, kT: float) -> np.ndarray:
    """Thermal equilibrium density matrix exp(-H/kT)/Z."""
    lam, u = np.linalg.eigh(np.asarray(h_mat, dtype=complex))
    w = np.exp(-(lam - lam.min()) / kT)
    return (u * (w / w.sum())) @ u.conj().T


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


@dataclass
class IntegratorConfig:
    """Adaptive integrator settings for reference trajectories."""

    method: str = "RK45"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf


def integrate(rhs, v0: np.ndarray, t_grid: np.ndarray, cfg: IntegratorConfig = None) -> np.ndarray:
    """Integrate dv/dt = rhs(v, t) through the sample times t_grid.

    Returns the trajectory sampled exactly at t_grid (the first entry must be
    the initial time).  Raises IntegrationError if the solver fails.
    """
    cfg = cfg or IntegratorConfig()
    t_grid = np.asarray(t_grid, dtype=float)

    def guarded(t, y):
        dv = rhs(y, t)
        # A non-finite field would otherwise stall the step-size control
        # indefinitely instead of failing.
        if not np.all(np.isfinite(dv)):
            raise IntegrationError(f"vector field returned non-finite values at t={t:.6g}")
        return dv

    sol = solve_ivp(
        guarded,
        (t_grid[0], t_grid[-1]),
        np.asarray(v0, dtype=float),
        method=cfg.method,
        t_eval=t_grid,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
    )
    if not sol.success:
        raise IntegrationError(f"integration failed: {sol.message}")
    return np.ascontiguousarray(sol.y.T)


def integrate_system(sys: SystemSpec, v0: np.ndarray, t_grid: np.ndarray, cfg: IntegratorConfig = None) -> np.ndarray:
    """Integrate the nonlinear master equation for one system specification."""
    return integrate(lambda v, t: rhs_nonlinear(v, sys, t), v0, t_grid, cfg)


def rk4_fixed(rhs, v0: np.ndarray, t_grid: np.ndarray, substeps: int = 1) -> np.ndarray:
    """Classical fixed-step fourth-order Runge-Kutta through t_grid.

    Reference implementation mirroring the integrator differentiated during
    training; each sample interval is split into `substeps` equal RK4 steps.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty((t_grid.size, np.asarray(v0).size))
    v = np.asarray(v0, dtype=float).copy()
    out[0] = v
    for i in range(t_grid.size - 1):
        h = (t_grid[i + 1] - t_grid[i]) / substeps
        t = t_grid[i]
        for _ in range(substeps):
            k1 = rhs(v, t)
            k2 = rhs(v + 0.5 * h * k1, t + 0.5 * h)
            k3 = rhs(v + 0.5 * h * k2, t + 0.5 * h)
            k4 = rhs(v + h * k3, t + h)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        out[i + 1] = v
    return out
