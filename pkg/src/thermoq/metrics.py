"""Evaluation metrics: trace distances, positivity violation, operator recovery.

Everything operates on Bloch vectors and broadcasts over leading axes, so the
same functions serve a single state pair, a trajectory, or a whole bundle of
trajectories under randomized controls.  The heavy pieces (eigenvalues of
ten-thousands of density matrices, the state-dependent dissipation matrix on
every test sample) are evaluated batched and chunked.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .basis import StructureConstants, structure_constants
from .dynamics import ZERO_EIG, SystemSpec
from .errors import DataError, NumericError

__all__ = [
    "trace_distance",
    "DistanceBands",
    "expected_trace_distance",
    "min_eigenvalues",
    "psd_violation",
    "psd_violating_fraction",
    "cumulative_trace_distance",
    "operator_errors",
    "nonlinear_term_error",
]

_SC_CACHE = {}


def _sc_for_dim(d: int) -> StructureConstants:
    n = int(round(np.sqrt(d + 1)))
    if n * n - 1 != d or n < 2:
        raise DataError(f"Bloch dimension {d} is not of the form N^2 - 1")
    if n not in _SC_CACHE:
        _SC_CACHE[n] = structure_constants(n)
    return _SC_CACHE[n]


def _density_stack(states: np.ndarray, sc: StructureConstants, traceless: bool = False) -> np.ndarray:
    """Density matrices (or traceless parts) for Bloch vectors of shape (..., d)."""
    rho = 0.5 * np.einsum("...k,kab->...ab", states, sc.sigma)
    if not traceless:
        rho = rho + np.eye(sc.n_levels) / sc.n_levels
    return rho


def trace_distance(v_a, v_b, method: str = "auto"):
    """Trace distance between states given as Bloch vectors, broadcasting over leading axes.

    For two-level systems the distance reduces to half the Euclidean norm of
    the Bloch difference ("bloch"); in general it is half the absolute-eigenvalue
    sum of rho_a - rho_b ("eigen").  "auto" picks the cheap path for N=2.
    """
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    if v_a.shape[-1] != v_b.shape[-1]:
        raise DataError(f"Bloch dimensions differ: {v_a.shape[-1]} vs {v_b.shape[-1]}")
    sc = _sc_for_dim(v_a.shape[-1])
    if method == "auto":
        method = "bloch" if sc.n_levels == 2 else "eigen"
    if method == "bloch":
        if sc.n_levels != 2:
            raise DataError("the Euclidean shortcut only holds for two-level systems")
        return 0.5 * np.linalg.norm(v_a - v_b, axis=-1)
    if method != "eigen":
        raise DataError(f"unknown trace-distance method {method!r}")
    delta = _density_stack(v_a - v_b, sc, traceless=True)
    lam = np.linalg.eigvalsh(delta)
    return 0.5 * np.sum(np.abs(lam), axis=-1)


@dataclass(frozen=True)
class DistanceBands:
    """Per-time mean/min/max of the trace distance over a family of controls."""

    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray


def expected_trace_distance(pred: np.ndarray, true: np.ndarray) -> DistanceBands:
    """Distance statistics between matching trajectory bundles of shape (n_controls, T, d)."""
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if pred.shape != true.shape or pred.ndim != 3:
        raise DataError(f"trajectory bundles must share shape (n_controls, T, d); got {pred.shape} vs {true.shape}")
    if pred.shape[0] == 0:
        raise DataError("need at least one control trajectory")
    td = trace_distance(pred, true)  # (n_controls, T)
    return DistanceBands(mean=td.mean(axis=0), min=td.min(axis=0), max=td.max(axis=0))


def min_eigenvalues(states: np.ndarray) -> np.ndarray:
    """Smallest density-matrix eigenvalue for Bloch vectors of shape (..., d)."""
    states = np.asarray(states, dtype=float)
    sc = _sc_for_dim(states.shape[-1])
    lam = np.linalg.eigvalsh(_density_stack(states, sc))
    return lam[..., 0]


def psd_violation(states: np.ndarray) -> np.ndarray:
    """Positivity violation |min(0, lambda_min)| per time point.

    ``states`` has shape (..., T, d); leading axes (e.g. the control family)
    are reduced by taking the worst state at each time.
    """
    lam_min = min_eigenvalues(states)
    if lam_min.ndim > 1:
        lam_min = lam_min.min(axis=tuple(range(lam_min.ndim - 1)))
    return np.abs(np.minimum(0.0, lam_min))


def psd_violating_fraction(states: np.ndarray, tol: float = 1e-10) -> float:
    """Fraction of sampled states whose density matrix has an eigenvalue < -tol."""
    lam_min = min_eigenvalues(states)
    return float(np.mean(lam_min < -tol))


def cumulative_trace_distance(pred: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Running mean (1/N) sum_{i<=N} T(pred_i, data_i) over an aligned sample grid."""
    pred = np.asarray(pred, dtype=float)
    data = np.asarray(data, dtype=float)
    if pred.shape != data.shape or pred.ndim != 2:
        raise DataError(f"aligned trajectories required; got shapes {pred.shape} vs {data.shape}")
    td = trace_distance(pred, data)
    return np.cumsum(td) / np.arange(1, td.shape[0] + 1)


def _signed_permutation_align(x_model: np.ndarray, x_true: np.ndarray) -> np.ndarray:
    """Signed permutation P minimizing ||x_model P - x_true||_F.

    Columns of the coupling factor are only identified up to order and sign
    (Gamma = X X^T is blind to both), so error measurement quotients them out.
    """
    overlap = x_model.T @ x_true
    rows, cols = linear_sum_assignment(-np.abs(overlap))
    perm = np.zeros_like(overlap)
    for r, c in zip(rows, cols):
        s = np.sign(overlap[r, c])
        perm[r, c] = 1.0 if s == 0 else s
    return perm


def operator_errors(model, truth: SystemSpec, gauge: str = "signed-permutation") -> dict:
    """Relative errors of the learned drift vector and coupling factor.

    Returns {"h_rel", "x_rel"} with h_rel = ||h_model - h|| / ||h|| and x_rel
    the Frobenius error of the coupling factor after gauge fixing.  ``gauge``
    selects the alignment applied to the model factor before comparing:
    "signed-permutation" (default; resolves column order and sign),
    "orthogonal" (full Procrustes, quotienting the entire gauge freedom of
    Gamma = X X^T), or "none".
    """
    h_model = np.asarray(model.h_theta(), dtype=float)
    x_model = np.asarray(model.x_hat(), dtype=float)
    h_true = np.asarray(truth.h, dtype=float)
    x_true = np.asarray(truth.coupling.x_cols, dtype=float)
    if h_model.shape != h_true.shape:
        raise DataError(f"drift dimensions differ: {h_model.shape} vs {h_true.shape}")
    h_norm = np.linalg.norm(h_true)
    x_norm = np.linalg.norm(x_true)
    if h_norm == 0.0 or x_norm == 0.0:
        raise DataError("reference operators must have nonzero norm")
    if x_true.shape[1] < x_model.shape[1]:
        x_true = np.hstack([x_true, np.zeros((x_true.shape[0], x_model.shape[1] - x_true.shape[1]))])
    elif x_model.shape[1] < x_true.shape[1]:
        x_model = np.hstack([x_model, np.zeros((x_model.shape[0], x_true.shape[1] - x_model.shape[1]))])
    if gauge == "signed-permutation":
        aligned = x_model @ _signed_permutation_align(x_model, x_true)
    elif gauge == "orthogonal":
        from scipy.linalg import orthogonal_procrustes

        rot, _ = orthogonal_procrustes(x_model, x_true)
        aligned = x_model @ rot
    elif gauge == "none":
        aligned = x_model
    else:
        raise DataError(f"unknown gauge {gauge!r}")
    return {
        "h_rel": float(np.linalg.norm(h_model - h_true) / h_norm),
        "x_rel": float(np.linalg.norm(aligned - x_true) / x_norm),
    }


def _log_mean_matrix(lam: np.ndarray) -> np.ndarray:
    """Pairwise logarithmic means of eigenvalue stacks of shape (S, N)."""
    x = lam[:, :, None]
    y = lam[:, None, :]
    zero = (x < ZERO_EIG) | (y < ZERO_EIG)
    close = np.abs(x - y) < 1e-12 * np.maximum(np.maximum(x, y), 1.0)
    safe_x = np.where(zero, 1.0, np.maximum(x, ZERO_EIG))
    safe_y = np.where(zero, 1.0, np.maximum(y, ZERO_EIG))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (safe_x - safe_y) / (np.log(safe_x) - np.log(safe_y))
    out = np.where(close, 0.5 * (x + y), ratio)
    return np.where(zero, 0.0, out)


def batched_nonlinear_M(states: np.ndarray, sc: StructureConstants, chunk: int = 8192) -> np.ndarray:
    """The dissipation matrix M(v) for a stack of Bloch vectors of shape (S, d).

    Spectral evaluation identical to the per-state reference, vectorized over
    states and processed in chunks to bound memory.
    """
    states = np.asarray(states, dtype=float)
    out = np.empty((states.shape[0], sc.dim, sc.dim))
    for lo in range(0, states.shape[0], chunk):
        batch = states[lo : lo + chunk]
        lam, u = np.linalg.eigh(_density_stack(batch, sc))
        # Bloch vectors of the eigenprojectors, then their commutator matrices.
        phi = np.einsum("sai,kab,sbi->sik", u.conj(), sc.sigma, u).real
        l_phi = np.einsum("sik,abk->siab", phi, sc.f)
        lm = _log_mean_matrix(np.clip(lam, 0.0, None))
        out[lo : lo + chunk] = np.einsum("sij,siba,sjbc->sac", lm, l_phi, l_phi, optimize=True)
    return out


def _nonlinear_term(states: np.ndarray, gamma: np.ndarray, h: np.ndarray, m_stack: np.ndarray, sc) -> np.ndarray:
    """G[v] = sum_ij Gamma_ij L_i M(v) L_j h for every state in the stack."""
    c = np.einsum("ij,jab,b->ia", gamma, sc.l_stack, h)
    return np.einsum("iab,sbc,ic->sa", sc.l_stack, m_stack, c, optimize=True)


def nonlinear_term_error(model, truth: SystemSpec, states: np.ndarray, chunk: int = 8192) -> float:
    """Relative L2 error of the state-dependent dissipation term over test states.

    ``states`` collects every Bloch sample to evaluate (leading axes are
    flattened).  The reference term uses the exact spectral M(v) with the true
    Gamma and drift; the model term uses the learned coupling matrix, drift and
    network-parametrized M.  Returned is sqrt(sum ||G_model - G||^2 / sum ||G||^2).
    """
    import jax
    import jax.numpy as jnp

    from .model import M_theta

    states = np.asarray(states, dtype=float).reshape(-1, truth.dim)
    sc = truth.sc
    m_true = batched_nonlinear_M(states, sc, chunk=chunk)
    g_true = _nonlinear_term(states, truth.coupling.gamma, truth.h + truth.diss_shift, m_true, sc)

    m_model_fn = jax.jit(jax.vmap(lambda v: M_theta(model.params, v, model)))
    parts = [np.asarray(m_model_fn(jnp.asarray(states[lo : lo + chunk]))) for lo in range(0, states.shape[0], chunk)]
    m_model = np.concatenate(parts, axis=0)
    h_model = model.h_theta() + model.diss_shift
    g_model = _nonlinear_term(states, model.gamma(), h_model, m_model, sc)

    denom = np.sum(g_true * g_true)
    if denom == 0.0:
        raise NumericError("reference nonlinear term vanishes on every test state")
    return float(np.sqrt(np.sum((g_model - g_true) ** 2) / denom))
