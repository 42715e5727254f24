"""Dense complex multilinear algebra.

Tensors are plain ``numpy.ndarray`` objects. Modes are 0-based and the
linearization is C order (last mode fastest), so that

    vectorize(outer(a, b, c)) == kron(a, kron(b, c)).

``unfold(t, n)`` places mode ``n`` on the rows and keeps the remaining modes
in their original order on the columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")


def as_tensor(data, dims=None) -> np.ndarray:
    """Build a complex tensor from values (optionally reshaped to ``dims``)."""
    arr = np.asarray(data, dtype=complex)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be positive, got {dims}")
        if int(np.prod(dims)) != arr.size:
            raise ValueError(f"{arr.size} values cannot fill dims {dims}")
        arr = arr.reshape(dims)
    if arr.ndim < 1:
        raise ValueError("tensor order must be at least 1")
    return arr


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(I_mode, prod(other dims))``."""
    t = np.asarray(t)
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def fold(m: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of shape ``dims``."""
    dims = tuple(dims)
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for order-{len(dims)} tensor")
    rest = dims[:mode] + dims[mode + 1:]
    m = np.asarray(m)
    if m.shape != (dims[mode], int(np.prod(rest, dtype=int))):
        raise ValueError(f"matrix of shape {m.shape} does not fold into {dims} along mode {mode}")
    return np.moveaxis(m.reshape((dims[mode],) + rest), 0, mode)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """n-mode product ``t ×_mode m``: contracts mode ``mode`` with the columns of ``m``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix with shape {m.shape} cannot multiply mode {mode} of size {t.shape[mode]}")
    out = np.tensordot(m, t, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def multi_mode_product(t: np.ndarray, mats, modes=None) -> np.ndarray:
    """Apply several mode products; ``None`` entries in ``mats`` are skipped."""
    modes = range(len(mats)) if modes is None else modes
    for m, n in zip(mats, modes):
        if m is not None:
            t = mode_product(t, m, n)
    return t


def vectorize(t: np.ndarray) -> np.ndarray:
    return np.asarray(t).reshape(-1)


def outer(*vectors) -> np.ndarray:
    """Outer product a ∘ b ∘ ... of 1-D arrays."""
    out = np.asarray(vectors[0])
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v))
    return out


def concat(tensors, mode: int) -> np.ndarray:
    """Concatenate tensors along ``mode``."""
    return np.concatenate([np.asarray(x) for x in tensors], axis=mode)


def hnorm(t: np.ndarray) -> float:
    """Higher-order (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(t).ravel()))


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Scalar product <a, b> = sum conj(b) * a."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(b.ravel(), a.ravel()))


def fix_phase(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    u = np.array(u, dtype=complex)
    if u.size == 0:
        return u
    idx = np.argmax(np.abs(u), axis=0)
    piv = u[idx, np.arange(u.shape[1])]
    ph = np.where(np.abs(piv) > 0, piv / np.where(np.abs(piv) > 0, np.abs(piv), 1), 1)
    return u * ph.conj()[None, :]


@dataclass(frozen=True)
class HosvdResult:
    core: np.ndarray
    factors: list
    mode_singular_values: list

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def hosvd(t: np.ndarray) -> HosvdResult:
    """Full higher-order SVD. Factors are phase-normalized left singular vectors."""
    t = np.asarray(t, dtype=complex)
    if t.ndim < 2:
        raise ValueError("hosvd needs order >= 2")
    factors, svals = [], []
    for n in range(t.ndim):
        u, s, _ = np.linalg.svd(unfold(t, n), full_matrices=True)
        factors.append(fix_phase(u))
        svals.append(s)
    core = multi_mode_product(t, [u.conj().T for u in factors])
    return HosvdResult(core, factors, svals)


def truncated_signal_subspace(t: np.ndarray, k: int) -> np.ndarray:
    """Tensor signal subspace with every mode truncated to ``k``.

    Returns ``S_s ×_1 U_1s ... ×_{N-1} U_{N-1,s}`` where the last mode keeps the
    ``k`` dominant components. Its last-mode unfolding transposed equals
    ``(P_1 ⊗ ... ⊗ P_{N-1}) U_s Σ_s`` with ``P_r = U_rs U_rsᴴ``.
    """
    t = np.asarray(t, dtype=complex)
    if t.ndim < 2:
        raise ValueError("signal subspace needs order >= 2")
    if k < 1 or k > min(t.shape[:-1]) or k > t.shape[-1]:
        raise ValueError(f"k={k} out of range for dims {t.shape}")
    us = []
    for n in range(t.ndim):
        u, _, _ = np.linalg.svd(unfold(t, n), full_matrices=False)
        us.append(fix_phase(u[:, :k]))
    core = multi_mode_product(t, [u.conj().T for u in us])
    return multi_mode_product(core, us[:-1])
