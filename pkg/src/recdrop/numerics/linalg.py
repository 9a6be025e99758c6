"""Dense linear algebra for small real nonsymmetric matrices.

Matrices are plain float64 ndarrays in row-major order.  The eigensolver
follows the classic dense pipeline: balancing, Householder reduction to
Hessenberg form, then explicitly shifted QR iteration with Wilkinson shifts
and deflation, carried out in complex arithmetic.  Only eigenvalues are
produced; that is all the Jacobian spectral analysis needs.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError, NumericalError

MAX_EIG_DIM = 256

_EPS = np.finfo(float).eps


def check_matrix(a, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-D float64 array with finite entries."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries")
    if square and a.shape[0] != a.shape[1]:
        raise InputError(f"{name} must be square, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape checking."""
    a = check_matrix(a, name="left operand")
    b = check_matrix(b, name="right operand")
    if a.shape[1] != b.shape[0]:
        raise InputError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def householder_qr(a) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization by Householder reflections.

    Works for real or complex input; Q is returned explicitly (unitary,
    m x m) together with the upper-triangular R.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise InputError(f"qr expects a 2-D array, got shape {a.shape}")
    dtype = complex if np.iscomplexobj(a) else float
    r = a.astype(dtype, copy=True)
    m, n = r.shape
    q = np.eye(m, dtype=dtype)
    for k in range(min(m - 1, n)):
        x = r[k:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        # Reflect x onto -phase(x0)*|x| e1 to avoid cancellation.
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        alpha = -phase * norm_x
        v = x.copy()
        v[0] -= alpha
        norm_v = np.linalg.norm(v)
        if norm_v < _EPS * norm_x:
            continue
        v /= norm_v
        r[k:, k:] -= 2.0 * np.outer(v, v.conj() @ r[k:, k:])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v.conj())
    return q, r


def balance(a) -> np.ndarray:
    """Diagonal similarity scaling (powers of 2) equalizing row/column norms.

    Parlett-Reinsch balancing; leaves eigenvalues unchanged while improving
    the conditioning of the QR iteration.
    """
    a = check_matrix(a, square=True).copy()
    n = a.shape[0]
    radix = 2.0
    converged = False
    while not converged:
        converged = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            f = 1.0
            s = c + r
            while c < r / radix:
                c *= radix
                r /= radix
                f *= radix
            while c > r * radix:
                c /= radix
                r *= radix
                f /= radix
            if (c + r) < 0.95 * s:
                converged = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(a) -> np.ndarray:
    """Reduce a real square matrix to upper Hessenberg form by similarity."""
    h = check_matrix(a, square=True).copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        alpha = -np.copysign(norm_x, x[0]) if x[0] != 0 else -norm_x
        v = x.copy()
        v[0] -= alpha
        norm_v = np.linalg.norm(v)
        if norm_v < _EPS * norm_x:
            continue
        v /= norm_v
        h[k + 1 :, k:] -= 2.0 * np.outer(v, v @ h[k + 1 :, k:])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v)
    # Entries below the first subdiagonal are zero up to rounding; clear them.
    for k in range(n - 2):
        h[k + 2 :, k] = 0.0
    return h


def _eig_2x2(block: np.ndarray) -> tuple[complex, complex]:
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    mid = 0.5 * (a + d)
    root = np.sqrt(complex((0.5 * (a - d)) ** 2 + b * c))
    lam1 = mid + root
    if lam1 != 0:
        # Recover the partner from the determinant for accuracy.
        lam2 = (a * d - b * c) / lam1
    else:
        lam2 = mid - root
    return complex(lam1), complex(lam2)


def _wilkinson_shift(block: np.ndarray) -> complex:
    lam1, lam2 = _eig_2x2(block[-2:, -2:])
    corner = block[-1, -1]
    return lam1 if abs(lam1 - corner) <= abs(lam2 - corner) else lam2


def qr_shift_step(h, shift: complex = 0.0) -> np.ndarray:
    """One explicit shifted QR pass: RQ + shift*I for (Q, R) = qr(H - shift*I).

    A similarity transform of H, so its spectrum is preserved.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InputError(f"qr step expects a square matrix, got shape {h.shape}")
    eye = np.eye(h.shape[0])
    q, r = householder_qr(h - shift * eye)
    return r @ q + shift * eye


def _pair_conjugates(vals: np.ndarray) -> np.ndarray:
    """Snap the spectrum of a real matrix onto exact conjugate pairs.

    Single-shift complex QR leaves pairs conjugate only up to rounding;
    averaging each matched pair restores exact symmetry without moving any
    eigenvalue by more than the rounding error.
    """
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    out = vals.copy()
    real_mask = np.abs(out.imag) <= 1e-10 * scale
    out[real_mask] = out[real_mask].real
    pos = [i for i in range(out.size) if not real_mask[i] and out[i].imag > 0]
    neg = [i for i in range(out.size) if not real_mask[i] and out[i].imag < 0]
    if len(pos) != len(neg):
        return out
    pos.sort(key=lambda i: (out[i].real, out[i].imag))
    neg.sort(key=lambda i: (out[i].real, -out[i].imag))
    for i, j in zip(pos, neg):
        avg = 0.5 * (out[i] + out[j].conjugate())
        out[i] = avg
        out[j] = avg.conjugate()
    return out


def _givens_qr_sweep(block: np.ndarray, shift: complex) -> None:
    """In-place explicit shifted QR similarity on a Hessenberg block.

    Equivalent to RQ + shift*I for (Q, R) = qr(block - shift*I), but uses
    the chain of Givens rotations that the Hessenberg structure admits,
    which is far cheaper than a general QR.
    """
    m = block.shape[0]
    idx = np.arange(m)
    block[idx, idx] -= shift
    rot = np.empty((m - 1, 2), dtype=complex)
    for j in range(m - 1):
        a, b = block[j, j], block[j + 1, j]
        r = np.hypot(abs(a), abs(b))
        if r == 0.0:
            c, s = 1.0 + 0.0j, 0.0 + 0.0j
        else:
            c, s = a / r, b / r
        rot[j, 0], rot[j, 1] = c, s
        top = block[j, j:]
        bot = block[j + 1, j:]
        new_top = np.conj(c) * top + np.conj(s) * bot
        bot *= c
        bot -= s * top
        block[j, j:] = new_top
        block[j + 1, j] = 0.0
    for j in range(m - 1):
        c, s = rot[j, 0], rot[j, 1]
        stop = min(j + 2, m)
        left = block[:stop, j].copy()
        right = block[:stop, j + 1]
        block[:stop, j] = c * left + s * right
        block[:stop, j + 1] = -np.conj(s) * left + np.conj(c) * right
    block[idx, idx] += shift


def _hessenberg_eigenvalues(h: np.ndarray, budget: int) -> np.ndarray:
    n = h.shape[0]
    eig = np.empty(n, dtype=complex)
    sweeps = 0
    stuck = 0
    hi = n
    while hi > 0:
        if hi == 1:
            eig[0] = h[0, 0]
            break
        lo = hi - 1
        while lo > 0:
            sub = abs(h[lo, lo - 1])
            if sub <= _EPS * (abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])):
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        size = hi - lo
        if size == 1:
            eig[lo] = h[lo, lo]
            hi = lo
            stuck = 0
            continue
        if size == 2:
            eig[lo], eig[lo + 1] = _eig_2x2(h[lo:hi, lo:hi])
            hi = lo
            stuck = 0
            continue
        if sweeps >= budget:
            partial = np.concatenate([np.diag(h)[:hi], eig[hi:]])
            raise NumericalError(
                f"QR iteration did not converge within {budget} sweeps",
                partial_spectrum=partial,
                unconverged=hi,
            )
        sweeps += 1
        stuck += 1
        block = h[lo:hi, lo:hi]
        if stuck % 12 == 0:
            # Exceptional shift: breaks the cycles that a Wilkinson shift
            # cannot (e.g. permutation-like blocks with symmetric spectra).
            shift = block[-1, -1] + abs(block[-1, -2]) * (0.75 + 0.4375j)
        else:
            shift = _wilkinson_shift(block)
        _givens_qr_sweep(block, shift)
    return eig


def eigenvalues(a, max_sweeps: int | None = None) -> np.ndarray:
    """All eigenvalues of a real square matrix, as a complex vector.

    Balancing, Hessenberg reduction, then shifted QR with deflation.  The
    sweep budget defaults to 30*n^2; exceeding it raises NumericalError
    carrying the partially converged spectrum.
    """
    a = check_matrix(a, square=True)
    n = a.shape[0]
    if n > MAX_EIG_DIM:
        raise InputError(f"eigensolver is limited to dimension {MAX_EIG_DIM}, got {n}")
    if max_sweeps is None:
        max_sweeps = 30 * n * n
    h = hessenberg(balance(a)).astype(complex)
    return _pair_conjugates(_hessenberg_eigenvalues(h, max_sweeps))
