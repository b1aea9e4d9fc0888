"""Dense O(D^2) kernels used by the walker.

Every function accepts a leading batch shape: ``sigma`` may be ``(D, D)`` or
``(n, D, D)``, vectors ``(D,)`` or ``(n, D)``.  This is what lets one step of
many independent walkers run as a handful of numpy calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N1_TOL = 1e-10


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor with positive diagonal, ``sigma @ sigma.T == a``."""
    a = np.asarray(a, dtype=float)
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=1e-12, atol=0.0):
        raise ValueError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not positive definite") from exc


def forward_substitute(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``lower @ x = rhs`` row by row (batched over leading axes)."""
    lower = np.asarray(lower, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    dim = rhs.shape[-1]
    diag = np.diagonal(lower, axis1=-2, axis2=-1)
    if np.any(diag == 0.0):
        raise ZeroDivisionError("zero on the diagonal of a triangular system")
    x = np.empty(np.broadcast_shapes(lower.shape[:-1], rhs.shape), dtype=float)
    for k in range(dim):
        acc = rhs[..., k]
        if k:
            acc = acc - np.einsum("...j,...j->...", lower[..., k, :k], x[..., :k])
        x[..., k] = acc / diag[..., k]
    return x


def gershgorin_lambda1(a: np.ndarray) -> np.ndarray:
    """Upper bound of the largest eigenvalue: max absolute column sum."""
    return np.abs(np.asarray(a, dtype=float)).sum(axis=-2).max(axis=-1)


@dataclass(frozen=True)
class GivensFrame:
    """Stored cosines/sines of the rotations G(1,2) ... G(1,D).

    ``cos[..., k-2]`` and ``sin[..., k-2]`` belong to the rotation in the
    (1, k) plane.  The orthogonal map itself is never formed.
    """

    cos: np.ndarray
    sin: np.ndarray

    @property
    def dim(self) -> int:
        return self.cos.shape[-1] + 1


def givens_init(v: np.ndarray) -> tuple[GivensFrame, np.ndarray]:
    """Angles zeroing ``v[1:]`` one component at a time; returns ``(frame, beta)``.

    ``beta`` is the surviving first component, equal to ``||v||``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 2:
        raise ValueError("need dimension >= 2")
    if np.any(np.einsum("...i,...i->...", v, v) == 0.0):
        raise ValueError("cannot build a rotation frame from a zero vector")
    first = v[..., 0].copy()
    cos = np.empty(v.shape[:-1] + (v.shape[-1] - 1,))
    sin = np.empty_like(cos)
    for k in range(1, v.shape[-1]):
        vk = v[..., k]
        w = np.hypot(first, vk)
        zero = w == 0.0
        safe = np.where(zero, 1.0, w)
        cos[..., k - 1] = np.where(zero, 1.0, first / safe)
        sin[..., k - 1] = np.where(zero, 0.0, vk / safe)
        first = w
    return GivensFrame(cos, sin), first


def apply_rotations(frame: GivensFrame, v: np.ndarray, direction: str = "forth") -> np.ndarray:
    """Apply the stored rotations to ``v``.

    ``"forth"`` applies G(1,2), then G(1,3), ..., G(1,D); ``"back"`` applies the
    transposes in reverse order, so ``back(forth(v)) == v``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != frame.dim:
        raise ValueError(f"vector has dimension {v.shape[-1]}, frame has {frame.dim}")
    if direction == "forth":
        order, s1 = range(1, frame.dim), 1.0
    elif direction == "back":
        order, s1 = range(frame.dim - 1, 0, -1), -1.0
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = np.array(np.broadcast_to(v, np.broadcast_shapes(v.shape, frame.cos.shape[:-1] + (frame.dim,))))
    for k in order:
        c = frame.cos[..., k - 1]
        s = frame.sin[..., k - 1]
        x1 = out[..., 0].copy()
        xk = out[..., k]
        out[..., 0] = c * x1 + s1 * s * xk
        out[..., k] = -s1 * s * x1 + c * xk
    return out


def apply_q(frame: GivensFrame, v: np.ndarray) -> np.ndarray:
    """Q v, where Q maps the frame's generating unit normal to (-1, 0, ..., 0)."""
    return -apply_rotations(frame, v, "forth")


def apply_qt(frame: GivensFrame, v: np.ndarray) -> np.ndarray:
    return -apply_rotations(frame, v, "back")


def q_matrix(frame: GivensFrame) -> np.ndarray:
    """Explicit Q, for tests and diagnostics only (single frame)."""
    eye = np.eye(frame.dim)
    return np.stack([apply_q(frame, e) for e in eye], axis=-1)


def a_hat_first_column(sigma: np.ndarray, normal: np.ndarray, frame: GivensFrame) -> np.ndarray:
    """First column of ``Q A Q^T`` with ``A = sigma sigma^T``, in O(D^2)."""
    sigma = np.asarray(sigma, dtype=float)
    st_n = np.einsum("...ji,...j->...i", sigma, normal)
    a_n = np.einsum("...ij,...j->...i", sigma, st_n)
    return apply_rotations(frame, a_n, "forth")


def _q_star(frame: GivensFrame, v_tail: np.ndarray) -> np.ndarray:
    """Lower block ``Q_* v`` via a zero-padded rotation."""
    padded = np.concatenate([np.zeros(v_tail.shape[:-1] + (1,)), v_tail], axis=-1)
    return apply_q(frame, padded)[..., 1:]


def lambda_star_apply(
    sigma: np.ndarray,
    frame: GivensFrame,
    normal: np.ndarray,
    nu: np.ndarray,
    n1_tol: float = N1_TOL,
) -> np.ndarray:
    """``Lambda_* nu`` for a factor of the rotated minor ``(Q A Q^T)_*``.

    Recycles the lower-triangular ``sigma`` instead of refactorizing.  When the
    first component of ``normal`` is not tiny a rank-one correction of
    ``Q_* sigma_*`` is used; otherwise (that update would be inconsistent)
    the closed-form orthogonal completion with ``sigma_* r = N_tail``.
    """
    normal = np.asarray(normal, dtype=float)
    dim = normal.shape[-1]
    if dim < 2:
        raise ValueError("rotated minor is empty for D = 1")
    single = normal.ndim == 1
    sigma = np.asarray(sigma, dtype=float)
    n = 1 if single else normal.shape[0]
    sigma = np.broadcast_to(sigma, (n, dim, dim))
    normal = normal.reshape(n, dim)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (n, dim - 1))
    frame = GivensFrame(frame.cos.reshape(n, dim - 1), frame.sin.reshape(n, dim - 1))

    s11 = sigma[:, 0, 0]
    s_vec = sigma[:, 1:, 0]
    s_star = sigma[:, 1:, 1:]
    e1 = np.zeros((n, dim))
    e1[:, 0] = 1.0
    q2 = apply_q(frame, e1)[:, 1:]
    out = _q_star(frame, np.einsum("nij,nj->ni", s_star, nu))
    w = s11[:, None] * q2 + _q_star(frame, s_vec)

    n1 = normal[:, 0]
    generic = np.abs(n1) > n1_tol
    if np.any(generic):
        g = generic
        rhs = s_vec[g] - (s11[g] / n1[g])[:, None] * normal[g, 1:]
        z = forward_substitute(s_star[g], rhs)
        zz = np.einsum("ni,ni->n", z, z)
        # alpha_+ = (sqrt(1+|z|^2)-1)/|z|^2, written without cancellation
        alpha = 1.0 / (1.0 + np.sqrt(1.0 + zz))
        out[g] += (alpha * np.einsum("ni,ni->n", z, nu[g]))[:, None] * w[g]
    if not np.all(generic):
        g = ~generic
        rvec = forward_substitute(s_star[g], normal[g, 1:])
        coef = np.einsum("ni,ni->n", rvec, nu[g]) / np.linalg.norm(rvec, axis=-1)
        out[g] += coef[:, None] * w[g]
    return out[0] if single else out
