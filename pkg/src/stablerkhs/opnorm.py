"""The (infinity, 1) operator norm of symmetric PSD windows.

For a PSD matrix K the norm max_{|u|_inf = 1} |K u|_1 is attained at a
sign vector u in {-1, +1}^d and there equals the quadratic form u' K u,
so computing it is a binary quadratic maximization. Two engines:

* exact: enumerate all 2^(d-1) sign classes (u and -u are equivalent,
  coordinate 1 is pinned to +1) in Gray-code order. The running products
  s = K u and q = u' K u are maintained incrementally: flipping
  coordinate p costs O(d) for s and O(1) for q,

      q' = q - 4 u_p s_p + 4 K_pp,      s' = s - 2 u_p K[:, p].

  The reported value is re-evaluated non-incrementally at the winning
  sign vector, so accumulated drift cannot leak into the result.

* heuristic: best-of-restarts local ascent over single sign flips,
  deterministic given the seed. Always a valid lower bound.

A numba-compiled twin of the exact scan is used when numba is
importable; it executes the identical floating-point operations in the
identical order, so results are bit-for-bit the same as the pure-Python
path (tests compare them).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EnumerationCapError, StructuralError
from .kernels import TruncatedKernel, validate_psd

#: Default cap on exact enumeration: 2^27 Gray steps, a few seconds compiled.
ENUMERATION_CAP = 28

#: Default restart count for the ascent heuristic.
DEFAULT_RESTARTS = 16


class NormKind(enum.Enum):
    EXACT = "exact"
    LOWER_BOUND = "lower-bound"
    UPPER_BOUND = "upper-bound"


class NormMethod(enum.Enum):
    GRAY_CODE_ENUMERATION = "gray-code-enumeration"
    SIGN_FLIP_ASCENT = "sign-flip-ascent"
    TRACE_SANDWICH = "trace-sandwich"
    ABS_SUM_BOUND = "abs-sum-bound"


@dataclass(frozen=True, eq=False)
class NormEstimate:
    """A value for (or bound on) the (inf,1) norm of a d x d window."""

    value: float
    kind: NormKind
    d: int
    method: NormMethod
    witness: np.ndarray | None = None

    def witness_signs(self) -> list[int] | None:
        """Witness as a plain list of +-1 ints (JSON-friendly)."""
        if self.witness is None:
            return None
        return [int(x) for x in self.witness]


def _gray_scan_py(k: np.ndarray) -> tuple[float, np.ndarray]:
    """Reference Gray-code scan. Returns (best incremental q, best u)."""
    d = k.shape[0]
    u = np.ones(d)
    # Sequential accumulation (not numpy pairwise sums) so this path is
    # bit-identical to the compiled twin.
    s = np.empty(d)
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += k[i, j]
        s[i] = acc
    q = 0.0
    for i in range(d):
        q += s[i]
    best = q
    best_u = u.copy()
    diag = np.ascontiguousarray(np.diag(k))
    cols = np.ascontiguousarray(k.T)  # row p of k.T is the column K[:, p]
    steps = (1 << (d - 1)) - 1
    for t in range(1, steps + 1):
        # Coordinate 1 stays +1; Gray flip index over coordinates 2..d.
        p = 1 + ((t & -t).bit_length() - 1)
        up = u[p]
        q = q + 4.0 * (diag[p] - up * s[p])
        u[p] = -up
        s -= (2.0 * up) * cols[p]
        if q > best:
            best = q
            best_u = u.copy()
    return best, best_u


def _make_gray_scan_nb():
    try:
        import numba
    except ImportError:  # pragma: no cover - depends on environment
        return None

    @numba.njit(cache=True)
    def scan(k):  # pragma: no cover - exercised via wrapper
        d = k.shape[0]
        u = np.ones(d)
        s = np.empty(d)
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += k[i, j]
            s[i] = acc
        q = 0.0
        for i in range(d):
            q += s[i]
        best = q
        best_u = u.copy()
        steps = (1 << (d - 1)) - 1
        for t in range(1, steps + 1):
            low = t & -t
            p = 0
            while low > 1:
                low >>= 1
                p += 1
            p += 1
            up = u[p]
            q = q + 4.0 * (k[p, p] - up * s[p])
            u[p] = -up
            c = 2.0 * up
            for i in range(d):
                s[i] -= c * k[i, p]
            if q > best:
                best = q
                for i in range(d):
                    best_u[i] = u[i]
        return best, best_u

    return scan


_gray_scan_nb = _make_gray_scan_nb()

#: Set to True to force the pure-Python scan (used by equivalence tests).
FORCE_PURE_PYTHON = False


def _gray_scan(k: np.ndarray) -> tuple[float, np.ndarray]:
    if _gray_scan_nb is not None and not FORCE_PURE_PYTHON:
        best, best_u = _gray_scan_nb(np.ascontiguousarray(k))
        return float(best), np.asarray(best_u)
    return _gray_scan_py(k)


def quadratic_form(k: np.ndarray, u: np.ndarray) -> float:
    """u' K u evaluated directly (no incremental state)."""
    return float(u @ (k @ u))


def inf_one_norm_exact(kernel: TruncatedKernel,
                       cap: int = ENUMERATION_CAP) -> NormEstimate:
    """Exact (inf,1) norm of a PSD window by Gray-code sign enumeration.

    Refuses d > cap (use the heuristic instead) and non-PSD input (the
    sign-vector reduction relies on positive semidefiniteness).
    """
    d = kernel.d
    if d > cap:
        raise EnumerationCapError(
            f"exact enumeration refused at d={d} > cap={cap}; "
            f"use inf_one_norm_heuristic for a lower bound")
    check = validate_psd(kernel)
    if not check.ok:
        raise StructuralError(
            f"exact (inf,1) norm requires a PSD matrix; lambda_min = "
            f"{check.lambda_min:.3e} below tolerance {-check.tolerance:.3e}")
    _, best_u = _gray_scan(kernel.entries)
    value = quadratic_form(kernel.entries, best_u)
    return NormEstimate(value=value, kind=NormKind.EXACT, d=d,
                        method=NormMethod.GRAY_CODE_ENUMERATION,
                        witness=best_u.copy())


def _ascent(k: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Greedy single-flip ascent on u' K u from the given start.

    Coordinates are scanned in ascending index order and the first
    strictly improving flip is taken (deterministic tie-breaking).
    """
    d = k.shape[0]
    diag = np.diag(k)
    s = k @ u
    improved = True
    while improved:
        improved = False
        gains = 4.0 * (diag - u * s)
        for p in range(d):
            if gains[p] > 0.0:
                up = u[p]
                u[p] = -up
                s = s - (2.0 * up) * k[:, p]
                improved = True
                break
    return u


def inf_one_norm_heuristic(kernel: TruncatedKernel,
                           restarts: int = DEFAULT_RESTARTS,
                           seed: int = 0) -> NormEstimate:
    """Best-of-restarts sign-flip ascent; a certified lower bound.

    Restart 0 starts from the all-ones vector (optimal for entrywise
    nonnegative kernels); the remaining starts are seeded random signs,
    one independent stream per restart.
    """
    if restarts < 1:
        raise DomainError(f"need at least one restart, got {restarts}")
    k = kernel.entries
    d = kernel.d
    best_val = -np.inf
    best_u: np.ndarray | None = None
    for r in range(restarts):
        if r == 0:
            u = np.ones(d)
        else:
            rng = np.random.default_rng([seed, r])
            u = np.where(rng.random(d) < 0.5, -1.0, 1.0)
        u = _ascent(k, u)
        val = quadratic_form(k, u)
        if val > best_val:
            best_val = val
            best_u = u
    assert best_u is not None
    if best_u[0] < 0:        # canonicalize the u <-> -u symmetry
        best_u = -best_u
    return NormEstimate(value=best_val, kind=NormKind.LOWER_BOUND, d=d,
                        method=NormMethod.SIGN_FLIP_ASCENT, witness=best_u)


def trace_lower_bound(kernel: TruncatedKernel) -> NormEstimate:
    """tr(K) <= |K|_{inf,1}: the cheap side of the trace sandwich."""
    tr = float(np.trace(kernel.entries))
    return NormEstimate(value=tr, kind=NormKind.LOWER_BOUND, d=kernel.d,
                        method=NormMethod.TRACE_SANDWICH)


def trace_upper_bound(kernel: TruncatedKernel) -> NormEstimate:
    """|K|_{inf,1} <= 2^d tr(K) for PSD K: the loose side of the sandwich."""
    tr = float(np.trace(kernel.entries))
    return NormEstimate(value=float(2.0 ** kernel.d) * tr,
                        kind=NormKind.UPPER_BOUND, d=kernel.d,
                        method=NormMethod.TRACE_SANDWICH)


def abs_sum_upper_bound(kernel: TruncatedKernel) -> NormEstimate:
    """|K|_{inf,1} <= sum_ij |K_ij| (triangle inequality, any K)."""
    total = float(np.abs(kernel.entries).sum())
    return NormEstimate(value=total, kind=NormKind.UPPER_BOUND, d=kernel.d,
                        method=NormMethod.ABS_SUM_BOUND)


def sign_matrix(m: int) -> np.ndarray:
    """All 2^m sign vectors of length m as rows (the V^(n) construction)."""
    if m < 1:
        raise DomainError(f"sign matrix needs m >= 1, got {m}")
    if m > 20:
        raise DomainError(f"refusing to materialize 2^{m} sign vectors")
    n = 1 << m
    rows = np.empty((n, m))
    for c in range(m):
        period = 1 << (m - c - 1)
        col = np.tile(np.repeat(np.array([1.0, -1.0]), period), n // (2 * period))
        rows[:, c] = col
    return rows


def brute_force_inf_one_norm(k: np.ndarray) -> tuple[float, np.ndarray]:
    """Independent oracle: max_u |K u|_1 over all sign vectors, directly.

    Evaluates |K u|_1 (not the quadratic form) for every sign vector, so
    it is valid for any symmetric K and shares no code path with the
    Gray-code engine.
    """
    d = k.shape[0]
    signs = sign_matrix(d)
    ku = signs @ k.T                     # row r is K u_r (K symmetric)
    norms = np.abs(ku).sum(axis=1)
    r = int(np.argmax(norms))
    return float(norms[r]), signs[r]
