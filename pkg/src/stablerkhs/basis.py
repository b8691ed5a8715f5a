"""Orthonormal l2 bases and kernels synthesized from them.

A kernel can be designed the other way round: pick an orthonormal basis
{rho_i} of l2 and a non-increasing eigenvalue sequence {lambda_i}, and
declare K_xy = sum_i lambda_i rho_i(x) rho_i(y). Such models are PSD by
construction; the open question is stability, which this module tests
three ways:

* the sharp criterion: sup over sign sequences u of
  sum_i lambda_i <rho_i, u>^2 is finite; on a finite window this is the
  (inf,1) norm of the synthesized truncation, evaluated here directly in
  eigen-coordinates (exact enumeration or sign-flip ascent);
* a sufficient certificate: sum_i lambda_i |rho_i|_1^2 < infinity,
  which also forces kernel absolute summability;
* the bounded-l1 reduction: when |rho_i|_1 <= A uniformly over the
  active basis vectors, stability is equivalent to eigenvalue
  summability.

Bases are materialized on a finite window T; the discrete Laguerre
family carries an explicit tail requirement (|a|^T below 1e-12) so that
on-window Gram defects stay within the orthonormality tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DomainError, NumericalError
from .generators import (
    Geometric,
    Literal,
    PowerLaw,
    SequenceGenerator,
    parse_generator,
)
from .kernels import KernelSpec, TruncatedKernel
from .opnorm import ENUMERATION_CAP, NormEstimate, NormKind, NormMethod
from .stability import CONVERGING, DIVERGING, ProbeResult, divergence_probe

#: Elementwise Gram tolerance for materialized bases.
EPS_ORTH = 1e-8

#: Laguerre tail requirement: |pole|^window must fall below this.
LAGUERRE_TAIL = 1e-12


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """n orthonormal vectors materialized on a window of length T.

    vectors is T x n with basis elements as columns; rho_i(t) is
    vectors[t - 1, i - 1].
    """

    kind: str
    window: int
    vectors: np.ndarray
    params: dict[str, Any]

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.window:
            raise ConfigError(f"basis matrix shape {v.shape} does not match "
                              f"window {self.window}")
        object.__setattr__(self, "vectors", v)
        v.setflags(write=False)
        dev = gram_deviation(self)
        if dev > EPS_ORTH:
            raise NumericalError(f"basis Gram deviates from identity by "
                                 f"{dev:.3e} > {EPS_ORTH:g} on window "
                                 f"{self.window}")

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def to_config(self) -> dict[str, Any]:
        out = {"kind": self.kind, "window": self.window, "count": self.count}
        out.update(self.params)
        return out


def gram_deviation(basis: OrthoBasis) -> float:
    """max elementwise |B'B - I| on the window."""
    g = basis.vectors.T @ basis.vectors
    return float(np.abs(g - np.eye(basis.count)).max())


def canonical_basis(count: int, window: int | None = None) -> OrthoBasis:
    """The canonical basis e_1..e_count on a window (default count)."""
    window = count if window is None else window
    if count < 1 or window < count:
        raise DomainError(f"need window >= count >= 1, got count={count}, "
                          f"window={window}")
    return OrthoBasis(kind="canonical", window=window,
                      vectors=np.eye(window, count), params={})


def minimal_laguerre_window(pole: float, tail: float = LAGUERRE_TAIL) -> int:
    """Smallest T with |pole|**T < tail."""
    a = abs(pole)
    if a == 0.0:
        return 1
    t = int(np.ceil(np.log(tail) / np.log(a)))
    while a ** t >= tail:
        t += 1
    return t


def laguerre_basis(pole: float, count: int, window: int) -> OrthoBasis:
    """Discrete Laguerre functions via the first-order all-pass recurrence.

    rho_1(t) = sqrt(1 - a^2) a^(t-1); each subsequent vector applies
    y(t) = a y(t-1) + x(t-1) - a x(t). At a = 0 the recurrence
    degenerates to a pure delay and the canonical basis comes out
    exactly.
    """
    a = float(pole)
    if not abs(a) < 1.0:
        raise DomainError(f"Laguerre pole must satisfy |a| < 1, got {a}")
    if count < 1:
        raise DomainError(f"basis count must be >= 1, got {count}")
    need = minimal_laguerre_window(a)
    if window < need:
        raise DomainError(f"window {window} too small for pole {a:g}: "
                          f"|a|^T must fall below {LAGUERRE_TAIL:g}, "
                          f"minimal T is {need}")
    b = np.zeros((window, count))
    t = np.arange(1, window + 1, dtype=float)
    b[:, 0] = np.sqrt(1.0 - a * a) * a ** (t - 1.0)
    for k in range(1, count):
        # transfer (z^-1 - a) / (1 - a z^-1) applied to the previous vector
        b[:, k] = lfilter([-a, 1.0], [1.0, -a], b[:, k - 1])
    return OrthoBasis(kind="laguerre", window=window, vectors=b,
                      params={"pole": a})


def random_orthogonal_basis(seed: int, count: int, window: int) -> OrthoBasis:
    """Orthonormal columns from a seeded Gaussian matrix (QR, signs fixed)."""
    if count < 1 or window < count:
        raise DomainError(f"need window >= count >= 1, got count={count}, "
                          f"window={window}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((window, count)))
    q = q * np.sign(np.diag(r))          # deterministic sign convention
    return OrthoBasis(kind="random", window=window, vectors=q,
                      params={"seed": int(seed)})


@dataclass(frozen=True)
class L1Profile:
    """l1 norms of basis vectors and their linear-growth fit."""

    norms: tuple[float, ...]
    max_ratio: float          # max_i |rho_i|_1 / i
    slope: float              # least-squares slope of |rho_i|_1 against i


def l1_profile(basis: OrthoBasis, count: int | None = None) -> L1Profile:
    """Window l1 norms |rho_i|_1 with a linear-growth coefficient.

    Takenaka-Malmquist-style bases (Laguerre included) obey an
    |rho_i|_1 <= A i bound; max_ratio is the empirical A on this window.
    """
    n = basis.count if count is None else count
    if not 1 <= n <= basis.count:
        raise DomainError(f"count must be in [1, {basis.count}], got {n}")
    norms = np.abs(basis.vectors[:, :n]).sum(axis=0)
    idx = np.arange(1, n + 1, dtype=float)
    slope = float(np.polyfit(idx, norms, 1)[0]) if n >= 2 else float(norms[0])
    return L1Profile(norms=tuple(float(x) for x in norms),
                     max_ratio=float((norms / idx).max()), slope=slope)


@dataclass(frozen=True, eq=False)
class MercerModel:
    """An orthonormal basis paired with a non-increasing eigenvalue law."""

    basis: OrthoBasis
    eigenvalue_law: SequenceGenerator

    def __post_init__(self) -> None:
        lam = self.eigenvalues()
        if np.any(lam < 0):
            raise DomainError("eigenvalues must be non-negative")
        if np.any(np.diff(lam) > 0):
            raise DomainError("eigenvalues must be non-increasing")

    def eigenvalues(self, count: int | None = None) -> np.ndarray:
        n = self.basis.count if count is None else count
        return self.eigenvalue_law.terms(n)

    def eigenvalue_tail_bound(self) -> float:
        """Bound on sum_{i > count} lambda_i (inf when the law is not summable)."""
        law = self.eigenvalue_law
        n = self.basis.count
        if isinstance(law, Literal):
            return float(np.abs(law.terms(max(len(law.values), n))[n:]).sum())
        if isinstance(law, Geometric):
            r = abs(law.ratio)
            if r < 1:
                return float(r ** (n + 1) / (1.0 - r))
            return float("inf")
        if isinstance(law, PowerLaw):
            p = law.exponent
            if p < -1:
                return float(n ** (p + 1) / (-p - 1))   # integral tail bound
            return float("inf")
        if law.abs_summable() == "yes":
            limit = law.abs_sum_limit()
            if limit is not None:
                return float(limit - law.terms(n).sum())
        return float("inf")

    def to_config(self) -> dict[str, Any]:
        return {"basis": self.basis.to_config(),
                "eigenvalues": self.eigenvalue_law.spec_string()}

    def label(self) -> str:
        b = self.basis
        extra = "".join(f",{k}={v}" for k, v in b.params.items())
        return (f"mercer({b.kind}{extra},n={b.count},T={b.window},"
                f"lam={self.eigenvalue_law.spec_string()})")


@dataclass(frozen=True, eq=False)
class MercerSynthesizedSpec(KernelSpec):
    """KernelSpec view of a synthesized model, usable by every other module.

    The basis vectors are materialized on a window of length T and, as
    square-summable sequences, are exactly zero beyond it, so the
    synthesized kernel vanishes outside the leading T x T block. Entries
    past the window are therefore 0 exactly (for the materialized
    object; the ideal infinite basis differs by the documented tail).
    """

    model: MercerModel
    family = "mercer"

    @cached_property
    def _window_matrix(self) -> np.ndarray:
        b = self.model.basis.vectors
        lam = self.model.eigenvalues()
        w = (b * lam) @ b.T
        w = np.triu(w) + np.triu(w, 1).T
        w.setflags(write=False)
        return w

    @property
    def support(self) -> int | None:
        return self.model.basis.window

    def _entry(self, i: int, j: int) -> float:
        t = self.model.basis.window
        if i > t or j > t:
            return 0.0
        return float(self._window_matrix[i - 1, j - 1])

    def _block(self, d: int) -> np.ndarray:
        t = self.model.basis.window
        if d <= t:
            return self._window_matrix[:d, :d].copy()
        out = np.zeros((d, d))
        out[:t, :t] = self._window_matrix
        return out

    def diagonal(self, d: int) -> np.ndarray:
        if d < 1:
            raise DomainError(f"truncation order must be >= 1, got {d}")
        out = np.zeros(d)
        m = min(d, self.model.basis.window)
        out[:m] = np.diag(self._window_matrix)[:m]
        return out

    def to_config(self) -> dict[str, Any]:
        cfg = self.model.to_config()
        basis = cfg.pop("basis")
        out = {"family": self.family, "basis": basis["kind"],
               "count": basis["count"], "window": basis["window"],
               "eigenvalues": cfg["eigenvalues"]}
        if "pole" in basis:
            out["pole"] = basis["pole"]
        if "seed" in basis:
            out["seed"] = basis["seed"]
        return out

    def label(self) -> str:
        return self.model.label()


def mercer_spec_from_config(config: dict[str, Any]) -> MercerSynthesizedSpec:
    """Rebuild a synthesized-kernel spec from its key-value form."""
    for key in ("basis", "eigenvalues", "count", "window"):
        if key not in config:
            raise DomainError(f"mercer kernel config requires {key!r}")
    kind = config["basis"]
    count = int(config["count"])
    window = int(config["window"])
    if kind == "canonical":
        basis = canonical_basis(count, window)
    elif kind == "laguerre":
        if "pole" not in config:
            raise DomainError("laguerre basis config requires 'pole'")
        basis = laguerre_basis(float(config["pole"]), count, window)
    elif kind == "random":
        basis = random_orthogonal_basis(int(config.get("seed", 0)), count, window)
    else:
        raise DomainError(f"unknown basis kind {kind!r}")
    model = MercerModel(basis=basis,
                        eigenvalue_law=parse_generator(config["eigenvalues"]))
    return MercerSynthesizedSpec(model)


def synthesize_kernel(model: MercerModel, d: int) -> TruncatedKernel:
    """Materialize sum_i lambda_i rho_i rho_i' on the leading d-window.

    The series is truncated at the basis count; the recorded residual
    bound is the eigenvalue tail mass (basis vectors are unit-norm, so
    entries of the dropped tail are bounded by it). A non-summable
    eigenvalue law combined with a basis whose vectors overlap is
    refused: the synthesized window would silently misrepresent the
    intended infinite object.
    """
    spec = MercerSynthesizedSpec(model)
    t = model.basis.window
    if not 1 <= d <= t:
        raise DomainError(f"need 1 <= d <= window {t}, got d={d}")
    residual = model.eigenvalue_tail_bound()
    if not np.isfinite(residual) and model.basis.kind != "canonical":
        raise DomainError(
            f"eigenvalue law {model.eigenvalue_law.spec_string()} is not "
            f"summable and the {model.basis.kind} basis vectors overlap; "
            f"refusing to synthesize a misleading finite window")
    from .kernels import truncate

    kernel = truncate(spec, d)
    source = dict(kernel.source)
    source["tail_residual_bound"] = residual if np.isfinite(residual) else "inf"
    return TruncatedKernel(kernel.d, kernel.entries.copy(), source)


# --------------------------------------------------------------------------
# Stability tests in the Mercer feature space

def _count_grid(n: int, min_points: int = 3) -> list[int]:
    grid = []
    m = 2
    while m < n:
        grid.append(m)
        m *= 2
    grid.append(n)
    if len(grid) < min_points:
        raise ConfigError(f"basis count {n} too small for a divergence probe "
                          f"({len(grid)} grid points < {min_points})")
    return grid


CERTIFIED = "Certified"
NOT_CERTIFIED = "NotCertified"


@dataclass(frozen=True)
class CertificationResult:
    """Outcome of the weighted-l1 sufficient stability certificate."""

    verdict: str
    terms: tuple[float, ...]              # lambda_i * |rho_i|_1^2
    probe: ProbeResult
    cross_check: ProbeResult | None       # abs-sum probe of the synthesis
    contradiction: bool

    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "weighted_l1_probe": self.probe.to_dict(),
            "abs_sum_cross_check": None if self.cross_check is None
            else self.cross_check.to_dict(),
            "contradiction": self.contradiction,
        }


def sufficient_stability_test(model: MercerModel,
                              cross_check_grid: Sequence[int] | None = None,
                              ) -> CertificationResult:
    """Probe sum_i lambda_i |rho_i|_1^2; certify stability on convergence.

    A certificate implies kernel absolute summability, so a certified
    model is cross-checked: the absolute sums of its synthesized
    truncations must also probe as converging. A contradiction is
    recorded, never silently dropped.
    """
    lam = model.eigenvalues()
    norms = np.asarray(l1_profile(model.basis).norms)
    terms = lam * norms ** 2
    grid = _count_grid(model.basis.count)
    partial = [float(terms[:m].sum()) for m in grid]
    probe = divergence_probe(grid, partial)
    verdict = CERTIFIED if probe.decision == CONVERGING else NOT_CERTIFIED

    cross: ProbeResult | None = None
    contradiction = False
    if verdict == CERTIFIED:
        # Probe past the support: the materialized kernel is exactly
        # zero beyond its window, and the probe needs to see at least
        # two flat increments to register the plateau.
        t = 4 * model.basis.window
        if cross_check_grid is None:
            g, acc = [], 4
            while acc < t:
                g.append(acc)
                acc *= 2
            g.append(t)
            cross_check_grid = g
        spec = MercerSynthesizedSpec(model)
        from .stability import window_sums

        abs_sums, _ = window_sums(spec, list(cross_check_grid))
        cross = divergence_probe(list(cross_check_grid), abs_sums)
        contradiction = cross.decision == DIVERGING
    return CertificationResult(verdict=verdict,
                               terms=tuple(float(x) for x in terms),
                               probe=probe, cross_check=cross,
                               contradiction=contradiction)


@dataclass(frozen=True)
class BoundedL1Result:
    """Stability-iff-summable-eigenvalues reduction under a uniform l1 bound."""

    applicable: bool
    bound: float
    violating_index: int | None
    probe: ProbeResult | None
    verdict: str            # "stable" | "unstable" | "undecided" | "inapplicable"

    def to_dict(self) -> dict[str, Any]:
        return {
            "applicable": self.applicable,
            "bound": self.bound,
            "violating_index": self.violating_index,
            "eigenvalue_probe": None if self.probe is None else self.probe.to_dict(),
            "verdict": self.verdict,
        }


def bounded_l1_test(model: MercerModel, bound: float) -> BoundedL1Result:
    """Reduce stability to eigenvalue summability when |rho_i|_1 <= bound.

    The bound is verified on the materialized window for every index
    with lambda_i > 0; a violation makes the test inapplicable (the
    reduction needs the uniform bound) and is reported as such.
    """
    lam = model.eigenvalues()
    norms = np.asarray(l1_profile(model.basis).norms)
    active = lam > 0
    over = np.nonzero(active & (norms > bound))[0]
    if over.size:
        return BoundedL1Result(applicable=False, bound=bound,
                               violating_index=int(over[0]) + 1, probe=None,
                               verdict="inapplicable")
    grid = _count_grid(model.basis.count)
    sums = [float(lam[:m].sum()) for m in grid]
    probe = divergence_probe(grid, sums)
    verdict = {CONVERGING: "stable", DIVERGING: "unstable"}.get(
        probe.decision, "undecided")
    return BoundedL1Result(applicable=True, bound=bound, violating_index=None,
                           probe=probe, verdict=verdict)


# --------------------------------------------------------------------------
# Sharp condition on the window: sup over sign vectors of
# sum_i lambda_i <rho_i, u>^2, evaluated in eigen-coordinates.

def _form_value(lam: np.ndarray, c: np.ndarray) -> float:
    return float(np.dot(lam, c * c))


def ns_condition_exact(lam: np.ndarray, bd: np.ndarray) -> tuple[float, np.ndarray]:
    """Gray-code enumeration of the eigen-quadratic form on a d-window.

    bd holds the windowed basis vectors as columns (d x n); the running
    coefficient vector c = bd' u is updated in O(n) per sign flip.
    """
    d = bd.shape[0]
    u = np.ones(d)
    c = bd.sum(axis=0)
    best = _form_value(lam, c)
    best_u = u.copy()
    steps = (1 << (d - 1)) - 1
    for t in range(1, steps + 1):
        p = 1 + ((t & -t).bit_length() - 1)
        up = u[p]
        u[p] = -up
        c = c - (2.0 * up) * bd[p, :]
        val = _form_value(lam, c)
        if val > best:
            best = val
            best_u = u.copy()
    return best, best_u


def ns_condition_ascent(lam: np.ndarray, bd: np.ndarray,
                        u: np.ndarray) -> np.ndarray:
    """Greedy sign-flip ascent on the eigen-quadratic form.

    Maintains w = diag(lam) bd' u; the gain of flipping coordinate p is
    4 (K_pp - u_p (K u)_p) with (K u)_p = bd[p] . w and
    K_pp = sum_i lambda_i bd[p, i]^2, never forming K itself.
    """
    d = bd.shape[0]
    diag = (bd * bd) @ lam
    w = lam * (bd.T @ u)
    improved = True
    while improved:
        improved = False
        ku = bd @ w
        gains = 4.0 * (diag - u * ku)
        for p in range(d):
            if gains[p] > 0.0:
                up = u[p]
                u[p] = -up
                w = w - (2.0 * up) * (lam * bd[p, :])
                improved = True
                break
    return u


def ns_condition_estimate(model: MercerModel, d: int,
                          cap: int = ENUMERATION_CAP,
                          restarts: int = 16, seed: int = 0) -> NormEstimate:
    """sup over sign vectors u of sum_i lambda_i <rho_i, u>^2 on a d-window.

    Exact (Gray enumeration) up to the cap, sign-flip ascent beyond. By
    the feature-space characterization this equals the (inf,1) norm of
    the synthesized truncation; the identity is exercised cross-module
    in the test suite rather than assumed here.
    """
    t = model.basis.window
    if not 1 <= d <= t:
        raise DomainError(f"need 1 <= d <= window {t}, got d={d}")
    lam = model.eigenvalues()
    bd = np.ascontiguousarray(model.basis.vectors[:d, :])
    if d <= cap:
        _, u = ns_condition_exact(lam, bd)
        value = _form_value(lam, bd.T @ u)
        return NormEstimate(value=value, kind=NormKind.EXACT, d=d,
                            method=NormMethod.GRAY_CODE_ENUMERATION,
                            witness=u)
    best_val = -np.inf
    best_u: np.ndarray | None = None
    for r in range(restarts):
        if r == 0:
            u = np.ones(d)
        else:
            rng = np.random.default_rng([seed, r])
            u = np.where(rng.random(d) < 0.5, -1.0, 1.0)
        u = ns_condition_ascent(lam, bd, u)
        val = _form_value(lam, bd.T @ u)
        if val > best_val:
            best_val = val
            best_u = u
    assert best_u is not None
    if best_u[0] < 0:
        best_u = -best_u
    return NormEstimate(value=best_val, kind=NormKind.LOWER_BOUND, d=d,
                        method=NormMethod.SIGN_FLIP_ASCENT, witness=best_u)


def builtin_model_zoo() -> dict[str, MercerModel]:
    """Named reference models exercised by the synth command and the tests."""
    zoo: dict[str, MercerModel] = {}
    zoo["canonical-power2"] = MercerModel(
        basis=canonical_basis(128), eigenvalue_law=PowerLaw(-2.0))
    zoo["canonical-geometric"] = MercerModel(
        basis=canonical_basis(128), eigenvalue_law=Geometric(0.5))
    zoo["canonical-literal"] = MercerModel(
        basis=canonical_basis(16), eigenvalue_law=Literal((3.0, 2.0, 1.0)))
    zoo["laguerre08-power4"] = MercerModel(
        basis=laguerre_basis(0.8, 20, 400), eigenvalue_law=PowerLaw(-4.0))
    zoo["laguerre05-power4"] = MercerModel(
        basis=laguerre_basis(0.5, 20, 256), eigenvalue_law=PowerLaw(-4.0))
    zoo["laguerre08-power2"] = MercerModel(
        basis=laguerre_basis(0.8, 20, 400), eigenvalue_law=PowerLaw(-2.0))
    zoo["random-power4"] = MercerModel(
        basis=random_orthogonal_basis(11, 32, 128), eigenvalue_law=PowerLaw(-4.0))
    return zoo
