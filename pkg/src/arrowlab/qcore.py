"""Finite-dimensional quantum-state algebra.

Density matrices, Kraus channels, partial traces, and the entropy
functionals (von Neumann entropy, relative entropy, Klein gap, strong
subadditivity, channel monotonicity) together with seeded random
ensembles used by the property suites.

All operations are pure functions of their inputs; nothing here mutates
shared state, so values can be used freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StructuralError, ValidationError

# Numerical floors.  Eigenvalues below EIG_FLOOR contribute 0 to entropies
# (0*ln 0 := 0); support membership is decided at SUPPORT_TOL.
EIG_FLOOR = 1e-14
SUPPORT_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
KRAUS_TOL = 1e-10

INCOMPARABLE = None  # sentinel for monotonicity_gap when a relative entropy is infinite


def _as_complex(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {a.shape}")
    return a


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive, unit-trace Hermitian matrix: the universal state object.

    Validated on construction: Hermitian within 1e-12 (max entry deviation),
    eigenvalues >= -1e-12, trace 1 within 1e-12.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex(self.matrix)
        if not np.all(np.isfinite(m.view(float))):
            raise ValidationError("density matrix has non-finite entries")
        if not is_hermitian(m):
            dev = np.max(np.abs(m - m.conj().T))
            raise ValidationError(f"density matrix not Hermitian: max deviation {dev:.3e}")
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {tr:.17g} differs from 1")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < -SUPPORT_TOL:
            raise ValidationError(f"density matrix has eigenvalue {evals.min():.3e} < -1e-12")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigensystem(self):
        """Eigenvalues (ascending) and eigenvectors as columns."""
        return np.linalg.eigh(self.matrix)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def diagonal(cls, probs) -> "DensityMatrix":
        p = np.asarray(probs, dtype=float)
        return cls(np.diag(p).astype(complex))

    def to_json_dict(self) -> dict:
        return matrix_to_json(self.matrix)

    @classmethod
    def from_json_dict(cls, d: dict) -> "DensityMatrix":
        return cls(matrix_from_json(d))


def matrix_to_json(m: np.ndarray) -> dict:
    """Serialize a complex matrix as {dim, re[][], im[][]}."""
    m = _as_complex(m)
    return {"dim": m.shape[0], "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(d: dict) -> np.ndarray:
    m = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    if m.shape != (d["dim"], d["dim"]):
        raise StructuralError(f"matrix payload shape {m.shape} does not match dim {d['dim']}")
    return m


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """Trace-preserving completely positive map given by Kraus operators."""

    kraus_operators: list = field(default_factory=list)

    def __post_init__(self):
        ops = [np.asarray(k, dtype=complex) for k in self.kraus_operators]
        if not ops:
            raise ValidationError("channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise StructuralError("Kraus operators must share one shape")
        comp = sum(k.conj().T @ k for k in ops)
        dev = np.max(np.abs(comp - np.eye(shape[1])))
        if dev > KRAUS_TOL:
            raise ValidationError(f"Kraus completeness violated: max deviation {dev:.3e}")
        object.__setattr__(self, "kraus_operators", ops)

    @property
    def dim_in(self) -> int:
        return self.kraus_operators[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus_operators[0].shape[0]


@dataclass(frozen=True, eq=False)
class TripartiteState:
    """State on a three-factor tensor space with factor dimensions recorded."""

    rho: DensityMatrix
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise StructuralError(f"dims must be three positive integers, got {self.dims}")
        if dims[0] * dims[1] * dims[2] != self.rho.dim:
            raise StructuralError(
                f"product of dims {dims} = {np.prod(dims)} does not match state dimension {self.rho.dim}"
            )
        object.__setattr__(self, "dims", dims)


def partial_trace(state, keep, dims=None) -> DensityMatrix:
    """Trace out all factors not in `keep` and return the reduced state.

    `state` is a TripartiteState, or a DensityMatrix/array with explicit
    `dims`.  `keep` is a nonempty proper subset of factor indices; factor
    order is preserved in the output.
    """
    if isinstance(state, TripartiteState):
        rho = state.rho.matrix
        dims = state.dims
    elif isinstance(state, DensityMatrix):
        rho = state.matrix
    else:
        rho = _as_complex(state)
    if dims is None:
        raise StructuralError("partial_trace needs subsystem dimensions")
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    if int(np.prod(dims)) != rho.shape[0]:
        raise StructuralError(f"dims {dims} incompatible with matrix dimension {rho.shape[0]}")
    keep = sorted(set(int(i) for i in keep))
    if not keep or any(i < 0 or i >= n for i in keep) or len(keep) == n:
        raise StructuralError(f"keep={keep} must be a nonempty proper subset of range({n})")

    t = rho.reshape(dims + dims)
    # Contract each traced factor by giving its row and column axes one index.
    import string

    row = list(string.ascii_lowercase[:n])
    col = list(string.ascii_lowercase[n:2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    subscript = "".join(row) + "".join(col)
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    d_out = int(np.prod([dims[i] for i in keep]))
    reduced = np.einsum(f"{subscript}->{out}", t).reshape(d_out, d_out)
    # Clean tiny asymmetries before validating.
    reduced = 0.5 * (reduced + reduced.conj().T)
    return DensityMatrix(reduced)


def apply_channel(rho: DensityMatrix, ch: QuantumChannel) -> DensityMatrix:
    """Apply a Kraus channel: sum_k K rho K^dagger."""
    if ch.dim_in != rho.dim:
        raise StructuralError(f"channel input dimension {ch.dim_in} != state dimension {rho.dim}")
    out = sum(k @ rho.matrix @ k.conj().T for k in ch.kraus_operators)
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out)


def _entropy_from_eigs(evals: np.ndarray) -> float:
    lam = evals[evals > EIG_FLOOR]
    return float(max(0.0, -np.sum(lam * np.log(lam))))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-Tr(rho ln rho) in nats; eigenvalues below 1e-14 contribute 0."""
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    evals = np.linalg.eigvalsh(rho.matrix)
    return _entropy_from_eigs(evals)


def relative_entropy(sigma: DensityMatrix, omega: DensityMatrix) -> float:
    """Tr sigma (ln sigma - ln omega); +inf when supp(sigma) escapes supp(omega).

    The support test projects sigma onto omega's kernel (eigenvalues below
    1e-12); any weight there makes the result the explicit math.inf sentinel.
    """
    if sigma.dim != omega.dim:
        raise StructuralError(f"dimension mismatch {sigma.dim} vs {omega.dim}")
    w_evals, w_vecs = omega.eigensystem()
    s_in_w = w_vecs.conj().T @ sigma.matrix @ w_vecs
    diag_weights = np.real(np.diag(s_in_w))
    kernel = w_evals <= SUPPORT_TOL
    if np.any(diag_weights[kernel] > SUPPORT_TOL):
        return math.inf
    s_evals = np.linalg.eigvalsh(sigma.matrix)
    tr_s_ln_s = -_entropy_from_eigs(s_evals)
    ln_w = np.where(kernel, 0.0, np.log(np.maximum(w_evals, EIG_FLOOR)))
    tr_s_ln_w = float(np.dot(diag_weights, ln_w))
    return tr_s_ln_s - tr_s_ln_w


_KLEIN_FUNCTIONS = {
    "xlogx": (lambda x: x * np.log(x), lambda x: np.log(x) + 1.0),
    "x2": (lambda x: x * x, lambda x: 2.0 * x),
}


def klein_gap(a, b, f: str = "xlogx") -> float:
    """Tr f(B) - Tr f(A) - Tr(f'(A)(B-A)) for convex f; nonnegative up to roundoff.

    f is one of "xlogx" (requires strictly positive spectra) or "x2".
    """
    a = _as_complex(a)
    b = _as_complex(b)
    if a.shape != b.shape:
        raise StructuralError(f"shape mismatch {a.shape} vs {b.shape}")
    if not (is_hermitian(a) and is_hermitian(b)):
        raise ValidationError("klein_gap expects Hermitian matrices")
    if f not in _KLEIN_FUNCTIONS:
        raise DomainError(f"unknown convex function tag {f!r}; use one of {sorted(_KLEIN_FUNCTIONS)}")
    fn, dfn = _KLEIN_FUNCTIONS[f]
    ea, va = np.linalg.eigh(a)
    eb = np.linalg.eigvalsh(b)
    if f == "xlogx" and (ea.min() <= 0 or eb.min() <= 0):
        raise DomainError("xlogx needs strictly positive spectra on both arguments")
    tr_fb = float(np.sum(fn(eb)))
    tr_fa = float(np.sum(fn(ea)))
    fprime_a = (va * dfn(ea)) @ va.conj().T
    tr_corr = float(np.real(np.trace(fprime_a @ (b - a))))
    return tr_fb - tr_fa - tr_corr


def ssa_gap(state: TripartiteState) -> float:
    """S(rho_12) + S(rho_23) - S(rho_123) - S(rho_2) for a tripartite state."""
    s123 = von_neumann_entropy(state.rho)
    s12 = von_neumann_entropy(partial_trace(state, keep=(0, 1)))
    s23 = von_neumann_entropy(partial_trace(state, keep=(1, 2)))
    s2 = von_neumann_entropy(partial_trace(state, keep=(1,)))
    return s12 + s23 - s123 - s2


def monotonicity_gap(sigma: DensityMatrix, omega: DensityMatrix, ch: QuantumChannel):
    """S(sigma||omega) - S(ch sigma||ch omega), or None when incomparable.

    The gap is defined only when both relative entropies are finite; a
    support violation on either side yields None rather than an error.
    """
    if ch.dim_in != sigma.dim or sigma.dim != omega.dim:
        raise StructuralError("channel and states must share the input dimension")
    s_before = relative_entropy(sigma, omega)
    if math.isinf(s_before):
        return INCOMPARABLE
    s_after = relative_entropy(apply_channel(sigma, ch), apply_channel(omega, ch))
    if math.isinf(s_after):
        return INCOMPARABLE
    return s_before - s_after


def random_density_matrix(dim: int, rank: int, seed) -> DensityMatrix:
    """Seeded Wishart-normalized random state of the requested rank."""
    if not 1 <= rank <= dim:
        raise DomainError(f"rank must satisfy 1 <= rank <= dim, got rank={rank}, dim={dim}")
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m /= np.real(m.trace())
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m)


def random_unitary(dim: int, seed) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(dim: int, scale: float, seed) -> np.ndarray:
    """GUE-type Hermitian matrix with entry scale `scale`/sqrt(dim)."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (scale / np.sqrt(dim)) * 0.5 * (g + g.conj().T)


def random_channel(dim: int, n_kraus: int, seed) -> QuantumChannel:
    """Seeded random channel from a Haar isometry (Stinespring dilation)."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim * n_kraus, dim)) + 1j * rng.normal(size=(dim * n_kraus, dim))
    q, _ = np.linalg.qr(g)
    kraus = [q[i * dim:(i + 1) * dim, :] for i in range(n_kraus)]
    return QuantumChannel(kraus)


def identity_channel(dim: int) -> QuantumChannel:
    return QuantumChannel([np.eye(dim, dtype=complex)])


def depolarizing_channel(dim: int) -> QuantumChannel:
    """Fully depolarizing channel: every input goes to identity/dim.

    Kraus set: the d^2 Weyl shift/clock operators scaled by 1/d.
    """
    omega = np.exp(2j * np.pi / dim)
    shift = np.roll(np.eye(dim, dtype=complex), 1, axis=0)
    clock = np.diag(omega ** np.arange(dim))
    kraus = []
    for a in range(dim):
        for b in range(dim):
            kraus.append(np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b) / dim)
    return QuantumChannel(kraus)
