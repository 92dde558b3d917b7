"""Right-linear operators on A_{r,C}^n, their realizations and norms.

An operator is stored as four h x n blocks of A_r entries acting by left
multiplication:

    S(x + i*y) = S00 x + S01 y + i*(S10 x + S11 y),   x, y in A_r^n.

Operators with S00 = S11 and S01 = S10 = 0 act componentwise over A_r and
are the A_r-entried kind used for covariance square roots and integrands.

Vectors use one fixed flat layout everywhere: component-major, the real
A_r part before the i-part, basis index minor.  A vector z in A_{r,C}^n is
the array z.reshape(n, 2, dim) with z[k, 0] the coefficients of re(z_k)
and z[k, 1] those of im(z_k).  Realized operators are plain real matrices
of shape (2 dim h, 2 dim n) acting on that layout.

Because multiplication is nonassociative above the quaternions, composing
two structured operators generally leaves the structured class; compose
in realized (matrix) form, or entrywise for A_r-entried blocks where the
product stays explicit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .algebra import (
    AlgebraError,
    CdComplex,
    CdReal,
    cd_sqrt,
    dim_of,
    mul_tensor,
)


class NotSPD(AlgebraError):
    """Matrix failed the symmetric positive-definite gate."""


class PowerIterationError(AlgebraError):
    pass


# ---------------------------------------------------------------- vectors

def vec_size(level: int, n: int) -> int:
    return 2 * dim_of(level) * n


def embed_real(level: int, x) -> np.ndarray:
    """R^n -> A_{r,C}^n along i_0, as a flat layout vector."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (n, 2, dim_of(level)))
    out[..., :, 0, 0] = x
    return out.reshape(x.shape[:-1] + (vec_size(level, n),))


def vec_norm2(v: np.ndarray, axis: int = -1) -> np.ndarray | float:
    """||z||^2 = sum_j 2|re z_j|^2 + 2|im z_j|^2 on flat layout vectors."""
    return 2.0 * np.sum(np.asarray(v) ** 2, axis=axis)


def re_inner(u: np.ndarray, v: np.ndarray, level: int, n: int) -> np.ndarray | float:
    """Re<u, v> = re.re - im.im on flat layout vectors (batched)."""
    dim = dim_of(level)
    us = np.asarray(u).reshape(u.shape[:-1] + (n, 2, dim))
    vs = np.asarray(v).reshape(v.shape[:-1] + (n, 2, dim))
    re = np.sum(us[..., 0, :] * vs[..., 0, :], axis=(-2, -1))
    im = np.sum(us[..., 1, :] * vs[..., 1, :], axis=(-2, -1))
    return re - im


@dataclass(frozen=True)
class CdVector:
    """Element of A_{r,C}^n in the fixed flat layout."""

    level: int
    n: int
    data: np.ndarray  # (n, 2, dim)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.shape != (self.n, 2, dim_of(self.level)):
            raise AlgebraError(f"bad vector shape {d.shape}")
        object.__setattr__(self, "data", d)

    @classmethod
    def zero(cls, level: int, n: int) -> "CdVector":
        return cls(level, n, np.zeros((n, 2, dim_of(level))))

    @classmethod
    def from_components(cls, comps: list[CdComplex]) -> "CdVector":
        level = comps[0].level
        data = np.stack([np.stack([c.re.coeffs, c.im.coeffs]) for c in comps])
        return cls(level, len(comps), data)

    @classmethod
    def from_vec(cls, level: int, n: int, flat: np.ndarray) -> "CdVector":
        return cls(level, n, np.asarray(flat, dtype=float).reshape(n, 2, dim_of(level)))

    @classmethod
    def embedded_real(cls, level: int, x) -> "CdVector":
        x = np.asarray(x, dtype=float)
        return cls.from_vec(level, len(x), embed_real(level, x))

    @property
    def vec(self) -> np.ndarray:
        return self.data.reshape(-1)

    def component(self, k: int) -> CdComplex:
        return CdComplex(CdReal(self.level, self.data[k, 0]), CdReal(self.level, self.data[k, 1]))

    def components(self) -> list[CdComplex]:
        return [self.component(k) for k in range(self.n)]

    def norm2(self) -> float:
        return float(vec_norm2(self.vec))

    def __add__(self, other: "CdVector") -> "CdVector":
        return CdVector(self.level, self.n, self.data + other.data)

    def __sub__(self, other: "CdVector") -> "CdVector":
        return CdVector(self.level, self.n, self.data - other.data)

    def __rmul__(self, scalar) -> "CdVector":
        return CdVector(self.level, self.n, self.data * float(scalar))

    def isclose(self, other: "CdVector", tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.data - other.data)) <= tol)


@dataclass(frozen=True)
class RealFunctional:
    """Continuous R-linear functional y(x) = <coeffs, vec(x)> on A_{r,C}^n."""

    level: int
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (vec_size(self.level, self.n),):
            raise AlgebraError(f"functional needs {vec_size(self.level, self.n)} coefficients")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        if isinstance(x, CdVector):
            return float(self.coeffs @ x.vec)
        return np.asarray(x) @ self.coeffs


# ---------------------------------------------------------------- entry blocks

def _entries(level: int, h: int, n: int, arr) -> np.ndarray:
    if arr is None:
        return np.zeros((h, n, dim_of(level)))
    a = np.asarray(arr, dtype=float)
    if a.shape != (h, n, dim_of(level)):
        raise AlgebraError(f"block shape {a.shape} != {(h, n, dim_of(level))}")
    return a


def entries_conj_transpose(entries: np.ndarray) -> np.ndarray:
    out = entries.transpose(1, 0, 2).copy()
    out[..., 1:] *= -1.0
    return out


def compose_entries(a: np.ndarray, b: np.ndarray, level: int) -> np.ndarray:
    """Entrywise product of A_r-entried blocks: (a o b)_{lj} = sum_k a_lk b_kj."""
    return np.einsum("pxy,lkx,kjy->ljp", mul_tensor(level), a, b)


def entries_trace(entries: np.ndarray) -> float:
    """Tr(A A*) = sum_{l,k} |A_{l,k}|^2 for an A_r-entried block."""
    return float(np.sum(entries**2))


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class RightLinearOp:
    """Four-block right-linear operator A_{r,C}^n -> A_{r,C}^h."""

    level: int
    h: int
    n: int
    s00: np.ndarray
    s01: np.ndarray
    s10: np.ndarray
    s11: np.ndarray

    def __post_init__(self):
        for name in ("s00", "s01", "s10", "s11"):
            object.__setattr__(self, name, _entries(self.level, self.h, self.n, getattr(self, name)))

    # -------- constructors

    @classmethod
    def from_blocks(cls, level, s00=None, s01=None, s10=None, s11=None, h=None, n=None):
        for blk in (s00, s01, s10, s11):
            if blk is not None:
                h = h if h is not None else np.asarray(blk).shape[0]
                n = n if n is not None else np.asarray(blk).shape[1]
                break
        if h is None or n is None:
            raise AlgebraError("shape underdetermined: give a block or h and n")
        return cls(level, h, n, s00, s01, s10, s11)

    @classmethod
    def lri(cls, level: int, entries) -> "RightLinearOp":
        """A_r-entried operator acting componentwise: J(x + i*y) = Jx + i*Jy."""
        e = np.asarray(entries, dtype=float)
        return cls(level, e.shape[0], e.shape[1], e, None, None, e)

    @classmethod
    def identity(cls, level: int, n: int) -> "RightLinearOp":
        e = np.zeros((n, n, dim_of(level)))
        e[np.arange(n), np.arange(n), 0] = 1.0
        return cls.lri(level, e)

    @classmethod
    def from_real_matrix(cls, level: int, mat) -> "RightLinearOp":
        mat = np.asarray(mat, dtype=float)
        e = np.zeros(mat.shape + (dim_of(level),))
        e[..., 0] = mat
        return cls.lri(level, e)

    @classmethod
    def left_mult(cls, a: CdReal, n: int = 1) -> "RightLinearOp":
        e = np.zeros((n, n, dim_of(a.level)))
        e[np.arange(n), np.arange(n), :] = a.coeffs
        return cls.lri(a.level, e)

    # -------- structure

    @property
    def is_lri(self) -> bool:
        return (
            not self.s01.any()
            and not self.s10.any()
            and np.array_equal(self.s00, self.s11)
        )

    @property
    def entries(self) -> np.ndarray:
        if not self.is_lri:
            raise AlgebraError("operator is not A_r-entried")
        return self.s00

    def blocks(self) -> dict[tuple[int, int], np.ndarray]:
        return {(0, 0): self.s00, (0, 1): self.s01, (1, 0): self.s10, (1, 1): self.s11}

    # -------- evaluation

    @cached_property
    def realized(self) -> np.ndarray:
        """Real matrix on the flat layout, assembled from left-mult blocks."""
        dim = dim_of(self.level)
        T = mul_tensor(self.level)
        m6 = np.zeros((self.h, 2, dim, self.n, 2, dim))
        for (i, j), blk in self.blocks().items():
            # left-mult matrix of entry (l,k): L[p, y] = sum_a T[p, a, y] blk[l, k, a]
            m6[:, i, :, :, j, :] = np.einsum("pay,lka->lpky", T, blk)
        return m6.reshape(2 * dim * self.h, 2 * dim * self.n)

    def apply_vec(self, v: np.ndarray) -> np.ndarray:
        """Batched application on flat layout arrays (..., 2 dim n)."""
        return np.asarray(v) @ self.realized.T

    def apply(self, x: CdVector) -> CdVector:
        """Structured evaluation through the multiplication tensor."""
        if x.level != self.level or x.n != self.n:
            raise AlgebraError("operand mismatch")
        T = mul_tensor(self.level)
        xr, xi = x.data[:, 0, :], x.data[:, 1, :]
        out_re = np.einsum("pab,lka,kb->lp", T, self.s00, xr) + np.einsum(
            "pab,lka,kb->lp", T, self.s01, xi
        )
        out_im = np.einsum("pab,lka,kb->lp", T, self.s10, xr) + np.einsum(
            "pab,lka,kb->lp", T, self.s11, xi
        )
        return CdVector(self.level, self.h, np.stack([out_re, out_im], axis=1))

    # -------- algebra

    def adjoint(self) -> "RightLinearOp":
        """Adjoint for Re<Sx, y> = Re<x, S*y>: conjugate-transpose entries,
        with the cross blocks swapped and negated by the i-structure."""
        return RightLinearOp(
            self.level,
            self.n,
            self.h,
            entries_conj_transpose(self.s00),
            -entries_conj_transpose(self.s10),
            -entries_conj_transpose(self.s01),
            entries_conj_transpose(self.s11),
        )

    def hs_norm2(self) -> float:
        """||S||_2^2; reduces to 2Tr(AA*) + 2Tr(BB*) for S = A + i*B."""
        return float(
            np.sum(self.s00**2) + np.sum(self.s01**2) + np.sum(self.s10**2) + np.sum(self.s11**2)
        )

    def scaled(self, c: float) -> "RightLinearOp":
        return RightLinearOp(
            self.level, self.h, self.n, self.s00 * c, self.s01 * c, self.s10 * c, self.s11 * c
        )

    def __add__(self, other: "RightLinearOp") -> "RightLinearOp":
        if (self.level, self.h, self.n) != (other.level, other.h, other.n):
            raise AlgebraError("operator shape mismatch")
        return RightLinearOp(
            self.level,
            self.h,
            self.n,
            self.s00 + other.s00,
            self.s01 + other.s01,
            self.s10 + other.s10,
            self.s11 + other.s11,
        )


def op_compose(a: np.ndarray | RightLinearOp, b: np.ndarray | RightLinearOp) -> np.ndarray:
    """Composition in realized form only (structure is not closed under it)."""
    ma = a.realized if isinstance(a, RightLinearOp) else np.asarray(a)
    mb = b.realized if isinstance(b, RightLinearOp) else np.asarray(b)
    return ma @ mb


def op_trace_aa_star(block: np.ndarray | RightLinearOp) -> float:
    """Tr(AA*) for an A_r-entried block, by the entry-norm formula."""
    entries = block.entries if isinstance(block, RightLinearOp) else np.asarray(block)
    return entries_trace(entries)


def trace_aa_star_via_units(block: np.ndarray | RightLinearOp, level: int | None = None) -> CdComplex:
    """Cross-check route: sum_l <A A* e_l, e_l> on realized products."""
    if isinstance(block, RightLinearOp):
        op, level = block, block.level
    else:
        op = RightLinearOp.lri(level, block)
    m = op.realized @ op.adjoint().realized
    dim = dim_of(op.level)
    acc_re = np.zeros(dim)
    acc_im = np.zeros(dim)
    for l in range(op.h):
        col = m[:, l * 2 * dim].reshape(op.h, 2, dim)
        acc_re += col[l, 0]
        acc_im += col[l, 1]
    return CdComplex(CdReal(op.level, acc_re), CdReal(op.level, acc_im))


def adjoint_full_residual(op: RightLinearOp, samples: int = 20, seed: int = 0) -> float:
    """Max norm of <Jx,y> - <x,J*y> over random probes.

    The real part of this residual vanishes identically.  The full form
    pits a<x,y> against <x,y>a, so it already fails once multiplication
    stops commuting (r >= 2); it is reported, never asserted.
    """
    from .algebra import cdc_inner

    rng = np.random.default_rng(seed)
    adj = op.adjoint()
    worst = 0.0
    for _ in range(samples):
        x = CdVector(op.level, op.n, rng.normal(size=(op.n, 2, dim_of(op.level))))
        y = CdVector(op.level, op.h, rng.normal(size=(op.h, 2, dim_of(op.level))))
        lhs = cdc_inner(op.apply(x).components(), y.components())
        rhs = cdc_inner(x.components(), adj.apply(y).components())
        worst = max(worst, np.sqrt((lhs - rhs).norm2()))
    return worst


def op_norm(op: np.ndarray | RightLinearOp, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Operator norm via power iteration on M^T M.

    The ||.|| norms on both sides are sqrt(2) times Euclidean in the flat
    layout, so the ratio is the plain spectral norm of the realization.
    """
    m = op.realized if isinstance(op, RightLinearOp) else np.asarray(op)
    a = m.T @ m
    v = np.ones(a.shape[0]) / np.sqrt(a.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ a @ v)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} steps; last residual "
        f"{abs(lam_new - lam):.3e}"
    )


# ---------------------------------------------------------------- spd + covariance

def spd_sqrt(b: np.ndarray, rel_eig_floor: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; gates SPD-ness."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise NotSPD(f"not square: {b.shape}")
    scale = np.max(np.abs(b)) or 1.0
    if np.max(np.abs(b - b.T)) > 1e-12 * scale:
        raise NotSPD("matrix is not symmetric")
    w, v = np.linalg.eigh(b)
    if np.min(w) <= rel_eig_floor * np.max(np.abs(w)):
        raise NotSPD(f"min eigenvalue {np.min(w):.3e} under the SPD floor")
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True)
class CovarianceOperator:
    """Block-diagonal covariance: blocks (a_j, B_j) with a_j in A_r, B_j SPD.

    Acts on A_r^n (n = sum of block sizes) as x |-> a_j * (B_j x) within
    each block.  Only a_j != 0 and SPD B_j are enforced.
    """

    level: int
    blocks: tuple[tuple[CdReal, np.ndarray], ...]

    def __post_init__(self):
        fixed = []
        for a, b in self.blocks:
            if a.level != self.level:
                raise AlgebraError("block coefficient level mismatch")
            if abs(a) == 0.0:
                raise AlgebraError("block coefficient a_j must be nonzero")
            b = np.asarray(b, dtype=float)
            spd_sqrt(b)  # validation gate
            fixed.append((a, b))
        object.__setattr__(self, "blocks", tuple(fixed))

    @classmethod
    def simple(cls, a: CdReal, b) -> "CovarianceOperator":
        return cls(a.level, ((a, np.asarray(b, dtype=float)),))

    @property
    def n(self) -> int:
        return sum(b.shape[0] for _, b in self.blocks)

    @property
    def boundaries(self) -> list[int]:
        out = [0]
        for _, b in self.blocks:
            out.append(out[-1] + b.shape[0])
        return out

    def _assemble(self, pieces: list[tuple[CdReal, np.ndarray]]) -> np.ndarray:
        n = self.n
        entries = np.zeros((n, n, dim_of(self.level)))
        offset = 0
        for a, mat in pieces:
            k = mat.shape[0]
            sl = slice(offset, offset + k)
            entries[sl, sl, :] = mat[:, :, None] * a.coeffs[None, None, :]
            offset += k
        return entries

    def entries(self) -> np.ndarray:
        """U itself as an A_r-entried block (a_j times B_j per block)."""
        return self._assemble(list(self.blocks))

    def as_op(self) -> RightLinearOp:
        return RightLinearOp.lri(self.level, self.entries())

    def sqrt_entries(self) -> np.ndarray:
        return self._assemble([(cd_sqrt(a), spd_sqrt(b)) for a, b in self.blocks])

    def sqrt_op(self) -> RightLinearOp:
        """U^{1/2} = direct sum of sqrt(a_j) B_j^{1/2}, an A_r-entried op."""
        return RightLinearOp.lri(self.level, self.sqrt_entries())


def cov_sqrt(u: CovarianceOperator) -> RightLinearOp:
    return u.sqrt_op()


@dataclass(frozen=True)
class ComplexCovariance:
    """Pair (U_0, U_1) for w = U_0^{1/2} xi_0 + i U_1^{1/2} xi_1 + p t."""

    u0: CovarianceOperator
    u1: CovarianceOperator

    def __post_init__(self):
        if self.u0.level != self.u1.level or self.u0.n != self.u1.n:
            raise AlgebraError("U_0 and U_1 must share level and size")

    @property
    def level(self) -> int:
        return self.u0.level

    @property
    def n(self) -> int:
        return self.u0.n


def op_exp_left(g: np.ndarray | RightLinearOp, t: float) -> np.ndarray:
    """exp_l(G t) on the realization, by scaling-and-squaring."""
    m = g.realized if isinstance(g, RightLinearOp) else np.asarray(g)
    return scipy.linalg.expm(m * t)


def f_functional(s: RightLinearOp, u: ComplexCovariance) -> float:
    """F(S; U_0, U_1) = sum_{l,k} Tr({S_lk U_k^{1/2}} {(U_k^{1/2})* S_lk*}).

    Each trace is evaluated on the explicit product of the A_r-entried
    blocks, which matches the realized-product value exactly.
    """
    if s.n != u.n or s.level != u.level:
        raise AlgebraError("operator and covariance mismatch")
    roots = (u.u0.sqrt_entries(), u.u1.sqrt_entries())
    total = 0.0
    for (_, k), blk in s.blocks().items():
        total += entries_trace(compose_entries(blk, roots[k], s.level))
    return total


def f_functional_cross(s: RightLinearOp, s2: RightLinearOp, u: ComplexCovariance) -> float:
    """Bilinear extension of f_functional, for scalar-mixed integrands."""
    roots = (u.u0.sqrt_entries(), u.u1.sqrt_entries())
    total = 0.0
    b1, b2 = s.blocks(), s2.blocks()
    for (i, k) in b1:
        g1 = compose_entries(b1[(i, k)], roots[k], s.level)
        g2 = compose_entries(b2[(i, k)], roots[k], s.level)
        total += float(np.sum(g1 * g2))
    return total
