"""Jordan-form description of the linear part ``A``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_complex, check_int, check_order, check_square
from .exceptions import InvalidInputError
from .spectral import STABLE, UNSTABLE, classify

_COND_FLOOR = 1e-10
_EIG_GAP = 1e-6


@dataclass(frozen=True)
class JordanBlock:
    """Jordan block with eigenvalue ``lam`` and size ``size``.

    ``klass`` is filled in (or checked, if given) by the owning system.
    """

    lam: complex
    size: int = 1
    klass: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "lam", check_complex(self.lam, "lambda"))
        object.__setattr__(self, "size", check_int(self.size, "block size", 1))
        if self.klass not in (None, STABLE, UNSTABLE):
            raise InvalidInputError(f"klass must be 'stable' or 'unstable', got {self.klass!r}")

    def matrix(self) -> np.ndarray:
        return self.lam * np.eye(self.size, dtype=complex) + np.eye(self.size, k=1)


@dataclass(frozen=True)
class JordanSystem:
    """``A = P blockdiag(J_1, ..., J_l) P^-1`` with stable blocks first."""

    p: float
    blocks: tuple[JordanBlock, ...]
    transform: np.ndarray | None = None
    transform_inv: np.ndarray = field(init=False, repr=False)
    stable_dim: int = field(init=False)
    is_real: bool = field(init=False, repr=False)

    def __post_init__(self):
        p = check_order(self.p, allow_one=True)
        object.__setattr__(self, "p", p)
        if not self.blocks:
            raise InvalidInputError("a Jordan system needs at least one block")
        blocks = []
        for b in self.blocks:
            if not isinstance(b, JordanBlock):
                raise InvalidInputError(f"expected JordanBlock, got {type(b).__name__}")
            klass = classify(b.lam, p)
            if b.klass is not None and b.klass != klass:
                raise InvalidInputError(
                    f"block lambda={b.lam} declared {b.klass} but is {klass} for p={p}"
                )
            blocks.append(JordanBlock(b.lam, b.size, klass))
        klasses = [b.klass for b in blocks]
        s_count = klasses.count(STABLE)
        if klasses != [STABLE] * s_count + [UNSTABLE] * (len(blocks) - s_count):
            raise InvalidInputError(
                "stable blocks must precede unstable ones; use JordanSystem.from_blocks"
            )
        object.__setattr__(self, "blocks", tuple(blocks))
        n = sum(b.size for b in blocks)
        if self.transform is None:
            P = np.eye(n)
        else:
            P = check_square(self.transform, "transform")
            if P.shape[0] != n:
                raise InvalidInputError(f"transform must be {n}x{n}, got {P.shape}")
            sv = np.linalg.svd(P, compute_uv=False)
            if sv[-1] <= _COND_FLOOR * sv[0]:
                raise InvalidInputError("transform is numerically singular")
        P = np.array(P, copy=True)
        P.setflags(write=False)
        P_inv = np.linalg.inv(P)
        P_inv.setflags(write=False)
        object.__setattr__(self, "transform", P)
        object.__setattr__(self, "transform_inv", P_inv)
        object.__setattr__(self, "stable_dim", sum(b.size for b in blocks[:s_count]))
        A = P @ self.jordan_matrix() @ P_inv
        real = np.max(np.abs(A.imag)) <= 1e-12 * max(1.0, np.max(np.abs(A)))
        object.__setattr__(self, "is_real", bool(real))

    # construction helpers -------------------------------------------------

    @classmethod
    def from_blocks(cls, p, blocks, transform=None) -> JordanSystem:
        """Accept blocks in any order; reorders them stable-first and permutes
        the columns of ``transform`` to match."""
        p = check_order(p, allow_one=True)
        blocks = [b if isinstance(b, JordanBlock) else JordanBlock(*b) for b in blocks]
        if not blocks:
            raise InvalidInputError("at least one Jordan block is required")
        offsets = np.cumsum([0] + [b.size for b in blocks])
        order = sorted(range(len(blocks)), key=lambda i: classify(blocks[i].lam, p) != STABLE)
        cols = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in order])
        n = int(offsets[-1])
        P = np.eye(n) if transform is None else check_square(transform, "transform")
        if P.shape[0] != n:
            raise InvalidInputError(f"transform must be {n}x{n}, got {P.shape}")
        return cls(p, tuple(blocks[i] for i in order), P[:, cols])

    @classmethod
    def from_matrix(cls, p, A) -> JordanSystem:
        """Diagonalizable ``A`` with pairwise eigenvalue gaps above 1e-6."""
        A = check_square(A, "A")
        vals, vecs = np.linalg.eig(A)
        gaps = np.abs(vals[:, None] - vals[None, :])
        np.fill_diagonal(gaps, np.inf)
        if len(vals) > 1 and gaps.min() <= _EIG_GAP:
            raise InvalidInputError(
                "eigenvalues are not separated; pass Jordan data via from_blocks"
            )
        if np.all(np.abs(vals.imag) == 0):
            vals, vecs = vals.real, vecs.real
        return cls.from_blocks(p, [JordanBlock(v, 1) for v in vals], vecs)

    # derived quantities ---------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.transform.shape[0]

    @property
    def stable_count(self) -> int:
        return sum(1 for b in self.blocks if b.klass == STABLE)

    @property
    def offsets(self) -> list[int]:
        out = [0]
        for b in self.blocks:
            out.append(out[-1] + b.size)
        return out

    def jordan_matrix(self) -> np.ndarray:
        n = self.dimension
        J = np.zeros((n, n), dtype=complex)
        for b, lo in zip(self.blocks, self.offsets):
            J[lo : lo + b.size, lo : lo + b.size] = b.matrix()
        return J

    def matrix(self) -> np.ndarray:
        """The matrix ``A`` (real when the Jordan data describe a real matrix)."""
        A = self.transform @ self.jordan_matrix() @ self.transform_inv
        return A.real if self.is_real else A

    def conjugate(self, blockdiag: np.ndarray) -> np.ndarray:
        """``P M P^-1``, returned real when ``A`` is real."""
        out = self.transform @ blockdiag @ self.transform_inv
        if self.is_real:
            return out.real
        return out
