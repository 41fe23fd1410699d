"""Prime-field and short-Weierstrass curve arithmetic with recordable
micro-op schedules.

Two scalar multipliers live here. Both run a fixed, secret-independent
operation schedule and route every secret-dependent register move through a
conditional swap supplied by the caller:

* ``montgomery_ladder``: an x-only ladder whose two working registers are
  swapped once per bit with condition ``k_i XOR k_{i+1}``. The y-coordinate
  is recovered once at the end, so the registers drag stale y words through
  every swap (three coordinates wide).
* ``double_and_always_add``: doubles and adds every iteration, then swaps
  the result register with the throwaway register under condition ``k_i``.

When given an EventRecorder, the multipliers and the point operations emit
one event per field operation (with the Hamming weight of the result) plus
whatever the swap implementation emits; the simulator turns that stream into
sampled traces. Without a recorder they run specialized integer paths that
skip all bookkeeping.

Field elements stay in ``[0, p)``. Moduli shaped like ``2**k - c`` with small
``c`` reduce by folding the high bits, which is what makes exhaustive and
521-bit work affordable in pure Python.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import ConfigError, DomainError, NonInvertible
from .events import EventRecorder, OpKind

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1

# Sizes of the consecutive multiply/square runs inside one ladder step, used
# by the alignment stage as the envelope fingerprint of a step.
LADDER_STEP_MUL_GROUPS = (5, 2, 1, 2, 3, 1, 3, 3)


class Field:
    """Prime field F_p.

    The modulus is assumed prime (inversion uses Fermat). Reduction after a
    multiply folds ``z = (z & mask) + (z >> k) * c`` when ``p = 2**k - c``
    with ``c`` below 32 bits, else falls back to ``%``.
    """

    __slots__ = ("p", "_fold_k", "_fold_c")

    def __init__(self, p: int) -> None:
        if p < 3 or p % 2 == 0:
            raise DomainError(f"modulus must be an odd prime, got {p}")
        self.p = p
        k = p.bit_length()
        c = (1 << k) - p
        if c.bit_length() <= 32:
            self._fold_k, self._fold_c = k, c
        else:
            self._fold_k, self._fold_c = 0, 0

    def reducer(self) -> Callable[[int], int]:
        """Return a closure reducing non-negative integers below ``p**2``."""
        p = self.p
        if self._fold_k:
            k, c = self._fold_k, self._fold_c
            mask = (1 << k) - 1

            def red(z: int) -> int:
                while z >> k:
                    z = (z & mask) + (z >> k) * c
                return z - p if z >= p else z

        else:

            def red(z: int) -> int:
                return z % p

        return red

    def element(self, value: int) -> "FieldElement":
        return FieldElement(value % self.p, self)

    def inv(self, value: int) -> int:
        v = value % self.p
        if v == 0:
            raise NonInvertible("zero has no inverse")
        return pow(v, self.p - 2, self.p)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Field) and other.p == self.p

    def __hash__(self) -> int:
        return hash(("Field", self.p))

    def __repr__(self) -> str:
        return f"Field(p={self.p:#x})"


@dataclass(frozen=True, slots=True)
class FieldElement:
    """An element of F_p, always stored reduced to ``[0, p)``."""

    value: int
    field: Field

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.field.p:
            raise DomainError(f"value {self.value} outside [0, {self.field.p})")

    def _join(self, other: "FieldElement") -> Field:
        if not isinstance(other, FieldElement):
            raise DomainError(f"expected FieldElement, got {type(other).__name__}")
        if other.field.p != self.field.p:
            raise DomainError("operands belong to different fields")
        return self.field

    def __add__(self, other: "FieldElement") -> "FieldElement":
        f = self._join(other)
        s = self.value + other.value
        if s >= f.p:
            s -= f.p
        return FieldElement(s, f)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        f = self._join(other)
        d = self.value - other.value
        if d < 0:
            d += f.p
        return FieldElement(d, f)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        f = self._join(other)
        return FieldElement(self.value * other.value % f.p, f)

    def __neg__(self) -> "FieldElement":
        return FieldElement(-self.value % self.field.p, self.field)

    def square(self) -> "FieldElement":
        return FieldElement(self.value * self.value % self.field.p, self.field)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def shift_left(self, bits: int) -> "FieldElement":
        if bits < 0:
            raise DomainError(f"negative shift {bits}")
        return FieldElement((self.value << bits) % self.field.p, self.field)

    def __repr__(self) -> str:
        return f"FieldElement({self.value:#x})"


_FIELD_OPS = {"add", "sub", "mul", "square", "inv", "shl"}


def field_op(kind: str, *operands) -> FieldElement:
    """Apply a named field operation.

    ``add``/``sub``/``mul`` take two elements, ``square``/``inv`` one, and
    ``shl`` takes an element plus a plain int shift amount. Mixing fields
    raises DomainError; inverting zero raises NonInvertible.
    """
    if kind not in _FIELD_OPS:
        raise ConfigError(f"unknown field op {kind!r}")
    if kind in ("add", "sub", "mul"):
        a, b = operands
        return {"add": a.__add__, "sub": a.__sub__, "mul": a.__mul__}[kind](b)
    if kind == "square":
        (a,) = operands
        return a.square()
    if kind == "inv":
        (a,) = operands
        return a.inverse()
    a, bits = operands
    return a.shift_left(bits)


@dataclass(frozen=True, slots=True)
class Scalar:
    """A scalar with an explicit bit width.

    ``bit_length`` fixes how many ladder/add iterations a multiplier runs,
    independent of where the top set bit of ``value`` happens to sit. That
    is what makes the operation schedule secret-independent.
    """

    value: int
    bit_length: int

    def __post_init__(self) -> None:
        if self.bit_length < 1:
            raise DomainError(f"bit_length must be positive, got {self.bit_length}")
        if not 0 <= self.value < (1 << self.bit_length):
            raise DomainError(
                f"scalar {self.value:#x} does not fit in {self.bit_length} bits"
            )

    @classmethod
    def for_curve(cls, value: int, curve: "CurveParams") -> "Scalar":
        return cls(value, curve.n.bit_length())

    def bit(self, i: int) -> int:
        """Bit ``i`` of the value, LSB first; indices at or above bit_length are 0."""
        if i < 0:
            raise DomainError(f"negative bit index {i}")
        return (self.value >> i) & 1


class CurveParams:
    """Short-Weierstrass curve ``y**2 = x**3 + a*x + b`` over F_p.

    Construction checks the curve is non-singular, the base point lies on
    it, and ``n`` really kills the base point. ``word_count`` is how many
    64-bit machine words one coordinate occupies; ``flag_words`` models an
    optional extra bookkeeping word per coordinate that some bignum layouts
    swap along with the limbs (off by default).
    """

    __slots__ = ("name", "p", "a", "b", "gx", "gy", "n", "word_count", "flag_words", "field")

    def __init__(
        self,
        name: str,
        p: int,
        a: int,
        b: int,
        gx: int,
        gy: int,
        n: int,
        word_count: int,
        flag_words: int = 0,
    ) -> None:
        self.name = name
        self.field = Field(p)
        self.p = p
        self.a = a % p
        self.b = b % p
        self.gx = gx % p
        self.gy = gy % p
        self.n = n
        self.flag_words = flag_words
        expected_words = -(-p.bit_length() // WORD_BITS)
        if word_count != expected_words:
            raise DomainError(
                f"word_count {word_count} does not match {p.bit_length()}-bit modulus"
            )
        if flag_words < 0:
            raise DomainError(f"flag_words must be non-negative, got {flag_words}")
        self.word_count = word_count
        if (4 * self.a**3 + 27 * self.b**2) % p == 0:
            raise DomainError("curve is singular")
        if (self.gy * self.gy - (self.gx**3 + self.a * self.gx + self.b)) % p != 0:
            raise DomainError("base point is not on the curve")
        if n < 2:
            raise DomainError(f"order must exceed 1, got {n}")
        # n*G == O iff (n-1)*G == -G, which avoids multiplying by n itself.
        nx, ny, nz = _mul_fast(n - 1, n.bit_length(), (self.gx, self.gy, 1), self)
        if nz == 0 or not _triple_eq((nx, ny, nz), (self.gx, -self.gy % p, 1), p):
            raise DomainError("base point order does not divide n")

    @property
    def generator(self) -> tuple[int, int]:
        return (self.gx, self.gy)

    @property
    def coordinate_words(self) -> int:
        """Machine words per coordinate as the swap sees them."""
        return self.word_count + self.flag_words

    def __repr__(self) -> str:
        return f"CurveParams({self.name!r}, {self.p.bit_length()} bits)"


def _triple_eq(P: tuple[int, int, int], Q: tuple[int, int, int], p: int) -> bool:
    x1, y1, z1 = P
    x2, y2, z2 = Q
    if z1 % p == 0 or z2 % p == 0:
        return z1 % p == 0 and z2 % p == 0
    return (x1 * z2 - x2 * z1) % p == 0 and (y1 * z2 - y2 * z1) % p == 0


@dataclass(frozen=True, eq=False, slots=True)
class ProjectivePoint:
    """Homogeneous projective point (X : Y : Z); Z == 0 is the neutral element.

    Equality is projective: two points compare equal when their cross
    products agree, regardless of representative.
    """

    X: FieldElement
    Y: FieldElement
    Z: FieldElement

    def __post_init__(self) -> None:
        self.X._join(self.Y)
        self.Y._join(self.Z)
        if self.Z.value == 0 and self.X.value == 0 and self.Y.value == 0:
            raise DomainError("(0 : 0 : 0) is not a point")

    @classmethod
    def neutral(cls, field: Field) -> "ProjectivePoint":
        return cls(field.element(0), field.element(1), field.element(0))

    @classmethod
    def from_affine(cls, x: int, y: int, field: Field) -> "ProjectivePoint":
        return cls(field.element(x), field.element(y), field.element(1))

    @property
    def is_neutral(self) -> bool:
        return self.Z.value == 0

    def triple(self) -> tuple[int, int, int]:
        return (self.X.value, self.Y.value, self.Z.value)

    def to_affine(self) -> tuple[int, int] | None:
        """Affine (x, y), or None for the neutral element."""
        if self.is_neutral:
            return None
        zi = self.Z.inverse()
        return ((self.X * zi).value, (self.Y * zi).value)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectivePoint):
            return NotImplemented
        if self.X.field.p != other.X.field.p:
            return False
        return _triple_eq(self.triple(), other.triple(), self.X.field.p)

    __hash__ = None  # type: ignore[assignment]


def point_on_curve(P: ProjectivePoint, curve: CurveParams) -> bool:
    """Whether P satisfies the homogeneous curve equation of ``curve``."""
    x, y, z = P.triple()
    p = curve.p
    if z % p == 0:
        return x % p == 0 and y % p != 0
    lhs = y * y * z % p
    rhs = (x * x * x + curve.a * x * z * z + curve.b * z * z * z) % p
    return lhs == rhs


# ---------------------------------------------------------------------------
# Complete projective add/double (works for every input pair, including the
# neutral element and P + (-P), on any short-Weierstrass curve). The traced
# variants emit one event per field op in source order.


def _make_ops(field: Field, recorder: EventRecorder | None):
    """Field-op closures over ints; the traced flavor emits as it computes."""
    red = field.reducer()
    p = field.p
    if recorder is None:

        def mul(u: int, v: int) -> int:
            return red(u * v)

        def sq(u: int) -> int:
            return red(u * u)

        def add(u: int, v: int) -> int:
            s = u + v
            return s - p if s >= p else s

        def sub(u: int, v: int) -> int:
            d = u - v
            return d + p if d < 0 else d

        def shl(u: int, bits: int) -> int:
            return red(u << bits)

    else:
        emit = recorder.emit

        def mul(u: int, v: int) -> int:
            r = red(u * v)
            emit(OpKind.FIELD_MUL, r.bit_count())
            return r

        def sq(u: int) -> int:
            r = red(u * u)
            emit(OpKind.FIELD_SQUARE, r.bit_count())
            return r

        def add(u: int, v: int) -> int:
            s = u + v
            if s >= p:
                s -= p
            emit(OpKind.FIELD_ADD_SUB, s.bit_count())
            return s

        def sub(u: int, v: int) -> int:
            d = u - v
            if d < 0:
                d += p
            emit(OpKind.FIELD_ADD_SUB, d.bit_count())
            return d

        def shl(u: int, bits: int) -> int:
            r = red(u << bits)
            emit(OpKind.FIELD_ADD_SUB, r.bit_count())
            return r

    return mul, sq, add, sub, shl


def _add_body(P, Q, a, b3, mul, sq, add, sub):
    X1, Y1, Z1 = P
    X2, Y2, Z2 = Q
    t0 = mul(X1, X2)
    t1 = mul(Y1, Y2)
    t2 = mul(Z1, Z2)
    t3 = add(X1, Y1)
    t4 = add(X2, Y2)
    t3 = mul(t3, t4)
    t4 = add(t0, t1)
    t3 = sub(t3, t4)
    t4 = add(X1, Z1)
    t5 = add(X2, Z2)
    t4 = mul(t4, t5)
    t5 = add(t0, t2)
    t4 = sub(t4, t5)
    t5 = add(Y1, Z1)
    X3 = add(Y2, Z2)
    t5 = mul(t5, X3)
    X3 = add(t1, t2)
    t5 = sub(t5, X3)
    Z3 = mul(a, t4)
    X3 = mul(b3, t2)
    Z3 = add(X3, Z3)
    X3 = sub(t1, Z3)
    Z3 = add(t1, Z3)
    Y3 = mul(X3, Z3)
    t1 = add(t0, t0)
    t1 = add(t1, t0)
    t2 = mul(a, t2)
    t4 = mul(b3, t4)
    t1 = add(t1, t2)
    t2 = sub(t0, t2)
    t2 = mul(a, t2)
    t4 = add(t4, t2)
    t0 = mul(t1, t4)
    Y3 = add(Y3, t0)
    t0 = mul(t5, t4)
    X3 = mul(t3, X3)
    X3 = sub(X3, t0)
    t0 = mul(t3, t1)
    Z3 = mul(t5, Z3)
    Z3 = add(Z3, t0)
    return (X3, Y3, Z3)


def _dbl_body(P, a, b3, mul, sq, add, sub):
    X, Y, Z = P
    t0 = sq(X)
    t1 = sq(Y)
    t2 = sq(Z)
    t3 = mul(X, Y)
    t3 = add(t3, t3)
    Z3 = mul(X, Z)
    Z3 = add(Z3, Z3)
    X3 = mul(a, Z3)
    Y3 = mul(b3, t2)
    Y3 = add(X3, Y3)
    X3 = sub(t1, Y3)
    Y3 = add(t1, Y3)
    Y3 = mul(X3, Y3)
    X3 = mul(t3, X3)
    Z3 = mul(b3, Z3)
    t2 = mul(a, t2)
    t3 = sub(t0, t2)
    t3 = mul(a, t3)
    t3 = add(t3, Z3)
    Z3 = add(t0, t0)
    t0 = add(Z3, t0)
    t0 = add(t0, t2)
    t0 = mul(t0, t3)
    Y3 = add(Y3, t0)
    t2 = mul(Y, Z)
    t2 = add(t2, t2)
    t0 = mul(t2, t3)
    X3 = sub(X3, t0)
    Z3 = mul(t2, t1)
    Z3 = add(Z3, Z3)
    Z3 = add(Z3, Z3)
    return (X3, Y3, Z3)


def _step_body(s, r, x_base, a, b, mul, sq, add, sub, shl):
    """One ladder step on x-only pairs: returns (r + s, 2r).

    Requires the affine x of r - s. The multiply/square runs follow
    LADDER_STEP_MUL_GROUPS, separated by add/sub/shift ops.
    """
    X1, Z1 = s
    X2, Z2 = r
    t6 = mul(X2, X1)
    t0 = mul(Z2, Z1)
    t4 = mul(X2, Z1)
    t3 = mul(Z2, X1)
    t5 = mul(a, t0)
    t5 = add(t6, t5)
    t6 = add(t3, t4)
    t3 = sub(t3, t4)
    t5 = mul(t6, t5)
    t0 = sq(t0)
    t2 = shl(b, 2)
    t0 = mul(t2, t0)
    t5 = shl(t5, 1)
    Z1n = sq(t3)
    t4 = mul(Z1n, x_base)
    t0 = add(t0, t5)
    X1n = sub(t0, t4)
    t4 = sq(X2)
    t5 = sq(Z2)
    t6 = mul(a, t5)
    t1 = add(X2, Z2)
    t1 = sq(t1)
    t1 = sub(t1, t4)
    t1 = sub(t1, t5)
    t3 = sub(t4, t6)
    t3 = sq(t3)
    t0 = mul(t5, t1)
    t0 = mul(t2, t0)
    X2n = sub(t3, t0)
    t3 = add(t4, t6)
    t4 = sq(t5)
    t4 = mul(t4, t2)
    t1 = mul(t1, t3)
    t1 = shl(t1, 1)
    Z2n = add(t4, t1)
    return (X1n, Z1n), (X2n, Z2n)


def point_add(
    P: ProjectivePoint,
    Q: ProjectivePoint,
    curve: CurveParams,
    recorder: EventRecorder | None = None,
    validate: bool = True,
) -> ProjectivePoint:
    """Complete projective addition P + Q."""
    if validate:
        for pt in (P, Q):
            if not point_on_curve(pt, curve):
                raise DomainError("operand is not on the curve")
    ops = _make_ops(curve.field, recorder)
    x, y, z = _add_body(P.triple(), Q.triple(), curve.a, 3 * curve.b % curve.p, *ops[:4])
    f = curve.field
    return ProjectivePoint(FieldElement(x, f), FieldElement(y, f), FieldElement(z, f))


def point_double(
    P: ProjectivePoint,
    curve: CurveParams,
    recorder: EventRecorder | None = None,
    validate: bool = True,
) -> ProjectivePoint:
    """Complete projective doubling 2P."""
    if validate and not point_on_curve(P, curve):
        raise DomainError("operand is not on the curve")
    ops = _make_ops(curve.field, recorder)
    x, y, z = _dbl_body(P.triple(), curve.a, 3 * curve.b % curve.p, *ops[:4])
    f = curve.field
    return ProjectivePoint(FieldElement(x, f), FieldElement(y, f), FieldElement(z, f))


def _xz(P: ProjectivePoint) -> tuple[int, int]:
    # On the x-line the neutral element is (c : 0) with c != 0; the full
    # projective neutral (0 : 1 : 0) would degenerate to the invalid (0, 0).
    if P.Z.value == 0:
        return (1, 0)
    return (P.X.value, P.Z.value)


def _ladder_state_consistent(s: tuple[int, int], r: tuple[int, int], base: tuple[int, int], curve: CurveParams) -> bool:
    """Check that the x-line difference of r and s can equal x(base).

    For affine xr != xs this uses the sum/difference symmetric functions:
    x(r+s)*x(r-s) = ((xr*xs - a)^2 - 4b(xr+xs)) / (xr-xs)^2 and
    x(r+s)+x(r-s) = 2((xr+xs)(xr*xs+a) + 2b) / (xr-xs)^2, so x(base) must be
    a root of X^2 - sum*X + product. Neutral representatives degenerate to
    direct coordinate comparisons.
    """
    p, a, b = curve.p, curve.a, curve.b
    xb = base[0] % p
    X1, Z1 = s
    X2, Z2 = r
    if Z1 % p == 0 and Z2 % p == 0:
        return False
    if Z1 % p == 0:
        # s is neutral, so r must be the base itself.
        return (X2 - xb * Z2) % p == 0
    if Z2 % p == 0:
        # r is neutral, so s must be -base (same x).
        return (X1 - xb * Z1) % p == 0
    # Projective symmetric functions, fractions cleared by (X1*Z2 - X2*Z1)^2
    # and Z1^2*Z2^2.
    u = (X1 * Z2 - X2 * Z1) % p
    zz = Z1 * Z2 % p
    if u == 0:
        # Same x: difference is O (excluded; base is affine) or 2-torsion;
        # accept only if base shares that x.
        return (X1 - xb * Z1) % p == 0
    xx = X1 * X2 % p
    xs = (X1 * Z2 + X2 * Z1) % p
    prod_num = ((xx - a * zz) ** 2 - 4 * b * xs * zz) % p
    sum_num = (2 * ((xs * (xx + a * zz)) + 2 * b * zz * zz)) % p
    u2 = u * u % p
    # Root test of X^2 - S*X + P at X = xb with denominators cleared.
    return (xb * xb * u2 - xb * sum_num + prod_num) % p == 0


def ladder_step(
    s: ProjectivePoint,
    r: ProjectivePoint,
    base: tuple[int, int],
    curve: CurveParams,
    recorder: EventRecorder | None = None,
    validate: bool = True,
) -> tuple[ProjectivePoint, ProjectivePoint]:
    """Advance a ladder state: returns (r + s, 2r).

    The state must satisfy r - s = base on the x-line. Only X and Z
    participate; the returned points carry the inputs' Y values unchanged
    (they are meaningless mid-ladder and repaired by y-recovery at the end).
    """
    if validate:
        yb2 = (base[1] * base[1] - (base[0] ** 3 + curve.a * base[0] + curve.b)) % curve.p
        if yb2 != 0:
            raise DomainError("base point is not on the curve")
        if not _ladder_state_consistent(_xz(s), _xz(r), base, curve):
            raise DomainError("ladder state does not differ by the base point")
    mul, sq, add, sub, shl = _make_ops(curve.field, recorder)
    (sx, sz), (rx, rz) = _step_body(
        _xz(s), _xz(r), base[0] % curve.p, curve.a, curve.b, mul, sq, add, sub, shl
    )
    f = curve.field
    s_out = ProjectivePoint(FieldElement(sx, f), s.Y, FieldElement(sz, f))
    r_out = ProjectivePoint(FieldElement(rx, f), r.Y, FieldElement(rz, f))
    return s_out, r_out


def _recover_y(base: tuple[int, int], R0: tuple[int, int], R1: tuple[int, int], curve: CurveParams) -> tuple[int, int]:
    """Affine k*base from the final ladder pair (R0 = k*base, R1 = (k+1)*base).

    R1 at infinity means k = n - 1, where the result is just -base.
    """
    p, a, b = curve.p, curve.a, curve.b
    x, y = base
    X0, Z0 = R0
    X1, Z1 = R1
    if Z1 % p == 0:
        return (x, -y % p)
    zi = pow(Z0 * Z1 % p, p - 2, p)
    x0 = X0 * Z1 % p * zi % p
    x1 = X1 * Z0 % p * zi % p
    num = ((x * x0 + a) % p * ((x0 + x) % p) + 2 * b - x1 * pow(x0 - x, 2, p)) % p
    y0 = num * pow(2 * y, p - 2, p) % p
    return (x0, y0)


def _ladder_fast(k: int, bits: int, base: tuple[int, int], curve: CurveParams) -> tuple[int, int]:
    """Untraced x-only ladder over a fixed number of iterations."""
    red = curve.field.reducer()
    p, a = curve.p, curve.a
    x = base[0] % p
    b4 = curve.b * 4 % p
    AX, AZ = 1, 0
    BX, BZ = x, 1
    pbit = 0
    seen = False
    for i in range(bits - 1, -1, -1):
        bit = (k >> i) & 1
        if bit ^ pbit:
            AX, AZ, BX, BZ = BX, BZ, AX, AZ
        pbit = bit
        # Step: B <- A + B, A <- 2A.
        t6 = red(AX * BX)
        t0 = red(AZ * BZ)
        t4 = red(AX * BZ)
        t3 = red(AZ * BX)
        t5 = red(a * t0)
        t5 = t6 + t5
        t6 = t3 + t4
        t3 = t3 - t4
        t5 = red(t6 * t5)
        t0 = red(t0 * t0)
        t0 = red(b4 * t0)
        t5 = t5 << 1
        BZ = red(t3 * t3)
        t4 = red(BZ * x)
        BX = red(t0 + t5) - t4
        if BX < 0:
            BX += p
        t4 = red(AX * AX)
        t5 = red(AZ * AZ)
        t6 = red(a * t5)
        t1 = red((AX + AZ) * (AX + AZ))
        t1 = t1 - t4 - t5
        t3 = t4 - t6
        t3 = red(t3 * t3)
        t0 = red(t5 * t1 if t1 >= 0 else t5 * (t1 + 2 * p))
        t0 = red(b4 * t0)
        AX = t3 - t0
        if AX < 0:
            AX += p
        t3 = t4 + t6
        t4 = red(t5 * t5)
        t4 = red(t4 * b4)
        t1 = red(t1 * t3 if t1 >= 0 else (t1 + 2 * p) * t3)
        AZ = red(t4 + (t1 << 1))
        # While the top set bit has not been consumed the state is
        # degenerate (multiples of O); pin it to the k=0 state instead.
        if not seen:
            seen = bit == 1
            BX, BZ = x, 1
            if not seen:
                AX, AZ = 1, 0
    if pbit:
        R0, R1 = (BX, BZ), (AX, AZ)
    else:
        R0, R1 = (AX, AZ), (BX, BZ)
    return _recover_y(base, R0, R1, curve)


def _raw_point_ops(curve: CurveParams):
    """Closures (add, dbl) on int triples for untraced multipliers."""
    red = curve.field.reducer()
    p, a = curve.p, curve.a
    b3 = 3 * curve.b % p

    def mul(u, v):
        return red(u * v)

    def sq(u):
        return red(u * u)

    def add_(u, v):
        s = u + v
        return s - p if s >= p else s

    def sub_(u, v):
        d = u - v
        return d + p if d < 0 else d

    def padd(P, Q):
        return _add_body(P, Q, a, b3, mul, sq, add_, sub_)

    def pdbl(P):
        return _dbl_body(P, a, b3, mul, sq, add_, sub_)

    return padd, pdbl


def _mul_fast(k: int, bits: int, P: tuple[int, int, int], curve: CurveParams) -> tuple[int, int, int]:
    """Untraced branching double-and-add on complete formulas."""
    padd, pdbl = _raw_point_ops(curve)
    R = (0, 1, 0)
    for i in range(bits - 1, -1, -1):
        R = pdbl(R)
        if (k >> i) & 1:
            R = padd(R, P)
    return R


def _words_of(value: int, count: int) -> list[int]:
    return [(value >> (WORD_BITS * i)) & WORD_MASK for i in range(count)]


def _words_to_int(words) -> int:
    v = 0
    for i, w in enumerate(words):
        v |= w << (WORD_BITS * i)
    return v


def _triple_words(triple: tuple[int, int, int], count: int) -> list[int]:
    out: list[int] = []
    for coord in triple:
        out.extend(_words_of(coord, count))
    return out


def _words_triple(words, count: int) -> tuple[int, int, int]:
    return (
        _words_to_int(words[:count]),
        _words_to_int(words[count : 2 * count]),
        _words_to_int(words[2 * count :]),
    )


def _rerandomize_triple(triple, scale, red, emit):
    """Scale a projective representative by a nonzero factor, emitting one
    event per refreshed coordinate."""
    out = tuple(red(c * scale) for c in triple)
    for c in out:
        emit(OpKind.RERANDOMIZE, c.bit_count())
    return out


def _check_scalar(k: Scalar, curve: CurveParams) -> None:
    if not isinstance(k, Scalar):
        raise DomainError(f"expected Scalar, got {type(k).__name__}")
    if not 1 <= k.value <= curve.n - 1:
        raise DomainError(f"scalar must lie in [1, n-1], got {k.value:#x}")


def montgomery_ladder(
    k: Scalar,
    base: tuple[int, int],
    curve: CurveParams,
    swap_impl=None,
    recorder: EventRecorder | None = None,
) -> ProjectivePoint:
    """Compute k * base with a constant-schedule x-only ladder.

    The two registers are conditionally swapped once per iteration with
    condition ``k_i XOR k_{i+1}`` (the bit above the MSB reads as 0), so the
    recorded swap sequence has exactly ``k.bit_length`` entries. Registers
    are three coordinates wide: the stale y words ride along through every
    swap. The y-coordinate of the result is recovered arithmetically at the
    end and the returned point is affine-normalized.
    """
    _check_scalar(k, curve)
    xb, yb = base[0] % curve.p, base[1] % curve.p
    if (yb * yb - (xb**3 + curve.a * xb + curve.b)) % curve.p != 0:
        raise DomainError("base point is not on the curve")
    if recorder is None:
        x, y = _ladder_fast(k.value, k.bit_length, (xb, yb), curve)
        return ProjectivePoint.from_affine(x, y, curve.field)

    from . import swap_impls

    if swap_impl is None:
        swap_impl = swap_impls.SwapVariant(swap_impls.SwapKind.PLAIN)
    combined = swap_impl.kind is swap_impls.SwapKind.COMBINED
    red = curve.field.reducer()
    p = curve.p
    wc = curve.coordinate_words
    mul, sq, add, sub, shl = _make_ops(curve.field, recorder)
    rng = swap_impl.rng

    # Register layout: A tracks the 2r half, B the r+s half, each dragging a
    # stale Y coordinate that only the swaps touch.  Registers hold random
    # projective representatives from the start, so no swap ever moves a
    # fixed constant: on the x-line any (c : 0) with c != 0 is neutral.
    def fresh_neutral() -> tuple[int, int, int]:
        return (rng.randrange(1, p), rng.randrange(1, p), 0)

    def fresh_base() -> tuple[int, int, int]:
        lam = rng.randrange(1, p)
        return (red(xb * lam), red(yb * lam), lam)

    A = fresh_neutral()
    B = fresh_base()
    pbit = 0
    seen = False
    for i in range(k.bit_length - 1, -1, -1):
        bit = k.bit(i)
        cond = bit ^ pbit
        pbit = bit
        if combined:
            A = _rerandomize_triple(A, rng.randrange(1, p), red, recorder.emit)
            B = _rerandomize_triple(B, rng.randrange(1, p), red, recorder.emit)
        pair = swap_impls.WordArrayPair(
            _triple_words(A, wc), _triple_words(B, wc)
        )
        swapped = swap_impls.ct_swap(swap_impl, pair, cond, recorder)
        A = _words_triple(swapped.a, wc)
        B = _words_triple(swapped.b, wc)
        (bx, bz), (ax, az) = _step_body(
            (B[0], B[2]), (A[0], A[2]), xb, curve.a, curve.b, mul, sq, add, sub, shl
        )
        A = (ax, A[1], az)
        B = (bx, B[1], bz)
        if not seen:
            seen = bit == 1
            B = fresh_base()
            if not seen:
                A = fresh_neutral()
    if pbit:
        R0, R1 = (B[0], B[2]), (A[0], A[2])
    else:
        R0, R1 = (A[0], A[2]), (B[0], B[2])
    x, y = _recover_y((xb, yb), R0, R1, curve)
    return ProjectivePoint.from_affine(x, y, curve.field)


def double_and_always_add(
    k: Scalar,
    point: ProjectivePoint,
    curve: CurveParams,
    swap_impl=None,
    recorder: EventRecorder | None = None,
) -> ProjectivePoint:
    """Compute k * point, doubling and adding every iteration.

    Each iteration doubles the accumulator, adds the base into a scratch
    register, and conditionally swaps the two under ``k_i``. Complete
    formulas keep the leading-zero iterations (accumulator still neutral)
    on the same code path as the rest.
    """
    _check_scalar(k, curve)
    if not point_on_curve(point, curve):
        raise DomainError("base point is not on the curve")
    P = point.triple()
    if recorder is None:
        x, y, z = _mul_fast(k.value, k.bit_length, P, curve)
        f = curve.field
        return ProjectivePoint(FieldElement(x, f), FieldElement(y, f), FieldElement(z, f))

    from . import swap_impls

    if swap_impl is None:
        swap_impl = swap_impls.SwapVariant(swap_impls.SwapKind.PLAIN)
    combined = swap_impl.kind is swap_impls.SwapKind.COMBINED
    red = curve.field.reducer()
    p, a = curve.p, curve.a
    b3 = 3 * curve.b % p
    wc = curve.coordinate_words
    mul, sq, add, sub, _ = _make_ops(curve.field, recorder)
    rng = swap_impl.rng
    # A random neutral representative keeps the first iterations' register
    # images in the same distribution as the rest.
    R = (0, rng.randrange(1, p), 0)
    for i in range(k.bit_length - 1, -1, -1):
        R = _dbl_body(R, a, b3, mul, sq, add, sub)
        T = _add_body(R, P, a, b3, mul, sq, add, sub)
        if combined:
            R = _rerandomize_triple(R, rng.randrange(1, p), red, recorder.emit)
            T = _rerandomize_triple(T, rng.randrange(1, p), red, recorder.emit)
        pair = swap_impls.WordArrayPair(_triple_words(R, wc), _triple_words(T, wc))
        swapped = swap_impls.ct_swap(swap_impl, pair, k.bit(i), recorder)
        R = _words_triple(swapped.a, wc)
        T = _words_triple(swapped.b, wc)
    f = curve.field
    return ProjectivePoint(FieldElement(R[0], f), FieldElement(R[1], f), FieldElement(R[2], f))


def reference_multiply(k: int, point: ProjectivePoint, curve: CurveParams) -> ProjectivePoint:
    """Naive branching double-and-add, used as a cross-check of the
    constant-schedule multipliers. Accepts k = 0."""
    if not isinstance(k, int) or k < 0:
        raise DomainError(f"reference scalar must be a non-negative int, got {k!r}")
    if not point_on_curve(point, curve):
        raise DomainError("base point is not on the curve")
    if k == 0:
        return ProjectivePoint.neutral(curve.field)
    x, y, z = _mul_fast(k, k.bit_length(), point.triple(), curve)
    f = curve.field
    return ProjectivePoint(FieldElement(x, f), FieldElement(y, f), FieldElement(z, f))


# ---------------------------------------------------------------------------
# Curve registry and file format.

_CURVE_KEYS = ("name", "p", "a", "b", "gx", "gy", "n", "word_count")


def load_curve(path: str | Path) -> CurveParams:
    """Load curve parameters from a key=value text file.

    Numeric fields are hex (an optional 0x prefix is fine); blank lines and
    ``#`` comments are ignored. Required keys: name, p, a, b, gx, gy, n,
    word_count. An optional flag_words key is honored.
    """
    text = Path(path).read_text()
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in _CURVE_KEYS and key != "flag_words":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in fields:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    missing = [k for k in _CURVE_KEYS if k not in fields]
    if missing:
        raise ConfigError(f"{path}: missing keys {missing}")

    def num(key: str) -> int:
        try:
            return int(fields[key], 16)
        except ValueError as exc:
            raise ConfigError(f"{path}: field {key!r} is not a hex integer") from exc

    return CurveParams(
        name=fields["name"],
        p=num("p"),
        a=num("a"),
        b=num("b"),
        gx=num("gx"),
        gy=num("gy"),
        n=num("n"),
        word_count=num("word_count"),
        flag_words=num("flag_words") if "flag_words" in fields else 0,
    )


def _build_curves() -> dict[str, CurveParams]:
    p521 = (1 << 521) - 1
    secp521r1 = CurveParams(
        name="secp521r1",
        p=p521,
        a=p521 - 3,
        b=0x0051953EB9618E1C9A1F929A21A0B68540EEA2DA725B99B315F3B8B489918EF109E156193951EC7E937B1652C0BD3BB1BF073573DF883D2C34F1EF451FD46B503F00,
        gx=0x00C6858E06B70404E9CD9E3ECB662395B4429C648139053FB521F828AF606B4D3DBAA14B5E77EFE75928FE1DC127A2FFA8DE3348B3C1856A429BF97E7E31C2E5BD66,
        gy=0x011839296A789A3BC0045C8A5FB42C7D1BD998F54449579B446817AFBD17273E662C97EE72995EF42640C550B9013FAD0761353C7086A272C24088BE94769FD16650,
        n=0x01fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffa51868783bf2f966b7fcc0148f709a5d03bb5c9b8899c47aebb6fb71e91386409,
        word_count=9,
    )
    p128 = 0xFFFFFFFDFFFFFFFFFFFFFFFFFFFFFFFF
    secp128r1 = CurveParams(
        name="secp128r1",
        p=p128,
        a=p128 - 3,
        b=0xE87579C11079F43DD824993C2CEE5ED3,
        gx=0x161FF7528B899B2D0C28607CA52C5B86,
        gy=0xCF5AC8395BAFEB13C02DA292DDED7A83,
        n=0xFFFFFFFE0000000075A30D1B9038A115,
        word_count=2,
    )
    # Weierstrass form of the curve underlying Ed25519/X25519; n is the
    # prime subgroup order (cofactor 8 curve, but G generates the odd
    # subgroup and every scalar multiple stays inside it). Its four-word
    # coordinates exercise the narrow-register swap geometry.
    p255 = (1 << 255) - 19
    wei25519 = CurveParams(
        name="wei25519",
        p=p255,
        a=0x2AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA984914A144,
        b=0x7B425ED097B425ED097B425ED097B425ED097B425ED097B4260B5E9C7710C864,
        gx=0x2AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAD245A,
        gy=0x20AE19A1B8A086B4E01EDD2C7748D14C923D4D7E6D7C61B229E9C5A27ECED3D9,
        n=(1 << 252) + 27742317777372353535851937790883648493,
        word_count=4,
    )
    # Small enough for exhaustive scalar sweeps; n is prime and slightly
    # above p (17 bits), so full-width nonces exercise a 17-iteration loop.
    toy16 = CurveParams(
        name="toy16",
        p=65521,
        a=65518,
        b=3,
        gx=2,
        gy=12017,
        n=65563,
        word_count=1,
    )
    return {c.name: c for c in (secp521r1, secp128r1, wei25519, toy16)}


_BUILTIN_CACHE: dict[str, CurveParams] = {}

BUILTIN_CURVE_NAMES = ("secp521r1", "secp128r1", "wei25519", "toy16")


def builtin_curves() -> dict[str, CurveParams]:
    """The built-in curve registry (constructed and validated on first use)."""
    if not _BUILTIN_CACHE:
        _BUILTIN_CACHE.update(_build_curves())
    return _BUILTIN_CACHE


def get_curve(name: str) -> CurveParams:
    """Look up a built-in curve by name."""
    try:
        return builtin_curves()[name]
    except KeyError:
        raise ConfigError(
            f"unknown curve {name!r}; built-ins: {sorted(BUILTIN_CURVE_NAMES)}"
        ) from None
