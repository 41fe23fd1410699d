"""ECDSA over the lab curves, with the scalar multiplier pluggable.

Signing exposes everything a side-channel study needs and a production
signer must never reveal: the nonce comes back alongside the signature, the
multiplier can be chosen and traced, and all randomness flows through a
caller-supplied ``random.Random`` so whole experiments replay from a seed.
None of this is hardened against a real adversary; that is the point of the
laboratory.

File formats are line-oriented hex: keys serialize as ``d=<hex>``,
signatures as ``r=<hex> s=<hex> z=<hex>``, nonces as ``k=<hex>``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .errors import DomainError
from .events import EventRecorder
from .ff_curve import (
    CurveParams,
    ProjectivePoint,
    Scalar,
    double_and_always_add,
    montgomery_ladder,
    point_add,
    reference_multiply,
)

MULTIPLIERS = ("ladder", "daa")


@dataclass(frozen=True)
class KeyPair:
    """Private scalar and its public point."""

    curve: CurveParams
    d: int
    Q: ProjectivePoint

    def __post_init__(self) -> None:
        if not 1 <= self.d < self.curve.n:
            raise DomainError("private key outside [1, n-1]")


@dataclass(frozen=True, slots=True)
class Signature:
    """An ECDSA signature together with the message digest it signs."""

    r: int
    s: int
    z: int


@dataclass(frozen=True, slots=True)
class NonceRecord:
    """Ground-truth nonce for one signature; exists only for lab scoring."""

    k: Scalar
    signature: Signature


def keygen(curve: CurveParams, rng: random.Random) -> KeyPair:
    """Generate a key pair with the supplied RNG (reproducible, not secure)."""
    d = rng.randrange(1, curve.n)
    Q = montgomery_ladder(Scalar.for_curve(d, curve), curve.generator, curve)
    return KeyPair(curve, d, Q)


def _multiply_for_sign(
    k: Scalar,
    curve: CurveParams,
    multiplier: str,
    swap_impl,
    recorder: EventRecorder | None,
) -> ProjectivePoint:
    if multiplier == "ladder":
        return montgomery_ladder(k, curve.generator, curve, swap_impl, recorder)
    if multiplier == "daa":
        base = ProjectivePoint.from_affine(*curve.generator, curve.field)
        return double_and_always_add(k, base, curve, swap_impl, recorder)
    raise DomainError(f"unknown multiplier {multiplier!r}; choose from {MULTIPLIERS}")


def sign(
    z: int,
    key: KeyPair,
    rng: random.Random,
    multiplier: str = "ladder",
    swap_impl=None,
    recorder: EventRecorder | None = None,
) -> tuple[Signature, NonceRecord]:
    """Sign digest ``z``, returning the signature and its nonce record.

    Draws nonces until both signature halves are nonzero (with a recorder
    attached, a retried attempt leaves its events in the stream; on the
    large curves retries are astronomically unlikely). ``z`` may exceed n
    and is reduced where the math needs it.
    """
    curve = key.curve
    n = curve.n
    if z < 0:
        raise DomainError("digest must be non-negative")
    while True:
        k = rng.randrange(1, n)
        R = _multiply_for_sign(Scalar.for_curve(k, curve), curve, multiplier, swap_impl, recorder)
        affine = R.to_affine()
        assert affine is not None  # k in [1, n-1] cannot hit the neutral element
        r = affine[0] % n
        if r == 0:
            continue
        s = pow(k, n - 2, n) * ((z + r * key.d) % n) % n
        if s == 0:
            continue
        sig = Signature(r, s, z)
        return sig, NonceRecord(Scalar.for_curve(k, curve), sig)


def verify(sig: Signature, Q: ProjectivePoint, curve: CurveParams) -> bool:
    """Standard ECDSA verification of ``sig`` against public point ``Q``."""
    n = curve.n
    if not (1 <= sig.r < n and 1 <= sig.s < n):
        return False
    if Q.is_neutral:
        return False
    w = pow(sig.s, n - 2, n)
    u1 = sig.z * w % n
    u2 = sig.r * w % n
    G = ProjectivePoint.from_affine(*curve.generator, curve.field)
    R = point_add(
        reference_multiply(u1, G, curve),
        reference_multiply(u2, Q, curve),
        curve,
        validate=False,
    )
    affine = R.to_affine()
    if affine is None:
        return False
    return affine[0] % n == sig.r


def recover_private_key(sig: Signature, k: int, curve: CurveParams) -> int:
    """Solve the signing equation for d given the signature's nonce."""
    n = curve.n
    if not (1 <= sig.r < n and 1 <= sig.s < n):
        raise DomainError("signature components outside [1, n-1]")
    if not 1 <= k < n:
        raise DomainError("nonce outside [1, n-1]")
    d = (sig.s * k - sig.z) * pow(sig.r, n - 2, n) % n
    if d == 0:
        raise DomainError("recovered d = 0; nonce does not match this signature")
    return d


# ---------------------------------------------------------------------------
# Line-oriented hex serialization.


def write_private_key(path: str | Path, key: KeyPair) -> None:
    Path(path).write_text(f"d={key.d:x}\n")


def read_private_key(path: str | Path, curve: CurveParams) -> KeyPair:
    text = Path(path).read_text()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("d="):
            raise DomainError(f"{path}: expected 'd=<hex>', got {raw!r}")
        d = int(line[2:], 16)
        Q = montgomery_ladder(Scalar.for_curve(d, curve), curve.generator, curve)
        return KeyPair(curve, d, Q)
    raise DomainError(f"{path}: no key line found")


def write_signatures(path: str | Path, sigs: list[Signature]) -> None:
    lines = [f"r={s.r:x} s={s.s:x} z={s.z:x}" for s in sigs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_signatures(path: str | Path) -> list[Signature]:
    sigs: list[Signature] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = dict(p.split("=", 1) for p in line.split() if "=" in p)
        if set(parts) != {"r", "s", "z"}:
            raise DomainError(f"{path}:{lineno}: expected 'r= s= z=', got {raw!r}")
        sigs.append(Signature(int(parts["r"], 16), int(parts["s"], 16), int(parts["z"], 16)))
    return sigs


def write_nonces(path: str | Path, records: list[NonceRecord]) -> None:
    lines = [f"k={rec.k.value:x}" for rec in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_nonces(path: str | Path, curve: CurveParams) -> list[Scalar]:
    out: list[Scalar] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("k="):
            raise DomainError(f"{path}:{lineno}: expected 'k=<hex>', got {raw!r}")
        out.append(Scalar.for_curve(int(line[2:], 16), curve))
    return out
