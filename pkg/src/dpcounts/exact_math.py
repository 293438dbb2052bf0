"""Exact rational arithmetic oracle.

The constrained-total normalizer is a convolution sum

    S(c1, c2, T; p, q) = sum_{z=0}^{T} G(z+c1)/z! * G(T-z+c2)/(T-z)! * p^z q^(T-z)

whose closed form is a repeated derivative of the rational expression

    (p^(c1-1) q^(T+c2) - p^(T+c1) q^(c2-1)) / (q - p).

For positive integer c1, c2, every gamma ratio is an integer rising product
and the right-hand side is a polynomial after exact division (the numerator
vanishes identically on the line q = p). This module verifies the identity
and evaluates normalizers in arbitrary-precision rationals, with no floating
point anywhere, so it can anchor every float-path audit in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError

Key = tuple[int, int]  # (power of p, power of q)


class BivariatePoly:
    """Polynomial in two variables p, q with Fraction coefficients.

    Coefficients are stored sparsely; zero coefficients are never kept.
    Instances are immutable in use (operations return new polynomials).
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict[Key, Fraction] | None = None):
        cleaned: dict[Key, Fraction] = {}
        for (dp, dq), coeff in (coeffs or {}).items():
            if dp < 0 or dq < 0:
                raise DomainError("monomial degrees must be non-negative")
            coeff = Fraction(coeff)
            if coeff != 0:
                cleaned[(int(dp), int(dq))] = coeff
        self.coeffs = cleaned

    @classmethod
    def monomial(cls, dp: int, dq: int, coeff=1) -> "BivariatePoly":
        return cls({(dp, dq): Fraction(coeff)})

    @classmethod
    def zero(cls) -> "BivariatePoly":
        return cls({})

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "BivariatePoly") -> "BivariatePoly":
        out = dict(self.coeffs)
        for key, coeff in other.coeffs.items():
            out[key] = out.get(key, Fraction(0)) + coeff
        return BivariatePoly(out)

    def __sub__(self, other: "BivariatePoly") -> "BivariatePoly":
        out = dict(self.coeffs)
        for key, coeff in other.coeffs.items():
            out[key] = out.get(key, Fraction(0)) - coeff
        return BivariatePoly(out)

    def __mul__(self, other) -> "BivariatePoly":
        if isinstance(other, BivariatePoly):
            out: dict[Key, Fraction] = {}
            for (p1, q1), c1 in self.coeffs.items():
                for (p2, q2), c2 in other.coeffs.items():
                    key = (p1 + p2, q1 + q2)
                    out[key] = out.get(key, Fraction(0)) + c1 * c2
            return BivariatePoly(out)
        scalar = Fraction(other)
        return BivariatePoly({key: coeff * scalar for key, coeff in self.coeffs.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, BivariatePoly):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def differentiate(self, var: str, times: int = 1) -> "BivariatePoly":
        """Exact partial derivative with respect to 'p' or 'q'."""
        if var not in ("p", "q"):
            raise DomainError("var must be 'p' or 'q'")
        if times < 0:
            raise DomainError("times must be non-negative")
        poly = self
        for _ in range(times):
            out: dict[Key, Fraction] = {}
            for (dp, dq), coeff in poly.coeffs.items():
                if var == "p" and dp > 0:
                    out[(dp - 1, dq)] = out.get((dp - 1, dq), Fraction(0)) + coeff * dp
                elif var == "q" and dq > 0:
                    out[(dp, dq - 1)] = out.get((dp, dq - 1), Fraction(0)) + coeff * dq
            poly = BivariatePoly(out)
        return poly

    def evaluate(self, p, q) -> Fraction:
        p = Fraction(p)
        q = Fraction(q)
        total = Fraction(0)
        for (dp, dq), coeff in self.coeffs.items():
            total += coeff * p**dp * q**dq
        return total

    def __repr__(self) -> str:
        if self.is_zero():
            return "BivariatePoly(0)"
        parts = [f"{coeff}*p^{dp}*q^{dq}"
                 for (dp, dq), coeff in sorted(self.coeffs.items())]
        return "BivariatePoly(" + " + ".join(parts) + ")"


def divide_by_q_minus_p(numerator: BivariatePoly) -> BivariatePoly:
    """Exact quotient numerator / (q - p).

    Synthetic division in q with coefficients that are polynomials in p; the
    remainder is the substitution q <- p, which must vanish identically, so a
    nonzero remainder means the input was not divisible.
    """
    if numerator.is_zero():
        return BivariatePoly.zero()
    # Collect coefficients of q^k as sparse polynomials in p.
    by_q: dict[int, dict[int, Fraction]] = {}
    for (dp, dq), coeff in numerator.coeffs.items():
        by_q.setdefault(dq, {})[dp] = coeff
    degree = max(by_q)
    quotient: dict[Key, Fraction] = {}
    carry: dict[int, Fraction] = {}  # B_k, a polynomial in p
    for k in range(degree, 0, -1):
        a_k = by_q.get(k, {})
        b_km1 = dict(carry)
        for dp, coeff in a_k.items():
            b_km1[dp] = b_km1.get(dp, Fraction(0)) + coeff
        for dp, coeff in b_km1.items():
            if coeff != 0:
                quotient[(dp, k - 1)] = coeff
        # multiply by p before folding into the next lower power of q
        carry = {dp + 1: coeff for dp, coeff in b_km1.items() if coeff != 0}
    remainder = dict(carry)
    for dp, coeff in by_q.get(0, {}).items():
        remainder[dp] = remainder.get(dp, Fraction(0)) + coeff
    if any(coeff != 0 for coeff in remainder.values()):
        raise DomainError("numerator is not divisible by (q - p)")
    return BivariatePoly(quotient)


def rising_ratio(m: int, c: int) -> int:
    """Gamma(m + c) / m! as an exact integer, for integer m >= 0, c >= 1."""
    if m < 0 or c < 1:
        raise DomainError("rising_ratio needs m >= 0 and c >= 1")
    out = 1
    for t in range(1, c):
        out *= m + t
    return out


def convolution_sum(c1: int, c2: int, z_total: int, p, q) -> Fraction:
    """Exact left-hand side: direct summation with integer gamma ratios."""
    if c1 < 1 or c2 < 1:
        raise DomainError("c1 and c2 must be positive integers")
    if z_total < 0:
        raise DomainError("z_total must be non-negative")
    p = Fraction(p)
    q = Fraction(q)
    total = Fraction(0)
    for z in range(z_total + 1):
        total += rising_ratio(z, c1) * rising_ratio(z_total - z, c2) * p**z * q**(z_total - z)
    return total


def closed_form_numerator(c1: int, c2: int, z_total: int) -> BivariatePoly:
    """The pre-division numerator p^(c1-1) q^(T+c2) - p^(T+c1) q^(c2-1)."""
    return (BivariatePoly.monomial(c1 - 1, z_total + c2)
            - BivariatePoly.monomial(z_total + c1, c2 - 1))


def convolution_closed_form(c1: int, c2: int, z_total: int, p, q) -> Fraction:
    """Exact right-hand side: divide the numerator by (q - p), differentiate
    c1-1 times in p and c2-1 times in q, then evaluate. The polynomial path
    has no pole, so p = q is a perfectly valid evaluation point."""
    if c1 < 1 or c2 < 1:
        raise DomainError("c1 and c2 must be positive integers")
    if z_total < 1:
        raise DomainError("z_total must be a positive integer")
    poly = divide_by_q_minus_p(closed_form_numerator(c1, c2, z_total))
    poly = poly.differentiate("p", c1 - 1).differentiate("q", c2 - 1)
    return poly.evaluate(p, q)


@dataclass(frozen=True)
class IdentityCheck:
    lhs: Fraction
    rhs: Fraction
    equal: bool


def check_convolution_identity(c1: int, c2: int, z_total: int, p, q) -> IdentityCheck:
    """Evaluate both sides of the convolution identity exactly and compare.

    Equality here is exact rational equality, no tolerance.
    """
    lhs = convolution_sum(c1, c2, z_total, p, q)
    rhs = convolution_closed_form(c1, c2, z_total, p, q)
    return IdentityCheck(lhs=lhs, rhs=rhs, equal=lhs == rhs)


def exact_normalizer(y, a, r1, z_total: int) -> Fraction:
    """Exact constrained-total normalizer for integer prior strengths:

        sum_z rising(z, y1+a1) * rising(T-z, y2+a2) * r1^z

    with every term an exact rational.
    """
    y = [int(v) for v in y]
    a = [int(v) for v in a]
    if len(y) != 2 or len(a) != 2:
        raise DomainError("y and a must be length-2 vectors")
    if min(y) < 0 or min(a) < 1:
        raise DomainError("needs y >= 0 and integer a >= 1")
    if z_total < 0:
        raise DomainError("z_total must be non-negative")
    r1 = Fraction(r1)
    if r1 < 0:
        raise DomainError("structure ratio must be non-negative")
    c1 = y[0] + a[0]
    c2 = y[1] + a[1]
    total = Fraction(0)
    for z in range(z_total + 1):
        total += rising_ratio(z, c1) * rising_ratio(z_total - z, c2) * r1**z
    return total
