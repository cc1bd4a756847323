"""Garnier phase space, its polynomial Hamiltonians, and the Weyl symmetry.

The reduction of a rank-2 isomonodromy state to canonical coordinates:

    q_i = t_i b_i / b_inf,
    p_i = (b_inf / t_i) (a_i/b_i + (t_i - 1) a_{n+1}/b_{n+1}
                                  - t_i a_{n+2}/b_{n+2}),
    x_i = t_i / (t_i - 1),

with exponent parameters

    eps_1 = theta_{n+1},  eps_2 = theta_{n+2},  eps_3 = theta_{n+3} + 1,
    eps_{j+3} = theta_j   (j = 1..n),

so that rho = (1 - sum eps)/2 agrees with the residue normalization of the
matrix side.  The two remaining singular positions land at x = 0 (from
t = 0) and x = 1 (from t = infinity); t = 1 is sent off to x = infinity,
which is why d/dx_i = -(t_i - 1)^2 d/dt_i throughout.

hamiltonian_K is the polynomial Hamiltonian of the multi-time system

    dq_j/dx_i = dK_i/dp_j,   dp_j/dx_i = -dK_i/dq_j,

and hamiltonian_Hbar adds (q, p)-free pole terms in x whose constants make

    -(x_i - 1)^2 Hbar_i  =  H_i  on the (n+3 up, n+1 down) shifted state,

exactly, through the reduction.  That matching, together with the flow
bridge, is certified by check_sch_to_gar.

The reflections s_0..s_{n+3} act birationally on (q, p, x, eps) and
generate an affine Weyl group of type B; for n = 1 an extra shear
(token "s0star") extends the group to type F4 and realizes s_0 as the
composite s0star s_4 s_3 s_4 s0star.  Root data (simple affine roots,
Cartan matrix, Coxeter orders) is constructed independently and serves as
the oracle both for the reflection tables (check_root_matrix) and for the
relation list (check_weyl_relations).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .exact import (
    CheckReport,
    DegenerateStateError,
    Dual,
    RationalSampler,
    SampleConfig,
    certify_identity,
    failure_bound_str,
    rat,
    value_of,
)
from .schlesinger import (
    SchlesingerState,
    constant_C,
    hamiltonian_H,
    sample_state,
)
from .schlesinger import lift as sch_lift
from .transforms import (
    apply_T_mu,
    resolve_policy,
    sigma_apply,
    sign_change_apply,
)

__all__ = [
    "GarnierState",
    "sample_garnier",
    "from_schlesinger",
    "hamiltonian_K",
    "hamiltonian_Hbar",
    "garnier_flow",
    "lift",
    "flow_derivative",
    "weyl_eps",
    "weyl_apply",
    "weyl_apply_F4",
    "apply_reflection_word",
    "affine_roots",
    "f4_roots",
    "root_value",
    "cartan_matrix",
    "coxeter_order",
    "f4_eps",
    "root_action",
    "garnier_to_dict",
    "garnier_from_dict",
    "battery_garnier",
    "weyl_relation_words",
    "f4_relation_words",
    "relation_reports",
    "check_root_matrix",
    "check_weyl_relations",
    "check_canonical",
    "check_equivariance",
    "check_sch_to_gar",
    "check_bridge_maps",
]


@dataclass(frozen=True)
class GarnierState:
    """Immutable point of the reduced phase space.

    q, p hold the n canonical pairs, x the n independent positions (never
    0 or 1, pairwise distinct), eps the n+3 exponent parameters.  Entries
    may be Fraction, float or Dual; the arithmetic never mixes
    representations on its own.
    """

    n: int
    q: tuple
    p: tuple
    x: tuple
    eps: tuple

    # -- 1-based accessors ------------------------------------------------

    def q_of(self, i):
        if not 1 <= i <= self.n:
            raise IndexError(f"coordinate label out of range: {i}")
        return self.q[i - 1]

    def p_of(self, i):
        if not 1 <= i <= self.n:
            raise IndexError(f"coordinate label out of range: {i}")
        return self.p[i - 1]

    def x_of(self, i):
        if not 1 <= i <= self.n:
            raise IndexError(f"position label out of range: {i}")
        return self.x[i - 1]

    def eps_of(self, j):
        if not 1 <= j <= self.n + 3:
            raise IndexError(f"parameter label out of range: {j}")
        return self.eps[j - 1]

    def theta_of(self, j):
        """Exponent of the matrix side carrying the pole label j (1..n+3)."""
        n = self.n
        if 1 <= j <= n:
            return self.eps[j + 2]
        if j == n + 1:
            return self.eps[0]
        if j == n + 2:
            return self.eps[1]
        if j == n + 3:
            return self.eps[2] - 1
        raise IndexError(f"exponent label out of range: {j}")

    # -- derived scalars ---------------------------------------------------

    @property
    def rho(self):
        s = self.eps[0]
        for e in self.eps[1:]:
            s = s + e
        return (1 - s) / 2

    def Q1(self):
        """sum q_l p_l + rho, the recurring core of the s_0 denominators."""
        s = self.q[0] * self.p[0]
        for qq, pp in zip(self.q[1:], self.p[1:]):
            s = s + qq * pp
        return s + self.rho

    def Q2(self):
        """sum q_j - 1, the denominator of s_2."""
        s = self.q[0]
        for qq in self.q[1:]:
            s = s + qq
        return s - 1

    # -- reconstruction ----------------------------------------------------

    def replace(self, q=None, p=None, x=None, eps=None) -> "GarnierState":
        return GarnierState(
            n=self.n,
            q=tuple(q) if q is not None else self.q,
            p=tuple(p) if p is not None else self.p,
            x=tuple(x) if x is not None else self.x,
            eps=tuple(eps) if eps is not None else self.eps,
        )

    def map_entries(self, f) -> "GarnierState":
        """Apply f to every scalar of the state."""
        return GarnierState(
            n=self.n,
            q=tuple(f(v) for v in self.q),
            p=tuple(f(v) for v in self.p),
            x=tuple(f(v) for v in self.x),
            eps=tuple(f(v) for v in self.eps),
        )

    def validate(self):
        """Check the position constraints exactly (Fraction states only)."""
        if len(self.q) != self.n or len(self.p) != self.n or len(self.x) != self.n:
            raise DegenerateStateError("coordinate tuple lengths disagree with n")
        if len(self.eps) != self.n + 3:
            raise DegenerateStateError("parameter tuple length disagrees with n")
        seen = set()
        for i in range(1, self.n + 1):
            xi = self.x_of(i)
            if xi == 0 or xi == 1:
                raise DegenerateStateError(f"x_{i} sits on a fixed singular position")
            if xi in seen:
                raise DegenerateStateError("position collision")
            seen.add(xi)


def sample_garnier(cfg: SampleConfig, stream: int, n: int) -> GarnierState:
    """Random exact state: generic positions, nonzero coordinates.

    Nonzero q, p and noninteger eps keep the reflection denominators away
    from zero for most draws; the maps still guard their own denominators.
    """
    if n < 1:
        raise ValueError("need at least one position")
    rng = RationalSampler(cfg, stream)
    xs: list = []
    for _ in range(n):
        xs.append(rng.draw(exclude=set(xs) | {Fraction(0), Fraction(1)}))
    eps = tuple(rng.draw(noninteger=True) for _ in range(n + 3))
    q = tuple(rng.draw(nonzero=True) for _ in range(n))
    p = tuple(rng.draw(nonzero=True) for _ in range(n))
    return GarnierState(n=n, q=q, p=p, x=tuple(xs), eps=eps)


def from_schlesinger(s: SchlesingerState) -> GarnierState:
    """Reduce a matrix state to canonical coordinates.

    Gauge invariant: constant diagonal conjugation rescales every b_j by
    one common factor and leaves the a_j alone, so q, p, x only see
    ratios that drop the gauge.  Works on lifted states; the zero tests
    strip Dual layers first, so the dots ride along untouched.
    """
    n = s.n
    binf = s.b_inf()
    if value_of(binf) == 0:
        raise DegenerateStateError("b_inf vanishes")
    for j in (n + 1, n + 2):
        if value_of(s.b_of(j)) == 0:
            raise DegenerateStateError(f"b_{j} vanishes")
    q = []
    p = []
    x = []
    for i in range(1, n + 1):
        ti = s.t_of(i)
        bi = s.b_of(i)
        if value_of(bi) == 0:
            raise DegenerateStateError(f"b_{i} vanishes")
        if value_of(ti) == 0 or value_of(ti - 1) == 0:
            raise DegenerateStateError(f"t_{i} sits on a pinned position")
        q.append(ti * bi / binf)
        p.append(
            binf
            / ti
            * (
                s.a_of(i) / bi
                + (ti - 1) * s.a_of(n + 1) / s.b_of(n + 1)
                - ti * s.a_of(n + 2) / s.b_of(n + 2)
            )
        )
        x.append(ti / (ti - 1))
    eps = (
        s.theta_of(n + 1),
        s.theta_of(n + 2),
        s.theta_of(n + 3) + 1,
    ) + tuple(s.theta_of(j) for j in range(1, n + 1))
    return GarnierState(n=n, q=tuple(q), p=tuple(p), x=tuple(x), eps=eps)


# -- Hamiltonians --------------------------------------------------------------


def hamiltonian_K(gs: GarnierState, i: int):
    """Polynomial Hamiltonian of the direction x_i.

    Polynomial in (q, p), rational in x with poles only at x_i = 0, 1 and
    at position collisions.  The interpolation weights are

        X_ij = x_i (x_j - 1) / (x_j - x_i),
        X*_ij = x_i (x_i - 1) / (x_i - x_j),

    and every theta below is read through the parameter dictionary.
    """
    n = gs.n
    if not 1 <= i <= n:
        raise IndexError(f"flow direction out of range: {i}")
    th = gs.theta_of
    rho = gs.rho
    qi, pi, xi = gs.q_of(i), gs.p_of(i), gs.x_of(i)
    S = gs.q[0] * gs.p[0]
    for qq, pp in zip(gs.q[1:], gs.p[1:]):
        S = S + qq * pp
    acc = qi * (rho + S) * (rho + th(n + 3) + 1 + S)
    acc = acc + xi * pi * (qi * pi - th(i))
    for j in range(1, n + 1):
        if j == i:
            continue
        qj, pj, xj = gs.q_of(j), gs.p_of(j), gs.x_of(j)
        Xij = xi * (xj - 1) / (xj - xi)
        Xji = xj * (xi - 1) / (xi - xj)
        Xstar = xi * (xi - 1) / (xi - xj)
        acc = acc - Xij * qi * pi * (qj * pj - th(j))
        acc = acc - Xji * qi * (qj * pj - th(j)) * pj
        acc = acc - Xstar * (qi * pi - th(i)) * pi * qj
        acc = acc - Xij * (qi * pi - th(i)) * qj * pj
    acc = acc - (xi + 1) * (qi * pi - th(i)) * qi * pi
    acc = acc + (th(n + 2) * xi + th(n + 1) - 1) * qi * pi
    return acc / (xi * (xi - 1))


def hamiltonian_Hbar(gs: GarnierState, i: int):
    """K_i plus the (q, p)-free pole terms in x.

    Pole positions are the other x_j together with the fixed slots x = 0
    (label n+1) and x = 1 (label n+2).  The attached constants are the
    pair constants of the matrix side evaluated at the shifted exponents
    (theta_{n+1} down, theta_{n+3} up), corrected by exponent products in
    the original values; the x = 1 slot carries minus the sum of all the
    shifted pair constants.
    """
    n = gs.n
    if not 1 <= i <= n:
        raise IndexError(f"flow direction out of range: {i}")
    th = [gs.theta_of(j) for j in range(1, n + 4)]
    tsh = list(th)
    tsh[n] = tsh[n] - 1
    tsh[n + 2] = tsh[n + 2] + 1
    zero = gs.x[0] * 0
    xext = list(gs.x) + [zero, zero + 1]
    xi = gs.x_of(i)
    thi = th[i - 1]
    acc = hamiltonian_K(gs, i)
    for j in range(1, n + 3):
        if j == i:
            continue
        TC = constant_C(tsh, n, i, j)
        if j <= n:
            Cb = TC + thi * th[j - 1]
        elif j == n + 1:
            Cb = TC + thi * (th[n] - 1)
        else:
            ms = None
            for jj in range(1, n + 3):
                if jj == i:
                    continue
                term = constant_C(tsh, n, i, jj)
                ms = term if ms is None else ms + term
            Cb = -ms + thi * (thi + th[n + 2] + 2 * gs.rho + 1)
        acc = acc + Cb / (xi - xext[j - 1])
    return acc


# -- flows ---------------------------------------------------------------------


def _dot(v):
    return getattr(v, "dot", 0)


def garnier_flow(gs: GarnierState, i: int):
    """Hamiltonian field of K_i: (dq_j/dx_i)_j and (dp_j/dx_i)_j.

    The pole terms of hamiltonian_Hbar carry no q or p, so the bracket
    sees only K_i.  Partials are taken by dual wiggles, one coordinate at
    a time; nests through already-lifted states.
    """
    n = gs.n
    zero = gs.x[0] * 0
    one = zero + 1
    dq = []
    dp = []
    for l in range(1, n + 1):
        wig = gs.replace(
            p=tuple(
                Dual(v, one if m == l else zero)
                for m, v in enumerate(gs.p, start=1)
            )
        )
        dq.append(_dot(hamiltonian_K(wig, i)))
        wig = gs.replace(
            q=tuple(
                Dual(v, one if m == l else zero)
                for m, v in enumerate(gs.q, start=1)
            )
        )
        dp.append(-_dot(hamiltonian_K(wig, i)))
    return tuple(dq), tuple(dp)


def lift(gs: GarnierState, i: int) -> GarnierState:
    """Replace every scalar v by Dual(v, dv/dx_i along the flow).  Nests."""
    n = gs.n
    if not 1 <= i <= n:
        raise IndexError(f"flow direction out of range: {i}")
    dq, dp = garnier_flow(gs, i)
    zero = gs.x[0] * 0

    def dx(m):
        return zero + 1 if m == i else zero

    return GarnierState(
        n=n,
        q=tuple(Dual(v, dv) for v, dv in zip(gs.q, dq)),
        p=tuple(Dual(v, dv) for v, dv in zip(gs.p, dp)),
        x=tuple(Dual(v, dx(m)) for m, v in enumerate(gs.x, start=1)),
        eps=tuple(Dual(e, zero) for e in gs.eps),
    )


def flow_derivative(f, gs: GarnierState, i: int):
    """Total derivative d/dx_i of the scalar observable f along the flow."""
    out = f(lift(gs, i))
    if isinstance(out, Dual):
        return out.dot
    return out * 0


# -- reflections ---------------------------------------------------------------


def _swapped(seq, a, b):
    out = list(seq)
    out[a - 1], out[b - 1] = out[b - 1], out[a - 1]
    return tuple(out)


def weyl_eps(eps, k: int, n: int):
    """Parameter action of the reflection s_k on the eps tuple."""
    if k == 0:
        return (1 - eps[1], 1 - eps[0]) + tuple(eps[2:])
    if 1 <= k <= n + 2:
        return _swapped(eps, k, k + 1)
    if k == n + 3:
        return tuple(eps[:-1]) + (-eps[-1],)
    raise IndexError(f"reflection label out of range: {k}")


def weyl_apply(gs: GarnierState, k: int, policy: Optional[dict] = None) -> GarnierState:
    """Birational reflection s_k on (q, p, x, eps).

    s_0 is specified on q_j and on the product q_j p_j; the p-image is
    completed by division, so a vanishing q-image is a degeneracy of the
    map, not of the state.  The x-scaling of s_3 on the labels i != 1
    follows the s3_x_scale policy reading.
    """
    pol = resolve_policy(policy)
    n = gs.n
    eps = weyl_eps(gs.eps, k, n)
    if k == 0:
        Q1 = gs.Q1()
        den = Q1 * (Q1 + gs.eps_of(3))
        if value_of(den) == 0:
            raise DegenerateStateError("Q_1 (Q_1 + eps_3) vanishes")
        q = []
        p = []
        for j in range(1, n + 1):
            f = gs.q_of(j) * gs.p_of(j)
            qj = gs.p_of(j) * (f - gs.eps_of(j + 3)) / den
            if value_of(qj) == 0:
                raise DegenerateStateError(f"image of q_{j} under s_0 vanishes")
            q.append(qj)
            p.append((gs.eps_of(j + 3) - f) / qj)
        x = tuple(1 / xm for xm in gs.x)
        return GarnierState(n=n, q=tuple(q), p=tuple(p), x=x, eps=eps)
    if k == 1:
        q = tuple(gs.q_of(j) / gs.x_of(j) for j in range(1, n + 1))
        p = tuple(gs.x_of(j) * gs.p_of(j) for j in range(1, n + 1))
        x = tuple(1 / xm for xm in gs.x)
        return GarnierState(n=n, q=q, p=p, x=x, eps=eps)
    if k == 2:
        Q2 = gs.Q2()
        if value_of(Q2) == 0:
            raise DegenerateStateError("Q_2 vanishes")
        Q1 = gs.Q1()
        q = tuple(gs.q_of(j) / Q2 for j in range(1, n + 1))
        p = tuple((gs.p_of(j) - Q1) * Q2 for j in range(1, n + 1))
        x = tuple(xm / (xm - 1) for xm in gs.x)
        return GarnierState(n=n, q=q, p=p, x=x, eps=eps)
    if k == 3:
        q1 = gs.q_of(1)
        if value_of(q1) == 0:
            raise DegenerateStateError("q_1 vanishes")
        x1 = gs.x_of(1)
        if value_of(x1) == 0:
            raise DegenerateStateError("x_1 vanishes")
        Q1 = gs.Q1()
        q = (1 / q1,) + tuple(-gs.q_of(j) / q1 for j in range(2, n + 1))
        p = (-q1 * Q1,) + tuple(-q1 * gs.p_of(j) for j in range(2, n + 1))
        if pol["s3_x_scale"] == "x1":
            x = (1 / x1,) + tuple(gs.x_of(i) / x1 for i in range(2, n + 1))
        else:
            x = (1 / x1,) + tuple(gs.x_of(i) for i in range(2, n + 1))
        return GarnierState(n=n, q=q, p=p, x=x, eps=eps)
    if 4 <= k <= n + 2:
        m = k - 3
        return GarnierState(
            n=n,
            q=_swapped(gs.q, m, m + 1),
            p=_swapped(gs.p, m, m + 1),
            x=_swapped(gs.x, m, m + 1),
            eps=eps,
        )
    if k == n + 3:
        qn = gs.q_of(n)
        if value_of(qn) == 0:
            raise DegenerateStateError(f"q_{n} vanishes")
        p = gs.p[:-1] + (gs.p_of(n) - gs.eps_of(n + 3) / qn,)
        return GarnierState(n=n, q=gs.q, p=p, x=gs.x, eps=eps)
    raise IndexError(f"reflection label out of range: {k}")


def weyl_apply_F4(gs: GarnierState, k: int, policy: Optional[dict] = None) -> GarnierState:
    """The n = 1 reflection family with the extra shear as label 0.

    Labels 1..4 delegate to weyl_apply.  Label 0 is the shear: p and x
    are fixed, every eps_j gains the half-sum defect (1 - sum eps)/2, and
    q gains the same quantity divided by p.  The numerator follows the
    f4_shear_numerator policy; the literal reading "eps_4" (with its
    minus sign) fails to square to the identity, the "alpha4" reading
    satisfies every F4 relation and the composite below.
    """
    if gs.n != 1:
        raise ValueError("the extra shear exists only for n = 1")
    if k != 0:
        if not 1 <= k <= 4:
            raise IndexError(f"reflection label out of range: {k}")
        return weyl_apply(gs, k, policy)
    pol = resolve_policy(policy)
    p1 = gs.p_of(1)
    if value_of(p1) == 0:
        raise DegenerateStateError("p vanishes")
    shear = (1 - (gs.eps[0] + gs.eps[1] + gs.eps[2] + gs.eps[3])) / 2
    if pol["f4_shear_numerator"] == "alpha4":
        q1 = gs.q_of(1) + shear / p1
    else:
        q1 = gs.q_of(1) - gs.eps_of(4) / p1
    eps = tuple(e + shear for e in gs.eps)
    return GarnierState(n=1, q=(q1,), p=(p1,), x=gs.x, eps=eps)


def _apply_token(gs: GarnierState, token: str, policy: Optional[dict] = None) -> GarnierState:
    if token == "s0star":
        return weyl_apply_F4(gs, 0, policy)
    return weyl_apply(gs, int(token[1:]), policy)


def apply_reflection_word(gs: GarnierState, word, policy: Optional[dict] = None) -> GarnierState:
    """Apply a word of reflection tokens ("s2", "s0star", ...) right to left."""
    for token in reversed(tuple(word)):
        gs = _apply_token(gs, token, policy)
    return gs


# -- root data -----------------------------------------------------------------
#
# A simple affine root is stored as (constant, gradient over eps); its value
# at eps is constant + <gradient, eps>.  The Cartan matrix built on the
# gradients, and the Coxeter orders derived from it, are the independent
# oracle for the reflection tables and the relation list.


def affine_roots(n: int):
    """Simple affine roots alpha_0..alpha_{n+3} of the B-type lattice."""
    m = n + 3
    roots = [(Fraction(1), tuple(-1 if l < 2 else 0 for l in range(m)))]
    for j in range(1, n + 3):
        grad = tuple(1 if l == j - 1 else (-1 if l == j else 0) for l in range(m))
        roots.append((Fraction(0), grad))
    roots.append((Fraction(0), tuple(1 if l == m - 1 else 0 for l in range(m))))
    return roots


def f4_roots():
    """The five F4-type simple affine roots of the n = 1 lattice."""
    h = Fraction(1, 2)
    return [
        (Fraction(0), (1, -1, 0, 0)),
        (Fraction(0), (0, 1, -1, 0)),
        (Fraction(0), (0, 0, 1, -1)),
        (Fraction(0), (0, 0, 0, 1)),
        (h, (-h, -h, -h, -h)),
    ]


def root_value(root, eps):
    const, grad = root
    acc = const
    for g, e in zip(grad, eps):
        acc = acc + g * e
    return acc


def cartan_matrix(roots):
    """a_jk = 2 <alpha_j, alpha_k> / <alpha_k, alpha_k> on the gradients."""

    def inner(u, v):
        return sum(a * b for a, b in zip(u, v))

    out = []
    for _, gj in roots:
        row = []
        for _, gk in roots:
            row.append(rat(2 * inner(gj, gk)) / rat(inner(gk, gk)))
        out.append(row)
    return out


def coxeter_order(ajk, akj) -> int:
    """Order of s_j s_k read off the Cartan entries (0->2, 1->3, 2->4, 3->6)."""
    table = {0: 2, 1: 3, 2: 4, 3: 6}
    prod = ajk * akj
    if prod not in table:
        raise ValueError(f"not a crystallographic bond: {prod}")
    return table[prod]


# F4 node -> generator token; the shear sits at the affine end of the diagram.
F4_TOKENS = ("s1", "s2", "s3", "s4", "s0star")


def f4_eps(eps, node: int):
    """Parameter action of the generator attached to the F4 node (0..4)."""
    if node == 0:
        return _swapped(eps, 1, 2)
    if node == 1:
        return _swapped(eps, 2, 3)
    if node == 2:
        return _swapped(eps, 3, 4)
    if node == 3:
        return tuple(eps[:3]) + (-eps[3],)
    if node == 4:
        shear = (1 - (eps[0] + eps[1] + eps[2] + eps[3])) / 2
        return tuple(e + shear for e in eps)
    raise IndexError(f"node label out of range: {node}")


def root_action(k: int, j: int, eps, n: int, family: str = "B"):
    """Value of alpha_j at the eps-image of the k-th reflection.

    family "B": k, j label 0..n+3.  family "F4": n must be 1 and k, j are
    node labels 0..4 (node 4 carries the shear).
    """
    if family == "B":
        roots = affine_roots(n)
        image = weyl_eps(eps, k, n)
    elif family == "F4":
        if n != 1:
            raise ValueError("F4 data exists only for n = 1")
        roots = f4_roots()
        image = f4_eps(eps, k)
    else:
        raise KeyError(f"unknown root family: {family}")
    return root_value(roots[j], image)


# -- JSON fixtures ---------------------------------------------------------


def _scalar_str(v) -> str:
    return str(rat(v))


def garnier_to_dict(gs: GarnierState) -> dict:
    return {
        "n": gs.n,
        "q": [_scalar_str(v) for v in gs.q],
        "p": [_scalar_str(v) for v in gs.p],
        "x": [_scalar_str(v) for v in gs.x],
        "eps": [_scalar_str(v) for v in gs.eps],
    }


def garnier_from_dict(data: dict) -> GarnierState:
    gs = GarnierState(
        n=int(data["n"]),
        q=tuple(Fraction(v) for v in data["q"]),
        p=tuple(Fraction(v) for v in data["p"]),
        x=tuple(Fraction(v) for v in data["x"]),
        eps=tuple(Fraction(v) for v in data["eps"]),
    )
    gs.validate()
    return gs


# -- check suites ------------------------------------------------------------


def battery_garnier(gs: GarnierState) -> dict:
    """Every scalar of the state, keyed for residual labels."""
    out = {}
    for i in range(1, gs.n + 1):
        out[f"q{i}"] = gs.q_of(i)
        out[f"p{i}"] = gs.p_of(i)
        out[f"x{i}"] = gs.x_of(i)
    for j in range(1, gs.n + 4):
        out[f"eps{j}"] = gs.eps_of(j)
    return out


def _garnier_factory(n: int):
    def make(cfg: SampleConfig, stream: int) -> GarnierState:
        return sample_garnier(cfg, stream, n)

    return make


def _sch_factory(n: int):
    def make(cfg: SampleConfig, stream: int) -> SchlesingerState:
        return sample_state(cfg, stream, n)

    return make


def _diff(tag: str, left: dict, right: dict):
    for key, lval in left.items():
        yield f"{tag}:{key}", lval - right[key]


def check_root_matrix(cfg: SampleConfig, n: int = 2,
                      policy: Optional[dict] = None) -> CheckReport:
    """Reflection action on the simple roots vs the Cartan-matrix formula.

    For every pair (k, j), alpha_j evaluated at s_k(eps) must equal
    (alpha_j - a_jk alpha_k) evaluated at eps.  For n = 1 the same matrix
    identity is run for the F4 family with the shear at node 4.
    """
    pol = resolve_policy(policy)

    def residuals(gs):
        eps = gs.eps
        tables = [("B", affine_roots(gs.n),
                   lambda e, k: weyl_eps(e, k, gs.n),
                   [f"s{k}" for k in range(gs.n + 4)])]
        if gs.n == 1:
            tables.append(("F4", f4_roots(), f4_eps, list(F4_TOKENS)))
        for family, roots, act, names in tables:
            a = cartan_matrix(roots)
            m = len(roots)
            for k in range(m):
                image = act(eps, k)
                for j in range(m):
                    lhs = root_value(roots[j], image)
                    rhs = root_value(roots[j], eps) - a[j][k] * root_value(
                        roots[k], eps
                    )
                    yield f"{family}:{names[k]}:alpha{j}", lhs - rhs

    return certify_identity("garnier.root_matrix", residuals,
                            _garnier_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=4)


def weyl_relation_words(n: int):
    """Relation words over the reflection tokens, one per Coxeter entry.

    Involutions s_k^2 for every label and, for every pair k < l, the word
    (s_k s_l)^m with m the Coxeter order from the Cartan matrix.
    """
    a = cartan_matrix(affine_roots(n))
    words = []
    for k in range(n + 4):
        words.append((f"s{k}*s{k}", (f"s{k}", f"s{k}")))
    for k in range(n + 4):
        for l in range(k + 1, n + 4):
            m = coxeter_order(a[k][l], a[l][k])
            word = tuple(f"s{k}" if idx % 2 == 0 else f"s{l}"
                         for idx in range(2 * m))
            words.append(("*".join(word), word))
    return words


def f4_relation_words():
    """Extra n = 1 relations for the shear, plus the composite realizing s_0.

    Pairs among s_1..s_4 are already covered by the B-type list, so only
    the bonds touching the shear node are added.  The composite word ends
    with s_0 itself: the whole word must fix every scalar.
    """
    a = cartan_matrix(f4_roots())
    words = [("s0star*s0star", ("s0star", "s0star"))]
    for node in range(4):
        m = coxeter_order(a[node][4], a[4][node])
        word = tuple(F4_TOKENS[4] if idx % 2 == 0 else F4_TOKENS[node]
                     for idx in range(2 * m))
        words.append(("*".join(word), word))
    words.append(("s0star*s4*s3*s4*s0star*s0",
                  ("s0star", "s4", "s3", "s4", "s0star", "s0")))
    return words


def _relation_certify_all(cfg: SampleConfig, n: int, pol: dict):
    words = weyl_relation_words(n)
    if n == 1:
        words = words + f4_relation_words()
    reports = []
    for tag, word in words:

        def residuals(gs, word=word, tag=tag):
            base = battery_garnier(gs)
            img = apply_reflection_word(gs, word, pol)
            yield from _diff(tag, battery_garnier(img), base)

        reports.append(
            certify_identity(
                f"garnier.relations.{tag}", residuals, _garnier_factory(n),
                cfg, policy=pol, params={"n": n, "relation": tag},
                degree_hint=2000,
            )
        )
    return reports


def check_weyl_relations(cfg: SampleConfig, n: int = 2,
                         policy: Optional[dict] = None) -> CheckReport:
    """All group relations implied by the Cartan data, word by word.

    Each relation gets its own certification pass over fresh states; the
    merged report carries one verdict note per relation and fails if any
    word fails.  For n = 1 the F4 words and the composite for s_0 are
    appended.
    """
    pol = resolve_policy(policy)
    reports = _relation_certify_all(cfg, n, pol)
    out = CheckReport(suite="garnier.relations", verdict="PASS",
                      seed=cfg.seed, trials=cfg.trials, policy=pol,
                      params={"n": n, "relations": len(reports)})
    out.failure_bound = failure_bound_str(2000, cfg)
    for rep in reports:
        out.resamples += rep.resamples
        out.notes.append(f"{rep.params['relation']}: {rep.verdict}")
        if not rep.passed:
            out.verdict = "FAIL"
            if out.counterexample is None:
                ce = dict(rep.counterexample or {})
                ce["relation"] = rep.params["relation"]
                out.counterexample = ce
    return out


def relation_reports(cfg: SampleConfig, n: int = 2,
                     policy: Optional[dict] = None) -> list:
    """One JSON-ready record per group relation: relation, verdict, trials."""
    pol = resolve_policy(policy)
    out = []
    for rep in _relation_certify_all(cfg, n, pol):
        rec = {
            "relation": rep.params["relation"],
            "verdict": rep.verdict,
            "trials": rep.trials,
        }
        if rep.counterexample is not None:
            rec["counterexample"] = rep.counterexample
        out.append(rec)
    return out


def check_canonical(cfg: SampleConfig, n: int = 2, k: int = 0,
                    policy: Optional[dict] = None) -> CheckReport:
    """Brackets of the image coordinates in (q, p) at frozen x.

    {q'_i, p'_j} = delta_ij and {q'_i, q'_j} = {p'_i, p'_j} = 0, with the
    Jacobian taken by dual wiggles of the source (q, p) only.  For the
    x-moving reflections this freezes x on both sides; the verdict is
    recorded either way.
    """
    pol = resolve_policy(policy)

    def residuals(gs):
        nn = gs.n
        zero = gs.x[0] * 0
        one = zero + 1
        jac = []
        for which in ("q", "p"):
            for l in range(1, nn + 1):
                if which == "q":
                    wig = gs.replace(q=tuple(
                        Dual(v, one if m == l else zero)
                        for m, v in enumerate(gs.q, start=1)))
                else:
                    wig = gs.replace(p=tuple(
                        Dual(v, one if m == l else zero)
                        for m, v in enumerate(gs.p, start=1)))
                img = weyl_apply(wig, k, pol)
                jac.append(
                    [_dot(img.q_of(m)) for m in range(1, nn + 1)]
                    + [_dot(img.p_of(m)) for m in range(1, nn + 1)]
                )
        # J[out][w] = d(image component out) / d(source coordinate w)
        J = [[jac[w][o] for w in range(2 * nn)] for o in range(2 * nn)]

        def bracket(a, b):
            acc = zero
            for l in range(nn):
                acc = acc + J[a][l] * J[b][nn + l] - J[a][nn + l] * J[b][l]
            return acc

        for i in range(nn):
            for j in range(nn):
                delta = 1 if i == j else 0
                yield f"s{k}:qp{i+1}{j+1}", bracket(i, nn + j) - delta
        for i in range(nn):
            for j in range(i + 1, nn):
                yield f"s{k}:qq{i+1}{j+1}", bracket(i, j)
                yield f"s{k}:pp{i+1}{j+1}", bracket(nn + i, nn + j)

    rep = certify_identity(f"garnier.canonical.s{k}", residuals,
                           _garnier_factory(n), cfg, policy=pol,
                           params={"n": n, "k": k}, degree_hint=400)
    if k in (0, 1, 2, 3):
        rep.notes.append("x-moving reflection; bracket taken at frozen x")
    return rep


def check_equivariance(cfg: SampleConfig, n: int = 2, k: int = 0,
                       policy: Optional[dict] = None) -> CheckReport:
    """The reflection maps the multi-time Hamiltonian system to itself.

    Lift the source state along x_i, push through s_k, and compare the
    resulting dots with the x-Jacobian contraction of the image state's
    own flows; the image flows already carry s_k(eps).
    """
    pol = resolve_policy(policy)

    def gen(s):
        return weyl_apply(s, k, pol)

    def residuals(gs):
        nn = gs.n
        w = gen(gs)
        img_dots = []
        for m in range(1, nn + 1):
            lm = lift(w, m)
            img_dots.append(
                {key: _dot(v) for key, v in battery_garnier(lm).items()}
            )
        for i in range(1, nn + 1):
            wl = gen(lift(gs, i))
            jac = [_dot(wl.x_of(m)) for m in range(1, nn + 1)]
            for key, val in battery_garnier(wl).items():
                pulled = sum(
                    jac[m - 1] * img_dots[m - 1][key] for m in range(1, nn + 1)
                )
                yield f"s{k}:d{i}:{key}", _dot(val) - pulled

    return certify_identity(f"garnier.equivariance.s{k}", residuals,
                            _garnier_factory(n), cfg, policy=pol,
                            params={"n": n, "k": k}, degree_hint=3000)


def _cross_mu(n: int) -> tuple:
    # e_{n+3} - e_{n+1}: the exponent shift whose Hamiltonian the reduction
    # reproduces
    mu = [0] * (n + 3)
    mu[n] = -1
    mu[n + 2] = 1
    return tuple(mu)


def check_sch_to_gar(cfg: SampleConfig, n: int = 2,
                     policy: Optional[dict] = None) -> CheckReport:
    """The reduction dictionary, exactly, at sampled matrix states.

    Certifies the parameter dictionary, the position map, the Hamiltonian
    matching -(x_i - 1)^2 Hbar_i = H_i on the shifted state, and the flow
    bridge -(t_j - 1)^2 d/dt_j (q_i, p_i, x_i) against the Hamiltonian
    field of K_j.
    """
    pol = resolve_policy(policy)

    def residuals(st):
        nn = st.n
        gs = from_schlesinger(st)
        yield "eps1", gs.eps_of(1) - st.theta_of(nn + 1)
        yield "eps2", gs.eps_of(2) - st.theta_of(nn + 2)
        yield "eps3", gs.eps_of(3) - st.theta_of(nn + 3) - 1
        for j in range(1, nn + 1):
            yield f"eps{j + 3}", gs.eps_of(j + 3) - st.theta_of(j)
        yield "rho", gs.rho - st.rho
        for i in range(1, nn + 1):
            yield f"x{i}", gs.x_of(i) * (st.t_of(i) - 1) - st.t_of(i)
            yield f"q{i}", gs.q_of(i) * st.b_inf() - st.t_of(i) * st.b_of(i)
        sh = apply_T_mu(st, _cross_mu(nn))
        for i in range(1, nn + 1):
            xi = gs.x_of(i)
            yield f"ham{i}", (
                -((xi - 1) ** 2) * hamiltonian_Hbar(gs, i)
                - hamiltonian_H(sh, i)
            )
        for j in range(1, nn + 1):
            gl = from_schlesinger(sch_lift(st, j))
            scale = -((st.t_of(j) - 1) ** 2)
            dq, dp = garnier_flow(gs, j)
            for i in range(1, nn + 1):
                yield f"dq{i}.dx{j}", scale * _dot(gl.q_of(i)) - dq[i - 1]
                yield f"dp{i}.dx{j}", scale * _dot(gl.p_of(i)) - dp[i - 1]
                yield f"dx{i}.dx{j}", scale * _dot(gl.x_of(i)) - (
                    1 if i == j else 0
                )

    return certify_identity("garnier.sch_to_gar", residuals, _sch_factory(n),
                            cfg, policy=pol, params={"n": n},
                            degree_hint=400)


def check_bridge_maps(cfg: SampleConfig, n: int = 2,
                      policy: Optional[dict] = None) -> CheckReport:
    """Matrix-side symmetry words reduce to the reflections.

    Position swaps sigma_j (j <= n-1) reduce to the relabelings s_{j+3};
    sigma_{n+1} (the 0 <-> 1 Moebius) reduces to s_1; the sign change r_n
    reduces to s_{n+3}; the 1 <-> infinity Moebius followed by the
    (n+2 up, n+3 down) shift reduces to s_2; and the 0 <-> 1 Moebius
    followed by both sign changes and the (n+1 up, n+2 up) shift reduces
    to s_0.
    """
    pol = resolve_policy(policy)

    def w_s0(s):
        nn = s.n
        mu = [0] * (nn + 3)
        mu[nn] = 1
        mu[nn + 1] = 1
        img = sigma_apply(s, nn + 1)
        img = sign_change_apply(img, nn + 1)
        img = sign_change_apply(img, nn + 2)
        return apply_T_mu(img, tuple(mu))

    def w_s2(s):
        nn = s.n
        mu = [0] * (nn + 3)
        mu[nn + 1] = 1
        mu[nn + 2] = -1
        return apply_T_mu(sigma_apply(s, nn + 2), tuple(mu))

    def residuals(st):
        nn = st.n
        gs = from_schlesinger(st)
        pairs = []
        for j in range(1, nn):
            pairs.append((
                f"sigma{j}|s{j + 3}",
                lambda s, j=j: sigma_apply(s, j),
                lambda g, j=j: weyl_apply(g, j + 3, pol),
            ))
        pairs.append((
            f"sigma{nn + 1}|s1",
            lambda s: sigma_apply(s, nn + 1),
            lambda g: weyl_apply(g, 1, pol),
        ))
        pairs.append((
            f"r{nn}|s{nn + 3}",
            lambda s: sign_change_apply(s, nn),
            lambda g: weyl_apply(g, nn + 3, pol),
        ))
        pairs.append(("shifted-moebius|s2", w_s2,
                      lambda g: weyl_apply(g, 2, pol)))
        pairs.append(("shifted-moebius|s0", w_s0,
                      lambda g: weyl_apply(g, 0, pol)))
        for tag, W, w in pairs:
            left = from_schlesinger(W(st))
            right = w(gs)
            yield from _diff(tag, battery_garnier(left),
                             battery_garnier(right))

    return certify_identity("garnier.bridge_maps", residuals, _sch_factory(n),
                            cfg, policy=pol, params={"n": n},
                            degree_hint=600)
