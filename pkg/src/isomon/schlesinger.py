"""Rank-2 isomonodromy states, their flows, and Hamiltonians.

A state bundles n+2 finite pole positions t_j (slots n+1 and n+2 pinned to
0 and 1), rank-one residue matrices

    A_j = [[a_j, b_j], [c_j, d_j]],   det A_j = 0,   tr A_j = theta_j,

frame scalings (g_j, h_j) for the eigenvector matrices

    G_j = [[-d_j, b_j], [c_j, d_j]] . diag(g_j, h_j),

and an exponent theta_{n+3} attached to the pole at infinity through the
normalization

    -(A_1 + ... + A_{n+2}) = diag(rho, rho + theta_{n+3}),
    rho = -(theta_1 + ... + theta_{n+3}) / 2.

The columns of G_j are eigenvectors of A_j for the eigenvalues 0 and
theta_j, so G_j^{-1} A_j G_j = theta_j E_2.

Indexing follows the pole labels: everything indexed by j runs 1..n+2
(or 1..n+3 for exponents), and the accessors t_of / A_of / theta_of take
those 1-based labels.  Deformation directions i run 1..n.

The deformation flow in the direction t_i is

    dA_j/dt_i = [A_i, A_j] / (t_i - t_j)            (j != i),
    dA_i/dt_i = sum_{l != i} [A_l, A_i] / (t_i - t_l),
    dG_j/dt_i = A_i G_j / (t_i - t_j)               (j != i),
    dG_i/dt_i = sum_{l != i} A_l G_i / (t_i - t_l),

the compatibility condition for the linear system with d/dz residues
A_j/(z - t_j) and d/dt_i residue -A_i/(z - t_i).  The G-flow preserves the
product form of G_j, which is how the scalar flow of (g_j, h_j) is
extracted in flow_rhs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .exact import (
    CheckReport,
    DegenerateStateError,
    Dual,
    RationalSampler,
    SampleConfig,
    certify_identity,
    is_integer,
    rat,
)
from .mat2 import E2, Mat2, commutator, diag, tr_prod

__all__ = [
    "SchlesingerState",
    "sample_state",
    "flow_rhs",
    "lift",
    "flow_derivative",
    "constant_C",
    "hamiltonian_H",
    "hamiltonian_tilde",
    "hamiltonian_hat",
    "hamiltonian_hat_star",
    "R_hat",
    "state_to_dict",
    "state_from_dict",
    "check_flatness",
]


@dataclass(frozen=True)
class SchlesingerState:
    """Immutable container for one point of the deformation space.

    t holds the n+2 finite poles (t[n] == 0 and t[n+1] == 1 for exact
    states; lifted states carry Dual entries whose values satisfy this),
    theta holds all n+3 exponents, A the n+2 residue matrices and gh the
    n+2 frame scalings.  Entries may be Fraction, float or Dual; the
    arithmetic never mixes representations on its own.
    """

    n: int
    t: tuple
    theta: tuple
    A: tuple
    gh: tuple

    # -- 1-based accessors ------------------------------------------------

    def t_of(self, j):
        if not 1 <= j <= self.n + 2:
            raise IndexError(f"pole label out of range: {j}")
        return self.t[j - 1]

    def theta_of(self, j):
        if not 1 <= j <= self.n + 3:
            raise IndexError(f"exponent label out of range: {j}")
        return self.theta[j - 1]

    def A_of(self, j) -> Mat2:
        if not 1 <= j <= self.n + 2:
            raise IndexError(f"pole label out of range: {j}")
        return self.A[j - 1]

    def a_of(self, j):
        return self.A_of(j).x11

    def b_of(self, j):
        return self.A_of(j).x12

    def c_of(self, j):
        return self.A_of(j).x21

    def d_of(self, j):
        return self.A_of(j).x22

    def g_of(self, j):
        if not 1 <= j <= self.n + 2:
            raise IndexError(f"pole label out of range: {j}")
        return self.gh[j - 1][0]

    def h_of(self, j):
        if not 1 <= j <= self.n + 2:
            raise IndexError(f"pole label out of range: {j}")
        return self.gh[j - 1][1]

    def G_of(self, j) -> Mat2:
        A = self.A_of(j)
        g, h = self.gh[j - 1]
        return Mat2(-A.x22 * g, A.x12 * h, A.x21 * g, A.x22 * h)

    # -- derived scalars ---------------------------------------------------

    @property
    def rho(self):
        s = self.theta[0]
        for th in self.theta[1:]:
            s = s + th
        return -s / 2

    def b_inf(self):
        return sum(self.t_of(j) * self.b_of(j) for j in range(1, self.n + 3))

    def c_inf(self):
        return sum(self.t_of(j) * self.c_of(j) for j in range(1, self.n + 3))

    # -- reconstruction ----------------------------------------------------

    def replace(self, t=None, theta=None, A=None, gh=None) -> "SchlesingerState":
        return SchlesingerState(
            n=self.n,
            t=tuple(t) if t is not None else self.t,
            theta=tuple(theta) if theta is not None else self.theta,
            A=tuple(A) if A is not None else self.A,
            gh=tuple(tuple(p) for p in gh) if gh is not None else self.gh,
        )

    def map_entries(self, f: Callable) -> "SchlesingerState":
        """Apply f to every scalar of the state (t, theta, A-entries, g, h)."""
        return SchlesingerState(
            n=self.n,
            t=tuple(f(x) for x in self.t),
            theta=tuple(f(x) for x in self.theta),
            A=tuple(M.map(f) for M in self.A),
            gh=tuple((f(g), f(h)) for g, h in self.gh),
        )

    def validate(self):
        """Check the defining constraints exactly; raise DegenerateStateError.

        Only meaningful for exact (Fraction) states.
        """
        n = self.n
        if self.t[n] != 0 or self.t[n + 1] != 1:
            raise DegenerateStateError("pinned poles moved off 0, 1")
        seen = set(self.t)
        if len(seen) != n + 2:
            raise DegenerateStateError("pole collision")
        for j in range(1, n + 3):
            A = self.A_of(j)
            if A.det() != 0:
                raise DegenerateStateError(f"det A_{j} != 0")
            if A.trace() != self.theta_of(j):
                raise DegenerateStateError(f"tr A_{j} != theta_{j}")
            if is_integer(self.theta_of(j)):
                raise DegenerateStateError(f"theta_{j} is an integer")
            if A.x12 == 0 or A.x11 == 0 or A.x22 == 0 or A.x21 == 0:
                raise DegenerateStateError(f"A_{j} entry vanishes")
            if self.g_of(j) == 0 or self.h_of(j) == 0:
                raise DegenerateStateError(f"frame scaling of G_{j} vanishes")
        if is_integer(self.theta_of(n + 3)):
            raise DegenerateStateError("theta at infinity is an integer")
        total = self.A[0]
        for M in self.A[1:]:
            total = total + M
        target = diag(self.rho, self.rho + self.theta_of(n + 3))
        if (-total) != target:
            raise DegenerateStateError("residue sum is not diagonal-normalized")
        if self.b_inf() == 0:
            raise DegenerateStateError("b_inf vanishes")
        if self.c_inf() == 0:
            raise DegenerateStateError("c_inf vanishes")


def sample_state(cfg: SampleConfig, stream: int, n: int) -> SchlesingerState:
    """Draw a random exact state satisfying every constraint in validate().

    Free data: t_1..t_n, the pairs (a_j, b_j) for j <= n+1, a_{n+2},
    exponents theta_1..theta_{n+1} and frames (g_j, h_j).  The remaining
    entries are solved from the residue-sum normalization and det A_j = 0:

        b_{n+2}   = -(b_1 + ... + b_{n+1}),
        theta_{n+2} with c_{n+2} = -(c_1 + ... + c_{n+1}),
        theta_{n+3} = 2(a_1+...+a_{n+2}) - (theta_1+...+theta_{n+2}).
    """
    if n < 1:
        raise ValueError("need at least one deformation parameter")
    rng = RationalSampler(cfg, stream)
    for _ in range(cfg.max_resamples + 1):
        ts: list = []
        for _i in range(n):
            ts.append(rng.draw(exclude=set(ts) | {Fraction(0), Fraction(1)}))
        ts += [Fraction(0), Fraction(1)]

        thetas = [rng.draw(noninteger=True) for _ in range(n + 1)]
        a = [rng.draw(nonzero=True) for _ in range(n + 2)]
        b = [rng.draw(nonzero=True) for _ in range(n + 1)]
        g = [rng.draw(nonzero=True) for _ in range(n + 2)]
        h = [rng.draw(nonzero=True) for _ in range(n + 2)]

        b_last = -sum(b)
        if b_last == 0:
            continue
        b.append(b_last)

        # d_j = theta_j - a_j and c_j = a_j d_j / b_j for the free slots.
        d = [thetas[j] - a[j] for j in range(n + 1)]
        if any(x == 0 for x in d):
            continue
        c = [a[j] * d[j] / b[j] for j in range(n + 1)]
        c_last = -sum(c)
        if c_last == 0:
            continue
        # det A_{n+2} = 0 forces d_{n+2} = b_{n+2} c_{n+2} / a_{n+2}.
        d_last = b_last * c_last / a[n + 1]
        if d_last == 0:
            continue
        theta_last = a[n + 1] + d_last
        if is_integer(theta_last):
            continue
        thetas.append(theta_last)
        d.append(d_last)
        c.append(c_last)

        theta_inf = 2 * sum(a) - sum(thetas)
        if is_integer(theta_inf):
            thetas.pop()
            continue
        thetas.append(theta_inf)

        state = SchlesingerState(
            n=n,
            t=tuple(ts),
            theta=tuple(thetas),
            A=tuple(Mat2(a[j], b[j], c[j], d[j]) for j in range(n + 2)),
            gh=tuple((g[j], h[j]) for j in range(n + 2)),
        )
        try:
            state.validate()
        except DegenerateStateError:
            continue
        return state
    raise DegenerateStateError("sampler failed to reach a generic state")


def flow_rhs(state: SchlesingerState, i: int):
    """Right-hand side of the deformation flow in the direction t_i.

    Returns (dA, dgh): dA is a list of n+2 matrices dA_j/dt_i, dgh a list
    of pairs (dg_j/dt_i, dh_j/dt_i).  The scalar flow is read off the
    matrix flow of G_j through the product form; rows 1 and 2 give the
    same answer because the flow preserves the eigenvector property.
    """
    n = state.n
    if not 1 <= i <= n:
        raise IndexError(f"flow direction out of range: {i}")
    Ai = state.A_of(i)
    ti = state.t_of(i)
    dA = []
    dG = []
    for j in range(1, n + 3):
        Aj = state.A_of(j)
        Gj = state.G_of(j)
        if j != i:
            w = ti - state.t_of(j)
            dA.append(commutator(Ai, Aj) / w)
            dG.append((Ai @ Gj) / w)
        else:
            accA = None
            accG = None
            for l in range(1, n + 3):
                if l == i:
                    continue
                w = ti - state.t_of(l)
                Al = state.A_of(l)
                termA = commutator(Al, Ai) / w
                termG = (Al @ Gj) / w
                accA = termA if accA is None else accA + termA
                accG = termG if accG is None else accG + termG
            dA.append(accA)
            dG.append(accG)
    dgh = []
    for j in range(1, n + 3):
        F = dG[j - 1]
        M = dA[j - 1]
        g, h = state.gh[j - 1]
        cj = state.c_of(j)
        dj = state.d_of(j)
        dg = (F.x21 - M.x21 * g) / cj
        dh = (F.x22 - M.x22 * h) / dj
        dgh.append((dg, dh))
    return dA, dgh


def lift(state: SchlesingerState, i: int) -> SchlesingerState:
    """Replace every scalar x by Dual(x, dx/dt_i) along the flow.

    Rational observables evaluated on the lifted state return Duals whose
    dot part is the total flow derivative.  Lifts nest: lifting an already
    lifted state produces second derivatives in the dot-of-dot component.
    """
    n = state.n
    dA, dgh = flow_rhs(state, i)
    zero = state.t_of(1) * 0

    def dt(j):
        return zero + 1 if j == i else zero

    t = tuple(Dual(state.t[j - 1], dt(j)) for j in range(1, n + 3))
    theta = tuple(Dual(th, zero) for th in state.theta)
    A = tuple(
        Mat2(
            Dual(M.x11, D.x11),
            Dual(M.x12, D.x12),
            Dual(M.x21, D.x21),
            Dual(M.x22, D.x22),
        )
        for M, D in zip(state.A, dA)
    )
    gh = tuple(
        (Dual(g, dg), Dual(h, dh))
        for (g, h), (dg, dh) in zip(state.gh, dgh)
    )
    return SchlesingerState(n=n, t=t, theta=theta, A=A, gh=gh)


def flow_derivative(f: Callable[[SchlesingerState], object], state: SchlesingerState, i: int):
    """Total derivative d/dt_i of the scalar observable f along the flow."""
    out = f(lift(state, i))
    if isinstance(out, Dual):
        return out.dot
    return out * 0


def constant_C(theta: Sequence, n: int, i: int, j: int):
    """Normalization constant attached to the pair of poles (i, j).

    theta is the full 1-based-minus-one list of n+3 exponents; the value
    is symmetric in (i, j).
    """
    ti = theta[i - 1]
    tj = theta[j - 1]
    s2 = sum(x * x for x in theta)
    return (
        -ti * tj / 2
        + (ti * ti + tj * tj) / (2 * (n + 1))
        - s2 / (2 * (n + 1) * (n + 2))
    )


def hamiltonian_H(state: SchlesingerState, i: int):
    """Deformation Hamiltonian H_i with pair constants included."""
    n = state.n
    acc = None
    for j in range(1, n + 3):
        if j == i:
            continue
        term = (
            tr_prod(state.A_of(i), state.A_of(j))
            + constant_C(state.theta, n, i, j)
        ) / (state.t_of(i) - state.t_of(j))
        acc = term if acc is None else acc + term
    return acc


def hamiltonian_tilde(state: SchlesingerState, i: int):
    """Bare trace Hamiltonian: H_i without the pair constants."""
    n = state.n
    acc = None
    for j in range(1, n + 3):
        if j == i:
            continue
        term = tr_prod(state.A_of(i), state.A_of(j)) / (
            state.t_of(i) - state.t_of(j)
        )
        acc = term if acc is None else acc + term
    return acc


def hamiltonian_hat(state: SchlesingerState, i: int):
    """Polynomial-gauge Hamiltonian t_i(t_i-1) sum (trA_iA_j - theta_i theta_j/2)/(t_i-t_j)."""
    n = state.n
    ti = state.t_of(i)
    acc = None
    for j in range(1, n + 3):
        if j == i:
            continue
        term = (
            ti
            * (ti - 1)
            / (ti - state.t_of(j))
            * (
                tr_prod(state.A_of(i), state.A_of(j))
                - state.theta_of(i) * state.theta_of(j) / 2
            )
        )
        acc = term if acc is None else acc + term
    return acc


def R_hat(state: SchlesingerState) -> Mat2:
    """Rank-one interpolation matrix built on the pole pair (n+1, n+2)."""
    n = state.n
    b1, d1 = state.b_of(n + 1), state.d_of(n + 1)
    b2, d2 = state.b_of(n + 2), state.d_of(n + 2)
    den = b1 * d2 - d1 * b2
    if den == 0:
        raise DegenerateStateError("rank-one pair matrix degenerates")
    # t_{n+1} - t_{n+2} = -1
    s = -1 / den
    return Mat2(b1 * -d2, b1 * b2, d1 * -d2, d1 * b2) * s


def hamiltonian_hat_star(state: SchlesingerState, i: int):
    """Shifted partner of hamiltonian_hat under the (n+1, n+2) up-up shift."""
    return (
        hamiltonian_hat(state, i)
        - tr_prod(state.A_of(i), R_hat(state))
        + state.theta_of(i) / 2
    )


# -- JSON fixtures ---------------------------------------------------------


def _scalar_str(x) -> str:
    return str(rat(x))


def state_to_dict(state: SchlesingerState) -> dict:
    return {
        "n": state.n,
        "t": [_scalar_str(x) for x in state.t],
        "theta": [_scalar_str(x) for x in state.theta],
        "rho": _scalar_str(state.rho),
        "A": [
            {
                "a": _scalar_str(M.x11),
                "b": _scalar_str(M.x12),
                "c": _scalar_str(M.x21),
                "d": _scalar_str(M.x22),
            }
            for M in state.A
        ],
        "G": [
            {"g": _scalar_str(g), "h": _scalar_str(h)} for g, h in state.gh
        ],
    }


def state_from_dict(data: dict) -> SchlesingerState:
    n = int(data["n"])
    t = tuple(Fraction(x) for x in data["t"])
    theta = tuple(Fraction(x) for x in data["theta"])
    A = tuple(
        Mat2(Fraction(e["a"]), Fraction(e["b"]), Fraction(e["c"]), Fraction(e["d"]))
        for e in data["A"]
    )
    gh = tuple((Fraction(e["g"]), Fraction(e["h"])) for e in data["G"])
    state = SchlesingerState(n=n, t=t, theta=theta, A=A, gh=gh)
    if "rho" in data and Fraction(data["rho"]) != state.rho:
        raise DegenerateStateError("stored rho disagrees with exponents")
    return state


# -- check suites ------------------------------------------------------------


def check_flatness(cfg: SampleConfig, n: int = 2) -> CheckReport:
    """The deformation directions commute on every state scalar.

    For each pair i < k the nested lifts are compared entrywise:
    lift(lift(s, i), k) carries d/dt_k d/dt_i in the dot-of-dot slot, the
    reversed nesting carries d/dt_i d/dt_k, and their difference is the
    commutator of the two flow fields applied to that coordinate.
    """
    if n < 2:
        raise ValueError("flatness needs at least two deformation directions")

    def scalars(state):
        for j in range(1, state.n + 3):
            M = state.A_of(j)
            yield f"a{j}", M.x11
            yield f"b{j}", M.x12
            yield f"c{j}", M.x21
            yield f"d{j}", M.x22
            yield f"g{j}", state.g_of(j)
            yield f"h{j}", state.h_of(j)
        for m in range(1, state.n + 3):
            yield f"t{m}", state.t_of(m)

    def residuals(st):
        nn = st.n
        for i in range(1, nn + 1):
            base_i = lift(st, i)
            for k in range(i + 1, nn + 1):
                left = lift(base_i, k)
                right = lift(lift(st, k), i)
                rv = dict(scalars(right))
                for key, lval in scalars(left):
                    yield f"curv{i}{k}:{key}", lval.dot.dot - rv[key].dot.dot

    def factory(cfg_, stream):
        return sample_state(cfg_, stream, n)

    return certify_identity("schlesinger.flatness", residuals, factory, cfg,
                            params={"n": n}, degree_hint=60)
