"""Bilinear relations of the shifted tau-function family.

Four groups of statements about tau-function products are certified here:

* Closedness: the shifted Hamiltonian 1-forms that define every tau
  function have symmetric mixed flow derivatives, so the dlogs below are
  well defined in the first place.
* Toda equations: the elementary double shift T_k T_k^{-1} applied to
  tau_0, measured either through frame quotients of the G-matrices or
  through a quadratic Hirota form in second logarithmic derivatives.
* Hirota-Miwa equations: four-term quadratic relations among tau functions
  shifted along distinct lattice directions, certified through 1-jets of
  their logarithms on every admissible role assignment of the slots.
* Bilinear differential equations: the coupled system tying tau_0 to the
  partner shifted one step up in both unit-frame slots, built from the
  polynomial Hamiltonians and the rank-one pair matrix R, then re-expressed
  as a Hirota form with affine tail.

The tau quotients also recover the canonical coordinates of the reduced
Hamiltonian system; check_tau_to_gar certifies that dictionary with its
pole-weighted correction sums.

A shifted Hamiltonian enters most statements twice: as a closed dlog form
(transforms.shift_H) and as the plain Hamiltonian of an explicitly
transformed state (apply_T_mu composed with hamiltonian_*).  The checks
cross the two routes, so a normalization slip in either route surfaces as
a nonzero residual instead of cancelling silently.  Tau functions are only
defined up to multiplicative constants, so product identities are checked
at the level of logarithmic derivatives; the constants are the one thing
point checks cannot see.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .exact import (
    CheckReport,
    DegenerateStateError,
    ExhaustedError,
    SampleConfig,
    ShapeError,
    certify_identity,
    solve_linear,
)
from .garnier import from_schlesinger
from .mat2 import I2, commutator, tr_prod
from .schlesinger import (
    R_hat,
    SchlesingerState,
    constant_C,
    flow_derivative,
    hamiltonian_H,
    hamiltonian_hat,
    hamiltonian_hat_star,
    hamiltonian_tilde,
    lift,
    sample_state,
)
from .transforms import (
    apply_T_mu,
    gamma_pair,
    gamma_single,
    resolve_policy,
    shift_H,
    sign_change_apply,
)

__all__ = [
    "DerivationOp",
    "HirotaForm",
    "elementary_mu",
    "mu_pair_label",
    "toda_quotient_scalar",
    "hm_role_instances",
    "check_closedness",
    "check_G22_identities",
    "check_toda_logform",
    "check_lemma_toda",
    "check_toda_bilinear_consts",
    "check_hirota_miwa",
    "check_rhat_flow",
    "check_hat_star",
    "check_der_ham",
    "check_bil_lhs",
    "check_bil_rhs",
    "check_bil",
    "check_bil_tau_form",
    "check_bilinear_diff",
    "check_tau_to_gar",
]


def _state_factory(n: int):
    return lambda cfg, stream: sample_state(cfg, stream, n)


def _unit_mu(n: int, *signed: tuple) -> tuple:
    mu = [0] * (n + 3)
    for sign, slot in signed:
        mu[slot - 1] += sign
    return tuple(mu)


def _neg(mu) -> tuple:
    return tuple(-m for m in mu)


def elementary_mu(n: int, k: int) -> tuple:
    """Lattice direction of the k-th elementary shift, k = 1..n+3."""
    if 1 <= k <= n + 1:
        return _unit_mu(n, (1, k), (-1, k + 1))
    if k == n + 2:
        return _unit_mu(n, (1, n + 2), (-1, n + 3))
    if k == n + 3:
        return _unit_mu(n, (1, n + 2), (1, n + 3))
    raise ValueError(f"elementary shift index out of range: {k}")


def mu_pair_label(n: int, a: int, b: int) -> tuple:
    """Lattice direction of the pair-subscript label (a, b).

    a and b are signed 1-based slots; each contributes its unit vector
    with its written sign, for every slot including n+3.
    """
    sa, ka = (1, a) if a > 0 else (-1, -a)
    sb, kb = (1, b) if b > 0 else (-1, -b)
    return _unit_mu(n, (sa, ka), (sb, kb))


# -- Hirota symbols and tagged derivations -----------------------------------


@dataclass(frozen=True)
class DerivationOp:
    """Tagged derivation in the deformation directions.

    Kinds: "partial" is d/dt_i, "delta" is t_i(t_i-1) d/dt_i, "euler" sums
    all the deltas, "euler_star" is sum (t_j-1) d/dt_j, "tshift" is
    sum t_j d/dt_j.  The jet tags "hirota" and "hirota_star" never act on
    anything; they label the Hirota-symbol slots of the polynomial
    Hamiltonian pair in the bilinear differential system.
    """

    kind: str
    index: int = 0

    @property
    def label(self) -> str:
        prefix = {"partial": "d", "delta": "delta",
                  "hirota": "D", "hirota_star": "Dstar"}
        if self.kind in prefix:
            return f"{prefix[self.kind]}{self.index}"
        if self.kind in ("euler", "euler_star", "tshift"):
            return self.kind
        raise ValueError(f"unknown derivation kind: {self.kind}")

    def weight(self, st: SchlesingerState, j: int):
        """Coefficient of d/dt_j at the state."""
        if self.kind == "partial":
            return Fraction(1 if j == self.index else 0)
        if self.kind == "delta":
            if j != self.index:
                return Fraction(0)
            return st.t_of(j) * (st.t_of(j) - 1)
        if self.kind == "euler":
            return st.t_of(j) * (st.t_of(j) - 1)
        if self.kind == "euler_star":
            return st.t_of(j) - 1
        if self.kind == "tshift":
            return st.t_of(j)
        raise ValueError(f"jet tag {self.kind} carries no derivation weights")

    def apply(self, f, st: SchlesingerState):
        """Weighted total flow derivative of a state scalar."""
        acc = None
        for j in range(1, st.n + 1):
            w = self.weight(st, j)
            if w == 0:
                continue
            term = w * flow_derivative(f, st, j)
            acc = term if acc is None else acc + term
        return Fraction(0) if acc is None else acc


class HirotaForm:
    """Polynomial of total degree <= 2 in tagged Hirota symbols.

    coeffs maps a tuple of symbol labels -- (), (a,), or (a, b) -- to a
    scalar coefficient; pair keys are stored sorted and merged.  The
    coefficients may depend on the evaluation point (composite directions
    freeze their weights there); only the symbols are constant.
    """

    def __init__(self, coeffs: dict):
        norm: dict = {}
        for idx, c in coeffs.items():
            key = tuple(idx)
            if len(key) > 2:
                raise ShapeError("Hirota symbol of order > 2")
            if len(key) == 2:
                key = tuple(sorted(key))
            if key in norm:
                norm[key] = norm[key] + c
            else:
                norm[key] = c
        self.coeffs = {k: c for k, c in norm.items() if c != 0}

    def reduce(self, u: dict, v: dict):
        """P(D) phi.psi / (phi psi) from logarithmic jets.

        u and v map (a,) to the first jet of log phi resp. log psi along
        symbol a, and a sorted pair (a, b) to the second jet.  Monomials
        reduce by

          1        -> 1
          D_a      -> u_a - v_a
          D_a D_b  -> (u_ab + v_ab) + (u_a - v_a)(u_b - v_b)

        so D_a phi.phi vanishes and D_a D_b tau.tau is twice the second
        logarithmic derivative.
        """
        acc = None
        for idx, c in self.coeffs.items():
            if len(idx) == 0:
                term = c
            elif len(idx) == 1:
                term = c * (u[idx] - v[idx])
            else:
                a, b = idx
                term = c * (u[idx] + v[idx]
                            + (u[(a,)] - v[(a,)]) * (u[(b,)] - v[(b,)]))
            acc = term if acc is None else acc + term
        return Fraction(0) if acc is None else acc

    def expand(self, phi: dict, psi: dict):
        """P(D) phi.psi from raw value jets, not normalized.

        phi and psi map () to the value, (a,) to first and sorted (a, b)
        to second derivatives.  This is the defining alternating-sign
        expansion; reduce agrees with it after division by phi psi
        whenever both jet sets describe the same pair of functions.
        """
        acc = None
        for idx, c in self.coeffs.items():
            if len(idx) == 0:
                term = c * phi[()] * psi[()]
            elif len(idx) == 1:
                term = c * (phi[idx] * psi[()] - phi[()] * psi[idx])
            else:
                a, b = idx
                term = c * (phi[idx] * psi[()]
                            - phi[(a,)] * psi[(b,)]
                            - phi[(b,)] * psi[(a,)]
                            + phi[()] * psi[idx])
            acc = term if acc is None else acc + term
        return Fraction(0) if acc is None else acc


# -- dlogs of explicit prefactors -------------------------------------------


def _dlog_vandermonde(st: SchlesingerState, i: int, expo):
    """expo * d/dt_i log prod_{a != b <= n+2} (t_a - t_b)."""
    acc = Fraction(0)
    for b in range(1, st.n + 3):
        if b != i:
            acc += 1 / (st.t_of(i) - st.t_of(b))
    return 2 * expo * acc


def _sum_C(theta, n: int):
    acc = Fraction(0)
    for i in range(1, n + 3):
        for j in range(1, n + 3):
            if j != i:
                acc += constant_C(theta, n, i, j)
    return acc


# -- closedness of the shifted Hamiltonian forms ------------------------------


def check_closedness(cfg: SampleConfig, n: int = 2,
                     policy: dict | None = None,
                     mus: list | None = None) -> CheckReport:
    """Mixed flow derivatives of the shifted Hamiltonians are symmetric.

    For each direction mu the scalar H_i evaluated on the explicitly
    shifted state is differentiated along direction j of the base flow
    and compared with the transposed pair; the default direction list is
    the zero shift plus every elementary generator.  The pair constants
    C_ij never enter the bare Hamiltonians, so this check cannot see
    them; the Toda suite is what pins the constants.
    """
    if n < 2:
        raise ValueError("closedness needs at least two deformation directions")
    pol = resolve_policy(policy)
    if mus is None:
        mus = [tuple([0] * (n + 3))]
        mus += [elementary_mu(n, k) for k in range(1, n + 4)]

    def residuals(st):
        for mu in mus:
            tag = "".join(str(m) for m in mu)

            def ham(s, i, mu=mu):
                return hamiltonian_H(apply_T_mu(s, mu), i)

            for i in range(1, n + 1):
                for j in range(i + 1, n + 1):
                    left = flow_derivative(lambda s: ham(s, i), st, j)
                    right = flow_derivative(lambda s: ham(s, j), st, i)
                    yield (f"mu{tag}.i{i}.j{j}", left - right)

    return certify_identity("bilinear.closedness", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n, "directions": len(mus)},
                            degree_hint=200)


# -- Toda equations ----------------------------------------------------------


def toda_quotient_scalar(state: SchlesingerState, k: int):
    """Frame quotient whose t_i-dlog is the k-th double-shift defect.

    For k <= n+1 it is the product of the (2,2) entries of the two adjacent
    frame ratios divided by (t_k - t_{k+1})^2; the last two slots read the
    (2,2) and (1,2)/(2,1) entries of G_{n+2} against its inverse.
    """
    n = state.n
    if 1 <= k <= n + 1:
        Ga = state.G_of(k)
        Gb = state.G_of(k + 1)
        num = (Gb.inv() @ Ga).x22 * (Ga.inv() @ Gb).x22
        return num / (state.t_of(k) - state.t_of(k + 1)) ** 2
    G = state.G_of(n + 2)
    if k == n + 2:
        return G.x22 * G.inv().x22
    if k == n + 3:
        return G.x12 * G.inv().x21
    raise ValueError(f"quotient slot out of range: {k}")


def _toda_trace_form(st: SchlesingerState, k: int):
    """Trace value the k-th quotient scalar must reproduce."""
    n = st.n
    if 1 <= k <= n + 1:
        return (tr_prod(st.A_of(k), st.A_of(k + 1))
                / (st.theta_of(k) * st.theta_of(k + 1))
                / (st.t_of(k) - st.t_of(k + 1)) ** 2)
    if k == n + 2:
        return st.d_of(n + 2) / st.theta_of(n + 2)
    return st.a_of(n + 2) / st.theta_of(n + 2)


def check_G22_identities(cfg: SampleConfig, n: int = 2,
                         policy: dict | None = None) -> CheckReport:
    """Frame quotients reduce to trace data of the residue matrices."""
    pol = resolve_policy(policy)

    def residuals(st):
        for j in range(1, n + 3):
            G = st.G_of(j)
            yield (f"detG.{j}", G.det()
                   + st.g_of(j) * st.h_of(j) * st.d_of(j) * st.theta_of(j))
        for k in range(1, n + 2):
            Ga, Gb = st.G_of(k), st.G_of(k + 1)
            lhs = (Gb.inv() @ Ga).x22 * (Ga.inv() @ Gb).x22
            rhs = tr_prod(st.A_of(k), st.A_of(k + 1)) / (
                st.theta_of(k) * st.theta_of(k + 1))
            yield (f"pair22.{k}", lhs - rhs)
        G = st.G_of(n + 2)
        yield ("slot22",
               G.x22 * G.inv().x22 - st.d_of(n + 2) / st.theta_of(n + 2))
        yield ("slot12",
               G.x12 * G.inv().x21 - st.a_of(n + 2) / st.theta_of(n + 2))

    return certify_identity("bilinear.g22", residuals, _state_factory(n),
                            cfg, policy=pol, params={"n": n}, degree_hint=40)


def check_toda_logform(cfg: SampleConfig, n: int = 2, k: int | None = None,
                       policy: dict | None = None) -> CheckReport:
    """Double elementary shift of the bare Hamiltonian vs frame quotients.

    T_k(H~_i) + T_k^{-1}(H~_i) - 2 H~_i is computed on explicitly shifted
    states and compared with the t_i-dlog of toda_quotient_scalar; no
    closed shift formulas are involved, so this pins the shift matrices
    themselves.  Each quotient is also crossed against its trace form, so
    the right side of the quotient statement is certified in the same run.
    """
    pol = resolve_policy(policy)
    ks = range(1, n + 4) if k is None else (k,)

    def residuals(st):
        for kk in ks:
            mu = elementary_mu(n, kk)
            up = apply_T_mu(st, mu)
            dn = apply_T_mu(st, _neg(mu))

            def quot(s, kk=kk):
                return toda_quotient_scalar(s, kk)

            base = quot(st)
            if base == 0:
                raise DegenerateStateError("frame quotient vanishes")
            yield (f"trace_link.k{kk}", base - _toda_trace_form(st, kk))
            for i in range(1, n + 1):
                lhs = (hamiltonian_tilde(up, i) + hamiltonian_tilde(dn, i)
                       - 2 * hamiltonian_tilde(st, i))
                yield (f"k{kk}.i{i}", lhs - flow_derivative(quot, st, i) / base)

    return certify_identity("bilinear.toda_logform", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n, "k": "all" if k is None else k},
                            degree_hint=300)


def check_lemma_toda(cfg: SampleConfig, n: int = 2,
                     policy: dict | None = None) -> CheckReport:
    """Derivatives of weighted bare-Hamiltonian sums along the flow.

    The flow family covers the adjacent-direction derivative, the boundary
    direction t_n, and the two Euler-type operators acting on the weighted
    Hamiltonian sums.  The proof family holds the partial-fraction
    resummations and pole-sum derivatives those four reduce to, so a
    failure localizes to the step that actually broke.
    """
    pol = resolve_policy(policy)

    def wsum(s, shifted):
        acc = None
        for i in range(1, s.n + 1):
            w = s.t_of(i) - 1 if shifted else s.t_of(i)
            term = w * hamiltonian_tilde(s, i)
            acc = term if acc is None else acc + term
        return acc

    def pole_sum(s):
        # sum_{j <= n+1} tr A_j A_{n+2} / (t_j - 1)
        acc = None
        for j in range(1, s.n + 2):
            term = tr_prod(s.A_of(j), s.A_of(s.n + 2)) / (s.t_of(j) - 1)
            acc = term if acc is None else acc + term
        return acc

    def residuals(st):
        th = st.theta
        for k in range(1, n):
            lhs = flow_derivative(
                lambda s, k=k: hamiltonian_tilde(s, k + 1), st, k)
            rhs = tr_prod(st.A_of(k), st.A_of(k + 1)) / (
                st.t_of(k) - st.t_of(k + 1)) ** 2
            yield (f"adjacent.{k}", lhs - rhs)

        lhs = flow_derivative(lambda s: wsum(s, True), st, n)
        yield ("boundary",
               lhs - tr_prod(st.A_of(n), st.A_of(n + 1)) / st.t_of(n) ** 2)

        half = _sum_C(th, n) / 2
        S = wsum(st, False)
        dstar = sum((st.t_of(i) - 1)
                    * flow_derivative(lambda s: wsum(s, False), st, i)
                    for i in range(1, n + 1))
        yield ("euler_star",
               dstar + S + tr_prod(st.A_of(n + 1), st.A_of(n + 2)) + half)
        delta = sum(st.t_of(i) * (st.t_of(i) - 1)
                    * flow_derivative(lambda s: wsum(s, False), st, i)
                    for i in range(1, n + 1))
        yield ("euler", delta + S - th[n + 2] * st.d_of(n + 2)
               - th[n + 1] * (st.rho + th[n + 1]) + half)

        # proof identities: the resummations behind the Euler relations
        sum_tr = sum(tr_prod(st.A_of(i), st.A_of(j))
                     for i in range(1, n + 3)
                     for j in range(1, n + 3) if j != i)
        lhs = sum((st.t_of(i) - 1) * hamiltonian_tilde(st, i)
                  for i in range(1, n + 1))
        rhs = -sum(tr_prod(st.A_of(j), st.A_of(n + 1)) / st.t_of(j)
                   for j in range(1, n + 3) if j != n + 1) + sum_tr / 2
        yield ("proof.resum_zero", lhs - rhs)

        yield ("proof.trace_constant", sum_tr + _sum_C(th, n))

        lhs = sum(st.t_of(i) * hamiltonian_tilde(st, i)
                  for i in range(1, n + 1))
        yield ("proof.resum_one", lhs - pole_sum(st) - sum_tr / 2)

        dstar = sum((st.t_of(i) - 1) * flow_derivative(pole_sum, st, i)
                    for i in range(1, n + 1))
        yield ("proof.euler_star_pole", dstar + pole_sum(st)
               + tr_prod(st.A_of(n + 1), st.A_of(n + 2)))
        delta = sum(st.t_of(i) * (st.t_of(i) - 1)
                    * flow_derivative(pole_sum, st, i)
                    for i in range(1, n + 1))
        yield ("proof.euler_pole", delta + pole_sum(st)
               - th[n + 2] * st.d_of(n + 2)
               - th[n + 1] * (st.rho + th[n + 1]))

    return certify_identity("bilinear.lemma_toda", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=200)


def _d2logtau(st: SchlesingerState, i: int, j: int):
    # d_i d_j log tau_0 = d_i H_j along the flow
    return flow_derivative(lambda s: hamiltonian_H(s, j), st, i)


def _dlog_jet(st: SchlesingerState, op: DerivationOp):
    """First logarithmic jet of tau_0 along a derivation: sum_j w_j H_j."""
    acc = None
    for j in range(1, st.n + 1):
        w = op.weight(st, j)
        if w == 0:
            continue
        term = w * hamiltonian_H(st, j)
        acc = term if acc is None else acc + term
    return Fraction(0) if acc is None else acc


def _quad_jet(st: SchlesingerState, opa: DerivationOp, opb: DerivationOp):
    """Frozen second logarithmic jet of tau_0 along a symbol pair.

    Composite directions contribute with their weights frozen at the
    state; the product-rule terms their variable coefficients would shed
    belong to the affine completion, not to the jet.
    """
    acc = None
    for i in range(1, st.n + 1):
        wa = opa.weight(st, i)
        if wa == 0:
            continue
        li = lift(st, i)
        for j in range(1, st.n + 1):
            wb = opb.weight(st, j)
            if wb == 0:
                continue
            hj = hamiltonian_H(li, j)
            dot = hj.dot if hasattr(hj, "dot") else Fraction(0)
            term = wa * wb * dot
            acc = term if acc is None else acc + term
    return Fraction(0) if acc is None else acc


def _toda_form(st: SchlesingerState, k: int, pol: dict):
    """Hirota data of the k-th double-shift bilinear expansion.

    Returns (form, ops, affine, const): the quadratic Hirota form over the
    symbol pair, the first-order affine completion shed by the variable
    coefficients of the composite directions, and the flat constant block.
    The parameter block of the last two directions carries the
    dangling-index policy.
    """
    n = st.n
    th = st.theta
    if k <= n - 1:
        ops = (DerivationOp("partial", k), DerivationOp("partial", k + 1))
        affine = ()
        const = (-2 * constant_C(th, n, k, k + 1)
                 / (st.t_of(k) - st.t_of(k + 1)) ** 2)
    elif k == n:
        ops = (DerivationOp("partial", n), DerivationOp("euler_star"))
        affine = ((2, ops[0]),)
        const = -2 * constant_C(th, n, n, n + 1) / st.t_of(n) ** 2
    elif k == n + 1:
        ops = (DerivationOp("euler_star"), DerivationOp("tshift"))
        affine = ((2, ops[0]), (2, ops[1]))
        const = 2 * constant_C(th, n, n + 1, n + 2)
    else:
        ops = (DerivationOp("euler"), DerivationOp("tshift"))
        affine = ((2, ops[0]), (2, ops[1]))
        if pol["toda_const_sum"] == "j":
            block = sum(constant_C(th, n, j, n + 2) for j in range(1, n + 2))
        else:
            block = (n + 1) * constant_C(th, n, n + 1, n + 2)
        head = -th[n + 1] * (st.rho + th[n + 1])
        if k == n + 3:
            head = -th[n + 1] * (st.rho + th[n + 1] + th[n + 2])
        const = 2 * (head + block)
    form = HirotaForm({(ops[0].label, ops[1].label): Fraction(1)})
    return form, ops, affine, const


def _toda_P(st: SchlesingerState, k: int, pol: dict):
    """Bilinear expansion of the k-th Toda right side over tau_0^2."""
    form, ops, affine, const = _toda_form(st, k, pol)
    a, b = ops
    jets = {(a.label,): _dlog_jet(st, a), (b.label,): _dlog_jet(st, b)}
    jets[tuple(sorted((a.label, b.label)))] = _quad_jet(st, a, b)
    acc = form.reduce(jets, jets) + const
    for c, op in affine:
        acc = acc + c * _dlog_jet(st, op)
    return acc


def _toda_dlogF(st: SchlesingerState, k: int, i: int):
    """d/dt_i log of the k-th Toda prefactor.

    The prefactor is a pure power product of position differences whose
    pair exponent depends only on how many of the two labels carry a
    nonzero component of the shift direction among the visible slots
    1..n+2: -(n+4)/(n+2) for both, -(n-1)/((n+1)(n+2)) for exactly one,
    and 2/((n+1)(n+2)) for neither.
    """
    n = st.n
    mu = elementary_mu(n, k)
    support = {m for m in range(1, n + 3) if mu[m - 1] != 0}
    acc = Fraction(0)
    for m in range(1, n + 3):
        if m == i:
            continue
        hits = (1 if i in support else 0) + (1 if m in support else 0)
        if hits == 2:
            c = Fraction(n + 4, n + 2)
        elif hits == 1:
            c = Fraction(n - 1, (n + 1) * (n + 2))
        else:
            c = Fraction(-2, (n + 1) * (n + 2))
        acc = acc - c / (st.t_of(i) - st.t_of(m))
    return acc


def check_toda_bilinear_consts(cfg: SampleConfig, n: int = 2,
                               k: int | None = None,
                               policy: dict | None = None) -> CheckReport:
    """Toda relations at the dlog level through the Hirota reduction.

    For each elementary direction the closed double-shift defect plus the
    dlog of the explicit prefactor must match the logarithmic derivative
    of the Hirota-form expansion.  Arbitrates the toda_const_sum policy.
    """
    pol = resolve_policy(policy)
    ks = range(1, n + 4) if k is None else (k,)

    def residuals(st):
        for kk in ks:
            mu = elementary_mu(n, kk)
            P = _toda_P(st, kk, pol)
            if P == 0:
                raise DegenerateStateError("toda bilinear expansion vanishes")
            for i in range(1, n + 1):
                lhs = (shift_H(st, mu, i, policy=pol)
                       + shift_H(st, _neg(mu), i, policy=pol)
                       - 2 * hamiltonian_H(st, i)
                       + _toda_dlogF(st, kk, i))
                dP = flow_derivative(lambda s, kk=kk: _toda_P(s, kk, pol),
                                     st, i)
                yield (f"k{kk}.i{i}", lhs - dP / P)

    return certify_identity("bilinear.toda_bilinear", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n, "k": "all" if k is None else k},
                            degree_hint=600)


# -- Hirota-Miwa equations ---------------------------------------------------


def _pair_pp(s: SchlesingerState, p: int, q: int):
    return s.b_of(p) * s.d_of(q) - s.d_of(p) * s.b_of(q)


def _pair_pm(s: SchlesingerState, p: int, q: int):
    return s.b_of(p) * s.a_of(q) + s.d_of(p) * s.b_of(q)


def _hm_closed(s: SchlesingerState, trip: tuple, side: int):
    """Entry quotient equal to tau_{i,k} tau_{j,-k} / (tau_0 tau_{i,j}).

    side 0 is that product, side 1 the one with i and j swapped; both are
    normalized by the same tau constants, so only dlogs and the exact
    difference identities below are meaningful.
    """
    i, j, k = trip
    n = s.n
    if k == n + 3:
        num = s.b_of(i) * s.d_of(j) if side == 0 else s.d_of(i) * s.b_of(j)
        return num / _pair_pp(s, i, j)
    if j == n + 3:
        num = _pair_pp(s, i, k) if side == 0 else _pair_pm(s, i, k)
        return num / s.b_of(i)
    if side == 0:
        return (_pair_pp(s, i, k) * _pair_pm(s, j, k)
                / (s.b_of(k) * _pair_pp(s, i, j)))
    return (_pair_pm(s, i, k) * _pair_pp(s, j, k)
            / (s.b_of(k) * _pair_pp(s, i, j)))


def _hm_side_mus(n: int, trip: tuple, side: int) -> tuple:
    i, j, k = trip
    if side == 0:
        nums = (mu_pair_label(n, i, k), mu_pair_label(n, j, -k))
    else:
        nums = (mu_pair_label(n, j, k), mu_pair_label(n, i, -k))
    return nums + (mu_pair_label(n, i, j),)


def _hm_gap(s: SchlesingerState, trip: tuple, side: int, m: int, pol: dict):
    """Quotient dlog minus the dlog of its entry form, in direction m."""
    mu_a, mu_b, mu_den = _hm_side_mus(s.n, trip, side)

    def closed(x, trip=trip, side=side):
        return _hm_closed(x, trip, side)

    base = closed(s)
    if base == 0:
        raise DegenerateStateError("entry quotient vanishes")
    lhs = (shift_H(s, mu_a, m, policy=pol) + shift_H(s, mu_b, m, policy=pol)
           - hamiltonian_H(s, m) - shift_H(s, mu_den, m, policy=pol))
    return lhs - flow_derivative(closed, s, m) / base


def _fit_hm_gap(n: int, trip: tuple, side: int, m: int, pol: dict,
                seed: int):
    """Fit the prefactor exponents kappa_l(theta) on a side sample."""
    fit_cfg = SampleConfig(seed=seed, trials=1, height=40)
    slots = [l for l in range(1, n + 3) if l != m]
    width = n + 4
    wanted = len(slots) * width + 8
    rows, rhs = [], []
    stream = 0
    while len(rows) < wanted:
        stream += 1
        if stream > 50 * wanted:
            raise ExhaustedError("no generic sample for the prefactor fit")
        try:
            st = sample_state(fit_cfg, stream, n)
            gap = _hm_gap(st, trip, side, m, pol)
        except (ZeroDivisionError, DegenerateStateError):
            continue
        row = []
        for l in slots:
            pole = 1 / (st.t_of(m) - st.t_of(l))
            row.append(pole)
            for p in range(1, n + 4):
                row.append(pole * st.theta_of(p))
        rows.append(row)
        rhs.append(gap)
    coeffs = solve_linear(rows, rhs)
    if coeffs is None:
        raise ShapeError(
            f"prefactor gap for triple {trip} side {side} is not a flat "
            "theta-affine logarithmic form")
    return slots, coeffs


def _pole_model(st: SchlesingerState, m: int, slots, coeffs):
    n = st.n
    width = n + 4
    acc = 0
    for idx, l in enumerate(slots):
        pole = 1 / (st.t_of(m) - st.t_of(l))
        block = coeffs[idx * width:(idx + 1) * width]
        kappa = block[0]
        for p in range(1, n + 4):
            kappa = kappa + block[p] * st.theta_of(p)
        acc = acc + kappa * pole
    return acc


def hm_role_instances(n: int) -> list:
    """All admissible role triples (i, j, k) on distinct slots.

    Every 3-subset of the slots 1..n+3 appears with each member in the
    split role k, except that the infinity slot never takes the first
    role: its closed entry form only exists in the j and k positions.
    """
    out = []
    for sub in itertools.combinations(range(1, n + 4), 3):
        if n + 3 in sub:
            rest = [s for s in sub if s != n + 3]
            out.append((rest[0], rest[1], n + 3))
            out.append((rest[0], n + 3, rest[1]))
            out.append((rest[1], n + 3, rest[0]))
        else:
            for k in sub:
                ij = [s for s in sub if s != k]
                out.append((ij[0], ij[1], k))
    return out


def _hm_transform_residuals(st: SchlesingerState, n: int, pol: dict):
    """Closed shift formulas entering the base four-term identity."""
    th = st.theta
    R = R_hat(st)
    for i in range(1, n + 1):
        ti = st.t_of(i)
        poles = [1 / (ti - st.t_of(j))
                 for j in range(1, n + 3) if j != i]

        rhs = (hamiltonian_H(st, i)
               - tr_prod(st.A_of(i), R) / (ti * (ti - 1))
               + gamma_single(th, n, 1, i, 1, n + 1) / ti
               + gamma_single(th, n, -1, i, 1, n + 2) / (ti - 1)
               + gamma_pair(th, n, 1, n + 1, 1, n + 2) * sum(poles))
        yield (f"zero_one.i{i}",
               shift_H(st, _unit_mu(n, (1, n + 1), (1, n + 2)), i,
                       policy=pol) - rhs)

        rhs = (hamiltonian_H(st, i)
               + (st.a_of(i) - st.b_of(i) * st.a_of(n + 1)
                  / st.b_of(n + 1)) / ti
               + gamma_single(th, n, 1, i, -1, n + 1) / ti
               + gamma_pair(th, n, 1, n + 3, -1, n + 1) * sum(poles))
        yield (f"inf_zero.i{i}",
               shift_H(st, _unit_mu(n, (1, n + 3), (-1, n + 1)), i,
                       policy=pol) - rhs)

        rhs = (hamiltonian_H(st, i)
               + (st.a_of(i) + st.b_of(i) * st.d_of(n + 2)
                  / st.b_of(n + 2)) / (ti - 1)
               + gamma_single(th, n, 1, i, 1, n + 2) / (ti - 1)
               + gamma_pair(th, n, 1, n + 2, 1, n + 3) * sum(poles))
        yield (f"one_inf.i{i}",
               shift_H(st, _unit_mu(n, (1, n + 2), (1, n + 3)), i,
                       policy=pol) - rhs)


def _hm_combo_plus(s: SchlesingerState, n: int):
    return s.d_of(n + 1) - s.b_of(n + 1) * s.d_of(n + 2) / s.b_of(n + 2)


def _hm_combo_minus(s: SchlesingerState, n: int):
    return -(s.a_of(n + 1) + s.b_of(n + 1) * s.d_of(n + 2) / s.b_of(n + 2))


def _hm_base_residuals(st: SchlesingerState, n: int, pol: dict):
    """Base four-term identity through its two quotient closed forms.

    Both four-term products over tau_0 tau_{n+2,n+3} collapse to an entry
    combination of slots n+1, n+2 times one explicit prefactor; the two
    combinations differ by theta_{n+1}, and the slot-(n+1) sign change
    carries one combination into the other exactly.  Together these facts
    are the quadratic identity and its reflection step.
    """
    mu_zero_one = _unit_mu(n, (1, n + 1), (1, n + 2))
    mu_inf_zero = _unit_mu(n, (1, n + 3), (-1, n + 1))
    mu_den = _unit_mu(n, (1, n + 2), (1, n + 3))
    mu_zero_inf = _unit_mu(n, (1, n + 1), (1, n + 3))
    mu_one_zero = _unit_mu(n, (1, n + 2), (-1, n + 1))

    yield ("theta_difference",
           _hm_combo_plus(st, n) - _hm_combo_minus(st, n)
           - st.theta_of(n + 1))
    yield ("reflection",
           _hm_combo_plus(sign_change_apply(st, n + 1), n)
           - _hm_combo_minus(st, n))
    for i in range(1, n + 1):
        pref = (Fraction(1, n + 2) / st.t_of(i)
                + _dlog_vandermonde(
                    st, i, Fraction(-1, 2 * (n + 1) * (n + 2))))
        for tag, mus, combo in (
            ("plus", (mu_zero_one, mu_inf_zero), _hm_combo_plus),
            ("minus", (mu_zero_inf, mu_one_zero), _hm_combo_minus),
        ):
            base = combo(st, n)
            if base == 0:
                raise DegenerateStateError("entry combination vanishes")
            lhs = (shift_H(st, mus[0], i, policy=pol)
                   + shift_H(st, mus[1], i, policy=pol)
                   - hamiltonian_H(st, i)
                   - shift_H(st, mu_den, i, policy=pol))
            rhs = flow_derivative(lambda s: combo(s, n), st, i) / base + pref
            yield (f"quotient.{tag}.i{i}", lhs - rhs)


def _hm_triple_residuals(st: SchlesingerState, trip: tuple, fits, pol: dict):
    """Split identity and fitted flat gaps for one role triple."""
    n = st.n
    i, j, k = trip
    tag = "-".join(str(x) for x in trip)
    x_val = _hm_closed(st, trip, 0)
    y_val = _hm_closed(st, trip, 1)
    if k == n + 3:
        diff = x_val - y_val - 1
    elif j == n + 3:
        diff = x_val + y_val - st.theta_of(k)
    else:
        diff = x_val - y_val - st.theta_of(k)
    yield (f"{tag}.split", diff)
    for side in (0, 1):
        for m in range(1, n + 1):
            slots, coeffs = fits(trip, side, m)
            gap = _hm_gap(st, trip, side, m, pol)
            yield (f"{tag}.s{side}.m{m}",
                   gap - _pole_model(st, m, slots, coeffs))


def check_hirota_miwa(cfg: SampleConfig, n: int = 2,
                      triple: tuple | None = None,
                      policy: dict | None = None) -> CheckReport:
    """Four-term quadratic relations among singly-shifted tau functions.

    With no triple given this covers the base identity (its three closed
    shift formulas, the two quotient collapses, the theta difference and
    the sign-change reflection step) together with one representative
    role triple of each closed-form branch.  With an explicit (i, j, k)
    it certifies that single role instance: the exact split constant and
    the flatness of both side prefactors, fitted on an independent sample
    and certified on every trial.
    """
    pol = resolve_policy(policy)
    if triple is not None:
        i, j, k = triple
        if len({i, j, k}) != 3 or not all(1 <= x <= n + 3 for x in triple):
            raise ValueError(f"role triple out of range: {triple}")
        if i == n + 3:
            raise ValueError("infinity slot cannot take the first role")
        triples = [tuple(triple)]
        base = False
    else:
        triples = [(1, 2, 3), (1, 2, n + 3), (1, n + 3, 2)]
        base = True
    fit_cache = {}

    def fits(trip, side, m):
        key = (trip, side, m)
        if key not in fit_cache:
            fit_cache[key] = _fit_hm_gap(n, trip, side, m, pol,
                                         seed=cfg.seed * 1000003 + 29)
        return fit_cache[key]

    def residuals(st):
        if base:
            yield from _hm_transform_residuals(st, n, pol)
            yield from _hm_base_residuals(st, n, pol)
        for trip in triples:
            yield from _hm_triple_residuals(st, trip, fits, pol)

    label = "base" if triple is None else "-".join(str(x) for x in triple)
    return certify_identity("bilinear.hirota_miwa", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n, "triple": label},
                            degree_hint=800)


# -- bilinear differential equations -----------------------------------------


def _delta(f, st: SchlesingerState, j: int):
    """delta_j = t_j (t_j - 1) d/dt_j as a total flow derivative."""
    return st.t_of(j) * (st.t_of(j) - 1) * flow_derivative(f, st, j)


def _rhat_flow_residuals(st: SchlesingerState, n: int):
    R = R_hat(st)
    for i in range(1, n + 1):
        ti = st.t_of(i)
        got = R_hat(lift(st, i))
        want = ((R @ st.A_of(i) @ (R - I2)) / (ti - 1)
                - ((R - I2) @ st.A_of(i) @ R) / ti)
        for tag, g, w in zip(("11", "12", "21", "22"),
                             got.entries(), want.entries()):
            dot = g.dot if hasattr(g, "dot") else Fraction(0)
            yield (f"i{i}.{tag}", dot - w)


def check_rhat_flow(cfg: SampleConfig, n: int = 2,
                    policy: dict | None = None) -> CheckReport:
    """Flow derivative of the rank-one pair matrix."""
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _rhat_flow_residuals(st, n)

    return certify_identity("bilinear.rhat_flow", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=60)


def _hat_star_residuals(st: SchlesingerState, n: int):
    shifted = apply_T_mu(st, _unit_mu(n, (1, n + 1), (1, n + 2)))
    for i in range(1, n + 1):
        yield (f"i{i}", hamiltonian_hat(shifted, i)
               - hamiltonian_hat_star(st, i))


def check_hat_star(cfg: SampleConfig, n: int = 2,
                   policy: dict | None = None) -> CheckReport:
    """Closed form of the pair-raised polynomial Hamiltonian.

    hamiltonian_hat is built from traces only, so evaluating it on the
    explicitly shifted state is frame-independent and must reproduce the
    R-matrix closed form exactly.
    """
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _hat_star_residuals(st, n)

    return certify_identity("bilinear.hat_star", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=80)


def _der_ham_residuals(st: SchlesingerState, n: int):
    """Euler-weighted derivatives of the polynomial Hamiltonians."""
    R = R_hat(st)
    for i in range(1, n + 1):
        Ai = st.A_of(i)
        ti = st.t_of(i)
        thi = st.theta_of(i)

        def hat_i(s, i=i):
            return hamiltonian_hat(s, i)

        def diff_i(s, i=i):
            return hamiltonian_hat(s, i) - hamiltonian_hat_star(s, i)

        rhs = None
        for j in range(1, n + 3):
            if j == i:
                continue
            tj = st.t_of(j)
            term = (ti * (ti - 1) * (ti * ti - 2 * ti * tj + tj)
                    / (ti - tj) ** 2
                    * (tr_prod(Ai, st.A_of(j))
                       - thi * st.theta_of(j) / 2))
            rhs = term if rhs is None else rhs + term
        yield (f"own.i{i}", _delta(hat_i, st, i) - rhs)

        rhs = (Ai @ (R - I2) @ Ai @ R).trace()
        for j in range(1, n + 3):
            if j == i:
                continue
            rhs = rhs - (ti * (ti - 1) / (ti - st.t_of(j))
                         * tr_prod(commutator(Ai, st.A_of(j)), R))
        yield (f"own_star.i{i}", _delta(diff_i, st, i) - rhs)

        for j in range(1, n + 1):
            if j == i:
                continue
            tj = st.t_of(j)
            Aj = st.A_of(j)
            rhs = (ti * (ti - 1) * tj * (tj - 1) / (ti - tj) ** 2
                   * (tr_prod(Ai, Aj) - thi * st.theta_of(j) / 2))
            yield (f"cross.i{i}.j{j}", _delta(hat_i, st, j) - rhs)
            rhs = (tj * (Ai @ R @ Aj @ (R - I2)).trace()
                   - (tj - 1) * (Ai @ (R - I2) @ Aj @ R).trace()
                   + tj * (tj - 1) / (ti - tj)
                   * tr_prod(commutator(Ai, Aj), R))
            yield (f"cross_star.i{i}.j{j}", _delta(diff_i, st, j) - rhs)


def check_der_ham(cfg: SampleConfig, n: int = 2,
                  policy: dict | None = None) -> CheckReport:
    """Euler-weighted derivatives of the polynomial Hamiltonians."""
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _der_ham_residuals(st, n)

    return certify_identity("bilinear.der_ham", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=200)


def _bil_lhs(st: SchlesingerState, i: int):
    """Left side of the coupled bilinear system in Hamiltonian form."""
    n = st.n
    acc = None
    diff_i = hamiltonian_hat(st, i) - hamiltonian_hat_star(st, i)
    for j in range(1, n + 1):
        den = 2 * st.t_of(i) * st.t_of(j) - st.t_of(i) - st.t_of(j)

        def hsum(s, i=i):
            return hamiltonian_hat(s, i) + hamiltonian_hat_star(s, i)

        term = (_delta(hsum, st, j)
                + diff_i * (hamiltonian_hat(st, j)
                            - hamiltonian_hat_star(st, j)))
        term = 2 * term / den
        acc = term if acc is None else acc + term
    return acc


def _bil_lhs_residuals(st: SchlesingerState, n: int):
    """Reduction of the coupled system's left side to trace data."""
    R = R_hat(st)
    for i in range(1, n + 1):
        Ai = st.A_of(i)
        ti = st.t_of(i)
        thi = st.theta_of(i)
        half_i = tr_prod(Ai, R) - thi / 2
        rhs = (-(Ai @ (R - I2) @ Ai @ R).trace()
               + half_i ** 2) / (ti * (ti - 1))
        for j in range(1, n + 1):
            if j == i:
                continue
            tj = st.t_of(j)
            Aj = st.A_of(j)
            den = 2 * ti * tj - ti - tj
            rhs = rhs + 2 / den * (
                half_i * (tr_prod(Aj, R) - st.theta_of(j) / 2)
                + (tj - 1) * (Ai @ (R - I2) @ Aj @ R).trace()
                - tj * (Ai @ R @ Aj @ (R - I2)).trace())
        for j in range(1, n + 3):
            if j == i:
                continue
            tj = st.t_of(j)
            Aj = st.A_of(j)
            den = 2 * ti * tj - ti - tj
            pair = tr_prod(Ai, Aj) - thi * st.theta_of(j) / 2
            rhs = rhs + ((2 * tj - 1)
                         * tr_prod(commutator(Ai, Aj), R) - pair) / den
            rhs = rhs + (2 * ti - 1) / (ti - tj) * pair
        yield (f"i{i}", _bil_lhs(st, i) - rhs)


def check_bil_lhs(cfg: SampleConfig, n: int = 2,
                  policy: dict | None = None) -> CheckReport:
    """Reduction of the coupled system's left side to trace data."""
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _bil_lhs_residuals(st, n)

    return certify_identity("bilinear.lhs", residuals, _state_factory(n),
                            cfg, policy=pol, params={"n": n},
                            degree_hint=300)


def _bil_rhs_residuals(st: SchlesingerState, n: int):
    """Trace reductions against the rank-one pair matrix.

    The same-slot reduction drops the spurious Euler-weight denominator
    that the source display attaches to theta_i^2/4; the assembled
    equations require the plain constant, and the rank-one algebra proves
    it.
    """
    R = R_hat(st)
    for i in range(1, n + 1):
        Ai = st.A_of(i)
        thi = st.theta_of(i)
        half_i = tr_prod(Ai, R) - thi / 2
        for j in range(1, n + 1):
            if j == i:
                continue
            Aj = st.A_of(j)
            thj = st.theta_of(j)
            base = (half_i * (tr_prod(Aj, R) - thj / 2)
                    - tr_prod(Ai, Aj) / 2 + thi * thj / 4)
            comm = tr_prod(commutator(Ai, Aj), R)
            yield (f"left.i{i}.j{j}",
                   (Ai @ (R - I2) @ Aj @ R).trace() - base + comm / 2)
            yield (f"right.i{i}.j{j}",
                   (Ai @ R @ Aj @ (R - I2)).trace() - base - comm / 2)
        yield (f"same.i{i}", (Ai @ (R - I2) @ Ai @ R).trace()
               - half_i ** 2 + thi ** 2 / 4)
        yield (f"zero_slot.i{i}",
               tr_prod(commutator(Ai, st.A_of(n + 1)), R)
               + tr_prod(Ai, st.A_of(n + 1))
               - st.theta_of(n + 1) * tr_prod(Ai, R))
        yield (f"one_slot.i{i}",
               tr_prod(commutator(Ai, st.A_of(n + 2)), R)
               - tr_prod(Ai, st.A_of(n + 2))
               - st.theta_of(n + 2) * tr_prod(Ai, R - I2))


def check_bil_rhs(cfg: SampleConfig, n: int = 2,
                  policy: dict | None = None) -> CheckReport:
    """Trace reductions against the rank-one pair matrix."""
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _bil_rhs_residuals(st, n)

    return certify_identity("bilinear.rhs_traces", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=60)


def _bil_main_residuals(st: SchlesingerState, n: int):
    for i in range(1, n + 1):
        ti = st.t_of(i)
        diff = hamiltonian_hat(st, i) - hamiltonian_hat_star(st, i)
        rhs = ((st.theta_of(n + 1) / ti
                + st.theta_of(n + 2) / (ti - 1)) * diff
               + (2 * ti - 1) / (ti * (ti - 1)) * hamiltonian_hat(st, i)
               + st.theta_of(i) ** 2 / (4 * ti * (ti - 1)))
        yield (f"i{i}", _bil_lhs(st, i) - rhs)


def check_bil(cfg: SampleConfig, n: int = 2,
              policy: dict | None = None) -> CheckReport:
    """Closed coupled system for the polynomial Hamiltonian pair."""
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _bil_main_residuals(st, n)

    return certify_identity("bilinear.main", residuals, _state_factory(n),
                            cfg, policy=pol, params={"n": n},
                            degree_hint=300)


def _C_hat(st: SchlesingerState, i: int, star: bool = False):
    """Flat Euler-weighted constant; star applies the pair-raising shift."""
    n = st.n
    th = list(st.theta)
    if star:
        th[n] = th[n] + 1
        th[n + 1] = th[n + 1] + 1
    ti = st.t_of(i)
    acc = None
    for j in range(1, n + 3):
        if j == i:
            continue
        term = (ti * (ti - 1) / (ti - st.t_of(j))
                * (constant_C(th, n, i, j) + th[i - 1] * th[j - 1] / 2))
        acc = term if acc is None else acc + term
    return acc


def _hat_u(s: SchlesingerState, j: int):
    return hamiltonian_hat(s, j) - _C_hat(s, j)


def _hat_v(s: SchlesingerState, j: int):
    return hamiltonian_hat_star(s, j) - _C_hat(s, j, star=True)


def _hat_flat_residuals(st: SchlesingerState, n: int):
    """Symmetry of the second hat-jets used by the Hirota reduction."""
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for tag, f in (("u", _hat_u), ("v", _hat_v)):
                a = _delta(lambda s, j=j, f=f: f(s, j), st, i)
                b = _delta(lambda s, i=i, f=f: f(s, i), st, j)
                yield (f"hat_flat.{tag}.{i}{j}", a - b)


def _tau_form_residuals(st: SchlesingerState, n: int):
    """Coupled system as a Hirota form with affine tail.

    The quadratic and first-order content sits in a HirotaForm over the
    hat-symbol pair, reduced with u_j and v_j as the logarithmic delta
    jets of the two tau functions; what remains outside the form is the
    frame prefactor's own dlog, which is not bilinear.
    """
    labels = [DerivationOp("hirota", j).label for j in range(0, n + 1)]

    def jets():
        u = {}
        v = {}
        for j in range(1, n + 1):
            u[(labels[j],)] = _hat_u(st, j)
            v[(labels[j],)] = _hat_v(st, j)
        for i in range(1, n + 1):
            for j in range(i, n + 1):
                key = tuple(sorted((labels[i], labels[j])))
                u[key] = _delta(lambda s, j=j: _hat_u(s, j), st, i)
                v[key] = _delta(lambda s, j=j: _hat_v(s, j), st, i)
        return u, v

    u, v = jets()
    for i in range(1, n + 1):
        ti = st.t_of(i)
        th1 = st.theta_of(n + 1)
        th2 = st.theta_of(n + 2)
        ci = _C_hat(st, i)
        cdiff = ci - _C_hat(st, i, star=True)

        coeffs = {(): (-(th1 / ti + th2 / (ti - 1)) * cdiff
                       - (2 * ti - 1) / (ti * (ti - 1)) * ci
                       - st.theta_of(i) ** 2 / (4 * ti * (ti - 1))),
                  (labels[i],): -th1 / ti - th2 / (ti - 1)}
        for j in range(1, n + 1):
            tj = st.t_of(j)
            den = 2 * ti * tj - ti - tj
            coeffs[tuple(sorted((labels[i], labels[j])))] = Fraction(2) / den
            cdiff_j = _C_hat(st, j) - _C_hat(st, j, star=True)
            kj, ki = (labels[j],), (labels[i],)
            coeffs[kj] = coeffs.get(kj, 0) + 2 * cdiff / den
            coeffs[ki] = coeffs.get(ki, 0) + 2 * cdiff_j / den
            coeffs[()] = (coeffs[()] + 2 * cdiff * cdiff_j / den
                          + 2 * _delta(lambda s, i=i: _C_hat(s, i)
                                       + _C_hat(s, i, star=True), st, j)
                          / den)
        form = HirotaForm(coeffs)
        acc = (form.reduce(u, v)
               - (2 * ti - 1) / (ti * (ti - 1)) * _hat_u(st, i))
        yield (f"i{i}", acc)


def check_bil_tau_form(cfg: SampleConfig, n: int = 2,
                       policy: dict | None = None) -> CheckReport:
    """Bilinear differential system in Hirota form.

    Expanding the Hirota derivatives over the two tau functions and
    substituting u_i = hat H_i - hat C_i and v_i for the starred pair
    (their logarithmic delta-derivatives) turns the system into a
    rational identity in the state.
    """
    pol = resolve_policy(policy)

    def residuals(st):
        yield from _tau_form_residuals(st, n)

    return certify_identity("bilinear.tau_form", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=400)


def check_bilinear_diff(cfg: SampleConfig, n: int = 2,
                        policy: dict | None = None) -> CheckReport:
    """Umbrella over the coupled bilinear differential system.

    Chains the pair-matrix flow, the Euler-weighted Hamiltonian
    derivatives, the closed shifted form, the trace reductions, the
    left-side reduction, the assembled system, the jet symmetry, and the
    Hirota-form restatement into a single certified run.
    """
    pol = resolve_policy(policy)

    def residuals(st):
        for tag, val in _rhat_flow_residuals(st, n):
            yield (f"rhat.{tag}", val)
        for tag, val in _hat_star_residuals(st, n):
            yield (f"hat_star.{tag}", val)
        for tag, val in _der_ham_residuals(st, n):
            yield (f"der.{tag}", val)
        for tag, val in _bil_rhs_residuals(st, n):
            yield (f"traces.{tag}", val)
        for tag, val in _bil_lhs_residuals(st, n):
            yield (f"lhs.{tag}", val)
        for tag, val in _bil_main_residuals(st, n):
            yield (f"main.{tag}", val)
        for tag, val in _hat_flat_residuals(st, n):
            yield (tag, val)
        for tag, val in _tau_form_residuals(st, n):
            yield (f"tau.{tag}", val)

    return certify_identity("bilinear.bilinear_diff", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=600)


# -- canonical coordinates from tau quotients ---------------------------------


def _xbar(gs, i: int):
    """Pole-weighted position sum with fixed slots at 0 and infinity.

    The slot at x = 0 contributes -1; the remaining fixed point is the
    image of t = 1, which sits at infinite position, so its term is the
    limit value -x_i.
    """
    n = gs.n
    xi = gs.x_of(i)
    acc = -1 - xi
    for j in range(1, n + 1):
        if j == i:
            continue
        acc = acc + xi * (gs.x_of(j) - 1) / (xi - gs.x_of(j))
    return acc / ((n + 1) * (n + 2))


def _gamma_bar(gs, i: int, k: int, den: int):
    return -gs.eps_of(i) / 2 + (1 - 2 * gs.eps_of(k)) / (2 * den)


def check_tau_to_gar(cfg: SampleConfig, n: int = 2,
                     policy: dict | None = None) -> CheckReport:
    """Canonical coordinates recovered from tau-quotient dlogs.

    trf_q: the double shift at the infinity slot acts on the closed dlog
    by an explicit affine term in q_i.  coord_q and coord_qp rebuild q_i
    and q_i p_i from the dlogs of the two distinguished tau quotients
    plus pole-weighted correction sums; the single-slot gamma denominator
    is policy-arbitrated (tau_coord_gamma_denominator).
    """
    pol = resolve_policy(policy)
    den = (n + 2) if pol["tau_coord_gamma_denominator"] == "n+2" else (n + 1)
    mu2 = tuple(0 if m != n + 2 else 2 for m in range(n + 3))
    nu0 = mu_pair_label(n, n + 3, -(n + 1))
    nu2 = mu_pair_label(n, n + 3, -(n + 2))

    def residuals(st):
        gs = from_schlesinger(st)
        eps3 = gs.eps_of(3)
        for i in range(1, n + 1):
            ti = st.t_of(i)
            xi = gs.x_of(i)
            X = _xbar(gs, i)
            d1 = shift_H(st, mu2, i, policy=pol) - hamiltonian_H(st, i)
            corr = sum(2 * eps3 / ((n + 1) * (n + 2) * (ti - st.t_of(j)))
                       for j in range(1, n + 3) if j != i)
            yield (f"trf_q.i{i}", d1 - eps3 * gs.q_of(i) / ti - corr)
            yield (f"coord_q.i{i}",
                   gs.q_of(i) - (ti / eps3) * d1 - 2 * X)
            d2 = (shift_H(st, nu2, i, policy=pol)
                  - shift_H(st, nu0, i, policy=pol))
            num = (_gamma_bar(gs, i + 3, 1, den)
                   - xi * _gamma_bar(gs, i + 3, 2, den)
                   - (gs.eps_of(1) - gs.eps_of(2)) * X)
            yield (f"coord_qp.i{i}",
                   gs.q_of(i) * gs.p_of(i)
                   - ti * (ti - 1) * d2 - num / (xi - 1))

    return certify_identity("bilinear.tau_to_gar", residuals,
                            _state_factory(n), cfg, policy=pol,
                            params={"n": n}, degree_hint=400)
