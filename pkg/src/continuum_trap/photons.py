"""Photon-counting statistics behind the three-port splitter (W1, W2, slab).

The slab is a single effective output mode; every quantity here depends only
on its total occupation.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import poisson

from .cmt import ScatterMatrix

Outcome = tuple[int, int, int]


@dataclass(frozen=True)
class InputStateSpec:
    """Input light: ``fock_single``, ``coherent_single``, ``superposition`` or ``fock_pair_1_1``.

    For single-beam states ``port`` is the excited guide (1 or 2). ``n0`` is the
    photon number (Fock) or mean photon number (coherent).
    """

    kind: str
    n0: float = 0
    port: int = 1
    amplitudes: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("fock_single", "coherent_single", "superposition", "fock_pair_1_1"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.n0 < 0:
            raise ValueError("n0 must be >= 0")
        if self.port not in (1, 2):
            raise ValueError("port must be 1 or 2")
        if self.kind == "fock_single" and int(self.n0) != self.n0:
            raise ValueError("Fock photon number must be an integer")
        if self.kind == "superposition":
            if self.amplitudes is None:
                raise ValueError("superposition needs amplitudes")
            a = np.asarray(self.amplitudes, dtype=complex)
            if abs(np.sum(np.abs(a) ** 2) - 1) > 1e-12:
                raise ValueError("amplitudes must satisfy sum |a_n|^2 = 1")

    @property
    def single_beam(self) -> bool:
        return self.kind != "fock_pair_1_1"


def fock_single(n0: int, port: int = 1) -> InputStateSpec:
    return InputStateSpec("fock_single", n0, port)


def coherent_single(n0: float, port: int = 1) -> InputStateSpec:
    return InputStateSpec("coherent_single", n0, port)


def superposition(amplitudes, port: int = 1) -> InputStateSpec:
    return InputStateSpec("superposition", 0, port, tuple(complex(a) for a in amplitudes))


def fock_pair_1_1() -> InputStateSpec:
    return InputStateSpec("fock_pair_1_1")


def number_weights(spec: InputStateSpec, n_max: int | None = None, tail: float = 1e-12):
    """|a_n|^2 for n = 0..n_max and the probability mass beyond n_max."""
    if spec.kind == "fock_single":
        n0 = int(spec.n0)
        n_max = n0 if n_max is None else n_max
        w = np.zeros(n_max + 1)
        if n0 <= n_max:
            w[n0] = 1.0
        return w, float(n0 > n_max)
    if spec.kind == "coherent_single":
        if n_max is None:
            n_max = int(poisson.isf(tail, spec.n0)) + 1 if spec.n0 > 0 else 0
        n = np.arange(n_max + 1)
        w = poisson.pmf(n, spec.n0) if spec.n0 > 0 else (n == 0).astype(float)
        return w, float(poisson.sf(n_max, spec.n0)) if spec.n0 > 0 else 0.0
    if spec.kind == "superposition":
        a2 = np.abs(np.asarray(spec.amplitudes, dtype=complex)) ** 2
        n_max = a2.size - 1 if n_max is None else n_max
        w = np.zeros(n_max + 1)
        m = min(a2.size, n_max + 1)
        w[:m] = a2[:m]
        return w, float(np.sum(a2[m:]))
    raise ValueError("number_weights is defined for single-beam inputs only")


@dataclass(frozen=True)
class JointDistribution:
    entries: dict
    z: float = math.nan
    truncation_loss: float = 0.0

    def __getitem__(self, outcome: Outcome) -> float:
        return self.entries.get(tuple(outcome), 0.0)

    def total(self) -> float:
        return math.fsum(self.entries.values())

    def mean(self, port: int) -> float:
        return math.fsum(n[port - 1] * p for n, p in self.entries.items())

    def marginal(self, port: int) -> np.ndarray:
        return marginal(self, port)

    def to_rows(self):
        return sorted(([*k, v] for k, v in self.entries.items()), key=lambda r: r[:3])


def _port_row(s: ScatterMatrix, port: int):
    return (s.s11, s.s12, s.s13) if port == 1 else (s.s21, s.s22, s.s23)


def joint_single_input(spec: InputStateSpec, s: ScatterMatrix, n_max: int | None = None,
                       min_prob: float = 0.0) -> JointDistribution:
    """Multinomial split of every photon-number sector over the three ports.

    P(n1, n2, n3) = |a_n|^2 n! / (n1! n2! n3!) prod_j kappa_j^{n_j}, evaluated
    in log space.
    """
    if not spec.single_beam:
        raise ValueError("joint_single_input takes a single-beam input")
    w, loss = number_weights(spec, n_max)
    if loss > 1e-9:
        warnings.warn(f"photon-number truncation discards {loss:.3e} of the input",
                      RuntimeWarning, stacklevel=2)
    kap = np.abs(np.asarray(_port_row(s, spec.port))) ** 2
    entries = {}
    for n in np.nonzero(w)[0]:
        n = int(n)
        n1, n2 = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        ok = n1 + n2 <= n
        n1, n2 = n1[ok], n2[ok]
        n3 = n - n1 - n2
        logp = (math.log(w[n]) + gammaln(n + 1) - gammaln(n1 + 1) - gammaln(n2 + 1)
                - gammaln(n3 + 1) + xlogy(n1, kap[0]) + xlogy(n2, kap[1]) + xlogy(n3, kap[2]))
        p = np.exp(logp)
        for a, b, c, v in zip(n1.tolist(), n2.tolist(), n3.tolist(), p.tolist()):
            if v > min_prob:
                entries[(a, b, c)] = entries.get((a, b, c), 0.0) + v
    return JointDistribution(entries, z=s.z, truncation_loss=loss)


def marginal(joint: JointDistribution, port: int) -> np.ndarray:
    if port not in (1, 2, 3):
        raise ValueError("port must be 1, 2 or 3")
    m = max((k[port - 1] for k in joint.entries), default=0)
    out = np.zeros(m + 1)
    for k, p in joint.entries.items():
        out[k[port - 1]] += p
    return out


def expand_creation_product(rows) -> dict:
    """Occupations and amplitudes of prod_i (sum_j rows[i][j] a_j^dag) |0>.

    Polynomial multiplication in the creation operators; the amplitude of
    |n1, n2, n3> carries the sqrt(n1! n2! n3!) bosonic factor.
    """
    rows = [np.asarray(r, dtype=complex) for r in rows]
    m = rows[0].size
    poly = {(0,) * m: 1.0 + 0j}
    for r in rows:
        nxt = {}
        for occ, c in poly.items():
            for j in range(m):
                if r[j] == 0:
                    continue
                o = list(occ)
                o[j] += 1
                o = tuple(o)
                nxt[o] = nxt.get(o, 0j) + c * r[j]
        poly = nxt
    return {o: c * math.sqrt(math.prod(math.factorial(n) for n in o)) for o, c in poly.items()}


def two_photon_joint(s: ScatterMatrix) -> JointDistribution:
    """Joint counts for one photon injected in each guide."""
    amps = expand_creation_product([_port_row(s, 1), _port_row(s, 2)])
    entries = {o: float(abs(a) ** 2) for o, a in amps.items()}
    return JointDistribution(entries, z=s.z)


def two_photon_closed_form(e: float) -> dict:
    """The six nonzero entries as functions of e = exp(-4 sigma z)."""
    return {
        (2, 0, 0): (1 - e) ** 2 / 8,
        (0, 2, 0): (1 - e) ** 2 / 8,
        (1, 1, 0): (1 + e) ** 2 / 4,
        (1, 0, 1): e * (1 - e) / 2,
        (0, 1, 1): e * (1 - e) / 2,
        (0, 0, 2): (1 - e) ** 2 / 2,
    }


def intensity_expectation_two_photon(beam1_powers, beam2_powers) -> np.ndarray:
    """Mean count per port for two independent single photons: the powers add."""
    return np.asarray(beam1_powers, dtype=float) + np.asarray(beam2_powers, dtype=float)


def two_photon_means(s: ScatterMatrix) -> np.ndarray:
    p1 = np.abs(np.asarray(_port_row(s, 1))) ** 2
    p2 = np.abs(np.asarray(_port_row(s, 2))) ** 2
    return intensity_expectation_two_photon(p1, p2)


def bosonic_oracle(occupation_in: Iterable[int], amplitude_matrix, outcome: Iterable[int]) -> float:
    """Brute-force transition probability, for testing.

    Each input photon in port i is sent to output port j with amplitude
    U[i, j]; the amplitude of an outcome sums over all assignments of the
    input photons to the output photons. Limited to 6 photons.
    """
    occ_in = [int(n) for n in occupation_in]
    occ_out = [int(n) for n in outcome]
    n = sum(occ_in)
    if n > 6:
        raise ValueError("bosonic_oracle is limited to 6 photons")
    if sum(occ_out) != n:
        return 0.0
    u = np.asarray(amplitude_matrix, dtype=complex)
    ins = [i for i, c in enumerate(occ_in) for _ in range(c)]
    outs = [j for j, c in enumerate(occ_out) for _ in range(c)]
    amp = 0j
    for perm in itertools.permutations(range(n)):
        term = 1.0 + 0j
        for a, b in zip(ins, perm):
            term *= u[a, outs[b]]
        amp += term
    norm = math.prod(math.factorial(c) for c in occ_in) * math.prod(math.factorial(c) for c in occ_out)
    return float(abs(amp) ** 2 / norm)


def all_outcomes(n: int, ports: int = 3):
    for combo in itertools.product(range(n + 1), repeat=ports):
        if sum(combo) == n:
            yield combo
