"""Minimal pure-state simulation engine.

States are dense complex vectors.  Mixed behaviour (noise, tampering,
eavesdropping) is realised by trajectory sampling with an injected
``numpy.random.Generator``; nothing in here keeps hidden randomness.

Qubit ``q`` of a ``2**k`` dimensional register is the bit ``2**q`` of the
basis label, so label ``5`` on three qubits is ``q0=1, q1=0, q2=1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from qvote.errors import ContractViolation, ResourceLimitError

TOL = 1e-9
MAX_DIM = 2**24

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector, optionally factored into parts.

    Attributes:
        amplitudes: complex amplitudes, length ``dim``.
        parts: dimensions of the subsystems, most significant first.
            Defaults to a single part of size ``dim``.
    """

    amplitudes: np.ndarray
    parts: tuple[int, ...] = ()

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        dim = amps.size
        if dim < 1:
            raise ContractViolation("state dimension must be >= 1")
        if dim > MAX_DIM:
            raise ResourceLimitError(f"dimension {dim} exceeds cap {MAX_DIM}")
        parts = tuple(int(p) for p in self.parts) or (dim,)
        if math.prod(parts) != dim or min(parts) < 1:
            raise ContractViolation(f"parts {parts} do not factor dim {dim}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > TOL:
            raise ContractViolation(f"state not normalized (norm^2={norm:.12g})")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def num_qubits(self) -> int:
        k = self.dim.bit_length() - 1
        if 2**k != self.dim:
            raise ContractViolation(f"dim {self.dim} is not a power of two")
        return k

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def allclose(self, other: "PureState", atol: float = TOL) -> bool:
        return self.dim == other.dim and np.allclose(
            self.amplitudes, other.amplitudes, atol=atol
        )

    def equal_up_to_phase(self, other: "PureState", atol: float = TOL) -> bool:
        return self.dim == other.dim and abs(abs(np.vdot(self.amplitudes, other.amplitudes)) - 1) < atol

    @classmethod
    def basis_state(cls, dim: int, label: int, parts: Sequence[int] = ()) -> "PureState":
        amps = np.zeros(dim, dtype=complex)
        amps[label] = 1.0
        return cls(amps, tuple(parts))

    @classmethod
    def from_unnormalized(cls, amps, parts: Sequence[int] = ()) -> "PureState":
        amps = np.asarray(amps, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ContractViolation("cannot normalize the zero vector")
        return cls(amps / norm, tuple(parts))


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Orthonormal measurement basis; ``vectors[k]`` carries ``labels[k]``."""

    vectors: np.ndarray
    labels: tuple[Hashable, ...] = field(default=())

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=complex)
        if vecs.ndim != 2 or vecs.shape[0] != vecs.shape[1]:
            raise ContractViolation("basis must be a square array of row vectors")
        gram = vecs.conj() @ vecs.T
        if not np.allclose(gram, np.eye(len(vecs)), atol=TOL):
            raise ContractViolation("basis vectors are not orthonormal")
        labels = tuple(self.labels) or tuple(range(len(vecs)))
        if len(labels) != len(vecs):
            raise ContractViolation("one label per basis vector required")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def gram(self) -> np.ndarray:
        return self.vectors.conj() @ self.vectors.T


@dataclass(frozen=True)
class NoiseParams:
    """Per-qubit bit-flip probability for a ``qubit_count`` register."""

    p: float
    qubit_count: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ContractViolation(f"flip probability {self.p} outside [0, 1]")
        if self.qubit_count < 1:
            raise ContractViolation("qubit_count must be positive")


def computational_basis(dim: int) -> OrthoBasis:
    return OrthoBasis(np.eye(dim, dtype=complex))


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to ``probs``."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def born_probabilities(state: PureState, basis: OrthoBasis) -> np.ndarray:
    if basis.dim != state.dim:
        raise ContractViolation(f"basis dim {basis.dim} != state dim {state.dim}")
    return np.abs(basis.vectors.conj() @ state.amplitudes) ** 2


def measure(state: PureState, basis: OrthoBasis, rng: np.random.Generator):
    """Projective measurement of the whole state.

    Returns:
        ``(label, post_state)`` where the post state is the basis vector of
        the outcome carrying the phase of the projection.
    """
    probs = born_probabilities(state, basis)
    k = sample_index(probs, rng)
    vec = basis.vectors[k]
    overlap = np.vdot(vec, state.amplitudes)
    post = vec * (overlap / abs(overlap))
    return basis.labels[k], PureState(post, state.parts)


def _split(state: PureState, part: int) -> np.ndarray:
    """View the amplitudes as a matrix (part dim) x (rest), part axis first."""
    tensor = state.amplitudes.reshape(state.parts)
    return np.moveaxis(tensor, part, 0).reshape(state.parts[part], -1)


def _merge(matrix: np.ndarray, parts: tuple[int, ...], part: int) -> np.ndarray:
    shape = (parts[part],) + tuple(p for i, p in enumerate(parts) if i != part)
    return np.moveaxis(matrix.reshape(shape), 0, part).reshape(-1)


def measure_part(state: PureState, part: int, basis: OrthoBasis, rng: np.random.Generator):
    """Measure one subsystem; the others are left (conditionally) untouched."""
    if basis.dim != state.parts[part]:
        raise ContractViolation("basis does not match the measured part")
    mat = _split(state, part)
    coeffs = basis.vectors.conj() @ mat
    probs = np.sum(np.abs(coeffs) ** 2, axis=1)
    k = sample_index(probs, rng)
    rest = coeffs[k] / math.sqrt(probs[k])
    collapsed = np.outer(basis.vectors[k], rest)
    return basis.labels[k], PureState(_merge(collapsed, state.parts, part), state.parts)


def tensor(*states: PureState) -> PureState:
    amps = states[0].amplitudes
    parts = list(states[0].parts)
    for st in states[1:]:
        amps = np.kron(amps, st.amplitudes)
        parts.extend(st.parts)
    return PureState(amps, tuple(parts))


def epr_qudit(M: int) -> PureState:
    """Maximally entangled pair ``sum_i |i>|i> / sqrt(M)``."""
    if M < 2:
        raise ContractViolation("qudit dimension must be >= 2")
    amps = np.zeros(M * M, dtype=complex)
    amps[np.arange(M) * (M + 1)] = 1 / math.sqrt(M)
    return PureState(amps, (M, M))


def gen_cnot_labels(M: int) -> np.ndarray:
    """Destination label of every basis label ``i*M + j`` under the generalized CNOT."""
    i, j = np.divmod(np.arange(M * M), M)
    return i * M + (j + (M - 1) * i) % M


def gen_cnot(state: PureState, M: int) -> PureState:
    """Apply ``|i>|j> -> |i>|(j + (M-1) i) mod M>``."""
    if state.dim != M * M:
        raise ContractViolation(f"expected a two-qudit register of dim {M * M}")
    out = np.empty_like(state.amplitudes)
    out[gen_cnot_labels(M)] = state.amplitudes
    return PureState(out, (M, M))


def qft_basis(M: int) -> OrthoBasis:
    """Generalized X basis: row ``k`` is ``sum_j exp(2 pi i k j / M)|j> / sqrt(M)``."""
    if M < 2:
        raise ContractViolation("qudit dimension must be >= 2")
    k = np.arange(M)
    return OrthoBasis(np.exp(2j * np.pi * np.outer(k, k) / M) / math.sqrt(M))


def ghz(k: int) -> PureState:
    if k < 1:
        raise ContractViolation("GHZ needs at least one qubit")
    if 2**k > MAX_DIM:
        raise ResourceLimitError(f"GHZ on {k} qubits exceeds the 2^24 amplitude cap")
    amps = np.zeros(2**k, dtype=complex)
    amps[0] = amps[-1] = 1 / math.sqrt(2)
    return PureState(amps, (2,) * k)


def apply_1q(state: PureState, gate: np.ndarray, qubit: int) -> PureState:
    """Apply a single-qubit unitary to ``qubit`` of a qubit register."""
    k = state.num_qubits
    if not 0 <= qubit < k:
        raise ContractViolation(f"qubit {qubit} out of range for {k} qubits")
    t = state.amplitudes.reshape((2,) * k)
    axis = k - 1 - qubit
    t = np.moveaxis(np.tensordot(gate, t, axes=([1], [axis])), 0, axis)
    return PureState(t.reshape(-1), state.parts)


def measure_qubit(state: PureState, qubit: int, rng: np.random.Generator,
                  basis: str = "z", discard: bool = False):
    """Measure one qubit in the Z or X basis.

    With ``discard=True`` the measured qubit is removed from the register
    (it is in a known product state afterwards), shrinking the dimension.

    Returns:
        ``(bit, state)``; for the X basis ``bit=1`` means the ``|->`` outcome.
    """
    k = state.num_qubits
    if not 0 <= qubit < k:
        raise ContractViolation(f"qubit {qubit} out of range for {k} qubits")
    t = state.amplitudes.reshape((2,) * k)
    axis = k - 1 - qubit
    t = np.moveaxis(t, axis, 0).reshape(2, -1)
    if basis == "x":
        t = _H @ t
    elif basis != "z":
        raise ContractViolation(f"unknown basis {basis!r}")
    p1 = float(np.vdot(t[1], t[1]).real)
    bit = int(rng.random() < p1)
    rest = t[bit] / math.sqrt(p1 if bit else 1 - p1)
    if discard:
        if k == 1:
            return bit, None
        return bit, PureState(rest, (2,) * (k - 1))
    vec = np.zeros((2, rest.size), dtype=complex)
    vec[bit] = rest
    if basis == "x":
        vec = _H @ vec
    out = np.moveaxis(vec.reshape((2,) + (2,) * (k - 1)), 0, axis)
    return bit, PureState(out.reshape(-1), state.parts)


def bitflip_channel(state: PureState, noise: NoiseParams, rng: np.random.Generator) -> PureState:
    """One trajectory of the independent bit-flip channel on every qubit."""
    if state.dim != 2**noise.qubit_count:
        raise ContractViolation(
            f"state dim {state.dim} is not 2^{noise.qubit_count}"
        )
    flips = rng.random(noise.qubit_count) < noise.p
    mask = int(np.dot(flips, 1 << np.arange(noise.qubit_count)))
    if mask == 0:
        return state
    return PureState(state.amplitudes[np.arange(state.dim) ^ mask], state.parts)


def x_parity_distribution(state: PureState) -> np.ndarray:
    """Probabilities of all-qubit X-basis outcomes (label bit q = qubit q is ``|->``)."""
    k = state.num_qubits
    t = state.amplitudes.reshape((2,) * k)
    for axis in range(k):
        t = np.moveaxis(np.tensordot(_H, t, axes=([1], [axis])), 0, axis)
    return np.abs(t.reshape(-1)) ** 2


def apply_cnot(state: PureState, control: int, target: int) -> PureState:
    k = state.num_qubits
    if control == target or not (0 <= control < k and 0 <= target < k):
        raise ContractViolation("invalid control/target qubits")
    idx = np.arange(state.dim)
    src = np.where(idx >> control & 1, idx ^ (1 << target), idx)
    return PureState(state.amplitudes[src], state.parts)


def permute_qubits(state: PureState, order: Sequence[int]) -> PureState:
    """Relabel qubits so that new qubit ``q`` is old qubit ``order[q]``."""
    k = state.num_qubits
    if sorted(order) != list(range(k)):
        raise ContractViolation("order must be a permutation of the qubits")
    t = state.amplitudes.reshape((2,) * k)
    # axis a holds qubit k-1-a
    axes = [k - 1 - order[k - 1 - a] for a in range(k)]
    return PureState(np.transpose(t, axes).reshape(-1), (2,) * k)
