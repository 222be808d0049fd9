"""Mode-decoupled control systems and their state vectors.

A system is a family of small ODEs indexed by the mode number k >= 1,
truncated to the first ``n_modes`` modes. Right-hand sides are vectorized
over lanes: ``rhs(k, z, u)`` takes mode indices of shape ``(L,)``, mode
states of shape ``(L, d)`` and one input value of shape ``(m,)``.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "BLOWUP_START",
    "CATALOG_IDS",
    "CUTOFF_A",
    "NoOracleError",
    "OracleResult",
    "SingularityError",
    "StateVector",
    "TruncatedModeSystem",
    "UnknownSystemError",
    "basis_state",
    "catalog",
    "cutoff_xi",
    "exact_solution",
    "format_state",
    "make_system",
    "norm",
    "parse_state",
    "rhs_lipschitz_estimate",
    "user_system",
]

# x(0) for which x' = -2x + x^2 escapes exactly at t = 1: (1/2) ln(c/(c-2)) = 1
BLOWUP_START = 2.0 * math.e**2 / (math.e**2 - 1.0)
CUTOFF_A = min(BLOWUP_START, 0.5)

CATALOG_IDS = ("Example1", "S1", "S2", "S1tilde", "S3", "S4", "LinDiagStrong", "ScalarISS")


class UnknownSystemError(KeyError):
    pass


class NoOracleError(LookupError):
    pass


class SingularityError(ArithmeticError):
    """The comparison bound has already escaped at the requested time."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Mode states of shape ``(n_modes, mode_dim)`` with a norm tag."""

    modes: np.ndarray
    norm_tag: str = "l2"

    def __post_init__(self):
        arr = np.array(self.modes, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError("modes must have shape (n_modes, mode_dim)")
        if self.norm_tag not in ("l1", "l2"):
            raise ValueError("norm_tag must be l1 or l2")
        arr.flags.writeable = False
        object.__setattr__(self, "modes", arr)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def mode_dim(self) -> int:
        return self.modes.shape[1]

    def norm(self) -> float:
        return norm(self)

    def active_modes(self) -> np.ndarray:
        """Zero-based indices of modes with a nonzero entry."""
        return np.flatnonzero(np.any(self.modes != 0.0, axis=1))

    def __eq__(self, other):
        return (
            isinstance(other, StateVector)
            and self.norm_tag == other.norm_tag
            and self.modes.shape == other.modes.shape
            and bool(np.array_equal(self.modes, other.modes))
        )

    def __hash__(self):
        return hash((self.norm_tag, self.modes.shape, self.modes.tobytes()))

    def __repr__(self):
        return f"StateVector({format_state(self)}, n_modes={self.n_modes}, {self.norm_tag})"


def mode_norms(modes: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(modes) ** 2, axis=-1))


def combine_norms(per_mode: np.ndarray, norm_tag: str) -> np.ndarray:
    """Aggregate Euclidean mode norms along the last axis."""
    if norm_tag == "l1":
        return np.sum(per_mode, axis=-1)
    return np.sqrt(np.sum(per_mode**2, axis=-1))


def norm(state: StateVector) -> float:
    """l1: sum of mode Euclidean norms; l2: root of the sum of squares."""
    return float(combine_norms(mode_norms(state.modes), state.norm_tag))


@dataclass(frozen=True)
class OracleResult:
    value: np.ndarray
    kinds: tuple[str, ...]

    @property
    def kind(self) -> str:
        return "exact" if all(k == "exact" for k in self.kinds) else "upper bound"


OracleFn = Callable[[int, np.ndarray, np.ndarray, float], list]


@dataclass(frozen=True)
class TruncatedModeSystem:
    """An ``n_modes`` truncation of a countable family of mode ODEs.

    ``oracle(k, z0, u, t)`` returns one ``(value, kind)`` pair per
    component, or ``None`` for components without a closed form.
    ``coupled_rhs`` is used instead of ``rhs`` when ``decoupled`` is false;
    it maps the full ``(n_modes, mode_dim)`` state and an input value to
    the full derivative.
    """

    catalog_id: str
    n_modes: int
    mode_dim: int
    norm_tag: str
    rhs: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] = field(repr=False, compare=False)
    input_dim: int = 1
    oracle: OracleFn | None = field(default=None, repr=False, compare=False)
    decoupled: bool = True
    coupled_rhs: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False, compare=False)
    params: tuple = ()

    def __post_init__(self):
        if self.n_modes < 1 or self.mode_dim < 1:
            raise ValueError("n_modes and mode_dim must be positive")
        if self.norm_tag not in ("l1", "l2"):
            raise ValueError("norm_tag must be l1 or l2")
        if not self.decoupled and self.coupled_rhs is None:
            raise ValueError("a coupled system needs coupled_rhs")

    def mode_rhs(self, k: int, z, u) -> np.ndarray:
        """Derivative of a single mode, for checks and examples."""
        z = np.asarray(z, dtype=float).reshape(1, self.mode_dim)
        u = np.asarray(u, dtype=float).reshape(-1)
        return self.rhs(np.array([k], dtype=float), z, u)[0]

    def zero_state(self) -> StateVector:
        return StateVector(np.zeros((self.n_modes, self.mode_dim)), self.norm_tag)

    def state(self, modes) -> StateVector:
        arr = np.asarray(modes, dtype=float).reshape(self.n_modes, self.mode_dim)
        return StateVector(arr, self.norm_tag)

    def with_modes(self, n_modes: int) -> "TruncatedModeSystem":
        return make_system(self.catalog_id, n_modes, dict(self.params))


def _unorm(u: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(u))))


def cutoff_xi(s, a: float = CUTOFF_A):
    """Odd C4 cutoff: identity on ``|s| <= a/4``, zero on ``|s| > a/2``.

    On the band in between, ``s * q(w)`` with ``w = (|s| - a/4)/(a/4)`` and
    ``q`` the degree-9 smoothstep falling from 1 to 0. A C2 join is not
    enough: the step-size controller underestimates errors across it.
    """
    if a <= 0:
        raise ValueError("cutoff needs a > 0")
    s_arr = np.asarray(s, dtype=float)
    mag = np.abs(s_arr)
    w = np.clip((mag - a / 4.0) / (a / 4.0), 0.0, 1.0)
    q = 1.0 - w**5 * (126.0 + w * (-420.0 + w * (540.0 + w * (-315.0 + 70.0 * w))))
    q = np.clip(q, 0.0, 1.0)  # rounding near w = 1 would flip the sign
    out = np.where(mag <= a / 4.0, s_arr, np.where(mag > a / 2.0, 0.0, s_arr * q))
    return float(out) if np.ndim(out) == 0 else out


# right-hand sides -----------------------------------------------------------


def _rhs_example1(k, z, u):
    with np.errstate(over="ignore"):
        rate = 1.0 / (1.0 + np.power(_unorm(u), k))
    return -rate[:, None] * z


def _s1_core(k, x, y, coupling):
    return -x + x * x * y * coupling - x**3 / (k * k)


def _rhs_s1(k, z, u):
    x, y = z[:, 0], z[:, 1]
    return np.stack([_s1_core(k, x, y, 1.0), -y], axis=1)


def _rhs_s2(k, z, u):
    x, y = z[:, 0], z[:, 1]
    return np.stack([_s1_core(k, x, y, _unorm(u)), -y], axis=1)


def _rhs_s1tilde(k, z, u):
    x, y = z[:, 0], z[:, 1]
    return np.stack([_s1_core(k, x, y, 1.0) / k, -y / k], axis=1)


def _rhs_s3(k, z, u):
    x, y = z[:, 0], z[:, 1]
    return np.stack([-cutoff_xi(x) + _s1_core(k, x, y, 1.0) / k, -cutoff_xi(y) - y / k], axis=1)


def _rhs_s4(k, z, u):
    x, y = z[:, 0], z[:, 1]
    return np.stack([-cutoff_xi(x) + _s1_core(k, x, y, _unorm(u)) / k, -cutoff_xi(y) - y / k], axis=1)


def _rhs_lindiag(k, z, u):
    return -z / k[:, None]


def _rhs_scalar_iss(k, z, u):
    return -z + u[0]


# oracles --------------------------------------------------------------------


def _riccati(x0, y0, t, coupling):
    denom = 1.0 - t * y0 * x0 * coupling
    if denom <= 0.0:
        raise SingularityError(f"comparison bound escapes before t={t}")
    return x0 / denom


def _oracle_example1(k, z0, u, t):
    try:
        rate = 1.0 / (1.0 + _unorm(u) ** k)
    except OverflowError:
        rate = 0.0
    return [(z0[0] * math.exp(-t * rate), "exact")]


def _oracle_s1(k, z0, u, t):
    return [(_riccati(z0[0], z0[1], t, 1.0), "upper bound"), (z0[1] * math.exp(-t), "exact")]


def _oracle_s2(k, z0, u, t):
    return [(_riccati(z0[0], z0[1], t, _unorm(u)), "upper bound"), (z0[1] * math.exp(-t), "exact")]


def _oracle_s1tilde(k, z0, u, t):
    return [(_riccati(z0[0], z0[1], t / k, 1.0), "upper bound"), (z0[1] * math.exp(-t / k), "exact")]


def _oracle_lindiag(k, z0, u, t):
    return [(z0[0] * math.exp(-t / k), "exact")]


def _oracle_scalar_iss(k, z0, u, t):
    e = math.exp(-t)
    return [(z0[0] * e + u[0] * (1.0 - e), "exact")]


_CATALOG = {
    # id: (mode_dim, norm_tag, rhs, oracle, single_mode)
    "Example1": (1, "l1", _rhs_example1, _oracle_example1, False),
    "S1": (2, "l2", _rhs_s1, _oracle_s1, False),
    "S2": (2, "l2", _rhs_s2, _oracle_s2, False),
    "S1tilde": (2, "l2", _rhs_s1tilde, _oracle_s1tilde, False),
    "S3": (2, "l2", _rhs_s3, None, False),
    "S4": (2, "l2", _rhs_s4, None, False),
    "LinDiagStrong": (1, "l2", _rhs_lindiag, _oracle_lindiag, False),
    "ScalarISS": (1, "l2", _rhs_scalar_iss, _oracle_scalar_iss, True),
}


def catalog(catalog_id: str, n_modes: int = 8) -> TruncatedModeSystem:
    """Built-in system ``catalog_id`` truncated to ``n_modes`` modes.

    ``ScalarISS`` is a single ODE and always has one mode.
    """
    try:
        dim, tag, rhs, oracle, single = _CATALOG[catalog_id]
    except KeyError:
        raise UnknownSystemError(f"unknown system id {catalog_id!r}; known: {', '.join(CATALOG_IDS)}") from None
    return TruncatedModeSystem(catalog_id, 1 if single else int(n_modes), dim, tag, rhs, 1, oracle)


# user-defined families ------------------------------------------------------

_USER_FAMILIES = ("zero", "growth", "linear_diag")


def user_system(family: str, n_modes: int = 1, **params) -> TruncatedModeSystem:
    """Testbed systems built from a named family.

    ``zero``: every mode constant. ``growth``: ``x' = rate * x``.
    ``linear_diag``: ``x_k' = -rate * k**(-power) * x_k + gain * u``.
    All take ``mode_dim`` and ``norm`` parameters.
    """
    dim = int(params.get("mode_dim", 1))
    tag = str(params.get("norm", "l2"))
    key = tuple(sorted(params.items()))
    if family == "zero":

        def rhs(k, z, u):
            return np.zeros_like(z)

        def oracle(k, z0, u, t):
            return [(float(c), "exact") for c in z0]

    elif family == "growth":
        rate = float(params.get("rate", 1.0))

        def rhs(k, z, u):
            return rate * z

        def oracle(k, z0, u, t):
            return [(float(c) * math.exp(rate * t), "exact") for c in z0]

    elif family == "linear_diag":
        rate = float(params.get("rate", 1.0))
        power = float(params.get("power", 0.0))
        gain = float(params.get("gain", 0.0))

        def rhs(k, z, u):
            return -(rate * k ** (-power))[:, None] * z + gain * u[0]

        def oracle(k, z0, u, t):
            lam = rate * k ** (-power)
            e = math.exp(-lam * t)
            return [(float(c) * e + gain * u[0] / lam * (1.0 - e), "exact") for c in z0]

    else:
        raise UnknownSystemError(f"unknown system family {family!r}; known: {', '.join(_USER_FAMILIES)}")
    return TruncatedModeSystem(f"user:{family}", int(n_modes), dim, tag, rhs, 1, oracle, params=key)


def make_system(system_id: str, n_modes: int = 8, params: Mapping | None = None) -> TruncatedModeSystem:
    """Catalog id, or ``user:<family>`` with family parameters."""
    if system_id.startswith("user:"):
        return user_system(system_id[5:], n_modes, **dict(params or {}))
    return catalog(system_id, n_modes)


# oracles and helpers ---------------------------------------------------------


def exact_solution(sys: TruncatedModeSystem, k: int, x0, u_const, t: float, component: int | None = None):
    """Closed-form mode state at time ``t`` under a constant input.

    With ``component=None`` every component needs an oracle and an
    :class:`OracleResult` is returned; otherwise ``(value, kind)`` for one
    component. Comparison bounds are tagged ``"upper bound"``.
    """
    if sys.oracle is None:
        raise NoOracleError(f"{sys.catalog_id} has no closed-form solution")
    z0 = np.asarray(x0, dtype=float).reshape(sys.mode_dim)
    u = np.asarray(u_const, dtype=float).reshape(-1)
    parts = sys.oracle(int(k), z0, u, float(t))
    if component is not None:
        if parts[component] is None:
            raise NoOracleError(f"{sys.catalog_id} has no oracle for component {component}")
        return parts[component]
    if any(p is None for p in parts):
        raise NoOracleError(f"{sys.catalog_id} lacks an oracle for some component")
    return OracleResult(np.array([p[0] for p in parts]), tuple(p[1] for p in parts))


def has_exact_flow(sys: TruncatedModeSystem) -> bool:
    """Whether every oracle component is exact (not a bound)."""
    if sys.oracle is None:
        return False
    try:
        parts = sys.oracle(1, np.zeros(sys.mode_dim), np.zeros(sys.input_dim), 0.0)
    except ArithmeticError:
        return False
    return all(p is not None and p[1] == "exact" for p in parts)


def rhs_lipschitz_estimate(sys, k: int, radius: float, u, rng: np.random.Generator, n_pairs: int = 200) -> float:
    """Largest finite-difference slope of the mode-k field on a box."""
    u = np.asarray(u, dtype=float).reshape(-1)
    a = rng.uniform(-radius, radius, size=(n_pairs, sys.mode_dim))
    b = a + rng.normal(scale=1e-6 * max(radius, 1e-12), size=a.shape)
    kk = np.full(n_pairs, float(k))
    fa, fb = sys.rhs(kk, a, u), sys.rhs(kk, b, u)
    num = np.linalg.norm(fa - fb, axis=1)
    den = np.linalg.norm(a - b, axis=1)
    return float(np.max(num / den))


def basis_state(sys: TruncatedModeSystem, k: int, value=None) -> StateVector:
    """State supported on mode ``k`` (one-based) with the given mode value."""
    if not 1 <= k <= sys.n_modes:
        raise ValueError(f"mode {k} outside 1..{sys.n_modes}")
    modes = np.zeros((sys.n_modes, sys.mode_dim))
    modes[k - 1] = 1.0 if value is None else np.asarray(value, dtype=float).reshape(sys.mode_dim)
    if value is None and sys.mode_dim > 1:
        modes[k - 1, 1:] = 0.0
    return StateVector(modes, sys.norm_tag)


def format_state(state: StateVector) -> str:
    """Text form listing the nonzero modes, e.g. ``{3: [1.0, 2.0]}``."""
    active = state.active_modes()
    if active.size == 0:
        return "zero"
    items = ", ".join(f"{i + 1}: [{', '.join(repr(float(v)) for v in state.modes[i])}]" for i in active)
    return "{" + items + "}"


_BASIS_RE = re.compile(r"^\s*basis\s*\((.*)\)\s*$")


def parse_state(text: str, sys: TruncatedModeSystem) -> StateVector:
    """Parse ``zero``, ``basis(k)``, ``basis(k, v1, ...)`` or ``{k: [v, ...], ...}``."""
    text = text.strip()
    if text == "zero":
        return sys.zero_state()
    m = _BASIS_RE.match(text)
    try:
        if m:
            args = [a.strip() for a in m.group(1).split(",") if a.strip()]
            k = int(args[0])
            vals = [float(ast.literal_eval(a)) for a in args[1:]]
            return basis_state(sys, k, vals if vals else None)
        data = ast.literal_eval(text)
    except (SyntaxError, ValueError, IndexError) as exc:
        raise ValueError(f"cannot parse state {text!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"cannot parse state {text!r}")
    modes = np.zeros((sys.n_modes, sys.mode_dim))
    for k, v in data.items():
        if not 1 <= int(k) <= sys.n_modes:
            raise ValueError(f"mode {k} outside 1..{sys.n_modes}")
        modes[int(k) - 1] = np.asarray(v, dtype=float).reshape(sys.mode_dim)
    return StateVector(modes, sys.norm_tag)
