"""Benchmark dynamical systems and seeded trajectory generation."""

from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import comb

from evolop._rng import make_rng
from evolop.exceptions import ConfigError, CorruptArtifactError, SimulationError

BLOWUP = 1e12

_REGISTRY = {}


def _register(name):
    def deco(cls):
        cls.name = name
        _REGISTRY[name] = cls
        return cls

    return deco


class SystemSpec:
    """Base class. Subclasses are frozen dataclasses registered under ``name``."""

    name = "system"
    stochastic = False
    is_map = False

    def to_dict(self):
        out = {"name": self.name}
        for key, value in asdict(self).items():
            out[key] = np.asarray(value).tolist() if isinstance(value, (np.ndarray, list, tuple)) else value
        return out

    @staticmethod
    def from_dict(data):
        if not isinstance(data, dict) or "name" not in data:
            raise ConfigError(f"system config must be an object with a 'name' key, got {data!r}")
        name = data["name"]
        if name not in _REGISTRY:
            raise ConfigError(f"unknown system {name!r}; expected one of {sorted(_REGISTRY)}")
        kwargs = {k: v for k, v in data.items() if k != "name"}
        try:
            return _REGISTRY[name](**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {name}: {exc}") from exc

    def check_state(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.size != self.dim or not np.all(np.isfinite(x0)):
            raise ConfigError(f"{self.name} needs a finite initial state of dimension {self.dim}, got {x0}")
        return x0

    @property
    def row_dt(self):
        """Time between stored rows (None for maps)."""
        return None


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive, got {value!r}")


def _substeps(value):
    if int(value) != value or value < 1:
        raise ConfigError(f"substeps must be a positive integer, got {value!r}")


def _unit_state(spec, x0):
    x0 = SystemSpec.check_state(spec, x0)
    if not 0 <= x0[0] <= 1:
        raise ConfigError(f"{spec.name} state must lie in [0, 1], got {x0[0]}")
    return x0


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@_register("lorenz63")
@dataclass(frozen=True)
class Lorenz63(SystemSpec):
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    substeps: int = 1

    def __post_init__(self):
        _positive("dt", self.dt)
        _substeps(self.substeps)

    dim = 3

    @property
    def row_dt(self):
        return self.dt * self.substeps

    def vector_field(self, x):
        return np.array(
            [
                self.sigma * (x[1] - x[0]),
                x[0] * (self.rho - x[2]) - x[1],
                x[0] * x[1] - self.beta * x[2],
            ]
        )


@_register("duffing")
@dataclass(frozen=True)
class Duffing(SystemSpec):
    """Forced Duffing oscillator in the autonomous state (x, v, phase)."""

    alpha: float = -1.0
    beta_cubic: float = 1.0
    delta: float = 0.3
    gamma_force: float = 0.3
    omega: float = 1.2
    dt: float = 0.01
    substeps: int = 1

    def __post_init__(self):
        _positive("dt", self.dt)
        _substeps(self.substeps)

    dim = 3

    @property
    def row_dt(self):
        return self.dt * self.substeps

    def check_state(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.size == 2:
            x0 = np.append(x0, 0.0)
        return super().check_state(x0)

    def vector_field(self, s):
        x, v, phase = s
        return np.array(
            [
                v,
                -self.delta * v - self.alpha * x - self.beta_cubic * x**3 + self.gamma_force * math.cos(phase),
                self.omega,
            ]
        )


@_register("logistic_map")
@dataclass(frozen=True)
class LogisticMap(SystemSpec):
    r: float = 4.0
    is_map = True
    dim = 1

    def __post_init__(self):
        if not 0 <= self.r <= 4:
            raise ConfigError(f"logistic parameter r must be in [0, 4], got {self.r}")

    def check_state(self, x0):
        return _unit_state(self, x0)

    def step(self, x):
        return self.r * x * (1.0 - x)


@_register("noisy_logistic_map")
@dataclass(frozen=True)
class NoisyLogisticMap(SystemSpec):
    """``x' = (4 x (1 - x) + xi) mod 1``, ``xi`` with density proportional to ``cos^N(pi xi)``."""

    N: int = 20
    is_map = True
    stochastic = True
    dim = 1

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0 or self.N % 2:
            raise ConfigError(f"noise order N must be an even nonnegative integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    def check_state(self, x0):
        return _unit_state(self, x0)

    def step(self, x):
        return 4.0 * x * (1.0 - x)

    @property
    def harmonic_weights(self):
        """``c_j``, j = 0..N/2: noise density = c_0 + 2 sum_j c_j cos(2 pi j xi)."""
        return harmonic_weights(self.N)


def harmonic_weights(N):
    half = N // 2
    return np.array([comb(N, half + j, exact=True) / comb(N, half, exact=True) for j in range(half + 1)])


def noise_cdf(N, z):
    """CDF of the cos^N noise on [-1/2, 1/2], evaluated in closed form."""
    c = harmonic_weights(N)
    z = np.asarray(z, dtype=float)
    out = c[0] * (z + 0.5)
    for j in range(1, c.size):
        out = out + 2 * c[j] * np.sin(2 * np.pi * j * z) / (2 * np.pi * j)
    return out


@lru_cache(maxsize=16)
def noise_quantile(N, knots=2048):
    """Monotone (PCHIP) spline of the inverse noise CDF built on ``knots`` points."""
    z = np.linspace(-0.5, 0.5, knots)
    u = noise_cdf(N, z)
    u[0], u[-1] = 0.0, 1.0
    u = np.maximum.accumulate(u)
    keep = np.concatenate([[True], np.diff(u) > 0])
    return PchipInterpolator(u[keep], z[keep])


@_register("linear_system")
@dataclass(frozen=True)
class LinearSystem(SystemSpec):
    A: list = field(default_factory=lambda: [[0.9, 0.0], [0.0, 0.5]])
    noise_std: float = 0.0
    stochastic = True

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
            raise ConfigError(f"A must be a finite square matrix, got shape {A.shape}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        object.__setattr__(self, "A", A)

    @property
    def dim(self):
        return self.A.shape[0]


@_register("regime_switching")
@dataclass(frozen=True)
class RegimeSwitching(SystemSpec):
    """Linear dynamics whose matrix is picked by a hidden Markov chain."""

    A_list: list = field(default_factory=lambda: [[[0.95, 0.0], [0.0, 0.5]], [[0.5, 0.0], [0.0, 0.95]]])
    transition: list = field(default_factory=lambda: [[0.98, 0.02], [0.02, 0.98]])
    noise_std: float = 0.05
    emit_regime: bool = False
    initial_regime: int = 0
    stochastic = True

    def __post_init__(self):
        A = np.asarray(self.A_list, dtype=float)
        P = np.asarray(self.transition, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ConfigError(f"A_list must be a list of square matrices, got shape {A.shape}")
        if P.shape != (A.shape[0], A.shape[0]) or np.any(P < 0):
            raise ConfigError("transition must be a nonnegative square matrix matching A_list")
        if np.any(np.abs(P.sum(axis=1) - 1) > 1e-12):
            raise ConfigError("transition rows must sum to 1 within 1e-12")
        if not 0 <= self.initial_regime < A.shape[0]:
            raise ConfigError("initial_regime out of range")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        object.__setattr__(self, "A_list", A)
        object.__setattr__(self, "transition", P)

    @property
    def dim(self):
        return self.A_list.shape[1]


@_register("langevin_quadwell")
@dataclass(frozen=True)
class LangevinQuadWell(SystemSpec):
    """Overdamped Langevin dynamics ``dX = -V'(X) dt + sqrt(2/beta) dW`` on [lo, hi].

    Euler-Maruyama steps that would leave the domain are rejected (the state
    is kept), mirroring the no-flux boundary of the reference generator.
    """

    beta_inv_temp: float = 1.0
    dt: float = 1e-4
    substeps: int = 1
    lo: float = -1.0
    hi: float = 1.0
    stochastic = True
    dim = 1

    def __post_init__(self):
        _positive("beta_inv_temp", self.beta_inv_temp)
        _positive("dt", self.dt)
        _substeps(self.substeps)
        if not self.lo < self.hi:
            raise ConfigError("lo must be smaller than hi")

    @property
    def row_dt(self):
        return self.dt * self.substeps

    def check_state(self, x0):
        x0 = super().check_state(x0)
        if not self.lo <= x0[0] <= self.hi:
            raise ConfigError(f"initial state {x0[0]} outside [{self.lo}, {self.hi}]")
        return x0


def quadwell_potential(x):
    x = np.asarray(x, dtype=float)
    return 4.0 * (
        x**8
        + 0.8 * np.exp(-80.0 * x**2)
        + 0.2 * np.exp(-80.0 * (x - 0.5) ** 2)
        + 0.5 * np.exp(-40.0 * (x + 0.5) ** 2)
    )


def quadwell_force(x):
    """``-V'(x)`` for a python float."""
    e1 = math.exp(-80.0 * x * x)
    e2 = math.exp(-80.0 * (x - 0.5) ** 2)
    e3 = math.exp(-40.0 * (x + 0.5) ** 2)
    return -4.0 * (8.0 * x**7 - 128.0 * x * e1 - 32.0 * (x - 0.5) * e2 - 40.0 * (x + 0.5) * e3)


@dataclass(frozen=True)
class Trajectory:
    values: np.ndarray
    spec: SystemSpec
    seed: int
    x0: np.ndarray
    dt: float | None = None
    regimes: np.ndarray | None = None

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def times(self):
        idx = np.arange(self.T, dtype=float)
        return idx if self.dt is None else idx * self.dt

    def manifest(self):
        return {
            "system": self.spec.to_dict(),
            "seed": self.seed,
            "x0": np.asarray(self.x0).tolist(),
            "T": self.T,
            "d": self.d,
            "dt": self.dt,
        }


def simulate(spec: SystemSpec, x0, T, seed=0) -> Trajectory:
    """Generate ``T`` rows (the first is ``x0``).

    Deterministic systems ignore ``seed``; stochastic ones draw all noise up
    front from the library generator.
    """
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T}")
    T = int(T)
    x0 = spec.check_state(x0)
    out = np.empty((T, spec.dim))
    out[0] = x0
    regimes = None
    rng = make_rng(seed)

    def guard(k, x):
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
            raise SimulationError(f"{spec.name} diverged at step {k}", step=k)

    if isinstance(spec, (Lorenz63, Duffing)):
        x = x0.copy()
        for k in range(1, T):
            for _ in range(spec.substeps):
                x = _rk4(spec.vector_field, x, spec.dt)
            guard(k, x)
            if isinstance(spec, Duffing):
                x[2] = math.fmod(x[2], 2 * math.pi)
            out[k] = x
    elif isinstance(spec, LogisticMap):
        x = float(x0[0])
        for k in range(1, T):
            x = spec.step(x)
            out[k, 0] = x
    elif isinstance(spec, NoisyLogisticMap):
        xi = noise_quantile(spec.N)(rng.uniform(size=T - 1)) if spec.N > 0 else rng.uniform(-0.5, 0.5, T - 1)
        x = float(x0[0])
        for k in range(1, T):
            x = (spec.step(x) + float(xi[k - 1])) % 1.0
            out[k, 0] = x
    elif isinstance(spec, LinearSystem):
        noise = spec.noise_std * rng.standard_normal((T - 1, spec.dim))
        x = x0
        for k in range(1, T):
            x = spec.A @ x + noise[k - 1]
            guard(k, x)
            out[k] = x
    elif isinstance(spec, RegimeSwitching):
        n_reg = spec.A_list.shape[0]
        u = rng.uniform(size=T - 1)
        noise = spec.noise_std * rng.standard_normal((T - 1, spec.dim))
        cum = np.cumsum(spec.transition, axis=1)
        regimes = np.empty(T, dtype=np.int64)
        s = spec.initial_regime
        regimes[0] = s
        x = x0
        for k in range(1, T):
            x = spec.A_list[s] @ x + noise[k - 1]
            guard(k, x)
            out[k] = x
            s = min(int(np.searchsorted(cum[s], u[k - 1], side="right")), n_reg - 1)
            regimes[k] = s
    elif isinstance(spec, LangevinQuadWell):
        n_inner = (T - 1) * spec.substeps
        z = rng.standard_normal(n_inner).tolist()
        scale = math.sqrt(2.0 * spec.dt / spec.beta_inv_temp)
        dt, lo, hi, sub = spec.dt, spec.lo, spec.hi, spec.substeps
        x = float(x0[0])
        i = 0
        for k in range(1, T):
            for _ in range(sub):
                proposal = x + quadwell_force(x) * dt + scale * z[i]
                i += 1
                if lo <= proposal <= hi:
                    x = proposal
            out[k, 0] = x
    else:
        raise ConfigError(f"cannot simulate {type(spec).__name__}")

    if isinstance(spec, RegimeSwitching) and spec.emit_regime:
        out = np.column_stack([out, regimes.astype(float)])
    return Trajectory(out, spec, int(seed), x0, spec.row_dt, regimes)


# -- file formats -----------------------------------------------------------

TRAJ_MAGIC = b"EVTR"
TRAJ_VERSION = 1
_TRAJ_HEADER = struct.Struct("<4sIQQ")


def write_csv(values, path, dt=None):
    values = np.asarray(values, dtype=float)
    t = np.arange(values.shape[0], dtype=float) * (1.0 if dt is None else dt)
    header = ",".join(["t"] + [f"x{i}" for i in range(values.shape[1])])
    np.savetxt(path, np.column_stack([t, values]), delimiter=",", header=header, comments="", fmt="%.17g")


def read_csv(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise CorruptArtifactError(f"cannot read trajectory CSV {path}: {exc}") from exc
    if data.shape[1] < 2:
        raise CorruptArtifactError(f"trajectory CSV {path} has no state columns")
    return data[:, 1:]


def write_binary(values, path):
    """Little-endian: magic ``EVTR``, u32 version, u64 T, u64 d, f64 row-major payload."""
    values = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_TRAJ_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, values.shape[0], values.shape[1]))
        fh.write(values.tobytes(order="C"))


def read_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _TRAJ_HEADER.size:
        raise CorruptArtifactError(f"{path}: truncated header")
    magic, version, T, d = _TRAJ_HEADER.unpack_from(raw)
    if magic != TRAJ_MAGIC or version != TRAJ_VERSION:
        raise CorruptArtifactError(f"{path}: not a version-{TRAJ_VERSION} trajectory file")
    payload = raw[_TRAJ_HEADER.size :]
    if len(payload) != 8 * T * d:
        raise CorruptArtifactError(f"{path}: payload has {len(payload)} bytes, expected {8 * T * d}")
    return np.frombuffer(payload, dtype="<f8").reshape(T, d).astype(float)


def read_trajectory(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_binary(path) if head == TRAJ_MAGIC else read_csv(path)
