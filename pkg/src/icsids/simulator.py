"""Two-tank ICS plant with false-data-injection and denial-of-service adversaries.

Plant (per step, levels clamped at 0)::

    x1' = x1 + dt * (u - a1*sqrt(x1)) + w1
    x2' = x2 + dt * (a1*sqrt(x1) - a2*sqrt(x2)) + w2
    y   = (x1, x2, a2*sqrt(x2)) + v

``w`` is Gaussian truncated at 3 sigma, ``v`` is Laplace (heavy tailed).
FDI adds a constant per-episode bias on ``f`` randomly chosen sensors. DoS
stacks the last ``d + 1`` observations and drops each slot according to a
Bernoulli or two-state Markov loss process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .dataset import Dataset
from .errors import ConfigParse, DimensionMismatch, InvalidF, OverlappingEpisodes

NONE, FDI, DOS = "none", "fdi", "dos"
ZEROING, HOLD_LAST = "zeroing", "hold_last"
BERNOULLI, MARKOV = "bernoulli", "markov"
SENSOR_NAMES = ("level1", "level2", "outflow")


@dataclass(frozen=True)
class PlantParams:
    a1: float = 0.5
    a2: float = 0.5
    dt: float = 0.1
    process_sigma: float = 0.02
    meas_scale: tuple[float, float, float] = (0.05, 0.05, 0.01)
    level_range: float = 10.0

    @property
    def sensor_range(self) -> np.ndarray:
        """Nominal span of each sensor, used to size FDI biases."""
        return np.array([self.level_range, self.level_range, self.a2 * np.sqrt(self.level_range)])


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    k: int
    label: int = 0
    attack_kind: str = NONE


def _truncated_normal(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    out = rng.normal(0.0, sigma, size)
    bad = np.abs(out) > 3 * sigma
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > 3 * sigma
    return out


def step_plant(
    state: PlantState, u: float, rng: np.random.Generator | None = None, params: PlantParams = PlantParams()
) -> tuple[PlantState, Measurement]:
    """Advance one step. With ``rng=None`` the plant is noise-free."""
    x1, x2 = (max(float(v), 0.0) for v in state.x)
    u = max(float(u), 0.0)
    q1 = params.a1 * np.sqrt(x1)
    q2 = params.a2 * np.sqrt(x2)
    nx = np.array([x1 + params.dt * (u - q1), x2 + params.dt * (q1 - q2)])
    if rng is not None and params.process_sigma > 0:
        nx += _truncated_normal(rng, params.process_sigma, 2)
    nx = np.maximum(nx, 0.0)
    y = np.array([nx[0], nx[1], params.a2 * np.sqrt(nx[1])])
    if rng is not None:
        y = y + rng.laplace(0.0, 1.0, 3) * np.asarray(params.meas_scale)
    k = state.k + 1
    return PlantState(nx, k), Measurement(y, k)


# -- adversary ----------------------------------------------------------------


@dataclass(frozen=True)
class SensorSelection:
    alpha: np.ndarray

    @property
    def f(self) -> int:
        return int(self.alpha.sum())


def sample_alpha(m: int, f: int, rng: np.random.Generator) -> SensorSelection:
    """Uniformly random binary vector of length ``m`` with exactly ``f`` ones."""
    if not 0 < f <= m:
        raise InvalidF(f"need 0 < f <= m, got f={f}, m={m}")
    alpha = np.zeros(m, dtype=np.int64)
    alpha[rng.choice(m, size=f, replace=False)] = 1
    return SensorSelection(alpha)


def apply_fdi(y, sel: SensorSelection | np.ndarray, bias) -> np.ndarray:
    """Observed measurement ``y + alpha * bias`` (element-wise)."""
    alpha = sel.alpha if isinstance(sel, SensorSelection) else np.asarray(sel)
    y = np.asarray(y, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if not (y.shape == alpha.shape == bias.shape):
        raise DimensionMismatch(f"y {y.shape}, alpha {alpha.shape}, bias {bias.shape}")
    return y + alpha * bias


@dataclass(frozen=True)
class DosProcess:
    kind: str = BERNOULLI
    p_loss: float = 0.5
    p_good_to_bad: float = 0.3
    p_bad_to_good: float = 0.3
    depth: int = 2
    mode: str = ZEROING

    def __post_init__(self):
        for p in (self.p_loss, self.p_good_to_bad, self.p_bad_to_good):
            if not 0.0 <= p <= 1.0:
                raise ValueError("DoS probabilities must lie in [0, 1]")
        if self.depth < 0:
            raise ValueError("hold depth must be >= 0")
        if self.kind not in (BERNOULLI, MARKOV) or self.mode not in (ZEROING, HOLD_LAST):
            raise ValueError(f"unknown DoS kind/mode {self.kind}/{self.mode}")

    @property
    def stationary_loss(self) -> float:
        if self.kind == BERNOULLI:
            return self.p_loss
        s = self.p_good_to_bad + self.p_bad_to_good
        return self.p_good_to_bad / s if s > 0 else 0.0


def stack_measurements(mu, history, mode: str = ZEROING, last_delivered=None) -> np.ndarray:
    """Flattened stack ``[mu(1) z_k; mu(2) z_(k-1); ...; mu(d+1) z_(k-d)]``.

    ``history`` rows are newest first. In ``hold_last`` mode a dropped slot
    repeats ``last_delivered`` for that slot instead of zero.
    """
    H = np.asarray(history, dtype=np.float64)
    if H.ndim == 1:
        H = H.reshape(-1, 1)
    mu = np.asarray(mu).reshape(-1)
    if mu.size != H.shape[0]:
        raise DimensionMismatch(f"{mu.size} delivery flags for {H.shape[0]} history rows")
    keep = mu[:, None].astype(bool)
    if mode == HOLD_LAST:
        fallback = np.zeros_like(H) if last_delivered is None else np.asarray(last_delivered, dtype=np.float64).reshape(H.shape)
        out = np.where(keep, H, fallback)
    else:
        out = np.where(keep, H, 0.0)
    return out.reshape(-1)


@dataclass
class DosChannel:
    """Stateful delivery process: one Markov chain (or coin) per stacked slot."""

    proc: DosProcess
    m: int
    bad: np.ndarray = field(init=False)
    last: np.ndarray = field(init=False)

    def __post_init__(self):
        self.bad = np.zeros(self.proc.depth + 1, dtype=bool)
        self.last = np.zeros((self.proc.depth + 1, self.m))

    def sample_mu(self, rng: np.random.Generator) -> np.ndarray:
        n = self.proc.depth + 1
        if self.proc.kind == BERNOULLI:
            return (rng.random(n) >= self.proc.p_loss).astype(np.int64)
        r = rng.random(n)
        self.bad = np.where(self.bad, r >= self.proc.p_bad_to_good, r < self.proc.p_good_to_bad)
        return (~self.bad).astype(np.int64)

    def step(self, history, rng: np.random.Generator, attacked: bool = True) -> tuple[np.ndarray, np.ndarray]:
        H = np.asarray(history, dtype=np.float64).reshape(self.proc.depth + 1, self.m)
        mu = self.sample_mu(rng) if attacked else np.ones(self.proc.depth + 1, dtype=np.int64)
        zbar = stack_measurements(mu, H, self.proc.mode, self.last)
        self.last = zbar.reshape(H.shape).copy()
        return mu, zbar


def step_dos(proc: DosProcess, history, rng: np.random.Generator, channel: DosChannel | None = None):
    """One DoS step: sample delivery flags and return ``(mu, stacked observation)``."""
    H = np.asarray(history, dtype=np.float64)
    m = H.shape[1] if H.ndim == 2 else 1
    channel = channel if channel is not None else DosChannel(proc, m)
    return channel.step(H, rng)


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class Episode:
    start: int
    end: int
    kind: str

    def __post_init__(self):
        if self.kind not in (FDI, DOS):
            raise ConfigParse(f"episode kind must be 'fdi' or 'dos', got {self.kind!r}")
        if not 0 <= self.start < self.end:
            raise ConfigParse(f"episode [{self.start}, {self.end}) is empty or negative")


@dataclass(frozen=True)
class AttackScenario:
    episodes: tuple[Episode, ...] = ()
    plant: PlantParams = PlantParams()
    dos: DosProcess = DosProcess()
    fdi_f: int = 2
    fdi_bias: tuple[float, float] = (0.1, 0.5)
    inflow: tuple[float, float] = (0.5, 1.5)
    inflow_hold: int = 250
    stack_dos: bool = True
    horizon: int = 20000
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        eps = sorted(self.episodes, key=lambda e: e.start)
        for a, b in zip(eps, eps[1:]):
            if b.start < a.end:
                raise OverlappingEpisodes(f"episodes [{a.start},{a.end}) and [{b.start},{b.end}) overlap")
        object.__setattr__(self, "episodes", tuple(eps))


def load_scenario(path) -> AttackScenario:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigParse(f"{path}: {exc}") from None
    return scenario_from_dict(raw or {})


def scenario_from_dict(raw: dict) -> AttackScenario:
    known = {"name", "seed", "horizon", "plant", "inflow", "fdi", "dos", "features", "episodes"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigParse(f"unknown scenario keys {sorted(unknown)}")
    try:
        plant = dict(raw.get("plant", {}))
        if "meas_scale" in plant:
            plant["meas_scale"] = tuple(float(v) for v in plant["meas_scale"])
        inflow = raw.get("inflow", {})
        fdi = raw.get("fdi", {})
        episodes = tuple(Episode(int(s), int(e), str(k).lower()) for s, e, k in raw.get("episodes", []))
        return AttackScenario(
            episodes=episodes,
            plant=PlantParams(**plant),
            dos=DosProcess(**raw.get("dos", {})),
            fdi_f=int(fdi.get("f", 2)),
            fdi_bias=(float(fdi.get("bias_low", 0.1)), float(fdi.get("bias_high", 0.5))),
            inflow=(float(inflow.get("low", 0.5)), float(inflow.get("high", 1.5))),
            inflow_hold=int(inflow.get("hold", 250)),
            stack_dos=bool(raw.get("features", {}).get("stack_dos", True)),
            horizon=int(raw.get("horizon", 20000)),
            seed=int(raw.get("seed", 0)),
            name=str(raw.get("name", "scenario")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigParse):
            raise
        raise ConfigParse(str(exc)) from None


def feature_names(scenario: AttackScenario) -> tuple[str, ...]:
    if not scenario.stack_dos:
        return SENSOR_NAMES
    lags = ["k"] + [f"k-{j}" for j in range(1, scenario.dos.depth + 1)]
    return tuple(f"{s}[{lag}]" for lag in lags for s in SENSOR_NAMES)


@dataclass
class Trace:
    """Full simulation record; ``dataset`` is what the detector sees."""

    dataset: Dataset
    kinds: np.ndarray
    states: np.ndarray
    mu: np.ndarray


def simulate(scenario: AttackScenario, horizon: int | None = None, seed: int | None = None) -> Trace:
    horizon = scenario.horizon if horizon is None else horizon
    seed = scenario.seed if seed is None else seed
    if scenario.episodes and horizon <= max(e.end for e in scenario.episodes) - 1:
        raise ConfigParse(f"horizon {horizon} does not cover the last episode")
    plant_rng, inflow_rng, fdi_rng, dos_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )
    p = scenario.plant
    m, d = 3, scenario.dos.depth
    kinds = np.full(horizon, NONE, dtype=object)
    biases = np.zeros((horizon, m))
    for ep in scenario.episodes:
        kinds[ep.start:ep.end] = ep.kind
        if ep.kind == FDI:
            sel = sample_alpha(m, scenario.fdi_f, fdi_rng)
            mag = fdi_rng.uniform(*scenario.fdi_bias, size=m) * fdi_rng.choice([-1.0, 1.0], size=m)
            biases[ep.start:ep.end] = sel.alpha * mag * p.sensor_range

    lo, hi = scenario.inflow
    u = inflow_rng.uniform(lo, hi)
    x0 = np.array([(u / p.a1) ** 2, (u / p.a2) ** 2])
    state = PlantState(x0, -1)
    channel = DosChannel(scenario.dos, m)
    history = np.zeros((d + 1, m))
    width = (d + 1) * m if scenario.stack_dos else m
    X = np.zeros((horizon, width))
    states = np.zeros((horizon, 2))
    mus = np.ones((horizon, d + 1), dtype=np.int64)
    for k in range(horizon):
        if k % scenario.inflow_hold == 0 and k:
            u = inflow_rng.uniform(lo, hi)
        state, meas = step_plant(state, u, plant_rng, p)
        obs = apply_fdi(meas.y, np.ones(m), biases[k]) if kinds[k] == FDI else meas.y
        history = np.vstack([obs, history[:-1]])
        mu, zbar = channel.step(history, dos_rng, attacked=kinds[k] == DOS)
        X[k] = zbar if scenario.stack_dos else zbar[:m]
        states[k] = state.x
        mus[k] = mu
    labels = (kinds != NONE).astype(np.int64)
    return Trace(Dataset(X, labels, feature_names(scenario)), kinds, states, mus)


def generate_dataset(scenario: AttackScenario, horizon: int | None = None, seed: int | None = None) -> Dataset:
    """Labelled telemetry: one row per time step, Attack iff inside an episode."""
    return simulate(scenario, horizon, seed).dataset


def reference_scenario_path(name: str = "simics-a") -> Path:
    """Committed scenario files live in ``scenarios/`` at the repository root."""
    here = Path(__file__).resolve()
    for parent in here.parents:
        cand = parent / "scenarios" / f"{name}.yaml"
        if cand.exists():
            return cand
    raise FileNotFoundError(f"scenario {name!r} not found")


def make_episodes(
    horizon: int, attack_fraction: float, episode_len: int, kinds: Sequence[str], rng: np.random.Generator
) -> list[tuple[int, int, str]]:
    """Evenly spread, non-overlapping episodes covering ``attack_fraction`` of the horizon.

    Used to author scenario files; each episode starts at a jittered offset
    inside its own slot so spacing is irregular but never overlapping.
    """
    n_ep = max(1, round(horizon * attack_fraction / episode_len))
    slot = horizon // n_ep
    if slot <= episode_len:
        raise ValueError("episodes do not fit in the horizon")
    out = []
    for i in range(n_ep):
        off = int(rng.integers(0, slot - episode_len))
        s = i * slot + off
        out.append((s, s + episode_len, kinds[i % len(kinds)]))
    return out
