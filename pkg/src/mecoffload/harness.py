"""Experiment loops: training, evaluation, parameter sweeps, CSV and SVG output."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .agents import DdpgAgent, DdpgAgentConfig, DqnAgent, DqnAgentConfig
from .baselines import BaselineKind, BaselinePolicy
from .config import ConfigError, NetworkConfig, load_toml, network_from_mapping
from .env import MecEnv
from .ratemodel import ContractError, DelayReport
from .solver import SolverSettings, solve_assignment

AGENT_KINDS = ("dqn", "ddpg") + tuple(k.value for k in BaselineKind)

# seed stream ids; train and eval never share one
STREAM_TRAIN_ENV = 0
STREAM_EVAL_ENV = 1
STREAM_AGENT = 2
STREAM_TRAIN_POLICY = 3
STREAM_EVAL_POLICY = 4

METRICS_COLUMNS = ("episode", "mean_delay", "mean_reward", "exploration", "wall_time")


def derive_seed(base: int, stream: int, index: int = 0) -> int:
    """64-bit seed for (stream, index) drawn from the base seed's SeedSequence tree."""
    state = np.random.SeedSequence(int(base), spawn_key=(stream, index)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


# --- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    agent: str = "dqn"
    dqn: DqnAgentConfig = field(default_factory=DqnAgentConfig)
    ddpg: DdpgAgentConfig = field(default_factory=DdpgAgentConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    episodes: int = 300
    slots: int = 200
    seed: int = 0
    eval_episodes: int = 20
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"agent must be one of {AGENT_KINDS}, got {self.agent!r}")
        for name in ("episodes", "slots", "eval_episodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("agent", "episodes", "slots", "seed", "eval_episodes", "out_dir")}
        out["network"] = self.network.to_dict()
        for name in ("dqn", "ddpg", "solver"):
            out[name] = asdict(getattr(self, name))
        return out


_EXPERIMENT_KEYS = ("agent", "episodes", "slots", "seed", "eval_episodes", "out_dir")


def _dataclass_from(cls, data: Mapping[str, Any], section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def experiment_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    tables = {"network", "experiment", "dqn", "ddpg", "solver"}
    unknown = set(data) - tables
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(sorted(unknown))}")
    exp = dict(data.get("experiment", {}))
    bad = set(exp) - set(_EXPERIMENT_KEYS)
    if bad:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(bad))}")
    try:
        return ExperimentConfig(
            network=network_from_mapping(data.get("network", {})),
            dqn=_dataclass_from(DqnAgentConfig, data.get("dqn", {}), "dqn"),
            ddpg=_dataclass_from(DdpgAgentConfig, data.get("ddpg", {}), "ddpg"),
            solver=_dataclass_from(SolverSettings, data.get("solver", {}), "solver"),
            **exp,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_experiment(path: str | Path | None) -> ExperimentConfig:
    return ExperimentConfig() if path is None else experiment_from_mapping(load_toml(path))


# --- policies ---------------------------------------------------------------------

class BestAssignmentPolicy:
    """Reference only: solver on every assignment with CURRENT gains, keeps the best."""

    kind = "best_assignment"

    def __init__(self, settings: SolverSettings = SolverSettings()):
        self.settings = settings

    def report(self, obs, gains_now, config: NetworkConfig) -> DelayReport:
        best = None
        for a in itertools.product(range(config.M), repeat=config.K):
            rep = solve_assignment(np.array(a), gains_now, obs.C_now, config, self.settings)[1]
            if best is None or rep.slot_delay < best.slot_delay:
                best = rep
        return best


def make_agent(config: ExperimentConfig):
    seed = derive_seed(config.seed, STREAM_AGENT)
    if config.agent == "dqn":
        return DqnAgent(config.network, config.dqn, seed, config.solver)
    if config.agent == "ddpg":
        return DdpgAgent(config.network, config.ddpg, seed)
    return BaselinePolicy(config.agent, seed)


def load_policy(ref: str, config: ExperimentConfig):
    """Baseline name, ``best_assignment``, or a checkpoint directory written by training."""
    if ref in {k.value for k in BaselineKind}:
        return BaselinePolicy(ref)
    if ref == "best_assignment":
        return BestAssignmentPolicy(config.solver)
    d = Path(ref)
    meta_path = d / "agent.json"
    if not meta_path.is_file():
        raise ConfigError(f"{ref!r} is neither a baseline name nor a checkpoint directory")
    meta = json.loads(meta_path.read_text())
    kind = meta.get("kind")
    if kind == "dqn":
        agent = DqnAgent(config.network, _dataclass_from(DqnAgentConfig, meta["agent_config"], "dqn"),
                         solver_settings=config.solver)
    elif kind == "ddpg":
        agent = DdpgAgent(config.network, _dataclass_from(DdpgAgentConfig, meta["agent_config"], "ddpg"))
    else:
        raise ConfigError(f"{meta_path}: unknown agent kind {kind!r}")
    agent.load(d)
    return agent


def policy_name(policy) -> str:
    return getattr(policy, "kind", type(policy).__name__)


# --- training -----------------------------------------------------------------------

@dataclass
class MetricsRow:
    episode: int
    mean_delay: float
    mean_reward: float
    exploration: float
    wall_time: float


@dataclass
class TrainingResult:
    rows: list[MetricsRow]
    agent: Any
    metrics_path: Path | None
    checkpoint_dir: Path | None


def _ensure_writable(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {directory} is not writable: {exc}") from exc


def run_training(config: ExperimentConfig, write: bool = True, progress=None) -> TrainingResult:
    """Train ``config.agent`` for N episodes of T slots; the env is re-initialised every episode."""
    out = Path(config.out_dir)
    if write:
        _ensure_writable(out)
    agent = make_agent(config)
    rows: list[MetricsRow] = []
    start = time.perf_counter()
    for ep in range(config.episodes):
        env = MecEnv(config.network, derive_seed(config.seed, STREAM_TRAIN_ENV, ep))
        if isinstance(agent, BaselinePolicy):
            agent.reseed(derive_seed(config.seed, STREAM_TRAIN_POLICY, ep))
        delays = np.empty(config.slots)
        rewards = np.empty(config.slots)
        for t in range(config.slots):
            if isinstance(agent, BaselinePolicy):
                rep = agent.report(env.observe(), env.current_gains(), config.network)
                env.advance()
            else:
                rep = agent.train_slot(env)
            delays[t], rewards[t] = rep.slot_delay, rep.reward
        row = MetricsRow(ep, float(delays.mean()), float(rewards.mean()),
                         float(getattr(agent, "exploration", 0.0)), time.perf_counter() - start)
        rows.append(row)
        if progress is not None:
            progress(row)
    metrics_path = ckpt = None
    if write:
        metrics_path = out / "metrics.csv"
        emit_csv([asdict(r) for r in rows], metrics_path)
        (out / "experiment.json").write_text(json.dumps(config.to_dict(), indent=2, default=list))
        if not isinstance(agent, BaselinePolicy):
            ckpt = out / "checkpoint"
            agent.save(ckpt)
            acfg = config.dqn if agent.kind == "dqn" else config.ddpg
            (ckpt / "agent.json").write_text(json.dumps(
                {"kind": agent.kind, "agent_config": asdict(acfg), "network": config.network.to_dict()},
                indent=2, default=list))
    return TrainingResult(rows, agent, metrics_path, ckpt)


# --- evaluation -----------------------------------------------------------------------

@dataclass
class EvalResult:
    policy: str
    mean_delay: float
    std_delay: float
    episode_means: list[float]


def run_eval(policy, config: ExperimentConfig, network: NetworkConfig | None = None,
             episodes: int | None = None, slots: int | None = None) -> EvalResult:
    """Greedy rollouts on eval seeds; every policy sees the same channel/task sequences."""
    net = network or config.network
    n_ep = episodes or config.eval_episodes
    n_slots = slots or config.slots
    means = []
    for ep in range(n_ep):
        env = MecEnv(net, derive_seed(config.seed, STREAM_EVAL_ENV, ep))
        if hasattr(policy, "reseed"):
            policy.reseed(derive_seed(config.seed, STREAM_EVAL_POLICY, ep))
        total = 0.0
        for _ in range(n_slots):
            total += policy.report(env.observe(), env.current_gains(), net).slot_delay
            env.advance()
        means.append(total / n_slots)
    arr = np.asarray(means)
    return EvalResult(policy_name(policy), float(arr.mean()), float(arr.std()), means)


SWEEP_AXES = ("task_rate", "mec_capability")


def sweep_network(network: NetworkConfig, axis: str, value: float) -> NetworkConfig:
    """task_rate: value in bits/s sets C_mean = value * tau0. mec_capability: E_max_mec multiplier."""
    if axis == "task_rate":
        return network.replace(C_mean=float(value) * network.tau0)
    if axis == "mec_capability":
        return network.replace(E_max_mec=float(value) * network.E_max_mec)
    raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep(axis: str, values: Sequence[float], policies: Sequence, config: ExperimentConfig,
          episodes: int | None = None, slots: int | None = None) -> list[dict]:
    if not len(values):
        raise ContractError("sweep needs at least one value")
    table = []
    for value in values:
        net = sweep_network(config.network, axis, value)
        for policy in policies:
            res = run_eval(policy, config, net, episodes, slots)
            table.append({"axis": axis, "value": float(value), "policy": res.policy,
                          "mean_delay": res.mean_delay, "std_delay": res.std_delay})
    return table


# --- CSV / SVG output -------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _header(table: Sequence[Mapping]) -> list[str]:
    if not table:
        raise ContractError("cannot emit an empty table")
    header = list(table[0].keys())
    for row in table:
        if list(row.keys()) != header:
            raise ContractError("all table rows must share the same columns")
    return header


def csv_text(table: Sequence[Mapping]) -> str:
    header = _header(table)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in table:
        w.writerow([_cell(row[c]) for c in header])
    return buf.getvalue()


def emit_csv(table: Sequence[Mapping], path: str | Path) -> Path:
    """RFC-4180 CSV: header row, CRLF records, minimal quoting; floats written with repr."""
    text = csv_text(table)
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _parse_cell(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows:
        return []
    header = rows[0]
    return [dict(zip(header, (_parse_cell(c) for c in r))) for r in rows[1:]]


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh.read())


_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_text(table: Sequence[Mapping], x: str = "value", y: str = "mean_delay", series: str | None = "policy",
             title: str = "", log_x: bool | None = None, log_y: bool | None = None) -> str:
    """Standalone SVG line chart, one polyline per series value."""
    _header(table)
    groups: dict[str, list[tuple[float, float]]] = {}
    for row in table:
        key = str(row[series]) if series else y
        groups.setdefault(key, []).append((float(row[x]), float(row[y])))
    xs = [p[0] for g in groups.values() for p in g]
    ys = [p[1] for g in groups.values() for p in g]

    def auto_log(vals):
        pos = [v for v in vals if v > 0]
        return len(pos) == len(vals) and max(pos) / min(pos) > 100

    log_x = auto_log(xs) if log_x is None else log_x
    log_y = auto_log(ys) if log_y is None else log_y
    fx = math.log10 if log_x else float
    fy = math.log10 if log_y else float
    x0, x1 = min(map(fx, xs)), max(map(fx, xs))
    y0, y1 = min(map(fy, ys)), max(map(fy, ys))
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    W, H, L, R, T, B = 640, 420, 80, 150, 40, 60

    def px(v):
        return L + (fx(v) - x0) / (x1 - x0) * (W - L - R)

    def py(v):
        return H - B - (fy(v) - y0) / (y1 - y0) * (H - T - B)

    def label(v, log):
        return f"{10 ** v:.3g}" if log else f"{v:.3g}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for tv in _ticks(x0, x1):
        xp = L + (tv - x0) / (x1 - x0) * (W - L - R)
        out.append(f'<text x="{xp:.1f}" y="{H - B + 18}" font-size="11" text-anchor="middle">{label(tv, log_x)}</text>')
    for tv in _ticks(y0, y1):
        yp = H - B - (tv - y0) / (y1 - y0) * (H - T - B)
        out.append(f'<text x="{L - 6}" y="{yp + 4:.1f}" font-size="11" text-anchor="end">{label(tv, log_y)}</text>')
    out.append(f'<text x="{(L + W - R) / 2}" y="{H - 15}" font-size="13" text-anchor="middle">'
               f'{escape(x)}{" (log)" if log_x else ""}</text>')
    out.append(f'<text x="18" y="{(T + H - B) / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {(T + H - B) / 2})">{escape(y)}{" (log)" if log_y else ""}</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="22" font-size="15" text-anchor="middle">{escape(title)}</text>')
    for i, (name, pts) in enumerate(groups.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = T + 16 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 35}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(table: Sequence[Mapping], path: str | Path, **kwargs) -> Path:
    text = svg_text(table, **kwargs)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path
