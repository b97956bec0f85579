"""Static network parameters and TOML loading."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a configuration value violates its documented bound."""


def exponential_bin_gains(L: int, g0: float = 1.0) -> tuple[float, ...]:
    """Conditional means of an exponential(1) power gain over L equal-probability bins.

    Bin i covers [-ln(1 - i/L), -ln(1 - (i+1)/L)); the mean of x*exp(-x) over
    [a, b] normalised by the bin mass 1/L is L*((a+1)e^-a - (b+1)e^-b).
    """
    edges = [-math.log1p(-i / L) for i in range(L)] + [math.inf]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        upper = 0.0 if math.isinf(b) else (b + 1.0) * math.exp(-b)
        out.append(g0 * L * ((a + 1.0) * math.exp(-a) - upper))
    return tuple(out)


@dataclass(frozen=True)
class NetworkConfig:
    M: int = 2
    K: int = 2
    B: float = 1e6
    N0: float = 4e-15
    kappa_u: float = 1e-27
    kappa_m: float = 1e-27
    D_k: float = 300.0
    D_m: float = 120.0
    E_max_user: float = 1e-4
    E_max_mec: float = 1e-2
    tau0: float = 1e-3
    C_mean: float = 2700.0
    C_spread: float = 0.5
    L: int = 8
    rho: float = 0.8
    g0: float = 1e-5
    gain_levels: tuple[float, ...] | None = None
    R_cap: float | None = None

    def __post_init__(self):
        if self.gain_levels is None:
            if not isinstance(self.L, int) or self.L < 2:
                raise ConfigError(f"L must be an integer >= 2, got {self.L!r}")
            object.__setattr__(self, "gain_levels", exponential_bin_gains(self.L, self.g0))
        else:
            object.__setattr__(self, "gain_levels", tuple(float(g) for g in self.gain_levels))
        if self.R_cap is None:
            object.__setattr__(self, "R_cap", 10.0 * self.tau0)
        self.validate()

    def validate(self) -> None:
        for name in ("M", "K"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.L, int) or self.L < 2:
            raise ConfigError(f"L must be an integer >= 2, got {self.L!r}")
        for name in ("B", "N0", "kappa_u", "kappa_m", "D_k", "D_m", "E_max_user",
                     "E_max_mec", "tau0", "C_mean", "g0", "R_cap"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be strictly positive, got {v!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho!r}")
        if not 0.0 <= self.C_spread < 1.0:
            raise ConfigError(f"C_spread must lie in [0, 1), got {self.C_spread!r}")
        g = self.gain_levels
        if len(g) != self.L:
            raise ConfigError(f"gain_levels must have L={self.L} entries, got {len(g)}")
        if any(x <= 0 for x in g):
            raise ConfigError("gain_levels must be strictly positive")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError("gain_levels must be strictly increasing")

    @property
    def n_assignments(self) -> int:
        return self.M ** self.K

    def replace(self, **changes) -> "NetworkConfig":
        """Copy with changes; derived gain_levels/R_cap are recomputed unless given."""
        current = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        derived_from = {"gain_levels": ("L", "g0"), "R_cap": ("tau0",)}
        for key, deps in derived_from.items():
            if key not in changes and any(d in changes for d in deps):
                current[key] = None
        current.update(changes)
        return NetworkConfig(**current)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["gain_levels"] = list(self.gain_levels)
        return d


NETWORK_KEYS = {f.name for f in dataclasses.fields(NetworkConfig)} | {"task_rate"}


def network_from_mapping(data: Mapping[str, Any]) -> NetworkConfig:
    """Build a NetworkConfig from a [network] table.

    ``task_rate`` (bits/s) is accepted in place of ``C_mean`` and converted
    with C_mean = task_rate * tau0. Unknown keys are rejected.
    """
    unknown = set(data) - NETWORK_KEYS
    if unknown:
        raise ConfigError(f"unknown [network] keys: {sorted(unknown)}")
    kwargs = dict(data)
    rate = kwargs.pop("task_rate", None)
    if rate is not None:
        if "C_mean" in kwargs:
            raise ConfigError("give either task_rate or C_mean, not both")
        tau0 = kwargs.get("tau0", NetworkConfig.tau0)
        kwargs["C_mean"] = float(rate) * float(tau0)
    for name in ("M", "K", "L"):
        if name in kwargs and isinstance(kwargs[name], float) and kwargs[name].is_integer():
            kwargs[name] = int(kwargs[name])
    try:
        return NetworkConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_toml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc


def load_network_config(path: str | Path) -> NetworkConfig:
    return network_from_mapping(load_toml(path).get("network", {}))
