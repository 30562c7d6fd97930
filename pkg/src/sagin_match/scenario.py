"""Network instances: nodes, layers, radio constants, random generation and file I/O.

Layer 0 holds the ground users; every higher layer relays to the one above it,
and the top layer (satellites in the default four-layer setup) only receives.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ChannelParams",
    "LayerConfig",
    "Node",
    "Scenario",
    "ScenarioConfig",
    "ScenarioError",
    "generate_scenario",
    "load_config",
    "load_scenario",
    "default_config",
    "save_config",
    "save_scenario",
]

PLACEMENTS = ("uniform", "grid", "center")

FILE_HEADER = """\
# sagin-match {kind} file
# units: positions and area in m, tx_power in W, antenna_gain in dBi,
#        bandwidth and carrier_freq in Hz (one entry per transmitting layer),
#        noise_density in dBm/Hz, eta_los / eta_nlos in dB, los_a / los_b unitless
"""


class ScenarioError(ValueError):
    """Raised for malformed scenario/config files and invariant violations."""


@dataclass(frozen=True)
class Node:
    id: int
    layer: int
    position: tuple[float, float, float]
    tx_power: float
    antenna_gain: float = 0.0
    quota: int = 0

    @property
    def altitude(self) -> float:
        return self.position[2]

    @property
    def tx_power_dbm(self) -> float:
        if self.tx_power <= 0:
            return -math.inf
        return 10.0 * math.log10(self.tx_power * 1e3)


@dataclass(frozen=True)
class ChannelParams:
    """Ground-to-air probabilistic line-of-sight parameters (suburban defaults)."""

    los_a: float = 4.88
    los_b: float = 0.43
    eta_los: float = 0.1
    eta_nlos: float = 21.0


@dataclass(frozen=True)
class Scenario:
    layers: tuple[tuple[Node, ...], ...]
    bandwidth: tuple[float, ...]
    carrier_freq: tuple[float, ...]
    noise_density: float = -169.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    area: tuple[float, float] = (1000.0, 1000.0)
    seed: int = 0
    layer_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        object.__setattr__(self, "bandwidth", tuple(float(b) for b in self.bandwidth))
        object.__setattr__(self, "carrier_freq", tuple(float(f) for f in self.carrier_freq))
        object.__setattr__(self, "area", tuple(float(a) for a in self.area))
        if not self.layer_names:
            object.__setattr__(self, "layer_names", _default_names(len(self.layers)))
        else:
            object.__setattr__(self, "layer_names", tuple(self.layer_names))
        self.validate()

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_pairs(self) -> int:
        return len(self.layers) - 1

    def ids(self, layer: int) -> tuple[int, ...]:
        return tuple(n.id for n in self.layers[layer])

    def quotas(self, layer: int) -> tuple[int, ...]:
        return tuple(n.quota for n in self.layers[layer])

    def positions(self, layer: int) -> np.ndarray:
        return np.array([n.position for n in self.layers[layer]], dtype=float).reshape(-1, 3)

    def node(self, layer: int, node_id: int) -> Node:
        for n in self.layers[layer]:
            if n.id == node_id:
                return n
        raise KeyError(f"no node {node_id} in layer {layer}")

    def counts(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.layers)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        K = len(self.layers)
        if K < 2:
            raise ScenarioError("a scenario needs at least 2 layers")
        if len(self.layer_names) != K:
            raise ScenarioError(f"layer_names has {len(self.layer_names)} entries, expected {K}")
        for name, values in (("bandwidth", self.bandwidth), ("carrier_freq", self.carrier_freq)):
            if len(values) != K - 1:
                raise ScenarioError(f"{name} needs {K - 1} entries (one per transmitting layer), got {len(values)}")
            for v in values:
                if not (v > 0 and math.isfinite(v)):
                    raise ScenarioError(f"{name} entries must be positive and finite, got {v!r}")
        if not all(a > 0 for a in self.area):
            raise ScenarioError(f"area must be positive, got {self.area}")

        prev_top = None
        for k, layer in enumerate(self.layers):
            where = f"layer {k} ({self.layer_names[k]!r})"
            if not layer:
                raise ScenarioError(f"{where} is empty")
            seen = set()
            for n in layer:
                tag = f"{where} node {n.id}"
                if n.id in seen:
                    raise ScenarioError(f"{tag}: duplicate id")
                seen.add(n.id)
                if n.layer != k:
                    raise ScenarioError(f"{tag}: layer field is {n.layer}")
                if len(n.position) != 3 or not all(math.isfinite(c) for c in n.position):
                    raise ScenarioError(f"{tag}: position must be 3 finite coordinates")
                if k == 0:
                    if n.position[2] != 0:
                        raise ScenarioError(f"{tag}: ground users must have z = 0")
                    if n.quota != 0:
                        raise ScenarioError(f"{tag}: quota must be 0 for ground users")
                else:
                    if n.quota < 1:
                        raise ScenarioError(f"{tag}: quota must be >= 1, got {n.quota}")
                if k < K - 1 and not n.tx_power > 0:
                    raise ScenarioError(f"{tag}: tx_power must be > 0, got {n.tx_power}")
                if k == K - 1 and n.tx_power < 0:
                    raise ScenarioError(f"{tag}: tx_power must be >= 0, got {n.tx_power}")
            zs = [n.position[2] for n in layer]
            if prev_top is not None and min(zs) <= prev_top:
                raise ScenarioError(
                    f"{where}: altitudes must lie strictly above layer {k - 1} "
                    f"(min {min(zs)} <= {prev_top})"
                )
            prev_top = max(zs)


def _default_names(K: int) -> tuple[str, ...]:
    if K == 4:
        return ("users", "uavs", "haps", "satellites")
    if K == 3:
        return ("users", "relays", "satellites")
    return tuple(["users"] + [f"layer{k}" for k in range(1, K)])


# -- configuration and generation ---------------------------------------------


@dataclass(frozen=True)
class LayerConfig:
    name: str
    count: int
    altitude: float
    tx_power: float
    antenna_gain: float = 0.0
    quota: int = 0
    # "uniform": random over the area, "grid": evenly spaced, "center": above the
    # area center, spread along x over +/- spread meters.
    placement: str = "uniform"
    spread: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    layers: tuple[LayerConfig, ...]
    bandwidth: tuple[float, ...]
    carrier_freq: tuple[float, ...]
    noise_density: float = -169.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    area: tuple[float, float] = (1000.0, 1000.0)
    seed: int = 0

    def with_layer(self, index: int, **changes) -> "ScenarioConfig":
        layers = list(self.layers)
        layers[index] = dataclasses.replace(layers[index], **changes)
        return dataclasses.replace(self, layers=tuple(layers))

    def validate(self) -> None:
        if len(self.layers) < 2:
            raise ScenarioError("config needs at least 2 layers")
        if not all(a > 0 for a in self.area):
            raise ScenarioError(f"area must be positive, got {self.area}")
        prev = None
        for k, lc in enumerate(self.layers):
            if lc.count < 1:
                raise ScenarioError(f"layer {lc.name!r}: count must be >= 1, got {lc.count}")
            if lc.placement not in PLACEMENTS:
                raise ScenarioError(f"layer {lc.name!r}: unknown placement {lc.placement!r}")
            if k == 0:
                if lc.altitude != 0:
                    raise ScenarioError(f"layer {lc.name!r}: ground layer altitude must be 0")
            elif lc.altitude <= 0:
                raise ScenarioError(f"layer {lc.name!r}: altitude must be positive, got {lc.altitude}")
            if prev is not None and lc.altitude <= prev:
                raise ScenarioError(f"layer {lc.name!r}: altitude {lc.altitude} not above previous layer ({prev})")
            prev = lc.altitude


def default_config(n_users: int = 30, seed: int = 0) -> ScenarioConfig:
    """The default four-layer setup: 1 km square, 30 users, 8 UAVs, 3 HAPs, 2 satellites."""
    return ScenarioConfig(
        layers=(
            LayerConfig("users", n_users, 0.0, 1.0, 0.0, 0, "uniform"),
            LayerConfig("uavs", 8, 100.0, 3.0, 0.0, 6, "uniform"),
            LayerConfig("haps", 3, 17e3, 10.0, 45.0, 3, "grid"),
            LayerConfig("satellites", 2, 700e3, 0.0, 0.0, 2, "center", 50e3),
        ),
        bandwidth=(10e6, 10e6, 10e6),
        carrier_freq=(2.5e9, 5e9, 3e9),
        noise_density=-169.0,
        area=(1000.0, 1000.0),
        seed=seed,
    )


def _grid_xy(n: int, area: tuple[float, float]) -> np.ndarray:
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    w, h = area
    cells = [((c + 0.5) * w / cols, (r + 0.5) * h / rows) for r in range(rows) for c in range(cols)]
    return np.array(cells[:n], dtype=float)


def generate_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Draw a random instance; identical (config, seed) pairs give identical scenarios."""
    config.validate()
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    w, h = config.area
    layers = []
    for k, lc in enumerate(config.layers):
        if lc.placement == "uniform":
            xy = rng.uniform((0.0, 0.0), (w, h), size=(lc.count, 2))
        elif lc.placement == "grid":
            xy = _grid_xy(lc.count, config.area)
        else:
            xs = np.linspace(-lc.spread, lc.spread, lc.count) if lc.count > 1 else np.zeros(1)
            xy = np.column_stack([w / 2 + xs, np.full(lc.count, h / 2)])
        nodes = tuple(
            Node(
                id=n,
                layer=k,
                position=(float(xy[n, 0]), float(xy[n, 1]), float(lc.altitude)),
                tx_power=float(lc.tx_power),
                antenna_gain=float(lc.antenna_gain),
                quota=int(lc.quota),
            )
            for n in range(lc.count)
        )
        layers.append(nodes)
    return Scenario(
        layers=tuple(layers),
        bandwidth=config.bandwidth,
        carrier_freq=config.carrier_freq,
        noise_density=config.noise_density,
        channel=config.channel,
        area=config.area,
        seed=int(seed),
        layer_names=tuple(lc.name for lc in config.layers),
    )


# -- file format ----------------------------------------------------------------
#
# INI-style: a [scenario] section, a [radio] section and one [layer.<name>]
# section per layer.  Scenario files list nodes as "<id> = x, y, z, tx_power,
# antenna_gain, quota"; config files give per-layer generation keys instead.


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_list(xs: Sequence[float]) -> str:
    return ", ".join(_fmt(x) for x in xs)


def _write_common(cp: configparser.ConfigParser, obj, names: Sequence[str]) -> None:
    cp["scenario"] = {
        "seed": str(obj.seed),
        "area": _fmt_list(obj.area),
        "layers": ", ".join(names),
    }
    ch = obj.channel
    cp["radio"] = {
        "bandwidth": _fmt_list(obj.bandwidth),
        "carrier_freq": _fmt_list(obj.carrier_freq),
        "noise_density": _fmt(obj.noise_density),
        "los_a": _fmt(ch.los_a),
        "los_b": _fmt(ch.los_b),
        "eta_los": _fmt(ch.eta_los),
        "eta_nlos": _fmt(ch.eta_nlos),
    }


def _dump(cp: configparser.ConfigParser, kind: str) -> str:
    buf = io.StringIO()
    buf.write(FILE_HEADER.format(kind=kind))
    buf.write("\n")
    cp.write(buf)
    return buf.getvalue()


def scenario_to_text(scenario: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    _write_common(cp, scenario, scenario.layer_names)
    for name, layer in zip(scenario.layer_names, scenario.layers):
        cp[f"layer.{name}"] = {
            str(n.id): f"{_fmt_list(n.position)}, {_fmt(n.tx_power)}, {_fmt(n.antenna_gain)}, {n.quota}"
            for n in layer
        }
    return _dump(cp, "scenario")


def config_to_text(config: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    _write_common(cp, config, [lc.name for lc in config.layers])
    for lc in config.layers:
        cp[f"layer.{lc.name}"] = {
            "count": str(lc.count),
            "altitude": _fmt(lc.altitude),
            "tx_power": _fmt(lc.tx_power),
            "antenna_gain": _fmt(lc.antenna_gain),
            "quota": str(lc.quota),
            "placement": lc.placement,
            "spread": _fmt(lc.spread),
        }
    return _dump(cp, "config")


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(scenario_to_text(scenario))


def save_config(config: ScenarioConfig, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(config_to_text(config))


class _Reader:
    """Typed field access on a parsed file with line-numbered diagnostics."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = text.splitlines()
        self.cp = configparser.ConfigParser(interpolation=None)
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ScenarioError(f"{source}: parse error: {exc}") from exc

    def _line(self, section: str, key: str) -> int | None:
        inside = False
        for lineno, raw in enumerate(self.lines, 1):
            s = raw.strip()
            if s.startswith("[") and s.endswith("]"):
                inside = s[1:-1].strip() == section
            elif inside and "=" in s and s.split("=", 1)[0].strip().lower() == key.lower():
                return lineno
        return None

    def error(self, section: str, key: str, msg: str) -> ScenarioError:
        line = self._line(section, key)
        loc = f"{self.source}:{line}" if line else self.source
        return ScenarioError(f"{loc}: [{section}] {key}: {msg}")

    def section(self, name: str) -> configparser.SectionProxy:
        if not self.cp.has_section(name):
            raise ScenarioError(f"{self.source}: missing section [{name}]")
        return self.cp[name]

    def raw(self, section: str, key: str, default=None) -> str:
        sec = self.section(section)
        if key not in sec:
            if default is not None:
                return default
            raise ScenarioError(f"{self.source}: [{section}] missing key {key!r}")
        return sec[key]

    def floats(self, section: str, key: str, default=None) -> tuple[float, ...]:
        text = self.raw(section, key, default)
        try:
            return tuple(float(t) for t in text.split(","))
        except ValueError:
            raise self.error(section, key, f"expected comma-separated numbers, got {text!r}") from None

    def float(self, section: str, key: str, default=None) -> float:
        vals = self.floats(section, key, default)
        if len(vals) != 1:
            raise self.error(section, key, "expected a single number")
        return vals[0]

    def int(self, section: str, key: str, default=None) -> int:
        text = self.raw(section, key, default)
        try:
            return int(text)
        except ValueError:
            raise self.error(section, key, f"expected an integer, got {text!r}") from None

    def names(self) -> list[str]:
        names = [t.strip() for t in self.raw("scenario", "layers").split(",") if t.strip()]
        if len(names) < 2:
            raise self.error("scenario", "layers", "need at least 2 layer names")
        return names

    def radio(self):
        ch = ChannelParams(
            los_a=self.float("radio", "los_a", "4.88"),
            los_b=self.float("radio", "los_b", "0.43"),
            eta_los=self.float("radio", "eta_los", "0.1"),
            eta_nlos=self.float("radio", "eta_nlos", "21.0"),
        )
        return dict(
            bandwidth=self.floats("radio", "bandwidth"),
            carrier_freq=self.floats("radio", "carrier_freq"),
            noise_density=self.float("radio", "noise_density"),
            channel=ch,
        )

    def area(self) -> tuple[float, float]:
        area = self.floats("scenario", "area")
        if len(area) != 2:
            raise self.error("scenario", "area", "expected two side lengths")
        return area


def _read_text(path) -> tuple[str, str]:
    try:
        with open(path) as fh:
            return fh.read(), os.fspath(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from exc


def scenario_from_text(text: str, source: str = "<string>") -> Scenario:
    r = _Reader(text, source)
    names = r.names()
    layers = []
    for k, name in enumerate(names):
        section = f"layer.{name}"
        nodes = []
        for key in r.section(section):
            try:
                node_id = int(key)
            except ValueError:
                raise r.error(section, key, "node keys must be integer ids") from None
            vals = r.floats(section, key)
            if len(vals) != 6:
                raise r.error(section, key, "expected x, y, z, tx_power, antenna_gain, quota")
            if vals[5] != int(vals[5]):
                raise r.error(section, key, "quota must be an integer")
            nodes.append(Node(node_id, k, tuple(vals[:3]), vals[3], vals[4], int(vals[5])))
        layers.append(tuple(nodes))
    try:
        return Scenario(
            layers=tuple(layers),
            area=r.area(),
            seed=r.int("scenario", "seed", "0"),
            layer_names=tuple(names),
            **r.radio(),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def config_from_text(text: str, source: str = "<string>") -> ScenarioConfig:
    r = _Reader(text, source)
    names = r.names()
    layers = []
    for k, name in enumerate(names):
        s = f"layer.{name}"
        placement = r.raw(s, "placement", "uniform").strip()
        layers.append(
            LayerConfig(
                name=name,
                count=r.int(s, "count"),
                altitude=r.float(s, "altitude"),
                tx_power=r.float(s, "tx_power"),
                antenna_gain=r.float(s, "antenna_gain", "0"),
                quota=r.int(s, "quota", "0"),
                placement=placement,
                spread=r.float(s, "spread", "0"),
            )
        )
    config = ScenarioConfig(
        layers=tuple(layers),
        area=r.area(),
        seed=r.int("scenario", "seed", "0"),
        **r.radio(),
    )
    try:
        config.validate()
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    return config


def load_scenario(path: str | os.PathLike) -> Scenario:
    return scenario_from_text(*_read_text(path))


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    return config_from_text(*_read_text(path))
