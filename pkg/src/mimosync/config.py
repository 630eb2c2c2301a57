"""Plan files (TOML) and received-vector files.

A plan file has top-level ``name``, ``seed`` and optional ``training_seed``
plus the sections ``[system]``, ``[impairments]``, ``[grid]``,
``[channel]``, ``[simulation]`` and ``[crlb]``.  Parsing is strict:
unknown keys and wrongly typed values raise `ConfigError` naming the key.

Received vectors are stored as an 8-byte magic, ``uint32`` N and N_R, and
``N * N_R`` little-endian complex samples written as interleaved float64
real/imaginary pairs.
"""

from __future__ import annotations

import struct
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .estimators import ALGORITHMS, GridSpec
from .harness import ExperimentPlan
from .model import ChannelProfile, Impairments, SystemConfig

RX_MAGIC = b"MIMORX01"
_RX_HEADER = struct.Struct("<8sII")
SHIPPED = ("operating_point", "coupling", "smoke")


class ConfigError(ValueError):
    pass


class RxFileError(ValueError):
    pass


# -- schema helpers -----------------------------------------------------------

def _take(section: dict, key: str, kind, where: str, default=...):
    if key not in section:
        if default is ...:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _take_list(section, key, kind, where, length=None, default=...):
    values = _take(section, key, list, where, default)
    if values is default and default is not ...:
        return values
    out = [_take({key: v}, key, kind, where) for v in values]
    if length is not None and len(out) != length:
        raise ConfigError(f"{where}.{key}: expected {length} entries, got {len(out)}")
    return out


def _no_extra(section: dict, allowed, where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}]: missing section")
    return sec


# -- plan <-> document ----------------------------------------------------------

def parse_plan(doc: dict) -> ExperimentPlan:
    """Build an `ExperimentPlan` from a parsed TOML document."""
    _no_extra(doc, ("name", "seed", "training_seed", "system", "impairments", "grid",
                    "channel", "simulation", "crlb"), "plan")
    sys_ = _section(doc, "system")
    _no_extra(sys_, ("n_subcarriers", "n_tx", "n_rx", "max_taps", "theta_max", "cp_len"),
              "system")
    imp_ = _section(doc, "impairments")
    _no_extra(imp_, ("eps", "eta", "theta"), "impairments")
    grid_ = _section(doc, "grid")
    _no_extra(grid_, ("eps", "eta", "theta", "window"), "grid")
    chan_ = doc.get("channel", {})
    _no_extra(chan_, ("decay_db_per_tap", "powers"), "channel")
    sim_ = _section(doc, "simulation")
    _no_extra(sim_, ("snr_db", "n_trials", "algorithms", "redraw_training"), "simulation")
    crlb_ = doc.get("crlb", {})
    _no_extra(crlb_, ("n_realizations", "thetas"), "crlb")

    try:
        cfg = SystemConfig(*(_take(sys_, k, int, "system") for k in
                             ("n_subcarriers", "n_tx", "n_rx", "max_taps", "theta_max",
                              "cp_len")))
        imp = Impairments(_take(imp_, "eps", float, "impairments"),
                          _take(imp_, "eta", float, "impairments"),
                          _take(imp_, "theta", int, "impairments"))
        window = _take_list(grid_, "window", int, "grid", 2, None)
        grid = GridSpec(tuple(_take_list(grid_, "eps", float, "grid", 3)),
                        tuple(_take_list(grid_, "eta", float, "grid", 3)),
                        tuple(_take_list(grid_, "theta", int, "grid", 2)),
                        None if window is None else tuple(window))
        if "powers" in chan_ and "decay_db_per_tap" in chan_:
            raise ConfigError("channel: give either powers or decay_db_per_tap")
        if "powers" in chan_:
            profile = ChannelProfile(tuple(_take_list(chan_, "powers", float, "channel")))
        else:
            profile = ChannelProfile.exponential(
                cfg.max_taps, _take(chan_, "decay_db_per_tap", float, "channel", 1.0))
        algos = [a.upper() for a in _take_list(sim_, "algorithms", str, "simulation",
                                                default=list(ALGORITHMS))]
        return ExperimentPlan(
            cfg=cfg, grid=grid, imp=imp,
            snr_db=tuple(_take_list(sim_, "snr_db", float, "simulation")),
            n_trials=_take(sim_, "n_trials", int, "simulation"),
            algorithms=tuple(algos),
            profile=profile,
            seed=_take(doc, "seed", int, "plan"),
            training_seed=_take(doc, "training_seed", int, "plan", None),
            redraw_training=_take(sim_, "redraw_training", bool, "simulation", False),
            crlb_realizations=_take(crlb_, "n_realizations", int, "crlb", 100),
            crlb_thetas=tuple(_take_list(crlb_, "thetas", int, "crlb", default=[])),
            name=_take(doc, "name", str, "plan", ""),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def plan_to_doc(plan: ExperimentPlan) -> dict:
    """Inverse of `parse_plan`; the channel profile is written as explicit powers."""
    cfg, grid = plan.cfg, plan.grid
    doc = {"name": plan.name, "seed": plan.seed}
    if plan.training_seed is not None:
        doc["training_seed"] = plan.training_seed
    doc["system"] = {"n_subcarriers": cfg.n_subcarriers, "n_tx": cfg.n_tx, "n_rx": cfg.n_rx,
                     "max_taps": cfg.max_taps, "theta_max": cfg.theta_max,
                     "cp_len": cfg.cp_len}
    doc["impairments"] = {"eps": float(plan.imp.eps), "eta": float(plan.imp.eta),
                          "theta": plan.imp.theta}
    doc["grid"] = {"eps": [float(v) for v in grid.eps], "eta": [float(v) for v in grid.eta],
                   "theta": [int(v) for v in grid.theta]}
    if grid.window is not None:
        doc["grid"]["window"] = [int(v) for v in grid.window]
    profile = plan.profile or ChannelProfile.exponential(cfg.max_taps)
    doc["channel"] = {"powers": [float(p) for p in profile.powers]}
    doc["simulation"] = {"snr_db": list(plan.snr_db), "n_trials": plan.n_trials,
                         "algorithms": list(plan.algorithms),
                         "redraw_training": plan.redraw_training}
    doc["crlb"] = {"n_realizations": plan.crlb_realizations,
                   "thetas": list(plan.crlb_thetas)}
    return doc


def loads_plan(text: str) -> ExperimentPlan:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}") from exc
    return parse_plan(doc)


def dumps_plan(plan: ExperimentPlan) -> str:
    return tomli_w.dumps(plan_to_doc(plan))


def shipped_path(name: str):
    return resources.files("mimosync").joinpath("configs").joinpath(f"{name}.toml")


def load_plan(source) -> ExperimentPlan:
    """Load a plan from a path, or from a shipped config by bare name."""
    source = str(source)
    if source in SHIPPED:
        return loads_plan(shipped_path(source).read_text())
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from exc
    return loads_plan(text)


# -- received vectors ---------------------------------------------------------------

def write_rx(path, r, n_subcarriers: int, n_rx: int) -> None:
    r = np.asarray(r, dtype=np.complex128).reshape(-1)
    if r.size != n_subcarriers * n_rx:
        raise RxFileError(f"vector has {r.size} samples, header says "
                          f"{n_subcarriers}*{n_rx}")
    with open(path, "wb") as fh:
        fh.write(_RX_HEADER.pack(RX_MAGIC, n_subcarriers, n_rx))
        fh.write(r.astype("<c16").tobytes())


def read_rx(path) -> tuple[np.ndarray, int, int]:
    """Return ``(r, N, N_R)`` from a received-vector file."""
    data = Path(path).read_bytes()
    if len(data) < _RX_HEADER.size:
        raise RxFileError(f"{path}: truncated header ({len(data)} bytes)")
    magic, n, n_rx = _RX_HEADER.unpack_from(data)
    if magic != RX_MAGIC:
        raise RxFileError(f"{path}: bad magic {magic!r}")
    body = data[_RX_HEADER.size:]
    expected = 16 * n * n_rx
    if len(body) != expected:
        raise RxFileError(f"{path}: expected {expected} payload bytes for N={n}, "
                          f"N_R={n_rx}, found {len(body)}")
    return np.frombuffer(body, dtype="<c16").astype(np.complex128), n, n_rx
