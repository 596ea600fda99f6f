"""JSON configuration schema and reference buffer presets.

A config file is one JSON object::

    {
      "engine":     {"dt": 0.001, "drain_after_trace": true, "max_drain_time": 600,
                     "leakage": true, "leakage_model": "linear", "seed": 0},
      "thresholds": {"v_enable": 3.3, "v_min": 1.8, "v_low": 1.9, "v_high": 3.5, "v_max": 3.6},
      "harvester":  {"efficiency": 0.8, "cold_start_threshold": 0.0, "max_output_voltage": 3.6},
      "workload":   {"kind": "DE", ...WorkloadSpec fields..., "event_file": "arrivals.txt"},
      "trace":      {"path": "trace.csv"} | {"synth": "two_phase", "params": {...}},
      "buffer":     {...}            # for ``run``
      "buffers":    [{...}, {...}]   # for ``compare``
    }

Buffer stanzas::

    {"kind": "static", "capacitance": 0.01, "rated_voltage": 6.3, "leakage_current": 0.0}
    {"kind": "static", "preset": "770uF" | "10mF" | "18mF"}
    {"kind": "react", "preset": "reference"}
    {"kind": "react", "last_level": {cap}, "banks": [{cap, "count": 3}, ...],
     "costs": {"hardware_power": 6.8e-5, "software_duty_penalty": 0.018},
     "equalization": "instantaneous" | "load_following", "poll_period": 0.1,
     "bank_order": "ascending" | "as_given", "forward_drop": 0.0}
    {"kind": "morphy", "preset": "reference"}
    {"kind": "morphy", "unit": {cap}, "count": 7, "task": {cap} | null,
     "ladder": [[7], [4, 3], ...], "poll_period": 0.1}

where ``{cap}`` is ``{"capacitance": F, "rated_voltage": V, "leakage_current": A}``.
Every stanza may carry a ``name`` and an ``initial_voltage``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from .circuit import CapacitorSpec
from .controller import ControllerCosts, Thresholds
from .engine import (
    BufferConfig, MorphyBufferConfig, ReactBufferConfig, SimConfig, StaticBufferConfig,
)
from .harvester import HarvesterModel, Trace, load_trace, synth_trace
from .workload import WorkloadSpec, load_event_file


class ConfigError(ValueError):
    """Config file is syntactically fine but semantically invalid."""


# -- reference parts ---------------------------------------------------------

CERAMIC_UNIT = 220e-6
CERAMIC_LEAK = 28e-6  # A at 6.3 V per 220 uF part
CERAMIC_RATED = 6.3


def ceramic(capacitance: float) -> CapacitorSpec:
    """A capacitor built from parallel 220 uF ceramics; leakage scales with count."""
    return CapacitorSpec(capacitance, CERAMIC_RATED, CERAMIC_LEAK * capacitance / CERAMIC_UNIT)


def supercap(capacitance: float) -> CapacitorSpec:
    """Supercapacitor class part: 0.15 uA at 5.5 V per 5 mF."""
    return CapacitorSpec(capacitance, 5.5, 0.15e-6 * capacitance / 5e-3)


def electrolytic_2mf() -> CapacitorSpec:
    return CapacitorSpec(2e-3, 6.3, 25.2e-6)


def reference_react(**overrides) -> ReactBufferConfig:
    """Last-level buffer of 770 uF plus five banks (220/440/880/880 uF x3, 5 mF x2)."""
    banks = (
        (ceramic(220e-6), 3),
        (ceramic(440e-6), 3),
        (ceramic(880e-6), 3),
        (ceramic(880e-6), 3),
        (supercap(5000e-6), 2),
    )
    kw = dict(last_level=ceramic(770e-6), banks=banks)
    kw.update(overrides)
    return ReactBufferConfig(**kw)


def reference_morphy(**overrides) -> MorphyBufferConfig:
    """Eight 2 mF electrolytics: seven reconfigurable plus one task capacitor."""
    kw = dict(unit_spec=electrolytic_2mf(), count=7, task_spec=electrolytic_2mf())
    kw.update(overrides)
    return MorphyBufferConfig(**kw)


STATIC_PRESETS = {
    "770uF": lambda: ceramic(770e-6),
    "10mF": lambda: supercap(10e-3),
    "18mF": lambda: supercap(18e-3),
}


def reference_static(preset: str, **overrides) -> StaticBufferConfig:
    kw = dict(spec=STATIC_PRESETS[preset](), name=f"static_{preset}")
    kw.update(overrides)
    return StaticBufferConfig(**kw)


# -- parsing -----------------------------------------------------------------

def _cap(d: dict, where: str) -> CapacitorSpec:
    try:
        return CapacitorSpec(float(d["capacitance"]), float(d.get("rated_voltage", 6.3)),
                             float(d.get("leakage_current", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc.args[0]!r}") from None


def _known(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def parse_buffer(d: dict, where: str = "buffer") -> BufferConfig:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    kind = d["kind"]
    common = {}
    if "name" in d:
        common["name"] = str(d["name"])
    if "initial_voltage" in d:
        common["initial_voltage"] = float(d["initial_voltage"])

    if kind == "static":
        _known(d, {"kind", "name", "initial_voltage", "preset", "capacitance",
                   "rated_voltage", "leakage_current"}, where)
        if "preset" in d:
            if d["preset"] not in STATIC_PRESETS:
                raise ConfigError(f"{where}: unknown static preset {d['preset']!r}")
            return reference_static(d["preset"], **common)
        return StaticBufferConfig(spec=_cap(d, where), **common)

    if kind == "react":
        _known(d, {"kind", "name", "initial_voltage", "preset", "last_level", "banks", "costs",
                   "equalization", "poll_period", "bank_order", "forward_drop"}, where)
        kw: dict[str, Any] = dict(common)
        if "costs" in d:
            c = d["costs"]
            kw["costs"] = ControllerCosts(
                hardware_power=float(c.get("hardware_power", 68e-6)),
                software_duty_penalty=float(c.get("software_duty_penalty", 0.018)),
                reference_poll_period=float(c.get("reference_poll_period", 0.1)))
        for key in ("equalization", "bank_order"):
            if key in d:
                kw[key] = str(d[key])
        if "poll_period" in d:
            kw["poll_period"] = None if d["poll_period"] is None else float(d["poll_period"])
        if "forward_drop" in d:
            kw["forward_drop"] = float(d["forward_drop"])
        if d.get("preset") == "reference":
            return reference_react(**kw)
        if "preset" in d:
            raise ConfigError(f"{where}: unknown react preset {d['preset']!r}")
        if "last_level" not in d or "banks" not in d:
            raise ConfigError(f"{where}: react buffer needs 'last_level' and 'banks'")
        banks = []
        for i, b in enumerate(d["banks"]):
            if "count" not in b:
                raise ConfigError(f"{where}.banks[{i}]: missing 'count'")
            banks.append((_cap(b, f"{where}.banks[{i}]"), int(b["count"])))
        return ReactBufferConfig(last_level=_cap(d["last_level"], f"{where}.last_level"),
                                 banks=tuple(banks), **kw)

    if kind == "morphy":
        _known(d, {"kind", "name", "initial_voltage", "preset", "unit", "count", "task",
                   "ladder", "poll_period"}, where)
        kw = dict(common)
        if "ladder" in d:
            kw["ladder"] = tuple(tuple(int(n) for n in p) for p in d["ladder"])
        if "poll_period" in d:
            kw["poll_period"] = float(d["poll_period"])
        if "count" in d:
            kw["count"] = int(d["count"])
        if d.get("preset") == "reference":
            return reference_morphy(**kw)
        if "preset" in d:
            raise ConfigError(f"{where}: unknown morphy preset {d['preset']!r}")
        if "unit" not in d:
            raise ConfigError(f"{where}: morphy buffer needs 'unit'")
        task = d.get("task")
        return MorphyBufferConfig(unit_spec=_cap(d["unit"], f"{where}.unit"),
                                  task_spec=_cap(task, f"{where}.task") if task else None, **kw)

    raise ConfigError(f"{where}: unknown buffer kind {kind!r}")


def parse_workload(d: dict, base: Path) -> WorkloadSpec:
    d = dict(d)
    if "event_file" in d:
        d["event_times"] = load_event_file(base / d.pop("event_file"))
    if "event_times" in d:
        d["event_times"] = tuple(float(t) for t in d["event_times"])
    allowed = set(WorkloadSpec.__dataclass_fields__)
    _known(d, allowed, "workload")
    return WorkloadSpec(**d)


def parse_trace(d: Optional[dict], base: Path, seed: int) -> Optional[Trace]:
    if d is None:
        return None
    if "path" in d:
        return load_trace(base / d["path"], d.get("duration"))
    if "synth" in d:
        return synth_trace(d["synth"], d.get("params", {}), int(d.get("seed", seed)))
    raise ConfigError("trace: expected 'path' or 'synth'")


def build_configs(raw: dict, base: Path = Path("."), trace: Optional[Trace] = None,
                  dt: Optional[float] = None, seed: Optional[int] = None,
                  drain: Optional[bool] = None) -> list[SimConfig]:
    """Turn a parsed JSON document into one SimConfig per buffer stanza.

    Command-line overrides (trace, dt, seed, drain) win over file values.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _known(raw, {"engine", "thresholds", "harvester", "workload", "trace", "buffer", "buffers"},
           "config")
    eng = dict(raw.get("engine", {}))
    _known(eng, {"dt", "drain_after_trace", "max_drain_time", "leakage", "leakage_model", "seed"},
           "engine")
    if seed is not None:
        eng["seed"] = seed
    if dt is not None:
        eng["dt"] = dt
    if drain is not None:
        eng["drain_after_trace"] = drain
    try:
        th = Thresholds(**raw.get("thresholds", {}))
        hv = HarvesterModel(**raw.get("harvester", {}))
        wl = parse_workload(raw.get("workload", {}), base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if trace is None:
        trace = parse_trace(raw.get("trace"), base, int(eng.get("seed", 0)))
    if trace is None:
        raise ConfigError("no trace given (use --trace or a 'trace' section)")

    if "buffers" in raw:
        stanzas = raw["buffers"]
        if not isinstance(stanzas, list):
            raise ConfigError("'buffers' must be a list")
    elif "buffer" in raw:
        stanzas = [raw["buffer"]]
    else:
        raise ConfigError("config needs a 'buffer' or 'buffers' section")

    out = []
    for i, s in enumerate(stanzas):
        where = "buffer" if "buffer" in raw and "buffers" not in raw else f"buffers[{i}]"
        out.append(SimConfig(buffer=parse_buffer(s, where), trace=trace, harvester=hv,
                             workload=wl, thresholds=th, **eng))
    return out


def load_config(path, **overrides) -> list[SimConfig]:
    path = Path(path)
    raw = json.loads(path.read_text())
    return build_configs(raw, base=path.parent, **overrides)
