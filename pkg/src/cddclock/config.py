"""Run configuration: sectioned key = value files (or a JSON mirror) with presets.

Frequencies are plain Hz and sweep times microseconds, exactly as the
drive-parameter table prints them. Key names are case sensitive
(``omega_S1`` is a drive frequency, ``Omega_S1`` a drive amplitude).
"""

import configparser
import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


PRESETS = {
    "resonant": {
        "omega_S1": 10002089.0, "omega_D1": 5994834.0,
        "Omega_S1": 46862.0, "Omega_D1": 115446.0,
        "Omega_S2": 3469.0, "Omega_D2": 6809.0,
        "omega_S2": 46915.0, "omega_D2": 69287.0,
        "Delta_omega_sw1": -150000.0, "t_sw1": 500.0,
        "Delta_omega_sw2": 80000.0, "t_sw2": 7000.0,
    },
    "magic": {
        "omega_S1": 10002089.0, "omega_D1": 5994834.0,
        "Omega_S1": 46862.0, "Omega_D1": 115446.0,
        "Omega_S2": 3469.0, "Omega_D2": 6809.0,
        "omega_S2": 46951.0, "omega_D2": 70731.0,
        "Delta_omega_sw1": -1500000.0, "t_sw1": 500.0,
        "Delta_omega_sw2": 30000.0, "t_sw2": 7000.0,
    },
}

# section -> key -> default; the type of the default is the parse type
DEFAULTS = {
    "run": {"seed": 0, "output_dir": "", "preset": "resonant"},
    "cdd": dict(PRESETS["resonant"], **{
        "B0_uT": 356.9106, "Delta_S1": 0.0, "Delta_D1": 0.0,
        "g_S": 2.00225664, "g_D": 1.2003340, "laser_Omega": 10.0,
    }),
    "constants": {"theta_Q": 1.83},
    "trap": {"ions": 5, "span_um": 20.0, "span_ions": 5, "axial_frequency": 0.0},
    "dynamics": {"method": "cf4", "steps_per_cycle": 100, "period_tol": 0.01,
                 "period_max_ms": 10.0, "cross_coupling": False, "field_span_nT": 100.0,
                 "field_points": 9},
    "waveform": {"hold1_us": 100.0, "hold2_us": 1000.0, "sigma_us": 0.0, "Q_S": 8.59,
                 "Q_D": 15.95, "sample_rate": 0.0, "sweep_speedup": 1.0},
    "noise": {"mains": "50:3.0:0.0, 100:1.2:1.1, 150:0.6:2.3", "slow_drift": 5.0,
              "b_offset": 0.0, "b_linear": 0.0, "b_quadratic": 0.0,
              "amp_bound": 6e-5},
    "servo": {"probe_time_ms": 100.0, "cycle_time_ms": 300.0, "gain": 0.5,
              "half_width": 0.0, "readout": "camera", "duration_s": 600.0,
              "response": "analytic"},
    "scan": {"shots": 100, "span_hz": 80.0, "points": 161, "qps": True,
             "flop_points": 101, "flop_duration": 1.0, "flop_shots": 200,
             "gamma": 0.29},
}

CHOICES = {
    ("dynamics", "method"): ("cf4", "midpoint"),
    ("servo", "readout"): ("camera", "pmt"),
    ("servo", "response"): ("analytic", "numeric"),
    ("run", "preset"): tuple(PRESETS),
}


def _coerce(section, key, raw, where=""):
    default = DEFAULTS[section][key]
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if isinstance(default, float):
            v = float(raw)
            if not np.isfinite(v):
                raise ValueError(raw)
            return v
    except (TypeError, ValueError):
        raise ConfigError(f"{where}[{section}] {key}: invalid value {raw!r}") from None
    value = str(raw).strip()
    allowed = CHOICES.get((section, key))
    if allowed and value not in allowed:
        raise ConfigError(f"{where}[{section}] {key}: must be one of {', '.join(allowed)}")
    return value


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def canonical(self):
        """Resolved values without output location (which does not affect results)."""
        vals = copy.deepcopy(self.values)
        vals["run"].pop("output_dir", None)
        return vals

    def digest(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self):
        return json.dumps(self.canonical(), sort_keys=True, indent=2) + "\n"

    def replace(self, section, **kw):
        vals = copy.deepcopy(self.values)
        for k, v in kw.items():
            if k not in DEFAULTS[section]:
                raise ConfigError(f"unknown key [{section}] {k}")
            vals[section][k] = _coerce(section, k, v)
        return RunConfig(vals)

    # -- builders ------------------------------------------------------
    def cdd(self):
        from .dressing import CddParameterSet

        c = self.values["cdd"]
        try:
            return CddParameterSet.from_frequencies(
                c["B0_uT"] * 1e-6, c["omega_S1"], c["Omega_S1"], c["omega_S2"], c["Omega_S2"],
                c["omega_D1"], c["Omega_D1"], c["omega_D2"], c["Omega_D2"],
                Delta_S1=c["Delta_S1"], Delta_D1=c["Delta_D1"], g_S=c["g_S"], g_D=c["g_D"],
                laser_Omega=c["laser_Omega"])
        except ValueError as exc:
            raise ConfigError(f"[cdd] {exc}") from None

    def trap(self):
        from .crystal import TrapConfig, omega_z_for_span

        t = self.values["trap"]
        if t["ions"] < 1:
            raise ConfigError("[trap] ions must be >= 1")
        if t["axial_frequency"] > 0:
            wz = 2 * np.pi * t["axial_frequency"]
        else:
            # the trap is fixed by the span of a reference chain, independent of ``ions``
            wz = omega_z_for_span(t["span_um"] * 1e-6, max(t["span_ions"], 2))
        return TrapConfig(omega_z=wz, N=t["ions"])

    def propagation(self):
        from .dynamics import PropagationConfig

        d = self.values["dynamics"]
        return PropagationConfig(method=d["method"], steps_per_cycle=d["steps_per_cycle"])

    def floquet_kwargs(self):
        d = self.values["dynamics"]
        return {"period_tol": d["period_tol"], "T_max": d["period_max_ms"] * 1e-3,
                "cross_coupling": d["cross_coupling"]}

    def noise(self, seed=None):
        from .clocksim import NoiseModel

        n = self.values["noise"]
        return NoiseModel(mains_harmonics=parse_mains(n["mains"]), slow_drift=n["slow_drift"],
                          b_gradient=(n["b_linear"], n["b_quadratic"]), b_offset=n["b_offset"],
                          drive_amp_noise=n["amp_bound"],
                          seed=self.seed if seed is None else seed)

    def servo(self):
        from .clocksim import ServoConfig

        s = self.values["servo"]
        try:
            return ServoConfig(probe_time=s["probe_time_ms"] * 1e-3,
                               cycle_time=s["cycle_time_ms"] * 1e-3, gain=s["gain"],
                               half_width=s["half_width"] or None, readout=s["readout"])
        except ValueError as exc:
            raise ConfigError(f"[servo] {exc}") from None

    def program(self, label="S", speedup=None):
        """Stitched coil program; the preparation sweeps apply to the S coil only."""
        from .waveform import program_from_set

        c, w = self.values["cdd"], self.values["waveform"]
        k = w["sweep_speedup"] if speedup is None else speedup
        sigma = w["sigma_us"] * 1e-6 / k if w["sigma_us"] > 0 else None
        sweeps = {}
        if label == "S":
            sweeps = dict(sweep1=(c["Delta_omega_sw1"], c["t_sw1"] * 1e-6 / k),
                          sweep2=(c["Delta_omega_sw2"], c["t_sw2"] * 1e-6 / k))
        try:
            return program_from_set(self.cdd(), label, hold1=w["hold1_us"] * 1e-6,
                                    hold2=w["hold2_us"] * 1e-6, sigma=sigma, **sweeps)
        except ValueError as exc:
            raise ConfigError(f"[waveform] {exc}") from None

    def coil_model(self, label="S"):
        from .waveform import TransferFunctionModel

        c, w = self.values["cdd"], self.values["waveform"]
        return TransferFunctionModel.resonant(c[f"omega_{label}1"], w[f"Q_{label}"])


def parse_mains(text):
    out = []
    for item in filter(None, (s.strip() for s in str(text).split(","))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(f"[noise] mains: expected freq:amp:phase, got {item!r}")
        try:
            f, a, p = (float(x) for x in parts)
        except ValueError:
            raise ConfigError(f"[noise] mains: invalid entry {item!r}") from None
        if a < 0:
            raise ConfigError(f"[noise] mains: negative amplitude in {item!r}")
        out.append((f, a, p))
    return tuple(out)


def _line_of(text, section, key):
    sec = None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
        elif sec == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return n
    return None


def resolve(raw, preset=None, text=None, source=""):
    """Validate a nested {section: {key: value}} mapping and apply defaults."""
    vals = copy.deepcopy(DEFAULTS)
    for section, items in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{source}unknown section [{section}]")
        for key in items:
            if key not in DEFAULTS[section]:
                line = _line_of(text, section, key) if text else None
                at = f"line {line}: " if line else ""
                raise ConfigError(f"{source}{at}unknown key {key!r} in [{section}]")
    name = preset or raw.get("run", {}).get("preset") or DEFAULTS["run"]["preset"]
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    vals["cdd"].update(PRESETS[name])
    vals["run"]["preset"] = name
    for section, items in raw.items():
        for key, value in items.items():
            if section == "run" and key == "preset":
                continue
            line = _line_of(text, section, key) if text else None
            where = f"{source}line {line}: " if line else source
            vals[section][key] = _coerce(section, key, value, where)
    return RunConfig(vals)


def parse_config(path=None, preset=None):
    """Read an INI (or ``.json``) file; ``None`` gives the defaults."""
    if path is None:
        return resolve({}, preset)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    src = f"{path}: "
    if path.suffix == ".json":
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{src}line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError(f"{src}expected an object of sections")
        return resolve(raw, preset, None, src)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{src}{exc}") from None
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    return resolve(raw, preset, text, src)
