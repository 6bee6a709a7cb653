"""Run configuration files.

Grammar (one construct per line)::

    # comment                 anything after '#' is ignored
    [section]                 starts a section; each section appears once
    key = value               scalar: integer, float or bare word
    key = [v1, v2, ...]       flat array of numbers

Sections and keys, with defaults:

    [run]       mode (homogeneous | channel | micro-macro | verify-inequalities),
                run_id = run, seed = 0
    [model]     kind = oldroyd-b, reynolds = 1, weissenberg = 1, epsilon = 0.5,
                b (fene-p only), dim = 2
    [initial]   eigenvalues = [1, 1] and angle = 0 (rotation in the x-y plane),
                or entries = upper triangle row by row
    [flow]      schedule = constant | piecewise | sinusoidal
                kappa = row-major d*d entries (piecewise: one block per switch)
                times (piecewise, starting at 0), amplitude, frequency, phase
    [time]      dt = 0.001, t_end = 1, record_stride = 1
    [channel]   ny = 129, u_amplitude = 0.1, a_field = random, a_eig_range = [1.1, 3],
                a_entries, snapshot_stride = 0
    [ensemble]  n_particles = 100000, n_repeats = 8, c_dt = 1
    [verify]    n_samples = 10000, dims = [2, 3], b_values = [5, 10, 50, 100], slack = 1e-12

``to_text`` writes every known key of the sections the mode uses, in the
order above, so ``to_text(parse_config(to_text(c))) == to_text(c)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import tensor_core
from .channel import ChannelConfig
from .homogeneous import ConstantKappa, HomogeneousScenario, PiecewiseKappa, SinusoidalKappa
from .models import ModelKind, ModelParams

MODES = ("homogeneous", "channel", "micro-macro", "verify-inequalities")

# key -> (type, default); type in int, float, word, floats, ints
SCHEMA = {
    "run": {"mode": ("word", None), "run_id": ("word", "run"), "seed": ("int", 0)},
    "model": {
        "kind": ("word", "oldroyd-b"), "reynolds": ("float", 1.0), "weissenberg": ("float", 1.0),
        "epsilon": ("float", 0.5), "b": ("float", None), "dim": ("int", 2),
    },
    "initial": {"eigenvalues": ("floats", None), "angle": ("float", 0.0), "entries": ("floats", None)},
    "flow": {
        "schedule": ("word", "constant"), "kappa": ("floats", None), "times": ("floats", None),
        "amplitude": ("floats", None), "frequency": ("float", None), "phase": ("float", None),
    },
    "time": {"dt": ("float", 1e-3), "t_end": ("float", 1.0), "record_stride": ("int", 1)},
    "channel": {
        "ny": ("int", 129), "u_amplitude": ("float", 0.1), "a_field": ("word", "random"),
        "a_eig_range": ("floats", (1.1, 3.0)), "a_entries": ("floats", None), "snapshot_stride": ("int", 0),
    },
    "ensemble": {"n_particles": ("int", 100_000), "n_repeats": ("int", 8), "c_dt": ("float", 1.0)},
    "verify": {
        "n_samples": ("int", 10_000), "dims": ("ints", (2, 3)), "b_values": ("floats", (5.0, 10.0, 50.0, 100.0)),
        "slack": ("float", 1e-12),
    },
}

SECTIONS_FOR = {
    "homogeneous": ("run", "model", "initial", "flow", "time"),
    "channel": ("run", "model", "time", "channel"),
    "micro-macro": ("run", "model", "initial", "flow", "time", "ensemble"),
    "verify-inequalities": ("run", "verify"),
}

_SECTION = re.compile(r"^\[([A-Za-z_][\w-]*)\]$")
_KEY = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")
_WORD = re.compile(r"^[A-Za-z0-9_.+-]+$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        super().__init__(f"{source}:{line}: {message}" if line else f"{source}: {message}")


class ValidationError(ValueError):
    def __init__(self, problems: list[str], source: str = "<config>"):
        self.problems = list(problems)
        super().__init__(f"{source}: {len(self.problems)} problem(s)\n  " + "\n  ".join(self.problems))


def _number(tok: str, typ: str):
    if typ == "int" or typ == "ints":
        if not re.fullmatch(r"[+-]?\d+", tok):
            raise ValueError(f"expected an integer, got {tok!r}")
        return int(tok)
    v = float(tok)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {tok!r}")
    return v


def _convert(raw: str, typ: str):
    if typ in ("floats", "ints"):
        if not (raw.startswith("[") and raw.endswith("]")):
            raise ValueError("expected an array like [1, 2]")
        body = raw[1:-1].strip()
        if not body:
            return ()
        return tuple(_number(t.strip(), typ) for t in body.split(","))
    if raw.startswith("["):
        raise ValueError("expected a scalar, got an array")
    if typ == "word":
        if not _WORD.match(raw):
            raise ValueError(f"invalid value {raw!r}")
        return raw
    return _number(raw, typ)


def _format(value, typ: str) -> str:
    if typ in ("floats", "ints"):
        return "[" + ", ".join(_format(v, typ[:-1]) for v in value) + "]"
    if typ == "float":
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict, compare=False)
    source: str = field(default="<config>", compare=False)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def mode(self) -> str:
        return self["run.mode"]

    @property
    def run_id(self) -> str:
        return self["run.run_id"]

    @property
    def seed(self) -> int:
        return self["run.seed"]

    def with_seed(self, seed: int) -> "RunConfig":
        values = {s: dict(v) for s, v in self.values.items()}
        values["run"]["seed"] = int(seed)
        return RunConfig(values, self.lines, self.source)

    # ------------------------------------------------------------ builders

    def model_params(self) -> ModelParams:
        m = self.values["model"]
        return ModelParams(m["reynolds"], m["weissenberg"], m["epsilon"], ModelKind.parse(m["kind"]), m["b"],
                           m["dim"])

    def initial_conformation(self) -> np.ndarray:
        ini = self.values["initial"]
        dim = self["model.dim"]
        if ini["entries"] is not None:
            return tensor_core.ConfTensor.from_upper(ini["entries"], dim).matrix
        eig = ini["eigenvalues"] if ini["eigenvalues"] is not None else (1.0,) * dim
        c, s = math.cos(ini["angle"]), math.sin(ini["angle"])
        rot = np.eye(dim)
        rot[:2, :2] = [[c, -s], [s, c]]
        return tensor_core.spd_from_eigen(np.array(eig, dtype=float), rot)

    def kappa_schedule(self):
        f = self.values["flow"]
        dim = self["model.dim"]
        n2 = dim * dim
        kap = np.zeros(n2) if f["kappa"] is None else np.array(f["kappa"], dtype=float)
        if f["schedule"] == "piecewise":
            blocks = kap.reshape(-1, dim, dim)
            return PiecewiseKappa(tuple(f["times"]), tuple(blocks))
        if f["schedule"] == "sinusoidal":
            return SinusoidalKappa(kap.reshape(dim, dim), np.array(f["amplitude"], dtype=float).reshape(dim, dim),
                                   f["frequency"], f["phase"] or 0.0)
        return ConstantKappa(kap.reshape(dim, dim))

    def homogeneous_scenario(self):
        t = self.values["time"]
        return HomogeneousScenario(self.model_params(), self.initial_conformation(), self.kappa_schedule(),
                                   t["dt"], t["t_end"], t["record_stride"])

    def channel_config(self):
        c = self.values["channel"]
        t = self.values["time"]
        return ChannelConfig(self.model_params(), c["ny"], t["dt"], t["t_end"], t["record_stride"],
                             c["snapshot_stride"], c["u_amplitude"], c["a_field"], tuple(c["a_eig_range"]),
                             None if c["a_entries"] is None else tuple(c["a_entries"]), self.seed)

    # ------------------------------------------------------------ text

    def to_text(self) -> str:
        out = []
        for section in SECTIONS_FOR[self.mode]:
            if out:
                out.append("")
            out.append(f"[{section}]")
            for key, (typ, _) in SCHEMA[section].items():
                v = self.values[section][key]
                if v is not None:
                    out.append(f"{key} = {_format(v, typ)}")
        return "\n".join(out) + "\n"


def _tokenize(text: str, source: str):
    """Yield ``(section, key, raw, line)``; syntax errors raise ParseError."""
    section = None
    seen_sections = set()
    seen_keys = set()
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _SECTION.match(body)
        if m:
            section = m.group(1).lower()
            if section in seen_sections:
                raise ParseError(f"section [{section}] appears twice", no, source)
            seen_sections.add(section)
            continue
        m = _KEY.match(body)
        if not m:
            raise ParseError(f"cannot parse {body!r}; expected 'key = value' or '[section]'", no, source)
        if section is None:
            raise ParseError("key outside of any section", no, source)
        key = m.group(1).lower()
        if (section, key) in seen_keys:
            raise ParseError(f"duplicate key {section}.{key}", no, source)
        seen_keys.add((section, key))
        yield section, key, m.group(2).strip(), no


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate; every validation problem is reported at once."""
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    lines: dict = {}
    present = set()
    problems = []
    for section, key, raw, no in _tokenize(text, source):
        if section not in SCHEMA:
            problems.append(f"line {no}: unknown section [{section}]")
            continue
        if key not in SCHEMA[section]:
            problems.append(f"line {no}: unknown key {section}.{key}")
            continue
        try:
            val = _convert(raw, SCHEMA[section][key][0])
            if SCHEMA[section][key][0] == "word" and key != "run_id":
                val = val.lower()
            values[section][key] = val
        except ValueError as exc:
            raise ParseError(f"{section}.{key}: {exc}", no, source) from None
        lines[f"{section}.{key}"] = no
        present.add(section)
    cfg = RunConfig(values, lines, source)
    problems += _validate(cfg, present)
    if problems:
        raise ValidationError(problems, source)
    _fill_defaults(values)
    return cfg


def _fill_defaults(values):
    dim = values["model"]["dim"]
    ini = values["initial"]
    if ini["entries"] is None and ini["eigenvalues"] is None:
        ini["eigenvalues"] = (1.0,) * dim
    if values["flow"]["kappa"] is None:
        values["flow"]["kappa"] = (0.0,) * (dim * dim)
    if values["flow"]["schedule"] == "sinusoidal" and values["flow"]["phase"] is None:
        values["flow"]["phase"] = 0.0


def _validate(cfg: RunConfig, present: set) -> list[str]:
    v = cfg.values
    lines = cfg.lines

    def at(key):
        key = key if key in lines else "model.kind" if key.startswith("model.") else key
        return f"line {lines[key]}: " if key in lines else ""

    out = []
    mode = v["run"]["mode"]
    if mode is None:
        return ["[run] mode is required"]
    if mode not in MODES:
        return [f"{at('run.mode')}unknown mode {mode!r}; expected one of {', '.join(MODES)}"]
    for s in sorted(present - set(SECTIONS_FOR[mode])):
        out.append(f"section [{s}] is not used by mode {mode}")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", str(v["run"]["run_id"])):
        out.append(f"{at('run.run_id')}run_id may only contain letters, digits, '_', '-', '.'")
    if v["run"]["seed"] < 0:
        out.append(f"{at('run.seed')}seed must be >= 0")

    if mode == "verify-inequalities":
        ver = v["verify"]
        if ver["n_samples"] < 1:
            out.append(f"{at('verify.n_samples')}n_samples must be >= 1")
        if not ver["dims"] or any(d not in (2, 3) for d in ver["dims"]):
            out.append(f"{at('verify.dims')}dims must be a non-empty subset of [2, 3]")
        if not ver["b_values"] or any(b <= max(ver["dims"] or (3,)) for b in ver["b_values"]):
            out.append(f"{at('verify.b_values')}every b must exceed the largest dim")
        if not ver["slack"] >= 0:
            out.append(f"{at('verify.slack')}slack must be >= 0")
        return out

    m = v["model"]
    try:
        kind = ModelKind.parse(m["kind"])
        m["kind"] = kind.value
    except ValueError:
        out.append(f"{at('model.kind')}unknown model kind {m['kind']!r}")
        kind = None
    if kind is not None:
        probe = ModelParams.__new__(ModelParams)
        for name in ("reynolds", "weissenberg", "epsilon", "b", "dim"):
            object.__setattr__(probe, name, m[name])
        object.__setattr__(probe, "kind", kind)
        for msg in probe.problems():
            first = msg.split()[0]
            key = f"model.{first}" if first in SCHEMA["model"] else "model.b"
            out.append(f"{at(key)}{msg}")
        if kind is ModelKind.OLDROYD_B and m["b"] is not None:
            out.append(f"{at('model.b')}b is only meaningful for fene-p")
    dim = m["dim"] if m["dim"] in (2, 3) else 2

    t = v["time"]
    if not t["dt"] > 0:
        out.append(f"{at('time.dt')}dt must be > 0")
    if not t["t_end"] >= t["dt"]:
        out.append(f"{at('time.t_end')}t_end must be >= dt")
    if t["record_stride"] < 1:
        out.append(f"{at('time.record_stride')}record_stride must be >= 1")

    if mode in ("homogeneous", "micro-macro"):
        out += _validate_initial(v, dim, kind, at)
        out += _validate_flow(v, dim, at)
    if mode == "micro-macro":
        if kind is ModelKind.FENE_P:
            out.append(f"{at('model.kind')}micro-macro supports the Hookean (oldroyd-b) model only")
        e = v["ensemble"]
        if e["n_particles"] < 2:
            out.append(f"{at('ensemble.n_particles')}n_particles must be >= 2")
        if e["n_repeats"] < 1:
            out.append(f"{at('ensemble.n_repeats')}n_repeats must be >= 1")
        if not e["c_dt"] >= 0:
            out.append(f"{at('ensemble.c_dt')}c_dt must be >= 0")
        if m["weissenberg"] > 0 and t["dt"] > 0.1 * m["weissenberg"]:
            out.append(f"{at('time.dt')}dt must not exceed 0.1*weissenberg for the dumbbell ensemble")
    if mode == "channel":
        out += _validate_channel(v, m, kind, at)
    return out


def _validate_initial(v, dim, kind, at) -> list[str]:
    out = []
    ini = v["initial"]
    if ini["entries"] is not None and ini["eigenvalues"] is not None:
        return [f"{at('initial.entries')}give either eigenvalues or entries, not both"]
    if ini["entries"] is not None:
        if len(ini["entries"]) != dim * (dim + 1) // 2:
            return [f"{at('initial.entries')}entries needs {dim * (dim + 1) // 2} values (upper triangle)"]
        a0 = tensor_core.ConfTensor.from_upper(ini["entries"], dim).matrix
        key = "initial.entries"
    else:
        eig = ini["eigenvalues"] if ini["eigenvalues"] is not None else (1.0,) * dim
        if len(eig) != dim:
            return [f"{at('initial.eigenvalues')}eigenvalues needs {dim} values"]
        if min(eig) <= 0:
            return [f"{at('initial.eigenvalues')}eigenvalues must be positive"]
        a0 = np.diag(eig)
        key = "initial.eigenvalues"
    if not tensor_core.is_spd(a0):
        out.append(f"{at(key)}initial conformation is not SPD")
    b = v["model"]["b"]
    if kind is ModelKind.FENE_P and b is not None and np.trace(a0) >= b:
        out.append(f"{at(key)}initial trace must be below b")
    return out


def _validate_flow(v, dim, at) -> list[str]:
    f = v["flow"]
    n2 = dim * dim
    sched = f["schedule"]
    if sched not in ("constant", "piecewise", "sinusoidal"):
        return [f"{at('flow.schedule')}schedule must be constant, piecewise or sinusoidal"]
    out = []
    kap = f["kappa"] if f["kappa"] is not None else (0.0,) * n2
    blocks = 1
    if sched == "piecewise":
        times = f["times"]
        if not times or times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
            out.append(f"{at('flow.times')}piecewise times must start at 0 and increase")
        blocks = len(times or ())
    elif f["times"] is not None:
        out.append(f"{at('flow.times')}times is only used by the piecewise schedule")
    if len(kap) != blocks * n2:
        out.append(f"{at('flow.kappa')}kappa needs {blocks * n2} values ({blocks} block(s) of {dim}x{dim})")
    else:
        for i, blk in enumerate(np.reshape(kap, (blocks, dim, dim))):
            if abs(np.trace(blk)) > 1e-12:
                out.append(f"{at('flow.kappa')}kappa block {i} must be traceless")
    if sched == "sinusoidal":
        amp = f["amplitude"]
        if amp is None or len(amp) != n2:
            out.append(f"{at('flow.amplitude')}amplitude needs {n2} values")
        elif abs(np.trace(np.reshape(amp, (dim, dim)))) > 1e-12:
            out.append(f"{at('flow.amplitude')}amplitude must be traceless")
        if f["frequency"] is None:
            out.append(f"{at('flow.frequency')}sinusoidal schedule needs frequency")
    else:
        for k in ("amplitude", "frequency", "phase"):
            if f[k] is not None:
                out.append(f"{at('flow.' + k)}{k} is only used by the sinusoidal schedule")
    return out


def _validate_channel(v, m, kind, at) -> list[str]:
    out = []
    c = v["channel"]
    if m["dim"] != 2:
        out.append(f"{at('model.dim')}the channel needs dim = 2")
    if c["ny"] < 5:
        out.append(f"{at('channel.ny')}ny must be >= 5")
    if c["snapshot_stride"] < 0:
        out.append(f"{at('channel.snapshot_stride')}snapshot_stride must be >= 0")
    if c["a_field"] not in ("identity", "equilibrium", "uniform", "random"):
        out.append(f"{at('channel.a_field')}a_field must be identity, equilibrium, uniform or random")
    lo_hi = c["a_eig_range"]
    if len(lo_hi) != 2 or not 0 < lo_hi[0] <= lo_hi[1]:
        out.append(f"{at('channel.a_eig_range')}a_eig_range must be [lo, hi] with 0 < lo <= hi")
    if c["a_field"] == "uniform":
        ent = c["a_entries"]
        if ent is None or len(ent) != 3:
            out.append(f"{at('channel.a_entries')}uniform a_field needs a_entries = [A11, A12, A22]")
        elif not tensor_core.is_spd(tensor_core.ConfTensor.from_upper(ent, 2).matrix):
            out.append(f"{at('channel.a_entries')}a_entries is not SPD")
    elif c["a_entries"] is not None:
        out.append(f"{at('channel.a_entries')}a_entries is only used with a_field = uniform")
    if kind is ModelKind.FENE_P and m["b"] is not None and m["b"] > 2:
        b = m["b"]
        if c["a_field"] == "random" and 2 * lo_hi[-1] >= b:
            out.append(f"{at('channel.a_eig_range')}random field trace can reach {2 * lo_hi[-1]}, not below b={b}")
        if c["a_field"] == "identity" and b <= 2:
            out.append(f"{at('model.b')}identity field needs b > 2")
        if c["a_field"] == "uniform" and c["a_entries"] is not None and len(c["a_entries"]) == 3 \
                and c["a_entries"][0] + c["a_entries"][2] >= b:
            out.append(f"{at('channel.a_entries')}uniform field trace must be below b")
    return out
