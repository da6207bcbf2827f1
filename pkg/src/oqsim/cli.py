"""Experiment runner: config parsing, trajectory CSVs, SVG plots, tables.

Configs are flat ``key = value`` text with optional ``[experiment]`` and
``[outputs]`` sections; unknown keys are rejected with their line number.
Angles accept fractions of pi (``pi/10``, ``2pi/3``) and plain decimals.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis, channels, circuit, engine
from .qmath import DensityMatrix, Wire

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


_PI_FORM = re.compile(r"^(\d+(?:\.\d+)?)?pi(?:/(\d+(?:\.\d+)?))?$")


def parse_angle(text: str) -> float:
    """Angle from ``pi/10``-style fractions or a decimal literal."""
    s = str(text).strip().lower().replace(" ", "").replace("*", "")
    m = _PI_FORM.match(s)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


_NAMED_STATES = {
    "|0>": [1.0, 0.0],
    "|1>": [0.0, 1.0],
    "|+>": [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
    "|->": [1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)],
}
for _alias, _key in (("0", "|0>"), ("1", "|1>"), ("+", "|+>"), ("-", "|->")):
    _NAMED_STATES[_alias] = _NAMED_STATES[_key]


def parse_initial(text: str) -> DensityMatrix:
    """Named ket (|0>, |1>, |+>, |->) or explicit matrix rows ``a,b;c,d``."""
    s = str(text).strip()
    layout = (Wire("q"),)
    if s in _NAMED_STATES:
        return DensityMatrix.from_pure(_NAMED_STATES[s], layout)
    if ";" in s:
        try:
            rows = [
                [complex(cell.strip().replace(" ", "")) for cell in row.split(",")]
                for row in s.split(";")
            ]
            return DensityMatrix(np.array(rows, dtype=complex), layout)
        except ValueError as exc:
            raise ConfigError(f"cannot parse initial state {text!r}: {exc}") from None
    raise ConfigError(
        f"unknown initial state {text!r}; expected |0>, |1>, |+>, |-> or matrix rows"
    )


_CHANNELS = ("amplitude-damping", "dephasing", "pauli", "custom-file")
_MODES = ("markovian", "non-markovian", "sequential")

PRESETS = {
    "fig6": {
        "channel": "amplitude-damping",
        "theta": "pi/10",
        "thetas": "pi/10, 2pi/3, 5pi/6",
        "k": "3",
        "steps": "50",
        "initial": "|1>",
        "observables": "p1",
    },
    "fig7": {
        "channel": "dephasing",
        "theta": "pi/5",
        "thetas": "pi/5, pi/4, pi/2",
        "k": "3",
        "steps": "100",
        "initial": "|+>",
        "observables": "p+",
    },
    "fig8": {
        "channel": "amplitude-damping",
        "theta": "pi/8",
        "thetas": "pi/8, 5pi/6, pi",
        "k": "3",
        "steps": "50",
        "initial": "|1>",
        "observables": "p1",
    },
}

_EXPERIMENT_KEYS = (
    "preset",
    "channel",
    "mode",
    "theta",
    "thetas",
    "k",
    "steps",
    "initial",
    "observables",
    "px",
    "py",
    "pz",
    "channel_file",
)
_OUTPUT_KEYS = ("csv", "svg", "circuit")
_SECTIONS = ("experiment", "outputs")


@dataclass
class ExperimentConfig:
    channel: str
    modes: tuple[str, ...]          # one mode, or both arms for a preset
    label: str
    steps: int
    initial: DensityMatrix
    observables: tuple[str, ...]
    theta: float | None = None
    thetas: tuple[float, ...] | None = None
    k: int | None = None
    px: float = 0.0
    py: float = 0.0
    pz: float = 0.0
    channel_file: str | None = None
    csv: str | None = None
    svg: str | None = None
    circuit_dump: str | None = None
    resource_table: bool = False


def _read_keyvalues(path) -> dict:
    """Raw key -> (value, line) mapping with strict key checking."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=path) from None
    out = {}
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", path=path, line=ln)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", path=path, line=ln)
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        value = value.strip()
        if key == "dump_circuit":
            key = "circuit"
        if key not in _EXPERIMENT_KEYS and key not in _OUTPUT_KEYS:
            raise ConfigError(f"unknown key {key!r}", path=path, line=ln)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", path=path, line=ln)
        out[key] = (value, ln)
    return out


def _build_config(raw: dict, path=None, resource_table: bool = False) -> ExperimentConfig:
    """Validate a raw key -> (value, line) mapping into a full config."""

    def where(key):
        return raw[key][1] if key in raw and raw[key][1] is not None else None

    def fail(key, message):
        raise ConfigError(message, path=path, line=where(key))

    preset = None
    if "preset" in raw:
        name = raw["preset"][0]
        if name not in PRESETS:
            fail("preset", f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        preset = name
        for key, value in PRESETS[name].items():
            raw.setdefault(key, (value, None))

    if "channel" not in raw:
        fail("channel", "missing required key 'channel'")
    channel = raw["channel"][0]
    if channel not in _CHANNELS:
        fail("channel", f"unknown channel {channel!r}; expected one of {_CHANNELS}")

    if preset is not None and "mode" not in raw:
        modes = ("markovian", "non-markovian")
    else:
        if "mode" not in raw:
            fail("mode", "missing required key 'mode'")
        mode = raw["mode"][0]
        if mode not in _MODES:
            fail("mode", f"unknown mode {mode!r}; expected one of {_MODES}")
        modes = (mode,)

    theta = parse_angle(raw["theta"][0]) if "theta" in raw else None
    thetas = None
    if "thetas" in raw:
        thetas = tuple(parse_angle(t) for t in raw["thetas"][0].split(",") if t.strip())
    k = None
    if "k" in raw:
        try:
            k = int(raw["k"][0])
        except ValueError:
            fail("k", f"k must be an integer, got {raw['k'][0]!r}")

    if "markovian" in modes and theta is None:
        fail("theta", "mode markovian requires 'theta'")
    if "non-markovian" in modes:
        if thetas is None:
            fail("thetas", "mode non-markovian requires 'thetas'")
        if k is None:
            k = len(thetas)
        if k < 2:
            fail("k", f"mode non-markovian requires k >= 2, got {k}")
        if len(thetas) != k:
            fail("thetas", f"'thetas' has {len(thetas)} angles but k = {k}")
    if "sequential" in modes:
        if channel not in ("pauli", "custom-file"):
            fail("mode", "mode sequential requires channel pauli or custom-file")
    if channel in ("amplitude-damping", "dephasing") and "sequential" in modes:
        fail("channel", f"channel {channel} does not support mode sequential")
    if channel in ("pauli", "custom-file") and modes != ("sequential",):
        fail("channel", f"channel {channel} requires mode sequential")
    if channel == "custom-file" and "channel_file" not in raw:
        fail("channel_file", "channel custom-file requires 'channel_file'")

    probs = {}
    for key in ("px", "py", "pz"):
        try:
            probs[key] = float(raw[key][0]) if key in raw else 0.0
        except ValueError:
            fail(key, f"{key} must be a number, got {raw[key][0]!r}")

    if "steps" in raw:
        try:
            steps = int(raw["steps"][0])
        except ValueError:
            fail("steps", f"steps must be an integer, got {raw['steps'][0]!r}")
    else:
        steps = 100 if channel == "dephasing" else 50
    if steps < 1:
        fail("steps", f"steps must be >= 1, got {steps}")

    if "initial" in raw:
        try:
            initial = parse_initial(raw["initial"][0])
        except ConfigError as exc:
            fail("initial", str(exc))
    else:
        initial = parse_initial("|+>" if channel == "dephasing" else "|1>")

    if "observables" in raw:
        names = tuple(n.strip() for n in raw["observables"][0].split(",") if n.strip())
    else:
        names = ("p+",) if channel == "dephasing" else ("p1",)
    for n in names:
        try:
            engine.projector_observable(n)
        except ValueError as exc:
            fail("observables", str(exc))

    label = preset if preset is not None else f"{channel}-{modes[0]}"
    return ExperimentConfig(
        channel=channel,
        modes=modes,
        label=label,
        steps=steps,
        initial=initial,
        observables=names,
        theta=theta,
        thetas=thetas,
        k=k,
        px=probs["px"],
        py=probs["py"],
        pz=probs["pz"],
        channel_file=raw["channel_file"][0] if "channel_file" in raw else None,
        csv=raw["csv"][0] if "csv" in raw else None,
        svg=raw["svg"][0] if "svg" in raw else None,
        circuit_dump=raw["circuit"][0] if "circuit" in raw else None,
        resource_table=resource_table,
    )


def parse_config(path) -> ExperimentConfig:
    """Load and validate a config file."""
    return _build_config(_read_keyvalues(path), path=path)


def _atomic_write(path, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, traj: engine.Trajectory):
    lines = ["step,observable,value,trace,purity"]
    for rec in traj.records:
        for name in traj.observable_names:
            lines.append(
                f"{rec.step},{name},{rec.values[name]!r},{rec.trace!r},{rec.purity!r}"
            )
    _atomic_write(path, "\n".join(lines) + "\n")


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def write_svg(path, series: dict, steps: int, title: str):
    """Static line plot: one polyline per labelled series, values in [0, 1]."""
    width, height, margin = 640, 440, 56

    def x(n):
        return margin + (width - 2 * margin) * (n / max(steps, 1))

    def y(v):
        return height - margin - (height - 2 * margin) * min(max(v, 0.0), 1.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    for tick in range(0, 11, 2):
        v = tick / 10.0
        parts.append(
            f'<text x="{margin - 8}" y="{y(v) + 4:.1f}" text-anchor="end" '
            f'font-size="10">{v:.1f}</text>'
        )
    for i, (name, values) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        points = " ".join(f"{x(n):.2f},{y(v):.2f}" for n, v in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{color}" points="{points}"/>')
        parts.append(
            f'<text x="{width - margin - 4}" y="{margin + 14 * (i + 1)}" '
            f'text-anchor="end" font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


def _sequential_channel(cfg: ExperimentConfig) -> channels.KrausChannel:
    if cfg.channel == "pauli":
        try:
            return channels.pauli_channel(cfg.px, cfg.py, cfg.pz)
        except channels.ParameterError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return channels.load_channel(cfg.channel_file)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load channel file {cfg.channel_file!r}: {exc}") from exc


def _build_arm(cfg: ExperimentConfig, mode: str):
    """Returns (arm name, step circuit, resource method, k, l)."""
    try:
        if mode == "markovian":
            step = circuit.build_markovian_step(cfg.channel, cfg.theta)
            return "markovian", step, "direct-dilation", 1, 2
        if mode == "non-markovian":
            mem = circuit.MemorySpec(cfg.k, cfg.thetas)
            step = circuit.build_nonmarkovian_step(cfg.channel, mem)
            return "nonmarkovian", step, "direct-dilation", cfg.k, 2
        ch = _sequential_channel(cfg)
        report = channels.validate(ch)
        if not report.passed:
            raise ConfigError(
                f"custom channel fails completeness by {report.deviation:.3e}"
            )
        step = circuit.build_sequential_step(ch)
        return "sequential", step, "sequential", 1, len(ch)
    except circuit.BuilderError as exc:
        raise ConfigError(str(exc)) from exc


def _arm_path(base: str | None, default_stem: str, arm: str, many: bool, ext: str):
    if base is None:
        stem = default_stem
    else:
        stem = base[: -len(ext)] if base.endswith(ext) else base
    return f"{stem}_{arm}{ext}" if many else (base or f"{stem}{ext}")


def _resource_comparison_table() -> str:
    """Sequential vs dilation qubit needs across synthetic Kraus ranks."""
    lines = ["l  sequential_qubits  dilation_qubits  sequential_gates_per_step"]
    paulis = [channels.PAULI_X, channels.PAULI_Y, channels.PAULI_Z]
    for l in (2, 4, 8, 16):
        ops = [math.sqrt(1.0 / l) * paulis[i % 3] for i in range(l)]
        ch = channels.KrausChannel(2, ops, label=f"synthetic-l{l}")
        seq = analysis.resource_count(
            circuit.build_sequential_step(ch), 1, "sequential", 1, l
        )
        dil = analysis.resource_count(
            circuit.build_dilation_step(ch), 1, "direct-dilation", 1, l
        )
        lines.append(
            f"{l:<2} {seq.qubit_count:>17} {dil.qubit_count:>16} "
            f"{seq.gates_per_step:>25}"
        )
    return "\n".join(lines)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Build the configured circuits, run them and write the outputs."""
    arms = [_build_arm(cfg, mode) for mode in cfg.modes]
    observables = [engine.projector_observable(n) for n in cfg.observables]
    many = len(arms) > 1
    all_series = {}
    for arm, step, method, k, l in arms:
        traj = engine.run(step, cfg.initial, cfg.steps, observables)
        csv_path = _arm_path(cfg.csv, cfg.label, arm, many, ".csv")
        write_csv(csv_path, traj)
        print(f"[{cfg.label}/{arm}] wrote {csv_path}")
        if cfg.circuit_dump is not None:
            dump_path = _arm_path(cfg.circuit_dump, cfg.label, arm, many, ".circuit")
            _atomic_write(dump_path, circuit.dump_circuit(step))
            print(f"[{cfg.label}/{arm}] wrote {dump_path}")
        report = analysis.resource_count(step, cfg.steps, method, k, l)
        print(report.as_text(), end="")
        verdict = analysis.monotonicity_check(traj, cfg.observables[0])
        print(
            f"[{cfg.label}/{arm}] {cfg.observables[0]} monotone: {verdict.monotone}"
            + (
                f" (first revival at step {verdict.first_violation}, "
                f"max {verdict.max_revival:.4g})"
                if not verdict.monotone
                else ""
            )
        )
        for name in cfg.observables:
            all_series[f"{arm}:{name}"] = traj.series(name)
    if cfg.svg is not None:
        svg_path = cfg.svg if cfg.svg.endswith(".svg") else f"{cfg.svg}.svg"
        write_svg(svg_path, all_series, cfg.steps, cfg.label)
        print(f"[{cfg.label}] wrote {svg_path}")
    if cfg.resource_table:
        print(_resource_comparison_table())
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Open-system circuit trajectories: CSVs, plots, resource tables.",
    )
    p.add_argument("--config", help="config file path")
    p.add_argument("--preset", choices=sorted(PRESETS), help="builtin parameter set")
    p.add_argument("--channel", help="amplitude-damping | dephasing | pauli | custom-file")
    p.add_argument("--mode", help="markovian | non-markovian | sequential")
    p.add_argument("--theta", help="one-step angle, e.g. pi/10")
    p.add_argument("--thetas", help="comma-separated memory angles")
    p.add_argument("--k", help="memory order")
    p.add_argument("--steps", help="number of steps")
    p.add_argument("--initial", help="|0>, |1>, |+>, |-> or matrix rows a,b;c,d")
    p.add_argument("--observables", help="comma-separated from p0,p1,p+,p-")
    p.add_argument("--px", help="pauli X probability")
    p.add_argument("--py", help="pauli Y probability")
    p.add_argument("--pz", help="pauli Z probability")
    p.add_argument("--channel-file", help="custom channel spec (JSON)")
    p.add_argument("--csv", help="trajectory CSV output path")
    p.add_argument("--svg", help="SVG line-plot output path")
    p.add_argument("--dump-circuit", help="step circuit dump output path")
    p.add_argument(
        "--resource-table",
        action="store_true",
        help="print the sequential vs dilation comparison table",
    )
    p.add_argument(
        "--sweep",
        nargs="+",
        metavar="CONFIG",
        help="run several config files concurrently",
    )
    return p


_FLAG_KEYS = (
    "preset",
    "channel",
    "mode",
    "theta",
    "thetas",
    "k",
    "steps",
    "initial",
    "observables",
    "px",
    "py",
    "pz",
    "channel_file",
    "csv",
    "svg",
)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.sweep:
            with ThreadPoolExecutor(max_workers=min(8, len(args.sweep))) as pool:
                codes = list(pool.map(_run_one_config, args.sweep))
            return max(codes)
        raw = _read_keyvalues(args.config) if args.config else {}
        for key in _FLAG_KEYS:
            value = getattr(args, key)
            if value is not None:
                raw[key] = (value, None)
        if args.dump_circuit is not None:
            raw["circuit"] = (args.dump_circuit, None)
        if not raw:
            print("nothing to do: pass --config, --preset or experiment flags",
                  file=sys.stderr)
            return EXIT_CONFIG
        cfg = _build_config(raw, path=args.config, resource_table=args.resource_table)
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.NumericalViolationError as exc:
        print(f"numerical invariant violation: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _run_one_config(path) -> int:
    try:
        return run_experiment(parse_config(path))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.NumericalViolationError as exc:
        print(f"numerical invariant violation: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
