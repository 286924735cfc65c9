"""Command-line experiment runner.

Usage::

    qrclab concentration --ns 3,4,5 --seed 7 -o conc.csv
    qrclab alpha --ns 4
    qrclab discriminate --ns 4,6 --realizations 20 --seed 1 --format json

Settings are resolved from (lowest to highest priority) built-in defaults,
the ``QRCLAB_SEED`` environment variable, a ``--config`` key=value file and
command-line flags. Each run writes one results file and a sidecar
``<results>.meta.json`` with the resolved configuration and timing.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidArgument, InvariantError, QrcError
from .experiments import (
    ResultTable,
    alpha_trajectory,
    run_concentration,
    run_discrimination,
    run_echo_state,
    verify_lemma1,
    verify_variance_scaling,
)
from .measurement import ShotConfig
from .reservoir import PHASE_PRESETS, IsingParams

EXPERIMENTS = ("concentration", "echo-state", "discriminate", "lemma1", "variance-scaling", "alpha")

DEFAULT_NS = {
    "concentration": [3, 4, 5, 6, 7],
    "echo-state": [7],
    "discriminate": [4, 6, 8],
    "lemma1": [3],
    "variance-scaling": [2, 3, 4, 5, 6, 7],
    "alpha": [4],
}


class UsageError(Exception):
    def __init__(self, key: str, msg: str):
        self.key = key
        super().__init__(f"{key}: {msg}")


@dataclass
class RunConfig:
    experiment: str
    ns: list = field(default_factory=list)
    realizations: int = 100
    washout: int = 200
    measure_steps: int = 200
    W: float = 1e-2
    h: float = 10.0
    dt: float = 10.0
    J_s: float = 1.0
    shots: str = "exact"
    seed: int = 0
    output_path: str = ""
    format: str = "csv"
    phase_preset: str | None = None
    workers: int = 1
    # experiment-specific knobs
    inputs_count: int = 500
    threshold: float = 1e-10
    record_every: int = 10
    series_length: int = 1000
    symmetric: str = "block-haar"
    scrambler: str = "ising"
    samples: int = 10000
    repeats: int = 1
    ensemble: str = "haar"
    state: str = "injected"
    steps: int = 0
    input_bit: int = 1

    def ising_params(self, n: int = 2) -> IsingParams:
        return IsingParams(n, J_s=self.J_s, h=self.h, W=self.W, dt=self.dt, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_POSITIVE_INT = {"realizations", "measure_steps", "workers", "inputs_count", "record_every",
                 "series_length", "samples", "repeats"}
_NONNEG_INT = {"washout", "seed", "steps"}
_POSITIVE_FLOAT = {"dt", "J_s", "threshold"}
_CHOICES = {
    "format": ("csv", "json"),
    "phase_preset": tuple(PHASE_PRESETS),
    "symmetric": ("block-haar", "ising"),
    "scrambler": ("ising", "haar", "block-haar", "identity"),
    "ensemble": ("haar", "block-haar"),
    "state": ("injected", "pure"),
    "experiment": EXPERIMENTS,
}


def _coerce(key: str, raw) -> object:
    """Turn a raw string (or already-typed value) into the field's type, with bounds checks."""
    try:
        if key == "ns":
            vals = [int(x) for x in str(raw).replace(" ", "").split(",") if x] if isinstance(raw, str) else [int(x) for x in raw]
            if not vals:
                raise ValueError("empty list")
            if any(v < 1 for v in vals):
                raise ValueError("qubit counts must be >= 1")
            return vals
        if key in _POSITIVE_INT or key in _NONNEG_INT or key == "input_bit":
            v = int(raw)
            if key in _POSITIVE_INT and v < 1:
                raise ValueError("must be >= 1")
            if key in _NONNEG_INT and v < 0:
                raise ValueError("must be >= 0")
            if key == "input_bit" and v not in (0, 1):
                raise ValueError("must be 0 or 1")
            return v
        if key in ("W", "h") or key in _POSITIVE_FLOAT:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("must be finite")
            if key in _POSITIVE_FLOAT and v <= 0:
                raise ValueError("must be > 0")
            if key == "W" and v < 0:
                raise ValueError("must be >= 0")
            return v
        if key == "shots":
            return str(ShotConfig.parse(raw))
        if key in _CHOICES:
            v = str(raw)
            if v not in _CHOICES[key]:
                raise ValueError(f"must be one of {', '.join(_CHOICES[key])}")
            return v
        return str(raw)
    except (TypeError, ValueError, InvalidArgument) as exc:
        raise UsageError(key, f"invalid value {raw!r} ({exc})") from None


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "output":
            key = "output_path"
        if key not in FIELDS:
            raise UsageError(key, "unknown configuration key")
        out[key] = value
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="flat key=value file; flags override its values")
    p.add_argument("--ns", default=S, help="comma-separated qubit counts")
    p.add_argument("--realizations", default=S, help="ensemble size (default 100)")
    p.add_argument("--washout", default=S, help="discarded initial inputs (default 200)")
    p.add_argument("--measure-steps", dest="measure_steps", default=S, help="recorded steps (default 200)")
    p.add_argument("--W", default=S, help="disorder width in J_s units (default 1e-2)")
    p.add_argument("--h", dest="h", default=S, help="uniform field in J_s units (default 10)")
    p.add_argument("--dt", default=S, help="time between inputs in 1/J_s units (default 10)")
    p.add_argument("--J-s", dest="J_s", default=S, help="coupling scale (default 1)")
    p.add_argument("--shots", default=S, help="'exact' or a positive shot count (default exact)")
    p.add_argument("--seed", default=S, help="master seed (default: $QRCLAB_SEED or 0)")
    p.add_argument("-o", "--output", dest="output_path", default=S, help="results file (default <experiment>.<format>)")
    p.add_argument("--format", default=S, help="csv or json (default csv)")
    p.add_argument("--phase-preset", dest="phase_preset", default=S,
                   help="thermal-main (W=1e-2,h=10), thermal-sm (W=1e-1,h=10) or localized (W=1e2,h=10); overrides W and h")
    p.add_argument("--workers", default=S, help="threads for ensemble members (default 1); output is identical for any value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrclab", description="Quantum reservoir concentration experiments.")
    parser.add_argument("--version", action="version", version=f"qrclab {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    S = argparse.SUPPRESS
    specs = {
        "concentration": ("temporal variance of Pauli expectations vs n",
                          [("--scrambler", "ising|haar|block-haar|identity (default ising)")]),
        "echo-state": ("trace distance of two trajectories from different initial states",
                       [("--inputs-count", "injected inputs (default 500)"),
                        ("--threshold", "N_c threshold (default 1e-10)"),
                        ("--record-every", "distance recording stride (default 10)")]),
        "discriminate": ("constant |0>/|1> series discrimination",
                         [("--series-length", "inputs per series (default 1000)"),
                          ("--symmetric", "block-haar|ising (default block-haar)")]),
        "lemma1": ("Monte Carlo check of the sector-uniform mean state",
                   [("--samples", "largest sample count; checkpoints are decades up to it (default 10000)"),
                    ("--repeats", "independent ensembles averaged (default 1)")]),
        "variance-scaling": ("Var_U Tr{O U rho U^dag} vs n",
                             [("--samples", "unitary draws per n (default 10000)"),
                              ("--ensemble", "haar|block-haar (default haar)"),
                              ("--state", "injected|pure (default injected)")]),
        "alpha": ("sector-population recurrence",
                  [("--steps", "number of injections (default 3n^2)"),
                   ("--input-bit", "0 or 1 (default 1)")]),
    }
    for name, (helptext, extra) in specs.items():
        p = sub.add_parser(name, help=helptext, description=helptext)
        _add_common(p)
        for flag, h in extra:
            p.add_argument(flag, dest=flag[2:].replace("-", "_"), default=S, help=h)
    return parser


def parse_config(argv=None, config_text: str | None = None, env=None) -> RunConfig:
    """Resolve a :class:`RunConfig` from defaults, environment, config file and flags."""
    env = os.environ if env is None else env
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    experiment = ns.pop("experiment", None)
    config_path = ns.pop("config", None)
    if config_text is None and config_path:
        try:
            config_text = Path(config_path).read_text()
        except OSError as exc:
            raise UsageError("config", f"cannot read {config_path}: {exc}") from None
    file_vals = parse_config_text(config_text) if config_text else {}
    file_exp = file_vals.pop("experiment", None)
    if experiment and file_exp and file_exp != experiment:
        raise UsageError("experiment", f"command selects {experiment!r} but config file selects {file_exp!r}")
    experiment = experiment or file_exp
    if not experiment:
        raise UsageError("experiment", f"choose one of {', '.join(EXPERIMENTS)}")
    experiment = _coerce("experiment", experiment)

    merged: dict = {}
    if env.get("QRCLAB_SEED"):
        merged["seed"] = env["QRCLAB_SEED"]
    merged.update(file_vals)
    merged.update({k: v for k, v in ns.items()})
    values = {k: _coerce(k, v) for k, v in merged.items()}

    cfg = RunConfig(experiment=experiment, **values)
    if not cfg.ns:
        cfg.ns = list(DEFAULT_NS[experiment])
    if cfg.phase_preset:
        cfg.W, cfg.h = PHASE_PRESETS[cfg.phase_preset]
    if not cfg.output_path:
        cfg.output_path = f"{experiment}.{cfg.format}"
    _check_experiment_bounds(cfg)
    return cfg


def _check_experiment_bounds(cfg: RunConfig) -> None:
    e = cfg.experiment
    needs_two = e in ("concentration", "echo-state", "discriminate", "variance-scaling")
    if needs_two and min(cfg.ns) < 2:
        raise UsageError("ns", f"{e} needs every n >= 2")
    if e == "lemma1" and max(cfg.ns) > 6:
        raise UsageError("ns", "lemma1 supports n <= 6")
    if e == "variance-scaling" and max(cfg.ns) > 8:
        raise UsageError("ns", "variance-scaling supports n <= 8")
    if e == "concentration" and cfg.measure_steps < 2:
        raise UsageError("measure_steps", "must be >= 2")
    if max(cfg.ns) > 10 and e != "alpha":
        raise UsageError("ns", "dense simulation is limited to n <= 10")


# ---------------------------------------------------------------------------
# Execution


def execute(cfg: RunConfig) -> ResultTable:
    shots = ShotConfig.parse(cfg.shots)
    if cfg.experiment == "concentration":
        res = run_concentration(cfg.ns, cfg.realizations, cfg.washout, cfg.measure_steps,
                                params=cfg.ising_params(), seed=cfg.seed, scrambler=cfg.scrambler,
                                shots=shots, workers=cfg.workers)
        for r in res.records():
            if not r["mean_variance"] >= 0:
                raise InvariantError("nonnegative variance", str(r))
    elif cfg.experiment == "echo-state":
        phase = cfg.phase_preset or f"W={cfg.W:g},h={cfg.h:g}"
        res = run_echo_state(cfg.ns, cfg.realizations, cfg.inputs_count, phases=[(phase, cfg.W, cfg.h)],
                             threshold=cfg.threshold, seed=cfg.seed, dt=cfg.dt, J_s=cfg.J_s,
                             record_every=cfg.record_every, workers=cfg.workers)
        for r in res.where(quantity="trace_distance"):
            if not -1e-12 <= r["value"] <= 1 + 1e-9:
                raise InvariantError("trace distance in [0, 1]", str(r))
        for r in res.where(quantity="n_c"):
            if r["value"] > 2 * 4 ** r["n"]:
                raise InvariantError("N_c <= 2*4^n", str(r))
    elif cfg.experiment == "discriminate":
        res = run_discrimination(cfg.ns, cfg.realizations, cfg.series_length, seed=cfg.seed,
                                 symmetric=cfg.symmetric, params=cfg.ising_params(), shots=shots,
                                 workers=cfg.workers)
        for r in res.records():
            if abs(r["expectation"]) > 1 + 1e-9:
                raise InvariantError("expectation in [-1, 1]", str(r))
    elif cfg.experiment == "lemma1":
        checkpoints = [10**k for k in range(2, int(math.log10(cfg.samples)) + 1)] or [cfg.samples]
        if checkpoints[-1] != cfg.samples:
            checkpoints.append(cfg.samples)
        tables = [verify_lemma1(n, checkpoints, seed=cfg.seed, repeats=cfg.repeats) for n in cfg.ns]
        res = ResultTable("lemma1", tables[0].columns, [row for t in tables for row in t.rows],
                          {f"slope_n{n}": t.summary.get("slope") for n, t in zip(cfg.ns, tables)})
    elif cfg.experiment == "variance-scaling":
        res = verify_variance_scaling(cfg.ns, cfg.samples, seed=cfg.seed, ensemble=cfg.ensemble, state=cfg.state)
    elif cfg.experiment == "alpha":
        res = _alpha_table(cfg)
    else:  # pragma: no cover - parse_config rejects this
        raise UsageError("experiment", cfg.experiment)
    return res


def _alpha_table(cfg: RunConfig) -> ResultTable:
    tables = []
    for n in cfg.ns:
        steps = cfg.steps or 3 * n * n
        traj = alpha_trajectory(np.full(n + 1, 1.0 / (n + 1)), steps, cfg.input_bit)
        tables.append((n, traj.to_table()))
    if len(tables) == 1:
        return tables[0][1]
    width = max(cfg.ns) + 1
    cols = ("n", "step") + tuple(f"alpha_{l}" for l in range(width))
    rows = []
    for n, t in tables:
        for row in t.rows:
            rows.append((n, *row) + (None,) * (width - (len(row) - 1)))
    return ResultTable("alpha", cols, rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render(table: ResultTable, fmt: str) -> str:
    """Serialize rows deterministically (17 significant digits for floats)."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(table.columns) + "\n")
        for row in table.rows:
            buf.write(",".join(_csv_cell(_fmt(v)) for v in row) + "\n")
        return buf.getvalue()
    lines = []
    for row in table.rows:
        items = []
        for k, v in zip(table.columns, row):
            if v is None:
                val = "null"
            elif isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_)):
                val = _fmt(v) if math.isfinite(float(v)) else "null"
            else:
                val = json.dumps(str(v))
            items.append(f"{json.dumps(k)}: {val}")
        lines.append("  {" + ", ".join(items) + "}")
    return "[\n" + ",\n".join(lines) + ("\n" if lines else "") + "]\n"


def _csv_cell(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def run(cfg: RunConfig) -> int:
    """Execute ``cfg``, write results plus metadata sidecar, and return an exit code."""
    t0 = time.perf_counter()
    try:
        table = execute(cfg)
    except InvariantError as exc:
        print(f"qrclab: invariant violated: {exc.invariant} ({exc})", file=sys.stderr)
        return 3
    except QrcError as exc:
        print(f"qrclab: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    out = Path(cfg.output_path)
    meta = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "qrclab_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "wall_time_s": wall,
        "rows": len(table.rows),
        "summary": table.summary,
    }
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(render(table, cfg.format))
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")
    except OSError as exc:
        print(f"qrclab: cannot write results: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(table.rows)} rows to {out} ({wall:.1f}s)", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"qrclab: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
