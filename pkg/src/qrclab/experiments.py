"""Seeded ensemble experiments and analytic oracles.

Every run_* / verify_* function is deterministic given ``seed``: realization
``r`` at size ``n`` always draws from ``RngStream(seed, EXPERIMENT_ID).spawn(n, r)``,
so results do not depend on ``workers`` or on scheduling. Rows are emitted in
a fixed sort order.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import qla
from .errors import InvalidArgument
from .measurement import ShotConfig, sampled_expectation, single_qubit_paulis
from .reservoir import (
    PHASE_PRESETS,
    InputSeries,
    IsingParams,
    ReservoirConfig,
    build_ising,
    random_initial_state,
    reservoir_step,
    run_trajectory,
)
from .symmetry import (
    block_haar_unitaries,
    block_haar_unitary,
    check_alphas,
    magnetization_sectors,
    sector_populations,
    lemma1_mean_state,
)

__all__ = [
    "ResultTable",
    "ConcentrationResult",
    "EchoStateResult",
    "DiscriminationResult",
    "Lemma1Result",
    "VarianceScalingResult",
    "AlphaTrajectory",
    "alpha_recurrence_step",
    "alpha_trajectory",
    "alpha_convergence_time",
    "sample_alpha_trajectory",
    "haar_two_design_variance",
    "log_slope",
    "run_concentration",
    "run_echo_state",
    "run_discrimination",
    "verify_lemma1",
    "verify_variance_scaling",
]

STREAM_CONCENTRATION = 1
STREAM_ECHO = 2
STREAM_DISCRIMINATION = 3
STREAM_LEMMA1 = 4
STREAM_VARIANCE = 5
STREAM_ALPHA = 6

SCRAMBLERS = ("ising", "haar", "block-haar", "identity")


def _pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def log_slope(x, y) -> float:
    """Least-squares slope of ``ln y`` against ``x``."""
    return float(np.polyfit(np.asarray(x, float), np.log(np.asarray(y, float)), 1)[0])


@dataclass
class ResultTable:
    """Rows plus explicit column names; ``summary`` holds derived fits."""

    experiment: str
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    def where(self, **match) -> list[dict]:
        return [r for r in self.records() if all(r[k] == v for k, v in match.items())]


# ---------------------------------------------------------------------------
# Sector-population recurrence


def alpha_recurrence_step(alphas, input_bit: int) -> np.ndarray:
    """Advance sector populations by one injection of ``|input_bit>``.

    Exact for a sector-uniform reservoir with qubit 0 as the input site. For
    bit 1 a sector-l state keeps weight l if the erased qubit was already 1
    (probability l/n) and moves to l+1 otherwise. Bit 0 is the mirror image
    ``l <-> n - l``.
    """
    a = np.asarray(alphas, dtype=float)
    if input_bit not in (0, 1):
        raise InvalidArgument(f"input_bit must be 0 or 1, got {input_bit}")
    if a.ndim != 1 or a.size < 2:
        raise InvalidArgument("need populations for n >= 1 qubits")
    if input_bit == 0:
        return alpha_recurrence_step(a[::-1], 1)[::-1].copy()
    n = a.size - 1
    l = np.arange(n + 1)
    out = np.empty_like(a)
    out[0] = 0.0
    out[1:n] = (l[1:n] / n) * a[1:n] + (1 - (l[1:n] - 1) / n) * a[0 : n - 1]
    out[n] = a[n] + a[n - 1] / n
    return out


@dataclass(frozen=True, eq=False)
class AlphaTrajectory:
    """``steps[k]`` are the populations after k injections."""

    steps: np.ndarray
    input_bits: np.ndarray

    def __post_init__(self):
        for a in self.steps:
            check_alphas(a)

    @property
    def n_qubits(self) -> int:
        return self.steps.shape[1] - 1

    def to_table(self) -> ResultTable:
        cols = ("step",) + tuple(f"alpha_{l}" for l in range(self.n_qubits + 1))
        rows = [(k, *map(float, a)) for k, a in enumerate(self.steps)]
        return ResultTable("alpha", cols, rows)


def alpha_trajectory(alpha0, n_steps: int, input_bit: int | Sequence[int] = 1) -> AlphaTrajectory:
    a = check_alphas(alpha0)
    bits = np.full(n_steps, input_bit, dtype=int) if np.isscalar(input_bit) else np.asarray(input_bit, int)
    if bits.size != n_steps:
        raise InvalidArgument("need one input bit per step")
    out = [a]
    for b in bits:
        out.append(alpha_recurrence_step(out[-1], int(b)))
    return AlphaTrajectory(np.array(out), bits)


def alpha_convergence_time(n: int, epsilon: float, max_steps: int = 10**7) -> int:
    """Injections of ``|1>`` needed for ``1 - alpha_n < epsilon`` from uniform populations."""
    if n < 1 or not 0 < epsilon < 1:
        raise InvalidArgument("need n >= 1 and 0 < epsilon < 1")
    a = np.full(n + 1, 1.0 / (n + 1))
    for k in range(1, max_steps + 1):
        a = alpha_recurrence_step(a, 1)
        if 1 - a[n] < epsilon:
            return k
    raise InvalidArgument(f"no convergence within {max_steps} steps")


def sample_alpha_trajectory(
    n: int, draws: int, n_steps: int, seed: int, input_bit: int = 1, rho_0=None
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo sector populations under erase-and-write with block-Haar scrambling.

    Each draw starts from ``rho_0`` (a fresh Haar-random pure state when
    omitted), scrambles it once, then alternates injection of ``|input_bit>``
    on qubit 0 with a freshly drawn block-Haar unitary. Returns the mean and
    standard error of the populations, each of shape ``(n_steps + 1, n + 1)``.
    """
    decomp = magnetization_sectors(n)
    root = qla.RngStream(seed, STREAM_ALPHA)
    rho_in = np.diag([1.0 - input_bit, float(input_bit)]).astype(complex)
    pops = np.empty((draws, n_steps + 1, n + 1))
    for d in range(draws):
        rng = root.spawn(n, d)
        rho = random_initial_state(n, rng) if rho_0 is None else np.asarray(rho_0, complex)
        u = block_haar_unitary(decomp, rng)
        rho = u @ rho @ u.conj().T
        pops[d, 0] = sector_populations(rho, decomp)
        for k in range(1, n_steps + 1):
            cfg = ReservoirConfig(n, block_haar_unitary(decomp, rng))
            rho = reservoir_step(cfg, rho, rho_in)
            pops[d, k] = sector_populations(rho, decomp)
    mean = pops.mean(axis=0)
    stderr = pops.std(axis=0, ddof=1) / np.sqrt(draws) if draws > 1 else np.zeros_like(mean)
    return mean, stderr


# ---------------------------------------------------------------------------
# Scramblers


def _ising_template(params: IsingParams | None, n: int) -> IsingParams:
    if params is None:
        return IsingParams(n)
    return dataclasses.replace(params, n_qubits=n)


def _scrambler(kind: str, n: int, params: IsingParams | None, rng) -> np.ndarray:
    if kind == "ising":
        return build_ising(_ising_template(params, n), rng)[1]
    if kind == "haar":
        return qla.haar_unitary(2**n, rng)
    if kind == "block-haar":
        return block_haar_unitary(magnetization_sectors(n), rng)
    if kind == "identity":
        return np.eye(2**n, dtype=complex)
    raise InvalidArgument(f"unknown scrambler {kind!r}; choose from {SCRAMBLERS}")


# ---------------------------------------------------------------------------
# Concentration of single-qubit Pauli series


class ConcentrationResult(ResultTable):
    def mean_variance(self, n: int, observable: str) -> float:
        (row,) = self.where(n=n, observable=observable)
        return row["mean_variance"]

    def series(self, role: str, pauli: str) -> tuple[np.ndarray, np.ndarray]:
        recs = [r for r in self.records() if r["qubit_role"] == role and r["observable"][0] == pauli]
        return np.array([r["n"] for r in recs]), np.array([r["mean_variance"] for r in recs])


def run_concentration(
    ns: Sequence[int],
    realizations: int = 100,
    washout: int = 200,
    measure_steps: int = 200,
    params: IsingParams | None = None,
    seed: int = 0,
    scrambler: str = "ising",
    noninput_qubit: int = 1,
    shots: ShotConfig | None = None,
    workers: int = 1,
) -> ConcentrationResult:
    """Temporal variance of single-qubit Pauli expectations under random inputs.

    For each realization the expectation series of ``sigma^{x,y,z}`` on the
    input qubit (0) and on ``noninput_qubit`` is recorded for
    ``measure_steps`` steps after ``washout``; its variance over time is then
    averaged over realizations.
    """
    if measure_steps < 2:
        raise InvalidArgument("measure_steps must be >= 2")
    if realizations < 1:
        raise InvalidArgument("realizations must be >= 1")
    shots = shots or ShotConfig()
    root = qla.RngStream(seed, STREAM_CONCENTRATION)

    def one(job):
        n, r = job
        rng = root.spawn(n, r)
        u = _scrambler(scrambler, n, params, rng)
        cfg = ReservoirConfig(n, u)
        rho0 = random_initial_state(n, rng)
        inputs = InputSeries.from_scalars(rng.uniform(0.0, 1.0, washout + measure_steps))
        obs = single_qubit_paulis(n, [0, noninput_qubit])
        traj = run_trajectory(cfg, inputs, rho0, obs, washout=washout, shots=shots, rng=rng)
        return traj.values.var(axis=0)

    rows = []
    for n in ns:
        if not 1 <= noninput_qubit < n:
            raise InvalidArgument(f"non-input qubit {noninput_qubit} invalid for n={n}")
        var = np.array(_pmap(one, [(n, r) for r in range(realizations)], workers))
        for col, label in enumerate(single_qubit_paulis(n, [0, noninput_qubit]).labels):
            q = int(label[1:])
            v = var[:, col]
            se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
            role = "input" if q == 0 else "noninput"
            rows.append(("concentration", n, role, q, label, float(v.mean()), se, realizations))
    res = ConcentrationResult(
        "concentration",
        ("experiment", "n", "qubit_role", "qubit", "observable", "mean_variance", "stderr", "realizations"),
        rows,
    )
    if len(ns) >= 2:
        for role in ("input", "noninput"):
            for p in "xyz":
                x, y = res.series(role, p)
                if np.all(y > 0):
                    res.summary[f"log_slope_{p}_{role}"] = log_slope(x, y)
    return res


# ---------------------------------------------------------------------------
# Echo-state property


def _resolve_phases(phases) -> list[tuple[str, float, float]]:
    out = []
    for p in phases:
        if isinstance(p, str):
            if p not in PHASE_PRESETS:
                raise InvalidArgument(f"unknown phase preset {p!r}")
            out.append((p, *PHASE_PRESETS[p]))
        elif len(p) == 3:
            out.append((str(p[0]), float(p[1]), float(p[2])))
        else:
            W, h = map(float, p)
            out.append((f"W={W:g},h={h:g}", W, h))
    return out


class EchoStateResult(ResultTable):
    def final_distance(self, n: int, phase: str) -> float:
        recs = [r for r in self.where(n=n, phase=phase, quantity="trace_distance")]
        return max(recs, key=lambda r: r["step"])["value"]

    def n_c(self, n: int, phase: str) -> float:
        (row,) = self.where(n=n, phase=phase, quantity="n_c")
        return row["value"]


def run_echo_state(
    ns: Sequence[int],
    realizations: int = 100,
    inputs_count: int = 500,
    phases: Iterable = ("thermal-main", "localized"),
    threshold: float = 1e-10,
    seed: int = 0,
    dt: float = 10.0,
    J_s: float = 1.0,
    record_every: int = 10,
    same_initial: bool = False,
    workers: int = 1,
) -> EchoStateResult:
    """Trace distance between two runs that share U and inputs but start apart.

    Reports the realization-averaged distance every ``record_every`` steps
    (and at the final step), and ``N_c``: the number of real and imaginary
    parts of ``rho_A - rho_B`` below ``threshold`` after the last input,
    averaged over realizations.
    """
    if threshold <= 0:
        raise InvalidArgument("threshold must be > 0")
    if inputs_count < 1 or realizations < 1 or record_every < 1:
        raise InvalidArgument("inputs_count, realizations and record_every must be >= 1")
    phase_list = _resolve_phases(phases)
    root = qla.RngStream(seed, STREAM_ECHO)
    record = sorted(set(range(0, inputs_count + 1, record_every)) | {inputs_count})

    def one(job):
        n, pi, r = job
        _, W, h = phase_list[pi]
        rng = root.spawn(n, pi, r)
        u = build_ising(IsingParams(n, J_s=J_s, h=h, W=W, dt=dt), rng)[1]
        cfg = ReservoirConfig(n, u)
        a = random_initial_state(n, rng)
        b = a.copy() if same_initial else random_initial_state(n, rng)
        s = rng.uniform(0.0, 1.0, inputs_count)
        dists = []
        if 0 in record:
            dists.append(qla.trace_distance(a, b))
        for k in range(1, inputs_count + 1):
            psi = np.array([np.sqrt(s[k - 1]), np.sqrt(1 - s[k - 1])], dtype=complex)
            a = cfg.write_pure(psi, cfg.reduce(a))
            b = cfg.write_pure(psi, cfg.reduce(b))
            if k in record:
                dists.append(qla.trace_distance(a, b))
        diff = a - b
        nc = int(np.sum(np.abs(diff.real) < threshold) + np.sum(np.abs(diff.imag) < threshold))
        return np.array(dists), nc

    rows = []
    for n in ns:
        for pi, (label, W, h) in enumerate(phase_list):
            out = _pmap(one, [(n, pi, r) for r in range(realizations)], workers)
            dist = np.mean([o[0] for o in out], axis=0)
            for step, d in zip(record, dist):
                rows.append(("echo-state", n, label, W, h, "trace_distance", step, float(d)))
            rows.append(("echo-state", n, label, W, h, "n_c", inputs_count, float(np.mean([o[1] for o in out]))))
    return EchoStateResult(
        "echo-state", ("experiment", "n", "phase", "W", "h", "quantity", "step", "value"), rows
    )


# ---------------------------------------------------------------------------
# Series discrimination


class DiscriminationResult(ResultTable):
    def values(self, n: int, scrambler: str, input_class: str) -> np.ndarray:
        return np.array(
            [r["expectation"] for r in self.where(n=n, scrambler=scrambler, input_class=input_class)]
        )

    def class_mean_gap(self, n: int, scrambler: str) -> float:
        return float(abs(self.values(n, scrambler, "zero").mean() - self.values(n, scrambler, "one").mean()))

    def success_fraction(self, n: int, scrambler: str, tol: float = 0.05) -> dict:
        return {
            "zero": float(np.mean(np.abs(self.values(n, scrambler, "zero") - 1) <= tol)),
            "one": float(np.mean(np.abs(self.values(n, scrambler, "one") + 1) <= tol)),
        }


def run_discrimination(
    ns: Sequence[int],
    realizations: int = 100,
    series_length: int = 1000,
    seed: int = 0,
    symmetric: str = "block-haar",
    params: IsingParams | None = None,
    scramblers: Sequence[str] = ("symmetric", "haar"),
    shots: ShotConfig | None = None,
    workers: int = 1,
) -> DiscriminationResult:
    """Inject constant ``|0>`` or ``|1>`` series and read ``<sigma^z>`` on a random non-input qubit.

    ``symmetric`` selects the magnetization-conserving scrambler: an exact
    block-Haar unitary (default) or the thermal Ising reservoir (``"ising"``).
    The same unitary serves both input classes within a realization; each
    class starts from its own random pure state.
    """
    if series_length < 1:
        raise InvalidArgument("series_length must be >= 1")
    if symmetric not in ("block-haar", "ising"):
        raise InvalidArgument("symmetric scrambler must be 'block-haar' or 'ising'")
    shots = shots or ShotConfig()
    root = qla.RngStream(seed, STREAM_DISCRIMINATION)
    kinds = {"symmetric": symmetric, "haar": "haar"}
    # stream key per scrambler type, so selecting a subset leaves the draws unchanged
    stream_key = {"symmetric": 0, "haar": 1}
    for s in scramblers:
        if s not in kinds:
            raise InvalidArgument(f"unknown scrambler type {s!r}")

    def one(job):
        n, r = job
        rng = root.spawn(n, r)
        qubit = int(rng.integers(1, n))
        z = qla.embed(qla.PAULI["z"], qubit, n)
        out = []
        for stype in scramblers:
            srng = rng.spawn(stream_key[stype])
            cfg = ReservoirConfig(n, _scrambler(kinds[stype], n, params, srng))
            for ci, cls in enumerate(("zero", "one")):
                rho = random_initial_state(n, srng)
                psi = np.array([1.0 - ci, float(ci)], dtype=complex)
                for _ in range(series_length):
                    rho = cfg.write_pure(psi, cfg.reduce(rho))
                val = sampled_expectation(rho, z, shots, srng)
                out.append(("discrimination", n, stype, cls, r, qubit, float(val)))
        return out

    rows = []
    for n in ns:
        if n < 2:
            raise InvalidArgument("discrimination needs n >= 2")
        for chunk in _pmap(one, [(n, r) for r in range(realizations)], workers):
            rows.extend(chunk)
    order = {s: i for i, s in enumerate(scramblers)}
    rows.sort(key=lambda row: (row[1], order[row[2]], row[3], row[4]))
    res = DiscriminationResult(
        "discrimination",
        ("experiment", "n", "scrambler", "input_class", "realization", "qubit", "expectation"),
        rows,
    )
    for n in ns:
        for s in scramblers:
            res.summary[f"gap_{s}_n{n}"] = res.class_mean_gap(n, s)
    return res


# ---------------------------------------------------------------------------
# Monte Carlo checks of the mean state and the variance


class Lemma1Result(ResultTable):
    pass


def verify_lemma1(
    n: int,
    checkpoints: Sequence[int] = (100, 1000, 10000),
    seed: int = 0,
    repeats: int = 1,
    rho=None,
    chunk: int = 512,
) -> Lemma1Result:
    """Distance between the block-Haar average of ``U rho U^dag`` and the sector-uniform prediction.

    The running ensemble mean is compared to ``lemma1_mean_state`` at each
    checkpoint. With ``repeats > 1`` independent ensembles are averaged, which
    tightens the fitted decay exponent (reported as ``summary["slope"]``).
    """
    if n > 6:
        raise InvalidArgument("verify_lemma1 is limited to n <= 6")
    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints or checkpoints[0] < 1:
        raise InvalidArgument("checkpoints must be positive")
    decomp = magnetization_sectors(n)
    root = qla.RngStream(seed, STREAM_LEMMA1)
    dist = np.empty((repeats, len(checkpoints)))
    for rep in range(repeats):
        rng = root.spawn(n, rep)
        state = random_initial_state(n, rng) if rho is None else np.asarray(rho, complex)
        target = lemma1_mean_state(sector_populations(state, decomp), decomp)
        acc = np.zeros_like(state)
        done = 0
        for ci, c in enumerate(checkpoints):
            while done < c:
                m = min(chunk, c - done)
                us = block_haar_unitaries(decomp, m, rng)
                acc += np.einsum("sij,jk,slk->il", us, state, us.conj())
                done += m
            dist[rep, ci] = qla.trace_distance(acc / done, target)
    mean = dist.mean(axis=0)
    std = dist.std(axis=0, ddof=1) if repeats > 1 else np.zeros(len(checkpoints))
    rows = [("lemma1", n, c, float(m), float(s), repeats) for c, m, s in zip(checkpoints, mean, std)]
    res = Lemma1Result("lemma1", ("experiment", "n", "samples", "mean_trace_distance", "std", "repeats"), rows)
    if len(checkpoints) >= 2 and np.all(mean > 0):
        res.summary["slope"] = float(np.polyfit(np.log(checkpoints), np.log(mean), 1)[0])
    return res


def haar_two_design_variance(o, rho) -> float:
    """Closed-form ``Var_U Tr{o U rho U^dag}`` for Haar (or any 2-design) ``U``."""
    o = np.asarray(o, complex)
    rho = np.asarray(rho, complex)
    D = o.shape[0]
    tr_o = np.trace(o).real
    tr_o2 = np.real(np.trace(o @ o))
    p = qla.purity(rho)
    second = ((1 - p / D) * tr_o**2 + (p - 1 / D) * tr_o2) / (D**2 - 1)
    return float(second - (tr_o / D) ** 2)


def _variance_state(kind: str, n: int) -> np.ndarray:
    D = 2**n
    if kind == "injected":
        # |0><0| written into a maximally mixed (fully scrambled) reservoir
        return np.kron(np.diag([1.0, 0.0]), np.eye(D // 2) / (D // 2)).astype(complex)
    if kind == "pure":
        rho = np.zeros((D, D), complex)
        rho[0, 0] = 1.0
        return rho
    raise InvalidArgument(f"unknown state kind {kind!r}; use 'injected' or 'pure'")


class VarianceScalingResult(ResultTable):
    pass


def verify_variance_scaling(
    ns: Sequence[int],
    samples: int = 10000,
    observable: Callable[[int], np.ndarray] | None = None,
    seed: int = 0,
    ensemble: str = "haar",
    state: str = "injected",
    observable_label: str = "z1",
    chunk: int = 256,
) -> VarianceScalingResult:
    """Ensemble variance of ``Tr{O U rho U^dag}`` over random unitaries, per n.

    ``state="injected"`` uses ``|0><0| (x) I/2^{n-1}``, the post-injection
    state of a reservoir that the scrambler has already mixed;
    ``state="pure"`` uses ``|0...0>``. The default observable is
    ``sigma^z`` on qubit 1. For Haar draws the closed-form 2-design variance
    is reported alongside.
    """
    if ensemble not in ("haar", "block-haar"):
        raise InvalidArgument("ensemble must be 'haar' or 'block-haar'")
    if any(n > 8 or n < 2 for n in ns):
        raise InvalidArgument("ns must lie in [2, 8]")
    if samples < 2:
        raise InvalidArgument("need at least two samples")
    if observable is None:
        observable = lambda n: qla.embed(qla.PAULI["z"], 1, n)  # noqa: E731
    root = qla.RngStream(seed, STREAM_VARIANCE)
    rows = []
    for n in ns:
        rng = root.spawn(n)
        o = np.asarray(observable(n), complex)
        rho = _variance_state(state, n)
        w, v = np.linalg.eigh(rho)
        keep = w > 1e-14
        a = v[:, keep] * np.sqrt(w[keep])
        decomp = magnetization_sectors(n)
        vals = np.empty(samples)
        done = 0
        while done < samples:
            m = min(chunk, samples - done)
            us = qla.haar_unitaries(2**n, m, rng) if ensemble == "haar" else block_haar_unitaries(decomp, m, rng)
            b = us @ a
            vals[done : done + m] = np.real(np.sum(b.conj() * (o @ b), axis=(1, 2)))
            done += m
        var = float(vals.var(ddof=1))
        oracle = haar_two_design_variance(o, rho) if ensemble == "haar" else None
        rows.append(("variance-scaling", n, ensemble, state, observable_label, samples, var, oracle))
    res = VarianceScalingResult(
        "variance-scaling",
        ("experiment", "n", "ensemble", "state", "observable", "samples", "variance", "two_design_variance"),
        rows,
    )
    variances = np.array([r[6] for r in rows])
    if len(ns) >= 2 and np.all(variances > 0):
        res.summary["log_slope"] = log_slope(list(ns), variances)
    return res
