"""Batch experiment drivers.

Verbs: build, solve-exact, reduce, run-cvar, run-iqp, sweep, report.
Configuration is INI-style (sections of flat keys); every constant has a
named key. Exit codes: 0 success, 2 config error, 3 domain error, 4
capacity error.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import instances, iqp, noise as noise_mod, qubo as qubo_mod, vqa
from .energies import EnergyTable
from .errors import (
    ConfigError,
    EmptyProblemError,
    KappaTooLargeError,
    MrnafoldError,
    TooLargeError,
)
from .ising import IsingHamiltonian, brute_force_solve, cvar, local_search_batch
from .samples import SampleSet, bits_to_str

EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_CAPACITY = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (TooLargeError, KappaTooLargeError) as exc:
            _fail(EXIT_CAPACITY, str(exc))
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except MrnafoldError as exc:
            _fail(EXIT_DOMAIN, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is None:
        return cfg
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg.read(p)
    return cfg


def _get(cfg, section, key, cast, default=None, required=False):
    if cfg.has_option(section, key):
        raw = cfg.get(section, key).strip()
        if raw:
            try:
                if cast is bool:
                    return cfg.getboolean(section, key)
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    if required:
        raise ConfigError(f"missing required config key [{section}] {key}")
    return default


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="INI config file.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
@click.option("--out", "out_dir", type=click.Path(), default="out", show_default=True, help="Output directory.")
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel runs in a sweep.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, workers):
    """QUBO construction and circuit-sampling solvers for mRNA folding."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out_dir=Path(out_dir), workers=workers)


def _load_table(cfg) -> EnergyTable:
    path = _get(cfg, "problem", "energy_table", str)
    if path == "synthetic":
        return instances.synthetic_energy_table()
    if path:
        return EnergyTable.from_file(path)
    return EnergyTable.default()


def _read_sequence(cfg) -> qubo_mod.Sequence:
    text = _get(cfg, "problem", "sequence", str)
    if not text:
        path = _get(cfg, "problem", "sequence_file", str)
        if not path:
            raise ConfigError("need [problem] sequence or sequence_file")
        index = _get(cfg, "problem", "sequence_index", int, 1)
        lines = [l.strip() for l in Path(path).read_text().splitlines() if l.strip()]
        if not (1 <= index <= len(lines)):
            raise ConfigError(f"sequence_index {index} out of range for {len(lines)} sequences")
        text = lines[index - 1]
    return qubo_mod.parse_sequence(text)


def _build_problem(cfg) -> qubo_mod.QuboProblem:
    seq = _read_sequence(cfg)
    table = _load_table(cfg)
    l_min = _get(cfg, "problem", "l_min", int, qubo_mod.DEFAULT_MIN_LOOP)
    quartets = qubo_mod.enumerate_quartets(seq, table, l_min)
    if not quartets:
        raise EmptyProblemError("empty problem: sequence admits no quartets")
    r = _get(cfg, "problem", "r", float, -1.0)
    use_ua = _get(cfg, "problem", "use_ua_penalty", bool, True)
    p = _get(cfg, "problem", "p", float, 0.5) if use_ua else 0.0
    t = _get(cfg, "problem", "t", float)
    if t is None:
        t = qubo_mod.default_crossing_penalty(quartets, r)
    return qubo_mod.assemble_qubo(quartets, r=r, p=p, t=t)


@main.command()
@click.pass_context
@_guarded
def build(ctx):
    """Construct the QUBO and its spin form from a sequence."""
    cfg = _load_config(ctx.obj["config_path"])
    problem = _build_problem(cfg)
    H = qubo_mod.qubo_to_ising(problem)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "qubo.json").write_text(problem.to_json() + "\n")
    (out / "ising.json").write_text(H.to_json() + "\n")
    n = problem.n_vars
    density = len(problem.quadratic) / (n * (n - 1) / 2) if n > 1 else 0.0
    click.echo(f"n_vars: {n}")
    click.echo(f"edge_density: {density:.4f}")
    click.echo(f"wrote {out / 'qubo.json'} and {out / 'ising.json'}")


def _load_hamiltonian(ctx, explicit: str | None) -> IsingHamiltonian:
    path = Path(explicit) if explicit else ctx.obj["out_dir"] / "ising.json"
    if not path.exists():
        raise ConfigError(f"Hamiltonian file not found: {path}")
    return IsingHamiltonian.from_json(path.read_text())


@main.command("solve-exact")
@click.option("--hamiltonian", type=click.Path(), default=None, help="Ising JSON (default <out>/ising.json).")
@click.pass_context
@_guarded
def solve_exact(ctx, hamiltonian):
    """Exact optimum by full enumeration (capacity-limited)."""
    H = _load_hamiltonian(ctx, hamiltonian)
    bits, energy_value = brute_force_solve(H)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    doc = {"bitstring": bits, "energy": energy_value}
    (out / "solution.json").write_text(json.dumps(doc, indent=2) + "\n")
    click.echo(json.dumps(doc))


@main.command()
@click.option("--qubo", "qubo_path", type=click.Path(), default=None, help="QUBO JSON (default <out>/qubo.json).")
@click.pass_context
@_guarded
def reduce(ctx, qubo_path):
    """Eliminate all-nonnegative-coupling variables."""
    path = Path(qubo_path) if qubo_path else ctx.obj["out_dir"] / "qubo.json"
    if not path.exists():
        raise ConfigError(f"QUBO file not found: {path}")
    problem = qubo_mod.QuboProblem.from_json(path.read_text())
    res = qubo_mod.reduce_qubo(problem)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "reduced_qubo.json").write_text(res.reduced.to_json() + "\n")
    meta = {"kappa": list(res.kappa), "back_map": list(res.back_map)}
    (out / "reduction.json").write_text(json.dumps(meta, indent=2) + "\n")
    click.echo(f"eliminated {len(res.kappa)} of {problem.n_vars} variables")


def _vqa_config(cfg, seed: int) -> vqa.VqaConfig:
    return vqa.VqaConfig(
        alpha=_get(cfg, "vqa", "alpha", float, 0.2),
        theta_th=_get(cfg, "vqa", "theta_th", float, 0.06),
        p_th=_get(cfg, "vqa", "p_th", float, 0.8),
        f=_get(cfg, "vqa", "f", float, 0.07),
        n_shots=_get(cfg, "vqa", "shots", int, 2**15),
        layers=_get(cfg, "vqa", "layers", int, 2),
        epochs=_get(cfg, "vqa", "epochs", int, 2),
        n_iter=_get(cfg, "vqa", "n_iter", int),
        restart_mode=_get(cfg, "vqa", "restart", str, "best"),
        layerwise=_get(cfg, "vqa", "layerwise", bool, False),
        seed=seed,
    )


def _noise_model(cfg) -> noise_mod.ReadoutNoise | None:
    p01 = _get(cfg, "noise", "p01", float, 0.0)
    p10 = _get(cfg, "noise", "p10", float, 0.0)
    if p01 == 0.0 and p10 == 0.0:
        return None
    return noise_mod.ReadoutNoise(p01=p01, p10=p10)


def _make_sampler(cfg, seed: int):
    base = vqa.MpsSampler()
    model = _noise_model(cfg)
    if model is None:
        return base
    return noise_mod.NoisySampler(base, model, np.random.SeedSequence((seed, 0xD1CE)))


def _reference_energy(cfg, H: IsingHamiltonian, problem: qubo_mod.QuboProblem | None):
    ref = _get(cfg, "sweep", "reference", float)
    if ref is not None:
        return ref
    if H.n <= 24:
        _, energy_value = brute_force_solve(H)
        return energy_value
    if problem is not None and problem.provenance is not None:
        _, energy_value = instances.solve_feasible_exact(problem)
        return energy_value
    return None


def _run_cvar_once(H, cfg, seed, reference):
    sampler = _make_sampler(cfg, seed)
    config = _vqa_config(cfg, seed)
    t0 = time.perf_counter()
    result = vqa.run_vqa(H, config, sampler, reference_energy=reference)
    wall = time.perf_counter() - t0
    return result, wall


@main.command("run-cvar")
@click.option("--hamiltonian", type=click.Path(), default=None)
@click.pass_context
@_guarded
def run_cvar(ctx, hamiltonian):
    """One CVaR-optimizer run against the exact-state sampler."""
    cfg = _load_config(ctx.obj["config_path"])
    H = _load_hamiltonian(ctx, hamiltonian)
    reference = _reference_energy(cfg, H, None) if H.n <= 24 else None
    result, wall = _run_cvar_once(H, cfg, ctx.obj["seed"], reference)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w") as f:
        for rec in result.trace:
            f.write(json.dumps(rec) + "\n")
    (out / "samples.jsonl").write_text(result.final_samples.to_jsonl())
    doc = {
        "best_bitstring": result.best_bitstring,
        "best_energy": result.best_energy,
        "raw_best_bitstring": result.raw_best_bitstring,
        "raw_best_energy": result.raw_best_energy,
        "gauge_mask": bits_to_str(result.gauge_mask.m),
        "hit": result.hit,
        "gamma": result.gamma,
        "iterations": result.n_iterations,
        "wall_time": wall,
    }
    (out / "result.json").write_text(json.dumps(doc, indent=2) + "\n")
    click.echo(json.dumps({k: doc[k] for k in ("best_energy", "hit", "gamma")}))


def _iqp_circuit(cfg, H: IsingHamiltonian) -> iqp.IqpCircuit:
    layout_kind = _get(cfg, "iqp", "layout", str, "line")
    include_singles = _get(cfg, "iqp", "include_singles", bool, True)
    n = H.n
    if layout_kind == "line":
        edges = [(q, q + 1) for q in range(n - 1)]
        layout = {"kind": "line"}
    elif layout_kind == "tube":
        distance = _get(cfg, "iqp", "distance", int, 2)
        edges = [e for e in iqp.heavy_hex_tube_layout(distance) if e[0] < n and e[1] < n]
        layout = {"kind": "tube", "distance": distance}
    elif layout_kind and layout_kind.startswith("edges:"):
        path = layout_kind.split(":", 1)[1]
        doc = json.loads(Path(path).read_text())
        edges = [tuple(e) for e in doc["edges"]]
        layout = {"kind": "file", "path": path}
    else:
        raise ConfigError(f"unknown [iqp] layout {layout_kind!r}")
    return iqp.build_circuit(n, edges, include_singles=include_singles, layout=layout)


@main.command("run-iqp")
@click.option("--hamiltonian", type=click.Path(), default=None)
@click.pass_context
@_guarded
def run_iqp(ctx, hamiltonian):
    """Classically train the diagonal-layer circuit, then sample, mitigate,
    and locally refine."""
    cfg = _load_config(ctx.obj["config_path"])
    H = _load_hamiltonian(ctx, hamiltonian)
    seed = ctx.obj["seed"]
    result, wall = _run_iqp_once(H, cfg, seed, _reference_energy(cfg, H, None))
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w") as f:
        for k, value in enumerate(result["trace"]):
            f.write(json.dumps({"iter": k, "objective": value}) + "\n")
    (out / "circuit.json").write_text(result["circuit_json"])
    doc = {k: result[k] for k in ("best_bitstring", "best_energy", "hit", "gamma")}
    doc["wall_time"] = wall
    (out / "result.json").write_text(json.dumps(doc, indent=2) + "\n")
    click.echo(json.dumps({k: doc[k] for k in ("best_energy", "hit", "gamma")}))


def _run_iqp_once(H, cfg, seed, reference):
    t0 = time.perf_counter()
    circuit = _iqp_circuit(cfg, H)
    n_iter = _get(cfg, "iqp", "n_iter", int, 3 * circuit.n_gates)
    n_bitstrings = _get(cfg, "iqp", "n_bitstrings", int, 2**15)
    exact_objective = _get(cfg, "iqp", "exact_objective", bool, False)
    shots = _get(cfg, "iqp", "shots", int, 2**15)
    z_th = _get(cfg, "iqp", "z_th", float, 0.99)
    alpha = _get(cfg, "vqa", "alpha", float, 0.2)

    ss = np.random.SeedSequence(seed)
    s_train, s_sample, s_noise, s_search = ss.spawn(4)
    thetas, trace = iqp.train_iqp(
        H, circuit, n_iter, s_train, exact=exact_objective, n_bitstrings=n_bitstrings
    )
    trained = circuit.with_thetas(thetas)
    samples = iqp.exact_sample(trained, shots, s_sample)
    model = _noise_model(cfg)
    if model is not None:
        samples = noise_mod.apply_noise(samples, model, s_noise)
    singles = iqp.exact_singles(trained)
    mitigated = iqp.mitigate_samples(samples, singles, z_th)
    scored = mitigated.scored(H)
    raw_best = float(scored.energies.min())
    searched = local_search_batch(scored.bits, H, s_search)
    energies = H.energies(searched)
    k = int(np.argmin(energies))
    best_energy = float(min(energies[k], raw_best))
    best_bits = searched[k] if energies[k] <= raw_best else scored.bits[int(np.argmin(scored.energies))]
    wall = time.perf_counter() - t0
    doc = {
        "trace": trace,
        "circuit_json": trained.to_json(),
        "best_bitstring": bits_to_str(best_bits),
        "best_energy": best_energy,
        "raw_best_energy": raw_best,
        "cvar": cvar(scored, alpha),
        "hit": None,
        "gamma": None,
    }
    if reference is not None:
        doc["gamma"] = vqa.relative_error_percent(best_energy, reference)
        doc["hit"] = doc["gamma"] == 0.0
        doc["raw_gamma"] = vqa.relative_error_percent(raw_best, reference)
        doc["raw_hit"] = doc["raw_gamma"] == 0.0
    return doc, wall


def _sweep_one(payload):
    """Worker for one sweep run; payload is picklable."""
    (run_id, seed, h_json, cfg_text, solver) = payload
    H = IsingHamiltonian.from_json(h_json)
    cfg = configparser.ConfigParser()
    cfg.read_string(cfg_text)
    reference = _reference_from_text(cfg)
    if solver == "cvar":
        result, wall = _run_cvar_once(H, cfg, seed, reference)
        return {
            "run": run_id,
            "seed": seed,
            "hit": result.hit,
            "gamma": result.gamma,
            "best_energy": result.best_energy,
            "raw_hit": result.raw_hit,
            "raw_gamma": result.raw_gamma,
            "wall_time": wall,
        }
    doc, wall = _run_iqp_once(H, cfg, seed, reference)
    return {
        "run": run_id,
        "seed": seed,
        "hit": doc["hit"],
        "gamma": doc["gamma"],
        "best_energy": doc["best_energy"],
        "raw_hit": doc.get("raw_hit"),
        "raw_gamma": doc.get("raw_gamma"),
        "wall_time": wall,
    }


def _reference_from_text(cfg):
    return _get(cfg, "sweep", "reference", float)


@main.command()
@click.option("--hamiltonian", type=click.Path(), default=None)
@click.pass_context
@_guarded
def sweep(ctx, hamiltonian):
    """Repeated seeded runs; aggregates a hits table with and without
    post-processing."""
    cfg = _load_config(ctx.obj["config_path"])
    H = _load_hamiltonian(ctx, hamiltonian)
    runs = _get(cfg, "sweep", "runs", int, 10)
    solver = _get(cfg, "sweep", "solver", str, "cvar")
    if solver not in ("cvar", "iqp"):
        raise ConfigError(f"[sweep] solver must be cvar or iqp, got {solver!r}")
    reference = _reference_energy(cfg, H, None)
    if reference is None:
        raise ConfigError("sweep needs a reference optimum ([sweep] reference) for hit counting")
    if not cfg.has_section("sweep"):
        cfg.add_section("sweep")
    cfg.set("sweep", "reference", repr(reference))
    buf = io.StringIO()
    cfg.write(buf)
    cfg_text = buf.getvalue()

    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(ctx.obj["seed"]).spawn(runs)]
    payloads = [(k, seeds[k], H.to_json(), cfg_text, solver) for k in range(runs)]
    workers = max(1, ctx.obj["workers"])
    if workers == 1:
        rows = [_sweep_one(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, payloads))
    rows.sort(key=lambda r: r["run"])

    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "seed", "hit", "gamma", "best_energy", "wall_time"])
        for r in rows:
            w.writerow([r["run"], r["seed"], r["hit"], r["gamma"], r["best_energy"], f"{r['wall_time']:.3f}"])
    hits_post = sum(1 for r in rows if r["hit"])
    hits_raw = sum(1 for r in rows if r.get("raw_hit"))
    with open(out / "hits.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["n_qubits", "runs", "hits_without_post", "hits_with_post"])
        w.writerow([H.n, runs, hits_raw, hits_post])
    click.echo(f"runs: {runs}  hits_without_post: {hits_raw}  hits_with_post: {hits_post}")


@main.command()
@click.option("--summary", "summary_path", type=click.Path(), default=None, help="summary.csv to aggregate.")
@click.pass_context
@_guarded
def report(ctx, summary_path):
    """Aggregate a sweep summary into a plot-ready CSV."""
    path = Path(summary_path) if summary_path else ctx.obj["out_dir"] / "summary.csv"
    if not path.exists():
        raise ConfigError(f"summary file not found: {path}")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ConfigError("summary file is empty")
    gammas = [float(r["gamma"]) for r in rows if r["gamma"] not in ("", "None")]
    hits = sum(1 for r in rows if r["hit"] == "True")
    energies = [float(r["best_energy"]) for r in rows]
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["runs", "hits", "hit_rate", "gamma_mean", "gamma_max", "best_energy_min"])
        w.writerow(
            [
                len(rows),
                hits,
                f"{hits / len(rows):.4f}",
                f"{(sum(gammas) / len(gammas)) if gammas else math.nan:.6f}",
                f"{max(gammas) if gammas else math.nan:.6f}",
                min(energies),
            ]
        )
    click.echo(f"wrote {out / 'report.csv'}")


if __name__ == "__main__":
    main()
