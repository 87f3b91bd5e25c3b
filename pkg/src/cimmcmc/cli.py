"""Command-line front end.

Every subcommand writes its CSV/JSON outputs into ``--out`` (atomically,
via a temporary file and rename) and, unless ``--no-plots`` is given,
PNG figures next to them.  Exit status: 0 success, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import perf, plotting
from .config import SCHEMA_VERSION, SWEEP_PARAMS, ConfigError, ExperimentConfig
from .memory import MacroArray
from .reference import reference_mh
from .sampler import run, stream, transfer_matrix
from .stats import Histogram, chi_square_gof, empirical_transfer_matrix, monobit_bias, tv_distance, uniformity
from .urng import MsxorRng, lambda_after, output_bits

log = logging.getLogger("cimmcmc")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_STREAM_RNG_TEST = 3
_STREAM_TRANSFER = 4


# -- output helpers ---------------------------------------------------------

def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue().encode())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, payload: dict):
    text = json.dumps(_jsonable({"schema_version": SCHEMA_VERSION, **payload}), indent=2)
    _atomic_write(path, (text + "\n").encode())


def _figure(cfg: ExperimentConfig, fn, *args):
    if not cfg.plots:
        return
    try:
        fn(*args)
    except Exception as exc:  # figures never fail a run
        log.warning("figure %s skipped: %s", args[-1], exc)


def _fit(values, target):
    """Histogram, TV and chi-square of ``values`` against a tabulated target."""
    if target.table is None or len(values) == 0:
        return None, None, None
    hist = Histogram.from_samples(values, target.n_bits)
    chi = chi_square_gof(hist, target)
    return hist, tv_distance(hist, target), {"statistic": chi.statistic, "p_value": chi.p_value,
                                            "dof": chi.dof}


def _distribution_figure(cfg, hist, target, out: Path, stem: str):
    if hist is None:
        return
    if target.dims == 2 and target.bits_per_dim <= 10:
        _figure(cfg, plotting.heatmap_2d, hist.bins, target.normalized(), target.bits_per_dim,
                out / f"{stem}.png")
    elif target.dims == 1 and target.n_bits <= 12:
        _figure(cfg, plotting.histogram_vs_target, hist.bins, target.normalized(),
                out / f"{stem}.png")


# -- subcommands ------------------------------------------------------------

def cmd_sample(cfg: ExperimentConfig) -> int:
    rc = cfg.run_config()
    out = Path(cfg.out)
    t0 = time.perf_counter()
    result = run(rc)
    log.info("sample: %d steps x %d compartments in %.2f s", int(result.steps[0]),
             rc.compartments, time.perf_counter() - t0)
    width = output_bits(rc.stages)
    write_csv(out / "samples.csv",
              ["compartment", "iteration", "candidate", "accepted", "value", f"u{width}" if width != 8 else "u8"],
              result.rows())
    hist, tv, chi = _fit(result.flat(), rc.target)
    if hist is not None:
        write_csv(out / "histogram.csv", ["value", "count"], hist.to_csv_rows())
    steps = int(result.steps.sum())
    ledger = result.ledger
    acc = result.acceptance_rate
    summary = {
        "command": "sample",
        "config": cfg.to_dict(),
        "target": {"name": rc.target.name, "n_bits": rc.n_bits, "dims": rc.target.dims},
        "p_bfr": dict(zip(("p01", "p10"), rc.flip_probs())),
        "steps_per_compartment": int(result.steps[0]),
        "truncated": result.truncated,
        "n_samples": result.n_samples,
        "acceptance_rate": acc,
        "retained_acceptance_rate": result.retained_acceptance_rate,
        "per_compartment": [{"compartment": c, "accepted": int(a), "steps": int(s)}
                            for c, (a, s) in enumerate(zip(result.accepted_counts, result.steps))],
        "tv": tv,
        "chi_square": chi,
        "ledger": ledger.to_dict(),
        "energy_per_step_pj": ledger.total_energy_fj / 1000.0 / steps if steps else None,
        "model_energy_per_step_pj": (perf.blended_energy(rc.energy, rc.n_bits, acc)
                                     if steps else None),
        "throughput_samples_per_s": perf.throughput(rc.timing, rc.n_bits, rc.compartments),
    }
    write_json(out / "summary.json", summary)
    _distribution_figure(cfg, hist, rc.target, out, "histogram")
    return EXIT_OK


def cmd_reference(cfg: ExperimentConfig) -> int:
    rc = cfg.run_config()
    out = Path(cfg.out)
    p01, p10 = rc.flip_probs()
    t0 = time.perf_counter()
    result = reference_mh(rc.target, rc.n_bits, p01, rc.iterations, rc.burn_in,
                          chains=rc.compartments, seed=rc.seed, thin=rc.thin, p10=p10,
                          init_value=rc.init_value)
    log.info("reference: %d steps x %d chains in %.2f s", rc.iterations, rc.compartments,
             time.perf_counter() - t0)
    write_csv(out / "samples.csv", ["compartment", "iteration", "candidate", "accepted", "value", "u"],
              ((c, it, cand, a, v, repr(u)) for c, it, cand, a, v, u in result.rows()))
    hist, tv, chi = _fit(result.flat(), rc.target)
    if hist is not None:
        write_csv(out / "histogram.csv", ["value", "count"], hist.to_csv_rows())
    summary = {
        "command": "reference",
        "config": cfg.to_dict(),
        "target": {"name": rc.target.name, "n_bits": rc.n_bits, "dims": rc.target.dims},
        "p_bfr": {"p01": p01, "p10": p10},
        "steps_per_compartment": result.steps,
        "n_samples": result.n_samples,
        "acceptance_rate": result.acceptance_rate,
        "per_compartment": [{"compartment": c, "accepted": int(a), "steps": result.steps}
                            for c, a in enumerate(result.accepted_counts)],
        "tv": tv,
        "chi_square": chi,
    }
    write_json(out / "summary.json", summary)
    _distribution_figure(cfg, hist, rc.target, out, "histogram")
    return EXIT_OK


def cmd_rng_test(cfg: ExperimentConfig) -> int:
    if cfg.draws < 1:
        raise ConfigError("draws must be >= 1")
    out = Path(cfg.out)
    try:
        width = output_bits(cfg.stages)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    energy, timing = cfg.constants()
    ledger = perf.PerfLedger(energy, timing)
    rng = MsxorRng(stream(cfg.seed, _STREAM_RNG_TEST), cfg.flip(), cfg.stages, ledger,
                   cfg.cvdd, cfg.temperature)
    p = rng.default_p()
    values = rng.draw(cfg.draws)
    col = "u8_value" if width == 8 else f"u{width}_value"
    write_csv(out / "rng.csv", ["draw_index", col], enumerate(values.tolist()))
    freq = monobit_bias(values, width)
    summary = {
        "command": "rng-test",
        "config": cfg.to_dict(),
        "p_bfr": p,
        "stages": cfg.stages,
        "width": width,
        "draws": cfg.draws,
        "lambda_analytic": lambda_after(p, cfg.stages),
        "bit_frequency": freq,
        "max_bit_deviation": float(np.abs(freq - 0.5).max()),
        "ledger": ledger.to_dict(),
    }
    if width <= 16:
        chi = uniformity(values, width)
        summary["chi_square"] = {"statistic": chi.statistic, "p_value": chi.p_value, "dof": chi.dof}
    write_json(out / "rng_summary.json", summary)
    if width <= 16:
        _figure(cfg, plotting.rng_histogram, values, out / "rng_histogram.png", width)
    return EXIT_OK


def cmd_transfer_matrix(cfg: ExperimentConfig) -> int:
    n = cfg.n_bits or 4
    if n % 4 or not 4 <= n <= 8:
        raise ConfigError("transfer-matrix supports 4 or 8 bits")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    out = Path(cfg.out)
    p01, p10 = cfg.flip().flip_probs(cfg.cvdd, cfg.temperature)
    if p01 != p10:
        raise ConfigError("transfer-matrix needs a symmetric flip model")
    q = transfer_matrix(n, p01)
    array = MacroArray(1, 64, 64, flip_model=cfg.flip())
    rng = stream(cfg.seed, _STREAM_TRANSFER)
    emp = np.stack([empirical_transfer_matrix(array, x, p01, cfg.trials, rng, n)
                    for x in range(2 ** n)])
    counts = np.rint(emp * cfg.trials).astype(np.int64)
    p_values = [chi_square_gof(Histogram.from_counts(counts[x]), q[x]).p_value
                for x in range(2 ** n)]
    rows = ((x, y, bin(x ^ y).count("1"), repr(float(q[x, y])), repr(float(emp[x, y])))
            for x in range(2 ** n) for y in range(2 ** n))
    write_csv(out / "transfer_matrix.csv", ["from", "to", "hamming", "analytic", "empirical"], rows)
    summary = {
        "command": "transfer-matrix",
        "config": cfg.to_dict(),
        "n_bits": n,
        "p_bfr": p01,
        "trials_per_row": cfg.trials,
        "symmetry_error": float(np.abs(q - q.T).max()),
        "row_sum_error": float(np.abs(q.sum(axis=1) - 1.0).max()),
        "max_abs_error": float(np.abs(emp - q).max()),
        "row_p_values": p_values,
        "min_row_p_value": min(p_values),
    }
    write_json(out / "transfer_summary.json", summary)
    _figure(cfg, plotting.matrix_pair, q, emp, out / "transfer_matrix.png")
    return EXIT_OK


def cmd_perf_report(cfg: ExperimentConfig) -> int:
    rc = cfg.run_config()
    out = Path(cfg.out)
    e, t = rc.energy, rc.timing
    result = run(rc)
    steps = int(result.steps.sum())
    acc = result.acceptance_rate
    bits = (4, 8, 16, 32)
    k = rc.n_bits // 4
    breakdown = {"random": e.e_random * k, "copy": e.e_copy * k, "read": e.e_read * k,
                 "urng": e.e_urng / e.urng_share, "calc": e.e_calc}
    report = {
        "command": "perf-report",
        "config": cfg.to_dict(),
        **perf.constants_to_dict(e, t),
        "totals": {
            "n_bits": rc.n_bits,
            "compartments": rc.compartments,
            "steps": steps,
            "acceptance_rate": acc,
            "ledger": result.ledger.to_dict(),
            "model_total_fj": (perf.blended_energy(e, rc.n_bits, acc) * 1000.0 * steps
                               if steps else 0.0),
        },
        "per_sample": {
            "breakdown_accepted_fj": breakdown,
            "by_bits": [{"n_bits": b,
                         "accepted_pj": perf.energy_per_sample(e, b, True),
                         "rejected_pj": perf.energy_per_sample(e, b, False)} for b in bits],
        },
        "throughput_curve": perf.throughput_curve(t, rc.compartments, bits),
        "area": perf.area_report(),
    }
    write_json(out / "perf_report.json", report)
    _figure(cfg, plotting.energy_breakdown, breakdown, out / "energy_breakdown.png")
    _figure(cfg, plotting.throughput_curve, report["throughput_curve"], out / "throughput.png")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig) -> int:
    param, values = cfg.sweep_points()
    out = Path(cfg.out)
    target = cfg.build_target()
    rows = []
    for v in values:
        point = cfg.merged({param: v})
        rc = point.run_config(target=target)
        p = rc.flip_probs()[0]
        result = run(rc)
        _, tv, _ = _fit(result.flat(), target)
        rows.append({"param": param, "value": v, "p_bfr": p,
                     "lambda3": lambda_after(p, 3) if p <= 0.5 else float("nan"),
                     "acceptance_rate": result.acceptance_rate, "tv": tv})
        log.info("sweep %s=%g p_bfr=%.4f acc=%.4f", param, v, p, result.acceptance_rate)
    cols = ["param", "value", "p_bfr", "lambda3", "acceptance_rate", "tv"]
    write_csv(out / "sweep.csv", cols,
              ([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in cols] for r in rows))
    write_json(out / "sweep_summary.json", {"command": "sweep", "config": cfg.to_dict(),
                                            "param": param, "points": rows})
    _figure(cfg, plotting.sweep_curves, rows, param, out / "sweep.png")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "reference": cmd_reference,
    "rng-test": cmd_rng_test,
    "transfer-matrix": cmd_transfer_matrix,
    "perf-report": cmd_perf_report,
    "sweep": cmd_sweep,
}


# -- argument parsing -------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("experiment")
    g.add_argument("--config", metavar="PATH", help="JSON config; flags override its fields")
    g.add_argument("--seed", type=int)
    g.add_argument("--bits", type=int, dest="n_bits", metavar="N")
    g.add_argument("--iterations", type=int, metavar="N")
    g.add_argument("--burn-in", type=int, dest="burn_in", metavar="N")
    g.add_argument("--compartments", type=int, metavar="N")
    g.add_argument("--cvdd", type=float, metavar="V")
    g.add_argument("--temp", type=float, dest="temperature", metavar="C")
    g.add_argument("--out", metavar="DIR")
    g.add_argument("--target", metavar="JSON", help="target spec as JSON text or a file path")
    g.add_argument("--thin", type=int, metavar="K")
    g.add_argument("--workers", type=int, metavar="N")
    g.add_argument("--stages", type=int, metavar="N")
    g.add_argument("--p-bfr", type=float, dest="p_bfr", metavar="P",
                   help="override the flip probability in both directions")
    g.add_argument("--per-compartment-u", dest="shared_u", action="store_const", const=False,
                   help="one uniform generator per compartment instead of a shared one")
    g.add_argument("--draws", type=int, metavar="N", help="rng-test: number of outputs")
    g.add_argument("--trials", type=int, metavar="N", help="transfer-matrix: pseudo-reads per row")
    g.add_argument("--sweep", choices=SWEEP_PARAMS, help="sweep: swept parameter")
    g.add_argument("--start", type=float)
    g.add_argument("--stop", type=float)
    g.add_argument("--step", type=float)
    g.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cimmcmc",
                                     description="Compute-in-memory MCMC macro simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "sample": "run MH chains on the simulated macro",
        "reference": "run the floating-point reference sampler",
        "rng-test": "draw from the XOR-cascade uniform generator",
        "transfer-matrix": "analytic vs empirical proposal matrix",
        "perf-report": "energy, throughput and area report",
        "sweep": "sweep cvdd, temperature or p_BFR",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    keys = ("seed", "n_bits", "iterations", "burn_in", "compartments", "cvdd", "temperature",
            "out", "thin", "workers", "stages", "p_bfr", "shared_u", "draws", "trials", "plots")
    overrides = {k: getattr(args, k) for k in keys}
    if args.target is not None:
        text = args.target.strip()
        overrides["target"] = json.loads(text) if text.startswith("{") else text
    cfg = ExperimentConfig.load(args.config, **overrides)
    sweep = {k: getattr(args, k) for k in ("start", "stop", "step") if getattr(args, k) is not None}
    if args.sweep is not None:
        sweep["param"] = args.sweep
    if sweep:
        cfg = cfg.merged({"sweep": {**cfg.sweep, **sweep}})
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
