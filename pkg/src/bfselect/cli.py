"""Command-line front end: selection runs, diagnostics, and experiment sweeps.

Every command resolves its options from flags layered over an optional JSON
config file (flags win), writes a `manifest.json` echoing the fully resolved
configuration, and emits RFC-4180 CSV files with floats at 17 significant
digits.  Re-running a command from its manifest reproduces the outputs byte
for byte.  Reporting commands also render PNG figures next to the CSVs
unless `--no-plots` is given.

Exit codes: 0 success, 1 input error, 2 numeric failure, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bayes import ModelScorer, SparsitySizePrior, TruncatedPoissonPrior
from .diagnostics import check_standardization, run_diagnostics
from .errors import BfselectError, BudgetError, InputError, NumericError
from .experiments import (
    ConsistencyCurve,
    Equicorrelated,
    IIDGaussian,
    NLogN,
    Power,
    SyntheticConfig,
    consistency_experiment,
    generate,
    overfit_class_experiment,
)
from .linalg import Dataset, standardize
from .search import SearchConfig, enumerate_posterior, stochastic_search
from .stablelaw import StableSimConfig, run_stable_sim, tabulated_limit_reference


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; that slot belongs to
    # numeric failures here, so parse problems become input errors instead
    def error(self, message):
        raise InputError(message)


# ---------------------------------------------------------------------------
# option resolution: defaults < config file < explicit flags


@dataclass(frozen=True)
class _Opt:
    convert: Callable
    default: object = None
    required: bool = False
    in_manifest: bool = True


def _c_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise InputError(f"expected an integer, got {value!r}")
    return int(value)


def _c_float(value) -> float:
    if isinstance(value, bool):
        raise InputError(f"expected a number, got {value!r}")
    return float(value)


def _c_opt_float(value):
    return None if value is None else _c_float(value)


def _c_str(value) -> str:
    if not isinstance(value, str):
        raise InputError(f"expected a string, got {value!r}")
    return value


def _c_opt_str(value):
    return None if value is None else _c_str(value)


def _c_bool(value) -> bool:
    if not isinstance(value, bool):
        raise InputError(f"expected true/false, got {value!r}")
    return value


def _c_int_list(value) -> list[int]:
    if isinstance(value, str):
        parts = [part for part in value.split(",") if part.strip()]
        if not parts:
            raise InputError(f"empty integer list: {value!r}")
        return [int(part) for part in parts]
    if isinstance(value, list):
        return [_c_int(item) for item in value]
    raise InputError(f"expected a comma list of integers, got {value!r}")


def _choice(options: tuple[str, ...]) -> Callable:
    def convert(value):
        value = _c_str(value)
        if value not in options:
            raise InputError(f"expected one of {'/'.join(options)}, got {value!r}")
        return value

    return convert


def _flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def _resolve(args: argparse.Namespace, command: str,
             schema: dict[str, _Opt]) -> dict:
    file_values = {}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {config_path} is not valid JSON: {exc}")
        if not isinstance(file_values, dict):
            raise InputError(f"config file {config_path} must hold an object")
        recorded = file_values.pop("command", command)
        if recorded != command:
            raise InputError(
                f"config file was written for '{recorded}', not '{command}'")
        unknown = sorted(set(file_values) - set(schema))
        if unknown:
            raise InputError(f"unknown config keys for {command}: "
                             + ", ".join(unknown))

    resolved = {}
    for key, opt in schema.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            try:
                resolved[key] = opt.convert(file_values[key])
            except (ValueError, TypeError) as exc:
                raise InputError(f"config key {key}: {exc}")
        elif opt.required:
            raise InputError(f"missing required option {_flag_name(key)}")
        else:
            resolved[key] = opt.default
    if "seed" in resolved:
        if resolved["seed"] is None:
            resolved["seed"] = int.from_bytes(os.urandom(8), "big")
        if not 0 <= resolved["seed"] < 2 ** 64:
            raise InputError(f"seed must fit in 64 bits, got {resolved['seed']}")
    return resolved


def _write_manifest(out: str, command: str, resolved: dict,
                    schema: dict[str, _Opt]) -> None:
    body = {"command": command}
    body.update({key: value for key, value in resolved.items()
                 if schema[key].in_manifest})
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# CSV and matrix I/O


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _read_matrix(path: str, name: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            raw = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise InputError(f"cannot read {name} file: {exc}")
    if not raw:
        raise InputError(f"{name} file {path} is empty")

    def parse(row: list[str], index: int) -> list[float]:
        values = []
        for j, cell in enumerate(row):
            try:
                values.append(float(cell))
            except ValueError:
                raise InputError(f"{name} row {index + 1}, column {j + 1}: "
                                 f"non-numeric cell {cell!r}")
        return values

    try:
        data = [[float(cell) for cell in raw[0]]]
        start = 1
    except ValueError:
        data = []
        start = 1
    width = len(raw[0])
    for i in range(start, len(raw)):
        if len(raw[i]) != width:
            raise InputError(f"{name} row {i + 1} has {len(raw[i])} cells, "
                             f"expected {width}")
        data.append(parse(raw[i], i))
    if not data:
        raise InputError(f"{name} file {path} holds a header but no rows")
    return np.array(data)


def _load_dataset(resolved: dict) -> Dataset:
    X = _read_matrix(resolved["x"], "X")
    y = _read_matrix(resolved["y"], "y")
    if y.shape[1] != 1:
        raise InputError(f"y must be a single column, got {y.shape[1]} columns")
    if y.shape[0] != X.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if X.shape[0] < 3:
        raise InputError(f"need at least 3 rows, got {X.shape[0]}")
    return Dataset(y[:, 0], X)


def _ingest(resolved: dict) -> tuple[Dataset, bool]:
    """Load X/y and put the design in scoring form.

    Files that already carry centered unit-scale columns are used verbatim;
    anything else is standardized on the way in.  The flag reports the
    file's original state.
    """
    raw = _load_dataset(resolved)
    if check_standardization(raw).ok:
        return Dataset(raw.y, raw.X, standardized=True), True
    return standardize(raw), False


def _model_string(model: tuple[int, ...]) -> str:
    return ";".join(str(k) for k in model)


# ---------------------------------------------------------------------------
# flag-value parsers for structured options


def _parse_family(text: str, what: str, families: dict):
    head, _, rest = text.partition(":")
    if head not in families:
        raise InputError(f"unknown {what} {head!r}; expected one of "
                         + ", ".join(sorted(families)))
    cls, params = families[head]
    kwargs = {}
    if rest:
        for part in rest.split(","):
            key, eq, value = part.partition("=")
            if key not in params or not eq:
                raise InputError(f"bad {what} parameter {part!r} in {text!r}")
            try:
                kwargs[key] = params[key](value)
            except ValueError:
                raise InputError(f"bad {what} parameter value in {text!r}")
    return cls(**kwargs)


def _parse_regime(text: str):
    return _parse_family(text, "regime", {"nlogn": (NLogN, {"t": float}),
                                          "power": (Power, {"d": float})})


def _parse_design(text: str):
    return _parse_family(text, "design", {"iid": (IIDGaussian, {}),
                                          "equicorr": (Equicorrelated,
                                                       {"rho": float})})


def _synthetic_config(resolved: dict, n: int) -> SyntheticConfig:
    return SyntheticConfig(n=n, f=resolved["f"],
                           regime=_parse_regime(resolved["regime"]),
                           c1_target=resolved["c1"], c2=resolved["c2"],
                           sigma2=resolved["sigma2"],
                           design=_parse_design(resolved["design"]),
                           seed=resolved["seed"])


# ---------------------------------------------------------------------------
# plots


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def _save_fig(fig, path: str) -> None:
    fig.savefig(path, dpi=100, metadata={"Software": "bfselect"})


def _plot_select(out: str, probs: np.ndarray, top) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(1, probs.size + 1), probs, color="#32618d")
    ax.set_xlabel("column")
    ax.set_ylabel("inclusion probability")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    _save_fig(fig, os.path.join(out, "inclusion.png"))
    plt.close(fig)

    shown = top[:20]
    labels = [_model_string(model) or "(empty)" for model, _ in shown]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(len(shown)), [mass for _, mass in shown], color="#32618d")
    ax.set_xticks(np.arange(len(shown)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("posterior mass")
    fig.tight_layout()
    _save_fig(fig, os.path.join(out, "model_mass.png"))
    plt.close(fig)


def _plot_consistency(out: str, n_grid, median_post, recovery) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(n_grid, median_post, marker="o", label="median posterior on truth")
    ax.plot(n_grid, recovery, marker="s", label="exact recovery rate")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("probability")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save_fig(fig, os.path.join(out, "curve.png"))
    plt.close(fig)


def _plot_members(out: str, member_log_bf: np.ndarray) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.hist(member_log_bf[np.isfinite(member_log_bf)], bins=40,
            color="#32618d")
    ax.set_xlabel("member log Bayes factor vs truth")
    ax.set_ylabel("count")
    fig.tight_layout()
    _save_fig(fig, os.path.join(out, "members.png"))
    plt.close(fig)


def _plot_stable(out: str, sums: np.ndarray, lo: float, hi: float) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4))
    body = sums[(sums >= lo) & (sums <= hi)]
    ax.hist(body, bins=60, density=True, color="#32618d", alpha=0.8,
            label="normalized sums")
    xs = np.linspace(lo, hi, 400)
    reference = tabulated_limit_reference()
    ax.plot(xs, np.gradient(reference(xs), xs), color="#c23b22",
            label="limit density")
    ax.set_xlabel("normalized sum")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    _save_fig(fig, os.path.join(out, "histogram.png"))
    plt.close(fig)


# ---------------------------------------------------------------------------
# commands


def _cmd_select(resolved: dict) -> None:
    dataset, was_standardized = _ingest(resolved)
    if not was_standardized:
        print("note: columns were standardized on ingestion", file=sys.stderr)
    family = resolved["prior"]
    if family == "sparsity":
        prior = SparsitySizePrior(resolved["c2_exponent"], dataset.p,
                                  min(dataset.p, dataset.n - 3))
        g_route = "betaprime"
    else:
        prior = TruncatedPoissonPrior.for_dataset(resolved["lam"], dataset)
        g_route = family
    scorer = ModelScorer(dataset, prior, g_route=g_route)

    if resolved["mode"] == "enumerate":
        summary = enumerate_posterior(dataset, prior, scorer=scorer)
    else:
        burn_in = resolved["burn_in"]
        if burn_in is None:
            burn_in = resolved["iters"] // 5
        config = SearchConfig(iterations=resolved["iters"], burn_in=burn_in,
                              chains=resolved["chains"], seed=resolved["seed"])
        summary = stochastic_search(dataset, prior, config, scorer=scorer)

    out = resolved["out"]
    top = summary.top_models(resolved["top"])
    _write_csv(os.path.join(out, "model_mass.csv"), ["model", "mass"],
               [(_model_string(model), mass) for model, mass in top])
    _write_csv(os.path.join(out, "inclusion.csv"), ["column", "probability"],
               [(k + 1, float(prob))
                for k, prob in enumerate(summary.inclusion_probs)])
    map_mass = summary.model_masses[summary.map_model]
    _write_csv(os.path.join(out, "map.csv"), ["model", "mass"],
               [(_model_string(summary.map_model), map_mass)])
    if not resolved["no_plots"]:
        _plot_select(out, summary.inclusion_probs, top)
    for note in summary.warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(f"MAP model: {_model_string(summary.map_model) or '(empty)'} "
          f"(mass {map_mass:.6g}, {summary.method}, "
          f"{summary.visited_count} models)")


def _cmd_diagnose(resolved: dict) -> None:
    dataset, was_standardized = _ingest(resolved)
    t_model: tuple[int, ...] = ()
    beta_t = None
    sigma2 = None
    if resolved["truth"] is not None:
        try:
            with open(resolved["truth"]) as fh:
                truth = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read truth file: {exc}")
        except json.JSONDecodeError as exc:
            raise InputError(f"truth file is not valid JSON: {exc}")
        t_model = tuple(int(k) for k in truth.get("t_model", ()))
        if "beta" in truth:
            beta_t = np.asarray(truth["beta"], dtype=float)
        sigma2 = truth.get("sigma2")
    threads = resolved["threads"] or os.cpu_count() or 1
    report = run_diagnostics(dataset, t_model=t_model, beta_t=beta_t,
                             sigma2=sigma2, mc_draws=resolved["mc_draws"],
                             seed=resolved["seed"], threads=threads)
    text = report.to_text()
    if not was_standardized:
        text = ("input_standardized = false "
                "(columns standardized before diagnosis)\n") + text
    with open(os.path.join(resolved["out"], "diagnostics.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")


def _cmd_gen_data(resolved: dict) -> None:
    config = _synthetic_config(resolved, resolved["n"])
    dataset, truth = generate(config)
    out = resolved["out"]
    with open(os.path.join(out, "X.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in dataset.X:
            writer.writerow([_fmt(float(value)) for value in row])
    with open(os.path.join(out, "y.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        for value in dataset.y:
            writer.writerow([_fmt(float(value))])
    body = {"t_model": list(truth.t_model),
            "beta": [float(b) for b in truth.beta],
            "sigma2": truth.sigma2,
            "c1_realized": truth.c1_realized,
            "c2_implied": truth.c2_implied}
    with open(os.path.join(out, "truth.json"), "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote n={dataset.n}, p={dataset.p}, |T|={truth.t_size} to {out}")


_CELL_FIELDS = ["n", "seed_index", "status", "posterior_true", "recovered",
                "zeta_min", "error"]


def _read_cells(path: str) -> dict[tuple[int, int], dict]:
    cells = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != _CELL_FIELDS:
                raise InputError(f"{path} does not look like a cells file "
                                 f"(columns {reader.fieldnames})")
            for record in reader:
                cells[(int(record["n"]), int(record["seed_index"]))] = record
    except OSError as exc:
        raise InputError(f"cannot read previous cells file: {exc}")
    return cells


def _cmd_consistency(resolved: dict) -> None:
    n_grid = resolved["n_grid"]
    seeds = resolved["seeds"]
    out = resolved["out"]
    # validate the base at the widest point; tighter cells may still fail
    # per-cell and land in cells.csv as failed rows
    base = _synthetic_config(resolved, max(n_grid))

    previous: dict[tuple[int, int], dict] = {}
    cells_path = os.path.join(out, "cells.csv")
    if resolved["resume"] and os.path.exists(cells_path):
        previous = {key: record for key, record in _read_cells(cells_path).items()
                    if key[0] in set(n_grid) and key[1] < seeds}

    search = None
    if resolved["iters"] is not None:
        burn_in = resolved["burn_in"]
        if burn_in is None:
            burn_in = resolved["iters"] // 5
        search = SearchConfig(iterations=resolved["iters"], burn_in=burn_in,
                              chains=resolved["chains"])
    curve = consistency_experiment(base, n_grid, seeds, search,
                                   lam=resolved["lam"],
                                   g_route=resolved["prior"],
                                   enumeration_cutoff=resolved["enum_cutoff"],
                                   skip_cells=set(previous))

    failure_text = {(n, si): message for n, si, message in curve.failures}
    rows = []
    post = np.full((len(n_grid), seeds), np.nan)
    rec = np.full((len(n_grid), seeds), np.nan)
    zeta = np.full((len(n_grid), seeds), np.nan)
    for ni, n in enumerate(n_grid):
        for si in range(seeds):
            if (n, si) in previous:
                record = previous[(n, si)]
                if record["status"] == "ok":
                    post[ni, si] = float(record["posterior_true"])
                    rec[ni, si] = float(record["recovered"])
                    zeta[ni, si] = float(record["zeta_min"])
                rows.append([record["n"], record["seed_index"],
                             record["status"],
                             *(float(record[key]) if record[key] else ""
                               for key in ("posterior_true", "recovered",
                                           "zeta_min")),
                             record["error"]])
            elif (n, si) in failure_text:
                rows.append([n, si, "failed", "", "", "", failure_text[(n, si)]])
            else:
                post[ni, si] = curve.posterior_true[ni, si]
                rec[ni, si] = curve.recovery[ni, si]
                zeta[ni, si] = curve.zeta_full[ni, si]
                rows.append([n, si, "ok", post[ni, si], rec[ni, si],
                             zeta[ni, si], ""])
    _write_csv(cells_path, _CELL_FIELDS, rows)

    merged = ConsistencyCurve(n_grid=tuple(n_grid), posterior_true=post,
                              recovery=rec, zeta_full=zeta, failures=())
    quarter, zeta_rate = merged.exceedance_rates()
    curve_rows = []
    for i, n in enumerate(n_grid):
        curve_rows.append([n, "median_posterior", merged.median_posterior[i]])
        curve_rows.append([n, "recovery_rate", merged.recovery_rate[i]])
        curve_rows.append([n, "floor_quarter_rate", quarter[i]])
        curve_rows.append([n, "floor_zeta_rate", zeta_rate[i]])
    _write_csv(os.path.join(out, "curve.csv"), ["n", "statistic", "value"],
               curve_rows)
    if not resolved["no_plots"]:
        _plot_consistency(out, n_grid, merged.median_posterior,
                          merged.recovery_rate)
    done = sum(1 for row in rows if row[2] == "ok")
    print(f"{done} cells ok, {len(rows) - done} failed "
          f"({len(previous)} reused); median posterior at n={n_grid[-1]}: "
          f"{merged.median_posterior[-1]:.4g}")


def _cmd_overfit_class(resolved: dict) -> None:
    config = _synthetic_config(resolved, resolved["n"])
    stat = overfit_class_experiment(
        config, resolved["c"],
        resolved["assumption_iii_design"],
        lam=resolved["lam"], sample_size=resolved["sample_size"],
        extraneous_control=resolved["extraneous_control"],
        return_members=True)
    out = resolved["out"]
    _write_csv(os.path.join(out, "summary.csv"),
               ["c", "n", "class_count", "members_evaluated", "exact",
                "sum_odds", "mean_bf", "h_stat"],
               [[stat.c, stat.n, stat.class_count, stat.members_evaluated,
                 str(stat.exact).lower(), stat.sum_odds, stat.mean_bf,
                 stat.h_stat]])
    _write_csv(os.path.join(out, "members.csv"),
               ["member_index", "log_bf", "xi_half"],
               [(i, float(lbf), float(xi)) for i, (lbf, xi)
                in enumerate(zip(stat.member_log_bf, stat.member_xi_half))])
    if not resolved["no_plots"]:
        _plot_members(out, np.asarray(stat.member_log_bf, dtype=float))
    print(f"c={stat.c}: mean BF {stat.mean_bf:.6g}, h = {stat.h_stat:.6g} "
          f"over {stat.members_evaluated} of {stat.class_count} members")


def _cmd_stable_sim(resolved: dict) -> None:
    config = StableSimConfig(c=resolved["c"], m=resolved["m"],
                             replicates=resolved["replicates"],
                             seed=resolved["seed"])
    result = run_stable_sim(config)
    out = resolved["out"]
    sums = result.sums

    _write_csv(os.path.join(out, "sums.csv"), ["replicate", "value"],
               [(r, float(value)) for r, value in enumerate(sums)])

    bins = resolved["bins"]
    if bins is None:
        bins = max(10, min(80, int(round(math.sqrt(config.replicates)))))
    lo = float(sums.min())
    hi = float(np.quantile(sums, 0.995))
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(sums, bins=bins, range=(lo, hi))
    rows = [[float(edges[i]), float(edges[i + 1]), int(counts[i]),
             result.ks_beta1, result.ks_beta0] for i in range(bins)]
    overflow = int(np.sum(sums > hi))
    if overflow:
        rows.append([hi, math.inf, overflow, result.ks_beta1, result.ks_beta0])
    _write_csv(os.path.join(out, "histogram.csv"),
               ["bin_left", "bin_right", "count", "ks_beta1", "ks_beta0"],
               rows)

    hill = result.hill_estimate
    _write_csv(os.path.join(out, "stats.csv"),
               ["a_m", "b_m", "median", "ks_beta1", "ks_beta0",
                "hill_estimate"],
               [[result.constants.a_m, result.constants.b_m, result.median,
                 result.ks_beta1, result.ks_beta0,
                 "" if hill is None else hill]])
    if not resolved["no_plots"]:
        _plot_stable(out, sums, lo, hi)
    print(f"c={config.c}, m={config.m}: KS vs skewed limit "
          f"{result.ks_beta1:.4g}, vs Cauchy {result.ks_beta0:.4g}")


# ---------------------------------------------------------------------------
# schemas and parser wiring

_SYNTH_SCHEMA = {
    "f": _Opt(_c_float, required=True),
    "regime": _Opt(_c_str, "nlogn:t=1"),
    "c1": _Opt(_c_opt_float, None),
    "c2": _Opt(_c_float, required=True),
    "sigma2": _Opt(_c_float, 1.0),
    "design": _Opt(_c_str, "iid"),
}

_SCHEMAS: dict[str, dict[str, _Opt]] = {
    "select": {
        "x": _Opt(_c_str, required=True),
        "y": _Opt(_c_str, required=True),
        "lam": _Opt(_c_float, 1.0),
        "prior": _Opt(_choice(("betaprime", "zs", "sparsity")), "betaprime"),
        "c2_exponent": _Opt(_c_float, 2.0),
        "mode": _Opt(_choice(("enumerate", "mh")), "enumerate"),
        "iters": _Opt(_c_int, 20_000),
        "burn_in": _Opt(lambda v: None if v is None else _c_int(v), None),
        "chains": _Opt(_c_int, 3),
        "top": _Opt(_c_int, 1000),
        "seed": _Opt(_c_int, None),
        "no_plots": _Opt(_c_bool, False),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
    "diagnose": {
        "x": _Opt(_c_str, required=True),
        "y": _Opt(_c_str, required=True),
        "truth": _Opt(_c_opt_str, None),
        "mc_draws": _Opt(_c_int, 1000),
        "threads": _Opt(lambda v: None if v is None else _c_int(v), None),
        "seed": _Opt(_c_int, None),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
    "gen-data": {
        "n": _Opt(_c_int, required=True),
        **_SYNTH_SCHEMA,
        "seed": _Opt(_c_int, None),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
    "consistency": {
        "n_grid": _Opt(_c_int_list, required=True),
        "seeds": _Opt(_c_int, 30),
        **_SYNTH_SCHEMA,
        "lam": _Opt(_c_float, 1.0),
        "prior": _Opt(_choice(("betaprime", "zs")), "betaprime"),
        "iters": _Opt(lambda v: None if v is None else _c_int(v), None),
        "burn_in": _Opt(lambda v: None if v is None else _c_int(v), None),
        "chains": _Opt(_c_int, 3),
        "enum_cutoff": _Opt(_c_int, 10_000),
        "seed": _Opt(_c_int, None),
        "no_plots": _Opt(_c_bool, False),
        "resume": _Opt(_c_bool, False, in_manifest=False),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
    "overfit-class": {
        "c": _Opt(_c_int, required=True),
        "n": _Opt(_c_int, required=True),
        **_SYNTH_SCHEMA,
        "lam": _Opt(_c_float, 1.0),
        "sample_size": _Opt(_c_int, 2000),
        "extraneous_control": _Opt(_c_float, 0.1),
        "assumption_iii_design": _Opt(_c_bool, False),
        "seed": _Opt(_c_int, None),
        "no_plots": _Opt(_c_bool, False),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
    "stable-sim": {
        "c": _Opt(_c_int, required=True),
        "m": _Opt(_c_int, required=True),
        "replicates": _Opt(_c_int, 2000),
        "bins": _Opt(lambda v: None if v is None else _c_int(v), None),
        "seed": _Opt(_c_int, None),
        "no_plots": _Opt(_c_bool, False),
        "out": _Opt(_c_str, required=True, in_manifest=False),
    },
}

_HANDLERS = {
    "select": _cmd_select,
    "diagnose": _cmd_diagnose,
    "gen-data": _cmd_gen_data,
    "consistency": _cmd_consistency,
    "overfit-class": _cmd_overfit_class,
    "stable-sim": _cmd_stable_sim,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bfselect",
                     description="Bayesian variable selection for linear "
                                 "regression with growing dimension")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p: argparse.ArgumentParser, command: str) -> None:
        p.add_argument("--config", default=None,
                       help="JSON config or manifest; flags override it")
        p.add_argument("--out", default=None, help="output directory")
        schema = _SCHEMAS[command]
        if "seed" in schema:
            p.add_argument("--seed", dest="seed", type=int, default=None)
        if "no_plots" in schema:
            p.add_argument("--no-plots", dest="no_plots", action="store_const",
                           const=True, default=None)

    def synth(p: argparse.ArgumentParser) -> None:
        p.add_argument("--f", type=float, default=None,
                       help="dimension fraction, p = floor(f*n)")
        p.add_argument("--regime", default=None,
                       help="true-size regime: nlogn:t=1 or power:d=0.5")
        p.add_argument("--c1", type=float, default=None,
                       help="signal-mass target; omit for natural scale, "
                            "0 for a null model")
        p.add_argument("--c2", type=float, default=None,
                       help="per-coefficient signal floor")
        p.add_argument("--sigma2", type=float, default=None)
        p.add_argument("--design", default=None,
                       help="iid or equicorr:rho=0.3")

    p = sub.add_parser("select", help="posterior over models from X/y files")
    p.add_argument("--x", default=None, help="design matrix CSV")
    p.add_argument("--y", default=None, help="response CSV, one column")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="Poisson size-prior intensity")
    p.add_argument("--prior", choices=("betaprime", "zs", "sparsity"),
                   default=None)
    p.add_argument("--c2-exponent", dest="c2_exponent", type=float,
                   default=None, help="sparsity prior exponent")
    p.add_argument("--mode", choices=("enumerate", "mh"), default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--top", type=int, default=None,
                   help="cap on model_mass.csv rows")
    common(p, "select")

    p = sub.add_parser("diagnose", help="assumption checks for X/y files")
    p.add_argument("--x", default=None)
    p.add_argument("--y", default=None)
    p.add_argument("--truth", default=None, help="truth JSON from gen-data")
    p.add_argument("--mc-draws", dest="mc_draws", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    common(p, "diagnose")

    p = sub.add_parser("gen-data", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, default=None)
    synth(p)
    common(p, "gen-data")

    p = sub.add_parser("consistency", help="posterior-on-truth sweep over n")
    p.add_argument("--n-grid", dest="n_grid", type=_c_int_list, default=None,
                   help="comma list, e.g. 100,200,400,800")
    p.add_argument("--seeds", type=int, default=None, help="seeds per n")
    synth(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--prior", choices=("betaprime", "zs"), default=None)
    p.add_argument("--iters", type=int, default=None,
                   help="search iterations for non-enumerable cells")
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--enum-cutoff", dest="enum_cutoff", type=int, default=None)
    p.add_argument("--resume", action="store_const", const=True, default=None,
                   help="reuse cells already in OUT/cells.csv")
    common(p, "consistency")

    p = sub.add_parser("overfit-class",
                       help="Bayes factors of models overfitting the truth")
    p.add_argument("--c", type=int, default=None, help="extra predictors")
    p.add_argument("--n", type=int, default=None)
    synth(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--sample-size", dest="sample_size", type=int, default=None)
    p.add_argument("--extraneous-control", dest="extraneous_control",
                   type=float, default=None)
    p.add_argument("--assumption-iii-design", dest="assumption_iii_design",
                   action="store_const", const=True, default=None)
    common(p, "overfit-class")

    p = sub.add_parser("stable-sim", help="normalized heavy-tail sums vs the "
                                          "stable limit")
    p.add_argument("--c", type=int, default=None, help="chi-square degrees")
    p.add_argument("--m", type=int, default=None, help="summands per sum")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    common(p, "stable-sim")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        schema = _SCHEMAS[args.command]
        resolved = _resolve(args, args.command, schema)
        os.makedirs(resolved["out"], exist_ok=True)
        _write_manifest(resolved["out"], args.command, resolved, schema)
        _HANDLERS[args.command](resolved)
        return 0
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except BfselectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
