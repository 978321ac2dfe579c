"""Command-line interface.

Subcommands::

    simulate   colony partitions of the configured model -> CSV/JSONL
    walk       first-passage pairs of the walk representation -> CSV
    cumulant   empirical cumulant roots (and continuum targets) -> JSONL
    limit      limit-measure samples and mass-condition checks -> CSV/JSONL
    converge   convergence experiments against the scaling limit
    validate   the full self-consistency suite on the shipped defaults

Exit codes: 0 all checks passed, 1 a statistical check failed,
2 usage or configuration error.  The master seed can be overridden with
COLONIST_SEED; worker processes with COLONIST_THREADS.  Outputs are
deterministic for a fixed (config, seed) regardless of thread count.
"""

import argparse
import json
import sys
from importlib import resources

import numpy as np

from . import colony, harness, walk
from .cumulant import DegenerateSamplesError, solve_K_empirical, solve_kappa
from .harness import ConfigError, ExperimentConfig
from .levy import (NeutralMutationMeasure, OneTypeSiblingMeasure,
                   check_mass_condition, sample_Y1, sample_limit_measure)
from .reporting import StatTestResult
from .seeding import generator

EXIT_OK = 0
EXIT_STAT = 1
EXIT_USAGE = 2


def default_config_path():
    """Path of the config shipped inside the package."""
    return str(resources.files("colonist") / "configs" / "default.json")


def limit_measure_for(cfg):
    """The closed-form limit jump measure of the configured family."""
    fam = cfg.family()
    if cfg.rule == "thinning":
        return NeutralMutationMeasure(fam.law.beta, fam.law.b, cfg.c)
    if cfg.rule == "all_or_nothing":
        return OneTypeSiblingMeasure(fam.law.beta, fam.law.b)
    raise ConfigError("the cutoff rule has no closed-form limit family; "
                      "use the simulation subcommands")


def _write_results(results, path):
    with open(path, "w") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")


def _report(results, out_path):
    _write_results(results, out_path)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: "
              f"estimate={r.estimate:.6g} target={r.target:.6g} "
              f"tolerance={r.tolerance:.3g}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed "
          f"(results in {out_path})")
    return EXIT_STAT if failed else EXIT_OK


def cmd_simulate(cfg, out, budget=10**7):
    """Critical models have heavy-tailed total population (infinite mean),
    so runaway replicas are cut at a per-replica birth budget and flagged
    rather than aborting the whole run."""
    model = cfg.family().model_at(cfg.n_list[0])
    parts = []
    capped = 0
    from .kernels import StepBudgetExceeded
    for i in range(cfg.replicas):
        try:
            parts.append(colony.simulate_partition(
                model, model.a_n, (cfg.seed, "cli-simulate", i), budget))
        except StepBudgetExceeded:
            capped += 1
    colony.partitions_to_csv(parts, f"{out}/partitions.csv")
    colony.partitions_to_jsonl(parts, f"{out}/partitions.jsonl")
    zeta = np.array([p.zeta for p in parts])
    gamma = np.array([p.gamma for p in parts])
    print(f"{len(parts)} partitions at n={model.n} "
          f"(a={model.a_n}): mean population {zeta.mean():.1f}, "
          f"mean colonies {gamma.mean():.1f}; {capped} replicas exceeded "
          f"the {budget} birth budget and were dropped")
    print(f"wrote {out}/partitions.csv and {out}/partitions.jsonl")
    return EXIT_OK


def cmd_walk(cfg, out):
    model = cfg.family().model_at(cfg.n_list[-1])
    pairs = walk.passage_pairs(model, cfg.replicas, (cfg.seed, "cli-walk"))
    walk.pairs_to_csv(pairs, f"{out}/passage_pairs.csv")
    print(f"{cfg.replicas} passage pairs at n={model.n}: "
          f"mean tau1 {pairs[0].mean():.2f}, mean migrants "
          f"{pairs[1].mean():.3f}")
    print(f"wrote {out}/passage_pairs.csv")
    return EXIT_OK


def cmd_cumulant(cfg, out):
    model = cfg.family().model_at(cfg.n_list[0])
    n_samples = max(cfg.replicas, 10**4)
    C, M = colony.sterilized_sample(model, n_samples,
                                    (cfg.seed, "cli-cumulant"))
    try:
        measure = limit_measure_for(cfg)
    except ConfigError:
        measure = None
    rows = []
    for i, f in enumerate(cfg.test_functions):
        row = {"f_index": i,
               "support": list(f.support),
               "K_empirical": None, "K_stderr": None, "kappa": None}
        try:
            res = solve_K_empirical((C, M), f, scale=float(model.alpha))
            row["K_empirical"] = res.value
            row["K_stderr"] = res.stderr_propagated
        except DegenerateSamplesError as exc:
            row["degenerate"] = str(exc)
        if measure is not None:
            row["kappa"] = solve_kappa(measure, f).value
        rows.append(row)
        shown = (f"{row['K_empirical']:.10g}"
                 if row["K_empirical"] is not None else "degenerate")
        print(f"f[{i}] K_empirical={shown} kappa="
              f"{row['kappa'] if row['kappa'] is not None else 'n/a'}")
    with open(f"{out}/cumulant.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    print(f"wrote {out}/cumulant.jsonl")
    return EXIT_OK


def cmd_limit(cfg, out):
    measure = limit_measure_for(cfg)
    n_show = min(cfg.replicas, 100)
    with open(f"{out}/limit_atoms.csv", "w", newline="") as fh:
        import csv as _csv
        w = _csv.writer(fh)
        w.writerow(["replica_id", "atom_index", "x1"])
        for i in range(n_show):
            rng = generator(cfg.seed, "cli-limit", i)
            sample = sample_limit_measure(measure, cfg.a, cfg.eps, rng)
            for j, x1 in enumerate(sample.atoms):
                w.writerow([i, j, repr(float(x1))])
    value, ok = check_mass_condition(measure)
    results = [StatTestResult(
        name="mass-condition", estimate=value, target=1.0, stderr=0.0,
        tolerance=1e-9 if value > 1.0 else 1.0, passed=ok,
        details={"family": type(measure).__name__})]
    y1 = sample_Y1(measure, cfg.eps, max(cfg.replicas, 10**4),
                   (cfg.seed, "cli-limit-y1"))
    se = float(y1.std(ddof=1) / np.sqrt(y1.size))
    est = float(y1.mean())
    results.append(StatTestResult(
        name="migrant-subordinator-mean", estimate=est, target=1.0,
        stderr=se, tolerance=3 * se if est > 1.0 else max(3 * se, est),
        passed=bool(est <= 1.0 + 3 * se)))
    print(f"wrote {out}/limit_atoms.csv ({n_show} samples)")
    return _report(results, f"{out}/limit_results.jsonl")


def cmd_converge(cfg, out):
    fam = cfg.family()
    if cfg.law != "geometric" or cfg.rule != "thinning":
        raise ConfigError("converge needs the geometric law with thinning "
                          "(the family with closed-form limit targets)")
    results = []
    f0 = cfg.test_functions[0]
    rows, res = harness.run_passage_convergence(fam, f0, n_list=cfg.n_list,
                                       n_samples=max(cfg.replicas, 10**4),
                                       seed=cfg.seed)
    _rows_to_csv(rows, f"{out}/passage_convergence.csv")
    results += res
    fns = cfg.test_functions[:3]
    tables, res, _ = harness.run_partition_convergence(
        fam, fns=fns, n_list=cfg.n_list, n_replicas=cfg.replicas,
        seed=cfg.seed, eps=cfg.eps,
        limit_replicas=max(cfg.replicas, 5000))
    flat = [dict(row, f_index=k) for k, tab in enumerate(tables)
            for row in tab]
    _rows_to_csv(flat, f"{out}/partition_convergence.csv")
    results += res
    results.append(harness.run_total_population_check(
        fam, n=max(cfg.n_list[-1], 1000),
        n_replicas=max(cfg.replicas, 1000), seed=cfg.seed))
    return _report(results, f"{out}/results.jsonl")


def cmd_validate(cfg, out):
    results = [harness.run_conservation_check(
        n_partitions=10**5, seed=cfg.seed, n_critical=500)]
    results += harness.run_equivalence_suite(
        n_samples=2 * 10**4, n_replicas=2 * 10**4, seed=cfg.seed)
    results += harness.run_cumulant_consistency(
        n_samples=2 * 10**4, n_replicas=10**4, seed=cfg.seed)
    fam = cfg.family()
    _, res = harness.run_passage_convergence(fam, cfg.test_functions[1],
                                    n_list=(20, 60, 180),
                                    n_samples=4 * 10**4, seed=cfg.seed)
    results += res
    _, res, _ = harness.run_partition_convergence(
        fam, fns=harness.convergence_test_functions(),
        n_list=tuple(cfg.n_list), n_replicas=max(cfg.replicas, 2000),
        seed=cfg.seed, eps=cfg.eps, limit_replicas=5000)
    results += res
    results.append(harness.run_total_population_check(
        fam, n=10**4, n_replicas=1000, seed=cfg.seed))
    for measure in (NeutralMutationMeasure(2.0, 1.0, cfg.c),
                    OneTypeSiblingMeasure(2.0, 1.0)):
        value, ok = check_mass_condition(measure)
        results.append(StatTestResult(
            name=f"mass-condition[{type(measure).__name__}]",
            estimate=value, target=1.0, stderr=0.0,
            tolerance=1e-9 if value > 1.0 else 1.0, passed=ok))
    return _report(results, f"{out}/results.jsonl")


def _rows_to_csv(rows, path):
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        keys = list(rows[0].keys())
        w.writerow(keys)
        for row in rows:
            w.writerow([repr(row[k]) if isinstance(row[k], float)
                        else row[k] for k in keys])


def build_parser():
    p = argparse.ArgumentParser(
        prog="colonist",
        description="Branching-with-emigration simulation and "
                    "scaling-limit verification toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, needs_config in [("simulate", True), ("walk", True),
                               ("cumulant", True), ("limit", True),
                               ("converge", True), ("validate", False)]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None,
                        required=False,
                        help="JSON experiment config"
                             + ("" if needs_config
                                else " (defaults to the shipped config)"))
        sp.add_argument("--out", default=None,
                        help="output directory (default: config output_dir)")
    return p


_HANDLERS = {
    "simulate": cmd_simulate,
    "walk": cmd_walk,
    "cumulant": cmd_cumulant,
    "limit": cmd_limit,
    "converge": cmd_converge,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        path = args.config
        if path is None:
            if args.command != "validate":
                raise ConfigError(
                    f"the {args.command} subcommand requires --config")
            path = default_config_path()
        cfg = ExperimentConfig.from_file(path)
        out = args.out or cfg.output_dir
        return _HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
