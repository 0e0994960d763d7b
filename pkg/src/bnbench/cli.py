"""Command line front end: ``bnbench <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from bnbench import harness
from bnbench.bn_model import dimension_report, load_network
from bnbench.evaluation import score_graph
from bnbench.graphs import dag_from_network, dag_to_mag, read_graph, write_graph
from bnbench.learners import ALGORITHMS, learn
from bnbench.noise import compose_experiment, experiment_catalog
from bnbench.sampling import DEFAULT_MISSING, read_dataset, sample, with_provenance, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _learner_params(args) -> dict:
    if args.algo == "pc-stable":
        return {"alpha": args.alpha, "max_cond_size": args.max_cond_size}
    params = {"score": args.score, "iss": args.iss, "max_in_degree": args.max_in_degree, "seed": args.seed}
    if args.algo == "tabu":
        params.update(tabu_length=args.tabu_len, tabu_escapes=args.tabu_escapes)
    return params


def cmd_describe(args) -> int:
    net = load_network(args.network)
    rep = dimension_report(net)
    print(f"network: {net.name}")
    print(f"nodes: {rep.node_count}")
    print(f"arcs: {rep.arc_count}")
    print(f"average in-degree: {float(rep.average_in_degree):.2f}")
    print(f"average degree: {float(rep.average_degree):.2f}")
    print(f"max in-degree: {rep.max_in_degree}")
    print(f"free parameters: {rep.free_parameters}")
    if args.catalog:
        for code, ok, notes in experiment_catalog(net, args.missing_token):
            print(f"{code:6s} {'yes' if ok else 'X':3s} {notes}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    net = load_network(args.network)
    ds = sample(net, args.n, args.seed)
    write_dataset(ds, args.out)
    return EXIT_OK


def cmd_corrupt(args) -> int:
    net = load_network(args.network)
    clean = read_dataset(args.data)
    expected = [(v.name, v.states) for v in net.variables]
    if list(clean.columns) != expected:
        print("error: dataset columns/states do not match the network", file=sys.stderr)
        return EXIT_CONFIG
    noisy, manifest, truth = compose_experiment(net, clean, args.code, args.seed, args.missing_token)
    noisy = with_provenance(
        noisy,
        noise=manifest.to_dict(),
        truth={"class": truth.kind, "label": truth.label, "latent": list(truth.latent)},
    )
    write_dataset(noisy, args.out)
    print(truth.label)
    return EXIT_OK


def cmd_truth(args) -> int:
    net = load_network(args.network)
    dag = dag_from_network(net)
    latent: list[str] = []
    if args.latent:
        latent = [x for x in args.latent.split(",") if x]
    elif args.code:
        # latent selection depends only on the network, code and seed, never on row data
        _, _, spec = compose_experiment(net, sample(net, 1, args.seed), args.code, args.seed, args.missing_token)
        latent = list(spec.latent)
    g = dag_to_mag(dag, latent) if latent else dag
    write_graph(g, args.out)
    return EXIT_OK


def cmd_learn(args) -> int:
    ds = read_dataset(args.data)
    g = learn(ds, args.algo, _learner_params(args))
    write_graph(g, args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    learned, truth = read_graph(args.learned), read_graph(args.truth)
    rep = score_graph(learned, truth, args.truth_label)
    row = {"algorithm": args.algorithm, **rep.row()}
    w = csv.DictWriter(sys.stdout, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow({k: (round(v, 6) if isinstance(v, float) else v) for k, v in row.items()})
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = harness.load_config(args.config)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers:
        cfg.workers = args.workers
    if args.time_limit:
        cfg.time_limit = args.time_limit
    if args.runtime_scale:
        cfg.runtime_scale = args.runtime_scale
    if args.repeats:
        cfg.repeats = args.repeats
    records = harness.run_matrix(cfg, args.out)
    harness.report(records, Path(args.out) / "report", cfg.time_limit, cfg.runtime_scale)
    failed = [r for r in records if r.status in harness.FAILURES]
    print(f"{len(records)} records, {len(failed)} failures; report in {Path(args.out) / 'report'}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args) -> int:
    records = harness.load_records(args.out)
    if not records:
        print(f"error: no records under {args.out}", file=sys.stderr)
        return EXIT_CONFIG
    harness.report(records, args.report_dir or Path(args.out) / "report", args.time_limit, args.runtime_scale)
    return EXIT_PARTIAL if harness.has_failures(records) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bnbench", description="Bayesian network structure learning benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="print network dimensions")
    p.add_argument("network")
    p.add_argument("--catalog", action="store_true", help="also list experiment-code eligibility")
    p.add_argument("--missing-token", default=DEFAULT_MISSING)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("gen-data", help="sample a clean dataset")
    p.add_argument("network")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("corrupt", help="apply an experiment code to a clean dataset")
    p.add_argument("data")
    p.add_argument("--network", required=True)
    p.add_argument("--code", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-token", default=DEFAULT_MISSING)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("truth", help="write the ground-truth DAG or MAG")
    p.add_argument("network")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--latent", help="comma-separated latent variables")
    g.add_argument("--code", help="experiment code whose latent selection to use")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-token", default=DEFAULT_MISSING)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("learn", help="learn a graph from a dataset")
    p.add_argument("data")
    p.add_argument("--algo", choices=ALGORITHMS, default="hc")
    p.add_argument("--score", choices=("bic", "bdeu"), default="bic")
    p.add_argument("--iss", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--max-in-degree", type=int)
    p.add_argument("--max-cond-size", type=int)
    p.add_argument("--tabu-len", type=int, default=10)
    p.add_argument("--tabu-escapes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("score", help="score a learned graph against a true graph (one CSV row)")
    p.add_argument("learned")
    p.add_argument("truth")
    p.add_argument("--algorithm", default="")
    p.add_argument("--truth-label")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("run", help="run an experiment matrix from a config file")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--runtime-scale", type=float)
    p.add_argument("--repeats", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild report tables from stored records")
    p.add_argument("out")
    p.add_argument("--report-dir")
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--runtime-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
