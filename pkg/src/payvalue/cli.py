"""payvalue command line: synth, validate, score, topology, report, repro.

Exit codes: 0 success, 1 usage or configuration error, 2 validation failure,
3 parse error, 4 non-convergence, 5 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import analytics, topology
from .config import ConfigError, RunConfig, build_run_config, env_overrides, read_config_file
from .graph_model import GraphError, PaymentDataset, build_graph, restrict_to_window, validate
from .ingest import ParseError, ValidationFailed, load_dataset, write_dataset
from .model import UserValueModel
from .synth import generate
from .value_engine import NotConverged

log = logging.getLogger("payvalue")

EXIT_OK, EXIT_CONFIG, EXIT_INVALID, EXIT_PARSE, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


# ---------------------------------------------------------------- stages


def load_input(cfg: RunConfig) -> PaymentDataset:
    if cfg.data is not None:
        log.info("loading dataset from %s", cfg.data)
        return load_dataset(cfg.data)
    log.info("generating synthetic dataset (seed=%d, n_users=%d)", cfg.synth.seed,
             cfg.synth.n_users)
    return generate(cfg.synth)


def fit_model(dataset: PaymentDataset, cfg: RunConfig) -> UserValueModel:
    model = UserValueModel.from_params(cfg.intrinsic, cfg.value, workers=cfg.workers)
    model.fit(dataset)
    log.info("value converged after %d supersteps", model.n_iter_)
    return model


def stage_score(dataset: PaymentDataset, cfg: RunConfig, out: Path) -> UserValueModel:
    model = fit_model(dataset, cfg)
    s = model.scores_
    _write_csv(s[["user_id", "M", "R", "F", "E", "I"]], out / "intrinsic.csv")
    _write_csv(s[["user_id", "I", "N", "V"]], out / "value.csv")
    return model


def stage_topology(dataset: PaymentDataset, cfg: RunConfig, out: Path) -> dict:
    net = _network(dataset, cfg)
    wcc = topology.weakly_connected_components(net)
    _write_csv(wcc, out / "wcc.csv")
    _write_csv(topology.distribution_table(wcc["size"]), out / "wcc_ccdf.csv")
    _write_csv(topology.out_degree_distribution(net), out / "outdeg_ccdf.csv")
    _write_csv(topology.reachable_set_sizes(net), out / "reach_ccdf.csv")
    return _topology_summary(net)


def _network(dataset: PaymentDataset, cfg: RunConfig):
    cutoff = cfg.cutoff if cfg.cutoff is not None else dataset.max_time()
    return build_graph(restrict_to_window(dataset, cutoff)).network


def _topology_summary(net) -> dict:
    sizes = topology.weakly_connected_components(net)["size"]
    return {
        "n_components": int(sizes.size),
        "largest_component": int(sizes.max()) if sizes.size else 0,
        "max_depth": net.max_depth,
        "inviter_fraction": topology.inviter_fraction(net),
    }


def stage_report(dataset: PaymentDataset, cfg: RunConfig, out: Path,
                 model: UserValueModel | None = None) -> dict:
    model = model or fit_model(dataset, cfg)
    scores = model.scores_
    _write_csv(analytics.value_cdf_frame(model.result_), out / "value_cdf.csv")

    hist = analytics.hist2d(scores["I"], scores["N"], bins=cfg.hist_bins, log_flags=(True, True))
    _write_csv(hist.to_frame(), out / "hist2d.csv")

    window = restrict_to_window(dataset, model.eval_time_)
    p2p = analytics.p2p_activity(window)
    p2p_value = scores[["user_id", "V"]].merge(p2p, on="user_id")
    _write_csv(p2p_value, out / "p2p_value.csv")
    hist = analytics.hist2d(p2p_value["V"], p2p_value["p2p"], bins=cfg.hist_bins,
                            log_flags=(True, True))
    _write_csv(hist.to_frame(), out / "hist2d_p2p.csv")

    _write_csv(analytics.campaign_report(window, scores), out / "campaigns.csv")

    start = cfg.temporal_start if cfg.temporal_start is not None else dataset.time_span()[0]
    end = cfg.temporal_end if cfg.temporal_end is not None else model.eval_time_
    if start < end:
        template = UserValueModel.from_params(cfg.intrinsic, cfg.value)
        series = analytics.temporal_percentiles(
            dataset, start, end, pd.DateOffset(months=cfg.temporal_step_months),
            cfg.percentiles, model=template, workers=cfg.workers)
    else:
        series = pd.DataFrame(columns=["cutoff", "percentile", "value"])
    series = series.assign(cutoff=_iso(series["cutoff"].to_numpy()))
    _write_csv(series, out / "percentiles.csv")

    summary = analytics.summary_statistics(scores)
    summary["eval_time"] = _iso([model.eval_time_])[0]
    summary["supersteps"] = model.n_iter_
    summary["alpha"] = cfg.value.alpha
    return summary


def _iso(seconds) -> list[str]:
    arr = np.asarray(seconds, dtype=np.int64).astype("datetime64[s]")
    return [f"{s}Z" for s in np.datetime_as_string(arr, unit="s")]


def _write_summary(summary: dict, out: Path) -> None:
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synth is None:
        raise ConfigError("synth needs synthetic settings, not a data directory")
    write_dataset(generate(cfg.synth), cfg.out)
    log.info("wrote dataset to %s", cfg.out)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("validate needs a dataset directory")
    dataset = load_dataset(cfg.data, check=False)
    violations = validate(dataset)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_score(cfg: RunConfig) -> int:
    stage_score(load_input(cfg), cfg, _outdir(cfg))
    return EXIT_OK


def cmd_topology(cfg: RunConfig) -> int:
    stage_topology(load_input(cfg), cfg, _outdir(cfg))
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    dataset = load_input(cfg)
    out = _outdir(cfg)
    summary = stage_report(dataset, cfg, out)
    summary["topology"] = _topology_summary(_network(dataset, cfg))
    _write_summary(summary, out)
    return EXIT_OK


def cmd_repro(cfg: RunConfig) -> int:
    """Dataset, scores, topology tables and the full report in one output tree."""
    out = _outdir(cfg)
    if cfg.synth is not None:
        write_dataset(generate(cfg.synth), out / "data")
        dataset = load_dataset(out / "data")
    else:
        dataset = load_input(cfg)
    model = stage_score(dataset, cfg, out)
    topo = stage_topology(dataset, cfg, out)
    summary = stage_report(dataset, cfg, out, model=model)
    summary["topology"] = topo
    _write_summary(summary, out)
    return EXIT_OK


def _outdir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


COMMANDS = {
    "synth": cmd_synth,
    "validate": cmd_validate,
    "score": cmd_score,
    "topology": cmd_topology,
    "report": cmd_report,
    "repro": cmd_repro,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--data", help="dataset directory with the five CSV files")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="synthetic dataset seed")
    common.add_argument("--n-users", dest="n_users", type=int, help="synthetic user count")
    common.add_argument("--alpha", type=float, help="damping factor in (0, 1)")
    common.add_argument("--cutoff", help="evaluation time, ISO-8601 UTC")
    common.add_argument("--workers", type=int, help="worker threads")
    common.add_argument("--percentiles", help="comma-separated percentiles")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="payvalue", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").split("\n")[0] or None)
        if name == "validate":
            p.add_argument("path", nargs="?", help="dataset directory (same as --data)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    flags = {k: getattr(args, k, None) for k in ("data", "out", "seed", "n_users", "alpha",
                                                  "cutoff", "workers", "percentiles")}
    if getattr(args, "path", None):
        flags["data"] = args.path
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_run_config(file_values, env_overrides(), flags)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationFailed, GraphError) as exc:
        print(f"invalid dataset: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
