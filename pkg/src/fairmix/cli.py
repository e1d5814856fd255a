"""Command-line entry point: run chains, summarize chain files, sweep a
parameter. See README for the config schema.

Outputs of ``run`` inside the output directory:

* ``resolved_config.json``  the config with every default materialized;
  re-running from it reproduces the outputs bit for bit,
* ``chain_XX.jsonl``        one chain file per chain,
* ``summary.csv``           method,K,cost,delta,bal per chain, taken from
  one uniformly drawn post-burn-in sample.

Chain c of a run with seed s uses the seed sequence (s, c), so chains
differ only in that derivation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .dataio import (DatasetSpec, load_chain, load_dataset, save_chain,
                     write_csv)
from .metrics import autocorrelation, posterior_mode_k, summarize_chain
from .priors import PriorConfig
from .sampler import SamplerConfig, run_fbc

__all__ = ["main", "RunConfig", "load_config"]

SUMMARY_HEADER = ["method", "K", "cost", "delta", "bal"]


@dataclass(frozen=True)
class RunConfig:
    """One experiment: dataset, priors, sampler settings, chain count."""

    dataset: DatasetSpec
    prior: PriorConfig
    sampler: SamplerConfig
    seed: int = 0
    chains: int = 1
    output_dir: str = "fairmix-out"
    full_matching: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")


def load_config(path) -> RunConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    try:
        dataset = DatasetSpec(**{
            **raw.get("dataset", {}),
            "feature_columns": tuple(raw.get("dataset", {})
                                     .get("feature_columns") or ()) or None,
        })
        sampler_raw = dict(raw.get("sampler", {}))
        if isinstance(sampler_raw.get("m"), list):
            sampler_raw["m"] = tuple(sampler_raw["m"])
        return RunConfig(
            dataset=dataset,
            prior=PriorConfig(**raw.get("prior", {})),
            sampler=SamplerConfig(**sampler_raw),
            seed=int(raw.get("seed", 0)),
            chains=int(raw.get("chains", 1)),
            output_dir=str(raw.get("output_dir", "fairmix-out")),
            full_matching=bool(raw.get("full_matching", False)),
        )
    except TypeError as exc:
        raise ValueError(f"bad config: {exc}") from None


def config_to_dict(cfg: RunConfig) -> dict:
    out = {
        "dataset": asdict(cfg.dataset),
        "prior": asdict(cfg.prior),
        "sampler": asdict(cfg.sampler),
        "seed": cfg.seed,
        "chains": cfg.chains,
        "output_dir": cfg.output_dir,
        "full_matching": cfg.full_matching,
    }
    if out["dataset"]["feature_columns"] is not None:
        out["dataset"]["feature_columns"] = list(
            out["dataset"]["feature_columns"])
    if isinstance(out["sampler"]["m"], tuple):
        out["sampler"]["m"] = list(out["sampler"]["m"])
    return out


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chain]))


def _run_one_chain(payload) -> str:
    raw, chain, out_dir = payload
    cfg = config_from_dict(raw)
    dataset = load_dataset(cfg.dataset)
    rng = _chain_rng(cfg.seed, chain)
    run = run_fbc(dataset, cfg.prior, cfg.sampler, rng=rng)
    path = Path(out_dir) / f"chain_{chain:02d}.jsonl"
    save_chain(run, path,
               meta={"seed": cfg.seed, "chain": chain,
                     "method": "fbc" if cfg.sampler.fairness else "mfm"},
               full_matching=cfg.full_matching)
    # reported clustering: one uniformly drawn post-burn-in sample
    pick = run.samples[int(rng.integers(len(run.samples)))]
    return json.dumps({
        "chain": chain,
        "method": "fbc" if cfg.sampler.fairness else "mfm",
        "K": pick.k,
        "cost": pick.cost,
        "delta": pick.delta,
        "bal": pick.bal,
    })


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.chains is not None:
        cfg = replace(cfg, chains=args.chains)
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = config_to_dict(cfg)
    (out_dir / "resolved_config.json").write_text(
        json.dumps(raw, indent=2) + "\n", encoding="utf-8")
    payloads = [(raw, c, str(out_dir)) for c in range(cfg.chains)]
    if cfg.chains > 1 and not args.serial:
        with ProcessPoolExecutor(max_workers=min(cfg.chains, 8)) as pool:
            rows_json = list(pool.map(_run_one_chain, payloads))
    else:
        rows_json = [_run_one_chain(p) for p in payloads]
    rows = [json.loads(r) for r in rows_json]
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER,
              [[r["method"], r["K"], r["cost"], r["delta"], r["bal"]]
               for r in rows])
    print(f"wrote {cfg.chains} chain(s) to {out_dir}")
    return 0


def cmd_summarize(args) -> int:
    out_dir = Path(args.output or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = []
    for f in args.chains:
        try:
            samples, header = load_chain(f)
        except (OSError, ValueError) as exc:
            print(f"warning: skipping {f}: {exc}", file=sys.stderr)
            continue
        burn = int(header.get("burn_in", 0))
        post = [s for s in samples if s.iteration > burn]
        if not post:
            print(f"warning: skipping {f}: no post-burn-in samples",
                  file=sys.stderr)
            continue
        loaded.append((Path(f).stem, post, header))
    if not loaded:
        print("error: no usable chain files", file=sys.stderr)
        return 1

    k_all = np.concatenate([[s.k for s in post] for _, post, _ in loaded])
    values, counts = np.unique(k_all, return_counts=True)
    write_csv(out_dir / "khist.csv", ["k", "count"],
              [[int(v), int(c)] for v, c in zip(values, counts)])

    acf_rows = []
    for name, post, _ in loaded:
        ks = [s.k for s in post]
        h_max = min(args.h_max, len(ks) - 2)
        rho = autocorrelation(ks, max(h_max, 0))
        acf_rows.extend([[name, h, float(r)] for h, r in enumerate(rho)])
    write_csv(out_dir / "acf.csv", ["chain", "h", "rho"], acf_rows)

    nll_rows = []
    for name, post, header in loaded:
        trace = header.get("nll_trace")
        series = (enumerate(trace.tolist(), start=1) if trace is not None
                  else ((s.iteration, s.nll) for s in post))
        nll_rows.extend([[name, it, float(v)] for it, v in series])
    write_csv(out_dir / "nll_trace.csv", ["chain", "iteration", "nll"],
              nll_rows)

    summary_rows = []
    for name, post, header in loaded:
        summary = summarize_chain(post)
        mode = summary.mode_k
        at_mode = [s for s in post if s.k == mode]
        summary_rows.append([
            header.get("method", "fbc"), mode,
            float(np.mean([s.cost for s in at_mode])),
            float(np.mean([s.delta for s in at_mode])),
            float(np.mean([s.bal for s in at_mode])),
        ])
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER, summary_rows)
    print(f"wrote summaries for {len(loaded)} chain(s) to {out_dir}")
    return 0


def _set_sweep_value(cfg: RunConfig, parameter: str, value: float) -> RunConfig:
    if parameter == "m":
        return replace(cfg, sampler=replace(cfg.sampler, m=int(value)))
    if parameter == "tau":
        return replace(cfg, prior=replace(cfg.prior, tau=float(value)))
    if parameter == "kappa":
        return replace(cfg, prior=replace(cfg.prior, kappa=float(value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.output or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = []
    for value in args.values:
        try:
            run_cfg = _set_sweep_value(cfg, args.parameter, value)
            dataset = load_dataset(run_cfg.dataset)
            rng = _chain_rng(run_cfg.seed, 0)
            run = run_fbc(dataset, run_cfg.prior, run_cfg.sampler, rng=rng)
            mode = posterior_mode_k(run.samples)
            at_mode = [s for s in run.samples if s.k == mode]
            rows.append([
                value, mode,
                float(np.mean([s.cost for s in at_mode])),
                float(np.mean([s.delta for s in at_mode])),
                float(np.mean([s.bal for s in at_mode])),
            ])
        except Exception as exc:  # noqa: BLE001 - sweep must continue
            failures.append(f"{args.parameter}={value}: {exc}")
            print(f"warning: run failed for {args.parameter}={value}: {exc}",
                  file=sys.stderr)
    write_csv(out_dir / "sweep.csv",
              ["value", "k_mode", "cost", "delta", "bal"], rows)
    if failures:
        (out_dir / "sweep_errors.log").write_text(
            "\n".join(failures) + "\n", encoding="utf-8")
    if args.values and not rows:
        print("error: every sweep run failed", file=sys.stderr)
        return 1
    print(f"wrote sweep of {len(rows)} value(s) to {out_dir / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairmix",
        description="Fairness-constrained Bayesian mixture clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run chains from a JSON config")
    p_run.add_argument("config", help="path to the run config (JSON)")
    p_run.add_argument("--chains", type=int, default=None,
                       help="override the chain count")
    p_run.add_argument("--output", default=None,
                       help="override the output directory")
    p_run.add_argument("--serial", action="store_true",
                       help="run chains sequentially in-process")
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize",
                           help="summaries and diagnostics of chain files")
    p_sum.add_argument("chains", nargs="+", help="chain files (.jsonl)")
    p_sum.add_argument("--output", default=None, help="output directory")
    p_sum.add_argument("--h-max", type=int, default=50,
                       help="largest autocorrelation lag")
    p_sum.set_defaults(func=cmd_summarize)

    p_sweep = sub.add_parser("sweep",
                             help="run once per parameter value")
    p_sweep.add_argument("config", help="path to the base config (JSON)")
    p_sweep.add_argument("parameter", choices=["m", "tau", "kappa"])
    p_sweep.add_argument("values", nargs="*", type=float,
                         help="parameter values, one run each")
    p_sweep.add_argument("--output", default=None, help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
