"""Command-line interface: ``claimsbacklog {simulate,estimate,train,optimize,validate}``.

Exit codes: 0 success, 2 configuration error, 3 missing artifact,
4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, costing, estimation, expectations, processing
from .approximator.datasets import build_dataset_g, build_dataset_h
from .approximator.network import SequenceNet
from .approximator.training import TrainConfig, new_net, train
from .config import ConfigError, ExperimentConfig, load_config
from .errors import InputError, ParameterError
from .stochastics import RngState

log = logging.getLogger("claimsbacklog")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_VALIDATION = 0, 2, 3, 4


class MissingArtifact(Exception):
    pass


def _header(cfg: ExperimentConfig, seed: int, **extra) -> str:
    items = {"config_hash": cfg.hash(), "seed": seed, **extra}
    return "# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n"


def _write_csv(path: Path, header: str, columns: dict) -> None:
    names = list(columns)
    with path.open("w") as fh:
        fh.write(header)
        fh.write(",".join(names) + "\n")
        for row in zip(*(np.asarray(columns[k]) for k in names)):
            fh.write(",".join(f"{v:.10g}" if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def _out(cfg: ExperimentConfig, args) -> Path:
    path = Path(args.out or cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(cfg, args) -> int:
    return cfg.simulation.seed if args.seed is None else args.seed


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    mc = cfg.model_config()
    seed = _seed(cfg, args)
    eta = args.eta or cfg.simulation.eta
    horizon = args.horizon or cfg.simulation.horizon
    out = _out(cfg, args)
    head = _header(cfg, seed, eta=eta, horizon=horizon)
    start = cfg.simulation.start
    start = int(start) if str(start).isdigit() else start
    path = processing.simulate_path(mc, eta, horizon, start=start, rng=RngState(seed, 0), burn=cfg.simulation.burn_in)
    path.to_csv(out / "path.csv", header=head)
    n = cfg.simulation.replicates
    diag = estimation.backlog_diagnostics(mc, eta, horizon, n, RngState(seed, 1))
    acf = estimation.autocorrelation(mc, eta, min(cfg.simulation.max_lag, horizon - 2), n, RngState(seed, 2))
    acf_col = np.full(horizon, np.nan)
    acf_col[: len(acf)] = acf
    _write_csv(out / "diagnostics.csv", head, {
        "t": diag.t, "p_positive": diag.p_positive, "cond_mean": diag.cond_mean,
        "rel_mean": diag.rel_mean, "autocorr_lag": np.arange(horizon), "autocorr": acf_col,
    })
    log.info("wrote %s and %s", out / "path.csv", out / "diagnostics.csv")
    return EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, args) -> int:
    mc = cfg.model_config()
    seed = _seed(cfg, args)
    est = cfg.estimation
    out = _out(cfg, args)
    etas = [args.eta] if args.eta else list(cfg.eta_grid())
    T = args.horizon or est.T
    mode = args.mode or "g-uncond"
    if mode == "g-uncond":
        for g in estimation.estimate_g_grid(mc, etas, T, est.n, RngState(seed), burn=cfg.simulation.burn_in):
            g.to_csv(out / f"g_stationary_eta{g.eta:.3f}.csv")
    elif mode == "g":
        for b in est.b_grid:
            for g in estimation.estimate_g_grid(mc, etas, T, est.n, RngState(seed), condition=int(b)):
                g.to_csv(out / f"g_b{int(b)}_eta{g.eta:.3f}.csv")
    elif mode == "h":
        for b in est.b_grid:
            for eta in etas:
                fam = estimation.estimate_h_family(mc, int(b), eta, est.m_max, T, est.n, RngState(seed))
                for m in range(est.m_max + 1):
                    tab = estimation.HTable(eta, int(b), m, fam.values[m], fam.se[m], est.n, seed)
                    tab.to_csv(out / f"h_b{int(b)}_m{m}_eta{eta:.3f}.csv")
    else:
        raise ConfigError(f"unknown estimate mode {mode!r}")
    (out / "estimate.json").write_text(json.dumps({"config_hash": cfg.hash(), "seed": seed, "mode": mode}))
    return EXIT_OK


def _train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.training
    return TrainConfig(epochs=t.epochs, batch_size=t.batch_size, step_size=t.step_size, optimizer=t.optimizer,
                       decay_every=t.decay_every, decay=t.decay, val_frac=t.val_frac, seed=seed,
                       warmup_epochs=t.warmup_epochs, warmup_T=t.warmup_T, warmup_step_size=t.warmup_step_size, rel_floor=t.rel_floor,
                       rel_tol=t.rel_tol)


def _agreement_report(mc, net, cfg, seed):
    """Worst scaled error of the (b, eta) net against Monte Carlo on the validation grid."""
    floor = 0.05 * mc.mu
    rows = []
    for b in cfg.estimation.b_grid:
        tables = estimation.estimate_g_grid(mc, cfg.eta_grid(), net.T, cfg.estimation.n, RngState(seed, 99),
                                            condition=int(b))
        pred = net.predict(np.column_stack([np.full(len(tables), b), [g.eta for g in tables]]))
        for g, p in zip(tables, pred):
            err = np.where(g.values > floor, np.abs(p - g.values) / np.maximum(g.values, 1e-12) / 0.10,
                           np.abs(p - g.values) / floor)
            rows.append({"b": int(b), "eta": g.eta, "worst_j": int(np.argmax(err)), "scaled_error": float(err.max())})
    return rows


def cmd_train(cfg: ExperimentConfig, args) -> int:
    mc = cfg.model_config()
    seed = _seed(cfg, args)
    t = cfg.training
    out = _out(cfg, args)
    target = args.mode or "g"
    rng = RngState(seed, 0)
    T = args.horizon or cfg.estimation.T
    common = dict(rng=rng, T=T, paths_per_sample=t.paths_per_sample, b_range=(0.0, t.b_max))
    if target == "g":
        data = build_dataset_g(mc, t.samples, start=t.start, **common)
    elif target == "g-uncond":
        data = build_dataset_g(mc, t.samples, rng=rng, T=T, paths_per_sample=t.paths_per_sample, unconditional=True)
    elif target == "h0":
        data = build_dataset_h(mc, t.samples, m_range=(0, 0), start=t.start, **common)
    elif target == "hm":
        data = build_dataset_h(mc, t.samples, m_range=(1, t.m_max), start=t.start, **common)
    else:
        raise ConfigError(f"unknown training target {target!r}")
    net = new_net(data, hidden=t.hidden, seed=seed, mu=mc.mu)
    res = train(net, data, _train_config(cfg, seed), log=log.info)
    head = _header(cfg, seed, target=target)
    net.save(out / f"net_{target}.json")
    res.history_to_csv(out / f"loss_{target}.csv", header=head)
    report = {"config_hash": cfg.hash(), "seed": seed, "target": target, "improvement": res.improvement,
              "best_epoch": res.best_epoch}
    ok = res.improvement >= 0.5
    if target == "g":
        rows = _agreement_report(mc, net, cfg, seed)
        report["grid"] = rows
        report["grid_pass"] = all(r["scaled_error"] <= 1.0 for r in rows)
        ok = ok and report["grid_pass"]
    report["passed"] = ok
    (out / f"train_{target}.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK if ok else EXIT_VALIDATION


def _load_net(path: Path) -> SequenceNet:
    if not path.exists():
        raise MissingArtifact(f"missing model file {path}")
    return SequenceNet.load(path)


def cmd_optimize(cfg: ExperimentConfig, args) -> int:
    mc = cfg.model_config()
    seed = _seed(cfg, args)
    params = cfg.cost_params()
    c = cfg.cost
    out = _out(cfg, args)
    mode = args.mode or "linear"
    source = args.source
    model_dir = Path(args.models) if args.models else out
    head = _header(cfg, seed, mode=mode, source=source)
    results = []
    if mode in ("linear", "inflating"):
        if source == "net":
            src = costing.NetGSource(_load_net(model_dir / "net_g-uncond.json"))
        elif source == "mc":
            src = costing.MonteCarloGSource(mc, T=c.T, n=c.n, seed=seed, burn=cfg.simulation.burn_in)
            n = int(round((c.bracket[1] - c.bracket[0]) / c.grid_step))
            src.prefetch(c.bracket[0] + c.grid_step * np.arange(n + 1))
        else:
            raise ConfigError(f"unknown source {source!r}")
        r = costing.optimize_eta(costing.unconditional_cost(src, params, mc, mode), c.bracket, c.grid_step)
        results.append((mode, r))
    elif mode == "conditional":
        if source == "net":
            provider = expectations.NetHProvider(_load_net(model_dir / "net_h0.json"),
                                                 _load_net(model_dir / "net_hm.json"))
        elif source == "mc":
            provider = expectations.MonteCarloHProvider(mc, n=cfg.estimation.n, seed=seed)
        else:
            raise ConfigError(f"unknown source {source!r}")
        hist = expectations.HistorySummary.zero_start(mc, c.R_tau)
        for T in ([args.horizon] if args.horizon else c.horizons):
            r = costing.optimize_eta(
                lambda e, T=T: costing.cost_conditional_linear(e, T, hist, provider, params, mc), c.bracket,
                c.grid_step)
            results.append((f"conditional_T{T}", r))
    else:
        raise ConfigError(f"unknown optimize mode {mode!r}")
    summary = {}
    for name, r in results:
        r.curve_to_csv(out / f"curve_{name}.csv", header=head)
        r.to_json(out / f"result_{name}.json", config_hash=cfg.hash(), seed=seed, source=source)
        summary[name] = {"eta_star": r.eta_star, "cost": r.cost}
        log.info("%s: eta* = %.4f, cost = %.2f", name, r.eta_star, r.cost)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    only = None
    if args.criteria:
        only = {int(x) for x in args.criteria.split(",")}
    results = acceptance.run_all(quick=args.quick, only=only, corrupt=args.corrupt_processing)
    out = _out(cfg, args)
    text = acceptance.report_json(results)
    (out / "acceptance.json").write_text(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "train": cmd_train,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="claimsbacklog", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML experiment configuration")
        s.add_argument("--seed", type=int)
        s.add_argument("--eta", type=float)
        s.add_argument("--horizon", type=int)
        s.add_argument("--mode")
        s.add_argument("--out")
        s.add_argument("--threads", type=int,
                       help="BLAS thread count exported to worker processes (OPENBLAS/OMP_NUM_THREADS)")
        if name == "optimize":
            s.add_argument("--source", choices=("mc", "net"), default="mc")
            s.add_argument("--models", help="directory holding trained nets (default: --out)")
        if name == "validate":
            s.add_argument("--quick", action="store_true", help="reduced counts, widened tolerances")
            s.add_argument("--criteria", help="comma-separated subset, e.g. 1,3,8")
            s.add_argument("--corrupt-processing", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.threads:
        os.environ["OPENBLAS_NUM_THREADS"] = os.environ["OMP_NUM_THREADS"] = str(args.threads)
    try:
        cfg = load_config(args.config)
        if args.eta is not None and not args.eta > 1:
            raise ConfigError("--eta must exceed 1")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (InputError, ParameterError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
