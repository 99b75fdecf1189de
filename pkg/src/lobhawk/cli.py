"""`lobhawk` command-line entry point.

Subcommands mirror the pipeline stages: ingest, hawkes-sim, train, simulate,
price, stats, mm-train, mm-eval, report, and an end-to-end `pipeline` mode
driven by a TOML config with per-stage resume via a manifest file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # py3.10
    import tomli as tomllib

from . import ctlstm, event_sim, hawkes, midprice, mm_env, report, sac
from .events import (EventType, MarketStateConfig, build_stream, count_events,
                     parse_lobster, read_stream, write_counts_json, write_stream)

OUT_ROOT_ENV = "LOBHAWK_OUT"


def _out(path: str | None, default: str) -> Path:
    root = Path(os.environ.get(OUT_ROOT_ENV, "."))
    p = Path(path) if path else root / default
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def read_path_csv(path: str | Path):
    """Load a price-path CSV (time, type, jump, price) written by `price`/`ingest`."""
    times, etypes, prices = [], [], []
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        for row in rd:
            times.append(float(row[0]))
            etypes.append(EventType(int(row[1])))
            prices.append(float(row[3]))
    return np.asarray(times), etypes, np.asarray(prices)


def write_path_csv(times, etypes, prices, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "type", "jump_halfticks", "price"])
        prev = None
        for t, et, p in zip(times, etypes, prices):
            jump = 0 if prev is None else int(round(2 * (p - prev)))
            w.writerow([f"{t:.9f}", et.value, jump, f"{p:.6f}"])
            prev = p


# ---- subcommands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    theta = MarketStateConfig(args.theta)
    messages, books, discards, tick = parse_lobster(args.messages, args.book, args.tick)
    events, mids, cdisc = build_stream(messages, books, theta)
    for reason, n in cdisc.counts.items():
        discards.counts[reason] = discards.counts.get(reason, 0) + n
    out = _out(args.out, "events.csv")
    write_stream(events, out)
    counts, probs = count_events(events)
    write_counts_json(counts, probs, discards, out.with_suffix(".counts.json"))
    if args.jumps_out:
        dist = midprice.fit_jumps([e.etype for e in events], mids)
        dist.to_json(_out(args.jumps_out, "jumps.json"))
    if args.path_out:
        # midprice path implied by the real data, in currency
        tick_currency = tick / 10_000.0
        prices = mids * (tick_currency / 2.0)
        write_path_csv([e.time for e in events], [e.etype for e in events],
                       prices, _out(args.path_out, "real_path.csv"))
    print(f"ingested {len(events)} events (tick={tick}, discarded {discards.total}) -> {out}")
    return 0


def cmd_hawkes_sim(args) -> int:
    model = hawkes.HawkesModel.from_json(args.model)
    times, types = hawkes.simulate_thinning(model, args.horizon, args.seed)
    out = _out(args.out, "hawkes_sim.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        for t, j in zip(times, types):
            w.writerow([f"{t:.9f}", int(j) + 1])
    print(f"simulated {len(times)} events on [0, {args.horizon}] -> {out}")
    return 0


def _stream_arrays(events):
    times = np.array([e.time for e in events])
    types = np.array([e.etype.value - 1 for e in events])
    mkts = np.array([e.market_state for e in events])
    return times, types, mkts


def cmd_train(args) -> int:
    events = read_stream(args.events)
    times, types, mkts = _stream_arrays(events)
    cfg = ctlstm.CtLstmConfig(m=args.types, hidden=args.hidden, epochs=args.epochs,
                              batch=args.batch, window=args.window, lr=args.lr,
                              mc_samples=args.mc_samples, seed=args.seed)
    result = ctlstm.train(cfg, times, types, mkts, verbose=not args.quiet)
    out = Path(args.out)
    ctlstm.save_model(result.params, cfg, out, metrics={
        "test_nll": result.test_nll,
        "test_accuracy": result.test_accuracy,
        "best_epoch": result.best_epoch,
        "trace": result.trace,
    })
    print(f"trained {cfg.epochs} epochs; test NLL/event {result.test_nll:.4f}, "
          f"accuracy {result.test_accuracy:.4f} -> {out}")
    return 0


def cmd_simulate(args) -> int:
    params, cfg, _ = ctlstm.load_model(args.model)
    dyn = event_sim.CtLstmDynamics(params, cfg)
    markov = None
    if args.state_mode == "markov":
        if not args.events:
            print("--state-mode markov requires --events", file=sys.stderr)
            return 2
        events = read_stream(args.events)
        markov = event_sim.fit_state_markov([e.market_state for e in events])
    sim_cfg = event_sim.SimConfig(runs=args.runs, events_per_run=args.events_per_run,
                                  seed=args.seed, state_mode=args.state_mode)
    runs = event_sim.run_many(dyn, sim_cfg, markov)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = [et.label for et in EventType][:cfg.m]
    pooled, per_run = event_sim.count_report(runs, cfg.m)
    event_sim.write_sim_stream(runs[0], out / "run0.csv")
    event_sim.write_counts(pooled, per_run, labels, out / "counts.json",
                           out / "counts_per_run.csv")
    print(f"{sim_cfg.runs} runs, {int(pooled.sum())} events total -> {out}")
    return 0


def cmd_price(args) -> int:
    dist = midprice.JumpDistribution.from_json(args.jumps)
    times, etypes, mkts = [], [], []
    with Path(args.events).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            times.append(float(row[1]))
            etypes.append(EventType(int(row[2])))
    path = midprice.build_path(times, etypes, dist, args.v0 / args.tick, args.tick,
                               args.seed)
    out = _out(args.out, "path.csv")
    path.write_csv(out)
    print(f"built path over {len(etypes)} events (clamped {path.clamped}) -> {out}")
    return 0


def cmd_stats(args) -> int:
    _, _, prices = read_path_csv(args.path)
    st = midprice.stylized_stats(prices)
    payload = {
        "volatility": st.volatility, "abs_skewness": st.abs_skewness,
        "excess_kurtosis": st.excess_kurtosis, "hurst": st.hurst,
        "n_returns": st.n_returns,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        _out(args.out, "stats.json").write_text(text)
    print(text)
    return 0


def _load_mm_config(path: str | None, seed: int) -> mm_env.MmConfig:
    if path is None:
        return mm_env.MmConfig(seed=seed)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh).get("mm", {})
    return mm_env.MmConfig(
        q_max=raw.get("q_max", 5), trade_size=raw.get("trade_size", 1),
        fill_prob=raw.get("fill_prob", 0.2), inv_penalty=raw.get("inv_penalty", 0.001),
        train_events=raw.get("train_events", 5000),
        test_events=raw.get("test_events", 2500), seed=seed,
    )


def _infer_tick(prices: np.ndarray) -> float:
    d = np.abs(np.diff(prices))
    d = d[d > 0]
    return float(2 * d.min()) if len(d) else 0.01


def cmd_mm_train(args) -> int:
    times, etypes, prices = read_path_csv(args.prices)
    cfg = _load_mm_config(args.config, args.seed)
    n = min(cfg.train_events, len(times))
    tick = args.tick or _infer_tick(prices)
    norm = sac.make_normalizer(prices[:n], cfg.q_max)
    sac_cfg = sac.SacConfig(seed=args.seed)
    agent = sac.SacAgent(sac_cfg, norm)

    def factory(ep):
        return mm_env.MarketMakingEnv(times[:n], etypes[:n], prices[:n], cfg,
                                      tick, seed=args.seed * 10_000 + ep)

    history = sac.train_agent(agent, factory, args.episodes)
    out = Path(args.out)
    agent.save(out)
    with (out / "training.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "reward", "steps"])
        for h in history:
            w.writerow([h["episode"], f"{h['reward']:.9f}", h["steps"]])
    print(f"trained {args.episodes} episodes -> {out}")
    return 0


def cmd_mm_eval(args) -> int:
    times, etypes, prices = read_path_csv(args.prices)
    cfg = _load_mm_config(args.config, args.seed)
    tick = args.tick or _infer_tick(prices)
    agent = sac.SacAgent.load(args.agent)
    n0 = min(cfg.train_events, len(times))
    n1 = min(n0 + cfg.test_events, len(times))

    def factory(ep):
        return mm_env.MarketMakingEnv(times[n0:n1], etypes[n0:n1], prices[n0:n1],
                                      cfg, tick, seed=args.seed * 20_000 + ep)

    episodes = sac.evaluate_agent(agent, factory, args.episodes)
    out = _out(args.out, "mm_eval.json")
    mm_env.write_summary_json(episodes, out)
    ratio = mm_env.fill_ratio(episodes)
    print(f"{args.episodes} eval episodes; adverse:non-adverse ratio "
          f"{'n/a' if ratio is None else f'{ratio:.4f}'} -> {out}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = report.ReportBundle(out, fingerprint=_fingerprint_dir(run_dir))

    counts_by_asset: dict[str, dict[str, int]] = {}
    sim_counts: dict[str, dict[str, int]] = {}
    stats_by_asset: dict[str, dict[str, dict]] = {}
    ratios: dict[str, dict] = {}
    asset_dirs = sorted(d for d in run_dir.iterdir()
                        if d.is_dir() and d.resolve() != out.resolve())
    for asset_dir in asset_dirs:
        asset = asset_dir.name
        cj = asset_dir / "events.counts.json"
        if cj.exists():
            counts_by_asset[asset] = json.loads(cj.read_text())["counts"]
        sj = asset_dir / "sim" / "counts.json"
        if sj.exists():
            sim_counts[asset] = json.loads(sj.read_text())["pooled"]
        entry = {}
        for source in ("real", "sim"):
            f = asset_dir / f"stats_{source}.json"
            if f.exists():
                entry[source] = json.loads(f.read_text())
        if entry:
            stats_by_asset[asset] = entry
        r = {}
        for source in ("real", "sim"):
            f = asset_dir / f"mm_eval_{source}.json"
            if f.exists():
                r[source] = json.loads(f.read_text())["adverse_nonadverse_ratio"]
        ratios[asset] = r

    if counts_by_asset:
        report.emit_event_count_table(counts_by_asset,
                                      bundle.register(out / "table_event_counts.csv"))
    if sim_counts:
        report.emit_event_count_table(sim_counts,
                                      bundle.register(out / "table_sim_counts.csv"))
    if stats_by_asset:
        report.emit_stats_table(stats_by_asset,
                                bundle.register(out / "table_stylized_stats.csv"))
    if any(ratios.values()):
        report.emit_ratio_table(ratios, bundle.register(out / "table_fill_ratios.csv"))

    for asset_dir in asset_dirs:
        asset = asset_dir.name
        for source in ("real", "sim"):
            mj = asset_dir / f"mm_eval_{source}.json"
            if mj.exists():
                d = json.loads(mj.read_text())
                report.svg_histogram(
                    d["terminal_rewards"],
                    bundle.register(out / f"{asset}_rewards_{source}.svg"),
                    title=f"{asset} terminal rewards ({source})")
                fc = d["fill_counts_by_trigger"]
                report.svg_bars(list(fc), list(fc.values()),
                                bundle.register(out / f"{asset}_fills_{source}.svg"),
                                title=f"{asset} fills by market-order type ({source})")
            pj = asset_dir / f"path_{source}.csv"
            if pj.exists():
                t, _, p = read_path_csv(pj)
                report.svg_lines([(t, p, f"{asset} {source}")],
                                 bundle.register(out / f"{asset}_path_{source}.svg"),
                                 title=f"{asset} midprice ({source})")
    manifest = bundle.write_manifest()
    print(f"report with {len(bundle.artifacts)} artifacts -> {manifest}")
    return 0


# ---- pipeline --------------------------------------------------------------------


def _fingerprint_dir(d: Path) -> dict:
    mf = d / "pipeline_config.json"
    if mf.exists():
        return json.loads(mf.read_text())
    return {"run_dir": str(d)}


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def cmd_pipeline(args) -> int:
    with open(args.config, "rb") as fh:
        cfg = tomllib.load(fh)
    if "seed" not in cfg:
        print("pipeline config must set a global seed", file=sys.stderr)
        return 2
    out_root = Path(args.out or cfg.get("out", "pipeline_out"))
    for asset, acfg in cfg.get("asset", {}).items():
        for key in ("messages", "book"):
            if not Path(acfg[key]).exists():
                print(f"asset {asset}: missing file {acfg[key]}", file=sys.stderr)
                return 2
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "pipeline_config.json").write_text(
        json.dumps({"hash": _config_hash(cfg), "seed": cfg["seed"]}, sort_keys=True))
    seed = int(cfg["seed"])

    for asset, acfg in cfg.get("asset", {}).items():
        adir = out_root / asset
        adir.mkdir(exist_ok=True)
        manifest_path = adir / "manifest.json"
        manifest = (json.loads(manifest_path.read_text())
                    if manifest_path.exists() else {"stages": {}, "hash": _config_hash(cfg)})
        if manifest.get("hash") != _config_hash(cfg):
            manifest = {"stages": {}, "hash": _config_hash(cfg)}

        def done(stage):
            return manifest["stages"].get(stage) == "ok"

        def mark(stage):
            manifest["stages"][stage] = "ok"
            manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))

        try:
            if not done("ingest"):
                _run(cmd_ingest, messages=acfg["messages"], book=acfg["book"],
                     out=str(adir / "events.csv"), theta=cfg.get("theta", 0.4),
                     tick=acfg.get("tick"), jumps_out=str(adir / "jumps.json"),
                     path_out=str(adir / "path_real.csv"))
                mark("ingest")
            tcfg = cfg.get("ctlstm", {})
            if not done("train"):
                _run(cmd_train, events=str(adir / "events.csv"),
                     out=str(adir / "model"), types=tcfg.get("m", 12),
                     hidden=tcfg.get("hidden", 32), epochs=tcfg.get("epochs", 20),
                     batch=tcfg.get("batch", 256), window=tcfg.get("window", 100),
                     lr=tcfg.get("lr", 0.002), mc_samples=tcfg.get("mc_samples", 1),
                     seed=seed, quiet=True)
                mark("train")
            scfg = cfg.get("sim", {})
            if not done("simulate"):
                _run(cmd_simulate, model=str(adir / "model"),
                     runs=scfg.get("runs", 200),
                     events_per_run=scfg.get("events_per_run", 1000),
                     seed=seed, out=str(adir / "sim"),
                     state_mode=scfg.get("state_mode", "fixed"),
                     events=str(adir / "events.csv"))
                mark("simulate")
            if not done("price"):
                tick = acfg.get("tick_currency", 0.01)
                _run(cmd_price, events=str(adir / "sim" / "run0.csv"),
                     jumps=str(adir / "jumps.json"), v0=acfg.get("v0", 100.0),
                     tick=tick, seed=seed, out=str(adir / "path_sim.csv"))
                for source in ("real", "sim"):
                    _run(cmd_stats, path=str(adir / f"path_{source}.csv"),
                         out=str(adir / f"stats_{source}.json"))
                mark("price")
            mcfg_path = acfg.get("mm_config")
            episodes = cfg.get("mm", {}).get("train_episodes", 5)
            if not done("mm-train"):
                for source in ("real", "sim"):
                    _run(cmd_mm_train, prices=str(adir / f"path_{source}.csv"),
                         config=mcfg_path, seed=seed, tick=None,
                         out=str(adir / f"agent_{source}"), episodes=episodes)
                mark("mm-train")
            if not done("mm-eval"):
                for source in ("real", "sim"):
                    _run(cmd_mm_eval, prices=str(adir / f"path_{source}.csv"),
                         agent=str(adir / f"agent_{source}"), config=mcfg_path,
                         seed=seed, tick=None,
                         episodes=cfg.get("mm", {}).get("eval_episodes", 100),
                         out=str(adir / f"mm_eval_{source}.json"))
                mark("mm-eval")
        except Exception as exc:  # partial manifest retained for resume
            print(f"pipeline stage failed for asset {asset}: {exc}", file=sys.stderr)
            return 1

    return cmd_report(argparse.Namespace(run=str(out_root), out=str(out_root / "report")))


def _run(fn, **kwargs) -> None:
    rc = fn(argparse.Namespace(**kwargs))
    if rc != 0:
        raise RuntimeError(f"stage {fn.__name__} exited with {rc}")


# ---- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobhawk",
                                description="Event-driven LOB modeling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse LOBSTER files into a canonical stream")
    s.add_argument("--messages", required=True)
    s.add_argument("--book", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--theta", type=float, default=0.4)
    s.add_argument("--tick", type=int, default=None)
    s.add_argument("--jumps-out", dest="jumps_out", default=None)
    s.add_argument("--path-out", dest="path_out", default=None)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("hawkes-sim", help="simulate a classical Hawkes model")
    s.add_argument("--model", required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_hawkes_sim)

    s = sub.add_parser("train", help="fit the CT-LSTM intensity model")
    s.add_argument("--events", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--types", type=int, default=12)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--batch", type=int, default=256)
    s.add_argument("--window", type=int, default=100)
    s.add_argument("--lr", type=float, default=0.002)
    s.add_argument("--mc-samples", dest="mc_samples", type=int, default=1)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("simulate", help="thinning simulation from a fitted model")
    s.add_argument("--model", required=True)
    s.add_argument("--runs", type=int, default=200)
    s.add_argument("--events-per-run", dest="events_per_run", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--state-mode", dest="state_mode", default="fixed",
                   choices=("fixed", "markov"))
    s.add_argument("--events", default=None)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("price", help="build a midprice path over an event stream")
    s.add_argument("--events", required=True)
    s.add_argument("--jumps", required=True)
    s.add_argument("--v0", type=float, required=True)
    s.add_argument("--tick", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_price)

    s = sub.add_parser("stats", help="stylized statistics of a price path")
    s.add_argument("--path", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_stats)

    s = sub.add_parser("mm-train", help="train the market-making SAC agent")
    s.add_argument("--prices", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--tick", type=float, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--episodes", type=int, default=5)
    s.set_defaults(fn=cmd_mm_train)

    s = sub.add_parser("mm-eval", help="greedy evaluation of a trained agent")
    s.add_argument("--agent", required=True)
    s.add_argument("--prices", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--tick", type=float, default=None)
    s.add_argument("--episodes", type=int, default=100)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_mm_eval)

    s = sub.add_parser("report", help="aggregate a run directory into tables/plots")
    s.add_argument("--run", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("pipeline", help="run the full per-asset experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
