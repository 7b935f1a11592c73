"""Command-line entry point: ``lemp <command> ...``."""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click

from .experiment import (LempConfig, budget_sweep, ingest, preset_bundle, probe, report_export, run_baseline,
                         run_lemp, synth_bundle, write_bundle, write_sweep)
from .experiment.loop import EdgeSelector
from .graph import norm_adjacency
from .models import TrainConfig, save_params, train
from .mvrd import horizon, select_top_k
from .providers import (BudgetLedger, HttpProvider, MessageCache, Prices, QueryStats, RateLimit, SyntheticProvider,
                        estimate_cost, query_connection_analysis)


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise click.BadParameter("config JSON must be an object", param_hint="--config")
    return cfg


def _train_config(ctx, **overrides) -> TrainConfig:
    cfg = {**ctx.obj["config"], "seed": ctx.obj["seed"]}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(cfg)


def _lemp_config(ctx, **overrides) -> LempConfig:
    cfg = dict(ctx.obj["config"])
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return LempConfig.from_dict(cfg)


def _out(ctx) -> Path:
    out = Path(ctx.obj["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    click.echo(json.dumps(obj, indent=2, default=float))


def _make_provider(kind: str, bundle, ctx, mode: str):
    cfg = ctx.obj["config"]
    if kind == "synthetic":
        labels = bundle.graph.labels if mode == "class-informative" else None
        return SyntheticProvider(bundle.X, labels, mode=mode, seed=ctx.obj["seed"],
                                 noise=float(cfg.get("synthetic_noise", 0.01)))
    try:
        return HttpProvider(cfg["base_url"], cfg["model"], cfg["embedding_model"],
                            api_key_env=cfg.get("api_key_env", "LEMP_API_KEY"),
                            max_tokens=int(cfg.get("max_tokens", 400)))
    except KeyError as exc:
        raise click.UsageError(f"http provider needs {exc.args[0]!r} in --config") from exc


provider_option = click.option("--provider", type=click.Choice(["synthetic", "http"]), default="synthetic",
                               show_default=True)
mode_option = click.option("--synthetic-mode", type=click.Choice(["mean", "class-informative"]), default="mean",
                           show_default=True, help="Embedding rule of the offline oracle.")


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON object with training, selection and provider settings.")
@click.option("--out", type=click.Path(file_okay=False), default="lemp-out", show_default=True)
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, seed, config_path, out, verbose):
    """LM-enhanced message passing on heterophilic graphs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, config=_load_config(config_path), out=out)


@main.command("probe")
@click.argument("data", type=click.Path(exists=True, file_okay=False))
@click.option("--seeds", type=int, default=4, show_default=True)
@click.pass_context
def probe_cmd(ctx, data, seeds):
    """Categorize a dataset as malignant, benign or ambiguous."""
    bundle = ingest(data)
    base = ctx.obj["seed"]
    result = probe(bundle, seeds=tuple(range(base, base + seeds)), config=_train_config(ctx))
    (_out(ctx) / "probe.json").write_text(json.dumps(result, indent=2))
    _emit({k: result[k] for k in ("verdict", "best_mlp", "best_gcn", "gap_points", "h_edge", "h_node")})


@main.command("train")
@click.argument("data", type=click.Path(exists=True, file_okay=False))
@click.option("--model", type=click.Choice(["mlp", "gcn", "lemp"]), default="gcn", show_default=True)
@click.option("--checkpoint", type=click.Path(dir_okay=False), help="Write the best parameters here.")
@click.pass_context
def train_cmd(ctx, data, model, checkpoint):
    """Train one model; ``lemp`` trains without any enhanced edges."""
    bundle = ingest(data)
    tc = _train_config(ctx)
    if checkpoint:
        g = bundle.graph
        adj = norm_adjacency(g)
        res = train(model, g, adj, bundle.X, tc)
        Path(checkpoint).parent.mkdir(parents=True, exist_ok=True)
        save_params(res.params, checkpoint, tc.dtype)
    report = run_baseline(model, bundle, tc)
    report_export(report, _out(ctx))
    _emit({"model": model, "test_acc": report.test_acc, "best_epoch": report.best_epoch,
           "stop_reason": report.stop_reason})


@main.command("select")
@click.argument("data", type=click.Path(exists=True, file_okay=False))
@click.option("--k", "k", type=int, required=True, help="Number of edges to emit.")
@click.pass_context
def select_cmd(ctx, data, k):
    """Train a GCN for one interval and write the top-k ranked edges as CSV."""
    bundle = ingest(data)
    lc = _lemp_config(ctx, batch=k)
    g = bundle.graph
    adj = norm_adjacency(g)
    tc = _train_config(ctx, max_epochs=lc.interval, patience=lc.interval)
    res = train("gcn", g, adj, bundle.X, tc)
    last = res.history[-1].epoch if res.history else 0
    selector = EdgeSelector(bundle, adj, lc)
    params = res.params
    budget = lc.budget or g.num_edges
    wf, wb, lam, fused = selector.score(params.weights[0].data, params.biases[0].data, g.edges, last,
                                        horizon(budget, lc.interval, k, lc.horizon_mode))
    pos = {(int(u), int(v)): i for i, (u, v) in enumerate(g.edges)}
    order = [pos[e] for e in select_top_k(fused, g.edges, k)]
    path = _out(ctx) / "selection.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["u", "v", "score_wf", "score_wb", "lambda", "fused"])
        for i in order:
            u, v = g.edges[i]
            w.writerow([bundle.ids[u] if bundle.ids else u, bundle.ids[v] if bundle.ids else v,
                        repr(float(wf[i])), repr(float(wb[i])), repr(float(lam)), repr(float(fused[i]))])
    click.echo(str(path))


@main.command("enhance")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True,
              help="Bundle supplying node texts and features.")
@click.option("--pairs", type=click.Path(exists=True, dir_okay=False), required=True,
              help="CSV of u,v node ids (header optional).")
@click.option("--template", default=None, help="Prompt template id; defaults to the bundle domain.")
@click.option("--budget", type=int, required=True)
@click.option("--qpm", type=int, default=60, show_default=True)
@click.option("--tpm", type=int, default=1_000_000, show_default=True)
@click.option("--in-flight", type=int, default=8, show_default=True)
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), required=True)
@provider_option
@mode_option
@click.pass_context
def enhance_cmd(ctx, data, pairs, template, budget, qpm, tpm, in_flight, cache_path, provider, synthetic_mode):
    """Acquire connection-analysis messages for a list of pairs."""
    bundle = ingest(data)
    index = {str(x): i for i, x in enumerate(bundle.ids)}
    todo = []
    with open(pairs, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].strip().lower() in ("u", "src", "source"):
                continue
            try:
                todo.append((index[row[0].strip()], index[row[1].strip()]))
            except KeyError as exc:
                raise click.UsageError(f"unknown node id {exc.args[0]!r} in {pairs}") from exc
    prov = _make_provider(provider, bundle, ctx, synthetic_mode)
    cfg = ctx.obj["config"]
    ledger = BudgetLedger(budget, Prices(float(cfg.get("price_in", 0.02)), float(cfg.get("price_out", 0.04))))
    stats = QueryStats()
    cache = MessageCache(cache_path)
    query_connection_analysis(todo, bundle.texts, prov, cache, ledger, RateLimit(qpm, tpm, in_flight),
                              template or bundle.domain or "generic", stats)
    _emit({"requested": stats.requested, "cache_hits": stats.cache_hits, "provider_calls": stats.provider_calls,
           **ledger.to_dict()})


@main.command("run")
@click.argument("data", type=click.Path(exists=True, file_okay=False))
@click.option("--budget", type=int, required=True)
@click.option("--interval", type=int, default=None, help="Epochs between selection rounds [config or 10].")
@click.option("--batch", type=int, default=None, help="Pairs per round [config or 50].")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None)
@click.option("--sweep", type=str, default=None, help="Comma-separated budgets; writes sweep.csv instead.")
@provider_option
@mode_option
@click.pass_context
def run_cmd(ctx, data, budget, interval, batch, cache_path, sweep, provider, synthetic_mode):
    """Full LEMP run: train, select, query and enhance until patience."""
    bundle = ingest(data)
    tc = _train_config(ctx)
    lc = _lemp_config(ctx, budget=budget, interval=interval, batch=batch)
    cache = MessageCache(cache_path)
    out = _out(ctx)
    if sweep:
        budgets = [int(b) for b in sweep.split(",")]
        rows = budget_sweep(bundle, tc, lc, budgets, lambda: _make_provider(provider, bundle, ctx, synthetic_mode),
                            cache)
        click.echo(str(write_sweep(rows, out / "sweep.csv")))
        return
    report = run_lemp(bundle, tc, lc, _make_provider(provider, bundle, ctx, synthetic_mode), cache)
    report_export(report, out)
    _emit({"test_acc": report.test_acc, "best_epoch": report.best_epoch, "n_enhanced": report.n_enhanced,
           "provider_calls": report.provider_calls, "cost_usd": report.budget.get("cost_usd", 0.0),
           "stop_reason": report.stop_reason})


@main.command("synth")
@click.option("--kind", type=click.Choice(["heterophilic", "homophilic"]), required=True)
@click.option("--preset", is_flag=True, help="Use the desk-scale benchmark settings for --kind.")
@click.option("--n", type=int, default=400, show_default=True)
@click.option("--classes", type=int, default=2, show_default=True)
@click.option("--p-intra", type=float, default=None)
@click.option("--p-inter", type=float, default=None)
@click.option("--noise", type=float, default=1.0, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.pass_context
def synth_cmd(ctx, kind, preset, n, classes, p_intra, p_inter, noise, dim):
    """Write a block-model dataset bundle to --out."""
    if preset:
        bundle = preset_bundle(kind, ctx.obj["seed"])
    else:
        try:
            bundle = synth_bundle(kind, n, classes, p_intra, p_inter, noise, ctx.obj["seed"], dim)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
    root = write_bundle(bundle, _out(ctx))
    click.echo(str(root))


@main.command("cost")
@click.argument("cache_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--price-in", type=float, default=0.02, show_default=True, help="USD per million prompt tokens.")
@click.option("--price-out", type=float, default=0.04, show_default=True, help="USD per million completion tokens.")
def cost_cmd(cache_path, price_in, price_out):
    """Cost of every record in a message cache."""
    msgs = MessageCache(cache_path).values()
    _emit({"records": len(msgs), "tok_in": sum(m.tok_in for m in msgs), "tok_out": sum(m.tok_out for m in msgs),
           "cost_usd": estimate_cost(msgs, Prices(price_in, price_out))})


@main.command("compact")
@click.argument("cache_path", type=click.Path(exists=True, dir_okay=False))
def compact_cmd(cache_path):
    """Rewrite a cache file without duplicate or torn lines."""
    dropped = MessageCache(cache_path).compact()
    _emit({"dropped": dropped})


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
