"""Command-line entry points: live service, scripted experiments, oracles."""

from __future__ import annotations

import sys

import click

from .llm import EndpointConfig, make_backend
from .mi import NoiseModel, draw_samples, mi_estimate_with_se, mi_exact, qpsk
from .scenarios import export_report, run_policy_experiment, run_resilience
from .service import Runtime, config_from_dict, load_config, serve

POLICY_IDS = ["P1", "P2", "P3", "P4", "B0", "B1"]


def _experiment_options(fn):
    for opt in reversed([
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--nmc", type=int, default=None, help="Samples per step."),
        click.option("--steps", type=int, default=None, help="Total steps."),
        click.option("--interval", type=int, default=None,
                      help="Navigator trigger period in steps."),
        click.option("--beta", type=float, default=None, help="EMA coefficient."),
        click.option("--backend", "backend_sel", default=None,
                      help="live | equalizer | static:<file> | fuzz | none"),
        click.option("--llm-url", default="http://127.0.0.1:1234",
                      show_default=True),
        click.option("--model", default="local-model", show_default=True),
        click.option("--out", type=click.Path(), default=None,
                      help="Export telemetry + summary to this path."),
        click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]),
                      default=None, help="Export format (default: by extension)."),
    ]):
        fn = opt(fn)
    return fn


def _resolve_backend(selector, llm_url, model, n, seed):
    if selector is None:
        return None
    endpoint = None
    if selector == "live":
        endpoint = EndpointConfig(base_url=llm_url, model=model)
    return make_backend(selector, endpoint, n=n, seed=seed)


def _overrides(nmc, steps, interval, beta, seed):
    out = {"seed": seed}
    if nmc is not None:
        out["n_mc"] = nmc
    if steps is not None:
        out["total_steps"] = steps
        out["warmup_steps"] = max(0, steps - max(1, steps // 5))
    if interval is not None:
        out["interval"] = interval
    if beta is not None:
        out["beta"] = beta
    return out


def _export(report, out, fmt):
    if out is None:
        return
    fmt = fmt or ("jsonl" if str(out).endswith(".jsonl") else "csv")
    export_report(report, out, fmt)
    click.echo(f"report written to {out}")


def _print_report(tag, report):
    click.echo(f"[{tag}] mean sum MI over window = {report.mean_sum_mi!r} bits")
    click.echo(f"[{tag}] final spread = {report.final_spread!r} bits")
    click.echo(f"[{tag}] final p_total = {report.final_p_total!r}")
    click.echo(f"[{tag}] final w = {[round(float(x), 6) for x in report.final_w]}")
    click.echo(f"[{tag}] constraint violations = {report.violations}")


@click.group()
def main():
    """Closed-loop power allocation with a language-model navigator."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file; flags override it.")
@click.option("--backend", "backend_sel", default=None)
@click.option("--llm-url", default=None)
@click.option("--model", default=None)
@click.option("--policy", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--nmc", type=int, default=None)
@click.option("--pacing", type=float, default=None, help="Steps/second (0 = unthrottled).")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def run(config_path, backend_sel, llm_url, model, policy, seed, nmc, pacing,
        host, port):
    """Start the live service (fast loop + navigator + HTTP API)."""
    import dataclasses

    try:
        cfg = load_config(config_path) if config_path else config_from_dict({})
        if backend_sel is not None:
            cfg = dataclasses.replace(cfg, backend=dataclasses.replace(
                cfg.backend, kind=backend_sel))
        if llm_url is not None:
            cfg = dataclasses.replace(cfg, backend=dataclasses.replace(
                cfg.backend, url=llm_url))
        if model is not None:
            cfg = dataclasses.replace(cfg, backend=dataclasses.replace(
                cfg.backend, model=model))
        if policy is not None:
            cfg = dataclasses.replace(cfg, navigator=dataclasses.replace(
                cfg.navigator, policy=policy))
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        if nmc is not None:
            cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(
                cfg.optimizer, n_mc=nmc))
        if pacing is not None:
            cfg = dataclasses.replace(cfg, pacing=pacing)
        if host is not None:
            cfg = dataclasses.replace(cfg, service=dataclasses.replace(
                cfg.service, host=host))
        if port is not None:
            cfg = dataclasses.replace(cfg, service=dataclasses.replace(
                cfg.service, port=port))
        problems = cfg.problems()
        if problems:
            for p in problems:
                click.echo(f"config error: {p}", err=True)
            sys.exit(1)
        runtime = Runtime(cfg)
    except (ValueError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    runtime.start()
    click.echo(f"serving on http://{cfg.service.host}:{cfg.service.port} "
               f"(backend={cfg.backend.kind})")
    try:
        serve(runtime, cfg.service.host, cfg.service.port)
    except KeyboardInterrupt:
        pass
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime fatal
        click.echo(f"runtime fatal: {exc}", err=True)
        runtime.stop()
        sys.exit(2)
    runtime.stop()


@main.group()
def experiment():
    """Scripted, seeded reproductions of the reference experiments."""


@experiment.command("policy")
@click.option("--id", "policy_id", required=True,
              type=click.Choice(POLICY_IDS, case_sensitive=False))
@_experiment_options
def experiment_policy(policy_id, seed, nmc, steps, interval, beta, backend_sel,
                      llm_url, model, out, fmt):
    """Run one policy condition (P1..P4) or reference (B0, B1)."""
    backend = _resolve_backend(backend_sel, llm_url, model, n=8, seed=seed)
    report = run_policy_experiment(policy_id.upper(), backend=backend,
                                   **_overrides(nmc, steps, interval, beta, seed))
    _print_report(policy_id.upper(), report)
    _export(report, out, fmt)


@experiment.command("resilience")
@_experiment_options
def experiment_resilience(seed, nmc, steps, interval, beta, backend_sel,
                          llm_url, model, out, fmt):
    """Gain-reversal run: steered navigator vs equal-weight reference."""
    backend = _resolve_backend(backend_sel, llm_url, model, n=8, seed=seed)
    over = _overrides(nmc, steps, interval, beta, seed)
    if steps is not None:
        over["warmup_steps"] = max(0, steps - 50)
    steered, baseline = run_resilience(backend=backend, **over)
    _print_report("steered", steered)
    _print_report("baseline", baseline)
    click.echo(f"delta steered = {steered.final_spread!r} bits")
    click.echo(f"delta baseline = {baseline.final_spread!r} bits")
    verdict = steered.final_spread < baseline.final_spread
    click.echo(f"steered spread strictly below baseline: {verdict}")
    if out is not None:
        base = str(out)
        stem, dot, ext = base.rpartition(".")
        if not dot:
            stem, ext = base, "csv"
        _export(steered, f"{stem}_steered.{ext}", fmt)
        _export(baseline, f"{stem}_baseline.{ext}", fmt)


@main.group()
def oracle():
    """Verification oracles."""


@oracle.command("mi")
@click.option("--a", "amplitude", type=float, required=True,
              help="Effective amplitude |h|*lambda.")
@click.option("--nmc", type=int, default=100_000, show_default=True)
@click.option("--nodes", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma2", type=float, default=1.0, show_default=True)
def oracle_mi(amplitude, nmc, nodes, seed, sigma2):
    """Print quadrature vs Monte Carlo MI at one amplitude."""
    c = qpsk()
    noise = NoiseModel(sigma2=sigma2)
    exact = mi_exact(amplitude, c, noise, nodes=nodes)
    est, se = mi_estimate_with_se(amplitude, c, noise, draw_samples(nmc, seed))
    click.echo(f"quadrature ({nodes} nodes/axis): {exact!r} bits")
    click.echo(f"monte carlo ({nmc} samples):    {est!r} bits (se {se!r})")
    click.echo(f"difference: {abs(est - exact)!r} bits")


@main.command("validate-config")
@click.argument("config_path", type=click.Path(exists=True))
def validate_config(config_path):
    """Check a config file; exit 1 with diagnostics if invalid."""
    try:
        cfg = load_config(config_path)
    except Exception as exc:  # noqa: BLE001 - any load failure is a config error
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    problems = cfg.problems()
    if problems:
        for p in problems:
            click.echo(f"config error: {p}", err=True)
        sys.exit(1)
    click.echo("config ok")


if __name__ == "__main__":
    main()
