"""Command-line front end.

Every subcommand posts the common request shape to the service — an
in-process instance by default, a remote one with ``--server`` — so the
CLI and the HTTP API stay a single code path.  Exit codes: 0 on success,
2 for configuration mistakes, 3 for failed pipeline stages.
"""

from __future__ import annotations

import json
import sys

import click

__all__ = ["main"]

EXIT_CONFIG = 2
EXIT_COMPONENT = 3


def _client(server: str | None):
    """HTTP client bound either to a remote server or the in-process app."""
    import httpx

    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    import warnings
    with warnings.catch_warnings():
        # some starlette builds grumble about their own test-client backend
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _call(ctx: click.Context, endpoint: str, payload: dict) -> dict:
    with _client(ctx.obj.get("server")) as client:
        try:
            resp = client.post(endpoint, json=payload)
        except Exception as exc:   # connection refused, DNS, ...
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(EXIT_COMPONENT)
    if resp.status_code == 200:
        return resp.json()
    try:
        body = resp.json()
    except json.JSONDecodeError:
        body = {"error": "internal", "message": resp.text}
    if isinstance(body.get("detail"), list):    # request-shape validation
        body = {"error": "config",
                "message": "; ".join(str(d.get("msg", d)) for d in body["detail"])}
    elif isinstance(body.get("detail"), dict):
        body = body["detail"]
    kind = body.get("error", "internal")
    click.echo(f"error ({kind}): {body.get('message', resp.text)}", err=True)
    sys.exit(EXIT_CONFIG if resp.status_code in (400, 422) else EXIT_COMPONENT)


def _echo(result: dict, highlight=()) -> None:
    for key in highlight:
        if key in result and result[key] is not None:
            val = result[key]
            if isinstance(val, float):
                val = f"{val:.6g}"
            click.echo(f"{key}: {val}")
    for key, val in result.items():
        if key not in highlight and isinstance(val, str):
            click.echo(f"{key}: {val}")


def _common(fn):
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(dir_okay=False),
                      help="scenario config, TOML or JSON (defaults apply without one)")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override the scenario seed")(fn)
    fn = click.option("--out", "out_dir", required=True,
                      type=click.Path(file_okay=False),
                      help="artifact directory for this run")(fn)
    return fn


def _payload(config_path, seed, out_dir, **extra) -> dict:
    payload = {"config_path": config_path, "seed": seed,
               "out_dir": out_dir, **extra}
    return {k: v for k, v in payload.items() if v is not None}


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="run against a remote service instead of in-process")
@click.version_option(package_name="gridmtd")
@click.pass_context
def main(ctx, server):
    """Measurement-integrity defense workflows."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command("gen-data")
@_common
@click.pass_context
def gen_data(ctx, config_path, seed, out_dir):
    """Synthesize the load-profile measurement series."""
    res = _call(ctx, "/gen-data", _payload(config_path, seed, out_dir))
    _echo(res, ("n_steps", "n_skipped", "case"))


@main.command("train")
@_common
@click.pass_context
def train(ctx, config_path, seed, out_dir):
    """Fit the window autoencoder on the training segment."""
    res = _call(ctx, "/train", _payload(config_path, seed, out_dir))
    _echo(res, ("epochs_run", "best_epoch", "final_train_loss", "final_val_loss"))


@main.command("calibrate")
@_common
@click.pass_context
def calibrate(ctx, config_path, seed, out_dir):
    """Set the alarm threshold at the validation FPR target."""
    res = _call(ctx, "/calibrate", _payload(config_path, seed, out_dir))
    _echo(res, ("tau", "target_fpr", "achieved_fpr", "n_windows"))


@main.command("detect")
@_common
@click.pass_context
def detect(ctx, config_path, seed, out_dir):
    """Score the campaign stream window by window."""
    res = _call(ctx, "/detect", _payload(config_path, seed, out_dir))
    _echo(res, ("n_windows", "n_alarms", "alarm_rate", "n_attacked"))


@main.command("identify")
@_common
@click.option("--step", type=int, default=None,
              help="stream step to identify (default: first alarm)")
@click.pass_context
def identify(ctx, config_path, seed, out_dir, step):
    """Recover the injection behind one alarmed window."""
    res = _call(ctx, "/identify", _payload(config_path, seed, out_dir, step=step))
    _echo(res, ("step", "attacked", "ok", "iterations", "loss",
                "bypass_bdd", "bypass_ae", "center_norm", "contains_zero"))


@main.command("mtd")
@_common
@click.pass_context
def mtd(ctx, config_path, seed, out_dir):
    """Dispatch the certified susceptance move for the identified injection."""
    res = _call(ctx, "/mtd", _payload(config_path, seed, out_dir))
    _echo(res, ("degenerate", "applied", "omega_star", "omega_floor", "phi_star",
                "effectiveness", "hiddenness", "best_effort", "ratio_avg"))


@main.command("run-cycle")
@_common
@click.pass_context
def run_cycle(ctx, config_path, seed, out_dir):
    """Walk the campaign stream through the full event-triggered cycle."""
    res = _call(ctx, "/run-cycle", _payload(config_path, seed, out_dir))
    _echo(res, ("n_steps", "n_attacked", "n_triggers", "n_failures", "wall_s"))


@main.command("evaluate")
@_common
@click.pass_context
def evaluate(ctx, config_path, seed, out_dir):
    """Fold the episode log into the headline metrics."""
    res = _call(ctx, "/evaluate", _payload(config_path, seed, out_dir))
    _echo(res, ("n_steps", "n_triggers", "trigger_rate", "adp", "dhp",
                "end_to_end_fpr", "detector_tpr", "detector_fpr",
                "ratio_avg", "baseline_ratio"))


@main.command("roc")
@_common
@click.pass_context
def roc(ctx, config_path, seed, out_dir):
    """Sweep the detector threshold over the labeled stream."""
    res = _call(ctx, "/roc", _payload(config_path, seed, out_dir))
    _echo(res, ("auc", "n_windows"))
    if res.get("operating"):
        op = res["operating"]
        click.echo(f"operating: threshold={op['threshold']:.6g} "
                   f"fpr={op['fpr']:.3f} tpr={op['tpr']:.3f}")


@main.command("report")
@_common
@click.pass_context
def report(ctx, config_path, seed, out_dir):
    """Write the markdown summary of every artifact in the run directory."""
    res = _call(ctx, "/report", _payload(config_path, seed, out_dir))
    _echo(res, ("sections",))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
