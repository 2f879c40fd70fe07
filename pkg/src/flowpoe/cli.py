"""Experiment runner: data generation, training, sampling, evaluation, figures.

Every command takes an optional --config JSON file whose keys mirror the
long flag names (dashes as underscores); explicit flags win over config
values.  Each run writes its resolved configuration into the output
directory, so results are reproducible from the artifacts alone.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 check-suite
failure (a gated verification check did not pass).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .binned import BinnedDensity, sample_binned, smoothed_logpdf_grad
from .checks import (CheckReport, consistency_check, exchangeability_check,
                     predictive_metrics)
from .errors import FlowPoeError
from .gp import (KERNEL_FAMILIES, GeneratorConfig, GpKernelSpec,
                 GpOracleField, exact_posterior, gen_records)
from .llm import (PromptConfig, ScriptedClient, autoregressive_sample,
                  marginal_densities)
from .network import NetworkConfig
from .sampling import (LangevinCorrector, NetworkField, SamplerConfig,
                       conditional_guided_field, poe_guided_field,
                       sample_process)
from .schedulers import Scheduler
from .tasks import RegressionTask, read_tasks_jsonl, write_tasks_jsonl
from .training import TrainConfig, load_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECKS = 3

METHODS = ("ndp", "ndp-cond", "i-llmp", "a-llmp", "llm-ndp")


# -- plumbing ----------------------------------------------------------------

def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class _Resolver:
    """Merges flag values over config-file values; remembers the result."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = vars(args)
        self.config = config
        self.resolved: dict = {}

    def get(self, key: str, default=None):
        val = self.args.get(key)
        if val is None:
            val = self.config.get(key, default)
        self.resolved[key] = val
        return val


def _prepare_out(out) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _echo_config(out_dir: Path, command: str, resolved: dict) -> None:
    payload = {"command": command,
               "config": {k: v for k, v in sorted(resolved.items())}}
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2) + "\n",
                                         encoding="utf-8")


def _pair(text, cast=float) -> tuple:
    parts = [p for p in str(text).replace(",", " ").split() if p]
    if len(parts) != 2:
        raise FlowPoeError(f"expected two values, got {text!r}")
    return cast(parts[0]), cast(parts[1])


def _load_tasks(path) -> list:
    pairs = list(read_tasks_jsonl(path))
    if not pairs:
        raise FlowPoeError(f"no tasks in {path}")
    return pairs


def _kernel_from_meta(meta: dict) -> GpKernelSpec | None:
    if "family" not in meta:
        return None
    return GpKernelSpec(family=meta["family"],
                        length_scale=meta["length_scale"],
                        signal_variance=meta.get("signal_variance", 1.0))


def _sampler_config(r: _Resolver) -> SamplerConfig:
    corrector = None
    corr_spec = r.get("corrector")
    if corr_spec:
        scale, iters = _pair(corr_spec)
        corrector = LangevinCorrector(step_scale=scale, iterations=int(iters))
    return SamplerConfig(
        steps=int(r.get("steps", 256)),
        corrector=corrector,
        guidance_weight=float(r.get("guidance_weight", 1.0)),
        r_constant=r.get("r_constant"),
        jacobian=r.get("jacobian", "exact_vjp"),
        seed=int(r.get("seed", 0)),
    )


def _base_field(r: _Resolver, task: RegressionTask, meta: dict, X,
                sched: Scheduler):
    checkpoint = r.get("checkpoint")
    if checkpoint:
        net, _, _, _, _ = load_checkpoint(checkpoint)
        return NetworkField(net, X, sched), f"checkpoint:{checkpoint}"
    spec = _kernel_from_meta(meta)
    if r.get("kernel"):
        spec = GpKernelSpec(family=r.get("kernel"),
                            length_scale=float(r.get("length_scale", 1.0)),
                            signal_variance=float(r.get("signal_variance", 1.0)))
    if spec is None:
        raise FlowPoeError(
            "no field available: give --checkpoint, --kernel, or use a "
            "dataset with kernel metadata")
    return GpOracleField(spec, X, sched), f"oracle:{spec.family}"


def _experts_for_targets(r: _Resolver, task: RegressionTask):
    """(experts over targets, provenance string) or (None, None)."""
    experts_file = r.get("experts")
    script = r.get("expert_script")
    if experts_file:
        with open(experts_file, encoding="utf-8") as fh:
            records = json.load(fh)
        experts = [BinnedDensity(edges=np.asarray(rec["edges"]),
                                 masses=np.asarray(rec["masses"]))
                   for rec in records]
        if len(experts) != task.n_target:
            raise FlowPoeError(
                f"{len(experts)} experts in file for {task.n_target} targets")
        return experts, f"file:{experts_file}"
    if script:
        client = ScriptedClient.from_file(script)
        cfg = _prompt_config(r)
        return marginal_densities(client, task, cfg), f"script:{script}"
    return None, None


def _prompt_config(r: _Resolver) -> PromptConfig:
    return PromptConfig(
        preamble=r.get("preamble", "") or "",
        decimal_digits=int(r.get("decimal_digits", 2)),
        integer_digits=int(r.get("integer_digits", 1)),
        scale=float(r.get("value_scale", 1.0)),
        offset=float(r.get("value_offset", 0.0)),
        ordering=r.get("ordering", "nearest_to_target"),
    )


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    r = _Resolver(args, _load_config_file(args.config))
    out_dir = _prepare_out(r.get("out", "out"))
    families = r.get("families")
    gen_cfg = GeneratorConfig(
        families=tuple(families.split(",")) if families else KERNEL_FAMILIES,
        length_scale_range=_pair(r.get("length_scale_range", "0.1,2.0")),
        x_range=_pair(r.get("x_range", "-2,2")),
        points_range=_pair(r.get("points_range", "16,64"), cast=int),
        target_fraction=float(r.get("target_fraction", 0.25)),
    )
    count = int(r.get("count", 1024))
    seed = int(r.get("seed", 0))
    path = out_dir / "tasks.jsonl"
    n = write_tasks_jsonl(path, gen_records(gen_cfg, seed, count))
    _echo_config(out_dir, "gen-data", r.resolved)

    fam_counts: dict[str, int] = {}
    y_sum = y_sq = y_n = 0.0
    for task, meta in read_tasks_jsonl(path):
        fam_counts[meta["family"]] = fam_counts.get(meta["family"], 0) + 1
        y = task.joint_y()
        y_sum += y.sum()
        y_sq += (y**2).sum()
        y_n += y.size
    print(f"wrote {n} tasks to {path}")
    print(f"families: {json.dumps(fam_counts, sort_keys=True)}")
    print(f"y mean {y_sum / y_n:+.4f}, y variance {y_sq / y_n - (y_sum / y_n) ** 2:.4f}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    r = _Resolver(args, _load_config_file(args.config))
    out_dir = _prepare_out(r.get("out", "out"))
    tasks = [t for t, _ in _load_tasks(r.get("data"))]
    net_cfg = NetworkConfig(
        input_dim=tasks[0].x_dim + tasks[0].y_dim,
        output_dim=tasks[0].y_dim,
        embed_dim=int(r.get("embed_dim", 64)),
        num_layers=int(r.get("layers", 4)),
        num_heads=int(r.get("heads", 4)),
        time_embed_dim=int(r.get("time_embed_dim", 32)),
    )
    train_cfg = TrainConfig(
        learning_rate=float(r.get("lr", 3e-4)),
        weight_decay=float(r.get("weight_decay", 0.01)),
        batch_tasks=int(r.get("batch", 32)),
        total_steps=int(r.get("steps", 5000)),
        seed=int(r.get("seed", 0)),
        log_every=int(r.get("log_every", 100)),
    )
    resume = r.get("resume")
    _echo_config(out_dir, "train", r.resolved)
    checkpoint = out_dir / "checkpoint.npz"
    result = train(train_cfg, net_cfg, tasks, Scheduler(),
                   resume_from=resume, checkpoint_path=checkpoint,
                   checkpoint_every=int(r.get("checkpoint_every", 0)))
    loss_csv = out_dir / "loss.csv"
    write_header = not (resume and loss_csv.exists())
    with open(loss_csv, "a" if resume else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(["step", "loss", "lr"])
        for step, loss, lr in result.history:
            writer.writerow([int(step), f"{loss:.6f}", f"{lr:.3e}"])
    final = result.history[-1, 1] if len(result.history) else float("nan")
    print(f"trained {result.steps_run} steps; final logged loss {final:.4f}")
    print(f"checkpoint: {checkpoint}")
    return EXIT_OK


def _select_task(r: _Resolver) -> tuple[RegressionTask, dict]:
    pairs = _load_tasks(r.get("task_file") or r.get("data"))
    index = int(r.get("task_index", 0))
    if not 0 <= index < len(pairs):
        raise FlowPoeError(f"task index {index} out of range ({len(pairs)} tasks)")
    return pairs[index]


def cmd_sample(args: argparse.Namespace) -> int:
    r = _Resolver(args, _load_config_file(args.config))
    out_dir = _prepare_out(r.get("out", "out"))
    task, meta = _select_task(r)
    sched = Scheduler()
    cfg = _sampler_config(r)
    condition = r.get("condition", "none")

    if condition == "context" and task.n_context > 0:
        X = task.joint_x()
    else:
        X = task.target_x
    field, field_name = _base_field(r, task, meta, X, sched)

    provenance = {"field": field_name, "condition": condition,
                  "task_index": int(r.get("task_index", 0)), "experts": None}
    if condition == "context" and task.n_context > 0:
        field = conditional_guided_field(
            field, task.context_y, np.arange(task.n_context),
            float(r.get("sigma_meas", 0.1)), sched, cfg)
    experts, expert_src = _experts_for_targets(r, task)
    if experts is not None:
        offset = task.n_context if (condition == "context" and task.n_context) else 0
        padded = [None] * offset + list(experts)
        field = poe_guided_field(field, padded, sched, cfg)
        provenance["experts"] = expert_src

    n_samples = int(r.get("samples", 512))
    result = sample_process(field, sched, cfg, n_samples)
    record = result.to_record(X, cfg, provenance=provenance,
                              thin=r.get("thin"))
    (out_dir / "samples.json").write_text(json.dumps(record) + "\n",
                                          encoding="utf-8")
    _echo_config(out_dir, "sample", r.resolved)
    print(f"wrote {n_samples} samples over {len(X)} points to "
          f"{out_dir / 'samples.json'} (field {field_name})")
    return EXIT_OK


def _require_script(r: _Resolver, method: str) -> ScriptedClient:
    script = r.get("expert_script")
    if not script:
        raise FlowPoeError(f"method {method!r} needs --expert-script")
    return ScriptedClient.from_file(script)


def _eval_one_method(method: str, task: RegressionTask, meta: dict,
                     r: _Resolver, sched: Scheduler, cfg: SamplerConfig,
                     n_samples: int) -> dict:
    spec = _kernel_from_meta(meta)
    sigma_meas = float(r.get("sigma_meas", 0.1))
    reference = task.target_y[:, 0] if task.target_y is not None else None
    exact_mean = exact_cov = None
    if spec is not None and task.n_context > 0:
        exact_mean, exact_cov = exact_posterior(spec, task, sigma_meas**2)
        if reference is None:
            reference = exact_mean[:, 0]
    if reference is None:
        raise FlowPoeError("task has neither target_y nor kernel metadata")

    if method in ("ndp", "ndp-cond", "llm-ndp"):
        conditioned = method in ("ndp-cond", "llm-ndp") and task.n_context > 0
        X = task.joint_x() if conditioned else task.target_x
        field, _ = _base_field(r, task, meta, X, sched)
        if conditioned:
            field = conditional_guided_field(
                field, task.context_y, np.arange(task.n_context),
                sigma_meas, sched, cfg)
        if method == "llm-ndp":
            client = _require_script(r, method)
            experts = marginal_densities(client, task, _prompt_config(r))
            offset = task.n_context if conditioned else 0
            field = poe_guided_field(field, [None] * offset + experts, sched, cfg)
        samples = sample_process(field, sched, cfg, n_samples).samples
        target_slice = samples[:, -task.n_target:, 0]
    elif method == "i-llmp":
        client = _require_script(r, method)
        experts = marginal_densities(client, task, _prompt_config(r))
        rng = np.random.default_rng(cfg.seed)
        target_slice = np.stack(
            [sample_binned(q, rng, n_samples) for q in experts], axis=1)
    elif method == "a-llmp":
        client = _require_script(r, method)
        pcfg = _prompt_config(r)
        draws = [autoregressive_sample(client, task, pcfg, seed=cfg.seed + i)[0][:, 0]
                 for i in range(n_samples)]
        target_slice = np.stack(draws)
    else:
        raise FlowPoeError(f"unknown method {method!r}")

    return predictive_metrics(target_slice, reference,
                              exact_mean=exact_mean, exact_cov=exact_cov)


def cmd_eval(args: argparse.Namespace) -> int:
    r = _Resolver(args, _load_config_file(args.config))
    out_dir = _prepare_out(r.get("out", "out"))
    pairs = _load_tasks(r.get("data"))
    count = min(int(r.get("count", 8)), len(pairs))
    methods = [m.strip() for m in str(r.get("methods", "ndp-cond")).split(",")]
    for m in methods:
        if m not in METHODS:
            raise FlowPoeError(f"unknown method {m!r}; choose from {METHODS}")
    sched = Scheduler()
    cfg = _sampler_config(r)
    n_samples = int(r.get("samples", 256))

    rows = []
    for method in methods:
        agg: dict[str, list] = {}
        error = ""
        done = 0
        for task, meta in pairs[:count]:
            try:
                metrics = _eval_one_method(method, task, meta, r, sched, cfg,
                                           n_samples)
            except (FlowPoeError, OSError) as exc:
                error = str(exc)
                break
            for k, v in metrics.items():
                agg.setdefault(k, []).append(v)
            done += 1
        row = {"method": method, "tasks": done, "error": error}
        for k, vals in agg.items():
            row[k] = float(np.mean(vals))
        rows.append(row)

    columns = ["method", "tasks", "mean_rmse", "coverage_50", "coverage_90",
               "mean_abs_err_max", "var_rel_err_max", "error"]
    with open(out_dir / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])

    reports = _run_checks(r, pairs, sched, cfg)
    (out_dir / "checks.json").write_text(
        json.dumps([rep.to_record() for rep in reports], indent=2) + "\n",
        encoding="utf-8")
    _echo_config(out_dir, "eval", r.resolved)

    for row in rows:
        rmse = row.get("mean_rmse")
        shown = f"{rmse:.4f}" if isinstance(rmse, float) else "-"
        flag = f"  ERROR: {row['error']}" if row["error"] else ""
        print(f"{row['method']:>8}: tasks={row['tasks']} rmse={shown}{flag}")
    gated_failures = [rep for rep in reports if rep.gated and not rep.passed]
    for rep in reports:
        status = "pass" if rep.passed else "FAIL"
        mode = "gated" if rep.gated else "diagnostic"
        print(f"check {rep.name} [{mode}]: {rep.statistic:.3e} "
              f"(threshold {rep.threshold:.3e}) {status}")
    return EXIT_CHECKS if gated_failures else EXIT_OK


def _run_checks(r: _Resolver, pairs: list, sched: Scheduler,
                cfg: SamplerConfig) -> list:
    reports: list[CheckReport] = []
    task, meta = pairs[0]
    spec = _kernel_from_meta(meta)
    check_samples = int(r.get("check_samples", 8192))
    if spec is not None:
        X_super = task.joint_x()[:6]
        X_sub = X_super[: max(2, len(X_super) // 2)]
        reports.append(consistency_check(
            lambda X: GpOracleField(spec, X, sched), X_super, X_sub, sched,
            cfg, n_samples=check_samples, gated=True,
            name="consistency-oracle"))
    checkpoint = r.get("checkpoint")
    if checkpoint:
        net, _, _, _, _ = load_checkpoint(checkpoint)
        reports.append(exchangeability_check(net, seed=cfg.seed))
        reports.append(consistency_check(
            lambda X: NetworkField(net, X, sched),
            task.joint_x()[:6], task.joint_x()[:3], sched, cfg,
            n_samples=check_samples, gated=False, name="consistency-trained"))
    return reports


def cmd_figures(args: argparse.Namespace) -> int:
    r = _Resolver(args, _load_config_file(args.config))
    out_dir = _prepare_out(r.get("out", "out"))
    task, meta = _select_task(r)
    if task.x_dim != 1:
        raise FlowPoeError("figure bundles require one-dimensional inputs")
    sched = Scheduler()
    cfg = _sampler_config(r)
    condition = r.get("condition", "context" if task.n_context else "none")

    conditioned = condition == "context" and task.n_context > 0
    X = task.joint_x() if conditioned else task.target_x
    field, field_name = _base_field(r, task, meta, X, sched)
    if conditioned:
        field = conditional_guided_field(
            field, task.context_y, np.arange(task.n_context),
            float(r.get("sigma_meas", 0.1)), sched, cfg)
    experts, expert_src = _experts_for_targets(r, task)
    if experts is not None:
        offset = task.n_context if conditioned else 0
        field = poe_guided_field(field, [None] * offset + list(experts),
                                 sched, cfg)

    n_samples = int(r.get("samples", 512))
    result = sample_process(field, sched, cfg, n_samples)
    tgt = slice(task.n_context, None) if conditioned else slice(None)
    order = np.argsort(task.target_x[:, 0])
    x_sorted = task.target_x[order, 0]

    n_traj = int(r.get("trajectories", 8))
    bundle = {
        "kind": "figure_bundle",
        "x": x_sorted.tolist(),
        "quantile_levels": result.quantile_levels.tolist(),
        "quantiles": result.quantiles[:, tgt, 0][:, order].tolist(),
        "context": {"x": task.context_x[:, 0].tolist(),
                    "y": task.context_y[:, 0].tolist()},
        "trajectories": result.samples[:n_traj, tgt, 0][:, order].tolist(),
        "labels": {"title": f"{field_name}"
                            + (" + experts" if experts is not None else ""),
                   "x": "x", "y": "y"},
        "provenance": {"field": field_name, "condition": condition,
                       "experts": expert_src, "config": cfg.echo()},
    }
    if experts is not None:
        smooth_r = float(r.get("expert_r", 0.05))
        lo = min(float(q.edges[0]) for q in experts)
        hi = max(float(q.edges[-1]) for q in experts)
        y_grid = np.linspace(lo, hi, int(r.get("expert_grid", 201)))
        values = []
        for q in [experts[i] for i in order]:
            logpdf, _ = smoothed_logpdf_grad(q, smooth_r, y_grid)
            values.append(np.asarray(logpdf).tolist())
        bundle["expert_logprob"] = {"y_grid": y_grid.tolist(),
                                    "values": values, "r": smooth_r}

    (out_dir / "bundle.json").write_text(json.dumps(bundle) + "\n",
                                         encoding="utf-8")
    _echo_config(out_dir, "figures", r.resolved)
    print(f"wrote figure bundle to {out_dir / 'bundle.json'}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed")


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, help="ODE steps")
    p.add_argument("--samples", type=int, help="number of sample paths")
    p.add_argument("--corrector", help="Langevin corrector as 'scale,iters'")
    p.add_argument("--guidance-weight", dest="guidance_weight", type=float)
    p.add_argument("--r-constant", dest="r_constant", type=float,
                   help="override the smoothing scale r_t with a constant")
    p.add_argument("--jacobian", choices=["exact_vjp", "identity_approx"])
    p.add_argument("--sigma-meas", dest="sigma_meas", type=float,
                   help="measurement noise for context guidance")
    p.add_argument("--condition", choices=["none", "context"])
    p.add_argument("--checkpoint", help="trained network checkpoint (.npz)")
    p.add_argument("--kernel", choices=list(KERNEL_FAMILIES),
                   help="oracle kernel family (overrides task metadata)")
    p.add_argument("--length-scale", dest="length_scale", type=float)
    p.add_argument("--signal-variance", dest="signal_variance", type=float)
    p.add_argument("--experts", help="JSON file with one density per target")
    p.add_argument("--expert-script", dest="expert_script",
                   help="scripted-client rules JSON for building experts")
    p.add_argument("--ordering", choices=["nearest_to_target", "left_to_right"])
    p.add_argument("--preamble", help="conditioning text for prompts")
    p.add_argument("--decimal-digits", dest="decimal_digits", type=int)
    p.add_argument("--integer-digits", dest="integer_digits", type=int)
    p.add_argument("--value-scale", dest="value_scale", type=float)
    p.add_argument("--value-offset", dest="value_offset", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowpoe",
        description="Flow-matching regression processes with guided sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a GP task dataset")
    _add_common(p)
    p.add_argument("--count", type=int, help="number of tasks")
    p.add_argument("--families", help="comma-separated kernel families")
    p.add_argument("--length-scale-range", dest="length_scale_range")
    p.add_argument("--x-range", dest="x_range")
    p.add_argument("--points-range", dest="points_range")
    p.add_argument("--target-fraction", dest="target_fraction", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the velocity network")
    _add_common(p)
    p.add_argument("--data", help="JSONL task dataset")
    p.add_argument("--steps", type=int, help="total optimization steps")
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--time-embed-dim", dest="time_embed_dim", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample a process at task locations")
    _add_common(p)
    p.add_argument("--task-file", dest="task_file", help="JSONL task dataset")
    p.add_argument("--data", help="alias for --task-file")
    p.add_argument("--task-index", dest="task_index", type=int)
    p.add_argument("--thin", type=int, help="keep every k-th sample in the dump")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compare methods and run process checks")
    _add_common(p)
    p.add_argument("--data", help="JSONL task dataset")
    p.add_argument("--count", type=int, help="tasks to evaluate")
    p.add_argument("--methods", help=f"comma-separated from {METHODS}")
    p.add_argument("--check-samples", dest="check_samples", type=int)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("figures", help="export figure-data bundles")
    _add_common(p)
    p.add_argument("--task-file", dest="task_file", help="JSONL task dataset")
    p.add_argument("--data", help="alias for --task-file")
    p.add_argument("--task-index", dest="task_index", type=int)
    p.add_argument("--trajectories", type=int, help="paths to include")
    p.add_argument("--expert-r", dest="expert_r", type=float,
                   help="smoothing scale for expert log-prob curves")
    p.add_argument("--expert-grid", dest="expert_grid", type=int)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_figures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except FlowPoeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
