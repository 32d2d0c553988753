"""Single command-line entry point for every workflow.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every subcommand
takes ``--json`` for machine-readable output and is deterministic given
``--seed`` (plus single-threaded execution where tensor ops are involved).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evaluation, training, uncertainty
from .data import (
    PhantomParams,
    SplitSpec,
    generate_phantom_set,
    load_manifest,
    read_slice_png,
    save_manifest,
    split,
    write_label_png,
    write_uncertainty_png,
)
from .domain import ZoneCombo
from .errors import ProstsegError
from .models import (
    ALL_FAMILIES,
    ArchitectureSpec,
    Family,
    load_weights,
)

FAMILY_NAMES = [f.value for f in ALL_FAMILIES]


def _emit(as_json: bool, payload: dict, human: str | None = None):
    if as_json:
        click.echo(json.dumps(payload, indent=2, default=str))
    elif human:
        click.echo(human)


def _fail(exc: Exception) -> "click.exceptions.Exit":
    click.echo(f"error: {exc}", err=True)
    return click.exceptions.Exit(1)


def _parse_counts(text: str) -> dict[ZoneCombo, int]:
    counts: dict[ZoneCombo, int] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise click.UsageError(f"counts must look like COMBO=N, got {part!r}")
        name, _, value = part.partition("=")
        try:
            combo = ZoneCombo(name.strip())
        except ValueError:
            valid = ", ".join(c.value for c in ZoneCombo)
            raise click.UsageError(f"unknown combo {name!r}; valid: {valid}")
        try:
            counts[combo] = int(value)
        except ValueError:
            raise click.UsageError(f"count for {name} must be an integer, got {value!r}")
    return counts


def _load_spec(family: Family, spec_path: Path | None) -> ArchitectureSpec:
    overrides = {}
    if spec_path is not None:
        overrides = json.loads(Path(spec_path).read_text())
        overrides.pop("family", None)
    return ArchitectureSpec(family=family, **overrides)


def _load_config(config_path: Path | None, seed: int | None) -> training.TrainConfig:
    data = {}
    if config_path is not None:
        data = json.loads(Path(config_path).read_text())
    if seed is not None:
        data["seed"] = seed
    return training.TrainConfig.from_json(data)


@click.group()
@click.version_option(package_name="prostseg")
def main():
    """Prostate-zone segmentation toolkit: phantoms, training, evaluation,
    prediction, tuning, and the inference service."""


@main.group()
def phantom():
    """Synthetic phantom dataset commands."""


@phantom.command("gen")
@click.option("--counts", required=True, help="Per-combo counts, e.g. CZ_PZ=73,CZ_PZ_TZ=68")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--jitter", default=2.0, show_default=True, type=float)
@click.option("--noise", "noise_sigma", default=0.02, show_default=True, type=float)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def phantom_gen(counts, out_dir, seed, jitter, noise_sigma, as_json):
    """Generate a phantom dataset and write its manifest."""
    parsed = _parse_counts(counts)
    try:
        manifest = generate_phantom_set(
            parsed, seed=seed, out_dir=out_dir, jitter=jitter, noise_sigma=noise_sigma
        )
    except (ProstsegError, OSError) as exc:
        raise _fail(exc)
    manifest_path = Path(out_dir) / "manifest.json"
    _emit(
        as_json,
        {
            "manifest": str(manifest_path),
            "entries": len(manifest),
            "counts": {c.value: n for c, n in manifest.counts_by_combo.items() if n},
        },
        human=str(manifest_path),
    )


@main.command()
@click.option("--family", "family_name", required=True,
              type=click.Choice(FAMILY_NAMES + ["all"]), help="Architecture family or 'all'.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--val-manifest", "val_manifest_path", type=click.Path(path_type=Path),
              help="Validation manifest; defaults to a stratified 15% split.")
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              help="JSON file with training config fields.")
@click.option("--spec", "spec_path", type=click.Path(path_type=Path),
              help="JSON file with architecture spec overrides.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=None, type=int, help="Overrides the config seed.")
@click.option("--json", "as_json", is_flag=True)
def train(family_name, manifest_path, val_manifest_path, config_path, spec_path,
          out_dir, seed, as_json):
    """Train one family (or all seven) on a manifest."""
    try:
        config = _load_config(config_path, seed)
        manifest = load_manifest(manifest_path)
        if val_manifest_path is not None:
            train_manifest, val_manifest = manifest, load_manifest(val_manifest_path)
        else:
            train_manifest, val_manifest = split(manifest, SplitSpec(seed=config.seed))
            # persist the split so evaluation can target the held-out set
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            save_manifest(train_manifest, Path(out_dir) / "split_train.json")
            save_manifest(val_manifest, Path(out_dir) / "split_test.json")

        if family_name == "all":
            overrides = {}
            if spec_path is not None:
                overrides = json.loads(Path(spec_path).read_text())
                overrides.pop("family", None)
            results = training.train_all(
                train_manifest, val_manifest, config, out_dir, spec_overrides=overrides
            )
            payload = {
                fam.value: {
                    "weights": str(res.weights_path) if res.weights_path else None,
                    "skipped": res.skipped,
                    "error": res.error,
                }
                for fam, res in results.items()
            }
            failures = [f for f, r in results.items() if r.error]
            _emit(as_json, payload, human="\n".join(
                f"{fam}: {info['error'] or info['weights']}" for fam, info in payload.items()
            ))
            if failures:
                raise click.exceptions.Exit(1)
        else:
            spec = _load_spec(Family(family_name), spec_path)
            handle, log = training.train(
                spec, train_manifest, val_manifest, config, out_dir=out_dir
            )
            best = log.best_record
            _emit(
                as_json,
                {
                    "weights": str(log.checkpoint_path),
                    "epochs": len(log.records),
                    "best_val_loss": best.val_loss,
                    "best_val_dsc": best.val_mean_dsc,
                },
                human=f"{log.checkpoint_path} (val loss {best.val_loss:.4f})",
            )
    except (ProstsegError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise _fail(exc)


@main.command("eval")
@click.option("--weights", "weights_path", required=True, type=click.Path(path_type=Path),
              help="A .pzw archive or a directory of them.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--T", "t_value", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--grouping", default="by_truth", show_default=True,
              type=click.Choice(list(uncertainty.GROUPINGS)))
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(weights_path, manifest_path, t_value, seed, out_dir, jobs, grouping, as_json):
    """Repeated stochastic evaluation; writes table, boxplot CSVs, and figures."""
    try:
        manifest = load_manifest(manifest_path)
        weights_path = Path(weights_path)
        archives = (
            sorted(weights_path.rglob("*.pzw")) if weights_path.is_dir() else [weights_path]
        )
        if not archives:
            raise ProstsegError(f"no weight archives under {weights_path}")
        runs = []
        for archive in archives:
            handle = load_weights(archive)
            runs.append(
                evaluation.evaluate_model(
                    handle, manifest, T=t_value, base_seed=seed, jobs=jobs, grouping=grouping
                )
            )
        result = runs[0] if len(runs) == 1 else evaluation.compare(runs)
        written = evaluation.export_figures(result, out_dir)
        comparison = result if isinstance(result, evaluation.Comparison) else None
        aggregates = (
            {row.family: row.aggregate for row in comparison.rows}
            if comparison
            else {runs[0].family: runs[0].aggregate}
        )
        _emit(
            as_json,
            {"out_dir": str(out_dir), "files": [str(p) for p in written],
             "aggregates": aggregates},
            human="\n".join(str(p) for p in written),
        )
    except (ProstsegError, OSError) as exc:
        raise _fail(exc)


@main.command()
@click.option("--weights", "weights_path", required=True, type=click.Path(path_type=Path))
@click.option("--image", "image_path", required=True, type=click.Path(path_type=Path))
@click.option("--T", "t_value", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def predict(weights_path, image_path, t_value, seed, out_dir, as_json):
    """Segment one image: mask PNG, uncertainty PNG, and summary JSON."""
    try:
        from .models import set_stochastic

        handle = set_stochastic(load_weights(weights_path), True)
        slice_ = read_slice_png(image_path)
        stack = uncertainty.mc_sample(handle, slice_, T=t_value, base_seed=seed)
        mean_probs = uncertainty.predictive_mean(stack)
        umap = uncertainty.entropy_map(mean_probs)
        labels = mean_probs.argmax_labels()
        summary = uncertainty.summarize(umap, labels, grouping="by_prediction")

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(image_path).stem
        mask_path = out / f"{stem}_mask.png"
        unc_path = out / f"{stem}_uncertainty.png"
        summary_path = out / f"{stem}_summary.json"
        write_label_png(labels, mask_path)
        write_uncertainty_png(umap, unc_path)
        summary_path.write_text(
            json.dumps(
                {"summary": summary.to_json(), "seed": seed, "T": t_value,
                 "model_version": handle.version},
                indent=2,
            )
            + "\n"
        )
        _emit(
            as_json,
            {"mask": str(mask_path), "uncertainty": str(unc_path),
             "summary": str(summary_path), "seed": seed},
            human=f"{mask_path}\n{unc_path}\n{summary_path}",
        )
    except (ProstsegError, OSError) as exc:
        raise _fail(exc)


@main.command()
@click.option("--model-dir", "model_dir", required=True, type=click.Path(path_type=Path))
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option("--frontend", "frontend_dir", type=click.Path(path_type=Path),
              help="Directory with the built browser UI to serve at /.")
def serve(model_dir, port, config_path, frontend_dir):
    """Run the inference HTTP service."""
    try:
        import uvicorn

        from .service import ServiceConfig, create_app

        config = ServiceConfig.load(config_path)
        config.model_dir = Path(model_dir)
        if port != 8000:
            config.port = port
        app = create_app(config, frontend_dir=frontend_dir)
        uvicorn.run(app, host="0.0.0.0", port=config.port)
    except (ProstsegError, OSError) as exc:
        raise _fail(exc)


@main.command()
@click.option("--family", "family_name", required=True, type=click.Choice(FAMILY_NAMES))
@click.option("--grid", "grid_path", required=True, type=click.Path(path_type=Path),
              help="JSON file mapping config fields to candidate lists.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option("--spec", "spec_path", type=click.Path(path_type=Path))
@click.option("--folds", default=5, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="Where to write the tuning report JSON.")
@click.option("--json", "as_json", is_flag=True)
def tune(family_name, grid_path, manifest_path, config_path, spec_path, folds, seed,
         out_path, as_json):
    """Grid-search hyperparameters with stratified k-fold validation."""
    try:
        grid = json.loads(Path(grid_path).read_text())
        config = _load_config(config_path, seed)
        spec = _load_spec(Family(family_name), spec_path)
        manifest = load_manifest(manifest_path)
        result = training.tune(spec, manifest, grid, config, folds=folds)
        payload = result.to_json()
        if out_path is not None:
            Path(out_path).write_text(json.dumps(payload, indent=2) + "\n")
        _emit(as_json, payload, human=json.dumps(payload["best_params"]))
    except (ProstsegError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise _fail(exc)


if __name__ == "__main__":
    main()
