"""Command-line front end: ``synth``, ``fit``, ``score``, ``eval``, ``ablate``, ``run``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ``WDISCOOD_LOG_LEVEL`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io, scoring, synth
from .errors import DimMismatch, ManifestError, WDiscOODError
from .metrics import EvalReport, auroc, evaluate, fpr_at_tpr
from .stats import LabeledFeatures
from .wlda import WldaConfig, solve

logger = logging.getLogger("wdiscood")

ALPHA_GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
N_DISC_GRID = (10, 100, 500, 1000, 1500, 2000)
SWEEPS = ("alpha", "n_disc", "n_fit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- helpers -------------------------------------------------------------------


def _load_train(manifest: io.Manifest) -> LabeledFeatures:
    if manifest.train_labels is None:
        x, y = io.read_features_csv(manifest.train_features, labels_last=True)
    else:
        x = io.read_features(manifest.train_features)
        y = io.read_labels(manifest.train_labels)
        if y.shape[0] != x.shape[0]:
            raise DimMismatch(
                f"id_train.labels ({manifest.train_labels}): {y.shape[0]} labels for "
                f"{x.shape[0]} feature rows in {manifest.train_features}"
            )
    return LabeledFeatures.from_arrays(x, y)


def _check_shapes(refs: list[io.DatasetRef], dim: int, need_logits: bool) -> None:
    """Validate every evaluation file against the fitted dimension up front."""
    for ref in refs:
        rows, cols = io.feature_shape(ref.features)
        if cols != dim:
            raise DimMismatch(
                f"{ref.key}.features ({ref.features}): {cols} columns, "
                f"models were fitted on {dim}"
            )
        if need_logits:
            if ref.logits is None:
                raise ManifestError(
                    f"manifest entry '{ref.key}.logits' is required by logit scorers"
                )
            n_logits, _ = io.feature_shape(ref.logits)
            if n_logits != rows:
                raise DimMismatch(
                    f"{ref.key}.logits ({ref.logits}): {n_logits} rows, features have {rows}"
                )


def _wlda_config(manifest: io.Manifest, dim: int, args) -> WldaConfig:
    overrides = dict(manifest.wlda)
    overrides.setdefault("seed", manifest.seed)
    for key in ("n_disc", "alpha", "ridge_rel", "whiten_rel_tol", "n_fit", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    try:
        config = WldaConfig.for_dim(dim, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid WLDA configuration: {exc}") from exc
    if config.n_disc > dim:
        raise UsageError(f"n_disc={config.n_disc} exceeds feature dimension {dim}")
    return config


def _scorers(manifest: io.Manifest, args) -> list[str]:
    names = manifest.scorers
    if getattr(args, "scorers", None):
        names = [s.strip() for s in args.scorers.split(",") if s.strip()]
    unknown = [s for s in names if s not in scoring.SCORERS]
    if unknown:
        raise UsageError(f"unknown scorers {unknown}; choose from {list(scoring.SCORERS)}")
    return names


def _out_dir(manifest: io.Manifest, args) -> Path:
    return Path(args.out).resolve() if getattr(args, "out", None) else manifest.output_dir


# -- fit -------------------------------------------------------------------------


def cmd_fit(args) -> None:
    manifest = io.read_manifest(args.manifest)
    out = _out_dir(manifest, args) / "models"
    names = _scorers(manifest, args)
    train = _load_train(manifest)
    config = _wlda_config(manifest, train.dim, args)
    meta = {"dim": train.dim, "n_classes": train.n_classes, "scorers": names}

    if any(s in ("wdiscood", "wd", "wdr") for s in names):
        model = solve(train, config).model()
        io.write_model(out / "wlda.bin", model)
        logger.info("WLDA: n_disc=%d alpha=%g", config.n_disc, config.alpha)
    if "maha" in names:
        m = scoring.fit_maha(train)
        io.write_features(out / "maha_means.fmat", m.class_means)
        io.write_features(out / "maha_precision.fmat", m.shared_precision)
    if "knn" in names:
        k = args.k if args.k is not None else manifest.knn_k
        idx = scoring.fit_knn(train.features, k)
        io.write_features(out / "knn_bank.fmat", idx.bank)
        meta["knn_k"] = idx.k
    if "pr" in names:
        n_pc = args.n_pc or manifest.n_pc or scoring.default_n_pc(train.dim)
        pca = scoring.fit_pca(train.features, int(n_pc))
        io.write_features(out / "pca_mean.fmat", pca.mean[None, :])
        io.write_features(out / "pca_basis.fmat", pca.principal_basis)
        meta["n_pc"] = int(n_pc)
    meta["temperature"] = manifest.temperature
    io.write_json(out / "models.json", meta)
    print(f"models written to {out}")


# -- score -------------------------------------------------------------------------


class _Scorers:
    """Lazily loaded fitted models from a ``models/`` directory."""

    def __init__(self, model_dir: Path, alpha: float | None):
        self.dir = model_dir
        meta_path = model_dir / "models.json"
        if not meta_path.exists():
            raise ManifestError(f"no fitted models in {model_dir}; run `fit` first")
        self.meta = json.loads(meta_path.read_text())
        self.alpha = alpha
        self._cache = {}

    def _get(self, name):
        if name not in self._cache:
            d = self.dir
            if name == "wlda":
                self._cache[name] = io.read_model(d / "wlda.bin")
            elif name == "maha":
                self._cache[name] = scoring.MahaModel(
                    io.read_features(d / "maha_means.fmat"),
                    io.read_features(d / "maha_precision.fmat"),
                )
            elif name == "knn":
                self._cache[name] = scoring.KnnIndex(
                    io.read_features(d / "knn_bank.fmat"), int(self.meta["knn_k"])
                )
            elif name == "pca":
                self._cache[name] = scoring.PcaModel(
                    io.read_features(d / "pca_mean.fmat")[0],
                    io.read_features(d / "pca_basis.fmat"),
                )
        return self._cache[name]

    def score(self, scorer: str, features, logits) -> np.ndarray:
        if scorer == "wdiscood":
            return scoring.score_wdiscood(self._get("wlda"), features, self.alpha).values
        if scorer == "wd":
            return scoring.score_wd(self._get("wlda"), features).values
        if scorer == "wdr":
            return scoring.score_wdr(self._get("wlda"), features).values
        if scorer == "maha":
            return scoring.score_maha(self._get("maha"), features).values
        if scorer == "knn":
            return scoring.score_knn(self._get("knn"), features).values
        if scorer == "pr":
            return scoring.score_pr(self._get("pca"), features).values
        if scorer == "msp":
            return scoring.score_msp(logits).values
        if scorer == "energy":
            return scoring.score_energy(logits, self.meta.get("temperature", 1.0)).values
        return scoring.score_maxlogit(logits).values


def cmd_score(args) -> None:
    manifest = io.read_manifest(args.manifest)
    out = _out_dir(manifest, args)
    model_dir = Path(args.models).resolve() if args.models else out / "models"
    models = _Scorers(model_dir, args.alpha)
    names = _scorers(manifest, args)
    missing = [s for s in names if s not in models.meta["scorers"]]
    if missing:
        raise ManifestError(f"scorers {missing} were not fitted; rerun `fit`")
    refs = [manifest.id_test] + manifest.ood_sets
    need_logits = any(s in scoring.LOGIT_SCORERS for s in names)
    _check_shapes(refs, int(models.meta["dim"]), need_logits)
    for ref in refs:
        features = io.read_features(ref.features)
        logits = io.read_features(ref.logits) if need_logits else None
        for scorer in names:
            values = models.score(scorer, features, logits)
            io.write_scores(out / "scores" / ref.name / f"{scorer}.fmat", values)
            io.write_scores_csv(out / "scores" / ref.name / f"{scorer}.csv", scorer, values)
    print(f"scores written to {out / 'scores'}")


# -- eval -----------------------------------------------------------------------------


def cmd_eval(args) -> EvalReport:
    manifest = io.read_manifest(args.manifest)
    out = _out_dir(manifest, args)
    score_dir = Path(args.scores).resolve() if args.scores else out / "scores"
    names = _scorers(manifest, args)
    id_scores, ood_scores = {}, {}
    for scorer in names:
        path = score_dir / "id" / f"{scorer}.fmat"
        if not path.exists():
            raise ManifestError(f"missing score file {path}; run `score` first")
        id_scores[scorer] = io.read_scores(path)
        ood_scores[scorer] = {
            ref.name: io.read_scores(score_dir / ref.name / f"{scorer}.fmat")
            for ref in manifest.ood_sets
        }
    report = evaluate(id_scores, ood_scores)
    io.write_report(report, out / "report.json", out / "report.md")
    print(report.to_markdown(), end="")
    return report


def cmd_run(args) -> None:
    cmd_fit(args)
    cmd_score(args)
    cmd_eval(args)


# -- ablate -----------------------------------------------------------------------------


def _parse_sweep(text: str, dim: int) -> tuple[str, list]:
    name, _, values = text.partition("=")
    name = name.strip().replace("-", "_")
    if name not in SWEEPS:
        raise UsageError(f"sweep must be one of {SWEEPS}, got {name!r}")
    if values:
        try:
            parsed = [float(v) if name == "alpha" else int(v) for v in values.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad sweep values {values!r}: {exc}") from exc
    elif name == "alpha":
        parsed = list(ALPHA_GRID)
    elif name == "n_disc":
        parsed = [v for v in N_DISC_GRID if v <= dim]
    else:
        raise UsageError("an n_fit sweep needs explicit values")
    if name == "alpha" and any(v < 0 for v in parsed):
        raise UsageError("alpha values must be >= 0")
    if name == "n_disc" and any(not 1 <= v <= dim for v in parsed):
        raise UsageError(f"n_disc values must lie in [1, {dim}]")
    if name == "n_fit" and any(v < 1 for v in parsed):
        raise UsageError("n_fit values must be >= 1")
    return name, parsed


def _sweep_rows(sweep, value, model, sets, alpha):
    rows = []
    for name, x in sets.items():
        s_g = scoring.score_wd(model, x).values
        s_h = scoring.score_wdr(model, x).values
        fused = s_g if alpha == 0 else s_g + alpha * s_h
        rows.append((name, s_g, s_h, fused))
    (_, id_g, id_h, id_f), oods = rows[0], rows[1:]
    out = []
    for name, g, h, f in oods:
        out.append({
            "sweep": sweep,
            "value": value,
            "ood_set": name,
            "auroc_wdiscood": auroc(id_f, f),
            "fpr95_wdiscood": fpr_at_tpr(id_f, f),
            "auroc_wd": auroc(id_g, g),
            "auroc_wdr": auroc(id_h, h),
        })
    avg = {"sweep": sweep, "value": value, "ood_set": "average"}
    for key in ("auroc_wdiscood", "fpr95_wdiscood", "auroc_wd", "auroc_wdr"):
        avg[key] = float(np.mean([r[key] for r in out]))
    return out + [avg]


def cmd_ablate(args) -> Path:
    manifest = io.read_manifest(args.manifest)
    out = _out_dir(manifest, args)
    train = _load_train(manifest)
    sweep, values = _parse_sweep(args.sweep, train.dim)
    config = _wlda_config(manifest, train.dim, args)
    refs = [manifest.id_test] + manifest.ood_sets
    _check_shapes(refs, train.dim, need_logits=False)
    sets = {ref.name: io.read_features(ref.features) for ref in refs}

    rows = []
    if sweep == "alpha":
        model = solve(train, config).model()
        for a in values:
            rows += _sweep_rows(sweep, a, model, sets, a)
    elif sweep == "n_disc":
        solution = solve(train, config)
        for n in values:
            rows += _sweep_rows(sweep, n, solution.model(n_disc=n), sets, config.alpha)
    else:
        for n in values:
            cfg = replace(config, n_fit=n)
            rows += _sweep_rows(sweep, n, solve(train, cfg).model(), sets, config.alpha)

    fields = ["sweep", "value", "ood_set", "auroc_wdiscood", "fpr95_wdiscood",
              "auroc_wd", "auroc_wdr"]
    buf = _stdio.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    path = out / f"ablate_{sweep}.csv"
    with io.atomic_write(path, "w") as fh:
        fh.write(buf.getvalue())
    print(f"ablation written to {path}")
    return path


# -- synth -------------------------------------------------------------------------------


def cmd_synth(args) -> Path:
    base = {}
    if args.spec:
        base = json.loads(Path(args.spec).read_text())
    for key in ("d", "c", "n_per_class", "class_mean_scale", "within_noise", "seed",
                "n_ood", "n_test", "ref_n_disc"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    kinds = args.ood or ["mean_shift:10:residual", "mean_shift:10:discriminative"]
    try:
        parsed = [synth.parse_ood_kind(k) for k in kinds]
        specs = [synth.SynthSpec.from_dict({**base, "ood_kind": asdict(k)}) for k in parsed]
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid synthetic spec: {exc}") from exc

    out = Path(args.out).resolve()
    ood_entries = []
    for spec in specs:
        bench = synth.generate(spec)
        label = synth.ood_kind_label(spec.ood_kind)
        io.write_features(out / f"ood_{label}.fmat", bench.ood)
        ood_entries.append({"name": label, "features": f"ood_{label}.fmat"})
    io.write_features(out / "id_train.fmat", bench.id_train.features)
    io.write_labels(out / "id_train_labels.lvec", bench.id_train.labels)
    io.write_features(out / "id_test.fmat", bench.id_test)
    io.write_json(out / "synth.json", {"specs": [s.to_dict() for s in specs]})
    manifest = {
        "schema": io.MANIFEST_SCHEMA,
        "seed": specs[0].seed,
        "id_train": {"features": "id_train.fmat", "labels": "id_train_labels.lvec"},
        "id_test": {"features": "id_test.fmat"},
        "ood_sets": ood_entries,
        "scorers": ["wdiscood", "wd", "wdr", "maha", "knn", "pr"],
        # match the reference model the subspace-targeted shifts were built from
        "config": {"wlda": {"n_disc": specs[0].reference_n_disc}},
        "output_dir": "out",
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"synthetic benchmark written to {out}")
    return out / "manifest.json"


# -- entry point ------------------------------------------------------------------------------


def _add_wlda_overrides(p):
    p.add_argument("--alpha", type=float, help="score fusion weight")
    p.add_argument("--n-disc", dest="n_disc", type=int, help="number of discriminants")
    p.add_argument("--ridge-rel", dest="ridge_rel", type=float,
                   help="ridge as a fraction of the mean within-class eigenvalue")
    p.add_argument("--whiten-rel-tol", dest="whiten_rel_tol", type=float,
                   help="relative eigenvalue cutoff for whitening")
    p.add_argument("--n-fit", dest="n_fit", type=int, help="class-balanced fitting sample size")
    p.add_argument("--seed", type=int, help="subsampling seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wdiscood", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def manifest_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("manifest", help="experiment manifest (JSON)")
        p.add_argument("--out", help="output directory (overrides the manifest)")
        p.add_argument("--scorers", help="comma-separated scorer list")
        return p

    p = manifest_cmd("fit", "fit WLDA and baseline models on id_train")
    _add_wlda_overrides(p)
    p.add_argument("--k", type=int, help="KNN neighbour rank")
    p.add_argument("--n-pc", dest="n_pc", type=int, help="PCA principal dimension")
    p.set_defaults(func=cmd_fit)

    p = manifest_cmd("score", "write score files for id_test and every OOD set")
    p.add_argument("--models", help="directory of fitted models")
    p.add_argument("--alpha", type=float, help="override the fitted fusion weight")
    p.set_defaults(func=cmd_score)

    p = manifest_cmd("eval", "compute AUROC / FPR95 from score files")
    p.add_argument("--scores", help="directory of score files")
    p.set_defaults(func=cmd_eval)

    p = manifest_cmd("run", "fit, score and eval in one go")
    _add_wlda_overrides(p)
    p.add_argument("--k", type=int, help="KNN neighbour rank")
    p.add_argument("--n-pc", dest="n_pc", type=int, help="PCA principal dimension")
    p.add_argument("--models", help="directory of fitted models")
    p.add_argument("--scores", help="directory of score files")
    p.set_defaults(func=cmd_run)

    p = manifest_cmd("ablate", "sweep alpha, n_disc or n_fit and write AUROC curves")
    _add_wlda_overrides(p)
    p.add_argument("--sweep", required=True,
                   help="e.g. alpha=0.01,0.1,1 or n_disc=10,100 or n_fit=1000,5000")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic benchmark and its manifest")
    p.add_argument("--spec", help="JSON file with SynthSpec fields")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--d", type=int, help="feature dimension")
    p.add_argument("--c", type=int, help="number of ID classes")
    p.add_argument("--n-per-class", dest="n_per_class", type=int, help="training rows per class")
    p.add_argument("--class-mean-scale", dest="class_mean_scale", type=float,
                   help="norm of each class mean")
    p.add_argument("--within-noise", dest="within_noise", type=float,
                   help="per-coordinate standard deviation within a class")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--n-ood", dest="n_ood", type=int, help="rows per OOD set")
    p.add_argument("--n-test", dest="n_test", type=int, help="ID test rows (default: n-ood)")
    p.add_argument("--ref-n-disc", dest="ref_n_disc", type=int,
                   help="discriminants of the reference model (default: c - 1)")
    p.add_argument("--ood", action="append",
                   help="mean_shift:MAG[:discriminative|residual|random], "
                        "covariance_scale:F or uniform_box:W (repeatable)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("WDISCOOD_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except WDiscOODError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"NumericalError: {exc}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as exc:
        print(f"DataError: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
