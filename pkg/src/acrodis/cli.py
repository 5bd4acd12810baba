"""Command-line pipeline: stats, tapt, train, pseudo, predict, eval.

Every command resolves its configuration (JSON config file, overridden by
flags that mirror the TrainConfig field names), writes a run manifest with
input digests before any long computation, and produces artifacts that are a
deterministic function of (inputs, config, seed).

Exit codes: 0 success, 2 input validation failure, 3 missing input artifact,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import acrodis
from acrodis.core_types import TrainConfig, validate_sample
from acrodis.data_ingest import (
    DataParseError,
    DataValidationError,
    compute_stats,
    load_dataset,
    load_dictionary,
)
from acrodis.eval_report import (
    error_report,
    evaluate,
    load_predictions,
    mf_predictions,
    predict_all,
    save_error_report,
    save_metrics,
    save_predictions,
)
from acrodis.model import (
    DeskEncoder,
    DeskEncoderConfig,
    load_checkpoint,
    load_encoder_checkpoint,
    save_checkpoint,
    save_encoder_checkpoint,
)
from acrodis.pair_builder import build_vocab
from acrodis.pseudo_label import harvest, merge_and_retrain, save_pseudo_dataset
from acrodis.tapt_pretrain import tapt_train
from acrodis.train_engine import DivergenceError, TrainingStrategies, train

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_DIVERGENCE = 4


class MissingArtifactError(FileNotFoundError):
    pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _require(path_str: str, role: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise MissingArtifactError(f"missing {role}: {path}")
    return path


def _write_manifest(out_dir: Path, command: str, inputs: dict, outputs: dict, extra: dict) -> None:
    manifest = {
        "command": command,
        "version": acrodis.__version__,
        "inputs": {role: {"path": str(p), "sha256": _sha256(p)} for role, p in inputs.items()},
        "outputs": {role: str(out_dir / name) for role, name in outputs.items()},
    }
    manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = int if f.type in ("int", "Optional[int]") else float
        parser.add_argument(flag, type=kind, default=None, help=f"override {f.name}")


def _resolve_config(args) -> TrainConfig:
    base = {}
    if args.config:
        base = json.loads(_require(args.config, "config file").read_text(encoding="utf-8"))
    for f in dataclasses.fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    return TrainConfig.from_dict(base)


def _add_encoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--encoder-layers", type=int, default=None)
    parser.add_argument("--hidden-dim", type=int, default=None)
    parser.add_argument("--attention-heads", type=int, default=None)
    parser.add_argument("--feedforward-dim", type=int, default=None)
    parser.add_argument("--max-positions", type=int, default=None)


def _resolve_encoder_config(args) -> DeskEncoderConfig:
    base = DeskEncoderConfig()
    overrides = {
        "layers": args.encoder_layers,
        "hidden_dim": args.hidden_dim,
        "attention_heads": args.attention_heads,
        "feedforward_dim": args.feedforward_dim,
        "max_positions": args.max_positions,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(base, **fields) if fields else base


def _load_validated(data_path: Path, dictionary) -> list:
    samples = load_dataset(data_path)
    violations = []
    for sample in samples:
        violations.extend(validate_sample(sample, dictionary))
    if violations:
        raise DataValidationError(f"{data_path}: " + "; ".join(violations[:10]))
    return samples


def _strategies(args) -> TrainingStrategies:
    return TrainingStrategies(
        dynamic_negatives=args.dynamic_negatives,
        adversarial=args.adversarial,
    )


def _add_strategy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dynamic-negatives", action=argparse.BooleanOptionalAction, default=True,
                        help="balanced per-batch negative sampling (on by default)")
    parser.add_argument("--adversarial", action="store_true",
                        help="embedding-perturbation adversarial training")
    parser.add_argument("--from-tapt", default=None,
                        help="encoder checkpoint from the tapt command to initialize from")


# -- commands -----------------------------------------------------------------


def cmd_stats(args) -> int:
    data_path = _require(args.data, "dataset")
    dict_path = _require(args.dict, "dictionary")
    out_dir = Path(args.out_dir)
    dictionary = load_dictionary(dict_path)
    samples = _load_validated(data_path, dictionary)
    outputs = {"stats": "stats.json"}
    if args.plot:
        outputs["acronyms_per_sentence_plot"] = "acronyms_per_sentence.png"
        outputs["expansions_per_acronym_plot"] = "expansions_per_acronym.png"
    _write_manifest(out_dir, "stats", {"data": data_path, "dict": dict_path}, outputs, {})
    stats = compute_stats(samples, dictionary)
    (out_dir / "stats.json").write_text(
        json.dumps(stats.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    if args.plot:
        _plot_histogram(stats.acronyms_per_sentence, "acronyms per sentence",
                        out_dir / "acronyms_per_sentence.png")
        _plot_histogram(stats.expansions_per_acronym, "expansions per acronym",
                        out_dir / "expansions_per_acronym.png")
    print(f"stats written to {out_dir / 'stats.json'}")
    return EXIT_OK


def _plot_histogram(histogram: dict, title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    keys = sorted(histogram)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(k) for k in keys], [histogram[k] for k in keys], color="#4878a8")
    ax.set_title(f"Number of {title}")
    ax.set_xlabel(title.split(" per ")[0])
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_tapt(args) -> int:
    data_path = _require(args.data, "dataset")
    dict_path = _require(args.dict, "dictionary")
    out_dir = Path(args.out_dir)
    cfg = _resolve_config(args)
    encoder_cfg = _resolve_encoder_config(args)
    dictionary = load_dictionary(dict_path)
    samples = _load_validated(data_path, dictionary)
    tokenizer = build_vocab(samples, dictionary, min_count=args.min_count)
    _write_manifest(
        out_dir, "tapt", {"data": data_path, "dict": dict_path},
        {"encoder": "tapt_encoder.npz", "log": "tapt_log.jsonl", "tokenizer": "tokenizer.json"},
        {"config": cfg.to_dict(), "encoder_config": encoder_cfg.to_dict(), "seed": cfg.seed},
    )
    encoder = DeskEncoder(encoder_cfg, tokenizer.vocab_size, seed=cfg.seed)
    encoder, history = tapt_train(samples, dictionary, encoder, tokenizer, cfg.epochs, cfg)
    tokenizer.save(out_dir / "tokenizer.json")
    save_encoder_checkpoint(out_dir / "tapt_encoder.npz", encoder, tokenizer,
                            provenance={"tapt": True, "seed": cfg.seed, "epochs": cfg.epochs})
    with open(out_dir / "tapt_log.jsonl", "w", encoding="utf-8") as handle:
        for entry in history:
            handle.write(json.dumps(entry) + "\n")
    final = history[-1]["mlm_loss"] if history else float("nan")
    print(f"tapt encoder written to {out_dir / 'tapt_encoder.npz'} (final loss {final:.4f})")
    return EXIT_OK


def _train_common(args, train_samples, dictionary, extra_inputs: dict):
    strategies = _strategies(args)
    if args.from_tapt:
        tapt_path = _require(args.from_tapt, "pretrained encoder checkpoint")
        initial_encoder, tokenizer, _ = load_encoder_checkpoint(tapt_path)
        encoder_cfg = initial_encoder.cfg
        extra_inputs = dict(extra_inputs, tapt=tapt_path)
    else:
        initial_encoder = None
        tokenizer = build_vocab(train_samples, dictionary, min_count=args.min_count)
        encoder_cfg = _resolve_encoder_config(args)
    return strategies, initial_encoder, tokenizer, encoder_cfg, extra_inputs


def cmd_train(args) -> int:
    train_path = _require(args.train, "training dataset")
    dev_path = _require(args.dev, "dev dataset")
    dict_path = _require(args.dict, "dictionary")
    out_dir = Path(args.out_dir)
    cfg = _resolve_config(args)
    dictionary = load_dictionary(dict_path)
    train_samples = _load_validated(train_path, dictionary)
    dev_samples = _load_validated(dev_path, dictionary)
    inputs = {"train": train_path, "dev": dev_path, "dict": dict_path}
    strategies, initial_encoder, tokenizer, encoder_cfg, inputs = _train_common(
        args, train_samples, dictionary, inputs)
    _write_manifest(
        out_dir, "train", inputs,
        {"model": "model.npz", "log": "train_log.jsonl", "metrics": "dev_metrics.json"},
        {"config": cfg.to_dict(), "encoder_config": encoder_cfg.to_dict(),
         "strategies": dataclasses.asdict(strategies), "seed": cfg.seed},
    )
    model, state = train(
        train_samples, dev_samples, dictionary, tokenizer, cfg, strategies,
        encoder_cfg=encoder_cfg, initial_encoder=initial_encoder,
        log_path=out_dir / "train_log.jsonl",
    )
    provenance = {
        "tapt": args.from_tapt is not None,
        "adversarial": strategies.adversarial,
        "dynamic_negatives": strategies.dynamic_negatives,
        "pseudo_rounds": 0,
        "seed": cfg.seed,
    }
    save_checkpoint(out_dir / "model.npz", model, provenance)
    metrics = evaluate(dev_samples, predict_all(dev_samples, model, dictionary))
    save_metrics(metrics, out_dir / "dev_metrics.json")
    print(f"model written to {out_dir / 'model.npz'} (dev macro F1 {metrics.f1:.4f})")
    return EXIT_OK


def cmd_pseudo(args) -> int:
    model_path = _require(args.model, "model checkpoint")
    unlabeled_path = _require(args.unlabeled, "unlabeled dataset")
    train_path = _require(args.train, "training dataset")
    dev_path = _require(args.dev, "dev dataset")
    dict_path = _require(args.dict, "dictionary")
    out_dir = Path(args.out_dir)
    cfg = _resolve_config(args)
    dictionary = load_dictionary(dict_path)
    train_samples = _load_validated(train_path, dictionary)
    dev_samples = _load_validated(dev_path, dictionary)
    unlabeled = load_dataset(unlabeled_path)
    strategies = _strategies(args)

    model, provenance = load_checkpoint(model_path)
    initial_encoder = None
    inputs = {"model": model_path, "unlabeled": unlabeled_path,
              "train": train_path, "dev": dev_path, "dict": dict_path}
    if args.from_tapt:
        tapt_path = _require(args.from_tapt, "pretrained encoder checkpoint")
        initial_encoder, _, _ = load_encoder_checkpoint(tapt_path)
        inputs["tapt"] = tapt_path
    outputs = {"model": "model.npz", "metrics": "dev_metrics.json"}
    for round_index in range(1, args.pseudo_rounds + 1):
        outputs[f"pseudo_round{round_index}"] = f"pseudo_round{round_index}.json"
        outputs[f"log_round{round_index}"] = f"train_log_round{round_index}.jsonl"
    _write_manifest(out_dir, "pseudo", inputs, outputs,
                    {"config": cfg.to_dict(), "strategies": dataclasses.asdict(strategies),
                     "rounds": args.pseudo_rounds, "seed": cfg.seed})

    for round_index in range(1, args.pseudo_rounds + 1):
        pseudo = harvest(model, unlabeled, dictionary, cfg.pseudo_threshold, source_round=round_index)
        save_pseudo_dataset(pseudo, out_dir / f"pseudo_round{round_index}.json")
        print(f"round {round_index}: harvested {len(pseudo)} / {len(unlabeled)} unlabeled samples")
        model, _ = merge_and_retrain(
            train_samples, pseudo, dev_samples, dictionary, model.tokenizer, cfg, strategies,
            initial_encoder=initial_encoder,
            encoder_cfg=model.encoder.cfg,
            log_path=out_dir / f"train_log_round{round_index}.jsonl",
        )
    provenance = {
        "tapt": bool(provenance.get("tapt")) or args.from_tapt is not None,
        "adversarial": strategies.adversarial,
        "dynamic_negatives": strategies.dynamic_negatives,
        "pseudo_rounds": args.pseudo_rounds,
        "seed": cfg.seed,
    }
    save_checkpoint(out_dir / "model.npz", model, provenance)
    metrics = evaluate(dev_samples, predict_all(dev_samples, model, dictionary))
    save_metrics(metrics, out_dir / "dev_metrics.json")
    print(f"model written to {out_dir / 'model.npz'} (dev macro F1 {metrics.f1:.4f})")
    return EXIT_OK


def cmd_predict(args) -> int:
    model_path = _require(args.model, "model checkpoint")
    data_path = _require(args.data, "dataset")
    dict_path = _require(args.dict, "dictionary")
    out_dir = Path(args.out_dir)
    dictionary = load_dictionary(dict_path)
    samples = load_dataset(data_path)
    model, _ = load_checkpoint(model_path)
    _write_manifest(out_dir, "predict",
                    {"model": model_path, "data": data_path, "dict": dict_path},
                    {"predictions": "predictions.json"}, {})
    predictions = predict_all(samples, model, dictionary)
    save_predictions(predictions, out_dir / "predictions.json")
    print(f"predictions written to {out_dir / 'predictions.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    data_path = _require(args.data, "labeled dataset")
    out_dir = Path(args.out_dir)
    inputs = {"data": data_path}
    extra = {"seed": args.seed if args.seed is not None else 0}

    if args.baseline == "mf":
        train_path = _require(args.train, "training dataset")
        dict_path = _require(args.dict, "dictionary")
        dictionary = load_dictionary(dict_path)
        samples = _load_validated(data_path, dictionary)
        train_samples = _load_validated(train_path, dictionary)
        inputs.update({"train": train_path, "dict": dict_path})
        predictions = mf_predictions(train_samples, samples, dictionary)
        extra["baseline"] = "mf"
    else:
        predictions_path = _require(args.predictions, "predictions file")
        samples = load_dataset(data_path)
        predictions = load_predictions(predictions_path)
        inputs["predictions"] = predictions_path

    outputs = {"metrics": "metrics.json"}
    if args.error_report:
        outputs["error_report"] = "error_report.json"
        outputs["error_report_text"] = "error_report.txt"
    _write_manifest(out_dir, "eval", inputs, outputs, extra)

    metrics = evaluate(samples, predictions)
    save_metrics(metrics, out_dir / "metrics.json")
    if args.error_report:
        records = error_report(samples, predictions, args.error_report, extra["seed"])
        save_error_report(records, out_dir / "error_report.json", out_dir / "error_report.txt")
        print(f"error report: {len(records)} record(s)")
    print(f"macro F1 {metrics.f1:.4f}  precision {metrics.precision:.4f}  "
          f"recall {metrics.recall:.4f}  accuracy {metrics.micro_accuracy:.4f}")
    return EXIT_OK


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acrodis", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics and histograms")
    p.add_argument("--data", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plot", action="store_true", help="also render bar charts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("tapt", help="task-adaptive masked-token pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-count", type=int, default=1)
    _add_config_flags(p)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_tapt)

    p = sub.add_parser("train", help="train the binary pair classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-count", type=int, default=1)
    _add_config_flags(p)
    _add_encoder_flags(p)
    _add_strategy_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pseudo", help="pseudo-label unlabeled data and retrain")
    p.add_argument("--model", required=True)
    p.add_argument("--unlabeled", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pseudo-rounds", type=int, default=1)
    _add_config_flags(p)
    _add_strategy_flags(p)
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("predict", help="score candidates for every sample")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="metrics for predictions or the MF baseline")
    p.add_argument("--data", required=True, help="labeled dataset to score against")
    p.add_argument("--predictions", help="predictions file from the predict command")
    p.add_argument("--baseline", choices=["mf"], help="evaluate a baseline instead")
    p.add_argument("--train", help="training dataset (required for --baseline mf)")
    p.add_argument("--dict", help="dictionary (required for --baseline mf)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--error-report", type=int, default=0, metavar="N",
                   help="also sample up to N misclassified cases")
    p.add_argument("--seed", type=int, default=None, help="error-report sampling seed")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.baseline and not args.predictions:
        parser.error("eval needs --predictions or --baseline mf")
    if args.command == "eval" and args.baseline == "mf" and (not args.train or not args.dict):
        parser.error("--baseline mf needs --train and --dict")
    try:
        return args.func(args)
    except MissingArtifactError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (DataParseError, DataValidationError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
