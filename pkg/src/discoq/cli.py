"""Command-line interface: ``gen-data``, ``train``, ``eval``, ``report``, ``selftest``.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys


from . import __version__, kernels
from .dataset import SplitError, default_split, generate, load_split, read_records, write_records
from .encoders import FeatureFileError, load_features
from .runner import TrainConfig, TrainingError, evaluate, load_checkpoint, save_checkpoint, stream, train

log = logging.getLogger("discoq")


class ValidationFailure(Exception):
    pass


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discoq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a dataset as JSON Lines")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--features", choices=["mhe", "synthetic", "external"], default="mhe")
    g.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma added to MHE vectors")
    g.add_argument("--feature-file", help="CSV of external features (id,f0,...)")
    g.add_argument("--features-out", help="write vectors to this CSV and reference them by id")
    g.add_argument("--split", help="JSON caption -> split label (default: shipped split)")
    g.add_argument("--images", type=int, default=20)

    t = sub.add_parser("train", help="train and print a RunReport as JSON")
    t.add_argument("--config", help="JSON file mirroring TrainConfig; flags override it")
    t.add_argument("--model", choices=["quantum", "classical"])
    t.add_argument("--encoder", choices=["mhe", "angle", "amplitude"])
    t.add_argument("--alignment", choices=["box", "widen"])
    t.add_argument("--features", choices=["mhe", "synthetic", "external"])
    t.add_argument("--noise", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--seeds", type=_seeds)
    t.add_argument("--optimizer", choices=["adam", "sgd"])
    t.add_argument("--layers", type=int)
    t.add_argument("--box-layers", type=int, dest="box_layers")
    t.add_argument("--angle-qubits", type=int, dest="angle_qubits")
    t.add_argument("--amplitude-qubits", type=int, dest="amplitude_qubits")
    t.add_argument("--data", help="JSON Lines dataset (default: generate in memory)")
    t.add_argument("--feature-file", dest="features_path")
    t.add_argument("--split")
    t.add_argument("--data-seed", type=int, dest="data_seed")
    t.add_argument("--out", help="also write the report JSON here")
    t.add_argument("--checkpoint", help="write the selected seed's parameters here")

    e = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--feature-file")
    e.add_argument("--split", default="ood_test", choices=["train", "id_val", "ood_val", "ood_test", "all"])

    r = sub.add_parser("report", help="render accuracy tables from RunReport files")
    r.add_argument("reports", nargs="+")
    r.add_argument("--csv", help="also write the table as CSV")
    r.add_argument("--metric", choices=["image", "pair"], default="image")

    sub.add_parser("selftest", help="run the oracle checks")
    return p


_TRAIN_KEYS = ("model", "encoder", "alignment", "features", "noise", "epochs", "lr", "batch", "seeds",
               "optimizer", "layers", "box_layers", "angle_qubits", "amplitude_qubits", "data",
               "features_path", "split", "data_seed")


def _train_config(args) -> TrainConfig:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    for key in _TRAIN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    # classical defaults: 50 epochs, lr 0.01 on MHE and 0.1 on image embeddings
    if raw.get("model") == "classical":
        raw.setdefault("epochs", 50)
        raw.setdefault("lr", 0.01 if raw.get("features", "mhe") == "mhe" else 0.1)
    return TrainConfig.from_dict(raw)


def cmd_gen_data(args) -> int:
    split = load_split(args.split) if args.split else default_split()
    if args.features == "external" and not args.feature_file:
        raise ValidationFailure("--features external needs --feature-file")
    feature_map = load_features(args.feature_file) if args.features == "external" else None
    records = generate(split, features=args.features, noise=args.noise, images_per_caption=args.images,
                       rng=stream(args.seed, "data"), feature_map=feature_map)
    write_records(args.out, records, args.features_out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)

    def progress(seed, epoch, loss, metrics):
        log.info("seed %d epoch %d loss %.6f train %.4f ood_val %.4f", seed, epoch, loss,
                 metrics.get("train", {}).get("image", float("nan")),
                 metrics.get("ood_val", {}).get("image", float("nan")))

    report, run = train(config, progress=progress)
    if config.model == "quantum":
        per = report.params_per_caption
        counts = sorted(set(per.values()))
        print(f"trainable parameters: {report.n_params} total; per caption: "
              f"{', '.join(map(str, counts))}", file=sys.stderr)
    text = json.dumps(report.to_json(), indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.checkpoint:
        save_checkpoint(args.checkpoint, run, config)
    return 0


def cmd_eval(args) -> int:
    records = read_records(args.data, args.feature_file)
    run, _ = load_checkpoint(args.checkpoint, records)
    metrics = evaluate(run, records)
    splits = list(metrics) if args.split == "all" else [args.split]
    for s in splits:
        if s not in metrics:
            raise ValidationFailure(f"no records in split {s!r}")
        m = metrics[s]
        print(f"{s}: accuracy {m['image']:.4f} (pair {m['pair']:.4f}, n={m['n']})")
    return 0


def _row_label(cfg: dict) -> tuple[str, str]:
    if cfg["model"] == "classical":
        src = "MHE" if cfg["features"] == "mhe" else cfg["features"]
        return "Classical-DisCoCat", src + ("-noise" if cfg.get("noise") else "")
    src = "MHE" if cfg["encoder"] == "mhe" else cfg["features"].capitalize()
    method = {"mhe": "with noise" if cfg.get("noise") else "without noise",
              "angle": "Angle Enc.", "amplitude": "Amplitude Enc."}[cfg["encoder"]]
    return f"Quantum-{src}", method


def render_tables(reports: list[dict], metric: str = "image") -> tuple[str, list[list[str]]]:
    """Text tables grouped by alignment, plus the flat CSV rows."""
    header = ["Models", "Method", "Train", "Valid", "Test"]
    groups = {"box": "Alignment: trainable image box",
              "widen": "Alignment: widened sentence wire"}
    classical = [r for r in reports if r["config"]["model"] == "classical"]
    csv_rows = [["Alignment"] + header]
    out = io.StringIO()
    for align, title in groups.items():
        quantum = [r for r in reports if r["config"]["model"] == "quantum" and r["config"]["alignment"] == align]
        if not quantum:
            continue
        rows = []
        for r in quantum + classical:
            sel = r["selected"]
            cells = [f"{100 * sel.get(s, {}).get(metric, float('nan')):.2f}%" for s in ("train", "ood_val", "ood_test")]
            rows.append(list(_row_label(r["config"])) + cells)
            csv_rows.append([align] + rows[-1])
        widths = [max(len(x[i]) for x in rows + [header]) for i in range(len(header))]
        line = "  ".join("-" * w for w in widths)
        out.write(title + "\n" + line + "\n")
        out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)) + "\n" + line + "\n")
        for row in rows:
            out.write("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))) + "\n")
        out.write(line + "\n\n")
    if len(csv_rows) == 1:
        # classical-only input still gets one table
        for r in classical:
            sel = r["selected"]
            csv_rows.append(["-"] + list(_row_label(r["config"])) +
                            [f"{100 * sel.get(s, {}).get(metric, float('nan')):.2f}%" for s in ("train", "ood_val", "ood_test")])
        out.write("\n".join("  ".join(row[1:]) for row in csv_rows[1:]) + "\n")
    return out.getvalue(), csv_rows


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    text, rows = render_tables(reports, args.metric)
    print(text, end="")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "report": cmd_report, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return COMMANDS[args.command](args)
    except (ValidationFailure, SplitError, FeatureFileError, TrainingError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
