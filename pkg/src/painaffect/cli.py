"""Command-line front end.

    painaffect synth   --config synth.cfg --out corpus/
    painaffect convert --input export/ --out corpus/
    painaffect run     --corpus corpus/ --case 5 --modality all --clf rf --scheme known --out reports/
    painaffect report  reports/*.json --out tables/

Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import re
import sys
from pathlib import Path

from . import __version__
from .dataset import (AFFECT_STATES, Corpus, Gender, RawState, SubjectRecord, extract_windows,
                      load_corpus, merge_datasets, store_corpus)
from .errors import PainAffectError, ParameterError
from .learners import THREADS_ENV, ClassifierSpec, default_threads
from .protocol import (REPORT_SCHEMA, CaseId, ExperimentPlan, FeatureStore, Known, PersonSpecific,
                       Unknown, run_experiment)
from .signal import CHANNEL_ORDER, Channel, PreprocessConfig, RawTrace
from .synthgen import GeneratorConfig, generate_cohort


class UsageError(Exception):
    """Bad command-line or config input (exit code 2)."""


# ------------------------------------------------------------- config files

def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def _typed(cfg: dict, key: str, cast, default=None):
    if key not in cfg:
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise UsageError(f"config field {key}: cannot parse {cfg[key]!r}") from None


def _bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


# key in the synth config file -> GeneratorConfig field
SYNTH_KEYS = {
    "n_subjects": ("n_subjects", int),
    "female_count": ("female_count", int),
    "windows_per_state": ("windows_per_state", int),
    "sample_rate_hz": ("sample_rate", int),
    "master_seed": ("master_seed", int),
    "affect_overlap_fraction": ("affect_overlap", float),
    "subject_spread": ("subject_spread", float),
    "n_non_responders": ("n_non_responders", int),
}


def generator_config(cfg: dict) -> GeneratorConfig:
    unknown = sorted(set(cfg) - set(SYNTH_KEYS))
    if unknown:
        raise UsageError(f"unknown config field(s): {', '.join(unknown)}")
    kwargs = {field: _typed(cfg, key, cast) for key, (field, cast) in SYNTH_KEYS.items()
              if key in cfg}
    try:
        return GeneratorConfig(**kwargs)
    except ParameterError as exc:
        raise UsageError(f"invalid config: {exc}") from None


# ------------------------------------------------------------------ synth

def cmd_synth(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["master_seed"] = str(args.seed)
    config = generator_config(cfg)
    corpus = generate_cohort(config, n_jobs=args.threads)
    store_corpus(corpus, args.out)
    genders = [s.gender for s in corpus.subjects.values()]
    print(f"subjects: {len(corpus.subjects)} ({genders.count(Gender.Female)} female, "
          f"{genders.count(Gender.Male)} male)")
    print(f"windows: {len(corpus)}")
    print(f"written to {args.out}")
    return 0


# ---------------------------------------------------------------- convert

_PAIN_NAMES = {"BL1": RawState.BL, "BL": RawState.BL, "PA1": RawState.PL1, "PA2": RawState.PL2,
               "PA3": RawState.PL3, "PA4": RawState.PL4, "PL1": RawState.PL1,
               "PL2": RawState.PL2, "PL3": RawState.PL3, "PL4": RawState.PL4}
_EMOTION_NAMES = {"amusement": RawState.Amusement, "anger": RawState.Anger,
                  "disgust": RawState.Disgust, "fear": RawState.Fear, "sad": RawState.Sadness,
                  "sadness": RawState.Sadness}
_COLUMN_NAMES = {"gsr": Channel.EDA, "eda": Channel.EDA, "ecg": Channel.ECG,
                 "emg_trapezius": Channel.EMG, "emg": Channel.EMG}
_FILE_RE = re.compile(r"^(?P<subject>.+?)-(?P<state>[A-Za-z0-9]+)-(?P<n>\d+)\.(csv|tsv|txt)$")


def _read_recording(path: Path, sample_rate: int) -> dict:
    text = path.read_text(encoding="utf-8")
    dialect = "excel-tab" if "\t" in text.split("\n", 1)[0] else "excel"
    rows = list(csv.reader(io.StringIO(text), dialect=dialect))
    if not rows:
        raise PainAffectError(f"{path}: empty recording")
    header = [h.strip().lower() for h in rows[0]]
    columns = {}
    for i, name in enumerate(header):
        channel = _COLUMN_NAMES.get(name)
        if channel is not None and channel not in columns:
            columns[channel] = i
    missing = [c.value for c in CHANNEL_ORDER if c not in columns]
    if missing:
        raise PainAffectError(f"{path}: no column for {', '.join(missing)}")
    data = {c: [] for c in columns}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        for channel, i in columns.items():
            try:
                data[channel].append(float(row[i]))
            except (ValueError, IndexError):
                raise PainAffectError(f"{path}:{lineno}: bad {channel.value} value") from None
    return {c: RawTrace(c, sample_rate, v) for c, v in data.items()}


def convert_export(root: Path, sample_rate: int = 512, non_responders_file: Path | None = None,
                   stride_seconds: float | None = None) -> Corpus:
    """Build a curated corpus from a bioVid-shaped export directory.

    Layout: ``subjects.csv`` (subject_id, age, gender), ``pain/<subject>/`` and
    ``emotion/<subject>/`` holding ``<subject>-<STATE>-<n>.csv`` recordings with
    a header naming gsr/eda, ecg and emg_trapezius columns, and optionally
    ``non_responders.txt`` (one subject id per line).
    """
    root = Path(root)
    try:
        with open(root / "subjects.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise PainAffectError(f"{root / 'subjects.csv'}: {exc.strerror}") from None
    subjects = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            gender = {"f": "Female", "m": "Male", "w": "Female"}.get(
                row["gender"].strip().lower(), row["gender"].strip().capitalize())
            subjects[row["subject_id"].strip()] = SubjectRecord(
                row["subject_id"].strip(), float(row["age"]), Gender(gender))
        except (KeyError, ValueError, AttributeError):
            raise PainAffectError(f"{root / 'subjects.csv'}:{lineno}: bad subject row") from None

    def subject_dirs(part):
        base = root / part
        return {p.name: p for p in sorted(base.iterdir()) if p.is_dir()} if base.is_dir() else {}

    pain_dirs, emotion_dirs = subject_dirs("pain"), subject_dirs("emotion")
    nr_path = non_responders_file or root / "non_responders.txt"
    non_responders = set()
    if Path(nr_path).is_file():
        non_responders = {ln.strip() for ln in Path(nr_path).read_text().splitlines() if ln.strip()}
    keep = [s for s in merge_datasets(pain_dirs, emotion_dirs, non_responders) if s in subjects]

    windows = []
    for sid in keep:
        for part, names in (("pain", _PAIN_NAMES), ("emotion", _EMOTION_NAMES)):
            directory = (pain_dirs if part == "pain" else emotion_dirs)[sid]
            for path in sorted(directory.iterdir()):
                m = _FILE_RE.match(path.name)
                if not m:
                    continue
                key = m["state"] if part == "pain" else m["state"].lower()
                state = names.get(key)
                if state is None:
                    continue
                recording = _read_recording(path, sample_rate)
                windows += extract_windows(recording, sid, state, stride_seconds=stride_seconds,
                                           id_prefix=f"{state.value}-{part[0]}{int(m['n']):03d}")
    return Corpus({sid: subjects[sid] for sid in keep}, windows)


def cmd_convert(args) -> int:
    corpus = convert_export(Path(args.input), args.sample_rate,
                            Path(args.non_responders) if args.non_responders else None,
                            args.stride)
    store_corpus(corpus, args.out)
    print(f"subjects: {len(corpus.subjects)}")
    print(f"windows: {len(corpus)}")
    return 0


# -------------------------------------------------------------------- run

MODALITY_SETS = {"eda": ("EDA",), "ecg": ("ECG",), "emg": ("EMG",), "all": ("EDA", "ECG", "EMG")}
FIGURE1_CASES = ("-1", "0", "5", "6")
FIGURE1_MODALITIES = ("eda", "ecg", "emg", "all")
FIGURE1_CLASSIFIERS = ("knn", "rf", "gbt")


def _modality_tuple(text: str) -> tuple:
    key = text.strip().lower()
    if key in MODALITY_SETS:
        return MODALITY_SETS[key]
    parts = [p for p in re.split(r"[+,]", key) if p]
    try:
        return tuple(c.value for c in CHANNEL_ORDER if c.value.lower() in parts) if all(
            Channel(p.upper()) for p in parts) else ()
    except ValueError:
        raise UsageError(f"unknown modality {text!r}; use eda, ecg, emg, all or e.g. eda+emg") from None


def _modality_name(mods: tuple) -> str:
    for name, combo in MODALITY_SETS.items():
        if combo == tuple(mods):
            return name
    return "+".join(m.lower() for m in mods)


def _listify(value) -> list:
    if value is None:
        return []
    if isinstance(value, str):
        return [v for v in re.split(r"[\s,]+", value) if v]
    return list(value)


def resolve_run(args) -> dict:
    """Merge config file and flags into a fully validated run description."""
    cfg = read_config(args.config) if args.config else {}
    allowed = {"corpus", "out", "cases", "scheme", "modalities", "classifiers", "context",
               "master_seed", "sg_window_s", "sg_order", "ds_window_s", "overlap_fraction",
               "knn_k", "rf_trees", "gbt_rounds", "gbt_learning_rate", "train_fraction",
               "n_seeds", "held_out_subjects", "n_repeats"}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise UsageError(f"unknown config field(s): {', '.join(unknown)}")

    def pick(flag, key, cast=str, default=None):
        if flag is not None:
            return flag
        return _typed(cfg, key, cast, default)

    corpus = pick(args.corpus, "corpus")
    out = pick(args.out, "out")
    if not corpus or not out:
        raise UsageError("--corpus and --out are required (flag or config)")
    cases = _listify(args.case) or _listify(cfg.get("cases")) or []
    mods = _listify(args.modality) or _listify(cfg.get("modalities")) or []
    clfs = _listify(args.clf) or _listify(cfg.get("classifiers")) or []
    if args.all_figure1:
        cases = cases or list(FIGURE1_CASES)
        mods = mods or list(FIGURE1_MODALITIES)
        clfs = clfs or list(FIGURE1_CLASSIFIERS)
    if not (cases and mods and clfs):
        raise UsageError("need at least one --case, --modality and --clf (or --all-figure1)")
    try:
        cases = [CaseId.parse(c) for c in cases]
        scheme_name = pick(args.scheme, "scheme", str, "known").lower()
        train_fraction = pick(args.train_fraction, "train_fraction", float, 0.7)
        if scheme_name == "known":
            scheme = Known(train_fraction, pick(args.n_seeds, "n_seeds", int, 5))
        elif scheme_name == "unknown":
            scheme = Unknown(pick(args.held_out, "held_out_subjects", int, 15),
                             pick(args.n_repeats, "n_repeats", int, 5))
        elif scheme_name in ("personal", "person", "person-specific"):
            scheme = PersonSpecific(train_fraction, pick(args.n_seeds, "n_seeds", int, 5))
        else:
            raise UsageError(f"unknown scheme {scheme_name!r}; use known, unknown or personal")
        specs = [ClassifierSpec(kind, knn_k=pick(args.knn_k, "knn_k", int, 5),
                                rf_trees=pick(args.rf_trees, "rf_trees", int, 750),
                                gbt_rounds=pick(args.gbt_rounds, "gbt_rounds", int, 750),
                                gbt_learning_rate=pick(args.gbt_learning_rate,
                                                       "gbt_learning_rate", float, 0.1))
                 for kind in clfs]
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    context = args.context if args.context is not None else _typed(cfg, "context", _bool, False)
    return {
        "corpus": corpus, "out": out, "cases": cases, "scheme": scheme,
        "modalities": [_modality_tuple(m) for m in mods], "specs": specs,
        "context": context, "master_seed": pick(args.seed, "master_seed", int, 0),
        "sg_seconds": pick(args.sg_window, "sg_window_s", float, 0.25),
        "sg_order": pick(args.sg_order, "sg_order", int, 3),
        "ds_seconds": pick(args.ds_window, "ds_window_s", float, 0.25),
        "overlap": pick(args.overlap, "overlap_fraction", float, 0.8),
    }


def _manifest_digest(corpus_dir: Path) -> str:
    return hashlib.sha256((Path(corpus_dir) / "manifest.jsonl").read_bytes()).hexdigest()


def report_name(plan: ExperimentPlan) -> str:
    ctx = "_ctx" if plan.use_context else ""
    case = plan.case.value.replace("-", "m")
    return (f"{plan.scheme.name}_case{case}_{_modality_name(tuple(m.value for m in plan.modalities))}"
            f"_{plan.classifier.kind.lower()}{ctx}.json")


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _existing_hash(path: Path) -> str | None:
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("config_hash")
    except (OSError, ValueError, AttributeError):
        return None


def cmd_run(args) -> int:
    run = resolve_run(args)
    if not Path(run["corpus"], "manifest.jsonl").is_file():
        raise PainAffectError(f"corpus not found: {run['corpus']}")
    corpus = load_corpus(run["corpus"])
    if not corpus.windows:
        raise PainAffectError("corpus has no windows")
    rate = corpus.windows[0].sample_rate
    try:
        pre = PreprocessConfig.for_rate(rate, run["sg_seconds"], run["ds_seconds"],
                                        run["sg_order"], run["overlap"])
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    out = Path(run["out"])
    out.mkdir(parents=True, exist_ok=True)
    extra = {"corpus_manifest_sha256": _manifest_digest(run["corpus"])}
    features = FeatureStore(corpus, pre)
    for case in run["cases"]:
        for mods in run["modalities"]:
            for spec in run["specs"]:
                plan = ExperimentPlan(case, run["scheme"], mods, spec, run["context"], pre,
                                      run["master_seed"])
                path = out / report_name(plan)
                digest = plan.config_hash(extra)
                if _existing_hash(path) == digest:
                    print(f"{path}: up to date")
                    continue
                report = run_experiment(plan, corpus, features, n_jobs=args.threads,
                                        hash_extra=extra)
                doc = report.to_dict()
                doc["plan"]["corpus_manifest_sha256"] = extra["corpus_manifest_sha256"]
                _write_atomic(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")
                agg = report.aggregate
                print(f"{path}: f1_macro {agg['mean']:.4f} +/- {agg['std']:.4f} "
                      f"({agg['n']} entries)")
    return 0


# ----------------------------------------------------------------- report

FIGURE1_HEADER = ["modality", "case", "classifier", "mean_f1", "std_f1", "scheme", "context"]
FIGURE4_HEADER = ["subject", "case", "classifier", "f1", "modality", "context"]


def _load_report(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise PainAffectError(f"{path}: cannot read report ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != REPORT_SCHEMA:
        raise PainAffectError(f"{path}: schema version {doc.get('schema_version') if isinstance(doc, dict) else None!r}"
                              f" does not match {REPORT_SCHEMA}")
    return doc


def report_tables(paths) -> tuple[list, list]:
    fig1, fig4 = [], []
    for path in paths:
        doc = _load_report(path)
        plan = doc["plan"]
        modality = _modality_name(tuple(plan["modalities"]))
        clf = plan["classifier"]["kind"].lower()
        fig1.append([modality, plan["case"], clf, repr(doc["aggregate"]["mean"]),
                     repr(doc["aggregate"]["std"]), plan["scheme"]["name"],
                     int(plan["use_context"])])
        if plan["scheme"]["name"] == "personal":
            per_subject = {}
            for entry in doc["entries"]:
                for s in entry["subjects"]:
                    per_subject.setdefault(s["subject"], []).append(s["f1_macro"])
            for sid in sorted(per_subject):
                vals = per_subject[sid]
                fig4.append([sid, plan["case"], clf, repr(sum(vals) / len(vals)), modality,
                             int(plan["use_context"])])
    return fig1, fig4


def cmd_report(args) -> int:
    fig1, fig4 = report_tables(args.reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, header, rows in (("figure1.csv", FIGURE1_HEADER, fig1),
                               ("figure4.csv", FIGURE4_HEADER, fig4)):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        _write_atomic(out / name, buf.getvalue())
    print(f"figure1.csv: {len(fig1)} rows; figure4.csv: {len(fig4)} rows")
    return 0


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="painaffect", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--config", help="key = value file (see README)")
    s.add_argument("--out", required=True, help="output corpus directory")
    s.add_argument("--seed", type=int, help="override master_seed")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("convert", help="convert a bioVid-shaped export into a corpus")
    c.add_argument("--input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--sample-rate", type=int, default=512, help="samples per second")
    c.add_argument("--non-responders", help="file with one subject id per line")
    c.add_argument("--stride", type=float, help="window stride in seconds (default 5.5)")
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("run", help="run experiment plans and write JSON reports")
    r.add_argument("--config", help="key = value run config")
    r.add_argument("--corpus")
    r.add_argument("--out", help="report directory")
    r.add_argument("--case", nargs="+", help="-1, 0, 5, 6")
    r.add_argument("--modality", nargs="+", help="eda, ecg, emg, all, or eda+emg style")
    r.add_argument("--clf", nargs="+", help="knn, rf, gbt (xgb accepted)")
    r.add_argument("--scheme", help="known (default), unknown or personal")
    r.add_argument("--context", action="store_true", default=None,
                   help="append demographic context features")
    r.add_argument("--seed", type=int, help="master seed (default 0)")
    r.add_argument("--all-figure1", action="store_true",
                   help="expand to every case x modality x classifier")
    r.add_argument("--knn-k", type=int)
    r.add_argument("--rf-trees", type=int)
    r.add_argument("--gbt-rounds", type=int)
    r.add_argument("--gbt-learning-rate", type=float)
    r.add_argument("--train-fraction", type=float)
    r.add_argument("--n-seeds", type=int)
    r.add_argument("--held-out", type=int)
    r.add_argument("--n-repeats", type=int)
    r.add_argument("--sg-window", type=float, help="seconds")
    r.add_argument("--sg-order", type=int)
    r.add_argument("--ds-window", type=float, help="seconds")
    r.add_argument("--overlap", type=float, help="fraction in [0, 1)")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("report", help="turn reports into plot-ready CSV tables")
    t.add_argument("reports", nargs="*")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is None:
            args.threads = default_threads()
        elif args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"painaffect: error: {exc}", file=sys.stderr)
        return 2
    except PainAffectError as exc:
        print(f"painaffect: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"painaffect: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
