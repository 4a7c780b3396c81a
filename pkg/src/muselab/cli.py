"""Command-line entry point binding the pipelines together.

Subcommands: prompts, screen, music-features, preprocess, analyze,
classify, serve, simulate. All run offline; `serve` starts the session
HTTP service. Errors exit nonzero with a machine-readable JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import audio_features, pipeline, recognition, screening
from .audio import load_wav
from .config import PipelineConfig
from .demo import build_demo_corpus
from .errors import InputError, MuselabError
from .promptgen import DEFAULT_TEMPLATE, PromptLexicon, enumerate_prompts, write_manifest
from .quadrants import ALL_QUADRANTS, EmotionQuadrant
from .session import build_plan, export_session_bundle, simulate_device, synthetic_library
from .session.store import SessionEngine, find_session_dirs, load_bundle

logger = logging.getLogger("muselab")


class _JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps(
            {"level": record.levelname.lower(), "logger": record.name, "message": record.getMessage()}
        )


def _setup_logging(log_json: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLogFormatter() if log_json else logging.Formatter("%(levelname)s %(message)s"))
    logging.basicConfig(level=logging.INFO, handlers=[handler], force=True)


def _config_from_args(args) -> PipelineConfig:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    config = PipelineConfig.load(getattr(args, "config", None), overrides)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_prompts(args) -> int:
    config = _config_from_args(args)
    lexicon = PromptLexicon.from_file(args.lexicon) if args.lexicon else PromptLexicon.default()
    quadrants = list(ALL_QUADRANTS) if args.all_quadrants else [EmotionQuadrant(args.quadrant)]
    specs = []
    for quadrant in quadrants:
        specs.extend(enumerate_prompts(lexicon, quadrant, args.count, config.seed, template=args.template))
    out = _out_dir(args) / "prompts.jsonl"
    write_manifest(specs, out)
    logger.info("wrote %d prompts to %s", len(specs), out)
    print(f"{len(specs)} prompts -> {out}")
    return 0


def _load_clip_manifest(clips_dir: Path) -> dict:
    manifest_path = clips_dir / "clips.json"
    if not manifest_path.exists():
        raise InputError(f"no clips.json under {clips_dir}")
    return json.loads(manifest_path.read_text())


def _clip_records(clips_dir: Path, jobs: int) -> list[screening.ClipRecord]:
    manifest = _load_clip_manifest(clips_dir)

    def load_one(item):
        clip_id, meta = item
        quadrant = EmotionQuadrant(meta if isinstance(meta, str) else meta["quadrant"])
        file_name = f"{clip_id}.wav" if isinstance(meta, str) else meta.get("file", f"{clip_id}.wav")
        return screening.ClipRecord(clip_id=clip_id, quadrant=quadrant, audio=load_wav(clips_dir / file_name))

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return sorted(pool.map(load_one, sorted(manifest.items())), key=lambda c: c.clip_id)


def cmd_screen(args) -> int:
    config = _config_from_args(args)
    thresholds = config.screening_thresholds()
    overrides = {
        "spike_threshold": args.spike_threshold,
        "silence_rms_db": args.silence_rms_db,
        "silence_max_s": args.silence_max_s,
        "frame_ms": args.frame_ms,
    }
    thresholds = replace(thresholds, **{k: v for k, v in overrides.items() if v is not None})
    clips = _clip_records(Path(args.clips), args.jobs)
    ratings = screening.load_ratings_csv(args.ratings)
    report = screening.screen_library(clips, ratings, thresholds)
    out = _out_dir(args) / "screening_report.json"
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    counts = {q: len(ids) for q, ids in report.selected.items()}
    print(f"technical pass: {len(report.retained_technical)}/{len(clips)}; selected per quadrant: {counts}")
    print(f"report -> {out}")
    return 0


def cmd_music_features(args) -> int:
    clips_dir = Path(args.clips)
    manifest = _load_clip_manifest(clips_dir)

    def extract(item):
        clip_id, meta = item
        quadrant = EmotionQuadrant(meta if isinstance(meta, str) else meta["quadrant"])
        file_name = f"{clip_id}.wav" if isinstance(meta, str) else meta.get("file", f"{clip_id}.wav")
        return audio_features.extract_features(load_wav(clips_dir / file_name), clip_id, quadrant)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        corpus = sorted(pool.map(extract, sorted(manifest.items())), key=lambda f: f.clip_id)
    corpus = audio_features.scale_features(corpus)

    out_dir = _out_dir(args)
    feature_csv = out_dir / "music_features.csv"
    with open(feature_csv, "w") as handle:
        handle.write("clip_id,quadrant,tempo,articulation,mode,pitch_range,melodic_direction\n")
        for f in corpus:
            cells = [f.clip_id, f.quadrant.value if f.quadrant else ""]
            cells += [f"{f.scaled[name]:.6f}" for name in audio_features.FEATURE_NAMES]
            handle.write(",".join(cells) + "\n")

    by_quadrant = {}
    for f in corpus:
        by_quadrant.setdefault(f.quadrant, []).append(f)
    stats = {
        name: {"F": result[0], "p": result[1]}
        for name, result in audio_features.feature_group_anova(by_quadrant).items()
    }
    stats_path = out_dir / "music_features_anova.json"
    stats_path.write_text(json.dumps(pipeline.json_safe(stats), indent=2, sort_keys=True) + "\n")
    print(f"{len(corpus)} clips -> {feature_csv}")
    for name, cell in stats.items():
        print(f"  {name}: F={cell['F']:.3f} p={cell['p']:.3g}")
    return 0


def cmd_preprocess(args) -> int:
    config = _config_from_args(args)
    sessions = pipeline.preprocess_dataset(
        args.data,
        _out_dir(args),
        optical_constants=config.optical_constants(),
        eeg_baseline=config.values["eeg_baseline"],
        ppg_source=config.values["ppg_source"],
    )
    n_trials = sum(len(s.trials) for s in sessions)
    print(f"preprocessed {len(sessions)} sessions, {n_trials} trials -> {args.out_dir}")
    return 0


def cmd_analyze(args) -> int:
    config = _config_from_args(args)
    out_dir = _out_dir(args)
    sessions = []
    for directory in find_session_dirs(args.data):
        sessions.append(
            pipeline.preprocess_session(
                load_bundle(directory),
                optical_constants=config.optical_constants(),
                eeg_baseline=config.values["eeg_baseline"],
                ppg_source=config.values["ppg_source"],
            )
        )
    if not sessions:
        raise InputError(f"no session bundles found under {args.data}")

    n_rows = pipeline.write_features_csv(sessions, out_dir / "features.csv")
    trials, excluded = pipeline.collect_trial_features(sessions)
    recognition.save_features_csv(trials, out_dir / "trial_features.csv")
    stats = pipeline.study_statistics(sessions)
    (out_dir / "stats.json").write_text(json.dumps(pipeline.json_safe(stats), indent=2, sort_keys=True) + "\n")
    if excluded:
        (out_dir / "excluded_trials.json").write_text(json.dumps(excluded, indent=2) + "\n")
    print(f"features: {n_rows} rows -> {out_dir / 'features.csv'}")
    print(f"classifier table: {len(trials)} trials ({len(excluded)} excluded) -> {out_dir / 'trial_features.csv'}")
    print(f"stats -> {out_dir / 'stats.json'}")
    anova = stats.get("band_power_anova", {})
    for band, cell in anova.items():
        if cell:
            print(f"  {band}: F={cell['F']:.3f} p={cell['p']:.3g}")
    return 0


def cmd_classify(args) -> int:
    config = _config_from_args(args)
    out_dir = _out_dir(args)
    grid = pipeline.run_classification(args.features, k=config.values["classifier"]["kfold"], seed=config.seed)
    (out_dir / "classification_report.json").write_text(
        json.dumps(recognition.report_to_dict(grid), indent=2, sort_keys=True) + "\n"
    )
    markdown = recognition.report_to_markdown(grid)
    (out_dir / "classification_report.md").write_text(markdown + "\n")
    print(markdown)
    return 0


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    out_dir = _out_dir(args)
    profile = config.simulation_profile()
    session_config = config.session_config()
    library = synthetic_library()
    started = time.time()
    for i in range(args.subjects):
        participant_id = f"P{i + 1:02d}"
        plan = build_plan(participant_id, library, config.seed + i)
        sessions = simulate_device(plan, profile, seed=config.seed + i, config=session_config)
        for session in sessions:
            export_session_bundle(
                out_dir,
                participant_id,
                session.session_index,
                eeg=session.eeg,
                fnirs=session.fnirs,
                timeline=session.timeline,
                trials=session.trials,
                clip_quadrants=plan.clip_quadrants(),
                source="simulate",
            )
        logger.info("simulated %s", participant_id)
    if args.with_clips:
        build_demo_corpus(out_dir / "clips", per_quadrant=args.clips_per_quadrant, seed=config.seed)
        print(f"demo clip corpus -> {out_dir / 'clips'}")
    print(f"simulated {args.subjects} subjects in {time.time() - started:.1f} s -> {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ClipStore, create_app

    config = _config_from_args(args)
    engine = SessionEngine.recover(args.data_dir, config=config.session_config())
    clip_store = ClipStore(args.clips) if args.clips else None
    app = create_app(engine, clip_store)
    logger.info("serving on %s:%d (sessions recovered: %d)", args.host, args.port, len(engine.sessions))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muselab", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override file values")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads (default: cpu count)")
    parser.add_argument("--log-json", action="store_true", help="log as JSON lines on stderr")
    parser.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prompts", help="enumerate and render prompt sentences")
    p.add_argument("--count", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--quadrant", choices=[q.value for q in ALL_QUADRANTS])
    group.add_argument("--all-quadrants", action="store_true")
    p.add_argument("--lexicon", help="lexicon JSON file (default: built-in)")
    p.add_argument("--template", default=DEFAULT_TEMPLATE)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("screen", help="technical + geometric screening report")
    p.add_argument("--clips", required=True, help="directory with clips.json and WAV files")
    p.add_argument("--ratings", required=True, help="evaluator ratings CSV")
    p.add_argument("--spike-threshold", type=float, default=None)
    p.add_argument("--silence-rms-db", type=float, default=None)
    p.add_argument("--silence-max-s", type=float, default=None)
    p.add_argument("--frame-ms", type=float, default=None)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("music-features", help="structural features + group ANOVA")
    p.add_argument("--clips", required=True)
    p.set_defaults(func=cmd_music_features)

    p = sub.add_parser("preprocess", help="run device pipelines over a dataset")
    p.add_argument("--data", required=True, help="dataset root (participant/... bundles)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("analyze", help="labels, band powers, 48-dim features, stats")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("classify", help="six-combination ablation grid")
    p.add_argument("--features", required=True, help="trial_features.csv from analyze")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--data-dir", default="sessions")
    p.add_argument("--clips", help="clip library directory for audio + plans")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="synthesize a full study dataset")
    p.add_argument("--subjects", type=int, default=5)
    p.add_argument("--with-clips", action="store_true", help="also build the demo clip corpus")
    p.add_argument("--clips-per-quadrant", type=int, default=6)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_json)
    if args.jobs is None:
        import os

        args.jobs = os.cpu_count() or 1
    if args.dump_config:
        print(_config_from_args(args).to_json())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except MuselabError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
