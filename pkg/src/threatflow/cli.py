"""Command-line pipeline: subcommands wiring ingest, normalize, analytics,
spread, cluster, correlate, forecast, lens and synth together.

Every run writes its reports under --output-dir with deterministic
filenames plus a run_manifest.json recording arguments, seed and the
SHA-256 of every input and output, so identical invocations produce
byte-identical output trees.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytics, cluster, correlate, forecast, lens, normalize, spread, synth
from .errors import ThreatflowError
from .ingest import FeedConfig, fetch_feed, parse_pulse_html, parse_pulse_json
from .model import Corpus, load_corpus, save_corpus


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting with code 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(_jsonable(payload), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _slug(name: str) -> str:
    cleaned = "".join(c if c.isalnum() else "-" for c in name.lower())
    cleaned = "-".join(filter(None, cleaned.split("-")))
    return cleaned or "group"


def _load_input(args) -> Corpus:
    path = Path(args.input)
    if not path.exists():
        raise ThreatflowError(f"input file not found: {path}")
    fmt = "csv" if path.suffix.lower() == ".csv" else "ndjson"
    corpus, report = load_corpus(path, format=fmt)
    if report.rejected and args.verbose:
        print(f"[load] rejected {report.rejected} records", file=sys.stderr)
    return corpus


def emit_svg_heatmap(names, values, path: Path) -> None:
    """Deterministic grayscale heatmap: one rect per cell, darker means
    larger |value|, NaN cells hatched, labeled axes."""
    values = np.asarray(values, dtype=np.float64)
    n = len(names)
    if values.shape != (n, n):
        raise ThreatflowError("heatmap needs a square matrix with row/column names")
    cell = 24
    margin = 180
    size = margin + n * cell + 10
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        "  <defs>",
        '    <pattern id="undef" width="6" height="6" patternUnits="userSpaceOnUse">',
        '      <rect width="6" height="6" fill="#ffffff"/>',
        '      <path d="M0,6 L6,0" stroke="#888888" stroke-width="1"/>',
        "    </pattern>",
        "  </defs>",
    ]
    for i, name in enumerate(names):
        y = margin + i * cell + cell / 2 + 4
        lines.append(
            f'  <text x="{margin - 6}" y="{y:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_xml_escape(name)}</text>'
        )
        x = margin + i * cell + cell / 2
        lines.append(
            f'  <text x="{x:.1f}" y="{margin - 6}" text-anchor="start" '
            f'font-size="11" font-family="sans-serif" '
            f'transform="rotate(-60 {x:.1f} {margin - 6})">{_xml_escape(name)}</text>'
        )
    for i in range(n):
        for j in range(n):
            x = margin + j * cell
            y = margin + i * cell
            value = values[i, j]
            if math.isnan(value):
                fill = "url(#undef)"
            else:
                level = int(round(255 * (1.0 - min(abs(value), 1.0))))
                fill = f"#{level:02x}{level:02x}{level:02x}"
            lines.append(
                f'  <rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{fill}" stroke="#cccccc" stroke-width="0.5"/>'
            )
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _xml_escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ingest(args, out: Path) -> list[Path]:
    records = []
    errors: list[str] = []
    inputs = []
    if args.pulses:
        pulses = Path(args.pulses)
        if not pulses.exists():
            raise ThreatflowError(f"pulse file not found: {pulses}")
        inputs.append(pulses)
        fetched = dt.datetime.now(dt.timezone.utc)
        from .ingest import RawRecord

        with pulses.open("r", encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                records.append(
                    RawRecord(source_id=f"line{i}", payload=line, fetched_at=fetched)
                )
        parse = parse_pulse_json
    elif args.html_dir:
        html_dir = Path(args.html_dir)
        if not html_dir.is_dir():
            raise ThreatflowError(f"html directory not found: {html_dir}")
        fetched = dt.datetime.now(dt.timezone.utc)
        from .ingest import RawRecord

        for page in sorted(html_dir.glob("*.html")):
            inputs.append(page)
            records.append(
                RawRecord(
                    source_id=page.name,
                    payload=page.read_text(encoding="utf-8"),
                    fetched_at=fetched,
                )
            )
        parse = parse_pulse_html
    elif args.url:
        api_key = os.environ.get(args.api_key_env) if args.api_key_env else None
        config = FeedConfig(
            base_url=args.url,
            api_key=api_key,
            page_size=args.page_size,
            max_pages=args.pages,
        )
        since = dt.date.fromisoformat(args.since) if args.since else None
        result = fetch_feed(config, since=since)
        records = result.records
        errors.extend(result.errors)
        parse = parse_pulse_json
    else:
        raise UsageError("ingest: one of --pulses, --html-dir or --url is required")

    events = []
    for record in records:
        try:
            events.append(parse(record))
        except ThreatflowError as exc:
            errors.append(f"{record.source_id}: {exc}")
    corpus = Corpus.from_events(events, provenance=args.pulses or args.html_dir or args.url)
    corpus_path = out / "corpus.ndjson"
    save_corpus(corpus, corpus_path, format="ndjson")
    report_path = out / "ingest_report.json"
    _write_json(
        report_path,
        {
            "records": len(records),
            "events": len(corpus.events),
            "rejected": len(errors),
            "errors": errors,
        },
    )
    args._inputs = inputs
    return [corpus_path, report_path]


def _cmd_normalize(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    gaz_path = Path(args.gazetteer) if args.gazetteer else None
    if gaz_path and not gaz_path.exists():
        raise ThreatflowError(f"gazetteer not found: {gaz_path}")
    gazetteer = normalize.load_gazetteer(gaz_path)
    normalized, report = normalize.normalize_corpus(
        corpus, gazetteer, threshold=args.threshold, max_workers=args.threads
    )
    corpus_path = out / "corpus_normalized.ndjson"
    save_corpus(normalized, corpus_path, format="ndjson")
    report_path = out / "normalize_report.json"
    _write_json(
        report_path,
        {
            "resolved": report.resolved,
            "threshold": report.threshold_used,
            "unresolved": [
                {
                    "raw": raw,
                    "best": best,
                    "distance": None if math.isinf(d) else int(d),
                }
                for raw, best, d in report.unresolved
            ],
        },
    )
    if gaz_path:
        args._inputs = [gaz_path]
    return [corpus_path, report_path]


def _cmd_stats(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    counts = analytics.count_by_country(corpus)
    share = analytics.cumulative_share(counts)
    pairs = analytics.pair_counts(corpus, min_count=args.min_pair_count)
    ranked_pairs = analytics.top_pairs(pairs, args.top)
    panel = analytics.build_panel(corpus, bin=args.bin)

    written = []

    def emit(stem: str, payload, header, rows):
        if args.format == "json":
            path = out / f"{stem}.json"
            _write_json(path, payload)
        else:
            path = out / f"{stem}.csv"
            _write_csv(path, header, rows)
        written.append(path)

    ranked = sorted(counts.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    emit(
        "country_counts",
        {"total": counts.total, "counts": [{"country": c, "count": n} for c, n in ranked]},
        ("country", "count"),
        ranked,
    )
    emit(
        "cumulative_share",
        [{"country": c, "cumulative": f} for c, f in share],
        ("country", "cumulative"),
        [(c, f"{f:.6f}") for c, f in share],
    )
    emit(
        "pair_counts",
        [{"a": a, "b": b, "count": n} for (a, b), n in ranked_pairs],
        ("country_a", "country_b", "count"),
        [(a, b, n) for (a, b), n in ranked_pairs],
    )
    panel_path = out / "panel.csv"
    _write_csv(panel_path, ("country", "bin_start", "count"), panel.to_csv_rows())
    written.append(panel_path)
    if args.year:
        top_path = out / "top_malware.json"
        _write_json(
            top_path,
            {
                "year": args.year,
                "top": [
                    {"family": f, "count": n}
                    for f, n in analytics.top_malware(corpus, args.year, args.top)
                ],
            },
        )
        written.append(top_path)
    return written


def _cmd_spread(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    matrices = spread.estimate_transitions(corpus, group_by=args.group_by)
    weights = analytics.count_by_country(corpus)
    written = []
    for key, tm in matrices.items():
        graph = spread.build_spread_graph(
            tm, weights, min_prob=args.min_prob, group_key=key
        )
        slug = _slug(key)
        json_path = out / f"spread_{slug}.json"
        _write_json(json_path, spread.graph_to_json(graph))
        written.append(json_path)
        if args.dot:
            dot_path = out / f"spread_{slug}.dot"
            dot_path.write_text(spread.export_dot(graph), encoding="utf-8")
            written.append(dot_path)
    return written


def _cmd_cluster(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    affinity = cluster.affinity_from_corpus(corpus, min_events=args.min_events)
    assignment = cluster.spectral_cluster(
        affinity, k=args.k, max_k=args.max_k, seed=args.seed
    )
    report_path = out / "clusters.json"
    _write_json(report_path, cluster.cluster_report(assignment))
    labels_path = out / "cluster_labels.csv"
    _write_csv(
        labels_path,
        ("country", "cluster"),
        sorted(assignment.labels.items()),
    )
    return [report_path, labels_path]


def _cmd_correlate(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    panel = analytics.build_panel(corpus, bin=args.bin)
    matrix = correlate.correlation_heatmap(
        panel, mode=args.mode, max_lag=args.max_lag, fixed_lag=args.fixed_lag
    )
    json_path = out / "correlation.json"
    _write_json(json_path, correlate.matrix_to_json(matrix))
    csv_path = out / "correlation.csv"
    csv_path.write_text(correlate.matrix_to_csv(matrix), encoding="utf-8")
    svg_path = out / "correlation.svg"
    emit_svg_heatmap(matrix.countries, matrix.r, svg_path)
    return [json_path, csv_path, svg_path]


def _cmd_forecast(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    panel = analytics.build_panel(corpus, bin=args.bin)
    kinds = tuple(k.strip().upper() for k in args.kinds.split(",") if k.strip())
    written = []
    countries = args.country or list(panel.countries)
    for country in countries:
        if country not in panel.countries:
            raise ThreatflowError(f"country {country!r} not present in the corpus")
        series = panel.series(country).astype(float)
        report = forecast.grid_search(
            series,
            kinds=kinds,
            p_range=(1, args.p_max),
            country=country,
            log1p=args.log1p,
        )
        slug = _slug(country)
        json_path = out / f"forecast_{slug}.json"
        _write_json(json_path, report.to_json())
        written.append(json_path)
        csv_path = out / f"predictions_{slug}.csv"
        offset = len(series) - len(report.predictions)
        starts = panel.bin_starts()[offset:]
        _write_csv(
            csv_path,
            ("bin_start", "actual", "predicted"),
            [
                (start.isoformat(), int(series[offset + i]), f"{pred:.6f}")
                for i, (start, pred) in enumerate(zip(starts, report.predictions))
            ],
        )
        written.append(csv_path)
    return written


def _cmd_lens(args, out: Path) -> list[Path]:
    corpus = _load_input(args)
    techniques = frozenset(t.strip() for t in args.techniques.split(",") if t.strip())
    landmarks = []
    inputs = []
    if args.landmarks:
        lm_path = Path(args.landmarks)
        if not lm_path.exists():
            raise ThreatflowError(f"landmarks file not found: {lm_path}")
        inputs.append(lm_path)
        landmarks, lm_errors = lens.load_landmarks(lm_path)
        if lm_errors and args.verbose:
            print(f"[lens] {len(lm_errors)} bad landmark rows", file=sys.stderr)
    window = (dt.date.fromisoformat(args.date_from), dt.date.fromisoformat(args.date_to))
    overlay, table, graph = lens.case_study(
        corpus,
        window=window,
        technique_ids=techniques,
        k=args.top_k,
        landmarks=landmarks,
        min_prob=args.min_prob,
    )
    overlay_path = out / "overlay.json"
    _write_json(overlay_path, lens.overlay_to_json(overlay))
    topk_path = out / "topk.json"
    _write_json(topk_path, lens.table_to_json(table))
    graph_json = out / "case_spread.json"
    _write_json(graph_json, spread.graph_to_json(graph))
    graph_dot = out / "case_spread.dot"
    graph_dot.write_text(spread.export_dot(graph), encoding="utf-8")
    args._inputs = inputs
    return [overlay_path, topk_path, graph_json, graph_dot]


def _cmd_synth(args, out: Path) -> list[Path]:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise ThreatflowError(f"synth spec not found: {spec_path}")
    spec = synth.load_synth_spec(spec_path)
    corpus = synth.generate(spec)
    corpus_path = out / "synth_corpus.ndjson"
    save_corpus(corpus, corpus_path, format="ndjson")
    args._inputs = [spec_path]
    return [corpus_path]


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(sub: argparse.ArgumentParser, needs_input: bool = True) -> None:
    if needs_input:
        sub.add_argument("--input", required=True, help="corpus file (ndjson or csv)")
    sub.add_argument("--output-dir", required=True, help="directory for reports")
    sub.add_argument("--seed", type=int, default=0, help="deterministic seed")
    sub.add_argument(
        "--format", choices=("json", "csv"), default="json", help="report format"
    )
    sub.add_argument("--verbose", action="store_true")
    sub.add_argument("--config", help="key=value file of flag defaults (flags win)")
    sub.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="max worker threads (results are identical at any setting)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="threatflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ingest", help="fetch a feed or parse fixture records")
    p.add_argument("--pulses", help="ndjson file of raw pulse objects")
    p.add_argument("--html-dir", help="directory of fixture HTML pages")
    p.add_argument("--url", help="feed base URL")
    p.add_argument("--api-key-env", help="env var holding the feed API key")
    p.add_argument("--pages", type=int, default=10)
    p.add_argument("--page-size", type=int, default=50)
    p.add_argument("--since", help="ISO date lower bound for the feed query")
    _add_common(p, needs_input=False)
    p.set_defaults(func=_cmd_ingest)

    p = subs.add_parser("normalize", help="canonicalize country names")
    p.add_argument("--gazetteer", help="gazetteer CSV (default: bundled)")
    p.add_argument("--threshold", type=int, default=normalize.DEFAULT_THRESHOLD)
    _add_common(p)
    p.set_defaults(func=_cmd_normalize)

    p = subs.add_parser("stats", help="country rankings, shares, pairs, panel")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--bin", choices=analytics.BINS, default="month")
    p.add_argument("--year", type=int, help="emit top malware for this year")
    p.add_argument("--min-pair-count", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_stats)

    p = subs.add_parser("spread", help="transition matrices and spread graphs")
    p.add_argument("--group-by", choices=spread.GROUP_KEYS, default="all")
    p.add_argument("--min-prob", type=float, default=0.0)
    p.add_argument("--dot", action="store_true", help="also write DOT files")
    _add_common(p)
    p.set_defaults(func=_cmd_spread)

    p = subs.add_parser("cluster", help="spectral clustering of countries")
    p.add_argument("--k", type=int, help="fixed cluster count (default: eigengap)")
    p.add_argument("--max-k", type=int, default=12)
    p.add_argument("--min-events", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_cluster)

    p = subs.add_parser("correlate", help="pointwise / lagged correlation matrix")
    p.add_argument("--mode", choices=("pointwise", "lagged"), default="pointwise")
    p.add_argument("--max-lag", type=int, default=7)
    p.add_argument(
        "--fixed-lag", type=int,
        help="correlate at exactly this lag instead of searching the window",
    )
    p.add_argument("--bin", choices=analytics.BINS, default="day")
    _add_common(p)
    p.set_defaults(func=_cmd_correlate)

    p = subs.add_parser("forecast", help="per-country incident-rate forecasts")
    p.add_argument(
        "--country", action="append", help="country to forecast (repeatable; default all)"
    )
    p.add_argument("--kinds", default="AR,ARMA,ARIMA")
    p.add_argument("--p-max", type=int, default=10)
    p.add_argument("--bin", choices=analytics.BINS, default="week")
    p.add_argument(
        "--log1p", action="store_true", help="fit on log(1+count) instead of counts"
    )
    _add_common(p)
    p.set_defaults(func=_cmd_forecast)

    p = subs.add_parser("lens", help="windowed, technique-filtered case study")
    p.add_argument("--from", dest="date_from", required=True, help="ISO start date")
    p.add_argument("--to", dest="date_to", required=True, help="ISO end date")
    p.add_argument("--techniques", default="", help="comma-joined technique ids")
    p.add_argument("--landmarks", help="date,label CSV of landmark events")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--min-prob", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=_cmd_lens)

    p = subs.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    _add_common(p, needs_input=False)
    p.set_defaults(func=_cmd_synth)

    return parser


def _read_config(path: str) -> dict[str, str]:
    config = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key=value")
        key, _, value = line.partition("=")
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def _apply_config(parser: _Parser, argv: list[str]) -> list[str]:
    """Merge config-file values as parser defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    position = argv.index("--config")
    if position + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    config_path = argv[position + 1]
    if not Path(config_path).exists():
        raise UsageError(f"config file not found: {config_path}")
    config = _read_config(config_path)
    if not config:
        return argv
    if not argv:
        return argv
    command = argv[0]
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if isinstance(action, argparse._SubParsersAction) and command in action.choices:
            sub = action.choices[command]
            known = {a.dest: a for a in sub._actions}  # noqa: SLF001
            defaults = {}
            for key, value in config.items():
                if key not in known:
                    raise UsageError(f"config key {key!r} unknown for {command}")
                act = known[key]
                if isinstance(act, argparse._StoreTrueAction):
                    defaults[key] = value.lower() in ("1", "true", "yes")
                elif act.type is not None:
                    defaults[key] = act.type(value)
                else:
                    defaults[key] = value
            sub.set_defaults(**defaults)
    return argv


def _write_manifest(out: Path, args, inputs: list[Path], outputs: list[Path]) -> Path:
    skip = {"func", "config", "verbose", "_inputs"}
    arguments = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip and value is not None
    }
    manifest = {
        "tool": "threatflow",
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", 0),
        "arguments": {k: str(v) for k, v in arguments.items()},
        "inputs": [
            {"path": str(p), "sha256": _sha256(p)} for p in sorted(set(inputs))
        ],
        "outputs": [
            {"name": p.name, "sha256": _sha256(p)} for p in sorted(outputs)
        ],
    }
    path = out / "run_manifest.json"
    _write_json(path, manifest)
    return path


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        argv = _apply_config(parser, list(argv))
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        print("run with --help for usage", file=sys.stderr)
        return 1
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs: list[Path] = []
    if getattr(args, "input", None):
        inputs.append(Path(args.input))
    try:
        written = args.func(args, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ValueError as exc:
        # bad flag values (dates, bounds) surface as ValueError
        print(f"invalid argument: {exc}", file=sys.stderr)
        return 1
    except ThreatflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    inputs.extend(getattr(args, "_inputs", []))
    inputs = [p for p in inputs if p.exists()]
    _write_manifest(out, args, inputs, written)
    if args.verbose:
        for path in written:
            print(f"[out] {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
