"""Command-line entry point: ``pyrkv {synth,classify,simulate,verify,sweep,report}``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import sweep as sweep_mod
from . import verify as verify_mod
from .classify import ClassifyConfig, HeadClassMap, classify_model, label_agreement
from .errors import PyrkvError
from .heads import HeadKind
from .policy import PolicyConfig
from .sim import Mode, SimConfig, run
from .trace import DEFAULT_FRAMES, DEFAULT_HEADS, DEFAULT_LAYERS, read_trace, synth_trace, write_trace

log = logging.getLogger("pyrkv")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path: Optional[str]) -> dict:
    """Read a JSON or TOML config with optional ``policy``, ``sim`` and ``classify`` tables."""
    if not path:
        return {}
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p) as fh:
        return json.load(fh)


def parse_mix(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--mix expects anchor:wave:veil, got {text!r}")
    try:
        mix = tuple(float(x) for x in parts)
    except ValueError:
        raise UsageError(f"--mix values must be numbers, got {text!r}") from None
    if any(x < 0 for x in mix) or sum(mix) <= 0:
        raise UsageError(f"--mix ratios must be non-negative with a positive sum, got {text!r}")
    return mix


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _classify_config(args, conf: dict) -> ClassifyConfig:
    kw = dict(conf.get("classify", {}))
    for flag, key in (("alpha", "alpha"), ("beta", "beta"), ("harmonics", "harmonic_count"), ("pad_to", "pad_to")):
        if getattr(args, flag, None) is not None:
            kw[key] = getattr(args, flag)
    return ClassifyConfig(**kw)


_POLICY_FLAGS = {
    "sink": "sink", "recent": "recent", "cap_anchor": "cap_anchor", "cap_wave": "cap_wave",
    "cap_veil": "cap_veil", "merge": "merge_range", "period": "wave_default_period",
}


def _policy_config(args, conf: dict) -> PolicyConfig:
    kw = dict(conf.get("policy", {}))
    for flag, key in _POLICY_FLAGS.items():
        if getattr(args, flag, None) is not None:
            kw[key] = getattr(args, flag)
    return PolicyConfig(**kw)


def cmd_synth(args) -> int:
    trace = synth_trace(
        prompts=args.prompts, layers=args.layers, heads=args.heads, frames=args.frames,
        mix=parse_mix(args.mix), noise=args.noise, seed=args.seed,
    )
    write_trace(trace, args.out)
    print(f"wrote {args.out}: {trace.num_prompts}x{trace.num_layers}x{trace.num_heads}x{trace.num_frames}")
    return 0


def format_confusion(confusion: np.ndarray) -> str:
    names = [k.label for k in HeadKind]
    lines = ["truth \\ pred " + "".join(f"{n:>8}" for n in names)]
    for name, row in zip(names, confusion):
        lines.append(f"{name:<13}" + "".join(f"{v:>8d}" for v in row))
    return "\n".join(lines)


def cmd_classify(args) -> int:
    conf = load_config(args.config)
    cfg = _classify_config(args, conf)
    trace = read_trace(args.trace)
    hmap = classify_model(trace, cfg)
    doc = hmap.dumps(indent=2)
    if args.out:
        Path(args.out).write_text(doc + "\n")
    else:
        print(doc)
    counts = hmap.counts()
    print(f"classes: anchor={counts['anchor']} wave={counts['wave']} veil={counts['veil']} "
          f"(prompts voted: {hmap.prompts_voted})", file=sys.stderr if not args.out else sys.stdout)
    if trace.labels is not None:
        acc, confusion = label_agreement(hmap, trace)
        stream = sys.stderr if not args.out else sys.stdout
        print(f"accuracy: {acc:.4f}", file=stream)
        print(format_confusion(confusion), file=stream)
    return 0


def _sim_config(args, conf: dict) -> SimConfig:
    kw = dict(conf.get("sim", {}))
    for flag in ("num_frames", "layers", "heads", "head_dim", "tokens_per_frame", "rng_seed", "mode"):
        if getattr(args, flag, None) is not None:
            kw[flag] = getattr(args, flag)
    if args.unfused:
        kw["fused"] = False
    if args.accounting_only:
        kw["compute"] = False
    kw["policy"] = _policy_config(args, conf)
    map_path = args.head_map or conf.get("head_map")
    if map_path:
        hmap = HeadClassMap.from_dict(json.loads(Path(map_path).read_text()))
        kw["head_map"] = hmap
        kw.setdefault("layers", hmap.num_layers)
        kw.setdefault("heads", hmap.num_heads)
    return SimConfig(**kw)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args, load_config(args.config))
    report = run(cfg)
    if args.json:
        report.write_json(args.json)
    if args.csv:
        report.write_csv(args.csv)
    summary = report.to_dict()
    print(f"mode={report.mode} fused={report.fused} frames={report.num_frames} "
          f"peak_slots={report.peak_slots} attention_calls={report.attention_calls} "
          f"scheduling_calls={report.scheduling_calls} flop_proxy={report.flop_proxy}")
    print("max per-head slots: " + ", ".join(f"{k}={v}" for k, v in summary["max_per_head_slots"].items()))
    return 0


def cmd_verify(args) -> int:
    checks = verify_mod.run_all(args.instances, args.seed, args.max_t, args.max_n)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_sweep(args) -> int:
    if args.classify_csv:
        if args.trace:
            trace = read_trace(args.trace)
        else:
            trace = synth_trace(prompts=args.prompts, frames=args.frames, noise=args.noise,
                                mix=parse_mix(args.mix), seed=args.seed)
        rows = sweep_mod.classify_grid(trace, _floats(args.alpha), _floats(args.beta))
        sweep_mod.write_csv(rows, sweep_mod.CLASSIFY_FIELDS, args.classify_csv)
        for r in rows:
            print(f"alpha={r['alpha']:.2f} beta={r['beta']:.2f} accuracy={r['accuracy']:.4f} "
                  f"A/W/V={r['anchor']}/{r['wave']}/{r['veil']}")
    if args.policy_csv:
        base = SimConfig(num_frames=args.sim_frames, layers=args.sim_layers, heads=args.sim_heads,
                         head_dim=args.sim_head_dim, tokens_per_frame=2, rng_seed=args.seed)
        rows = sweep_mod.policy_grid(
            base, _ints(args.sink), _ints(args.recent), _ints(args.cap_anchor), _ints(args.cap_wave),
            _ints(args.cap_veil), _floats(args.period), _ints(args.merge),
        )
        sweep_mod.write_csv(rows, sweep_mod.POLICY_FIELDS, args.policy_csv)
        print(f"wrote {len(rows)} policy grid rows to {args.policy_csv}")
    if not (args.classify_csv or args.policy_csv):
        raise UsageError("sweep needs --classify-csv and/or --policy-csv")
    return 0


_GLYPH = {"anchor": "A", "wave": "W", "veil": "V"}
_COLOR = {"anchor": "#3b6fb6", "wave": "#e0a030", "veil": "#7a7a7a"}


def render_map(doc: dict) -> str:
    lines = []
    for i, layer in enumerate(doc["layers"]):
        lines.append(f"L{i:02d} " + "".join(_GLYPH[h["class"]] for h in layer["heads"]))
    return "\n".join(lines)


def period_histogram(doc: dict) -> Counter:
    return Counter(round(h["period"], 2) for layer in doc["layers"] for h in layer["heads"] if "period" in h)


def render_svg(doc: dict, cell: int = 14) -> str:
    layers = doc["layers"]
    width = cell * max(len(l["heads"]) for l in layers)
    height = cell * len(layers)
    rects = [
        f'<rect x="{h * cell}" y="{l * cell}" width="{cell - 1}" height="{cell - 1}" '
        f'fill="{_COLOR[e["class"]]}"><title>L{l} H{h} {e["class"]}</title></rect>'
        for l, layer in enumerate(layers)
        for h, e in enumerate(layer["heads"])
    ]
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            + "".join(rects) + "</svg>\n")


def cmd_report(args) -> int:
    if not (args.map or args.sim):
        raise UsageError("report needs --map and/or --sim")
    if args.map:
        doc = json.loads(Path(args.map).read_text())
        print(render_map(doc))
        hist = period_histogram(doc)
        if hist:
            print("wave periods:")
            for period, n in sorted(hist.items()):
                print(f"  {period:6.2f} {'#' * n} {n}")
        if args.svg:
            Path(args.svg).write_text(render_svg(doc))
    if args.sim:
        doc = json.loads(Path(args.sim).read_text())
        for key in ("mode", "fused", "num_frames", "peak_slots", "attention_calls", "scheduling_calls", "flop_proxy"):
            print(f"{key:>18}: {doc[key]}")
        for kind, hist in doc.get("composition", {}).items():
            print(f"{kind:>18}: " + " ".join(f"{slots}x{n}" for slots, n in hist.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyrkv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a labeled synthetic logit trace")
    p.add_argument("--prompts", type=int, default=8)
    p.add_argument("--layers", type=int, default=DEFAULT_LAYERS)
    p.add_argument("--heads", type=int, default=DEFAULT_HEADS)
    p.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    p.add_argument("--mix", default="5:4:3", help="anchor:wave:veil ratio")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("classify", help="classify heads of a trace file")
    p.add_argument("trace")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--harmonics", type=int)
    p.add_argument("--pad-to", type=int)
    p.add_argument("--config")
    p.add_argument("--out", help="head map JSON path (stdout if omitted)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="run the cache simulator")
    p.add_argument("--config")
    p.add_argument("--head-map", help="head map JSON from `classify`")
    p.add_argument("--frames", dest="num_frames", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--head-dim", type=int)
    p.add_argument("--tokens-per-frame", type=int)
    p.add_argument("--seed", dest="rng_seed", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--unfused", action="store_true", help="one attention call per head class")
    p.add_argument("--accounting-only", action="store_true", help="skip K/V synthesis and attention")
    for flag in ("sink", "recent", "cap-anchor", "cap-wave", "cap-veil", "merge"):
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--period", type=float, help="default wave period")
    p.add_argument("--json")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the oracle-equivalence suite")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-t", type=int, default=2000)
    p.add_argument("--max-n", type=int, default=256)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid-evaluate thresholds and policy knobs")
    p.add_argument("--trace")
    p.add_argument("--prompts", type=int, default=8)
    p.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--mix", default="5:4:3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", default="0.7,0.8,0.9")
    p.add_argument("--beta", default="6.0,6.4,6.5")
    p.add_argument("--sink", default="3")
    p.add_argument("--recent", default="4")
    p.add_argument("--cap-anchor", default="4")
    p.add_argument("--cap-wave", default="4")
    p.add_argument("--cap-veil", default="2")
    p.add_argument("--period", default="6")
    p.add_argument("--merge", default="2")
    p.add_argument("--sim-frames", type=int, default=60)
    p.add_argument("--sim-layers", type=int, default=2)
    p.add_argument("--sim-heads", type=int, default=6)
    p.add_argument("--sim-head-dim", type=int, default=16)
    p.add_argument("--classify-csv")
    p.add_argument("--policy-csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render head maps and simulator reports")
    p.add_argument("--map")
    p.add_argument("--sim")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pyrkv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PyrkvError as exc:
        print(f"pyrkv {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"pyrkv {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
