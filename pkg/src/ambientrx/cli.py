"""Command-line front door: scenario configuration, runs, CSV/JSON-lines output.

Exit codes: 0 = ran (a no-lock outcome is an analysis result, not a
failure), 1 = data error (e.g. codec decode failure), 2 = usage or config
error, 3 = internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import linecodec, loloop, rxctrl
from .loloop import LoopParams, VcoModel
from .rffe import RffeConfig
from .rxctrl import RxConfig
from .sigcore import NoiseSpec

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

_SECTIONS = {
    "rx": RxConfig,
    "loop": LoopParams,
    "vco": VcoModel,
    "rffe": RffeConfig,
    "noise": NoiseSpec,
}


@dataclasses.dataclass
class Scenario:
    rx: RxConfig
    loop: LoopParams
    vco: VcoModel
    rffe: RffeConfig
    noise: NoiseSpec
    seed: int = 0


def _build_section(cls, data: dict):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    coerced = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    return cls(**coerced)


def load_scenario(path: str | None) -> Scenario:
    """Scenario from a JSON config file; child invariants validate on load."""
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("config root must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    parts = {name: _build_section(cls, raw.get(name, {})) for name, cls in _SECTIONS.items()}
    return Scenario(seed=int(raw.get("seed", 0)), **parts)


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else sys.stdout


def _emit(rows: list[dict], fieldnames: list[str], out_path: str | None, fmt: str) -> None:
    fh = _open_out(out_path)
    try:
        if fmt == "jsonl":
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        else:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_plan_if(args) -> int:
    plan = rxctrl.plan_if(args.cbw, count=args.count)
    rows = []
    for n, f in enumerate(plan.candidates_hz):
        row = {"n": n, "f_if_hz": f, "image_offset_hz": -2.0 * f}
        if args.guard_band_hz is not None:
            # plan candidates place the image on a channel edge; report the
            # signed distance from that edge and whether it sits in-guard
            dist = (2.0 * f) % args.cbw - args.cbw / 2.0
            row["image_edge_offset_hz"] = dist
            row["image_in_guard"] = abs(dist) <= args.guard_band_hz / 2.0
        rows.append(row)
    _emit(rows, list(rows[0].keys()), args.out, args.format)
    print(f"lower_bound_hz={plan.lower_bound_hz:.12g} chosen_hz={plan.chosen_hz:.12g} ({plan.rationale})")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    p = rxctrl.sensitivity_estimate_dbm(args.bw, args.snr, args.nf, args.margin)
    print(f"sensitivity_dbm={p:.12g}")
    return EXIT_OK


def cmd_sim_loop(args) -> int:
    sc = load_scenario(args.config)
    vco = sc.vco
    if args.offset_ppm is not None:
        vco = dataclasses.replace(vco, init_offset_ppm=args.offset_ppm)
    seed = sc.seed if args.seed is None else args.seed
    from .sigcore import make_ook_carrier

    carrier = make_ook_carrier(
        [1], 1.0 / args.duration, cfo_hz=0.0, power_dbm=args.power_dbm,
        sample_rate=32.768e6,
    )
    res = loloop.run_calibration(carrier, sc.rffe, sc.loop, vco, args.duration, seed=seed)
    if args.out:
        res.trajectory.to_csv(args.out)
    t_lock = res.t_lock_s if res.t_lock_s is not None else float("nan")
    cycles = res.lock_cycles if res.lock_cycles is not None else float("nan")
    print(
        f"locked={str(res.locked).lower()} t_lock_s={t_lock:.12g} "
        f"cycles={cycles:.12g} residual_hz={res.residual_hz:.12g}"
    )
    return EXIT_OK


def cmd_sweep_ber(args) -> int:
    sc = load_scenario(args.config)
    seed = sc.seed if args.seed is None else args.seed
    if args.pmax < args.pmin or args.step <= 0:
        raise ValueError("need pmax >= pmin and step > 0")
    grid = np.arange(args.pmin, args.pmax + args.step / 2.0, args.step)
    rows = rxctrl.ber_sweep(
        grid, sc.rx, sc.loop, sc.vco, sc.rffe,
        trials=args.trials, seed=seed,
        bits_per_trial=args.bits_per_trial, workers=args.workers,
    )
    dict_rows = [dataclasses.asdict(r) for r in rows]
    _emit(dict_rows, ["power_dbm", "ber", "ci_low", "ci_high", "n_bits"], args.out, args.format)
    return EXIT_OK


_CODECS = ("manchester", "pie", "fm0", "miller")


def _codec_line(scheme: str, direction: str, line: str, tari: float, miller_m: int) -> str:
    bits = [int(c) for c in line.strip()]
    if scheme == "manchester":
        out = linecodec.manchester_encode(bits).chips if direction == "encode" else linecodec.manchester_decode(bits)
    elif scheme == "pie":
        out = linecodec.pie_encode(bits, tari).chips if direction == "encode" else linecodec.pie_decode(bits)
    elif scheme == "fm0":
        out = linecodec.fm0_encode(bits).chips if direction == "encode" else linecodec.fm0_decode(bits)
    else:
        out = (
            linecodec.miller_encode(bits, miller_m).chips
            if direction == "encode"
            else linecodec.miller_decode(bits, miller_m)
        )
    return "".join(str(int(b)) for b in out)


def cmd_codec(args) -> int:
    direction = "encode" if args.encode else "decode"
    with open(args.infile) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    out_lines = []
    for ln_no, line in enumerate(lines):
        try:
            out_lines.append(_codec_line(args.scheme, direction, line, args.tari, args.miller_m))
        except linecodec.DecodeError as exc:
            print(f"decode error on line {ln_no + 1}: {exc}", file=sys.stderr)
            return EXIT_DATA
    fh = _open_out(args.out)
    try:
        fh.write("\n".join(out_lines) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ambientrx", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan-if", help="target-IF candidate table")
    sp.add_argument("--cbw", type=float, required=True)
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--guard-band-hz", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.set_defaults(func=cmd_plan_if)

    sp = sub.add_parser("sensitivity", help="link-budget sensitivity in dBm")
    sp.add_argument("--bw", type=float, required=True)
    sp.add_argument("--snr", type=float, required=True)
    sp.add_argument("--nf", type=float, required=True)
    sp.add_argument("--margin", type=float, required=True)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("sim-loop", help="LO calibration transient")
    sp.add_argument("--config", default=None)
    sp.add_argument("--offset-ppm", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--duration", type=float, default=8e-5)
    sp.add_argument("--power-dbm", type=float, default=-40.0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_sim_loop)

    sp = sub.add_parser("sweep-ber", help="Monte-Carlo BER vs input power")
    sp.add_argument("--config", default=None)
    sp.add_argument("--pmin", type=float, required=True)
    sp.add_argument("--pmax", type=float, required=True)
    sp.add_argument("--step", type=float, required=True)
    sp.add_argument("--trials", type=int, default=4)
    sp.add_argument("--bits-per-trial", type=int, default=2000)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.set_defaults(func=cmd_sweep_ber)

    sp = sub.add_parser("codec", help="encode/decode files of ASCII 0/1 lines")
    sp.add_argument("--scheme", choices=_CODECS, required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--encode", action="store_true")
    group.add_argument("--decode", action="store_true")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--tari", type=float, default=12.5e-6)
    sp.add_argument("--miller-m", type=int, default=2, choices=(2, 4, 8))
    sp.set_defaults(func=cmd_codec)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
