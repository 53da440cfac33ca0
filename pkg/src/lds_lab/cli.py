"""``lds-lab`` command line entry point.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import LdsLabError, ValidationError
from .experiments import (
    config_from_dict,
    emit_outputs,
    load_config,
    run_dare,
    run_filter_sweep,
    run_jordan_sweep,
    run_kl,
    run_simulate,
    run_verify_lemmas,
    verify_lemmas,
)


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lds-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--formats", type=_csv_list(str), default=["csv", "json", "svg"])

    for name in ("jordan-sweep", "filter-sweep", "dare", "simulate"):
        common(sub.add_parser(name))

    p = sub.add_parser("kl")
    common(p, config_required=False)
    p.add_argument("--p", dest="p_model", help="model file for P")
    p.add_argument("--q", dest="q_model", help="model file for Q")
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--observation", choices=("full", "hidden"), default=None)

    p = sub.add_parser("verify-lemmas")
    common(p, config_required=False)
    p.add_argument("--n", type=_csv_list(int), default=None)
    p.add_argument("--h", type=_csv_list(int), default=None)
    p.add_argument("--rho", type=_csv_list(float), default=None)
    p.add_argument("--tol", type=float, default=None)
    return parser


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command
    cfg = load_config(args.config) if args.config else None
    if cfg is not None and cfg.experiment != cmd:
        raise ValidationError(f"config is for {cfg.experiment!r}, not {cmd!r}")

    if cmd == "jordan-sweep":
        res = run_jordan_sweep(cfg, args.threads)
    elif cmd == "filter-sweep":
        res = run_filter_sweep(cfg, args.threads)
    elif cmd == "dare":
        out = run_dare(cfg)
        _print(out)
        if args.out:
            from .experiments import _ensure_dir
            (_ensure_dir(args.out) / "dare.json").write_text(json.dumps(out, indent=2) + "\n")
        return 0
    elif cmd == "kl":
        if cfg is None:
            if not (args.p_model and args.q_model and args.T):
                raise ValidationError("kl needs --config or all of --p, --q, --T")
            cfg = config_from_dict({"experiment": "kl", "P": args.p_model, "Q": args.q_model,
                                    "horizon": args.T, "observation": args.observation or "hidden"})
        else:
            if args.T:
                cfg.extra["horizon"] = args.T
            if args.observation:
                cfg.extra["observation"] = args.observation
        _print(run_kl(cfg))
        return 0
    elif cmd == "simulate":
        paths = run_simulate(cfg, args.out or ".")
        _print({"written": [str(p) for p in paths]})
        return 0
    elif cmd == "verify-lemmas":
        if cfg is not None:
            for key, val in (("N", args.n), ("h_values", args.h), ("rho", args.rho)):
                if val is not None:
                    cfg.extra[key] = val
            if args.tol is not None:
                cfg.tolerances["lemma"] = args.tol
            ok, cases, res = run_verify_lemmas(cfg)
        else:
            ok, cases = verify_lemmas(args.n or [3, 10, 50, 200], args.h or [1, 2, 5, 20],
                                      args.rho or [0.0, 0.382, 0.9, 1.0], args.tol or 1e-8)
            res = None
        for case in cases:
            print(json.dumps(case, sort_keys=True))
        if res is not None and args.out:
            emit_outputs(res, args.out, args.formats)
        return 0 if ok else 1
    else:  # pragma: no cover - argparse enforces the choices
        raise ValidationError(f"unknown command {cmd}")

    if args.out:
        emit_outputs(res, args.out, args.formats)
    else:
        sys.stdout.write(res.to_csv())
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except LdsLabError as exc:
        print(f"lds-lab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"lds-lab: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
