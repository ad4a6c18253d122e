"""Command-line interface.

Exit codes: 0 success, 1 usage or precondition violation, 2 input or I/O
error, 3 malformed or corrupted stream.
"""
import argparse
import csv
import io
import math
import sys

import numpy as np

from . import codec, nml, predictor, regret, synthetic, tokenize
from .errors import FormatError, InstanceTooLargeError, TiltFloorError
from .stirling import build_tilted, solve_tilt

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_FORMAT = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- io helpers


def _read_input(path):
    if path in (None, "-"):
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write_output(path, data):
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    with open(path, "wb") as fh:
        fh.write(data)


def _emit_csv(args, header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    out = getattr(args, "out", None)
    data = buf.getvalue().encode("utf-8")
    _write_output(out, data)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _counts_from_input(args):
    if args.synthetic:
        s, m, n = synthetic.parse_synthetic(args.synthetic)
        return synthetic.zipf_counts(s, m, n, seed=args.seed)
    data = _read_input(args.input)
    tok = tokenize.tokenize(data, args.tokenizer)
    counts = np.bincount(tok.tokens, minlength=tok.m)
    if args.tokenizer != "byte":
        # code-point and word alphabets are huge or data-defined: keep the symbols that occur
        counts = counts[counts > 0]
    if args.m is not None:
        if args.m < counts.size:
            raise UsageError(f"--m {args.m} is smaller than the {counts.size} symbols in use")
        counts = np.concatenate([counts, np.zeros(args.m - counts.size, dtype=counts.dtype)])
    return counts


# ---------------------------------------------------------------- commands


def cmd_solve_a(args):
    sol = solve_tilt(args.m, args.n)
    d = build_tilted(sol.a_star)
    R = regret.regret_optimal(args.m, args.n)
    print(f"a_star {sol.a_star!r}")
    print(f"C_a {d.C_a!r}")
    print(f"E_N {sol.expected_count!r}")
    print(f"R_bits {R.regret_bits!r}")
    print(f"regime {R.regime}")
    print(f"iterations {sol.iterations}")
    return EXIT_OK


def _parse_ratios(spec):
    if ":" in spec:
        lo, hi, k = spec.split(":")
        return np.geomspace(float(lo), float(hi), int(k)).tolist()
    return [float(x) for x in spec.split(",")]


def cmd_fig1(args):
    rows = []
    for r in _parse_ratios(args.ratios):
        rows.append((_fmt(r), _fmt(solve_tilt(r, 1.0).a_star)))
    _emit_csv(args, ["m_over_n", "a_star"], rows)
    return EXIT_OK


def cmd_sweep_L(args):
    counts = _counts_from_input(args)
    m = counts.size
    Ls = range(0, m + 1, args.step) if args.step > 1 else range(0, m + 1)
    if args.step > 1 and m % args.step:
        Ls = list(Ls) + [m]
    rows, best = regret.sweep_L(counts, Ls)
    _emit_csv(
        args,
        ["L", "tail_total", "code_regret_bits", "L_bits", "subset_bits", "total_bits"],
        [(r.L, r.tail_total, _fmt(r.code_regret_bits), _fmt(r.L_bits), _fmt(r.subset_bits), _fmt(r.total_bits))
         for r in rows],
    )
    print(f"best_L {best.L} total_bits {best.total_bits!r}", file=sys.stderr)
    return EXIT_OK


def _vocab_path(path):
    return f"{path}.vocab.json"


def cmd_compress(args):
    if args.tokenizer == "word" and args.out in (None, "-"):
        raise UsageError("word tokenizer needs --out so the vocabulary sidecar has a name")
    data = _read_input(args.input)
    tok = tokenize.tokenize(data, args.tokenizer)
    stream, rep = codec.encode(tok.tokens, tok.m, tok.tokenizer_id)
    _write_output(args.out, stream.to_bytes())
    if args.tokenizer == "word":
        tokenize.save_vocab(_vocab_path(args.out), tok.vocab)
    if args.report:
        _print_report(rep)
    return EXIT_OK


def _print_report(rep):
    w = csv.writer(sys.stderr, lineterminator="\n")
    w.writerow(["line", "bits"])
    for name, bits in rep.ledger():
        w.writerow([name, _fmt(bits)])


def cmd_decompress(args):
    blob = _read_input(args.input)
    dec = codec.decompress(blob)
    mode = tokenize.NAMES[dec.tokenizer_id]
    if mode == "int":
        raise FormatError("stream holds raw integer tokens; decode it with the library API")
    vocab = ()
    if mode == "word":
        if args.input in (None, "-"):
            raise UsageError("word streams need --in so the vocabulary sidecar can be found")
        vocab = tokenize.load_vocab(_vocab_path(args.input))
        if len(vocab) != dec.m and not (dec.m == 1 and not vocab):
            raise FormatError("vocabulary sidecar does not match the stream")
    if args.tokenizer and args.tokenizer != mode:
        raise FormatError(f"stream was made with the {mode} tokenizer, not {args.tokenizer}")
    try:
        data = tokenize.detokenize(dec.tokens, mode, vocab)
    except tokenize.TokenizeError as exc:
        raise FormatError(f"stream does not decode to {mode} text: {exc}") from None
    _write_output(args.out, data)
    if args.report:
        stream = codec.CodedStream.from_bytes(blob)
        _print_report(codec.build_report(stream, dec.counts))
    return EXIT_OK


def _parse_envelope(spec, m):
    kind, _, rest = spec.partition(":")
    if kind != "powerlaw":
        raise UsageError(f"unknown envelope {kind!r}")
    try:
        c, alpha = (float(x) for x in rest.split(","))
    except ValueError:
        raise UsageError("expected powerlaw:c,alpha") from None
    return regret.EnvelopeSpec.powerlaw(c, alpha, m)


def cmd_envelope(args):
    env = _parse_envelope(args.f, args.m)
    vals = regret.envelope_bound_terms(env, args.n)
    rows = [(L, _fmt(v)) for L, v in enumerate(vals.tolist(), start=1) if not math.isnan(v)]
    _emit_csv(args, ["L", "bound_bits"], rows)
    best, L = regret.envelope_regret_upper(env, args.n)
    print(f"best_L {L} bound_bits {best!r}", file=sys.stderr)
    return EXIT_OK


def _parse_rule(spec):
    if spec == "snml":
        return "snml"
    kind, _, rest = spec.partition(":")
    if kind == "two-tilt":
        try:
            L, b = rest.split(",")
            return ("two-tilt", int(L), float(b))
        except ValueError:
            pass
    raise UsageError(f"bad rule {spec!r}; expected snml or two-tilt:L,b")


def cmd_predict(args):
    rule = _parse_rule(args.rule)
    data = _read_input(args.input)
    tok = tokenize.tokenize(data, args.tokenizer)
    if rule != "snml" and not 0 <= rule[1] <= tok.m:
        raise UsageError("L must lie in 0..m")
    res = predictor.log_loss(tok.tokens, tok.m, rule)
    if args.per_symbol:
        cum = np.cumsum(res.per_symbol_bits)
        _emit_csv(args, ["position", "symbol", "loss_bits", "cumulative_bits"],
                  [(i, int(s), _fmt(b), _fmt(c)) for i, (s, b, c) in
                   enumerate(zip(tok.tokens.tolist(), res.per_symbol_bits.tolist(), cum.tolist()))])
    print(f"tokens {tok.tokens.size}", file=sys.stderr)
    print(f"total_bits {res.total_bits!r}", file=sys.stderr)
    print(f"bits_per_symbol {res.mean_bits!r}", file=sys.stderr)
    return EXIT_OK


def cmd_nml_table(args):
    rows = []
    for m in range(1, args.m_max + 1):
        for n in range(0, args.n_max + 1):
            t = nml.shtarkov_table(m, n)
            rows.append((m, n, _fmt(t.log_M_S), _fmt(t.log_C_mul)))
    _emit_csv(args, ["m", "n", "log2_M_S", "log2_C_mul"], rows)
    return EXIT_OK


def cmd_stats(args):
    data = _read_input(args.input)
    tok = tokenize.tokenize(data, args.tokenizer)
    st = tokenize.corpus_stats(tok.tokens, tok.m)
    for k in ("m", "n", "distinct", "hapax", "dis_legomena"):
        print(f"{k} {st[k]}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="tiltcode", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve-a", help="optimal tilt for (m, n)")
    s.add_argument("--m", type=float, required=True)
    s.add_argument("--n", type=float, required=True)
    s.set_defaults(func=cmd_solve_a)

    s = sub.add_parser("fig1", help="a* against m/n as CSV")
    s.add_argument("--ratios", default="0.01:100:41", help="lo:hi:count (log-spaced) or a comma list")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fig1)

    s = sub.add_parser("sweep-L", help="two-tilt regret over the number of frequent symbols")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--synthetic", help="zipf:s,m,n")
    s.add_argument("--tokenizer", choices=["byte", "utf8", "word"], default="utf8")
    s.add_argument("--m", type=int, help="alphabet size; unseen symbols pad the counts with zeros")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--step", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_L)

    for name, func in (("compress", cmd_compress), ("decompress", cmd_decompress)):
        s = sub.add_parser(name)
        s.add_argument("--tokenizer", choices=["byte", "utf8", "word"], default="byte" if name == "compress" else None)
        s.add_argument("--in", dest="input")
        s.add_argument("--out")
        s.add_argument("--report", action="store_true", help="print the bit ledger to stderr")
        s.set_defaults(func=func)

    s = sub.add_parser("envelope", help="envelope regret bound over L")
    s.add_argument("--f", required=True, help="powerlaw:c,alpha")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_envelope)

    s = sub.add_parser("predict", help="sequential log loss")
    s.add_argument("--input", "--in", dest="input")
    s.add_argument("--tokenizer", choices=["byte", "utf8", "word"], default="byte")
    s.add_argument("--rule", default="snml", help="snml or two-tilt:L,b")
    s.add_argument("--per-symbol", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("nml-table", help="exact Shtarkov sums as CSV")
    s.add_argument("--m-max", type=int, default=4)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_nml_table)

    s = sub.add_parser("stats", help="distinct, hapax and dis legomena counts")
    s.add_argument("--input", "--in", dest="input")
    s.add_argument("--tokenizer", choices=["byte", "utf8", "word"], default="utf8")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError,) as exc:
        print(f"tiltcode: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (OSError, tokenize.TokenizeError) as exc:
        print(f"tiltcode: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UsageError, TiltFloorError, InstanceTooLargeError, ValueError) as exc:
        print(f"tiltcode: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
