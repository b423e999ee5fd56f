"""``latentmol`` command line.

Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import numpy as np

from latentmol.analysis import (
    landscape_slice,
    surrogate_fit_metrics,
    write_landscape,
    write_metrics,
)
from latentmol.codec import (
    GroupDict,
    Vocab,
    corpus_stats,
    decode,
    encode,
    extract_groups,
    parse_tokens,
    read_groupdict,
    write_groupdict,
)
from latentmol.config import RunConfig, load_config
from latentmol.corpus import generate_corpus, read_corpus, read_property_file, write_corpus, write_property_file
from latentmol.errors import ConfigError, DataError, IncompatibleCheckpoint, LatentMolError, MissingProperties
from latentmol.inception import optimize, rank_and_select, score_results, write_results, write_summary, write_tables
from latentmol.models import check_compatible, load_vae, save_vae, train_vae
from latentmol.oracles import OracleHub
from latentmol.surrogate import (
    decode_latents,
    load_surrogate,
    property_matrix,
    save_surrogate,
    train_joint,
    train_sequential,
)

LOCK_NAME = ".latentmol.lock"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@contextmanager
def output_lock(directory: Path):
    """One writer per output directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LatentMolError(f"{directory} is locked by another command (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _groups(cfg: RunConfig) -> GroupDict | None:
    if cfg.tokenizer == "group_selfies":
        return read_groupdict(cfg.input_path("group_dict"))
    return None


def _retokenize(seqs: list[list[str]], groups: GroupDict | None, max_len: int | None = None) -> list[list[str]]:
    """Re-encode through the codec when a group dictionary is in use."""
    if groups is None:
        return seqs
    out = []
    for k, seq in enumerate(seqs, start=1):
        try:
            graph = decode(parse_tokens("".join(seq), k))
        except DataError as exc:
            raise DataError(f"sequence {k}: {exc}") from None
        out.append([str(t) for t in encode(graph.largest_component(), groups, max_len)])
    return out


def _write_effective(cfg: RunConfig, out: Path) -> None:
    (out / "config.json").write_text(cfg.dumps())


# ---------------------------------------------------------------- commands


def cmd_build_vocab(args) -> int:
    seqs = read_corpus(args.corpus)
    if args.tokenizer == "group_selfies" and args.groups is None:
        raise ConfigError("--groups is required with --tokenizer group_selfies")
    groups = read_groupdict(args.groups) if args.tokenizer == "group_selfies" else None
    seqs = _retokenize(seqs, groups)
    vocab = Vocab.build(seqs)
    stats = corpus_stats(seqs)
    out = Path(args.out)
    with output_lock(out):
        vocab.write(out / "vocab.txt")
        lines = [f"{k}\t{v}" for k, v in stats.rows()]
        (out / "stats.txt").write_text("\n".join(lines) + "\n")
    for row in stats.rows():
        print(f"{row[0]}: {row[1]}")
    return 0


def cmd_extract_groups(args) -> int:
    seqs = read_corpus(args.corpus)
    graphs = [decode(parse_tokens("".join(s), k)).largest_component() for k, s in enumerate(seqs, start=1)]
    groups = extract_groups(graphs, min_freq=args.min_freq, min_atoms=args.min_atoms, provenance=str(args.corpus))
    write_groupdict(args.out, groups)
    print(f"{len(groups)} groups written to {args.out}")
    return 0


def cmd_gen_corpus(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    groups = _groups(cfg)
    graphs = generate_corpus(args.n, seed, max_len=cfg.model.max_len)
    seqs = [encode(g, groups) for g in graphs]
    write_corpus(args.out, seqs)
    if args.properties:
        with OracleHub(cfg.oracle_specs(), cfg.workers) as hub:
            records = hub.score(graphs).records()
        write_property_file(args.properties, zip(seqs, records))
    print(f"{len(seqs)} molecules written to {args.out}")
    return 0


def _training_data(cfg: RunConfig, groups: GroupDict | None):
    names = [s.name for s in cfg.oracle_specs()]
    if cfg.surrogate_mode == "joint":
        path = cfg.input_path("properties")
        if path is None:
            raise MissingProperties("joint training needs paths.properties (a property file)")
        rows = read_property_file(path)
        seqs = [[str(t) for t in tokens] for tokens, _ in rows]
        records = [props for _, props in rows]
        property_matrix(records, names)
    else:
        path = cfg.input_path("corpus") or cfg.input_path("properties")
        if path is None:
            raise ConfigError("training needs paths.corpus")
        if path == cfg.input_path("properties"):
            seqs = [[str(t) for t in tokens] for tokens, _ in read_property_file(path)]
        else:
            seqs = read_corpus(path)
        records = None
    return _retokenize(seqs, groups, cfg.model.max_len), records, names


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    groups = _groups(cfg)
    seqs, records, names = _training_data(cfg, groups)
    vocab = Vocab.read(cfg.input_path("vocab")) if cfg.paths.vocab else Vocab.build(seqs)
    out = cfg.output
    with output_lock(out):
        if cfg.surrogate_mode == "joint":
            ckpt, sur = train_joint(
                seqs, records, names, vocab, cfg.vae_config(), cfg.train_config(),
                gamma=cfg.surrogate.gamma, hidden=cfg.surrogate.hidden,
            )
        else:
            ckpt = train_vae(seqs, vocab, cfg.vae_config(), cfg.train_config())
            with OracleHub(cfg.oracle_specs(), cfg.workers) as hub:
                fitted = train_sequential(
                    ckpt, lambda gs: hub.score_matrix(gs, names), names,
                    cfg.surrogate.n_samples, cfg.surrogate_config(), seed=cfg.seed,
                )
            sur = fitted.surrogate
            (out / "surrogate_fit.txt").write_text(f"heldout_mse={fitted.heldout_mse!r}\n")
        save_vae(out / "vae.ckpt", ckpt)
        save_surrogate(out / "surrogate.ckpt", sur)
        vocab.write(out / "vocab.txt")
        _write_log(out / "train_log.csv", ckpt.log)
        _write_effective(cfg, out)
    last = ckpt.log[-1] if ckpt.log else {}
    print(f"trained {cfg.vae_config().arch} ({cfg.surrogate_mode}) for {len(ckpt.log)} steps; last {last}")
    return 0


def _write_log(path: Path, log: list[dict]) -> None:
    cols = ["step", "recon", "kl", "beta", "lr"] + (["mse"] if log and "mse" in log[0] else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in log:
            w.writerow([row[c] if c == "step" else repr(float(row[c])) for c in cols])


def _load_models(cfg: RunConfig, directory: Path):
    ckpt = load_vae(directory / "vae.ckpt")
    check_compatible(ckpt, cfg.vae_config())
    sur = load_surrogate(directory / "surrogate.ckpt")
    if sur.latent_dim != ckpt.model.config.latent_dim:
        raise IncompatibleCheckpoint("surrogate and VAE latent dims differ")
    return ckpt, sur


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    ckpt_dir = Path(args.checkpoint) if args.checkpoint else cfg.output
    ckpt, sur = _load_models(cfg, ckpt_dir)
    o = cfg.optimize
    objective = cfg.objective_spec()
    n_starts = o.n_starts if args.n_starts is None else args.n_starts
    steps = o.steps if args.steps is None else args.steps
    out = Path(args.out) if args.out else cfg.output
    with output_lock(out):
        results = optimize(
            ckpt.model, ckpt.vocab, sur, objective, n_starts=n_starts, steps=steps,
            lr=o.lr, seed=cfg.seed, workers=cfg.workers, iterations=o.iterations,
        )
        with OracleHub(cfg.oracle_specs(), cfg.workers) as hub:
            failures = score_results(results, hub, objective)
        selection = rank_and_select(results, objective, o.top_k)
        write_results(out / "results.csv", results)
        write_summary(out / "summary.csv", selection)
        write_tables(out, selection)
        (out / "oracle_failures.txt").write_text("".join(f"{k}={v}\n" for k, v in failures.items()))
        _write_effective(cfg, out)
    print(f"{len(results)} starts optimized; mean oracle objective {selection.means.get('objective')}")
    return 0


def _eval_set(cfg: RunConfig, vocab: Vocab, groups):
    path = cfg.input_path("eval_corpus")
    if path is None:
        raise ConfigError("analyze needs paths.eval_corpus (a property file)")
    rows = read_property_file(path)
    seqs = _retokenize([[str(t) for t in tokens] for tokens, _ in rows], groups, cfg.model.max_len)
    # molecules the model cannot represent are left out and counted
    keep = [k for k, s in enumerate(seqs) if len(s) <= cfg.model.max_len and all(t in vocab.index for t in s)]
    if not keep:
        raise DataError(f"no molecule in {path} fits the model's vocabulary and max_len")
    objective = cfg.objective_spec()
    records = [rows[k][1] for k in keep]
    y = property_matrix(records, objective.names) @ objective.coefficients(objective.names)
    return vocab.pad_batch([seqs[k] for k in keep], cfg.model.max_len), y, len(seqs) - len(keep)


def _landscape(cfg: RunConfig, ckpt, sur, out: Path) -> None:
    a = cfg.analysis
    objective = cfg.objective_spec()
    if a.evaluator == "surrogate":
        coef = objective.coefficients(sur.names)

        def evaluate(z):
            return sur.predict_numpy(z) @ coef
    else:
        hub = OracleHub(cfg.oracle_specs(), cfg.workers)
        names = hub.names

        def evaluate(z):
            graphs = decode_latents(ckpt.model, ckpt.vocab, np.asarray(z, dtype=np.float32))
            return hub.score_matrix(graphs, names) @ objective.coefficients(names)

    center = np.zeros(ckpt.model.config.latent_dim)
    try:
        grid = landscape_slice(evaluate, center, a.extent, a.resolution, cfg.seed)
    finally:
        if a.evaluator != "surrogate":
            hub.close()
    write_landscape(out / "landscape.csv", grid)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    ckpt_dir = Path(args.checkpoint) if args.checkpoint else cfg.output
    ckpt, sur = _load_models(cfg, ckpt_dir)
    ids, y, skipped = _eval_set(cfg, ckpt.vocab, _groups(cfg))
    out = Path(args.out) if args.out else cfg.output
    with output_lock(out):
        metrics = surrogate_fit_metrics(ckpt.model, sur, cfg.objective_spec(), ids, y, k=cfg.analysis.k)
        report = {"config_digest": cfg.digest(), "decoder": cfg.decoder, "surrogate_mode": cfg.surrogate_mode}
        report["eval_skipped"] = skipped
        report.update(metrics.as_dict())
        write_metrics(out / "metrics.txt", report)
        _landscape(cfg, ckpt, sur, out)
        _write_effective(cfg, out)
    for k, v in report.items():
        print(f"{k}={v}")
    return 0


def cmd_landscape(args) -> int:
    cfg = load_config(args.config)
    ckpt_dir = Path(args.checkpoint) if args.checkpoint else cfg.output
    ckpt, sur = _load_models(cfg, ckpt_dir)
    out = Path(args.out) if args.out else cfg.output
    with output_lock(out):
        _landscape(cfg, ckpt, sur, out)
    print(f"landscape written to {out / 'landscape.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latentmol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-vocab", help="vocabulary and corpus statistics")
    s.add_argument("corpus")
    s.add_argument("--tokenizer", choices=["selfies", "group_selfies"], default="selfies")
    s.add_argument("--groups", help="group dictionary for group_selfies")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_build_vocab)

    s = sub.add_parser("extract-groups", help="mine a fragment dictionary from a corpus")
    s.add_argument("corpus")
    s.add_argument("--min-freq", type=int, default=20)
    s.add_argument("--min-atoms", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract_groups)

    s = sub.add_parser("gen-corpus", help="generate a random desk-scale corpus")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--properties", help="also write oracle values to this property file")
    s.set_defaults(func=cmd_gen_corpus)

    for name, func, text in (
        ("train", cmd_train, "train the VAE and surrogate"),
        ("optimize", cmd_optimize, "latent optimisation from prior samples"),
        ("analyze", cmd_analyze, "latent-space metrics and a landscape slice"),
        ("landscape", cmd_landscape, "landscape slice only"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        if name != "train":
            s.add_argument("--checkpoint", help="directory holding vae.ckpt and surrogate.ckpt")
            s.add_argument("--out", help="output directory (defaults to paths.output)")
        if name == "optimize":
            s.add_argument("--n-starts", type=int)
            s.add_argument("--steps", type=int)
        s.set_defaults(func=func)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LatentMolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
