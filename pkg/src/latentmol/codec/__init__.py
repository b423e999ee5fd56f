"""Robust token grammar between token strings and molecular graphs."""

from latentmol.codec.encoder import Match, encode, find_matches
from latentmol.codec.grammar import decode
from latentmol.codec.groups import (
    Fragment,
    GroupDict,
    cut_bonds,
    extract_groups,
    fragment_molecule,
    make_fragment,
    read_groupdict,
    write_groupdict,
)
from latentmol.codec.tokens import (
    BASIC_TOKENS,
    BOS,
    EOS,
    PAD,
    Token,
    atom,
    branch,
    digit,
    group,
    join_tokens,
    parse_token,
    parse_tokens,
    ring,
    split_tokens,
)
from latentmol.codec.vocab import BOS_ID, EOS_ID, PAD_ID, CorpusStats, Vocab, corpus_stats

__all__ = [
    "BASIC_TOKENS", "BOS", "BOS_ID", "CorpusStats", "EOS", "EOS_ID", "Fragment", "GroupDict",
    "Match", "PAD", "PAD_ID", "Token", "Vocab", "atom", "branch", "corpus_stats", "cut_bonds",
    "decode", "digit", "encode", "extract_groups", "find_matches", "fragment_molecule", "group",
    "join_tokens", "make_fragment", "parse_token", "parse_tokens", "read_groupdict", "ring",
    "split_tokens", "write_groupdict",
]
