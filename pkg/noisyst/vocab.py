from .exceptions import UsageError
from collections import namedtuple

PAD, BOS, EOS, UNK, BLANK, SEP = range(6)

RESERVED_TOKENS = ["<pad>", "<s>", "</s>", "<unk>", "<blank>", "<sep>"]

ParallelExample = namedtuple("ParallelExample", ["source", "target"])


class Vocabulary(object):
    """
    Bidirectional token <-> id map. The six control tokens always occupy
    ids 0..5, in the order of RESERVED_TOKENS.
    """

    def __init__(self, tokens=()):
        self.tokens = list(RESERVED_TOKENS)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        for t in tokens:
            self.add(t)

    @classmethod
    def from_corpus(cls, token_lists):
        seen = set(RESERVED_TOKENS)
        ordered = []
        for tokens in token_lists:
            for t in tokens:
                if t not in seen:
                    seen.add(t)
                    ordered.append(t)
        return cls(ordered)

    def add(self, token):
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"<Vocabulary:{len(self)}>"

    def token_to_id(self, token):
        return self.index.get(token, UNK)

    def id_to_token(self, i):
        return self.tokens[i]

    def encode(self, tokens):
        return make_sequence(self.token_to_id(t) for t in tokens)

    def decode(self, ids):
        return [self.tokens[i] for i in ids]


def make_sequence(ids, vocab_size=None):
    seq = tuple(int(i) for i in ids)
    if len(seq) == 0:
        raise UsageError("A sequence must contain at least one token")
    if vocab_size is not None:
        check_sequence(seq, vocab_size)
    return seq


def check_sequence(seq, vocab_size):
    for i in seq:
        if i < 0 or i >= vocab_size:
            raise UsageError(f"Token id {i} is outside a vocabulary of {vocab_size}")
        if i == PAD:
            raise UsageError("PAD may not appear inside a sequence")
    return seq
