#!/usr/bin/env python
import unittest
import pytest
from noisyst.vocab import (
    Vocabulary,
    ParallelExample,
    make_sequence,
    check_sequence,
    PAD, BOS, EOS, UNK, BLANK, SEP,
    RESERVED_TOKENS,
)
from noisyst.exceptions import UsageError

import logging
logging.disable(logging.ERROR)


class Test(unittest.TestCase):

    def test_reserved_ids(self):
        assert (PAD, BOS, EOS, UNK, BLANK, SEP) == (0, 1, 2, 3, 4, 5)
        v = Vocabulary()
        assert len(v) == 6
        for i, tok in enumerate(RESERVED_TOKENS):
            assert v.token_to_id(tok) == i

    def test_from_corpus_order(self):
        v = Vocabulary.from_corpus([["b", "a"], ["a", "c", "<sep>"]])
        assert v.tokens[6:] == ["b", "a", "c"]
        assert v.token_to_id("<sep>") == SEP

    def test_encode_decode(self):
        v = Vocabulary(["x", "y"])
        seq = v.encode(["x", "y", "z"])
        assert seq == (6, 7, UNK)
        assert v.decode(seq) == ["x", "y", "<unk>"]
        assert "x" in v
        assert "z" not in v

    def test_add_is_idempotent(self):
        v = Vocabulary()
        assert v.add("q") == 6
        assert v.add("q") == 6
        assert len(v) == 7

    def test_equality(self):
        assert Vocabulary(["a"]) == Vocabulary(["a"])
        assert Vocabulary(["a"]) != Vocabulary(["b"])

    def test_make_sequence(self):
        assert make_sequence([6, 7]) == (6, 7)
        with pytest.raises(UsageError):
            make_sequence([])
        with pytest.raises(UsageError):
            make_sequence([6, 9], vocab_size=8)
        check_sequence((6, 7), 8)

    def test_parallel_example(self):
        ex = ParallelExample((6, SEP, 7), (8,))
        assert ex.source[1] == SEP
        assert ex.target == (8,)
