"""Desk-scale grapheme speech recognition.

Feature extraction, a strided 1D ConvNet acoustic model, two lattice
sequence criteria with exact gradients, and a lexicon-constrained
beam-search decoder with an n-gram language model.  Every dynamic
program in here is checked against brute-force oracles in the test
suite.
"""

from .alphabet import (
    Alphabet,
    AlphabetError,
    collapse_path,
    decode_labels,
    default_alphabet,
    encode_transcription,
    make_alphabet,
)
from .criterion import (
    CriterionError,
    CriterionResult,
    EmissionTable,
    InfeasibleError,
    TransitionTable,
    asg_loss,
    build_asg_graph,
    build_ctc_graph,
    build_full_graph,
    ctc_loss,
    forward_score,
    logadd,
    viterbi,
)
from .decoder import DecodeError, DecodeResult, DecoderConfig, decode, exhaustive_decode
from .features import FeatureSequence, Waveform, mfcc, normalize, power_spectrum
from .lm import LMError, NGramLM, build_lexicon, load_arpa, score_word, sentence_logprob, smear
from .metrics import error_rate, levenshtein

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "AlphabetError",
    "CriterionError",
    "CriterionResult",
    "DecodeError",
    "DecodeResult",
    "DecoderConfig",
    "EmissionTable",
    "FeatureSequence",
    "InfeasibleError",
    "LMError",
    "NGramLM",
    "TransitionTable",
    "Waveform",
    "asg_loss",
    "build_asg_graph",
    "build_ctc_graph",
    "build_full_graph",
    "build_lexicon",
    "collapse_path",
    "ctc_loss",
    "decode",
    "decode_labels",
    "default_alphabet",
    "encode_transcription",
    "error_rate",
    "exhaustive_decode",
    "forward_score",
    "levenshtein",
    "load_arpa",
    "logadd",
    "make_alphabet",
    "mfcc",
    "normalize",
    "power_spectrum",
    "score_word",
    "sentence_logprob",
    "smear",
    "viterbi",
]
