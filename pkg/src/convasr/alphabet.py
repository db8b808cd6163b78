"""Grapheme inventory and repetition-label transcription coding.

The acoustic model emits one score per grapheme.  Instead of a blank
label, runs of identical letters are rewritten with two dedicated
repetition labels: "2" marks a letter written twice in a row and "3"
a letter written three times, so "caterpillar" becomes
c,a,t,e,r,p,i,l,2,a,r.  Encoded sequences never contain two identical
adjacent labels, which is what the lattice criteria rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_LETTERS = "abcdefghijklmnopqrstuvwxyz'"
SILENCE = "|"
REP2 = "2"
REP3 = "3"


class AlphabetError(ValueError):
    """Raised for unspellable input or malformed label sequences."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered grapheme inventory with silence and repetition labels.

    ``symbols`` is the id -> symbol mapping (ids are 0..len-1).  The
    default inventory has 30 symbols: 26 letters, the apostrophe,
    silence, and the two repetition labels.
    """

    symbols: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise AlphabetError("duplicate symbols in alphabet")
        for special in (SILENCE, REP2, REP3):
            if special not in self.symbols:
                raise AlphabetError(f"alphabet is missing the {special!r} symbol")
        object.__setattr__(self, "index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def silence_id(self) -> int:
        return self.index[SILENCE]

    @property
    def rep2_id(self) -> int:
        return self.index[REP2]

    @property
    def rep3_id(self) -> int:
        return self.index[REP3]

    @property
    def letters(self) -> tuple[str, ...]:
        """Symbols that may start or extend a spelled word."""
        special = {SILENCE, REP2, REP3}
        return tuple(s for s in self.symbols if s not in special)

    def is_letter(self, label: int) -> bool:
        return self.symbols[label] not in (SILENCE, REP2, REP3)

    def is_repetition(self, label: int) -> bool:
        return label in (self.rep2_id, self.rep3_id)


def default_alphabet() -> Alphabet:
    """The 30-symbol inventory: a-z, apostrophe, silence, and "2"/"3"."""
    return Alphabet(tuple(DEFAULT_LETTERS) + (SILENCE, REP2, REP3))


def make_alphabet(letters: str) -> Alphabet:
    """Build an inventory from a custom letter set (silence and
    repetition labels are appended automatically)."""
    return Alphabet(tuple(letters) + (SILENCE, REP2, REP3))


def encode_transcription(text: str, alphabet: Alphabet) -> list[int]:
    """Encode text into label ids with repetition labels.

    Input is lowercased.  Whitespace runs collapse to a single silence
    label (leading/trailing whitespace is dropped), so the encoded
    sequence never carries two identical adjacent ids.  Runs of a
    letter are split greedily left to right into chunks of at most
    three: "aaaa" encodes as a,3,a.

    Raises AlphabetError naming the character and its offset when the
    text contains a symbol outside the inventory.
    """
    lowered = text.lower()
    ids: list[int] = []
    n = len(lowered)
    i = 0
    pending_sep = False
    while i < n:
        ch = lowered[i]
        if ch.isspace():
            pending_sep = True
            i += 1
            continue
        if ch in (SILENCE, REP2, REP3) or ch not in alphabet.index:
            raise AlphabetError(f"unspellable character {ch!r} at offset {i}")
        if pending_sep and ids:
            ids.append(alphabet.silence_id)
        pending_sep = False
        run = 1
        while i + run < n and lowered[i + run] == ch:
            run += 1
        label = alphabet.index[ch]
        remaining = run
        while remaining > 0:
            chunk = min(remaining, 3)
            ids.append(label)
            if chunk == 2:
                ids.append(alphabet.rep2_id)
            elif chunk == 3:
                ids.append(alphabet.rep3_id)
            remaining -= chunk
        i += run
    return ids


def decode_labels(labels, alphabet: Alphabet, strict: bool = True) -> str:
    """Expand repetition labels back into text (inverse of encoding).

    A repetition label doubles or triples the letter immediately before
    it; silence decodes to a single space.  With ``strict`` a repetition
    label in first position, after silence, or after another repetition
    label raises AlphabetError; otherwise such labels are dropped, which
    is useful when decoding unconstrained model output.
    """
    out: list[str] = []
    prev: int | None = None
    for pos, label in enumerate(labels):
        label = int(label)
        if label < 0 or label >= len(alphabet):
            raise AlphabetError(f"label id {label} out of range at position {pos}")
        if alphabet.is_repetition(label):
            if prev is None or not alphabet.is_letter(prev):
                if strict:
                    where = "first position" if prev is None else f"position {pos}"
                    raise AlphabetError(f"repetition label without preceding letter at {where}")
                prev = label
                continue
            copies = 1 if label == alphabet.rep2_id else 2
            out.append(alphabet.symbols[prev] * copies)
        elif label == alphabet.silence_id:
            out.append(" ")
        else:
            out.append(alphabet.symbols[label])
        prev = label
    return "".join(out)


def collapse_path(frame_labels, alphabet: Alphabet) -> list[int]:
    """Merge consecutive duplicate frame labels into one emission.

    A lattice path that stays on the same state for several frames
    represents a single label; this recovers the label sequence a
    Viterbi path stands for.  Empty input collapses to an empty list.
    """
    out: list[int] = []
    for label in frame_labels:
        label = int(label)
        if label < 0 or label >= len(alphabet):
            raise AlphabetError(f"label id {label} out of range")
        if not out or out[-1] != label:
            out.append(label)
    return out


def save_alphabet(alphabet: Alphabet, path) -> None:
    """Write one symbol per line; the line number is the label id."""
    with open(path, "w", encoding="utf-8") as f:
        for s in alphabet.symbols:
            f.write(s + "\n")


def load_alphabet(path) -> Alphabet:
    with open(path, encoding="utf-8") as f:
        symbols = [line.rstrip("\n") for line in f if line.rstrip("\n")]
    return Alphabet(tuple(symbols))
