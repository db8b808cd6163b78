"""Backoff n-gram language model (ARPA text format) and grapheme lexicon.

Scores stay in ARPA's log10 domain throughout this module; the decoder
multiplies by ln(10) when mixing them with natural-log acoustic scores.
Keeping the raw file values makes save/load round-trips bit-identical.

The lexicon is a trie over repetition-encoded grapheme spellings.  Each
node can be "smeared" with the best unigram score among the words below
it, giving partial words an admissible language-model estimate during
beam search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .alphabet import Alphabet, encode_transcription

LN10 = 2.302585092994046  # natural log of 10: converts log10 to ln

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class LMError(ValueError):
    """Raised for malformed models or failed queries."""


class ArpaParseError(LMError):
    """Raised with a line number when an ARPA file is malformed."""


@dataclass
class NGramLM:
    order: int
    vocab: dict  # word -> id
    words: list  # id -> word
    # tables[n] maps n-tuples of word ids to (log10 prob, log10 backoff);
    # backoff is 0.0 when the file omits it
    tables: list

    @property
    def vocab_size(self) -> int:
        return len(self.words)

    def word_id(self, word: str, oov: str = "strict") -> int:
        wid = self.vocab.get(word)
        if wid is None:
            if oov == "unk" and UNK in self.vocab:
                return self.vocab[UNK]
            raise LMError(f"out-of-vocabulary word: {word!r}")
        return wid

    def start_state(self) -> tuple:
        if BOS in self.vocab:
            return (self.vocab[BOS],)
        return ()


def load_arpa(path) -> NGramLM:
    """Parse an ARPA model; malformed input raises with a line number."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()

    def fail(lineno, msg):
        raise ArpaParseError(f"line {lineno}: {msg}")

    counts: dict[int, int] = {}
    i = 0
    n_lines = len(lines)
    while i < n_lines and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            fail(i + 1, f"expected \\data\\ header, got {lines[i].strip()!r}")
        i += 1
    if i == n_lines:
        fail(n_lines, "missing \\data\\ header")
    i += 1
    while i < n_lines:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("\\"):
            break
        if not line.startswith("ngram "):
            fail(i + 1, f"expected 'ngram N=count', got {line!r}")
        try:
            order_part, count_part = line[len("ngram ") :].split("=")
            order, count = int(order_part), int(count_part)
        except ValueError:
            fail(i + 1, f"cannot parse count line {line!r}")
        if order < 1 or count < 0:
            fail(i + 1, f"invalid ngram count {line!r}")
        if order in counts:
            fail(i + 1, f"duplicate count for order {order}")
        counts[order] = count
        i += 1
    if not counts:
        fail(i, "no ngram counts declared")
    max_order = max(counts)
    if sorted(counts) != list(range(1, max_order + 1)):
        fail(i, f"non-contiguous ngram orders {sorted(counts)}")

    vocab: dict[str, int] = {}
    words: list[str] = []
    tables: list[dict] = [dict() for _ in range(max_order + 1)]
    seen_sections: set[int] = set()
    order = None
    while i < n_lines:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line == "\\end\\":
            for n in range(1, max_order + 1):
                if n not in seen_sections:
                    fail(i + 1, f"missing \\{n}-grams: section")
                if len(tables[n]) != counts[n]:
                    fail(
                        i + 1,
                        f"{n}-gram section has {len(tables[n])} entries, "
                        f"header declared {counts[n]}",
                    )
            return NGramLM(max_order, vocab, words, tables)
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                order = int(line[1 : -len("-grams:")])
            except ValueError:
                fail(i + 1, f"bad section header {line!r}")
            if order not in counts:
                fail(i + 1, f"section \\{order}-grams: not declared in \\data\\")
            if order in seen_sections:
                fail(i + 1, f"duplicate \\{order}-grams: section")
            seen_sections.add(order)
            i += 1
            continue
        if order is None:
            fail(i + 1, f"entry before any section: {line!r}")
        parts = line.split()
        has_backoff = len(parts) == order + 2
        if not has_backoff and len(parts) != order + 1:
            fail(i + 1, f"expected {order + 1} or {order + 2} fields, got {len(parts)}")
        if has_backoff and order == max_order:
            fail(i + 1, "backoff weight on highest-order entry")
        try:
            prob = float(parts[0])
            backoff = float(parts[-1]) if has_backoff else 0.0
        except ValueError:
            fail(i + 1, f"bad float in entry {line!r}")
        if prob > 0.0:
            fail(i + 1, f"positive log10 probability {prob}")
        gram_words = parts[1 : order + 1]
        ids = []
        for w in gram_words:
            if order == 1:
                if w in vocab:
                    fail(i + 1, f"duplicate unigram {w!r}")
                vocab[w] = len(words)
                words.append(w)
            elif w not in vocab:
                fail(i + 1, f"word {w!r} not in unigram vocabulary")
            ids.append(vocab[w])
        key = tuple(ids)
        if key in tables[order]:
            fail(i + 1, f"duplicate {order}-gram {' '.join(gram_words)!r}")
        tables[order][key] = (prob, backoff)
        i += 1
    fail(n_lines, "missing \\end\\ marker")


def save_arpa(lm: NGramLM, path) -> None:
    """Write the model back out; floats use shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for n in range(1, lm.order + 1):
            f.write(f"ngram {n}={len(lm.tables[n])}\n")
        for n in range(1, lm.order + 1):
            f.write(f"\n\\{n}-grams:\n")
            for key, (prob, backoff) in lm.tables[n].items():
                gram = " ".join(lm.words[i] for i in key)
                if n < lm.order and backoff != 0.0:
                    f.write(f"{prob!r}\t{gram}\t{backoff!r}\n")
                else:
                    f.write(f"{prob!r}\t{gram}\n")
        f.write("\n\\end\\\n")


def score_word(lm: NGramLM, state: tuple, word, oov: str = "strict"):
    """Backoff query: returns (log10 prob, new state).

    ``state`` is an opaque context of word ids (use ``lm.start_state()``
    to begin a sentence).  If the full n-gram is absent the context's
    backoff weight is added and the context shortened, recursively.
    """
    wid = word if isinstance(word, int) else lm.word_id(word, oov)
    ctx = tuple(state)[-(lm.order - 1) :] if lm.order > 1 else ()
    score = 0.0
    while True:
        hit = lm.tables[len(ctx) + 1].get(ctx + (wid,))
        if hit is not None:
            score += hit[0]
            break
        if not ctx:
            # word absent even as a unigram
            raise LMError(f"word {lm.words[wid]!r} has no unigram entry")
        bow_entry = lm.tables[len(ctx)].get(ctx)
        if bow_entry is not None:
            score += bow_entry[1]
        ctx = ctx[1:]
    new_state = (tuple(state) + (wid,))[-(lm.order - 1) :] if lm.order > 1 else ()
    return score, new_state


def unigram_score(lm: NGramLM, word: str) -> float:
    hit = lm.tables[1].get((lm.word_id(word),))
    if hit is None:
        raise LMError(f"word {word!r} has no unigram entry")
    return hit[0]


def sentence_logprob(lm: NGramLM, sentence, oov: str = "strict") -> float:
    """Log10 probability of a word sequence with sentence sentinels.

    Scores each word left to right starting from the begin-of-sentence
    context, then the end-of-sentence token (when the model defines it).
    """
    words = sentence.split() if isinstance(sentence, str) else list(sentence)
    state = lm.start_state()
    total = 0.0
    for w in words:
        s, state = score_word(lm, state, w, oov)
        total += s
    if EOS in lm.vocab:
        s, _ = score_word(lm, state, EOS, oov)
        total += s
    return total


@dataclass
class TrieNode:
    label: int  # grapheme id on the incoming edge (-1 at the root)
    children: dict = field(default_factory=dict)  # grapheme id -> TrieNode
    word_ids: list = field(default_factory=list)  # words whose spelling ends here
    smeared: float = 0.0  # best unigram log10 score in this subtree


@dataclass
class LexiconTrie:
    root: TrieNode
    words: list  # word id -> word string
    spellings: list  # word id -> list of grapheme ids
    alphabet: Alphabet

    @property
    def num_words(self) -> int:
        return len(self.words)


def build_lexicon(words, alphabet: Alphabet, spellings=None) -> LexiconTrie:
    """Trie over repetition-encoded spellings.

    By default each word is spelled with ``encode_transcription``;
    explicit ``spellings`` (parallel list of grapheme-id lists) may
    override, in which case several words can share one node.
    """
    words = list(words)
    if spellings is None:
        spellings = []
        for w in words:
            if any(ch.isspace() for ch in w):
                raise LMError(f"lexicon word {w!r} contains whitespace")
            spellings.append(encode_transcription(w, alphabet))
    root = TrieNode(label=-1)
    for wid, spelling in enumerate(spellings):
        if not spelling:
            raise LMError(f"lexicon word {words[wid]!r} has an empty spelling")
        node = root
        prev = None
        for gid in spelling:
            gid = int(gid)
            if gid < 0 or gid >= len(alphabet):
                raise LMError(f"spelling of {words[wid]!r} has invalid grapheme id {gid}")
            if gid == alphabet.silence_id:
                raise LMError(f"spelling of {words[wid]!r} contains the silence symbol")
            if gid == prev:
                # adjacent identical labels collapse to one emission and
                # could never be matched; repetition labels exist for this
                raise LMError(
                    f"spelling of {words[wid]!r} repeats a label adjacently; "
                    "use the repetition labels instead"
                )
            prev = gid
            nxt = node.children.get(gid)
            if nxt is None:
                nxt = TrieNode(label=gid)
                node.children[gid] = nxt
            node = nxt
        node.word_ids.append(wid)
    return LexiconTrie(root, words, [list(s) for s in spellings], alphabet)


def smear(trie: LexiconTrie, lm: NGramLM, mode: str = "max") -> LexiconTrie:
    """Assign each node the best unigram log10 score in its subtree.

    mode="max" keeps the best word (the usual admissible estimate);
    mode="logadd" accumulates the subtree mass instead.  Every lexicon
    word must be in the LM vocabulary.  Mutates and returns the trie.
    """
    if mode not in ("max", "logadd"):
        raise LMError(f"unknown smear mode {mode!r}")
    word_scores = [unigram_score(lm, w) for w in trie.words]

    def visit(node: TrieNode) -> float:
        scores = [word_scores[wid] for wid in node.word_ids]
        scores += [visit(child) for child in node.children.values()]
        if mode == "max":
            node.smeared = max(scores)
        else:
            import math

            top = max(scores)
            node.smeared = top + math.log10(sum(10.0 ** (s - top) for s in scores))
        return node.smeared

    visit(trie.root)
    return trie


def save_lexicon(trie: LexiconTrie, path) -> None:
    """One line per word: word TAB space-separated spelling symbols."""
    with open(path, "w", encoding="utf-8") as f:
        for word, spelling in zip(trie.words, trie.spellings):
            symbols = " ".join(trie.alphabet.symbols[g] for g in spelling)
            f.write(f"{word}\t{symbols}\n")


def load_lexicon(path, alphabet: Alphabet) -> LexiconTrie:
    words, spellings = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise LMError(f"line {lineno}: expected 'word<TAB>spelling'")
            word, spelling = line.split("\t", 1)
            ids = []
            for sym in spelling.split():
                if sym not in alphabet.index:
                    raise LMError(f"line {lineno}: unknown grapheme {sym!r}")
                ids.append(alphabet.index[sym])
            words.append(word)
            spellings.append(ids)
    return build_lexicon(words, alphabet, spellings)
