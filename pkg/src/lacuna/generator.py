"""Scaffold-constrained sequence generation over SMILES tokens.

The reference policy is a backoff n-gram model: counts for every context
length up to `order`, probabilities by normalized interpolation down to an
add-one-smoothed unigram base.  Sampling emits scaffold tokens verbatim and
only generates at ``(*)`` open positions; accepted constrained samples
always recover their scaffold token sequence when the generated fragments
are removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chem import PLACEHOLDER, SmilesError, parse_smiles, tokenize
from .fingerprint import morgan_fingerprint, tanimoto_similarity

START = "^"
END = "$"


class EmptyCorpus(ValueError):
    pass


class NoValidSamples(RuntimeError):
    pass


def _mix_seed(seed: int, index: int) -> int:
    x = (seed * 0x9E3779B97F4A7C15 + index) & ((1 << 64) - 1)
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & ((1 << 64) - 1)
    x ^= x >> 33
    return x


@dataclass(frozen=True)
class TokenVocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def index(self, token: str) -> int:
        return self._index[token]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self):
        return len(self.tokens)


@dataclass
class SamplerConfig:
    max_len: int = 120
    temperature: float = 1.0
    seed: int = 0
    max_attempts: int = 20
    fragment_budget: int = 12
    elite_weight: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class OpenPosition:
    kind: str  # branch | linker | constrained_choice
    location: int  # token offset of the placeholder in the scaffold
    allowed_tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("branch", "linker", "constrained_choice"):
            raise ValueError(f"unknown open position kind {self.kind!r}")
        if self.kind == "constrained_choice" and not self.allowed_tokens:
            raise ValueError("constrained_choice requires allowed_tokens")


class GenerationPolicy:
    """Backoff n-gram next-token model over SMILES tokens."""

    def __init__(self, order: int, vocab: TokenVocab,
                 sequences: list[tuple[tuple[str, ...], float]]):
        self.order = order
        self.vocab = vocab
        self.sequences = sequences
        self._counts: list[dict] = [dict() for _ in range(order + 1)]
        self._unigram = np.zeros(len(vocab))
        self._structural = np.array(
            [t in (START, PLACEHOLDER) for t in vocab.tokens])
        self._tally()
        self._base = self._smoothed_unigram()
        self._cache: dict[tuple[str, ...], np.ndarray] = {}

    def _tally(self):
        for tokens, weight in self.sequences:
            seq = (START,) + tuple(tokens) + (END,)
            for pos in range(1, len(seq)):
                nxt = self.vocab.index(seq[pos])
                self._unigram[nxt] += weight
                for length in range(1, self.order + 1):
                    if pos - length < 0:
                        break
                    ctx = seq[pos - length:pos]
                    table = self._counts[length].setdefault(ctx, {})
                    table[nxt] = table.get(nxt, 0.0) + weight

    def _smoothed_unigram(self) -> np.ndarray:
        counts = self._unigram.copy()
        counts[self._structural] = 0.0
        smoothed = counts + 1.0
        smoothed[self._structural] = 0.0
        return smoothed / smoothed.sum()

    def distribution(self, context) -> np.ndarray:
        """P(next token | context); sums to one, structural tokens at zero."""
        ctx = tuple(context)[-self.order:] if self.order else ()
        if ctx in self._cache:
            return self._cache[ctx]
        probs = self._base
        for length in range(1, min(self.order, len(ctx)) + 1):
            sub = ctx[len(ctx) - length:]
            table = self._counts[length].get(sub)
            if table is None:
                break
            total = sum(table.values())
            level = np.zeros(len(self.vocab))
            for idx, count in table.items():
                level[idx] = count
            probs = (level + probs) / (total + 1.0)
        if len(self._cache) < 200000:
            self._cache[ctx] = probs
        return probs

    def extended(self, extra: list[tuple[tuple[str, ...], float]]
                 ) -> "GenerationPolicy":
        return GenerationPolicy(self.order, self.vocab,
                                self.sequences + list(extra))

    def to_text(self) -> str:
        lines = ["# generation policy v1", f"order {self.order}",
                 "vocab " + " ".join(self.vocab.tokens)]
        for tokens, weight in self.sequences:
            lines.append(f"seq {repr(weight)} " + " ".join(tokens))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GenerationPolicy":
        order = None
        vocab = None
        sequences = []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            kind, rest = line.split(" ", 1)
            if kind == "order":
                order = int(rest)
            elif kind == "vocab":
                vocab = TokenVocab(tuple(rest.split(" ")))
            elif kind == "seq":
                weight, _, body = rest.partition(" ")
                sequences.append((tuple(body.split(" ")) if body else (),
                                  float(weight)))
        if order is None or vocab is None:
            raise ValueError("malformed policy text")
        return cls(order, vocab, sequences)


def train_policy(corpus: list[str], order: int = 6) -> GenerationPolicy:
    """Count-based policy over the tokenized corpus."""
    if not corpus:
        raise EmptyCorpus("corpus is empty")
    if order < 1:
        raise ValueError("order must be >= 1")
    sequences = []
    tokens_seen = set()
    for smiles in corpus:
        tokens = tuple(tokenize(smiles).tokens)
        tokens_seen.update(tokens)
        sequences.append((tokens, 1.0))
    vocab = TokenVocab((START, END, PLACEHOLDER) + tuple(sorted(tokens_seen)))
    return GenerationPolicy(order=order, vocab=vocab, sequences=sequences)


def _draw(rng: np.random.Generator, probs: np.ndarray, temperature: float,
          mask: np.ndarray | None = None) -> int:
    p = probs.copy()
    if mask is not None:
        p[mask] = 0.0
    total = p.sum()
    if total <= 0:
        return -1
    p /= total
    if temperature < 1e-6:
        return int(np.argmax(p))
    if temperature != 1.0:
        with np.errstate(divide="ignore"):
            logs = np.where(p > 0, np.log(p), -np.inf) / temperature
        logs -= logs.max()
        p = np.exp(logs)
        p[np.isnan(p)] = 0.0
        p /= p.sum()
    return int(rng.choice(len(p), p=p))


@dataclass
class SampleResult:
    smiles: str
    tokens: list[str]
    fragment_spans: list[tuple[int, int]]

    def scaffold_tokens(self) -> list[str]:
        """Token sequence with each generated fragment replaced by (*)."""
        out = []
        pos = 0
        for start, end in self.fragment_spans:
            out.extend(self.tokens[pos:start])
            out.append(PLACEHOLDER)
            pos = end
        out.extend(self.tokens[pos:])
        return out


def postprocess(raw_tokens) -> str | None:
    """Repair a raw token sequence into parseable SMILES, or reject.

    One unclosed parenthesis is closed at the end; one dangling ring digit
    is deleted; ring digits used more than twice are renumbered pair by
    pair.  Anything else unrepairable returns None.
    """
    tokens = list(raw_tokens)
    depth = 0
    for token in tokens:
        if token == "(":
            depth += 1
        elif token == ")":
            depth -= 1
            if depth < 0:
                return None
    if depth == 1:
        tokens.append(")")
    elif depth != 0:
        return None

    # pair ring digit occurrences sequentially, renumber pairs canonically
    occurrences: dict[str, list[int]] = {}
    for pos, token in enumerate(tokens):
        if token.isdigit() or (token.startswith("%") and len(token) == 3):
            occurrences.setdefault(token, []).append(pos)
    digit_pool = [str(d) for d in range(1, 10)] + [f"%{d}" for d in range(10, 100)]
    replacements: dict[int, str] = {}
    danglers: list[int] = []
    open_pairs: list[tuple[int, int]] = []
    for token in sorted(occurrences):
        positions = occurrences[token]
        for i in range(0, len(positions) - 1, 2):
            open_pairs.append((positions[i], positions[i + 1]))
        if len(positions) % 2:
            danglers.append(positions[-1])
    if len(danglers) > 1:
        return None
    open_pairs.sort()
    active: list[tuple[int, str]] = []  # (close position, digit)
    for start, end in open_pairs:
        active = [(e, d) for e, d in active if e > start]
        in_use = {d for _, d in active}
        digit = next(d for d in digit_pool if d not in in_use)
        replacements[start] = digit
        replacements[end] = digit
        active.append((end, digit))
    out = []
    for pos, token in enumerate(tokens):
        if pos in replacements:
            out.append(replacements[pos])
        elif danglers and pos == danglers[0]:
            continue
        else:
            out.append(token)
    candidate = "".join(out)
    try:
        parse_smiles(candidate)
    except (SmilesError, ValueError):
        return None
    return candidate


def sample_unconstrained(policy: GenerationPolicy,
                         config: SamplerConfig) -> str | None:
    """Sample START -> END, postprocess, parse-check; None on rejection."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    seq = [START]
    end_index = policy.vocab.index(END)
    for _ in range(config.max_len):
        probs = policy.distribution(seq)
        idx = _draw(rng, probs, config.temperature)
        if idx < 0:
            return None
        token = policy.vocab.tokens[idx]
        if idx == end_index:
            return postprocess(seq[1:])
        seq.append(token)
    return None  # max length exceeded counts as rejection


def _open_ring_digits(tokens) -> set:
    open_digits = set()
    for token in tokens:
        if token.isdigit() or (token.startswith("%") and len(token) == 3):
            if token in open_digits:
                open_digits.discard(token)
            else:
                open_digits.add(token)
    return open_digits


def _sample_fragment(policy, rng, context, config, scaffold_open_digits,
                     stop_token=None):
    """Sample a balanced fragment; stop on `stop_token` (linker) or on the
    parenthesis that closes a branch (stop_token None).  Returns the token
    list or None."""
    vocab = policy.vocab
    end_idx = vocab.index(END)
    fragment: list[str] = []
    depth = 0
    frag_digits: set = set()
    for _ in range(config.fragment_budget):
        probs = policy.distribution(context + fragment)
        mask = np.zeros(len(vocab), dtype=bool)
        mask[end_idx] = True
        for i, token in enumerate(vocab.tokens):
            if token.isdigit() or (token.startswith("%") and len(token) == 3):
                if token in scaffold_open_digits and token not in frag_digits:
                    mask[i] = True
        if ")" in vocab and depth == 0:
            # a depth-0 ")" ends a branch fragment; forbid it when the
            # fragment is empty, has dangling digits, or we are in a linker
            if stop_token is not None or frag_digits or not fragment:
                mask[vocab.index(")")] = True
        idx = _draw(rng, probs, config.temperature, mask)
        if idx < 0:
            return None
        token = vocab.tokens[idx]
        if stop_token is not None and token == stop_token and depth == 0 \
                and not frag_digits:
            return fragment
        if stop_token is None and token == ")" and depth == 0:
            return fragment
        if token == "(":
            depth += 1
        elif token == ")":
            depth -= 1
        elif token.isdigit() or (token.startswith("%") and len(token) == 3):
            if token in frag_digits:
                frag_digits.discard(token)
            else:
                frag_digits.add(token)
        fragment.append(token)
    return None


def sample_scaffold_constrained(policy: GenerationPolicy,
                                placeholder_scaffold: str,
                                config: SamplerConfig,
                                positions: list[OpenPosition] | None = None
                                ) -> SampleResult | None:
    """Emit scaffold tokens verbatim, generating only at open positions.

    Branch positions produce "(" fragment ")" in place of the placeholder;
    linker positions produce a fragment that runs up to the next scaffold
    token; constrained choices substitute one allowed token.  The result
    must parse or the sample is rejected.
    """
    scaffold_tokens = list(tokenize(placeholder_scaffold).tokens)
    offsets = [i for i, t in enumerate(scaffold_tokens) if t == PLACEHOLDER]
    if positions is None:
        positions = [OpenPosition(kind="branch", location=o) for o in offsets]
    by_offset = {p.location: p for p in positions}
    if sorted(by_offset) != offsets:
        raise ValueError("open positions must match placeholder offsets")
    rng = np.random.Generator(np.random.PCG64(config.seed))

    for _ in range(config.max_attempts):
        out: list[str] = []
        spans: list[tuple[int, int]] = []
        failed = False
        for offset, token in enumerate(scaffold_tokens):
            if token != PLACEHOLDER:
                out.append(token)
                continue
            position = by_offset[offset]
            open_digits = _open_ring_digits(
                t for t in out if t.isdigit() or t.startswith("%"))
            context = [START] + out
            if position.kind == "constrained_choice":
                allowed = [t for t in position.allowed_tokens
                           if t in policy.vocab]
                if not allowed:
                    raise ValueError("no allowed tokens present in vocab")
                probs = policy.distribution(context)
                mask = np.ones(len(policy.vocab), dtype=bool)
                for t in allowed:
                    mask[policy.vocab.index(t)] = False
                idx = _draw(rng, probs, config.temperature, mask)
                if idx < 0:
                    idx = policy.vocab.index(allowed[0])
                spans.append((len(out), len(out) + 1))
                out.append(policy.vocab.tokens[idx])
            elif position.kind == "branch":
                fragment = _sample_fragment(policy, rng, context + ["("],
                                            config, open_digits)
                if fragment is None:
                    failed = True
                    break
                spans.append((len(out), len(out) + len(fragment) + 2))
                out.append("(")
                out.extend(fragment)
                out.append(")")
            else:  # linker
                nxt = scaffold_tokens[offset + 1] \
                    if offset + 1 < len(scaffold_tokens) else END
                fragment = _sample_fragment(policy, rng, context, config,
                                            open_digits, stop_token=nxt)
                if fragment is None:
                    failed = True
                    break
                spans.append((len(out), len(out) + len(fragment)))
                out.extend(fragment)
        if failed:
            continue
        smiles = "".join(out)
        try:
            parse_smiles(smiles)
        except (SmilesError, ValueError):
            continue
        return SampleResult(smiles=smiles, tokens=out, fragment_spans=spans)
    return None


@dataclass
class TanimotoScoring:
    """Max Tanimoto similarity to a set of query fingerprints."""
    query_fps: list
    radius: int = 2
    n_bits: int = 2048

    def __call__(self, smiles: str) -> float:
        try:
            fp = morgan_fingerprint(parse_smiles(smiles), self.radius, self.n_bits)
        except (SmilesError, ValueError):
            return 0.0
        return max(tanimoto_similarity(fp, q) for q in self.query_fps)


@dataclass
class LensScoring:
    """exp(-|forest score - target| / tau): 1.0 on target, decaying away."""
    forest: object
    target: float
    tau: float = 0.01
    radius: int = 2
    n_bits: int = 2048

    def __call__(self, smiles: str) -> float:
        from .anomaly import score as forest_score

        try:
            fp = morgan_fingerprint(parse_smiles(smiles), self.radius, self.n_bits)
        except (SmilesError, ValueError):
            return 0.0
        return math.exp(-abs(forest_score(self.forest, fp) - self.target)
                        / self.tau)


def score_candidates(candidates: list[str], scoring) -> list[float]:
    """Apply a scoring function; parse failures already score 0 inside."""
    return [float(scoring(c)) for c in candidates]


def refine_policy(policy: GenerationPolicy, scaffolds: list[str] | None,
                  scoring, rounds: int, batch: int, elite_fraction: float,
                  config: SamplerConfig
                  ) -> tuple[GenerationPolicy, list[float]]:
    """Score-guided iterated retraining (cross-entropy-method style).

    Each round samples `batch` candidates across the placeholder scaffolds
    (unconstrained when none), keeps the top elite_fraction by score, and
    refits the policy on the original corpus plus all accumulated elites
    weighted by config.elite_weight.  Returns the refined policy and the
    per-round mean elite scores.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0.0 < elite_fraction <= 1.0:
        raise ValueError("elite_fraction must be in (0, 1]")
    history: list[float] = []
    current = policy
    elites_accum: list[tuple[tuple[str, ...], float]] = []
    for round_index in range(rounds):
        accepted: list[str] = []
        for b in range(batch):
            seed = _mix_seed(config.seed, round_index * batch + b + 1)
            sample_config = SamplerConfig(
                max_len=config.max_len, temperature=config.temperature,
                seed=seed, max_attempts=config.max_attempts,
                fragment_budget=config.fragment_budget,
                elite_weight=config.elite_weight)
            if scaffolds:
                scaffold = scaffolds[b % len(scaffolds)]
                result = sample_scaffold_constrained(current, scaffold,
                                                     sample_config)
                smiles = result.smiles if result else None
            else:
                smiles = sample_unconstrained(current, sample_config)
            if smiles is not None:
                accepted.append(smiles)
        if not accepted:
            raise NoValidSamples(f"round {round_index}: no parseable samples")
        scores = score_candidates(accepted, scoring)
        ranked = sorted(zip(accepted, scores), key=lambda x: (-x[1], x[0]))
        n_elite = max(1, math.ceil(elite_fraction * len(ranked)))
        elites = ranked[:n_elite]
        history.append(float(np.mean([s for _, s in elites])))
        elites_accum.extend(
            (tuple(tokenize(smiles).tokens), config.elite_weight)
            for smiles, _ in elites)
        current = policy.extended(elites_accum)
    return current, history
