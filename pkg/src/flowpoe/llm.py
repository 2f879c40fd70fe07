"""Binned expert densities from token log-probabilities.

A completion service that reports top-k token log-probabilities per generated
position induces a density over numbers written in a fixed-width decimal
format: the probability of a rendered value is the product of per-position
token probabilities, each renormalized over the tokens that are valid at that
position (digits, an optional leading minus, the decimal point).  Because
every bin probability is such a prefix product, summing the ten children of a
prefix reproduces the parent's probability exactly, and the induced
BinnedDensity is proper by construction.

Two consumers: marginal densities (one prompt and density per target, the
independent-marginals route) and autoregressive sampling (targets sampled
sequentially, each sampled pair appended to the next prompt's context).

The scripted client answers from a JSON rule table and keeps everything
offline; the HTTP client speaks an OpenAI-style completions protocol.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass

import numpy as np

from .binned import BinnedDensity, normalize
from .errors import (ClientError, ConfigError, ContractError,
                     DegenerateDensityError, FormatError, ProtocolError,
                     SamplingError)
from .tasks import RegressionTask

__all__ = [
    "PromptConfig", "TokenDistribution", "ScriptedClient",
    "HttpCompletionClient", "CachingClient", "order_context", "format_value",
    "format_prompt", "digit_bin_density", "density_to_model_space",
    "marginal_densities", "autoregressive_sample",
]

_ORDERINGS = ("nearest_to_target", "left_to_right")
_DIGITS = tuple("0123456789")

ENDPOINT_ENV = "FLOWPOE_LLM_ENDPOINT"
API_KEY_ENV = "FLOWPOE_LLM_API_KEY"


@dataclass(frozen=True)
class PromptConfig:
    """Prompt layout and the fixed-width number format.

    Values are mapped model-space -> prompt-space as scale*y + offset before
    rendering; densities built from prompts are mapped back through the
    inverse.  decimal_digits sets the bin resolution 10^-decimal_digits.
    """

    preamble: str = ""
    pair_separator: str = "\n"
    xy_separator: str = ", "
    decimal_digits: int = 2
    integer_digits: int = 1
    scale: float = 1.0
    offset: float = 0.0
    ordering: str = "nearest_to_target"

    def __post_init__(self):
        if self.decimal_digits < 1:
            raise ConfigError("decimal_digits must be >= 1")
        if self.integer_digits < 1:
            raise ConfigError("integer_digits must be >= 1")
        if not self.scale > 0:
            raise ConfigError("scale must be > 0")
        if self.ordering not in _ORDERINGS:
            raise ConfigError(f"ordering must be one of {_ORDERINGS}")

    @property
    def n_value_positions(self) -> int:
        """Characters in a rendered nonnegative value: digits, dot, decimals."""
        return self.integer_digits + 1 + self.decimal_digits

    def to_model_space(self, prompt_values):
        return (np.asarray(prompt_values, dtype=float) - self.offset) / self.scale

    def to_prompt_space(self, model_values):
        return self.scale * np.asarray(model_values, dtype=float) + self.offset


@dataclass(frozen=True)
class TokenDistribution:
    """Token -> probability at one position, renormalized over the candidates."""

    probs: dict

    def __post_init__(self):
        total = sum(self.probs.values())
        if total <= 0 or any(p < 0 for p in self.probs.values()):
            raise ProtocolError("token probabilities must be nonnegative with positive total")
        object.__setattr__(self, "probs",
                           {tok: p / total for tok, p in self.probs.items()})

    @classmethod
    def from_logprobs(cls, logprobs: dict) -> "TokenDistribution":
        mx = max(logprobs.values())
        return cls({tok: float(np.exp(lp - mx)) for tok, lp in logprobs.items()})

    def restricted(self, valid: tuple) -> tuple[dict, float]:
        """(renormalized distribution over valid tokens, kept raw mass)."""
        kept = {tok: p for tok, p in self.probs.items() if tok in valid and p > 0}
        total = sum(kept.values())
        if total <= 0:
            return {}, 0.0
        return {tok: p / total for tok, p in kept.items()}, total

    def sample(self, rng: np.random.Generator, temperature: float = 1.0) -> str:
        toks = sorted(self.probs)
        p = np.array([self.probs[t] for t in toks])
        if temperature != 1.0:
            if temperature <= 0:
                raise ConfigError("temperature must be > 0")
            logits = np.log(np.maximum(p, 1e-300)) / temperature
            logits -= logits.max()
            p = np.exp(logits)
        p /= p.sum()
        return toks[rng.choice(len(toks), p=p)]


def order_context(context_x: np.ndarray, target_x,
                  ordering: str) -> np.ndarray:
    """Index order for context pairs; stable, so ties keep original order.

    nearest_to_target: ascending |x_i - target_x|.  left_to_right: ascending
    first coordinate of x.
    """
    if ordering == "nearest_to_target":
        d = np.linalg.norm(context_x - np.asarray(target_x, dtype=float), axis=-1)
        return np.argsort(d, kind="stable")
    if ordering == "left_to_right":
        return np.argsort(context_x[:, 0], kind="stable")
    raise ConfigError(f"ordering must be one of {_ORDERINGS}")


def format_value(value: float, cfg: PromptConfig) -> str:
    """Render a prompt-space value in the fixed-width format.

    The integer part is zero-padded to integer_digits; negatives take a
    leading minus.  Values that round outside the representable range raise.
    """
    unit = 10 ** cfg.decimal_digits
    scaled = int(np.round(abs(float(value)) * unit))
    if scaled >= 10 ** (cfg.integer_digits + cfg.decimal_digits):
        raise FormatError(
            f"value {value} does not fit {cfg.integer_digits} integer digits")
    digits = str(scaled).zfill(cfg.integer_digits + cfg.decimal_digits)
    body = f"{digits[:cfg.integer_digits]}.{digits[cfg.integer_digits:]}"
    return ("-" + body) if (value < 0 and scaled > 0) else body


def _format_pair(x_val: np.ndarray, y_text: str, cfg: PromptConfig) -> str:
    xs = " ".join(format_value(v, cfg) for v in np.atleast_1d(x_val))
    return f"{xs}{cfg.xy_separator}{y_text}"


def format_prompt(task: RegressionTask, cfg: PromptConfig, target_x,
                  extra_pairs: list | None = None) -> str:
    """Deterministic prompt: preamble, ordered context pairs, target x prefix.

    Context y values are mapped to prompt space before rendering; x values
    are rendered as-is.  extra_pairs (x, prompt-space y string) are appended
    to the context before ordering, which is how autoregressive sampling
    threads its own outputs back in.
    """
    ctx_x = [np.atleast_1d(x) for x in task.context_x]
    ctx_y = [format_value(v, cfg)
             for v in np.atleast_1d(cfg.to_prompt_space(task.context_y[:, 0]))
             ] if task.n_context else []
    if extra_pairs:
        for x_val, y_text in extra_pairs:
            ctx_x.append(np.atleast_1d(x_val))
            ctx_y.append(y_text)
    parts = [cfg.preamble] if cfg.preamble else []
    if ctx_x:
        stack = np.stack(ctx_x)
        order = order_context(stack, target_x, cfg.ordering)
        parts.extend(_format_pair(stack[i], ctx_y[i], cfg) for i in order)
    xs = " ".join(format_value(v, cfg) for v in np.atleast_1d(target_x))
    parts.append(f"{xs}{cfg.xy_separator}")
    return cfg.pair_separator.join(parts)


class ScriptedClient:
    """Offline completion client answering from first-match-wins JSON rules.

    Script schema: {"rules": [{"match": {"kind": "suffix"|"contains"|"regex",
    "value": ...}, "positions": [{token: prob, ...}, ...]}, ...],
    "default": [positions]}.  Positions beyond a rule's list have no mass.
    """

    def __init__(self, script: dict):
        self.rules = []
        for rule in script.get("rules", []):
            match = rule["match"]
            if match["kind"] not in ("suffix", "contains", "regex"):
                raise ConfigError(f"unknown match kind {match['kind']!r}")
            self.rules.append((match["kind"], match["value"], rule["positions"]))
        self.default = script.get("default")
        self.n_requests = 0
        self.model = script.get("model", "scripted")

    @classmethod
    def from_file(cls, path) -> "ScriptedClient":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _positions_for(self, prompt: str) -> list:
        for kind, value, positions in self.rules:
            if kind == "suffix" and prompt.endswith(value):
                return positions
            if kind == "contains" and value in prompt:
                return positions
            if kind == "regex" and re.search(value, prompt):
                return positions
        if self.default is not None:
            return self.default
        raise ClientError("no scripted rule matches the prompt")

    def top_logprobs(self, prompt: str, n_positions: int) -> list:
        self.n_requests += 1
        positions = self._positions_for(prompt)
        out = []
        for j in range(n_positions):
            probs = positions[j] if j < len(positions) else {}
            out.append(TokenDistribution(probs) if probs else None)
        return out


class HttpCompletionClient:
    """OpenAI-style completions client returning per-position top-k logprobs.

    Sends POST {endpoint}/completions with model, prompt, max_tokens,
    temperature 0 and logprobs=top_k; reads
    choices[0].logprobs.top_logprobs (a token->logprob dict per position).
    Endpoint and credentials come from arguments or the FLOWPOE_LLM_ENDPOINT
    and FLOWPOE_LLM_API_KEY environment variables.
    """

    def __init__(self, model: str, endpoint: str | None = None,
                 api_key: str | None = None, top_k: int = 20,
                 timeout: float = 30.0, max_retries: int = 3):
        self.model = model
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ConfigError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        self.api_key = api_key or os.environ.get(API_KEY_ENV)
        self.top_k = top_k
        self.timeout = timeout
        self.max_retries = max_retries
        self.n_requests = 0

    def top_logprobs(self, prompt: str, n_positions: int) -> list:
        import requests

        payload = {"model": self.model, "prompt": prompt,
                   "max_tokens": n_positions, "temperature": 0,
                   "logprobs": self.top_k}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = self.endpoint.rstrip("/") + "/completions"
        last_error = None
        for attempt in range(self.max_retries):
            try:
                self.n_requests += 1
                resp = requests.post(url, json=payload, headers=headers,
                                     timeout=self.timeout)
                if resp.status_code >= 500:
                    last_error = ClientError(f"server error {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise ClientError(f"request failed: {resp.status_code} {resp.text[:200]}")
                return self._parse(resp.json(), n_positions)
            except requests.RequestException as exc:
                last_error = exc
        raise ClientError(f"request failed after {self.max_retries} attempts: {last_error}")

    @staticmethod
    def _parse(body: dict, n_positions: int) -> list:
        try:
            per_pos = body["choices"][0]["logprobs"]["top_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(
                "response lacks choices[0].logprobs.top_logprobs") from exc
        out = []
        for j in range(n_positions):
            if j < len(per_pos) and per_pos[j]:
                out.append(TokenDistribution.from_logprobs(per_pos[j]))
            else:
                out.append(None)
        return out


class CachingClient:
    """Wraps a client with an in-memory (optionally on-disk JSON) cache.

    Keyed by (model, prompt, n_positions); safe under concurrent use.
    """

    def __init__(self, inner, path=None):
        self.inner = inner
        self.path = path
        self._lock = threading.Lock()
        self._cache: dict[str, list] = {}
        self.hits = 0
        self.misses = 0
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                stored = json.load(fh)
            self._cache = {k: [TokenDistribution(p) if p else None for p in v]
                           for k, v in stored.items()}

    @property
    def model(self):
        return getattr(self.inner, "model", "unknown")

    def _key(self, prompt: str, n_positions: int) -> str:
        return json.dumps([self.model, prompt, n_positions])

    def top_logprobs(self, prompt: str, n_positions: int) -> list:
        key = self._key(prompt, n_positions)
        with self._lock:
            if key in self._cache:
                self.hits += 1
                return self._cache[key]
        result = self.inner.top_logprobs(prompt, n_positions)
        with self._lock:
            self.misses += 1
            self._cache[key] = result
            if self.path is not None:
                dump = {k: [d.probs if d is not None else None for d in v]
                        for k, v in self._cache.items()}
                tmp = f"{self.path}.tmp"
                with open(tmp, "w", encoding="utf-8") as fh:
                    json.dump(dump, fh)
                os.replace(tmp, self.path)
        return result


def _restricted(dist, valid: tuple) -> tuple[dict, float]:
    if dist is None:
        return {}, 0.0
    return dist.restricted(valid)


def _digit_vector(dist) -> np.ndarray:
    probs, _ = _restricted(dist, _DIGITS)
    v = np.zeros(10)
    for tok, p in probs.items():
        v[int(tok)] = p
    return v


def _branch_masses(positions: list, start: int, cfg: PromptConfig) -> np.ndarray:
    """Joint digit-string masses (10^(ID+N),) for one sign branch.

    Multiplies renormalized integer-digit vectors, requires the dot token to
    be available at its slot, then the decimal-digit vectors.  The flattened
    kron ordering enumerates digit strings in increasing numeric order.
    """
    mass = np.ones(1)
    pos = start
    for _ in range(cfg.integer_digits):
        mass = np.kron(mass, _digit_vector(positions[pos]))
        pos += 1
    dot_probs, _ = _restricted(positions[pos], (".",))
    if not dot_probs:
        return np.zeros(10 ** (cfg.integer_digits + cfg.decimal_digits))
    pos += 1
    for _ in range(cfg.decimal_digits):
        mass = np.kron(mass, _digit_vector(positions[pos]))
        pos += 1
    return mass


def digit_bin_density(client, prompt: str, cfg: PromptConfig,
                      diagnostics: dict | None = None) -> BinnedDensity:
    """Prompt-space BinnedDensity from prefix products of token probabilities.

    The grid is 2*10^(integer_digits+decimal_digits) uniform bins covering
    [-10^integer_digits, 10^integer_digits): a nonnegative rendering "a.bc"
    owns [v, v+w) and a negative rendering "-a.bc" owns [-v-w, -v), w the bin
    width.  The first position splits mass between a minus token and the
    first integer digit; every position is renormalized over its valid
    tokens, so masses sum to one exactly whenever any branch survives.
    """
    n_positions = 1 + cfg.n_value_positions
    positions = client.top_logprobs(prompt, n_positions)
    if len(positions) < n_positions:
        raise ProtocolError(
            f"client returned {len(positions)} positions, need {n_positions}")

    first, kept_first = _restricted(positions[0], _DIGITS + ("-",))
    if diagnostics is not None:
        diagnostics["kept_mass_first_position"] = kept_first
    p_neg = first.get("-", 0.0)

    half = 10 ** (cfg.integer_digits + cfg.decimal_digits)
    # Within the positive branch the first integer digit is position 0
    # renormalized over digits alone, weighted by P(no minus).
    pos_mass = (1.0 - p_neg) * _branch_masses(positions, 0, cfg)
    neg_mass = p_neg * _branch_masses(positions, 1, cfg) if p_neg > 0 else np.zeros(half)

    masses = np.concatenate([neg_mass[::-1], pos_mass])
    limit = float(10 ** cfg.integer_digits)
    edges = np.linspace(-limit, limit, 2 * half + 1)
    if masses.sum() <= 0:
        raise DegenerateDensityError(
            "no parseable numeric continuation carries probability mass")
    return normalize(BinnedDensity(edges=edges, masses=masses))


def density_to_model_space(q: BinnedDensity, cfg: PromptConfig) -> BinnedDensity:
    """Invert the prompt-space affine map on a density's support."""
    return BinnedDensity(edges=cfg.to_model_space(q.edges), masses=q.masses)


def marginal_densities(client, task: RegressionTask,
                       cfg: PromptConfig) -> list:
    """One model-space BinnedDensity per target, each from its own prompt."""
    out = []
    for i in range(task.n_target):
        try:
            prompt = format_prompt(task, cfg, task.target_x[i])
            q = digit_bin_density(client, prompt, cfg)
        except (ClientError, ProtocolError, DegenerateDensityError,
                FormatError) as exc:
            raise type(exc)(f"target {i} (x*={task.target_x[i]}): {exc}") from exc
        out.append(density_to_model_space(q, cfg))
    return out


def autoregressive_sample(client, task: RegressionTask, cfg: PromptConfig,
                          order=None, temperature: float = 1.0, seed=0,
                          max_retries: int = 8) -> tuple[np.ndarray, float]:
    """Sample all targets sequentially; returns (Y* (m, 1), total log-prob).

    Targets are visited in `order` (default: given order); each sampled pair
    is appended to the context for subsequent prompts, so the joint
    probability depends on the order.  A draw whose characters do not form a
    valid rendering is retried up to max_retries times per target.
    """
    rng = np.random.default_rng(seed)
    m = task.n_target
    order = np.arange(m) if order is None else np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(m)):
        raise ContractError("order must be a permutation of the targets")
    samples = np.zeros((m, 1))
    extra: list = []
    total_logprob = 0.0
    for j in order:
        target = task.target_x[j]
        prompt = format_prompt(task, cfg, target, extra_pairs=extra)
        n_positions = 1 + cfg.n_value_positions
        positions = client.top_logprobs(prompt, n_positions)
        value_text, logprob = _sample_value(positions, cfg, rng, temperature,
                                            max_retries, target_index=int(j))
        prompt_val = _parse_value(value_text, cfg)
        samples[j, 0] = float(cfg.to_model_space(prompt_val))
        total_logprob += logprob
        extra.append((np.atleast_1d(target), value_text))
    return samples, total_logprob


def _sample_value(positions: list, cfg: PromptConfig,
                  rng: np.random.Generator, temperature: float,
                  max_retries: int, target_index: int) -> tuple[str, float]:
    for _ in range(max_retries):
        chars: list[str] = []
        logprob = 0.0
        ok = True
        signed = False
        while True:
            slot = len(chars)
            dist = positions[slot] if slot < len(positions) else None
            if dist is None:
                ok = False
                break
            tok = dist.sample(rng, temperature)
            if tok not in _expected_tokens(slot, cfg, signed):
                ok = False
                break
            logprob += float(np.log(dist.probs[tok]))
            chars.append(tok)
            if tok == "-":
                signed = True
            if len(chars) - (1 if signed else 0) == cfg.n_value_positions:
                break
        if ok:
            return "".join(chars), logprob
    raise SamplingError(
        f"target {target_index}: no parseable draw in {max_retries} attempts")


def _expected_tokens(n_chars: int, cfg: PromptConfig, signed: bool) -> tuple:
    body_pos = n_chars - (1 if signed else 0)
    if n_chars == 0:
        return _DIGITS + ("-",)
    if body_pos == cfg.integer_digits:
        return (".",)
    return _DIGITS


def _parse_value(text: str, cfg: PromptConfig) -> float:
    sign = -1.0 if text.startswith("-") else 1.0
    body = text[1:] if text.startswith("-") else text
    int_part = body[:cfg.integer_digits]
    frac_part = body[cfg.integer_digits + 1:]
    unit = 10 ** cfg.decimal_digits
    return sign * (int(int_part) * unit + int(frac_part)) / unit
