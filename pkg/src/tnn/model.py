"""The full network: embedding, stacked gated Toeplitz + gated linear
blocks with pre-norm residuals, output head, next-token loss, and the
manual reverse-mode chain that trains it.

Layout per block (X is [batch, n, d]):

    X = X + GTU(norm1(X))    # token mixing
    X = X + GLU(norm2(X))    # channel mixing

GTU: U = act(X Wu); V = act(X Wv); M = TNO(V); out = (U * M) Wo, widths
d -> e -> d with the Toeplitz operator acting on the e channels.
GLU: out = (act(X W1) * (X W2)) W3, widths d -> g -> d, position-wise.
Projections carry no bias terms; the norms own the affine freedom.

Parameters live in one flat name -> array dict. Every array is updated in
place by the optimizer, and the Toeplitz operators alias the same buffers,
so a step is: compute grads, update arrays, bump operator versions.
"""

from dataclasses import dataclass, fields

import numpy as np

from tnn import activations, norms
from tnn import rpe as rpe_mod
from tnn import toeplitz as tp
from tnn.errors import ConfigError, DimensionError
from tnn.tno import ToeplitzOperator


@dataclass(frozen=True)
class ModelConfig:
    """Complete architectural description; every field has a desk-scale
    default that trains in minutes on one CPU core."""

    vocab_size: int = 256
    dim: int = 64
    gtu_dim: int = 192
    glu_dim: int = 64
    layers: int = 2
    activation: str = "silu"
    norm: str = "layernorm"
    decay: float = 0.99
    learn_decay: bool = False
    causal: bool = True
    strategy: str = tp.DEFAULT_STRATEGY
    rpe_layers: int = 3
    rpe_hidden: int = 32
    rpe_activation: str = "relu"
    rpe_input_mode: str = "raw_integer"
    share_rpe: bool = False
    tie_embeddings: bool = False

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.dim < 1 or self.glu_dim < 1 or self.layers < 1:
            raise ConfigError("dim, glu_dim, and layers must be >= 1")
        if self.gtu_dim < self.dim:
            raise ConfigError("gtu_dim must be >= dim")
        if self.activation not in activations.NAMES:
            raise ConfigError(f"activation must be one of {activations.NAMES}")
        if self.norm not in norms.NORMS:
            raise ConfigError(f"norm must be one of {norms.NORMS}")
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigError("decay must lie in [0, 1]")
        if self.strategy not in tp.STRATEGIES:
            raise ConfigError(f"strategy must be one of {tp.STRATEGIES}")
        # delegate rpe field validation
        self.rpe_config()

    def rpe_config(self) -> rpe_mod.RpeConfig:
        return rpe_mod.RpeConfig(
            out_dim=self.gtu_dim,
            layers=self.rpe_layers,
            hidden_dim=self.rpe_hidden,
            activation=self.rpe_activation,
            input_mode=self.rpe_input_mode,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form scalar parameter count; independent of sequence length."""
    d, e, g, v = config.dim, config.gtu_dim, config.glu_dim, config.vocab_size
    norm_params = 2 * d if config.norm == "layernorm" else d
    rpe_params = rpe_mod.num_params(config.rpe_config())
    per_block = 2 * norm_params + (d * e * 2 + e * d) + (d * g * 2 + g * d)
    per_block += 1 if config.learn_decay else 0
    rpe_total = rpe_params if config.share_rpe else rpe_params * config.layers
    total = v * d + config.layers * per_block + rpe_total + norm_params
    if not config.tie_embeddings:
        total += d * v
    return total


class TnnModel:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64):
        if dtype not in (np.float32, np.float64):
            raise ConfigError("dtype must be float32 or float64")
        self.config = config
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.params: dict = {}
        self.tnos: list = []
        self._build(np.random.default_rng(self.seed))

    # -- construction ------------------------------------------------------

    def _uniform(self, rng, fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(self.dtype)

    def _add_norm(self, rng, prefix):
        d = self.config.dim
        self.params[f"{prefix}.gain"] = np.ones(d, dtype=self.dtype)
        if self.config.norm == "layernorm":
            self.params[f"{prefix}.bias"] = np.zeros(d, dtype=self.dtype)

    def _build(self, rng):
        cfg = self.config
        d, e, g, v = cfg.dim, cfg.gtu_dim, cfg.glu_dim, cfg.vocab_size
        self.params["embed"] = self._uniform(rng, d, (v, d))
        shared_net = None
        for i in range(cfg.layers):
            pre = f"blocks.{i}"
            self._add_norm(rng, f"{pre}.norm1")
            self.params[f"{pre}.gtu.wu"] = self._uniform(rng, d, (d, e))
            self.params[f"{pre}.gtu.wv"] = self._uniform(rng, d, (d, e))
            self.params[f"{pre}.gtu.wo"] = self._uniform(rng, e, (e, d))
            if cfg.share_rpe and shared_net is not None:
                net = shared_net
            else:
                net = rpe_mod.init_rpe(cfg.rpe_config(), rng, dtype=self.dtype)
                owner = "shared_rpe" if cfg.share_rpe else f"{pre}.tno"
                for j, (w, b) in enumerate(zip(net.weights, net.biases)):
                    self.params[f"{owner}.rpe_w{j}"] = w
                    self.params[f"{owner}.rpe_b{j}"] = b
                shared_net = net
            if cfg.learn_decay:
                decay = np.array([cfg.decay], dtype=np.float64)
                self.params[f"{pre}.tno.decay"] = decay
            else:
                decay = cfg.decay
            self.tnos.append(
                ToeplitzOperator(net, decay_rate=decay, causal=cfg.causal, strategy=cfg.strategy)
            )
            self._add_norm(rng, f"{pre}.norm2")
            self.params[f"{pre}.glu.w1"] = self._uniform(rng, d, (d, g))
            self.params[f"{pre}.glu.w2"] = self._uniform(rng, d, (d, g))
            self.params[f"{pre}.glu.w3"] = self._uniform(rng, g, (g, d))
        self._add_norm(rng, "final_norm")
        if not cfg.tie_embeddings:
            self.params["head"] = self._uniform(rng, d, (d, v))

    # -- bookkeeping -------------------------------------------------------

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def bump_versions(self) -> None:
        """Invalidate every operator's coefficient cache after updates."""
        for op in self.tnos:
            op.bump_version()
            op.clamp_decay()

    def rpe_prefix(self, block: int) -> str:
        return "shared_rpe" if self.config.share_rpe else f"blocks.{block}.tno"

    def _check_tokens(self, tokens) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None]
        if tokens.ndim != 2:
            raise DimensionError(f"tokens must be [batch, n], got shape {tokens.shape}")
        if not np.issubdtype(tokens.dtype, np.integer):
            raise DimensionError("tokens must be integers")
        if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= self.config.vocab_size:
            raise ValueError("token id out of range for vocab")
        return tokens

    def _norm_forward(self, prefix, x):
        if self.config.norm == "layernorm":
            return norms.layernorm_forward(
                x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"]
            )
        return norms.rmsnorm_forward(x, self.params[f"{prefix}.gain"])

    def _norm_backward(self, prefix, cache, grad_y, grads):
        if self.config.norm == "layernorm":
            grad_x, ggain, gbias = norms.layernorm_backward(cache, grad_y)
            grads[f"{prefix}.bias"] = gbias
        else:
            grad_x, ggain = norms.rmsnorm_backward(cache, grad_y)
        grads[f"{prefix}.gain"] = ggain
        return grad_x

    def head_matrix(self) -> np.ndarray:
        if self.config.tie_embeddings:
            return self.params["embed"].T
        return self.params["head"]

    # -- forward -----------------------------------------------------------

    def forward(self, tokens, path: str = None) -> np.ndarray:
        """Logits [batch, n, vocab] for integer tokens [batch, n] or [n].

        path selects the token-mixing kernel: "fft" (fast) or "exact"
        (quadratic, bit-stable causal inference). Default: "exact" for
        causal models, "fft" otherwise.
        """
        if path is None:
            path = "exact" if self.config.causal else "fft"
        squeeze = np.asarray(tokens).ndim == 1
        tokens = self._check_tokens(tokens)
        act = self.config.activation
        x = self.params["embed"][tokens]
        for i in range(self.config.layers):
            pre = f"blocks.{i}"
            h, _ = self._norm_forward(f"{pre}.norm1", x)
            u = activations.apply(act, h @ self.params[f"{pre}.gtu.wu"])
            v = activations.apply(act, h @ self.params[f"{pre}.gtu.wv"])
            m = self.tnos[i].forward(v, path=path)
            x = x + (u * m) @ self.params[f"{pre}.gtu.wo"]
            h, _ = self._norm_forward(f"{pre}.norm2", x)
            a = activations.apply(act, h @ self.params[f"{pre}.glu.w1"])
            b = h @ self.params[f"{pre}.glu.w2"]
            x = x + (a * b) @ self.params[f"{pre}.glu.w3"]
        h, _ = self._norm_forward("final_norm", x)
        logits = h @ self.head_matrix()
        return logits[0] if squeeze else logits

    # -- loss and gradients --------------------------------------------------

    def _forward_cached(self, tokens):
        """Training forward (fft mixing) retaining every buffer backward needs."""
        act = self.config.activation
        cache = {"tokens": tokens, "blocks": []}
        x = self.params["embed"][tokens]
        for i in range(self.config.layers):
            pre = f"blocks.{i}"
            bc = {}
            bc["x_in"] = x
            h, bc["norm1"] = self._norm_forward(f"{pre}.norm1", x)
            bc["h1"] = h
            bc["zu"] = h @ self.params[f"{pre}.gtu.wu"]
            bc["zv"] = h @ self.params[f"{pre}.gtu.wv"]
            bc["u"] = activations.apply(act, bc["zu"])
            v = activations.apply(act, bc["zv"])
            bc["v"] = v
            m, bc["tno_ctx"] = self.tnos[i].forward_training(v)
            bc["m"] = m
            bc["um"] = bc["u"] * m
            x = x + bc["um"] @ self.params[f"{pre}.gtu.wo"]
            bc["x_mid"] = x
            h, bc["norm2"] = self._norm_forward(f"{pre}.norm2", x)
            bc["h2"] = h
            bc["z1"] = h @ self.params[f"{pre}.glu.w1"]
            bc["a"] = activations.apply(act, bc["z1"])
            bc["b"] = h @ self.params[f"{pre}.glu.w2"]
            bc["ab"] = bc["a"] * bc["b"]
            x = x + bc["ab"] @ self.params[f"{pre}.glu.w3"]
            cache["blocks"].append(bc)
        cache["x_final"] = x
        h, cache["final_norm"] = self._norm_forward("final_norm", x)
        cache["h_final"] = h
        logits = h @ self.head_matrix()
        return logits, cache

    @staticmethod
    def _softmax_ce(logits, targets):
        """Mean next-token cross-entropy and d loss / d logits.

        logits [B, n, V]; targets hold token ids for positions 0..n-2
        (shifted inputs); the final position predicts nothing.
        """
        batch, n, vocab = logits.shape
        z = logits[:, : n - 1].astype(np.float64)
        z = z - z.max(axis=-1, keepdims=True)
        logsumexp = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
        logp = z - logsumexp
        rows = np.arange(batch)[:, None]
        cols = np.arange(n - 1)[None, :]
        picked = logp[rows, cols, targets]
        count = batch * (n - 1)
        loss = -float(picked.sum()) / count
        grad = np.exp(logp)
        grad[rows, cols, targets] -= 1.0
        grad /= count
        full = np.zeros_like(logits, dtype=np.float64)
        full[:, : n - 1] = grad
        return loss, full

    def loss(self, tokens, path: str = None) -> float:
        """Mean next-token cross-entropy (nats) without gradients."""
        tokens = self._check_tokens(tokens)
        if tokens.shape[1] < 2:
            raise DimensionError("need n >= 2 to score next-token predictions")
        logits = self.forward(tokens, path=path)
        loss, _ = self._softmax_ce(logits, tokens[:, 1:])
        return loss

    def loss_and_grads(self, tokens):
        """(scalar loss, gradient dict keyed like params) via the fft path."""
        tokens = self._check_tokens(tokens)
        if tokens.shape[1] < 2:
            raise DimensionError("need n >= 2 to score next-token predictions")
        logits, cache = self._forward_cached(tokens)
        loss, grad_logits = self._softmax_ce(logits, tokens[:, 1:])
        grad_logits = grad_logits.astype(self.dtype, copy=False)
        grads = {}
        act = self.config.activation
        cfg = self.config

        def matmul_backward(x, w, grad_out):
            x2 = x.reshape(-1, x.shape[-1])
            g2 = grad_out.reshape(-1, grad_out.shape[-1])
            return grad_out @ w.T, x2.T @ g2

        h = cache["h_final"]
        if cfg.tie_embeddings:
            grad_h = grad_logits @ self.params["embed"]
            h2 = h.reshape(-1, h.shape[-1])
            g2 = grad_logits.reshape(-1, grad_logits.shape[-1])
            grads["embed"] = (h2.T @ g2).T
        else:
            grad_h, grads["head"] = matmul_backward(h, self.params["head"], grad_logits)
        grad_x = self._norm_backward("final_norm", cache["final_norm"], grad_h, grads)

        for i in range(cfg.layers - 1, -1, -1):
            pre = f"blocks.{i}"
            bc = cache["blocks"][i]
            # GLU half: x = x_mid + (a*b) W3
            grad_ab, grads[f"{pre}.glu.w3"] = matmul_backward(
                bc["ab"], self.params[f"{pre}.glu.w3"], grad_x
            )
            grad_a = grad_ab * bc["b"]
            grad_b = grad_ab * bc["a"]
            grad_z1 = grad_a * activations.grad(act, bc["z1"])
            grad_h2_a, grads[f"{pre}.glu.w1"] = matmul_backward(
                bc["h2"], self.params[f"{pre}.glu.w1"], grad_z1
            )
            grad_h2_b, grads[f"{pre}.glu.w2"] = matmul_backward(
                bc["h2"], self.params[f"{pre}.glu.w2"], grad_b
            )
            grad_mid = grad_x + self._norm_backward(
                f"{pre}.norm2", bc["norm2"], grad_h2_a + grad_h2_b, grads
            )
            # GTU half: x_mid = x_in + (u*m) Wo
            grad_um, grads[f"{pre}.gtu.wo"] = matmul_backward(
                bc["um"], self.params[f"{pre}.gtu.wo"], grad_mid
            )
            grad_u = grad_um * bc["m"]
            grad_m = grad_um * bc["u"]
            grad_v, tno_grads = self.tnos[i].backward(bc["tno_ctx"], grad_m)
            rp = self.rpe_prefix(i)
            for name, g in tno_grads.items():
                if name == "decay":
                    grads[f"{pre}.tno.decay"] = g
                else:
                    key = f"{rp}.{name}"
                    if key in grads:
                        grads[key] = grads[key] + g
                    else:
                        grads[key] = g
            grad_zu = grad_u * activations.grad(act, bc["zu"])
            grad_zv = grad_v * activations.grad(act, bc["zv"])
            grad_h1_u, grads[f"{pre}.gtu.wu"] = matmul_backward(
                bc["h1"], self.params[f"{pre}.gtu.wu"], grad_zu
            )
            grad_h1_v, grads[f"{pre}.gtu.wv"] = matmul_backward(
                bc["h1"], self.params[f"{pre}.gtu.wv"], grad_zv
            )
            grad_x = grad_mid + self._norm_backward(
                f"{pre}.norm1", bc["norm1"], grad_h1_u + grad_h1_v, grads
            )

        grad_embed = grads.get("embed")
        if grad_embed is None:
            grad_embed = np.zeros_like(self.params["embed"])
            grads["embed"] = grad_embed
        np.add.at(grad_embed, cache["tokens"], grad_x)
        return loss, grads


def evaluate_stream(
    model: TnnModel, tokens: np.ndarray, seq_len: int, max_windows: int = 0,
    batch_size: int = 8,
) -> dict:
    """Mean next-token loss over non-overlapping windows of a token stream.

    The window set is deterministic (stream order), so two models evaluated
    on the same stream at the same length see exactly the same batches. Uses
    the fft path; every window contributes seq_len - 1 scored positions.
    """
    from tnn.data import sequential_windows

    windows = sequential_windows(np.asarray(tokens), seq_len, max_windows)
    total = 0.0
    for start in range(0, len(windows), batch_size):
        chunk = windows[start : start + batch_size]
        total += model.loss(chunk, path="fft") * len(chunk)
    loss = total / len(windows)
    return {
        "loss": float(loss),
        "perplexity": float(np.exp(loss)),
        "tokens_evaluated": int(windows.shape[0] * (seq_len - 1)),
        "seq_len": int(seq_len),
    }
