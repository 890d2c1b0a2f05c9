"""Fixed 1-D conv backbone for 310-dim feature vectors.

Two conv blocks (conv -> batch norm -> LeakyReLU), a flattening step, a
two-layer classifier head with dropout between the layers, and a unit-norm
projection head for contrastive training. A momentum-tracked key copy of
the whole network is provided for query/key training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernel as K

CONV1_CHANNELS = 5
CONV2_CHANNELS = 10
CONV_WIDTH = 3


@dataclass(frozen=True)
class BackboneConfig:
    feature_len: int = 310   # s
    num_classes: int = 5     # k
    hidden_units: int = 64   # width of the first classifier layer
    embed_dim: int = 64      # projection output dimension
    dropout_rate: float = 0.5
    lrelu_slope: float = 0.01

    def __post_init__(self):
        if self.feature_len < 5:
            raise K.KernelError(f"feature_len must be >= 5, got {self.feature_len}")
        if self.num_classes < 2:
            raise K.KernelError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise K.KernelError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def encoder_dim(self) -> int:
        # two width-3 valid convolutions: s -> s-2 -> s-4
        return CONV2_CHANNELS * (self.feature_len - 4)


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(config: BackboneConfig, rng) -> K.ParameterSet:
    """Conv/dense weights uniform in +-1/sqrt(fan_in), biases 0, BN scale 1 / shift 0."""
    p = K.ParameterSet()
    p.add("conv1.weight", _uniform_fan_in(rng, (CONV1_CHANNELS, 1, CONV_WIDTH), CONV_WIDTH))
    p.add("conv1.bias", np.zeros(CONV1_CHANNELS))
    p.add("bn1.scale", np.ones(CONV1_CHANNELS))
    p.add("bn1.shift", np.zeros(CONV1_CHANNELS))
    p.add("bn1.running_mean", np.zeros(CONV1_CHANNELS), trainable=False)
    p.add("bn1.running_var", np.ones(CONV1_CHANNELS), trainable=False)
    p.add("conv2.weight",
          _uniform_fan_in(rng, (CONV2_CHANNELS, CONV1_CHANNELS, CONV_WIDTH), CONV1_CHANNELS * CONV_WIDTH))
    p.add("conv2.bias", np.zeros(CONV2_CHANNELS))
    p.add("bn2.scale", np.ones(CONV2_CHANNELS))
    p.add("bn2.shift", np.zeros(CONV2_CHANNELS))
    p.add("bn2.running_mean", np.zeros(CONV2_CHANNELS), trainable=False)
    p.add("bn2.running_var", np.ones(CONV2_CHANNELS), trainable=False)
    enc = config.encoder_dim
    p.add("fc1.weight", _uniform_fan_in(rng, (config.hidden_units, enc), enc))
    p.add("fc1.bias", np.zeros(config.hidden_units))
    p.add("fc2.weight", _uniform_fan_in(rng, (config.num_classes, config.hidden_units), config.hidden_units))
    p.add("fc2.bias", np.zeros(config.num_classes))
    p.add("proj.weight", _uniform_fan_in(rng, (config.embed_dim, enc), enc))
    p.add("proj.bias", np.zeros(config.embed_dim))
    return p


class Backbone:
    """Encoder + classifier + projection head over a shared parameter set."""

    def __init__(self, config: BackboneConfig, rng=None, params: K.ParameterSet | None = None):
        self.config = config
        if params is None:
            if rng is None:
                raise K.KernelError("Backbone needs either an rng or an existing parameter set")
            params = init_parameters(config, rng)
        self.params = params
        self._training = True

    def train(self) -> "Backbone":
        self._training = True
        return self

    def eval(self) -> "Backbone":
        self._training = False
        return self

    @property
    def training(self) -> bool:
        return self._training

    def _to_batch(self, x):
        arr = np.asarray(x, dtype=np.float64)
        s = self.config.feature_len
        if arr.ndim == 1:
            if arr.shape != (s,):
                raise K.KernelError(f"input length {arr.shape} does not match feature_len {s}")
            return arr[None, None, :], True
        if arr.ndim == 2:
            if arr.shape[1] != s:
                raise K.KernelError(f"input shape {arr.shape} does not match feature_len {s}")
            return arr[:, None, :], arr.shape[0] == 1
        raise K.KernelError(f"expected (s,) or (B, s) input, got shape {arr.shape}")

    def encode(self, x) -> K.Tensor:
        """Flattened second-block embedding; (s,) or (1, s) in, (10*(s-4),) out."""
        batch, single = self._to_batch(x)
        p = self.params
        h = K.conv1d(K.constant(batch), p["conv1.weight"], p["conv1.bias"])
        h = K.batchnorm1d(h, p["bn1.scale"], p["bn1.shift"],
                          p["bn1.running_mean"], p["bn1.running_var"], training=self._training)
        h = K.leaky_relu(h, self.config.lrelu_slope)
        h = K.conv1d(h, p["conv2.weight"], p["conv2.bias"])
        h = K.batchnorm1d(h, p["bn2.scale"], p["bn2.shift"],
                          p["bn2.running_mean"], p["bn2.running_var"], training=self._training)
        h = K.leaky_relu(h, self.config.lrelu_slope)
        flat = K.reshape(h, (batch.shape[0], self.config.encoder_dim))
        return K.reshape(flat, (self.config.encoder_dim,)) if single else flat

    def classify(self, embedding: K.Tensor, rng=None) -> K.Tensor:
        """Logits from an encode() embedding; dropout is active only in train mode."""
        dim = embedding.shape[-1]
        if dim != self.config.encoder_dim:
            raise K.KernelError(f"embedding length {dim} != encoder_dim {self.config.encoder_dim}")
        p = self.params
        h = K.dense(embedding, p["fc1.weight"], p["fc1.bias"])
        h = K.dropout(h, self.config.dropout_rate, training=self._training, rng=rng)
        return K.dense(h, p["fc2.weight"], p["fc2.bias"])

    def project(self, embedding: K.Tensor) -> K.Tensor:
        """Unit-L2-norm contrastive embedding."""
        out = K.dense(embedding, self.params["proj.weight"], self.params["proj.bias"])
        return K.l2_normalize(out, axis=-1)

    def forward(self, x, rng=None):
        emb = self.encode(x)
        return emb, self.classify(emb, rng=rng)

    def logits_values(self, x) -> np.ndarray:
        """Eval-style forward returning plain arrays (no graph retained)."""
        emb = self.encode(x)
        return self.classify(emb).value


def update_parameters(key: K.ParameterSet, query: K.ParameterSet, m: float) -> None:
    """key <- m*key + (1-m)*query, per entry (running stats included)."""
    if not 0.0 <= m <= 1.0:
        raise K.KernelError(f"momentum coefficient must lie in [0, 1], got {m}")
    for name, kt in key.items():
        if name not in query:
            raise K.KernelError(f"parameter sets not congruent: missing {name!r}")
        qv = query[name].value
        if qv.shape != kt.value.shape:
            raise K.KernelError(f"parameter sets not congruent at {name!r}")
        kt.value = m * kt.value + (1.0 - m) * qv


class QueryKeyPair:
    """Query network plus a key copy updated only by momentum blending."""

    def __init__(self, query: Backbone, m_key: float = 0.999):
        if not 0.0 < m_key < 1.0:
            raise K.KernelError(f"m_key must lie in (0, 1), got {m_key}")
        self.query = query
        self.key = Backbone(query.config, params=query.params.clone())
        self.key.eval()
        self.m_key = m_key

    def momentum_update(self) -> None:
        update_parameters(self.key.params, self.query.params, self.m_key)


def save_checkpoint(path, model: Backbone, extra: dict | None = None) -> None:
    """Flat npz dump of named tensors plus a JSON config echo; bit-exact round trip."""
    meta = {"config": asdict(model.config), "extra": extra or {}}
    arrays = {name: t.value for name, t in model.params.items()}
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Returns (Backbone in eval mode, extra dict)."""
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        state = {name: archive[name] for name in archive.files if name != "__meta__"}
    config = BackboneConfig(**meta["config"])
    model = Backbone(config, rng=np.random.default_rng(0))
    model.params.load_state_dict(state)
    return model.eval(), meta["extra"]
