"""CAE, CCAE and SR-CAE architectures built from :mod:`cghi.nnet` layers.

Encoder: four stride-2 conv layers (64, 32, 32, 16 filters, kernel 3, ReLU,
batch norm after each) and a linear dense layer to a 16-d latent code.
Decoder: a linear dense layer back to 16 x 8, four stride-2 transposed convs
(16, 32, 32, 64 filters, ReLU + batch norm) and a final stride-1 transposed
conv with 2 filters and linear output. HI head (CCAE / SR-CAE only): linear
dense layers with 16, 8 and 4 units and a single output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nnet import (BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Flatten, ReLU, Reshape, Sequential,
                   conv_output_length)
from .softrank import soft_rank_loss

VARIANTS = ("cae", "ccae", "sr_cae", "ccae_softrank", "ccae_eb", "ccae_mb", "ccae_me")


@dataclass(frozen=True)
class ArchitectureSpec:
    input_length: int = 128
    in_channels: int = 2
    enc_filters: tuple[int, ...] = (64, 32, 32, 16)
    latent: int = 16
    dec_filters: tuple[int, ...] = (16, 32, 32, 64)
    head_units: tuple[int, ...] = (16, 8, 4)
    kernel: int = 3
    stride: int = 2
    pad: int = 1


class MultiHeadModel:
    """Shared encoder with a reconstruction decoder and an optional HI head.

    Inputs are ``(B, L, C)`` frames (as stored) or already channels-first
    ``(B, C, L)`` / flat ``(B, F)`` arrays when ``channels_last`` is False.
    """

    def __init__(self, encoder: Sequential, decoder: Sequential, head: Sequential | None = None,
                 channels_last: bool = True, spec: ArchitectureSpec | None = None) -> None:
        self.encoder, self.decoder, self.head = encoder, decoder, head
        self.channels_last = channels_last
        self.spec = spec

    # ------------------------------------------------------------------ plumbing
    def groups(self) -> dict[str, Sequential]:
        g = {"E": self.encoder, "D": self.decoder}
        if self.head is not None:
            g["HI"] = self.head
        return g

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {f"{g}.{n}": p for g, seq in self.groups().items() for n, p in seq.named_parameters()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{g}.{n}": v for g, seq in self.groups().items() for n, v in seq.named_grads()}

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.copy() for k, v in self.named_parameters().items()}
        for g, seq in self.groups().items():
            out.update({f"{g}.{n}": b.copy() for n, b in seq.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.state_dict())
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise ConfigError(f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        groups = self.groups()
        for name, value in state.items():
            g, rest = name.split(".", 1)
            groups[g].set_tensor(rest, value)

    def parameter_count(self) -> int:
        return sum(seq.parameter_count() for seq in self.groups().values())

    def prepare_input(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.channels_last and values.ndim == 3:
            return values.transpose(0, 2, 1)
        return values

    def summary(self) -> str:
        lines = []
        for g, seq in self.groups().items():
            lines.append(f"{g} ({seq.parameter_count()} params)")
            lines.append(seq.describe())
        lines.append(f"total parameters: {self.parameter_count()}")
        return "\n".join(lines)

    # ------------------------------------------------------------------ forward passes
    def encode(self, values: np.ndarray, train: bool = False) -> np.ndarray:
        return self.encoder.forward(self.prepare_input(values), train)

    def reconstruct(self, values: np.ndarray, train: bool = False) -> np.ndarray:
        return self.decoder.forward(self.encode(values, train), train)

    def reconstruction_loss(self, values: np.ndarray, train: bool = True
                            ) -> tuple[float, dict[str, np.ndarray]]:
        """Batch-mean of per-sample squared reconstruction error, with gradients.

        HI-head gradients are reported as zeros (the loss does not depend on them).
        """
        x = self.prepare_input(values)
        B = x.shape[0]
        z = self.encoder.forward(x, train)
        resid = self.decoder.forward(z, train) - x
        loss = float(np.sum(resid * resid) / B)
        dz = self.decoder.backward(2.0 * resid / B)
        self.encoder.backward(dz)
        if self.head is not None:
            for layer in self.head.layers:
                layer.grads = {k: np.zeros_like(v) for k, v in layer.params.items()}
        return loss, self.named_grads()

    def total_loss_sr(self, values: np.ndarray, times: np.ndarray, lam: float = 1.0,
                      eps_sr: float = 1.0, train: bool = True
                      ) -> tuple[float, dict[str, np.ndarray]]:
        """Reconstruction loss plus ``lam`` times the soft-rank loss of the HI head."""
        if self.head is None:
            raise ConfigError("the soft-rank loss needs an HI head")
        x = self.prepare_input(values)
        B = x.shape[0]
        z = self.encoder.forward(x, train)
        resid = self.decoder.forward(z, train) - x
        hi = self.head.forward(z, train)[:, 0]
        sr, dhi = soft_rank_loss(hi, times, eps_sr)
        loss = float(np.sum(resid * resid) / B) + lam * sr
        dz = self.decoder.backward(2.0 * resid / B) + self.head.backward(lam * dhi[:, None])
        self.encoder.backward(dz)
        return loss, self.named_grads()

    def per_sample_error(self, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Squared reconstruction error per sample in eval mode."""
        out = []
        for i in range(0, len(values), batch_size):
            x = self.prepare_input(values[i:i + batch_size])
            r = self.decoder.forward(self.encoder.forward(x, False), False) - x
            out.append(np.sum(r * r, axis=tuple(range(1, r.ndim))))
        return np.concatenate(out) if out else np.zeros(0)

    def hi_head_output(self, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
        if self.head is None:
            raise ConfigError("model has no HI head")
        out = []
        for i in range(0, len(values), batch_size):
            z = self.encoder.forward(self.prepare_input(values[i:i + batch_size]), False)
            out.append(self.head.forward(z, False)[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    def predict_hi(self, values: np.ndarray) -> np.ndarray:
        """CAE: negative reconstruction error norm; otherwise the HI head output."""
        if self.head is None:
            return -np.sqrt(self.per_sample_error(values))
        return self.hi_head_output(values)


def _encoder(spec: ArchitectureSpec, rng: np.random.Generator) -> Sequential:
    layers = []
    c, length = spec.in_channels, spec.input_length
    for f in spec.enc_filters:
        layers += [Conv1d(c, f, spec.kernel, spec.stride, spec.pad, rng=rng, init="he"), ReLU(),
                   BatchNorm1d(f)]
        c, length = f, conv_output_length(length, spec.kernel, spec.stride, spec.pad)
    flat = c * length
    layers += [Flatten(), Dense(flat, spec.latent, rng=rng)]
    return Sequential(layers)


def _decoder(spec: ArchitectureSpec, rng: np.random.Generator) -> Sequential:
    n_up = len(spec.dec_filters)
    length = spec.input_length // spec.stride ** n_up
    if length * spec.stride ** n_up != spec.input_length:
        raise ConfigError("input_length must be divisible by stride ** number of decoder layers")
    c = spec.enc_filters[-1]
    layers = [Dense(spec.latent, c * length, rng=rng), Reshape((c, length))]
    for f in spec.dec_filters:
        layers += [ConvTranspose1d(c, f, spec.kernel, spec.stride, spec.pad, rng=rng, init="he"), ReLU(),
                   BatchNorm1d(f)]
        c = f
    layers.append(ConvTranspose1d(c, spec.in_channels, spec.kernel, 1, spec.pad, output_padding=0,
                                  rng=rng, init="xavier"))
    return Sequential(layers)


def _head(spec: ArchitectureSpec, rng: np.random.Generator) -> Sequential:
    layers = []
    width = spec.latent
    for u in spec.head_units:
        layers.append(Dense(width, u, rng=rng))
        width = u
    layers.append(Dense(width, 1, rng=rng))
    return Sequential(layers)


def build(variant: str, seed: int = 0, spec: ArchitectureSpec | None = None) -> MultiHeadModel:
    """Build a model for ``variant``; every variant except ``cae`` gets an HI head."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    spec = spec or ArchitectureSpec()
    length = spec.input_length
    for _ in spec.enc_filters:
        length = conv_output_length(length, spec.kernel, spec.stride, spec.pad)
    if length < 1:
        raise ConfigError("encoder reduces the input to zero length")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE1]))
    encoder = _encoder(spec, rng)
    decoder = _decoder(spec, rng)
    head = _head(spec, rng) if variant != "cae" else None
    return MultiHeadModel(encoder, decoder, head, channels_last=True, spec=spec)


def reconstruction_loss(batch_values: np.ndarray, model: MultiHeadModel):
    return model.reconstruction_loss(batch_values)


def total_loss_sr(batch_values: np.ndarray, times: np.ndarray, model: MultiHeadModel,
                  lam: float = 1.0, eps_sr: float = 1.0):
    return model.total_loss_sr(batch_values, times, lam, eps_sr)
