"""Adapter for pretrained transformer backbones (bert / albert / roberta).

torch and transformers are imported lazily so the rest of the package works
without them. weights_ref is resolved in one place: an existing local
directory is loaded offline, anything else is treated as a hub/registry
name. Heads stay in numpy; this adapter bridges gradients across the
boundary when fine-tuning, keeping float64 master copies of the backbone
weights on the numpy side.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .encoding import EncodedBatch, EncoderOutput, EncoderSpec
from .errors import LoadError, ShapeError, SpecError


def _import_backends():
    try:
        import torch
        from transformers import AutoModel, AutoTokenizer
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise LoadError(
            "pretrained encoder families need the optional dependencies "
            "torch and transformers (pip install 'fndetect[pretrained]')"
        ) from exc
    return torch, AutoModel, AutoTokenizer


def pretrained_tokenize(texts: list[str], spec: EncoderSpec, max_len: int) -> EncodedBatch:
    """Tokenize with the backbone's own subword tokenizer, right-padded."""
    return PretrainedEncoder(spec).tokenize(texts, max_len)


class PretrainedEncoder:
    """Wraps a transformers backbone behind the package encoder interface."""

    def __init__(self, spec: EncoderSpec):
        if spec.family == "test":
            raise SpecError("PretrainedEncoder cannot serve the test family")
        torch, AutoModel, AutoTokenizer = _import_backends()
        self._torch = torch
        self.spec = spec
        ref = spec.weights_ref
        local = Path(ref).is_dir()
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(ref, local_files_only=local)
            self._model = AutoModel.from_pretrained(ref, local_files_only=local)
        except Exception as exc:
            raise LoadError(f"cannot resolve weights_ref {ref!r}: {exc}") from exc
        width = getattr(self._model.config, "hidden_size", None)
        if width != spec.hidden_width:
            raise LoadError(
                f"{spec.family} backbone at {ref!r} has hidden width {width}, "
                f"spec says {spec.hidden_width}"
            )
        self._tokenizer.padding_side = "right"
        self._model.eval()

    # ---- tokenization -------------------------------------------------------

    def tokenize(self, texts: list[str], max_len: int) -> EncodedBatch:
        enc = self._tokenizer(
            texts,
            padding="max_length",
            truncation=True,
            max_length=max_len,
            return_tensors="np",
        )
        return EncodedBatch(
            token_ids=enc["input_ids"].astype(np.int64),
            attention_mask=enc["attention_mask"].astype(np.int64),
        )

    # ---- encoding -----------------------------------------------------------

    def _check_length(self, batch: EncodedBatch) -> None:
        limit = getattr(self._model.config, "max_position_embeddings", None)
        if limit is not None and batch.max_len > limit:
            raise ShapeError(
                f"sequence length {batch.max_len} exceeds backbone limit {limit}"
            )

    def _forward(self, batch: EncodedBatch):
        torch = self._torch
        self._check_length(batch)
        ids = torch.from_numpy(np.ascontiguousarray(batch.token_ids))
        mask = torch.from_numpy(np.ascontiguousarray(batch.attention_mask))
        out = self._model(input_ids=ids, attention_mask=mask)
        token_features = out.last_hidden_state
        pooled = getattr(out, "pooler_output", None)
        if pooled is None:
            pooled = token_features[:, 0]
        return token_features, pooled

    def encode(self, batch: EncodedBatch) -> EncoderOutput:
        with self._torch.no_grad():
            token_features, pooled = self._forward(batch)
        return EncoderOutput(
            token_features=token_features.cpu().numpy().astype(np.float64),
            pooled=pooled.cpu().numpy().astype(np.float64),
        )

    def encode_for_training(self, batch: EncodedBatch):
        """Grad-enabled encode; the hook maps feature gradients to parameter
        gradients via the backbone's autograd graph."""
        if not self.spec.fine_tune:
            return self.encode(batch), None
        torch = self._torch
        self._model.train()
        token_features, pooled = self._forward(batch)
        self._model.eval()
        output = EncoderOutput(
            token_features=token_features.detach().cpu().numpy().astype(np.float64),
            pooled=pooled.detach().cpu().numpy().astype(np.float64),
        )

        def backward(d_token_features, d_pooled) -> dict[str, np.ndarray]:
            self._model.zero_grad(set_to_none=True)
            terms = []
            if d_token_features is not None:
                grad = torch.from_numpy(np.ascontiguousarray(d_token_features)).to(token_features.dtype)
                terms.append((token_features * grad).sum())
            if d_pooled is not None:
                grad = torch.from_numpy(np.ascontiguousarray(d_pooled)).to(pooled.dtype)
                terms.append((pooled * grad).sum())
            sum(terms).backward()
            grads = {}
            for name, param in self._model.named_parameters():
                if param.grad is not None:
                    grads[name] = param.grad.detach().cpu().numpy().astype(np.float64)
            return grads

        return output, backward

    # ---- fine-tuning seam -----------------------------------------------------

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        if not self.spec.fine_tune:
            return {}
        return {
            name: param.detach().cpu().numpy().astype(np.float64)
            for name, param in self._model.named_parameters()
        }

    def apply_updates(self, values: dict[str, np.ndarray]) -> None:
        torch = self._torch
        named = dict(self._model.named_parameters())
        with torch.no_grad():
            for name, value in values.items():
                param = named[name]
                param.copy_(torch.from_numpy(np.ascontiguousarray(value)).to(param.dtype))
