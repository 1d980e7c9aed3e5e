"""
Evaluator properties: decode consistency, quantization and noise operators
"""
import numpy as np

from distance_forward.evaluation.decode import goodness_table, predict_from_table
from distance_forward.evaluation.noise import IMPULSE_PROBS, POISSON_LAMBDAS, impulse_noise, poisson_noise
from distance_forward.evaluation.quantize import quantization_step, quantize_tensor, quantize_weights
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata
from distance_forward.verification.toy import toy_cnn, toy_mlp


class QuantizationCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="quantize_idempotent",
            module="evaluator",
            op="quantize_weights",
            description="Quantized weights lie on the step grid within half a step, and re-quantizing is a no-op",
            category=CheckCategory.EVALUATION,
        )

    def run(self, rng):
        for bits in (16, 8, 6, 4, 3, 2):
            w = rng.standard_normal((7, 5)) * float(rng.random() + 0.1)
            q = quantize_tensor(w, bits)
            delta = quantization_step(w, bits)
            self.require(np.max(np.abs(q - w)) <= delta / 2 + 1e-12, f"{bits} bits: rounding error above delta/2")
            self.require(np.allclose(quantize_tensor(q, bits), q, rtol=0, atol=1e-12 * max(1.0, delta)),
                         f"{bits} bits: quantization is not idempotent")

        model, _ = toy_mlp(rng)
        once = quantize_weights(model, 4)
        twice = quantize_weights(once, 4)
        for (name, a), (_, b) in zip(once.named_params(), twice.named_params()):
            self.require(np.allclose(a.value, b.value, rtol=0, atol=1e-12), f"'{name}' moved on re-quantization")
        for (name, a), (_, b) in zip(model.named_params(), once.named_params()):
            if name.endswith("bias"):
                self.require(np.array_equal(a.value, b.value), f"bias '{name}' was quantized")
        return "bits 16..2"


class NoiseOperatorCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="noise_operators",
            module="evaluator",
            op="apply_noise",
            description="Shot and impulse noise keep shape, dtype and the [0, 1] range",
            category=CheckCategory.EVALUATION,
        )

    def run(self, rng):
        images = rng.random((8, 3, 5, 5)).astype(np.float32)
        for lam in POISSON_LAMBDAS.values():
            out = poisson_noise(images, lam, rng)
            self.require(out.shape == images.shape and out.dtype == images.dtype, "shot noise changed shape/dtype")
            self.require(out.min() >= 0.0 and out.max() <= 1.0, f"shot noise left [0, 1] at lambda={lam}")
        for p in IMPULSE_PROBS.values():
            out = impulse_noise(images, p, rng)
            self.require(out.shape == images.shape and out.dtype == images.dtype, "impulse noise changed shape/dtype")
            changed = out != images
            self.require(np.all(np.isin(out[changed], (0.0, 1.0))), f"impulse noise wrote a value other than 0/1 at p={p}")
        self.require(np.array_equal(impulse_noise(images, 0.0, rng), images), "p = 0 must leave images unchanged")
        return f"{len(POISSON_LAMBDAS)} shot and {len(IMPULSE_PROBS)} impulse levels"


class DecodeConsistencyCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="decode_consistency",
            module="evaluator",
            op="decode",
            description="Chunked and threaded goodness tables match and argmax ties go to the smallest label",
            category=CheckCategory.EVALUATION,
        )

    def run(self, rng):
        model, emb = toy_cnn(rng)
        images = rng.random((7,) + emb.image_shape)
        reference = goodness_table(model, emb, images, chunk_size=7)
        chunked = goodness_table(model, emb, images, chunk_size=2, threads=3)
        self.require(np.allclose(reference, chunked, rtol=1e-12, atol=1e-12),
                     "chunked goodness table differs from single pass")

        tied = np.zeros((2, emb.num_classes, 1))
        tied[1, 2:, 0] = 5.0
        self.require(list(predict_from_table(tied, [0])) == [0, 2], "ties did not resolve to the smallest label")
        return f"table shape {reference.shape}"


class MonotoneDecodeCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="decode_monotone_invariant",
            module="evaluator",
            op="decode",
            description="Strictly increasing transforms of the summed goodness leave every decoded label unchanged",
            category=CheckCategory.EVALUATION,
        )

    def run(self, rng):
        model, emb = toy_mlp(rng)
        images = rng.random((9,) + emb.image_shape)
        table = goodness_table(model, emb, images)
        layer_set = list(range(1, model.depth))
        predicted = predict_from_table(table, layer_set)
        summed = table[:, :, layer_set].sum(axis=2)
        transforms = {
            "affine": lambda s: 3.0 * s + 2.0,
            "log1p": np.log1p,
            "cube": lambda s: s ** 3,
            "exp": lambda s: np.exp(s / max(1.0, float(s.max()))),
        }
        for name, f in transforms.items():
            self.require(np.array_equal(np.argmax(f(summed), axis=1), predicted),
                         f"{name} transform changed the decoded labels")
        return f"{len(transforms)} transforms on {len(images)} images"
