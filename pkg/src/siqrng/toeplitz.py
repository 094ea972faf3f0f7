"""Two-universal randomness extraction with binary Toeplitz matrices.

Seed convention (bit-exact): for an l x m matrix T built from a seed of
m + l - 1 bits,

* ``seed[0:l]`` is the first column read top to bottom
  (``T[i, 0] = seed[i]``, so ``seed[0]`` is the top-left corner), and
* ``seed[l - 1 + j] = T[0, j]`` for ``j >= 1`` continues along the first
  row,

with every diagonal constant: ``T[i, j] = T[i - 1, j - 1]``.  The output is
``T @ raw`` over GF(2).

Large products use exact integer block convolution: each input block's
linear convolution against the relevant seed window is computed with a
real FFT whose coefficients (bounded by the block size) stay far below the
float64 integer limit, rounded back to integers and reduced mod 2.  The
result is bit-identical to the dense product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .analysis import AnalysisReport
from .bitops import BitsLike, as_bits
from .errors import ConfigError, InconsistentAnalysisError

# Above this many scalar multiply-accumulates, switch to block FFT.
_DIRECT_LIMIT = 1 << 26
_BLOCK = 1 << 23


@dataclass(frozen=True)
class ToeplitzSpec:
    """Shape and seed of one concrete hash instance."""

    input_bits: int
    output_bits: int
    seed: np.ndarray

    def __post_init__(self) -> None:
        if self.input_bits < 0 or self.output_bits < 0:
            raise ConfigError("hash dimensions must be non-negative")
        if self.output_bits > self.input_bits:
            raise ConfigError(
                f"cannot extract {self.output_bits} bits from {self.input_bits}"
            )
        seed = as_bits(self.seed)
        object.__setattr__(self, "seed", seed)
        expected = 0 if self.output_bits == 0 else self.input_bits + self.output_bits - 1
        if seed.size != expected:
            raise ConfigError(
                f"seed must hold exactly {expected} bits, got {seed.size}"
            )

    def matrix(self) -> np.ndarray:
        """Dense 0/1 matrix; intended for small shapes and oracles."""
        m, ell = self.input_bits, self.output_bits
        out = np.zeros((ell, m), dtype=np.uint8)
        for i in range(ell):
            for j in range(m):
                out[i, j] = self.seed[i - j] if i >= j else self.seed[ell - 1 + j - i]
        return out


def plan_extraction(
    report: AnalysisReport, raw_length: int, rng: np.random.Generator
) -> ToeplitzSpec:
    """Bind a certified length to a concrete hash over ``raw_length`` bits.

    The seed bits come from the caller-provided stream; they select the
    hash function and are reusable, so they are not charged against the
    certified output.
    """
    ell = int(report.length)
    if ell > raw_length:
        raise InconsistentAnalysisError(
            f"report certifies {ell} bits but only {raw_length} raw bits exist"
        )
    n_seed = 0 if ell == 0 else raw_length + ell - 1
    seed = rng.integers(0, 2, size=n_seed, dtype=np.uint8)
    return ToeplitzSpec(input_bits=int(raw_length), output_bits=ell, seed=seed)


def extract(raw: BitsLike, spec: ToeplitzSpec) -> np.ndarray:
    """Hash ``raw`` down to ``spec.output_bits`` certified bits."""
    x = as_bits(raw)
    m, ell = spec.input_bits, spec.output_bits
    if x.size != m:
        raise ConfigError(f"raw input holds {x.size} bits, hash expects {m}")
    if ell == 0:
        return np.zeros(0, dtype=np.uint8)

    # Diagonal sequence indexed by (j - i) + (l - 1); reversing it turns the
    # matrix product into a slice of one linear convolution.
    diag = np.concatenate([spec.seed[:ell][::-1], spec.seed[ell:]])
    kernel = diag[::-1]
    return _conv_parity_window(kernel, x, start=m - 1, count=ell)


def _conv_parity_window(
    kernel: np.ndarray, x: np.ndarray, start: int, count: int
) -> np.ndarray:
    """Parity of linear-convolution coefficients [start, start + count)."""
    if kernel.size * x.size <= _DIRECT_LIMIT:
        conv = np.convolve(kernel.astype(np.int64), x.astype(np.int64))
        return (conv[start : start + count] & 1).astype(np.uint8)

    out = np.zeros(count, dtype=np.uint8)
    for j0 in range(0, x.size, _BLOCK):
        block = x[j0 : j0 + _BLOCK].astype(np.float64)
        blen = block.size
        # Kernel window that can reach output indices [start, start+count)
        # through this block: kernel index = out_index - (j0 + block offset).
        w_lo = max(0, start - j0 - blen + 1)
        w_hi = min(kernel.size, start + count - j0)
        if w_lo >= w_hi:
            continue
        window = kernel[w_lo:w_hi].astype(np.float64)
        nfft = next_fast_len(window.size + blen - 1, real=True)
        conv = np.fft.irfft(
            np.fft.rfft(window, nfft) * np.fft.rfft(block, nfft), nfft
        )
        conv = np.rint(conv[: window.size + blen - 1]).astype(np.int64)
        # Convolution coefficient c corresponds to output index c + w_lo + j0.
        o_lo = max(start, w_lo + j0)
        o_hi = min(start + count, w_lo + j0 + conv.size)
        if o_lo < o_hi:
            seg = conv[o_lo - w_lo - j0 : o_hi - w_lo - j0]
            out[o_lo - start : o_hi - start] ^= (seg & 1).astype(np.uint8)
    return out
