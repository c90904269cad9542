"""Semirings over a leading value axis.

Every chart value carries a leading axis of size ``size``: log-weights for the
log and max semirings, ``(log-weight, expected additive score)`` pairs for the
first-order expectation semiring used to compute KL divergences. Products are
elementwise addition for all three, so only ``sum`` differs.
"""
import torch

NEG = -1e9  # saturating stand-in for -inf; masked cells never yield NaN


class Semiring:
    name = "base"
    size = 1

    @classmethod
    def convert(cls, logw: torch.Tensor, extra: torch.Tensor | None = None) -> torch.Tensor:
        return logw.unsqueeze(0)

    @classmethod
    def zero(cls, shape, dtype=torch.float64) -> torch.Tensor:
        out = torch.zeros((cls.size, *shape), dtype=dtype)
        out[0] = NEG
        return out

    @staticmethod
    def sum(x: torch.Tensor, dim: int) -> torch.Tensor:
        raise NotImplementedError

    @classmethod
    def saturate(cls, x: torch.Tensor) -> torch.Tensor:
        if cls.size == 1:
            return x.clamp(min=NEG)
        return torch.cat([x[:1].clamp(min=NEG), x[1:]], dim=0)

    @classmethod
    def mask(cls, x: torch.Tensor, banned: torch.Tensor) -> torch.Tensor:
        """Set log-weight to NEG where ``banned`` (broadcast over trailing dims)."""
        if cls.size == 1:
            return x.masked_fill(banned, NEG)
        return torch.cat([x[:1].masked_fill(banned, NEG), x[1:]], dim=0)


class LogSemiring(Semiring):
    name = "log"

    @staticmethod
    def sum(x, dim):
        return torch.logsumexp(x, dim=dim)


class MaxSemiring(Semiring):
    name = "max"

    @staticmethod
    def sum(x, dim):
        return x.max(dim=dim).values


class KLSemiring(Semiring):
    """Expectation semiring in log space: a value ``(l, e)`` stands for total
    weight ``exp(l)`` whose weighted-average additive score is ``e``. With the
    additive score set to ``log q - log p`` per item, the root ``e`` is
    ``E_q[log q(T)/p(T) + log Z_q - log Z_p]``."""

    name = "kl"
    size = 2

    @classmethod
    def convert(cls, logw, extra=None):
        if extra is None:
            extra = torch.zeros_like(logw)
        return torch.stack([logw, extra], dim=0)

    @staticmethod
    def sum(x, dim):
        if dim < 0:
            dim = x.dim() + dim
        weights = torch.softmax(x[0], dim=dim - 1)
        logw = torch.logsumexp(x[0], dim=dim - 1)
        return torch.stack([logw, (weights * x[1]).sum(dim=dim - 1)], dim=0)


SEMIRINGS = {s.name: s for s in (LogSemiring, MaxSemiring, KLSemiring)}


def get_semiring(name):
    if isinstance(name, type) and issubclass(name, Semiring):
        return name
    try:
        return SEMIRINGS[name]
    except KeyError:
        raise ValueError(f"unknown semiring {name!r}; expected one of {sorted(SEMIRINGS)}") from None
