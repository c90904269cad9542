"""Training configuration and its ``key = value`` file format."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ParameterError


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 5e-3
    warmup_epochs: int = 2
    penalty: float = 0.4
    seed: int = 0
    # loss / ablation switches
    lex: bool = True                 # Eisner-Satta (True) or CYK (False)
    scheme: str = "01"               # 01 | unlabeled | labeled (one-stage)
    use_reg: bool = True
    head_aware: bool = True
    parsing: bool = True             # structured decoding; False predicts spans locally
    w_tree: float = 1.0
    w_label: float = 1.0
    w_reg: float = 1.0
    # optimizer
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip: float = 5.0
    # decoding
    decode_penalty: float = 0.0
    # model dims
    d_emb: int = 64
    hidden: int = 64
    window: int = 2
    k: int = 100
    k_label: int = 32

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < self.warmup_epochs:
            raise ParameterError("epochs must be >= warmup_epochs")
        if self.lr <= 0:
            raise ParameterError("lr must be > 0")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.penalty < 0 or self.decode_penalty < 0:
            raise ParameterError("penalty constants must be >= 0")
        if self.scheme not in ("01", "unlabeled", "labeled"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        return self

    @property
    def reg_c(self) -> float:
        return self.penalty if self.use_reg else 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ParameterError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].type, value, key)
        return cls(**kwargs)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())


def _coerce(type_name, value, key):
    if not isinstance(value, str):
        return value
    type_name = getattr(type_name, "__name__", type_name)
    try:
        if type_name == "bool":
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
    except ValueError:
        raise ParameterError(f"bad value for {key}: {value!r}") from None
    return value.strip()


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def load_config(path) -> TrainConfig:
    return TrainConfig.from_dict(parse_config_text(Path(path).read_text(encoding="utf-8")))
