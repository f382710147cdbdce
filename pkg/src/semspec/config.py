"""Hyper-parameters and training-variant descriptions."""

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError


@dataclass
class HyperParams:
    alpha: float = 50.0  # radius of the L2 constraint
    lam: float = 1e-4  # center-loss weight
    gamma: float = 1e-4  # adversary weight
    k: int = 5  # discriminator iterations per step
    clip_c: float = 0.01
    margin_m: float = 2.0
    batch_size: int = 16
    epochs: int = 3
    lr_main: float = 1e-3
    lr_disc: float = 5e-4
    center_lr: float = 0.5
    npair_n: int = 16
    npair_scale: float = 1.0
    dropout_p: float = 0.2
    disc_hidden: int = 900
    encoder_hidden: int = 1024  # 0 means "same as the embedding dimension"
    wasserstein: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("alpha", self.alpha > 0),
            ("lam", self.lam >= 0),
            ("gamma", self.gamma >= 0),
            ("k", self.k >= 1),
            ("clip_c", self.clip_c > 0),
            ("margin_m", self.margin_m > 0),
            ("batch_size", self.batch_size >= 2),
            ("epochs", self.epochs >= 1),
            ("lr_main", self.lr_main > 0),
            ("lr_disc", self.lr_disc > 0),
            ("center_lr", 0 < self.center_lr <= 1),
            ("npair_n", self.npair_n >= 1),
            ("npair_scale", self.npair_scale > 0),
            ("dropout_p", 0 <= self.dropout_p < 1),
            ("disc_hidden", self.disc_hidden >= 1),
            ("encoder_hidden", self.encoder_hidden >= 0),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {key}: {getattr(self, key)!r}", key=key)

    def to_dict(self):
        return asdict(self)


LOSSES = ("l2c-softmax+center", "l2c-softmax", "softmax", "contrastive", "npair")
ADVERSARIAL = ("off", "random", "parallel")


@dataclass
class VariantSpec:
    loss: str = "l2c-softmax+center"
    adversarial: str = "random"
    train_languages: list = field(default_factory=lambda: ["en"])
    adversarial_languages: list = field(default_factory=list)  # empty: every other language

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}", key="variant.loss")
        if self.adversarial not in ADVERSARIAL:
            raise ConfigError(f"unknown adversarial mode {self.adversarial!r}", key="variant.adversarial")
        if not self.train_languages:
            raise ConfigError("at least one training language is required", key="variant.train_languages")
        self.train_languages = list(self.train_languages)
        self.adversarial_languages = list(self.adversarial_languages)

    @property
    def uses_center(self):
        return self.loss == "l2c-softmax+center"

    def to_dict(self):
        return asdict(self)


# name -> (loss, adversarial)
VARIANTS = {
    "emu": ("l2c-softmax+center", "random"),
    "emu-wo-ld": ("l2c-softmax+center", "off"),
    "emu-wo-ld-cl": ("l2c-softmax", "off"),
    "emu-parallel": ("l2c-softmax+center", "parallel"),
    "softmax": ("softmax", "off"),
    "contrastive": ("contrastive", "off"),
    "npair": ("npair", "off"),
}


def variant(name, train_languages=("en",), adversarial_languages=()):
    try:
        loss, adversarial = VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}", key="variant.name") from None
    return VariantSpec(loss, adversarial, list(train_languages), list(adversarial_languages))


def hyperparams_from_dict(values: dict) -> HyperParams:
    known = {f.name for f in fields(HyperParams)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown hyper-parameter {key!r}", key=f"hp.{key}")
    return HyperParams(**values)
