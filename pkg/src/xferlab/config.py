"""Flat `key = value` experiment configs.

One experiment is one diffable text file: `#` starts a comment, keys are
dotted paths (`plan.pretrain.lr = 3e-6`), unknown keys are an error so
typos cannot silently change a run. A seed is mandatory; nothing in a
run may be nondeterministic by omission.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .featurize import Encoder, FrozenEmbeddingEncoder, HashedNgramEncoder, load_embedding_file
from .trainer import ConvergencePolicy, StageConfig, TwoStagePlan

OUTPUT_DIR_ENV = "XFERLAB_OUT"

# (train, pretrain) learning-rate defaults per encoder kind. The frozen
# pair suits externally produced sentence embeddings; the hashed pair is
# scaled up by the same ratio for the sparser built-in features.
DEFAULT_RATES = {"hashed": (3e-3, 3e-6), "frozen": (3e-5, 3e-8)}

_KNOWN_KEYS = {
    "name",
    "seed",
    "output_dir",
    "optimizer",
    "source.wld",
    "source.fld",
    "encoder.kind",
    "encoder.dim",
    "encoder.ngram_max",
    "encoder.embeddings",
    "model.hidden",
    "plan.pretrain.lr",
    "plan.pretrain.epochs",
    "plan.pretrain.batch_size",
    "plan.pretrain.seed",
    "plan.train.lr",
    "plan.train.max_epochs",
    "plan.train.batch_size",
    "plan.train.seed",
    "plan.convergence.patience",
    "plan.convergence.min_delta",
    "plan.convergence.val_fraction",
}
_KNOWN_PREFIXES = ("targets.", "runs.")


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ValidationError(f"{origin}:{lineno}: empty key")
        if key in values:
            raise ValidationError(f"{origin}:{lineno}: duplicate key {key!r}")
        if key not in _KNOWN_KEYS and not key.startswith(_KNOWN_PREFIXES):
            raise ValidationError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    output_dir: Path
    wld_path: Path | None
    fld_path: Path | None
    encoder_kind: str
    encoder_dim: int
    ngram_max: int
    embeddings_path: Path | None
    hidden_dims: tuple[int, ...]
    optimizer: str
    plan: TwoStagePlan
    targets: tuple[tuple[str, Path], ...] = ()
    runs: tuple[tuple[str, Path], ...] = ()

    @staticmethod
    def from_file(path: str | Path, seed_override: int | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as err:
            raise ValidationError(f"cannot read config {path}: {err}") from None
        return ExperimentConfig.from_values(
            parse_config_text(text, str(path)),
            base_dir=path.parent,
            default_name=path.stem,
            seed_override=seed_override,
        )

    @staticmethod
    def from_values(
        values: dict[str, str],
        base_dir: Path = Path("."),
        default_name: str = "run",
        seed_override: int | None = None,
    ) -> "ExperimentConfig":
        get = values.get

        def path_of(key: str) -> Path | None:
            v = get(key)
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base_dir / p

        if seed_override is not None:
            seed = seed_override
        elif get("seed") is not None:
            seed = _to_int(values, "seed")
        else:
            raise ValidationError("config must set a seed (or pass --seed)")

        encoder_kind = get("encoder.kind", "hashed")
        if encoder_kind not in ("hashed", "frozen"):
            raise ValidationError(f"encoder.kind {encoder_kind!r} not hashed|frozen")
        default_train_lr, default_pretrain_lr = DEFAULT_RATES[encoder_kind]

        wld_path = path_of("source.wld")
        fld_path = path_of("source.fld")
        embeddings = path_of("encoder.embeddings")
        if encoder_kind == "frozen" and embeddings is None:
            raise ValidationError("encoder.kind = frozen requires encoder.embeddings")

        hidden = tuple(
            int(tok) for tok in get("model.hidden", "").replace(",", " ").split()
        )
        optimizer = get("optimizer", "adam")
        if optimizer not in ("adam", "sgd"):
            raise ValidationError(f"optimizer {optimizer!r} not adam|sgd")

        train_cfg = StageConfig(
            learning_rate=_to_float(values, "plan.train.lr", default_train_lr),
            max_epochs=_to_int(values, "plan.train.max_epochs", 200),
            batch_size=_to_int(values, "plan.train.batch_size", 64),
            shuffle_seed=_to_int(values, "plan.train.seed", seed + 2),
        )
        pretrain_cfg = None
        if wld_path is not None and fld_path is not None:
            pretrain_cfg = StageConfig(
                learning_rate=_to_float(values, "plan.pretrain.lr", default_pretrain_lr),
                max_epochs=_to_int(values, "plan.pretrain.epochs", 1),
                batch_size=_to_int(values, "plan.pretrain.batch_size", 64),
                shuffle_seed=_to_int(values, "plan.pretrain.seed", seed + 1),
            )
        convergence = ConvergencePolicy(
            patience=_to_int(values, "plan.convergence.patience", 5),
            min_delta=_to_float(values, "plan.convergence.min_delta", 1e-4),
            val_fraction=_to_float(values, "plan.convergence.val_fraction", 0.1),
        )

        def labeled_paths(prefix: str) -> tuple[tuple[str, Path], ...]:
            out = []
            for key in values:  # file order
                if key.startswith(prefix):
                    p = Path(values[key])
                    out.append((key.removeprefix(prefix), p if p.is_absolute() else base_dir / p))
            return tuple(out)

        targets = labeled_paths("targets.")
        runs = labeled_paths("runs.")

        out = os.environ.get(OUTPUT_DIR_ENV) or get("output_dir", "out")
        out_path = Path(out) if Path(out).is_absolute() else base_dir / out

        cfg = ExperimentConfig(
            name=get("name", default_name),
            seed=seed,
            output_dir=out_path,
            wld_path=wld_path,
            fld_path=fld_path,
            encoder_kind=encoder_kind,
            encoder_dim=_to_int(values, "encoder.dim", 2**18),
            ngram_max=_to_int(values, "encoder.ngram_max", 2),
            embeddings_path=embeddings,
            hidden_dims=hidden,
            optimizer=optimizer,
            plan=TwoStagePlan(train=train_cfg, pretrain=pretrain_cfg, convergence=convergence),
            targets=targets,
            runs=runs,
        )
        cfg.validate_paths()
        return cfg

    def validate_paths(self) -> None:
        referenced = [
            p
            for p in (
                self.wld_path,
                self.fld_path,
                self.embeddings_path,
                *(p for _, p in self.targets),
                *(p for _, p in self.runs),
            )
            if p is not None
        ]
        resolved = [Path(p).resolve() for p in referenced]
        if len(set(resolved)) != len(resolved):
            dupes = sorted({str(p) for p in resolved if resolved.count(p) > 1})
            raise ValidationError(f"config references the same path twice: {dupes}")

    def build_encoder(self) -> Encoder:
        if self.encoder_kind == "hashed":
            return HashedNgramEncoder(self.encoder_dim, self.ngram_max)
        table = load_embedding_file(self.embeddings_path)
        return FrozenEmbeddingEncoder(table)


def _to_int(values: dict[str, str], key: str, default: int | None = None) -> int:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ValidationError(f"config key {key!r} is required")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"config key {key!r}: {raw!r} is not an integer") from None


def _to_float(values: dict[str, str], key: str, default: float | None = None) -> float:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise ValidationError(f"config key {key!r} is required")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"config key {key!r}: {raw!r} is not a number") from None
