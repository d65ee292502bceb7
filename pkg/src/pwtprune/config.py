"""JSON run configuration. Unknown keys are rejected; errors name the field path."""
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .network import VGG_MICRO
from .optim import AdamConfig
from .schedule import ScheduleConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConvSpec(_Strict):
    type: Literal["conv"]
    out: int = Field(gt=0)
    k: int = Field(3, gt=0)
    stride: int = Field(1, gt=0)


class PoolSpec(_Strict):
    type: Literal["pool"]


class LinearSpec(_Strict):
    type: Literal["linear"]
    out: Optional[int] = Field(None, gt=0)


LayerSpec = Annotated[Union[ConvSpec, PoolSpec, LinearSpec], Field(discriminator="type")]


class SyntheticData(_Strict):
    kind: Literal["synthetic"]
    num_classes: int = Field(10, gt=1)
    n_train: int = Field(1000, gt=0)
    n_test: int = Field(500, gt=0)
    image_side: int = Field(16, gt=0)
    channels: int = Field(1, gt=0)
    noise: float = Field(1.0, ge=0)
    jitter: int = Field(2, ge=0)
    seed: int = 0


class IdxData(_Strict):
    kind: Literal["idx"]
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    num_classes: Optional[int] = Field(None, gt=1)


class CifarData(_Strict):
    kind: Literal["cifar"]
    train: list[str]
    test: list[str]
    variant: Optional[Literal["cifar10", "cifar100"]] = None


DataSpec = Annotated[Union[SyntheticData, IdxData, CifarData], Field(discriminator="kind")]


class ScheduleSpec(_Strict):
    mode: Literal["PWT", "PRT", "None"] = "None"
    criterion: Literal["L1", "MeanAct", "Random"] = "L1"
    initial_prune_perc: float = 0.0
    rate_per_epoch: float = 1.0
    target_prune_perc: float = 0.0
    mod_k: int = 1
    prt_prune_epoch: Optional[int] = None
    advance_target_on_skip: bool = False
    min_filters_per_layer: int = 1
    l1_scope: Literal["global", "layer"] = "global"


class OptimizerSpec(_Strict):
    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)


class RunConfig(_Strict):
    architecture: Union[Literal["vgg-micro"], list[LayerSpec]] = "vgg-micro"
    dataset: DataSpec
    schedule: ScheduleSpec = ScheduleSpec()
    optimizer: OptimizerSpec = OptimizerSpec()
    epochs: int = Field(gt=0)
    batch_size: int = Field(32, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    out_dir: Optional[str] = None
    precision: Literal["float32", "float64"] = "float32"
    checkpoint_every: int = Field(10, gt=0)
    record_wall_time: bool = False

    @model_validator(mode="after")
    def _schedule_consistent(self):
        try:
            self.schedule_config()
        except ValueError as exc:
            raise ValueError(f"schedule: {exc}") from None
        return self

    def layer_specs(self):
        if self.architecture == "vgg-micro":
            return [dict(s) for s in VGG_MICRO]
        return [spec.model_dump(exclude_none=True) for spec in self.architecture]

    def schedule_config(self):
        s = self.schedule
        return ScheduleConfig(
            mode=s.mode,
            criterion=s.criterion,
            initial_prune_perc=s.initial_prune_perc,
            rate_per_epoch=s.rate_per_epoch,
            target_prune_perc=s.target_prune_perc,
            mod_k=s.mod_k,
            prt_prune_epoch=s.prt_prune_epoch,
            total_epochs=self.epochs,
            advance_target_on_skip=s.advance_target_on_skip,
            min_filters_per_layer=s.min_filters_per_layer,
            l1_scope=s.l1_scope,
        )

    def adam_config(self):
        return AdamConfig(**self.optimizer.model_dump())


def format_validation_error(exc):
    errors = exc.errors()
    # A union reports one error per alternative; the preset-name branch is
    # noise when a layer list was given.
    def preset_branch(e):
        return any(str(p).startswith("literal[") for p in e["loc"])

    deepest = max(len(e["loc"]) for e in errors)
    errors = [e for e in errors if not (preset_branch(e) and len(e["loc"]) < deepest - 1)]
    lines = []
    for err in errors:
        parts = [str(p) for p in err["loc"] if "[" not in str(p)]
        loc = ".".join(parts) or "<root>"
        line = f"{loc}: {err['msg']}"
        if line not in lines:
            lines.append(line)
    return "\n".join(lines)


def parse_config(doc, model=RunConfig):
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def load_config(path, model=RunConfig):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, model)
