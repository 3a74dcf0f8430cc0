"""Experiment configuration schema: strict, file-loadable, hashable.

One config drives one task.  Unknown keys are rejected everywhere, every
numeric field is range-checked here so task code can assume a sane config,
and the resolved model serializes canonically (sorted keys, 17-significant-
digit floats) so a config hash pins a run.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator,
)

from .errors import ConfigError

TASKS = ("build", "check-weights", "spectrum", "ergodicity", "capacity",
         "walk", "excess")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- space ---------------------------------------------------------------------


class PieceConfig(StrictModel):
    name: str
    kind: Literal["segment", "disk", "mesh-file"]
    # segment
    length: Optional[float] = None
    n_cells: Optional[int] = None
    direction: Optional[list[float]] = None
    # disk
    radius: Optional[float] = None
    refinement: Optional[int] = None
    axis: Optional[list[float]] = None
    # rectangle-as-mesh is exported to a file; only the three kinds above
    # are built inline.  mesh-file:
    path: Optional[str] = None
    # shared placement
    origin: Optional[list[float]] = None

    @model_validator(mode="after")
    def _per_kind(self):
        required = {
            "segment": ("length", "n_cells"),
            "disk": ("radius", "refinement"),
            "mesh-file": ("path",),
        }[self.kind]
        allowed = {
            "segment": {"length", "n_cells", "origin", "direction"},
            "disk": {"radius", "refinement", "origin", "axis"},
            "mesh-file": {"path"},
        }[self.kind]
        for f in required:
            if getattr(self, f) is None:
                raise ValueError(f"piece {self.name!r} ({self.kind}) needs {f!r}")
        for f in ("length", "n_cells", "direction", "radius", "refinement",
                  "axis", "path", "origin"):
            if getattr(self, f) is not None and f not in allowed:
                raise ValueError(
                    f"piece {self.name!r} ({self.kind}) does not take {f!r}"
                )
        if self.length is not None and not self.length > 0:
            raise ValueError(f"piece {self.name!r}: length must be positive")
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"piece {self.name!r}: radius must be positive")
        if self.n_cells is not None and self.n_cells < 1:
            raise ValueError(f"piece {self.name!r}: n_cells must be >= 1")
        if self.refinement is not None and self.refinement < 1:
            raise ValueError(f"piece {self.name!r}: refinement must be >= 1")
        return self

    def scalable(self) -> bool:
        return self.kind in ("segment", "disk")


class WeightConfig(StrictModel):
    piece: str
    kind: Literal["constant", "power", "tabulated"] = "constant"
    constant: float = 1.0
    exponent: float = 0.0
    anchor: Union[str, list[float], None] = None
    table: Optional[list[float]] = None

    @model_validator(mode="after")
    def _per_kind(self):
        if self.kind == "power" and self.anchor is None:
            raise ValueError(f"power weight on {self.piece!r} needs an anchor")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError(f"tabulated weight on {self.piece!r} needs a table")
        if self.kind == "constant" and not (self.constant > 0):
            raise ValueError(f"constant weight on {self.piece!r} must be positive")
        return self


class IntersectionConfig(StrictModel):
    id: str
    pieces: list[str] = Field(min_length=2, max_length=2)
    k: int = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _distinct(self):
        if self.pieces[0] == self.pieces[1]:
            raise ValueError(
                f"intersection {self.id!r} names the same piece twice")
        return self


class SpaceConfig(StrictModel):
    pieces: list[PieceConfig] = Field(min_length=1)
    weights: list[WeightConfig] = Field(default_factory=list)
    intersections: Optional[list[IntersectionConfig]] = None
    tolerance: Optional[float] = None

    @model_validator(mode="after")
    def _names(self):
        names = [p.name for p in self.pieces]
        if len(set(names)) != len(names):
            raise ValueError("piece names must be unique")
        seen = set()
        for w in self.weights:
            if w.piece not in names:
                raise ValueError(f"weight declared for unknown piece {w.piece!r}")
            if w.piece in seen:
                raise ValueError(f"piece {w.piece!r} has two weight declarations")
            seen.add(w.piece)
        if self.tolerance is not None and not (self.tolerance > 0):
            raise ValueError("glue tolerance must be positive")
        return self


# -- regions (condenser plates, excess sets, walk observables) ------------------


class BallRegion(StrictModel):
    center: list[float]
    radius: float = Field(gt=0)


class TubeRegion(StrictModel):
    intersection: str
    radius: float = Field(gt=0)


class HalfspaceRegion(StrictModel):
    normal: list[float]
    offset: float = 0.0


class RegionConfig(StrictModel):
    """Exactly one of the selectors; resolved to a DOF set by the task."""

    intersection: Optional[str] = None
    ball: Optional[BallRegion] = None
    tube: Optional[TubeRegion] = None
    halfspace: Optional[HalfspaceRegion] = None
    piece: Optional[str] = None
    all: bool = False

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [f for f in ("intersection", "ball", "tube", "halfspace", "piece")
                 if getattr(self, f) is not None]
        if self.all:
            given.append("all")
        if len(given) != 1:
            raise ValueError(
                f"region needs exactly one selector, got {given or 'none'}"
            )
        return self


# -- task parameter blocks -------------------------------------------------------


class BuildParams(StrictModel):
    dump_matrices: bool = True


class CheckWeightsParams(StrictModel):
    radii: Optional[list[float]] = None       # default: diameter sweep
    a2_threshold: float = Field(default=25.0, gt=0)
    tube_sweep: Optional[list[float]] = None


class SpectrumParams(StrictModel):
    k: int = Field(default=6, ge=1)
    decay_horizon: Optional[float] = Field(default=None, gt=0)
    decay_tau: Optional[float] = Field(default=None, gt=0)


class ErgodicityParams(StrictModel):
    ladder: list[int] = Field(min_length=3)
    k: int = Field(default=4, ge=2)
    ergodic_ratio: float = Field(default=0.5, gt=0)
    degenerate_ratio: float = Field(default=0.2, gt=0)
    slope_tol: float = Field(default=0.1, gt=0)


class CondenserParams(StrictModel):
    k_set: RegionConfig
    omega: RegionConfig


class BoundsParams(StrictModel):
    intersection: str
    R: float = Field(gt=0)
    n_grid: int = Field(default=49, ge=8)
    slope_band: float = Field(default=0.12, gt=0)


class EquivalenceParams(StrictModel):
    intersection: str
    ladder: list[int] = Field(min_length=3)
    R: Optional[float] = Field(default=None, gt=0)
    slope_tol: float = Field(default=0.1, gt=0)


class CapacityParams(StrictModel):
    condenser: Optional[CondenserParams] = None
    bounds: Optional[BoundsParams] = None
    equivalence: Optional[EquivalenceParams] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [f for f in ("condenser", "bounds", "equivalence")
                 if getattr(self, f) is not None]
        if len(given) != 1:
            raise ValueError(f"capacity task needs exactly one mode, got {given}")
        return self


class FKParams(StrictModel):
    coordinate: Optional[int] = Field(default=None, ge=0)
    indicator: Optional[RegionConfig] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.coordinate is None) == (self.indicator is None):
            raise ValueError("fk observable: give coordinate or indicator")
        return self


class CrossingParams(StrictModel):
    ladder: list[int] = Field(min_length=3)
    intersection: str
    delta: Optional[float] = Field(default=None, gt=0)
    slope_tol: float = Field(default=0.1, gt=0)


class WalkParams(StrictModel):
    mode: Literal["ensemble", "fk", "crossing", "path"] = "ensemble"
    T: float = Field(gt=0)
    n_paths: int = Field(default=1024, ge=1)
    x0: Union[int, list[float], None] = None
    intersection: Optional[str] = None          # ensemble crossing observable
    delta: Optional[float] = Field(default=None, gt=0)
    fk: Optional[FKParams] = None
    crossing: Optional[CrossingParams] = None

    @model_validator(mode="after")
    def _per_mode(self):
        if self.mode == "fk" and self.fk is None:
            raise ValueError("walk mode fk needs the fk observable block")
        if self.mode == "crossing" and self.crossing is None:
            raise ValueError("walk mode crossing needs the crossing block")
        if self.fk is not None and self.mode != "fk":
            raise ValueError("fk block only valid in mode fk")
        if self.crossing is not None and self.mode != "crossing":
            raise ValueError("crossing block only valid in mode crossing")
        return self


class ExcessSetConfig(StrictModel):
    name: str
    region: RegionConfig


class ExcessParams(StrictModel):
    sets: list[ExcessSetConfig] = Field(min_length=1)
    h_schedule: list[float] = Field(min_length=4)
    convention: Literal["symmetric", "one-sided"] = "symmetric"
    min_ratio: float = Field(default=4.0, gt=0)

    @model_validator(mode="after")
    def _positive(self):
        if any(h <= 0 for h in self.h_schedule):
            raise ValueError("h_schedule values must be positive")
        names = [s.name for s in self.sets]
        if len(set(names)) != len(names):
            raise ValueError("excess set names must be unique")
        return self


_PARAM_MODEL = {
    "build": BuildParams,
    "check-weights": CheckWeightsParams,
    "spectrum": SpectrumParams,
    "ergodicity": ErgodicityParams,
    "capacity": CapacityParams,
    "walk": WalkParams,
    "excess": ExcessParams,
}


class ExperimentConfig(StrictModel):
    space: SpaceConfig
    task: Literal["build", "check-weights", "spectrum", "ergodicity",
                  "capacity", "walk", "excess"]
    params: dict = Field(default_factory=dict)
    seed: int = 0
    output_dir: Optional[str] = None

    _parsed_params: object = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _params_schema(self):
        model = _PARAM_MODEL[self.task]
        try:
            parsed = model.model_validate(self.params)
        except ValidationError as e:
            raise ValueError(f"params for task {self.task!r}: {_terse(e)}")
        self._parsed_params = parsed
        ladder = getattr(parsed, "ladder", None)
        if ladder is None and self.task == "capacity":
            eq = parsed.equivalence
            ladder = eq.ladder if eq is not None else None
        if ladder is None and self.task == "walk" and parsed.crossing is not None:
            ladder = parsed.crossing.ladder
        if ladder is not None:
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("refinement ladder must be strictly increasing")
            if ladder[0] < 1:
                raise ValueError("refinement ladder entries must be >= 1")
            for p in self.space.pieces:
                if not p.scalable():
                    raise ValueError(
                        f"piece {p.name!r} ({p.kind}) cannot be scaled along a "
                        "refinement ladder"
                    )
        return self

    @property
    def parsed_params(self):
        return self._parsed_params


def _terse(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def load_config(path: str) -> ExperimentConfig:
    """Parse a JSON or YAML config file into a validated ExperimentConfig."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}")
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<inline>") -> ExperimentConfig:
    if source.endswith((".yaml", ".yml")):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"{source}: invalid YAML: {e}")
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as e:
                raise ConfigError(f"{source}: neither valid JSON nor YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: config root must be a mapping")
    return validate_config(data, source=source)


def validate_config(data: dict, source: str = "<dict>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_terse(e)}")


# -- canonical serialization ------------------------------------------------------


def _emit(value, out: list, pad: str):
    import numpy as np
    if isinstance(value, np.integer):
        value = int(value)
    elif isinstance(value, np.floating):
        value = float(value)
    elif isinstance(value, np.bool_):
        value = bool(value)
    elif isinstance(value, np.ndarray):
        value = value.tolist()

    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if math.isnan(value):
            out.append('"nan"')
        elif math.isinf(value):
            out.append('"inf"' if value > 0 else '"-inf"')
        else:
            out.append(format(value, ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        inner = pad + " "
        keys = sorted(str(k) for k in value)
        lookup = {str(k): v for k, v in value.items()}
        for i, k in enumerate(keys):
            out.append(inner)
            out.append(json.dumps(k, ensure_ascii=True))
            out.append(": ")
            _emit(lookup[k], out, inner)
            out.append(",\n" if i + 1 < len(keys) else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        inner = pad + " "
        for i, v in enumerate(value):
            out.append(inner)
            _emit(v, out, inner)
            out.append(",\n" if i + 1 < len(value) else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(value)!r}")


def canonical_json(value) -> str:
    """Deterministic JSON text: sorted keys, floats at 17 significant digits."""
    out: list = []
    _emit(value, out, "")
    out.append("\n")
    return "".join(out)


def resolved_config(cfg: ExperimentConfig) -> dict:
    data = cfg.model_dump(mode="json", exclude_none=True)
    data["params"] = cfg.parsed_params.model_dump(mode="json", exclude_none=True)
    return data


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(
        canonical_json(resolved_config(cfg)).encode("ascii")
    ).hexdigest()
