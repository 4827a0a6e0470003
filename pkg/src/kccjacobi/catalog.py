"""Bundled example models (``kccjacobi/models/*.kcc``)."""

from __future__ import annotations

from importlib import resources

from .expr import VectorFieldModel, parse_model


def names() -> list[str]:
    files = resources.files("kccjacobi").joinpath("models")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".kcc"))


def source(name: str) -> str:
    return resources.files("kccjacobi").joinpath("models").joinpath(f"{name}.kcc").read_text(encoding="utf-8")


def load(name: str) -> VectorFieldModel:
    if name not in names():
        raise KeyError(f"no bundled model {name!r}; available: {', '.join(names())}")
    return parse_model(source(name), name=name)


def all_models() -> dict[str, VectorFieldModel]:
    return {name: load(name) for name in names()}
