"""Synthetic tag corpora and query preprocessing.

Corpus files are line oriented, one object per line::

    <object_id>\t<true_class>\t<tag>,<tag>,...

The manifest is a JSON document recording the generating spec and the
planted base / learnable / noise feature sets.

Draw order (all from one ``random.Random(seed)``), per object in sequence:
the true class (``randrange(M)``); then for each of the ``T`` tag draws a
``random()`` picking the pool by the cumulative mix followed by a
``randrange`` index into that pool; then, if ``cross > 0``, one ``sample``
of distinct other classes and one ``randrange(B)`` per sampled class.
"""
from __future__ import annotations

import dataclasses
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

from .errors import CorpusError, EmptyQueryError

FORMAT = "expertmas-manifest"
VERSION = 1


@dataclass(frozen=True)
class CorpusSpec:
    num_classes: int = 5
    base_per_class: int = 5
    learnable_per_class: int = 5
    noise_pool: int = 20
    tags_per_object: int = 5
    # probability that a tag draw comes from the base / learnable / noise pool
    mix: tuple = (0.5, 0.3, 0.2)
    length: int = 2000
    seed: int = 0
    # base tags of this many other classes are added to every object
    cross: int = 0
    # learnable features shared by neighbouring classes i and i+1 (contested)
    shared: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mix", tuple(float(x) for x in self.mix))
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 1 or self.base_per_class < 1 or self.tags_per_object < 1:
            raise CorpusError("num_classes, base_per_class and tags_per_object must be positive")
        for name in ("learnable_per_class", "noise_pool", "length", "cross", "shared"):
            if getattr(self, name) < 0:
                raise CorpusError(f"{name} must be non-negative")
        if len(self.mix) != 3 or any(x < 0 for x in self.mix):
            raise CorpusError(f"mix must be three non-negative probabilities, got {self.mix}")
        if abs(sum(self.mix) - 1.0) > 1e-9:
            raise CorpusError(f"mix must sum to 1, got {sum(self.mix)}")
        learnable = self.learnable_per_class + (self.shared * 2 if self.num_classes > 1 else 0)
        if self.mix[1] > 0 and learnable == 0:
            raise CorpusError("mix draws learnable tags but no learnable features exist")
        if self.mix[2] > 0 and self.noise_pool == 0:
            raise CorpusError("mix draws noise tags but the noise pool is empty")
        if self.cross > self.num_classes - 1:
            raise CorpusError(f"cross={self.cross} needs at least {self.cross + 1} classes")
        if self.shared and self.num_classes < 2:
            raise CorpusError("shared learnable features need at least two classes")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mix"] = list(self.mix)
        return d


class CorpusObject(NamedTuple):
    object_id: str
    true_class: str
    tags: tuple


@dataclass
class Manifest:
    spec: CorpusSpec
    classes: list
    base: dict
    learnable: dict
    noise: list

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "spec": self.spec.to_dict(),
            "classes": self.classes,
            "base": self.base,
            "learnable": self.learnable,
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Manifest":
        if data.get("format") != FORMAT or data.get("version") != VERSION:
            raise CorpusError(
                f"not a version-{VERSION} manifest (format={data.get('format')!r}, version={data.get('version')!r})"
            )
        return cls(
            CorpusSpec(**data["spec"]),
            list(data["classes"]),
            {c: list(v) for c, v in data["base"].items()},
            {c: list(v) for c, v in data["learnable"].items()},
            list(data["noise"]),
        )


def class_names(m: int) -> list[str]:
    width = len(str(m))
    return [f"c{i:0{width}d}" for i in range(1, m + 1)]


def plant(spec: CorpusSpec) -> Manifest:
    classes = class_names(spec.num_classes)
    base = {c: [f"{c}b{j}" for j in range(spec.base_per_class)] for c in classes}
    learnable = {c: [f"{c}l{j}" for j in range(spec.learnable_per_class)] for c in classes}
    if spec.shared:
        for i, c in enumerate(classes):
            nxt = classes[(i + 1) % len(classes)]
            if len(classes) == 2 and i == 1:
                break
            for j in range(spec.shared):
                s = f"s{c}{nxt}x{j}"
                learnable[c].append(s)
                learnable[nxt].append(s)
    noise = [f"n{j}" for j in range(spec.noise_pool)]
    return Manifest(spec, classes, base, learnable, noise)


def generate_corpus(spec: CorpusSpec) -> tuple[list[CorpusObject], Manifest]:
    manifest = plant(spec)
    rng = random.Random(spec.seed)
    classes = manifest.classes
    b_mix, l_mix, _ = spec.mix
    width = len(str(max(spec.length, 1)))
    objects = []
    for q in range(spec.length):
        ci = rng.randrange(len(classes))
        c = classes[ci]
        pools = (manifest.base[c], manifest.learnable[c], manifest.noise)
        tags = set()
        for _ in range(spec.tags_per_object):
            u = rng.random()
            pool = pools[0] if u < b_mix else pools[1] if u < b_mix + l_mix else pools[2]
            if not pool:
                # only reachable through float round-off at a zero-weight boundary
                pool = pools[0]
            tags.add(pool[rng.randrange(len(pool))])
        if spec.cross:
            others = [i for i in range(len(classes)) if i != ci]
            for oi in rng.sample(others, spec.cross):
                obase = manifest.base[classes[oi]]
                tags.add(obase[rng.randrange(len(obase))])
        objects.append(CorpusObject(f"q{q:0{width}d}", c, tuple(sorted(tags))))
    return objects, manifest


def format_object(obj: CorpusObject) -> str:
    return f"{obj.object_id}\t{obj.true_class}\t{','.join(obj.tags)}"


def write_corpus(objects: Iterable[CorpusObject], manifest: Manifest, corpus_path, manifest_path) -> None:
    with open(corpus_path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objects:
            fh.write(format_object(obj) + "\n")
    Path(manifest_path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def parse_line(line: str, lineno: int = 0) -> CorpusObject:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise CorpusError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
    oid, cls, tags = parts
    return CorpusObject(oid, cls, tuple(t for t in tags.split(",") if t))


def read_corpus(path) -> list[CorpusObject]:
    with open(path, encoding="utf-8") as fh:
        return [parse_line(line, i) for i, line in enumerate(fh, 1) if line.strip()]


def read_manifest(path) -> Manifest:
    try:
        return Manifest.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorpusError(f"{path}: malformed manifest ({exc})") from None


_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> tuple:
    return tuple(sorted({t for t in _SPLIT.split(text.lower()) if t}))


def preprocess(raw: Union[str, CorpusObject, Sequence[str]]) -> tuple:
    """Reduce an object to its sorted, duplicate-free tag collection.

    Free text is lowercased and split on runs of non-alphanumerics; corpus
    records and explicit tag sequences pass through unchanged.
    """
    if isinstance(raw, str):
        tags = tokenize(raw)
    elif isinstance(raw, CorpusObject):
        tags = tuple(sorted(set(raw.tags)))
    else:
        tags = tuple(sorted(set(raw)))
    if not tags:
        raise EmptyQueryError(f"no tags survive preprocessing of {raw!r}")
    return tags

