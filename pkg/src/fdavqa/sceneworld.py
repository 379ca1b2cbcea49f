"""SceneWorld: synthetic scenes, template questions and JSONL datasets.

Object features are fixed one-hot attribute codes (noun, color, size) plus the
bounding box, with additive Gaussian noise. The scene-level feature only
carries the object count and a background tag, so it cannot tell which object
has which color. Each background only admits a subset of the colors, which
gives a global-only model a learnable but weak color prior.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .lexicon import EmbeddingTable, LabelEmbeddings, Vocabulary, WordVectors
from .numerics import DTYPE

QTYPES = ("yesno", "number", "color", "other")
REPORT_QTYPES = ("yesno", "number", "other")
N_CHOICES = 18
MAX_COUNT = 9
FORMAT_VERSION = 1

TEMPLATE_WORDS = ("what", "color", "size", "is", "the", "how", "many", "are", "there", "a")
IRREGULAR_PLURALS = {"mouse": "mice"}
SYNONYM_COSINE = 0.95


class SceneConfigError(ValueError):
    pass


class NoTemplateError(ValueError):
    pass


class DatasetError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def plural(noun: str) -> str:
    return IRREGULAR_PLURALS.get(noun, noun + "s")


@dataclass(frozen=True)
class SceneConfig:
    nouns: tuple = ("ball", "cube", "cylinder", "cone", "frisbee", "mouse", "umbrella", "cake")
    colors: tuple = ("red", "blue", "green", "yellow", "white", "black")
    sizes: tuple = ("small", "large")
    backgrounds: tuple = ("grass", "sand", "snow", "brick", "wood", "tile")
    synonyms: tuple = (("sphere", "ball"), ("disc", "frisbee"))
    min_objects: int = 1
    max_objects: int = 5
    visual_dim: int = 32
    noise: float = 0.1
    distractor_prob: float = 0.5
    palette_size: int = 4
    qtype_weights: tuple = (("yesno", 0.4), ("number", 0.15), ("color", 0.35), ("other", 0.1))
    yes_prob: float = 0.6
    negative_existence: bool = True
    with_choices: bool = True
    matcher_seed: int = 0

    def __post_init__(self):
        for name in ("nouns", "colors", "sizes", "backgrounds", "synonyms", "qtype_weights"):
            value = getattr(self, name)
            if isinstance(value, dict):
                value = tuple(value.items())
            object.__setattr__(self, name, tuple(
                tuple(v) if isinstance(v, list) else v for v in value))

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SceneConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: [list(v) if isinstance(v, tuple) else v for v in val]
                if isinstance(val, tuple) else val for k, val in d.items()}

    @property
    def object_code_len(self) -> int:
        return len(self.nouns) + len(self.colors) + len(self.sizes) + 4

    @property
    def global_code_len(self) -> int:
        return self.max_objects + len(self.backgrounds)

    def validate(self):
        if not 1 <= self.min_objects <= self.max_objects:
            raise SceneConfigError(
                f"object range [{self.min_objects}, {self.max_objects}] is empty")
        if self.max_objects > len(self.nouns):
            raise SceneConfigError(
                f"{self.max_objects} objects need distinct nouns but only {len(self.nouns)} exist")
        if self.distractor_prob > 0 and self.max_objects >= 2 and len(self.colors) < 2:
            raise SceneConfigError("distractors need at least two colors")
        if not self.colors or not self.sizes or not self.backgrounds:
            raise SceneConfigError("color, size and background inventories must be nonempty")
        for name, vocab in (("nouns", self.nouns), ("colors", self.colors),
                            ("sizes", self.sizes)):
            if len(set(vocab)) != len(vocab):
                raise SceneConfigError(f"duplicate entries in {name}")
        if self.visual_dim < max(self.object_code_len, self.global_code_len):
            raise SceneConfigError(
                f"visual_dim {self.visual_dim} is smaller than the attribute code "
                f"({self.object_code_len}) or scene code ({self.global_code_len})")
        if self.noise < 0:
            raise SceneConfigError("noise must be nonnegative")
        if not 1 <= self.palette_size <= len(self.colors):
            raise SceneConfigError(f"palette_size must lie in [1, {len(self.colors)}]")
        if self.distractor_prob > 0 and self.max_objects >= 2 and self.palette_size < 2:
            raise SceneConfigError("distractors need a palette of at least two colors")
        weights = dict(self.qtype_weights)
        if set(weights) - set(QTYPES) or sum(weights.values()) <= 0:
            raise SceneConfigError(f"qtype_weights must be positive weights over {QTYPES}")
        if self.with_choices and len(answer_universe(self)) < N_CHOICES:
            raise SceneConfigError(
                f"multiple choice needs {N_CHOICES} answers, the world has "
                f"{len(answer_universe(self))}")
        return self


def answer_universe(config: SceneConfig) -> list[str]:
    """Every answer the templates can produce."""
    counts = [str(i) for i in range(1, MAX_COUNT + 1)]
    return ["yes", "no"] + counts + list(config.colors) + list(config.sizes)


# --- scene types ----------------------------------------------------------


@dataclass(eq=False)
class SceneObject:
    label: str
    color: str
    size: str
    bbox: tuple
    feature: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, SceneObject)
                and (self.label, self.color, self.size) == (other.label, other.color, other.size)
                and tuple(self.bbox) == tuple(other.bbox)
                and np.array_equal(self.feature, other.feature))

    def to_json(self) -> dict:
        return {"label": self.label, "color": self.color, "size": self.size,
                "bbox": [float(v) for v in self.bbox],
                "feature": [float(v) for v in self.feature]}


@dataclass(eq=False)
class Scene:
    id: str
    objects: list
    global_feature: np.ndarray
    background: str | None = None

    def __eq__(self, other):
        return (isinstance(other, Scene) and self.id == other.id
                and self.background == other.background
                and self.objects == other.objects
                and np.array_equal(self.global_feature, other.global_feature))

    @property
    def visual_dim(self) -> int:
        return self.global_feature.shape[0]

    def labels(self) -> list[str]:
        return [o.label for o in self.objects]

    def to_json(self) -> dict:
        d = {"kind": "scene", "id": self.id,
             "global_feature": [float(v) for v in self.global_feature],
             "objects": [o.to_json() for o in self.objects]}
        if self.background is not None:
            d["background"] = self.background
        return d


@dataclass
class QASample:
    id: str
    scene_id: str
    tokens: list
    answer: str
    qtype: str
    choices: list | None = None

    @property
    def report_qtype(self) -> str:
        return "other" if self.qtype == "color" else self.qtype

    def to_json(self) -> dict:
        d = {"kind": "qa", "id": self.id, "scene_id": self.scene_id,
             "tokens": list(self.tokens), "answer": self.answer, "qtype": self.qtype}
        if self.choices is not None:
            d["choices"] = list(self.choices)
        return d


# --- features ---------------------------------------------------------------


def attribute_code(obj_or_scene, config: SceneConfig) -> np.ndarray:
    """Noise-free code for an object, or the scene-level code for a Scene."""
    code = np.zeros(config.visual_dim, dtype=DTYPE)
    if isinstance(obj_or_scene, Scene):
        offset = config.visual_dim - config.global_code_len
        n = min(len(obj_or_scene.objects), config.max_objects)
        code[offset + n - 1] = 1.0
        bg = config.backgrounds.index(obj_or_scene.background)
        code[offset + config.max_objects + bg] = 1.0
        return code
    obj = obj_or_scene
    nn, nc, ns = len(config.nouns), len(config.colors), len(config.sizes)
    code[config.nouns.index(obj.label)] = 1.0
    code[nn + config.colors.index(obj.color)] = 1.0
    code[nn + nc + config.sizes.index(obj.size)] = 1.0
    code[nn + nc + ns: nn + nc + ns + 4] = obj.bbox
    return code


def synth_features(obj_or_scene, config: SceneConfig, noise_scale: float | None = None,
                   rng=None) -> np.ndarray:
    """Attribute code plus zero-mean Gaussian noise of scale ``noise_scale``."""
    if config.visual_dim < max(config.object_code_len, config.global_code_len):
        raise SceneConfigError(f"visual_dim {config.visual_dim} too small")
    noise_scale = config.noise if noise_scale is None else noise_scale
    code = attribute_code(obj_or_scene, config)
    if noise_scale > 0:
        code += rng.normal(0.0, noise_scale, size=code.shape)
    return code


# --- generation -------------------------------------------------------------


def palette(config: SceneConfig, background_index: int) -> np.ndarray:
    """Color distribution of a background: uniform over ``palette_size``
    consecutive colors starting at the background's index."""
    k = len(config.colors)
    p = np.zeros(k, dtype=DTYPE)
    p[(background_index + np.arange(config.palette_size)) % k] = 1.0 / config.palette_size
    return p


def generate_scene(rng, config: SceneConfig, scene_id: str = "scene-0") -> Scene:
    config.validate()
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    bg = int(rng.integers(len(config.backgrounds)))
    colors_p = palette(config, bg)
    distract = n >= 2 and rng.random() < config.distractor_prob

    n_nouns = n - 1 if distract else n
    nouns = [config.nouns[i] for i in rng.choice(len(config.nouns), n_nouns, replace=False)]
    colors = [config.colors[i] for i in rng.choice(len(config.colors), n_nouns, p=colors_p)]
    if distract:
        # same noun, different color
        j = int(rng.integers(n_nouns))
        p = colors_p.copy()
        p[config.colors.index(colors[j])] = 0.0
        p /= p.sum()
        nouns.append(nouns[j])
        colors.append(config.colors[int(rng.choice(len(config.colors), p=p))])
    order = rng.permutation(n)

    objects = []
    for k in order:
        size = config.sizes[int(rng.integers(len(config.sizes)))]
        w, h = rng.uniform(0.1, 0.4, size=2)
        x = rng.uniform(0.0, 1.0 - w)
        y = rng.uniform(0.0, 1.0 - h)
        obj = SceneObject(nouns[k], colors[k], size, (float(x), float(y), float(w), float(h)),
                          np.zeros(config.visual_dim))
        obj.feature = synth_features(obj, config, rng=rng)
        objects.append(obj)
    scene = Scene(scene_id, objects, np.zeros(config.visual_dim), config.backgrounds[bg])
    scene.global_feature = synth_features(scene, config, rng=rng)
    return scene


def _question_tokens(qtype: str, noun: str) -> list[str]:
    if qtype == "color":
        return ["what", "color", "is", "the", noun]
    if qtype == "other":
        return ["what", "size", "is", "the", noun]
    if qtype == "number":
        return ["how", "many", plural(noun), "are", "there"]
    return ["is", "there", "a", noun]


def generate_question(rng, scene: Scene, config: SceneConfig, qa_id: str = "qa-0",
                      max_tries: int = 100) -> QASample:
    """Instantiate one template against ``scene``; the answer holds by construction."""
    if not scene.objects:
        raise ValueError(f"scene {scene.id} has no objects")
    names = [q for q, _ in config.qtype_weights]
    weights = np.array([w for _, w in config.qtype_weights], dtype=DTYPE)
    weights /= weights.sum()
    counts = Counter(scene.labels())
    unique = sorted(n for n, c in counts.items() if c == 1)
    present = sorted(counts)
    absent = [n for n in config.nouns if n not in counts]

    for _ in range(max_tries):
        qtype = names[int(rng.choice(len(names), p=weights))]
        if qtype in ("color", "other"):
            if not unique:
                continue
            noun = unique[int(rng.integers(len(unique)))]
            obj = next(o for o in scene.objects if o.label == noun)
            answer = obj.color if qtype == "color" else obj.size
        elif qtype == "number":
            noun = present[int(rng.integers(len(present)))]
            answer = str(min(counts[noun], MAX_COUNT))
        else:
            if rng.random() < config.yes_prob:
                noun = present[int(rng.integers(len(present)))]
                answer = "yes"
            else:
                if not absent or not config.negative_existence:
                    continue
                noun = absent[int(rng.integers(len(absent)))]
                answer = "no"
        sample = QASample(qa_id, scene.id, _question_tokens(qtype, noun), answer, qtype)
        if config.with_choices:
            sample.choices = make_choices(rng, answer, answer_universe(config))
        return sample
    raise NoTemplateError(f"no template could be instantiated for scene {scene.id}")


def make_choices(rng, answer: str, universe: Sequence[str], n: int = N_CHOICES) -> list[str]:
    """``n - 1`` distinct distractors plus the answer at a random slot."""
    pool = [a for a in universe if a != answer]
    if len(pool) < n - 1:
        raise ValueError(f"need {n - 1} distractors, only {len(pool)} available")
    picked = [pool[i] for i in rng.choice(len(pool), n - 1, replace=False)]
    picked.insert(int(rng.integers(n)), answer)
    return picked


def generate_dataset(seed, config: SceneConfig, n: int, prefix: str = "train"):
    """``n`` scenes with one question each, a pure function of (seed, config)."""
    config.validate()
    rng = np.random.default_rng(seed)
    scenes, samples = [], []
    for i in range(n):
        for _ in range(100):
            scene = generate_scene(rng, config, f"{prefix}-s{i:05d}")
            try:
                sample = generate_question(rng, scene, config, f"{prefix}-q{i:05d}")
                break
            except NoTemplateError:
                continue
        else:
            raise NoTemplateError(f"templates {config.qtype_weights} never fit a generated scene")
        scenes.append(scene)
        samples.append(sample)
    return Dataset(scenes, samples, config.visual_dim)


def generate_splits(seed: int, config: SceneConfig, sizes: dict) -> dict:
    """Independent per-split streams derived from one seed."""
    out = {}
    for k, (name, n) in enumerate(sizes.items()):
        out[name] = generate_dataset(np.random.SeedSequence([seed, k]), config, n, name)
    return out


def answer_from_scene(tokens: Sequence[str], scene: Scene) -> str:
    """Rule-based answer derived from the question text and the scene alone."""
    tokens = list(tokens)
    labels = scene.labels()
    singular = {plural(lab): lab for lab in labels}
    if tokens[:2] == ["what", "color"] or tokens[:2] == ["what", "size"]:
        attr = tokens[1]
        hits = [o for o in scene.objects if o.label == tokens[-1]]
        if len(hits) != 1:
            raise ValueError(f"question {tokens} does not name exactly one object")
        return getattr(hits[0], attr)
    if tokens[:2] == ["how", "many"]:
        noun = singular.get(tokens[2], tokens[2])
        return str(min(sum(lab == noun for lab in labels), MAX_COUNT))
    if tokens[:2] == ["is", "there"]:
        return "yes" if tokens[-1] in labels else "no"
    raise ValueError(f"unrecognised question {tokens}")


def has_conflicting_distractor(sample: QASample, scene: Scene) -> bool:
    """True when some other object carries a different color from the target."""
    if sample.qtype != "color":
        return False
    return any(o.color != sample.answer for o in scene.objects if o.label != sample.tokens[-1])


# --- matcher vectors --------------------------------------------------------


def world_word_vectors(config: SceneConfig) -> WordVectors:
    """Frozen unit vectors for the world's words.

    Base words are mutually orthogonal. A plural or synonym is tilted off its
    base word by a private direction, so it has cosine 0.95 with the base,
    about 0.90 with other variants of the same base, and 0 with everything else.
    """
    base = list(dict.fromkeys(TEMPLATE_WORDS + tuple(config.nouns) + tuple(config.colors)
                              + tuple(config.sizes)))
    derived = [(plural(n), n) for n in config.nouns]
    derived += [(w, b) for w, b in config.synonyms if b in base]
    derived = [(w, b) for w, b in derived if w not in base]
    dim = len(base) + len(derived)
    rng = np.random.default_rng(config.matcher_seed)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    frame = q.T
    tokens = base + [w for w, _ in derived]
    matrix = np.zeros((len(tokens) + 1, dim), dtype=DTYPE)
    pos = {w: i for i, w in enumerate(base)}
    for i in range(len(base)):
        matrix[i + 1] = frame[i]
    s = np.sqrt(1.0 - SYNONYM_COSINE ** 2)
    for j, (w, b) in enumerate(derived):
        v = SYNONYM_COSINE * frame[pos[b]] + s * frame[len(base) + j]
        matrix[len(base) + j + 1] = v / np.linalg.norm(v)
    return WordVectors(Vocabulary(tokens), EmbeddingTable(matrix, trainable=False, name="matcher"))


def world_label_embeddings(config: SceneConfig, words: WordVectors | None = None) -> LabelEmbeddings:
    words = words or world_word_vectors(config)
    return LabelEmbeddings.from_word_vectors(words, config.nouns)


# --- dataset files ----------------------------------------------------------


@dataclass
class Dataset:
    scenes: list
    samples: list
    visual_dim: int
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __iter__(self) -> Iterator:
        return iter((self.scenes, self.samples))

    def __len__(self):
        return len(self.samples)

    def scene(self, scene_id: str) -> Scene:
        if self._by_id is None or len(self._by_id) != len(self.scenes):
            self._by_id = {s.id: s for s in self.scenes}
        return self._by_id[scene_id]

    def pairs(self) -> list[tuple]:
        return [(q, self.scene(q.scene_id)) for q in self.samples]


def write_dataset(path, scenes: Sequence[Scene], samples: Sequence[QASample],
                  visual_dim: int | None = None):
    if visual_dim is None:
        if not scenes:
            raise ValueError("visual_dim is required for a dataset without scenes")
        visual_dim = scenes[0].visual_dim
    scene_ids = [s.id for s in scenes]
    if len(set(scene_ids)) != len(scene_ids):
        raise DatasetError("duplicate scene ids")
    qa_ids = [q.id for q in samples]
    if len(set(qa_ids)) != len(qa_ids):
        raise DatasetError("duplicate qa ids")
    known = set(scene_ids)
    for q in samples:
        if q.scene_id not in known:
            raise DatasetError(f"qa {q.id} references unknown scene {q.scene_id}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump({"kind": "meta", "version": FORMAT_VERSION, "visual_dim": visual_dim}, f)
        f.write("\n")
        for s in scenes:
            json.dump(s.to_json(), f)
            f.write("\n")
        for q in samples:
            json.dump(q.to_json(), f)
            f.write("\n")


def _parse_scene(rec: dict, visual_dim: int, lineno: int) -> Scene:
    def vec(values, what):
        arr = np.array(values, dtype=DTYPE)
        if arr.shape != (visual_dim,):
            raise DatasetError(f"{what} has shape {arr.shape}, expected ({visual_dim},)", lineno)
        return arr

    objects = []
    for o in rec["objects"]:
        bbox = tuple(float(v) for v in o["bbox"])
        if len(bbox) != 4:
            raise DatasetError("bbox must have 4 entries", lineno)
        objects.append(SceneObject(o["label"], o["color"], o["size"], bbox,
                                   vec(o["feature"], "object feature")))
    return Scene(rec["id"], objects, vec(rec["global_feature"], "global_feature"),
                 rec.get("background"))


def read_dataset(path) -> Dataset:
    scenes, samples = [], []
    scene_ids = set()
    visual_dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DatasetError(f"malformed record ({e})", lineno) from None
            try:
                if lineno == 1 or visual_dim is None:
                    if kind != "meta":
                        raise DatasetError("first record must be meta", lineno)
                    if rec.get("version") != FORMAT_VERSION:
                        raise DatasetError(
                            f"unsupported version {rec.get('version')}, expected {FORMAT_VERSION}",
                            lineno)
                    visual_dim = int(rec["visual_dim"])
                elif kind == "scene":
                    if rec["id"] in scene_ids:
                        raise DatasetError(f"duplicate scene id {rec['id']}", lineno)
                    scenes.append(_parse_scene(rec, visual_dim, lineno))
                    scene_ids.add(rec["id"])
                elif kind == "qa":
                    if rec["scene_id"] not in scene_ids:
                        raise DatasetError(
                            f"qa {rec['id']} references unknown scene {rec['scene_id']}", lineno)
                    if rec["qtype"] not in QTYPES:
                        raise DatasetError(f"unknown qtype {rec['qtype']!r}", lineno)
                    choices = rec.get("choices")
                    if choices is not None and (len(choices) != N_CHOICES
                                                or choices.count(rec["answer"]) != 1):
                        raise DatasetError(
                            f"choices must hold {N_CHOICES} entries with the answer once", lineno)
                    samples.append(QASample(rec["id"], rec["scene_id"], list(rec["tokens"]),
                                            rec["answer"], rec["qtype"], choices))
                else:
                    raise DatasetError(f"unknown record kind {kind!r}", lineno)
            except DatasetError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError(f"malformed {kind} record ({e!r})", lineno) from None
    if visual_dim is None:
        raise DatasetError("missing meta record", 1)
    return Dataset(scenes, samples, visual_dim)


def iter_tokens(datasets: Iterable[Dataset]) -> Iterator[list]:
    for d in datasets:
        for q in d.samples:
            yield q.tokens
