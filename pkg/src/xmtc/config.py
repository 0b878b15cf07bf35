"""Flat sectioned key=value configuration for the pipeline CLI.

One file drives every subcommand; numeric fields are validated against the
ranges of the module that owns them before any work starts, so a bad value
fails fast with the offending field named.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .validation import check_in_range, check_positive_int


@dataclass
class PathsConfig:
    train: str = ""
    test: str = ""
    corpus_train: str = ""
    corpus_test: str = ""
    workdir: str = "work"


@dataclass
class CorpusConfig:
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class LabelGraphConfig:
    rho: float = 0.4
    tau: float = 0.2
    filter_order: int = 3
    n_clusters: int = 0          # 0 selects max(2, L // 60)
    kmeans_batch_size: int = 256
    kmeans_iters: int = 50
    n_restarts: int = 5
    sample_size: int = 0         # 0 disables neighbor sampling (exact filter)
    filter_batch_size: int = 512
    embedding_dim: int = 256
    seed: int = 0


@dataclass
class KeyGraphConfig:
    window: int = 4
    damping: float = 0.85
    iters: int = 50
    keep_ratio: float = 0.3
    embedding_dim: int = 256
    seed: int = 0


@dataclass
class MatcherConfig:
    n_layers: int = 2
    hidden_dim: int = 64
    epsilon: float = 0.0
    learn_epsilon: bool = False
    weighted_neighbors: bool = False
    learning_rate: float = 0.01
    momentum: float = 0.9
    warmup: float = 0.1
    max_epochs: int = 30
    batch_size: int = 32
    val_fraction: float = 0.1
    bilateral: bool = True
    top_b: int = 5
    seed: int = 0


@dataclass
class RankerConfig:
    regularization: float = 1.0
    max_epochs: int = 500
    grad_tol: float = 1e-5
    mixture: bool = True


@dataclass
class MetricsConfig:
    propensity_a: float = 0.55
    propensity_b: float = 1.5
    ks: tuple[int, ...] = (1, 3, 5)


@dataclass
class SynthConfig:
    num_labels: int = 300
    n_clusters_true: int = 6
    n_instances: int = 3000
    power_exponent: float = 1.1
    noise_rate: float = 0.05
    seed: int = 42
    test_fraction: float = 0.2
    extra_labels_mean: float = 2.0
    cross_cluster_label_rate: float = 0.15
    cluster_confusion_share: float = 0.4
    cluster_feature_dims: int = 10
    label_feature_dims: int = 2


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    labelgraph: LabelGraphConfig = field(default_factory=LabelGraphConfig)
    keygraph: KeyGraphConfig = field(default_factory=KeyGraphConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    ranker: RankerConfig = field(default_factory=RankerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> "PipelineConfig":
        check_in_range("corpus.val_fraction", self.corpus.val_fraction, 0.0, 1.0, False, False)
        lg = self.labelgraph
        check_in_range("labelgraph.rho", lg.rho, 0.0, 1.0, low_inclusive=False)
        check_in_range("labelgraph.tau", lg.tau, 0.0, 1.0, False, False)
        if lg.filter_order < 0:
            raise ConfigError("labelgraph.filter_order", "must be >= 0")
        check_positive_int("labelgraph.kmeans_batch_size", lg.kmeans_batch_size)
        check_positive_int("labelgraph.kmeans_iters", lg.kmeans_iters)
        check_positive_int("labelgraph.n_restarts", lg.n_restarts)
        check_positive_int("labelgraph.embedding_dim", lg.embedding_dim)
        if lg.n_clusters < 0:
            raise ConfigError("labelgraph.n_clusters", "must be >= 0 (0 = automatic)")
        if lg.sample_size < 0:
            raise ConfigError("labelgraph.sample_size", "must be >= 0 (0 = exact)")
        kg = self.keygraph
        check_positive_int("keygraph.window", kg.window, minimum=2)
        check_in_range("keygraph.damping", kg.damping, 0.0, 1.0, False, False)
        check_positive_int("keygraph.iters", kg.iters)
        check_in_range("keygraph.keep_ratio", kg.keep_ratio, 0.0, 1.0, low_inclusive=False)
        check_positive_int("keygraph.embedding_dim", kg.embedding_dim)
        m = self.matcher
        if m.n_layers < 0:
            raise ConfigError("matcher.n_layers", "must be >= 0")
        check_positive_int("matcher.hidden_dim", m.hidden_dim)
        check_in_range("matcher.learning_rate", m.learning_rate, 0.0, None, False)
        check_in_range("matcher.momentum", m.momentum, 0.0, 1.0, True, False)
        check_in_range("matcher.warmup", m.warmup, 0.0, 1.0)
        check_positive_int("matcher.max_epochs", m.max_epochs)
        check_positive_int("matcher.batch_size", m.batch_size)
        check_in_range("matcher.val_fraction", m.val_fraction, 0.0, 1.0, False, False)
        check_positive_int("matcher.top_b", m.top_b)
        r = self.ranker
        check_in_range("ranker.regularization", r.regularization, 0.0, None, False)
        check_positive_int("ranker.max_epochs", r.max_epochs)
        check_in_range("ranker.grad_tol", r.grad_tol, 0.0, None, False)
        mt = self.metrics
        check_in_range("metrics.propensity_a", mt.propensity_a, 0.0, None, False)
        check_in_range("metrics.propensity_b", mt.propensity_b, 0.0, None)
        if not mt.ks or any(k < 1 for k in mt.ks):
            raise ConfigError("metrics.ks", "must be a list of positive integers")
        s = self.synth
        check_positive_int("synth.num_labels", s.num_labels)
        check_positive_int("synth.n_clusters_true", s.n_clusters_true)
        check_positive_int("synth.n_instances", s.n_instances)
        check_in_range("synth.noise_rate", s.noise_rate, 0.0, 1.0)
        check_in_range("synth.test_fraction", s.test_fraction, 0.0, 1.0, False, False)
        return self


def _coerce(section: str, key: str, raw: str, current):
    try:
        if isinstance(current, bool):
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}")


def parse_config(path) -> PipelineConfig:
    """Parse and validate a sectioned key=value file."""
    config = PipelineConfig()
    sections = {f.name: getattr(config, f.name) for f in fields(config)}
    current_name: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current_name = line[1:-1].strip()
                if current_name not in sections:
                    raise ConfigError(current_name, "unknown config section")
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}", "expected key = value")
            if current_name is None:
                raise ConfigError(key.strip(), "key outside any [section]")
            target = sections[current_name]
            key = key.strip()
            if not hasattr(target, key):
                raise ConfigError(f"{current_name}.{key}", "unknown config key")
            setattr(
                target,
                key,
                _coerce(current_name, key, value.strip(), getattr(target, key)),
            )
    return config.validate()


def write_config(config: PipelineConfig, path) -> None:
    """Serialize a config (defaults included) back to the key=value format."""
    with open(path, "w", encoding="utf-8") as fh:
        for section_field in fields(config):
            section = getattr(config, section_field.name)
            fh.write(f"[{section_field.name}]\n")
            for f in fields(section):
                value = getattr(section, f.name)
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                fh.write(f"{f.name} = {value}\n")
            fh.write("\n")
