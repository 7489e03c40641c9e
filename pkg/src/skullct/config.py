"""Pipeline configuration.

Flat `section.key = value` text files; every key also exists as a
command-line override flag of the same name. Unknown keys are rejected
and all seeds are explicit, so a config snapshot fully determines a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .preprocess import PreprocessConfig


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_fractions(raw: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated fractions")
    return tuple(float(p) for p in parts)


# key -> (parser, default, help)
CONFIG_KEYS: dict[str, tuple] = {
    "paths.input_dir": (str, "", "directory of DICOM files to ingest"),
    "paths.labels": (str, "", "CSV mapping relative file path -> class name"),
    "paths.work_dir": (str, "work", "artifact directory"),
    "ingest.thickness_mm": (float, 1.0, "slice thickness to retain"),
    "ingest.allowlist": (str, "", "optional file pinning the series"),
    "preprocess.threshold_hu": (float, -500.0, "foreground mask threshold"),
    "preprocess.out_side": (int, 224, "preprocessed image side"),
    "preprocess.tilt_enabled": (_parse_bool, True, "apply tilt correction"),
    "preprocess.debug_dir": (str, "", "dump per-stage PGMs here"),
    "split.fractions": (_parse_fractions, (0.5, 0.2, 0.3),
                        "train,val,test slice fractions"),
    "split.seed": (int, 7, "patient shuffle seed"),
    "balance.enabled": (_parse_bool, True, "rebalance the training split"),
    "balance.seed": (int, 7, "oversampling seed"),
    "extractor.kind": (str, "toy", "toy | interchange"),
    "extractor.seed": (int, 7, "toy projection seed"),
    "extractor.dim": (int, 64, "toy feature dimensionality"),
    "extractor.sidecar": (str, "", "sidecar JSON for the interchange backend"),
    "classifier.kind": (str, "gbdt", "gbdt | forest | svc"),
    "classifier.rounds": (int, 500, "boosting rounds"),
    "classifier.learning_rate": (float, 0.1, "boosting shrinkage"),
    "classifier.max_depth": (int, 6, "boosted tree depth cap"),
    "classifier.lambda": (float, 1.0, "L2 leaf penalty"),
    "classifier.gamma": (float, 0.0, "split penalty"),
    "classifier.total_tree_budget": (_parse_bool, False,
                                     "read rounds as a total-tree budget"),
    "classifier.n_trees": (int, 200, "forest size"),
    "classifier.c": (float, 1.0, "SVC regularization C"),
    "classifier.epochs": (int, 1000, "SVC training epochs"),
    "classifier.seed": (int, 7, "classifier seed"),
    "metrics.log_loss_eps": (float, 1e-15, "log-loss clipping epsilon"),
    "run.name": (str, "run", "run directory name under the work dir"),
}

VALID_EXTRACTORS = ("toy", "interchange")
VALID_CLASSIFIERS = ("gbdt", "forest", "svc")


@dataclass
class PipelineConfig:
    values: dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def preprocess(self) -> PreprocessConfig:
        return PreprocessConfig(
            threshold_hu=self.values["preprocess.threshold_hu"],
            out_side=self.values["preprocess.out_side"],
            tilt_enabled=self.values["preprocess.tilt_enabled"],
        )

    def snapshot(self) -> dict[str, object]:
        out = {}
        for key in sorted(self.values):
            v = self.values[key]
            out[key] = list(v) if isinstance(v, tuple) else v
        return out


def _parse_assignment(line: str, where: str) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
    key, raw = line.split("=", 1)
    return key.strip(), raw.strip()


def load_config(path: str | None = None,
                overrides: list[str] | None = None) -> PipelineConfig:
    """Build a config from defaults, an optional file, then CLI overrides."""
    values = {key: default for key, (_, default, _) in CONFIG_KEYS.items()}

    def apply(key: str, raw: str, where: str):
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        parser = CONFIG_KEYS[key][0]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None

    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    key, raw = _parse_assignment(line, f"{path}:{lineno}")
                    apply(key, raw, f"{path}:{lineno}")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    for item in overrides or []:
        key, raw = _parse_assignment(item, "override")
        apply(key, raw, f"override {item!r}")

    cfg = PipelineConfig(values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    fr = cfg["split.fractions"]
    if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split.fractions must be positive and sum to 1: {fr}")
    if cfg["extractor.kind"] not in VALID_EXTRACTORS:
        raise ConfigError(f"extractor.kind must be one of {VALID_EXTRACTORS}")
    if cfg["classifier.kind"] not in VALID_CLASSIFIERS:
        raise ConfigError(f"classifier.kind must be one of {VALID_CLASSIFIERS}")
    if cfg["extractor.kind"] == "interchange" and not cfg["extractor.sidecar"]:
        raise ConfigError("extractor.sidecar is required for the "
                          "interchange backend")
    if cfg["preprocess.out_side"] <= 0 or cfg["preprocess.out_side"] % 4:
        raise ConfigError("preprocess.out_side must be a positive multiple of 4")
    for key in ("classifier.rounds", "classifier.n_trees", "classifier.epochs",
                "extractor.dim"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
