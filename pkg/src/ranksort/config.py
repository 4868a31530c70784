"""INI-style experiment configs and CSV problem files."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RankingProblem
from .localisation import BalanceMode, WeightingMode
from .synth import LossChoice, SynthConfig


class ConfigError(ValueError):
    """Malformed config or problem file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class TrainSettings:
    loss: LossChoice = LossChoice("rs")
    learning_rate: float = 0.05
    delta: float | None = None
    weighting: WeightingMode = WeightingMode("score")
    balance: BalanceMode = BalanceMode("value")

    def kwargs(self) -> dict:
        return dict(
            weighting=self.weighting,
            balance=self.balance,
            learning_rate=self.learning_rate,
            delta=self.delta,
        )


@dataclass(frozen=True)
class SweepSettings:
    ratios: tuple[float, ...] = (10.0, 100.0, 1000.0)
    losses: tuple[str, ...] = ("rs", "cross_entropy")
    seeds: tuple[int, ...] = (0, 1, 2)
    deltas: tuple[float, ...] = (0.25, 0.4, 0.5, 0.6, 0.75, 1.0)


@dataclass(frozen=True)
class GradcheckSettings:
    problems: int = 1000
    max_n: int = 128
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)


SECTIONS = ("data", "train", "sweep", "gradcheck")


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[(.+)\]", line)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", path, lineno) from None
    except configparser.Error as exc:
        raise ConfigError(exc.message, path, getattr(exc, "lineno", None)) from None

    for name in parser.sections():
        if name not in SECTIONS:
            lineno = next(
                (k for k, raw in enumerate(text.splitlines(), start=1) if raw.strip() == f"[{name}]"),
                None,
            )
            raise ConfigError(f"unknown section [{name}]", path, lineno)

    def fail(section, key, msg):
        raise ConfigError(f"[{section}] {key}: {msg}", path, _line_of(text, section, key))

    def read(section, key, conv):
        try:
            return conv(parser.get(section, key))
        except (TypeError, ValueError) as exc:
            fail(section, key, str(exc))

    data_kw = {}
    if parser.has_section("data"):
        types = {f.name: f.type for f in dataclasses.fields(SynthConfig)}
        for key in parser.options("data"):
            if key not in types:
                fail("data", key, "unknown key")
            data_kw[key] = read("data", key, float if types[key] == "float" else int)
    try:
        data = SynthConfig(**data_kw)
    except ValueError as exc:
        raise ConfigError(f"[data] {exc}", path) from None

    train = TrainSettings()
    if parser.has_section("train"):
        sec = parser["train"]
        known = {"loss", "learning_rate", "delta", "weighting", "delta_loc", "balance",
                 "lambda", "focal_alpha", "focal_gamma", "sorting"}
        for key in sec:
            if key not in known:
                fail("train", key, "unknown key")
        def opt(key, conv, default):
            return read("train", key, conv) if key in sec else default

        try:
            loss = LossChoice(
                sec.get("loss", "rs"),
                alpha=opt("focal_alpha", float, 0.25),
                gamma=opt("focal_gamma", float, 2.0),
                sorting=sec.getboolean("sorting", True),
            )
        except ValueError as exc:
            fail("train", "loss", str(exc))
        try:
            weighting = WeightingMode(sec.get("weighting", "score"), opt("delta_loc", float, 1.0))
        except ValueError as exc:
            fail("train", "weighting", str(exc))
        try:
            balance = BalanceMode(sec.get("balance", "value"), opt("lambda", float, 1.0))
        except ValueError as exc:
            fail("train", "balance", str(exc))
        train = TrainSettings(
            loss=loss,
            learning_rate=read("train", "learning_rate", float) if "learning_rate" in sec else 0.05,
            delta=read("train", "delta", float) if "delta" in sec else None,
            weighting=weighting,
            balance=balance,
        )

    sweep = SweepSettings()
    if parser.has_section("sweep"):
        conv = {"ratios": float, "losses": str, "seeds": int, "deltas": float}
        kw = {}
        for key in parser.options("sweep"):
            if key not in conv:
                fail("sweep", key, "unknown key")
            kw[key] = tuple(read("sweep", key, lambda v, c=conv[key]: [c(x) for x in _split(v)]))
        sweep = SweepSettings(**kw)

    grad = GradcheckSettings()
    if parser.has_section("gradcheck"):
        kw = {}
        for key in parser.options("gradcheck"):
            if key not in {"problems", "max_n", "seed"}:
                fail("gradcheck", key, "unknown key")
            kw[key] = read("gradcheck", key, int)
        grad = GradcheckSettings(**kw)

    return ExperimentConfig(data, train, sweep, grad)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_config(text, str(p))


PROBLEM_COLUMNS = ("logit", "label")
BOX_COLUMNS = ("x1", "y1", "x2", "y2", "gx1", "gy1", "gx2", "gy2")


@dataclass(frozen=True, eq=False)
class ProblemFile:
    problem: RankingProblem
    pred_boxes: np.ndarray | None = None  # aligned with positives
    gt_boxes: np.ndarray | None = None


def parse_problem(text: str, path: str | None = None) -> ProblemFile:
    """Read ``logit,label[,x1,y1,x2,y2,gx1,gy1,gx2,gy2]`` records after a header line.

    Box columns are required for positives and ignored for negatives.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError("empty problem file", path, 1)
    header = tuple(c.strip() for c in rows[0])
    if header not in (PROBLEM_COLUMNS, PROBLEM_COLUMNS + BOX_COLUMNS):
        raise ConfigError(
            f"header must be {','.join(PROBLEM_COLUMNS)}[,{','.join(BOX_COLUMNS)}]", path, 1
        )
    with_boxes = len(header) > 2
    logits, labels, pred, gt = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        try:
            logit, label = float(cells[0]), float(cells[1])
        except (IndexError, ValueError):
            raise ConfigError("expected numeric logit and label", path, lineno) from None
        logits.append(logit)
        labels.append(label)
        if with_boxes and label > 0.0:
            try:
                vals = [float(c) for c in cells[2:10]]
            except ValueError:
                raise ConfigError("non-numeric box coordinate", path, lineno) from None
            if len(vals) != 8:
                raise ConfigError("positive rows need 8 box coordinates", path, lineno)
            pred.append(vals[:4])
            gt.append(vals[4:])
    try:
        problem = RankingProblem(logits, labels)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None
    if with_boxes:
        return ProblemFile(problem, np.array(pred).reshape(-1, 4), np.array(gt).reshape(-1, 4))
    return ProblemFile(problem)


def load_problem(path: str | Path) -> ProblemFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc.strerror}", str(p)) from None
    return parse_problem(text, str(p))
