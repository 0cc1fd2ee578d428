"""Feature screening by single-variable correlation and backward elimination."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from weatherwatt.errors import DegenerateTarget, EliminationAborted, SingularMatrix
from weatherwatt.ingest import FEATURE, TARGET, TimeSeriesFrame
from weatherwatt.ols import DesignMatrix, FittedModel, fit

log = logging.getLogger(__name__)


def pearson_r(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xv.size != yv.size:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise ValueError("need at least two observations")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateTarget("correlation with a constant vector is undefined")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


@dataclass(frozen=True)
class ScreeningEntry:
    feature_name: str
    pearson_r: float | None
    single_var_cod: float | None

    @property
    def degenerate(self) -> bool:
        return self.pearson_r is None


@dataclass(frozen=True)
class ScreeningReport:
    target_name: str
    entries: tuple[ScreeningEntry, ...]

    def cod(self, feature: str) -> float | None:
        for e in self.entries:
            if e.feature_name == feature:
                return e.single_var_cod
        raise KeyError(feature)

    @property
    def best(self) -> ScreeningEntry | None:
        return self.entries[0] if self.entries and not self.entries[0].degenerate else None

    def to_dict(self) -> dict:
        return {
            "target_name": self.target_name,
            "entries": [
                {
                    "feature_name": e.feature_name,
                    "pearson_r": e.pearson_r,
                    "single_var_cod": e.single_var_cod,
                    "degenerate": e.degenerate,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScreeningReport:
        return cls(
            d["target_name"],
            tuple(
                ScreeningEntry(e["feature_name"], e["pearson_r"], e["single_var_cod"])
                for e in d["entries"]
            ),
        )


def screen_single(frame: TimeSeriesFrame, target: str) -> ScreeningReport:
    """Rank every feature column by the CoD of a one-feature fit to ``target``.

    The univariate CoD is the squared Pearson correlation. Entries are sorted
    by descending CoD with ties broken by name; features that are constant
    (or a constant target) are kept as degenerate entries at the end.
    """
    if frame.roles.get(target) != TARGET:
        raise ValueError(f"{target!r} is not a target column")
    features = [c for c in frame.columns if frame.roles[c] == FEATURE]
    if not features:
        raise ValueError("frame has no feature columns")
    y = frame.column(target)
    entries = []
    for name in features:
        try:
            r = pearson_r(frame.column(name), y)
        except DegenerateTarget:
            log.warning("screening %s against %s: constant column", name, target)
            entries.append(ScreeningEntry(name, None, None))
            continue
        entries.append(ScreeningEntry(name, r, r * r))
    entries.sort(
        key=lambda e: (e.degenerate, -(e.single_var_cod or 0.0), e.feature_name)
    )
    return ScreeningReport(target, tuple(entries))


def _fmt(v: float | None, digits: int = 3) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def format_table(corner: str, col_labels: Sequence[str], rows: Sequence[tuple[str, Sequence[str]]]) -> str:
    """Aligned plain-text table: a header line, a rule, then one line per row."""
    widths = [max(len(corner), *(len(r[0]) for r in rows))] if rows else [len(corner)]
    for j, lab in enumerate(col_labels):
        widths.append(max(len(lab), *(len(r[1][j]) for r in rows)) if rows else len(lab))
    lines = [
        " | ".join([corner.ljust(widths[0])] + [lab.rjust(w) for lab, w in zip(col_labels, widths[1:])]),
    ]
    lines.append("-+-".join("-" * w for w in widths))
    for label, cells in rows:
        lines.append(
            " | ".join([label.ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells, widths[1:])])
        )
    return "\n".join(lines) + "\n"


def screening_table(reports: Sequence[ScreeningReport], features: Sequence[str] | None = None) -> str:
    """Targets as rows, features as columns, cells are single-feature CoD."""
    if features is None:
        seen: list[str] = []
        for rep in reports:
            for e in rep.entries:
                if e.feature_name not in seen:
                    seen.append(e.feature_name)
        features = sorted(seen)
    rows = []
    for rep in reports:
        cods = {e.feature_name: e.single_var_cod for e in rep.entries}
        rows.append((rep.target_name, [_fmt(cods.get(f)) for f in features]))
    return format_table("r-squared", list(features), rows)


@dataclass(frozen=True)
class EliminationRound:
    removed_feature: str
    p_value_at_removal: float
    surviving_features: tuple[str, ...]
    refit_r2: float

    def to_dict(self) -> dict:
        return {
            "removed_feature": self.removed_feature,
            "p_value_at_removal": self.p_value_at_removal,
            "surviving_features": list(self.surviving_features),
            "refit_r2": self.refit_r2,
        }


@dataclass(frozen=True)
class EliminationTrace:
    initial_features: tuple[str, ...]
    rounds: tuple[EliminationRound, ...]
    final_model: FittedModel | None
    sl: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def selected(self) -> tuple[str, ...]:
        if self.final_model is not None:
            return self.final_model.feature_names
        return self.rounds[-1].surviving_features if self.rounds else self.initial_features

    def to_dict(self) -> dict:
        return {
            "sl": self.sl,
            "initial_features": list(self.initial_features),
            "rounds": [r.to_dict() for r in self.rounds],
            "selected_features": list(self.selected),
            "final_model": self.final_model.to_dict() if self.final_model else None,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EliminationTrace:
        return cls(
            initial_features=tuple(d["initial_features"]),
            rounds=tuple(
                EliminationRound(
                    r["removed_feature"], float(r["p_value_at_removal"]),
                    tuple(r["surviving_features"]), float(r["refit_r2"]),
                )
                for r in d["rounds"]
            ),
            final_model=FittedModel.from_dict(d["final_model"]) if d.get("final_model") else None,
            sl=float(d["sl"]),
            warnings=tuple(d.get("warnings", ())),
        )

    def to_text(self) -> str:
        lines = [f"backward elimination at SL = {self.sl:g}",
                 f"start: {', '.join(self.initial_features) or '(intercept only)'}"]
        for i, r in enumerate(self.rounds, 1):
            lines.append(
                f"round {i}: removed {r.removed_feature} (p = {r.p_value_at_removal:.4g}), "
                f"refit R^2 = {r.refit_r2:.4f}"
            )
        lines.append(f"selected: {', '.join(self.selected) or '(intercept only)'}")
        if self.final_model is not None:
            for name, p in self.final_model.feature_p_values().items():
                lines.append(f"  {name}: theta = {self.final_model.coefficient(name):.6g}, p = {p:.4g}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


def backward_eliminate(design: DesignMatrix, y, sl: float) -> EliminationTrace:
    """Drop the least significant feature one at a time until all p < sl.

    The intercept never competes. Ties on the largest p-value remove the
    feature with the lower column index. A singular refit raises
    EliminationAborted carrying the rounds completed so far.
    """
    if not 0.0 < sl <= 1.0:
        raise ValueError(f"significance level must be in (0, 1], got {sl}")
    initial = tuple(design.feature_names)
    names = list(initial)
    rounds: list[EliminationRound] = []
    warnings: list[str] = []

    def refit() -> FittedModel:
        try:
            return fit(design.subset(names), y)
        except SingularMatrix as exc:
            partial = EliminationTrace(initial, tuple(rounds), None, sl, tuple(warnings))
            raise EliminationAborted(
                f"singular refit with features {names}: {exc}", partial
            ) from exc

    model = refit()
    while names:
        pvals = model.p_values[1:]
        worst = int(np.argmax(pvals))  # first index among ties
        p_max = pvals[worst]
        if p_max < sl:
            break
        removed = names.pop(worst)
        model = refit()
        rounds.append(EliminationRound(removed, p_max, tuple(names), model.r2_train))

    if not names and initial:
        msg = "every feature was eliminated; returning the intercept-only model"
        log.warning(msg)
        warnings.append(msg)
    return EliminationTrace(initial, tuple(rounds), model, sl, tuple(warnings))
