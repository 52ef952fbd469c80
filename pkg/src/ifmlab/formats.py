"""JSON file formats for models, schedules, unitary families and reduction programs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .discrimination import ReductionProgram, ReductionStep, RoundPlan, UnitaryFamily
from .ifm import InteractionModel, ProtocolSchedule
from .serialize import dumps, matrix_from_json, matrix_to_json, vector_from_json, vector_to_json


def _read(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def family_to_json(fam: UnitaryFamily) -> dict:
    return {"d": fam.d, "labels": list(fam.labels), "matrices": [matrix_to_json(m) for m in fam.members]}


def family_from_json(data: dict) -> UnitaryFamily:
    mats = tuple(matrix_from_json(m) for m in data["matrices"])
    fam = UnitaryFamily(tuple(data["labels"]), mats)
    if "d" in data and int(data["d"]) != fam.d:
        raise ValueError(f"family declares d={data['d']} but matrices are {fam.d}x{fam.d}")
    return fam


def load_family(path) -> UnitaryFamily:
    return family_from_json(_read(path))


def model_to_json(model: InteractionModel) -> dict:
    return {"dim_I": model.dim_i, "dim_Bp": model.dim_bp, "U1": matrix_to_json(model.u1),
            "f": vector_to_json(model.f)}


def model_from_json(data) -> InteractionModel:
    if data in (None, "default"):
        return InteractionModel.absorbing()
    return InteractionModel(matrix_from_json(data["U1"]), vector_from_json(data["f"]),
                            int(data["dim_I"]), int(data["dim_Bp"]))


def load_model(source, base: Path | None = None) -> InteractionModel:
    """``"default"`` (absorbing qubit model) or a path to a model file."""
    if source in (None, "default"):
        return InteractionModel.absorbing()
    path = Path(source)
    if base is not None and not path.is_absolute():
        path = base / path
    return model_from_json(_read(path))


def schedule_to_json(schedule: ProtocolSchedule, model: InteractionModel | None = None) -> dict:
    out = {"T": schedule.T, "dim_W": schedule.dim_w, "dim_I": schedule.dim_i,
           "V": [matrix_to_json(v) for v in schedule.V], "initial": vector_to_json(schedule.initial)}
    if model is not None:
        out["model"] = model_to_json(model)
    return out


def schedule_from_json(data: dict) -> tuple[ProtocolSchedule, InteractionModel | None]:
    V = np.stack([matrix_from_json(v) for v in data["V"]])
    schedule = ProtocolSchedule(V, vector_from_json(data["initial"]),
                                dim_w=int(data.get("dim_W", 1)), dim_i=int(data.get("dim_I", 1)))
    if "T" in data and int(data["T"]) != schedule.T:
        raise ValueError(f"schedule declares T={data['T']} but lists {schedule.T} unitaries")
    model = model_from_json(data["model"]) if "model" in data else None
    return schedule, model


def load_schedule(path):
    return schedule_from_json(_read(path))


def program_to_json(plan: RoundPlan) -> dict:
    program: ReductionProgram = plan.program
    return {
        "d": program.d,
        "labels": list(plan.candidates),
        "theta0": plan.theta0,
        "steps": [
            {"theta": s.theta, "partner": s.partner, "Lambda": s.Lam.tolist(), "basis": matrix_to_json(s.basis)}
            for s in program.steps
        ],
        "calls_per_use": program.calls_per_use,
        "reduced": [matrix_to_json(m) for m in plan.reduced.members],
        "theta_star": plan.theta_star,
        "selected_eigenvectors": list(plan.test.selected),
        "phases": plan.test.phases.tolist(),
        "basis": matrix_to_json(plan.test.basis),
    }


def program_from_json(data: dict) -> ReductionProgram:
    steps = tuple(
        ReductionStep(s["theta"], s["partner"], np.array(s["Lambda"], dtype=float), matrix_from_json(s["basis"]))
        for s in data["steps"]
    )
    return ReductionProgram(int(data["d"]), steps)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
