"""Computing-application manifests: parsing, serialization and validation.

A computing application bundles a runtime image, resource requirements and
one of three execution models (virtual batch farm, staged pipeline, or a
single-node interactive session). Manifests are JSON documents with a
closed schema: unknown keys are rejected so user typos fail fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cluster import Inventory, NodeClass, ResourceVector, capacity
from .errors import SchemaError


@dataclass(frozen=True)
class BatchFarmModel:
    executors: int
    whole_node: bool
    node_class: NodeClass
    executor_share: ResourceVector  # ignored when whole_node

    @property
    def kind(self) -> str:
        return "batch-farm"


@dataclass(frozen=True)
class StageSpec:
    name: str
    image: str
    max_parallelism: int
    work_hs06_s: float
    output_mib: float
    per_task_share: ResourceVector

    @property
    def sequential(self) -> bool:
        return self.max_parallelism == 1


@dataclass(frozen=True)
class PipelineModel:
    stages: tuple[StageSpec, ...]

    @property
    def kind(self) -> str:
        return "pipeline"


@dataclass(frozen=True)
class SessionModel:
    share: ResourceVector
    node_class: NodeClass

    @property
    def kind(self) -> str:
        return "session"


ExecutionModel = BatchFarmModel | PipelineModel | SessionModel


@dataclass(frozen=True)
class ComputingApplication:
    app_id: str
    tenant: str
    image: str
    model: ExecutionModel


@dataclass
class ValidationReport:
    issues: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(sev == "error" for sev, _ in self.issues)

    def error(self, msg: str) -> None:
        self.issues.append(("error", msg))

    def warning(self, msg: str) -> None:
        self.issues.append(("warning", msg))


_TOP_KEYS = {"name", "tenant", "image", "model"}
_FARM_KEYS = {"type", "executors", "whole_node", "node_class", "executor_share"}
_PIPELINE_KEYS = {"type", "stages"}
_SESSION_KEYS = {"type", "share", "node_class"}
_STAGE_KEYS = {"name", "image", "max_parallelism", "work_hs06_s", "output_mib", "per_task_share"}
_SHARE_KEYS = {"millicores", "memory_mib", "gpus"}


def _check_keys(obj: dict, required: set[str], where: str, optional: set[str] = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    missing = sorted(required - obj.keys())
    extra = sorted(obj.keys() - required - optional)
    problems = []
    if missing:
        problems.append(f"missing keys: {', '.join(missing)}")
    if extra:
        problems.append(f"unknown keys: {', '.join(extra)}")
    if problems:
        raise SchemaError(f"{where}: " + "; ".join(problems))


def _string(obj: dict, key: str, where: str) -> str:
    value = obj[key]
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{where}: {key} must be a non-empty string")
    return value


def _int(obj: dict, key: str, where: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: {key} must be an integer")
    return value


def _number(obj: dict, key: str, where: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: {key} must be a number")
    return float(value)


def _node_class(obj: dict, where: str) -> NodeClass:
    value = _string(obj, "node_class", where)
    try:
        return NodeClass(value)
    except ValueError:
        raise SchemaError(f"{where}: node_class must be one of light, fat, gpu") from None


def _share(obj, where: str) -> ResourceVector:
    _check_keys(obj, _SHARE_KEYS, where)
    fields = {k: _int(obj, k, where) for k in ("millicores", "memory_mib", "gpus")}
    if any(v < 0 for v in fields.values()):
        raise ValueError(f"{where}: resource quantities must be non-negative")
    return ResourceVector(**fields)


def parse_manifest(text: str) -> ComputingApplication:
    """Parse a manifest document into an application, rejecting unknown keys."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, "manifest")
    name = _string(doc, "name", "manifest")
    tenant = _string(doc, "tenant", "manifest")
    image = _string(doc, "image", "manifest")
    model_doc = doc["model"]
    if not isinstance(model_doc, dict) or "type" not in model_doc:
        raise SchemaError("model: expected an object with a type key")
    model_type = model_doc["type"]
    if model_type == "batch-farm":
        model = _parse_farm(model_doc)
    elif model_type == "pipeline":
        model = _parse_pipeline(model_doc)
    elif model_type == "session":
        model = _parse_session(model_doc)
    else:
        raise SchemaError(f"model: unknown type {model_type!r}")
    return ComputingApplication(app_id=name, tenant=tenant, image=image, model=model)


def _parse_farm(doc: dict) -> BatchFarmModel:
    whole = doc.get("whole_node")
    required = _FARM_KEYS if whole is not True else _FARM_KEYS - {"executor_share"}
    _check_keys(doc, required, "batch-farm model", optional={"executor_share"})
    if not isinstance(whole, bool):
        raise SchemaError("batch-farm model: whole_node must be a boolean")
    executors = _int(doc, "executors", "batch-farm model")
    if executors < 1:
        raise ValueError("batch-farm model: executors must be >= 1")
    node_class = _node_class(doc, "batch-farm model")
    share = _share(doc["executor_share"], "executor_share") if "executor_share" in doc else ResourceVector()
    return BatchFarmModel(executors=executors, whole_node=whole, node_class=node_class, executor_share=share)


def _parse_pipeline(doc: dict) -> PipelineModel:
    _check_keys(doc, _PIPELINE_KEYS, "pipeline model")
    stages_doc = doc["stages"]
    if not isinstance(stages_doc, list) or not stages_doc:
        raise SchemaError("pipeline model: stages must be a non-empty list")
    stages = []
    for i, stage_doc in enumerate(stages_doc):
        where = f"stage[{i}]"
        _check_keys(stage_doc, _STAGE_KEYS, where)
        parallelism = _int(stage_doc, "max_parallelism", where)
        if parallelism < 1:
            raise ValueError(f"{where}: max_parallelism must be >= 1")
        work = _number(stage_doc, "work_hs06_s", where)
        output = _number(stage_doc, "output_mib", where)
        if work < 0 or output < 0:
            raise ValueError(f"{where}: work and output must be non-negative")
        stages.append(
            StageSpec(
                name=_string(stage_doc, "name", where),
                image=_string(stage_doc, "image", where),
                max_parallelism=parallelism,
                work_hs06_s=work,
                output_mib=output,
                per_task_share=_share(stage_doc["per_task_share"], f"{where}.per_task_share"),
            )
        )
    return PipelineModel(stages=tuple(stages))


def _parse_session(doc: dict) -> SessionModel:
    _check_keys(doc, _SESSION_KEYS, "session model")
    return SessionModel(share=_share(doc["share"], "share"), node_class=_node_class(doc, "session model"))


def serialize_manifest(app: ComputingApplication) -> str:
    """Inverse of parse_manifest; parse(serialize(app)) == app."""
    model = app.model
    if isinstance(model, BatchFarmModel):
        model_doc = {
            "type": "batch-farm",
            "executors": model.executors,
            "whole_node": model.whole_node,
            "node_class": model.node_class.value,
            "executor_share": model.executor_share.as_dict(),
        }
    elif isinstance(model, PipelineModel):
        model_doc = {
            "type": "pipeline",
            "stages": [
                {
                    "name": s.name,
                    "image": s.image,
                    "max_parallelism": s.max_parallelism,
                    "work_hs06_s": s.work_hs06_s,
                    "output_mib": s.output_mib,
                    "per_task_share": s.per_task_share.as_dict(),
                }
                for s in model.stages
            ],
        }
    else:
        model_doc = {
            "type": "session",
            "share": model.share.as_dict(),
            "node_class": model.node_class.value,
        }
    doc = {"name": app.app_id, "tenant": app.tenant, "image": app.image, "model": model_doc}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def validate(app: ComputingApplication, inv: Inventory) -> ValidationReport:
    """Check an application against an inventory; problems are reported, not thrown."""
    report = ValidationReport()
    model = app.model
    if isinstance(model, BatchFarmModel):
        class_nodes = inv.nodes_of(model.node_class)
        if not class_nodes:
            report.error(f"no nodes of class {model.node_class.value}")
            return report
        if model.executors > len(class_nodes):
            report.warning(
                f"requested {model.executors} executors but only "
                f"{len(class_nodes)} {model.node_class.value} nodes exist"
            )
        if not model.whole_node:
            _check_share(report, model.executor_share, class_nodes, f"executor share on {model.node_class.value}")
    elif isinstance(model, SessionModel):
        class_nodes = inv.nodes_of(model.node_class)
        if not class_nodes:
            report.error(f"no nodes of class {model.node_class.value}")
            return report
        _check_share(report, model.share, class_nodes, f"session share on {model.node_class.value}")
    else:
        for stage in model.stages:
            _check_share(report, stage.per_task_share, inv.nodes, f"stage {stage.name!r} task share")
    return report


def _check_share(report: ValidationReport, share: ResourceVector, nodes, label: str) -> None:
    if share.gpus > 0 and all(n.gpus == 0 for n in nodes):
        report.error(f"{label}: GPUs are not supported on any candidate node")
        return
    if not any(share <= capacity(n) for n in nodes):
        report.error(f"{label}: {share.as_dict()} exceeds the capacity of every candidate node")
