"""Federation settings: nodes, aggregation policy and transport."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class NodeSpec(BaseModel):
    """One client node and the single task it owns."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    node_id: int = Field(ge=0, le=0xFFFF)
    task: str
    sample_count: int = Field(0, ge=0)


class AggregationPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weighting: Literal["sample_count", "uniform"] = "sample_count"
    # False keeps batch-norm running statistics local to each client.
    aggregate_running_stats: bool = True


class FederationConfig(BaseModel):
    """Synchronous-round federation.

    ``nodes`` may be left empty in config files; the harness then derives one
    node per model task (node id = task position) with sample counts taken from
    the generated datasets.
    """

    model_config = ConfigDict(extra="forbid")

    rounds: int = Field(40, ge=1)
    local_epochs: int = Field(2, ge=1)
    nodes: list[NodeSpec] = Field(default_factory=list)
    policy: AggregationPolicy = Field(default_factory=AggregationPolicy)
    transport: Literal["inproc", "tcp"] = "inproc"
    listen: str = "127.0.0.1:0"
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_nodes(self) -> "FederationConfig":
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"node ids must be unique, got {ids}")
        tasks = [n.task for n in self.nodes]
        owners = {t for t in tasks if tasks.count(t) > 1}
        if owners:
            raise ValueError(f"tasks with more than one owner are not supported: {sorted(owners)}")
        return self

    @property
    def total_local_epochs(self) -> int:
        return self.rounds * self.local_epochs
