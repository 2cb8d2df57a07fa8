"""Harness configuration: topology, cost parameters, selector thresholds.

JSON file with the same canonical rules as plans; unknown keys are
rejected. The COMMFORGE_SEED environment variable overrides any seed."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .collectives import Selector
from .errors import ConfigError
from .timing import CostParams, LinkParams
from .world import SEED_ENV_VAR, SimWorld

_TOPOLOGY_KEYS = {"nodes", "gpus_per_node", "intra_kind"}
_COST_KEYS = {"alpha_intra", "beta_intra", "alpha_inter", "beta_inter",
              "tb_sync", "sem_op", "proxy_hop"}
_SELECTOR_KEYS = {"small", "large", "hier", "override", "override_variant"}
_TOP_KEYS = {"topology", "cost", "selector", "seed"}


@dataclass
class Config:
    nodes: int = 1
    gpus_per_node: int = 8
    intra_kind: str = "switch-attached"
    seed: int = 0
    cost: CostParams = field(default_factory=CostParams)
    selector: Selector = field(default_factory=Selector)

    def make_world(self, nodes: int | None = None,
                   gpus_per_node: int | None = None) -> SimWorld:
        return SimWorld(nodes or self.nodes, gpus_per_node or self.gpus_per_node,
                        self.intra_kind, self.seed)


def _reject_unknown(obj: dict, allowed: set, where: str):
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key {sorted(extra)[0]!r}")


def load_config(path: str | None = None) -> Config:
    """Defaults, overlaid with the file (if given), then the environment."""
    cfg = Config()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = json.loads(fh.read() or b"{}")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config top level must be an object")
        _reject_unknown(doc, _TOP_KEYS, "config")
        topo = doc.get("topology", {})
        _reject_unknown(topo, _TOPOLOGY_KEYS, "topology")
        cfg.nodes = topo.get("nodes", cfg.nodes)
        cfg.gpus_per_node = topo.get("gpus_per_node", cfg.gpus_per_node)
        cfg.intra_kind = topo.get("intra_kind", cfg.intra_kind)
        if cfg.intra_kind not in ("switch-attached", "peer-mesh"):
            raise ConfigError(f"topology.intra_kind: bad value {cfg.intra_kind!r}")
        cost = doc.get("cost", {})
        _reject_unknown(cost, _COST_KEYS, "cost")
        base = CostParams()
        cfg.cost = CostParams(
            intra=LinkParams(cost.get("alpha_intra", base.intra.alpha),
                             cost.get("beta_intra", base.intra.beta)),
            inter=LinkParams(cost.get("alpha_inter", base.inter.alpha),
                             cost.get("beta_inter", base.inter.beta)),
            tb_sync=cost.get("tb_sync", base.tb_sync),
            sem_op=cost.get("sem_op", base.sem_op),
            proxy_hop=cost.get("proxy_hop", base.proxy_hop))
        sel = doc.get("selector", {})
        _reject_unknown(sel, _SELECTOR_KEYS, "selector")
        thresholds = {k: sel[k] for k in ("small", "large", "hier") if k in sel}
        cfg.selector = Selector(thresholds=thresholds,
                                override=sel.get("override"),
                                override_variant=sel.get("override_variant", ""))
        if "seed" in doc:
            if not isinstance(doc["seed"], int):
                raise ConfigError("seed: must be an integer")
            cfg.seed = doc["seed"]
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        cfg.seed = int(env)
    return cfg
