"""Bridging networks to checkpoint files."""

from __future__ import annotations

from .fileio.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network import Network, NetworkSpec


def save_network_checkpoint(path, network: Network, config_echo: dict,
                            verification_loss: float,
                            include_optimizer: bool = False) -> None:
    arrays = network.store.state_arrays()
    optimizer = network.store.optimizer_arrays() if include_optimizer else None
    save_checkpoint(path, arrays, config_echo, verification_loss,
                    optimizer=optimizer, step_count=network.store.step_count)


def load_network_checkpoint(path):
    """Rebuild a network from a checkpoint: spec and seed come from the
    config echo, arrays (and optimizer state when present) are restored."""
    ck: Checkpoint = load_checkpoint(path)
    spec = NetworkSpec.from_dict(ck.config["network_spec"])
    network = Network(spec, seed=int(ck.config.get("network_seed", 0)))
    network.store.load_state(ck.arrays, ck.optimizer, ck.step_count)
    return network, ck
