"""Parameter sets and model builders for the worked examples."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .kinetics import KineticModel, PhiFunction, ThetaFunction, factor_theta_over_step
from .network import ReactionNetwork

EXAMPLE4_THETA = "ind(x>1)*(10+x+6*sin(pi*x/5))"


@dataclass(frozen=True)
class DimerParams:
    """Rate constants of the dimerisation model

    2 S1 -> S2 (k1), S2 -> 2 S1 (k2), 0 -> S2 (k3), S1 -> 0 (k4).
    """

    k1: float = 1.0
    k2: float = 100.0
    k3: float = 1500.0
    k4: float = 30.0

    def as_dict(self) -> dict:
        return asdict(self)

    def scaled(self, factor: float) -> "DimerParams":
        return DimerParams(*(factor * v for v in (self.k1, self.k2, self.k3, self.k4)))


@dataclass(frozen=True)
class Example4Params:
    """2 S1 -> 0 (k1), 0 -> 2 S1 (k2), S1 -> S2 (k3), S2 -> S1 (k4)."""

    k1: float = 1.0
    k2: float = 100.0
    k3: float = 10.0
    k4: float = 1.0
    C: float = 1.0

    def as_dict(self) -> dict:
        return asdict(self)


def two_pair_network(kappas=(1.0, 1.0, 1.0, 1.0)) -> ReactionNetwork:
    """2 S1 <-> S2, 4 S1 + 2 S2 <-> S3."""
    k = kappas
    return ReactionNetwork.from_strings(
        "S1 S2 S3",
        [("2 S1", "S2", k[0]), ("S2", "2 S1", k[1]), ("4 S1 + 2 S2", "S3", k[2]), ("S3", "4 S1 + 2 S2", k[3])],
    )


def full_dimer_network(p: DimerParams = DimerParams()) -> ReactionNetwork:
    return ReactionNetwork.from_strings(
        "S1 S2",
        [("2 S1", "S2", p.k1), ("S2", "2 S1", p.k2), ("0", "S2", p.k3), ("S1", "0", p.k4)],
    )


def full_dimer_model(p: DimerParams = DimerParams()) -> KineticModel:
    return KineticModel.mass_action(full_dimer_network(p))


def dimer_pair_network(forward: float, reverse: float) -> ReactionNetwork:
    return ReactionNetwork.from_strings("S1 S2", [("2 S1", "S2", forward), ("S2", "2 S1", reverse)])


def example4_network(p: Example4Params = Example4Params()) -> ReactionNetwork:
    return ReactionNetwork.from_strings(
        "S1 S2",
        [("2 S1", "0", p.k1), ("0", "2 S1", p.k2), ("S1", "S2", p.k3), ("S2", "S1", p.k4)],
    )


def example4_phi(p: Example4Params = Example4Params()) -> PhiFunction:
    theta = ThetaFunction.expression(EXAMPLE4_THETA, alpha=2)
    return factor_theta_over_step(theta, 2, p.C)


def example4_model(p: Example4Params = Example4Params(), bound: int = 4096) -> KineticModel:
    """S1 carries phi (tabulated on 0..bound) as a step-one rate factor, so
    that 2 S1 -> 0 fires at k1 phi(x1) phi(x1-1) = k1 theta(x1) and
    S1 -> S2 at k3 phi(x1)."""
    phi = example4_phi(p)
    return KineticModel(example4_network(p), (phi.as_theta(bound), ThetaFunction.falling(1)))
