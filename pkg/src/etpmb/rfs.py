"""Random-finite-set state types: Bernoulli components, Poisson intensity,
the Poisson multi-Bernoulli (PMB) state, and the hypothesis structures of a
multi-Bernoulli mixture (MBM).

Also implements the Bernoulli-mixture reduction used everywhere in merging
(existence is the weighted mean; the density is the moment-matched single
GGIW of the existence-weighted density mixture), recycling of weak Bernoulli
components into the Poisson intensity, pruning, and a line-oriented text
serialization of PMB states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ggiw import (
    GammaParams,
    GaussianKinematics,
    GGIWDensity,
    InverseWishartExtent,
    ggiw_mixture_merge,
)

__all__ = [
    "BernoulliComponent",
    "PoissonComponent",
    "PoissonIntensity",
    "PMBState",
    "WeightedBernoulli",
    "LocalHypothesis",
    "GlobalHypothesis",
    "bernoulli_mixture_reduce",
    "recycle",
    "prune_state",
    "serialize_state",
    "parse_state",
]


@dataclass(frozen=True)
class BernoulliComponent:
    """Bernoulli RFS: target exists with probability ``existence`` and then
    follows ``density``.  ``track_id`` is bookkeeping only."""

    existence: float
    density: GGIWDensity
    track_id: int = -1


@dataclass(frozen=True)
class PoissonComponent:
    weight: float
    density: GGIWDensity


@dataclass(frozen=True)
class PoissonIntensity:
    """Unnormalized GGIW mixture intensity of the undetected-target PPP."""

    components: tuple[PoissonComponent, ...] = ()

    @property
    def mass(self) -> float:
        return float(sum(c.weight for c in self.components))


@dataclass(frozen=True)
class PMBState:
    """Poisson multi-Bernoulli state: undetected PPP plus one Bernoulli per track."""

    ppp: PoissonIntensity
    bernoullis: tuple[BernoulliComponent, ...] = ()

    @property
    def expected_cardinality(self) -> float:
        return float(sum(b.existence for b in self.bernoullis)) + self.ppp.mass


@dataclass(frozen=True)
class WeightedBernoulli:
    weight: float
    bernoulli: BernoulliComponent


@dataclass(frozen=True)
class LocalHypothesis:
    """One single-target data-association hypothesis.

    ``parent_track`` indexes the predicted track the hypothesis continues
    (or -1 for a hypothesis starting a new track); ``cell`` is the sorted
    tuple of measurement indices associated with it (None for a missed
    detection).  ``log_lik`` is the association log-likelihood factor the
    hypothesis contributes.
    """

    parent_track: int
    cell: tuple[int, ...] | None
    bernoulli: BernoulliComponent
    log_lik: float = 0.0

    @property
    def origin(self) -> tuple[int, tuple[int, ...] | None]:
        return (self.parent_track, self.cell)


@dataclass(frozen=True)
class GlobalHypothesis:
    """One multi-Bernoulli of an MBM: a log weight, one selection per
    predicted track, and the new-track Bernoullis its association spawns."""

    log_weight: float
    selections: tuple[LocalHypothesis, ...] = ()
    new_tracks: tuple[LocalHypothesis, ...] = ()


def bernoulli_mixture_reduce(mixture, tau_g: float | None = None) -> BernoulliComponent:
    """Collapse a weighted Bernoulli mixture to a single Bernoulli.

    The merged existence is the weighted mean of the member existences; the
    merged density moment-matches the existence-weighted density mixture.
    Members may carry zero existence (e.g. hypotheses in which the track
    does not appear); they dilute the merged existence but contribute no
    density mass.  With every contribution at zero existence the highest-
    weight member's density is kept as a placeholder.

    ``tau_g`` optionally gates which densities enter the moment matching
    (KL from the heaviest density-component must stay below the gate);
    existence accounting is never gated.
    """
    items = [(float(wb.weight), wb.bernoulli) for wb in mixture]
    if not items:
        raise ValueError("cannot reduce an empty Bernoulli mixture")
    total_w = sum(w for w, _ in items)
    if total_w <= 0.0:
        raise ValueError("Bernoulli mixture weights must have positive sum")

    existence = sum(w * b.existence for w, b in items) / total_w
    track_id = max(items, key=lambda it: it[0])[1].track_id

    density_mix = [(w * b.existence, b.density) for w, b in items if w * b.existence > 0.0]
    if not density_mix:
        density = max(items, key=lambda it: it[0])[1].density
    else:
        density = ggiw_mixture_merge(density_mix, gate_kl=tau_g)
    return BernoulliComponent(existence, density, track_id)


def recycle(state: PMBState, tau_r: float) -> PMBState:
    """Move Bernoulli components with existence below ``tau_r`` into the PPP.

    A recycled Bernoulli re-enters the Poisson intensity as one component of
    weight equal to its existence, which preserves the expected number of
    targets exactly.
    """
    kept = []
    recycled = list(state.ppp.components)
    for bern in state.bernoullis:
        if bern.existence < tau_r:
            if bern.existence > 0.0:
                recycled.append(PoissonComponent(bern.existence, bern.density))
        else:
            kept.append(bern)
    return PMBState(PoissonIntensity(tuple(recycled)), tuple(kept))


def prune_state(state: PMBState, bern_floor: float = 1e-3, ppp_floor: float = 1e-4,
                max_ppp: int = 200) -> PMBState:
    """Drop Bernoullis below ``bern_floor`` and PPP components below
    ``ppp_floor``, then cap the PPP at the ``max_ppp`` heaviest components."""
    bernoullis = tuple(b for b in state.bernoullis if b.existence >= bern_floor)
    comps = [c for c in state.ppp.components if c.weight >= ppp_floor]
    if len(comps) > max_ppp:
        order = np.argsort([-c.weight for c in comps], kind="stable")[:max_ppp]
        comps = [comps[i] for i in sorted(order)]
    return PMBState(PoissonIntensity(tuple(comps)), bernoullis)


def _component_fields(weight: float, density: GGIWDensity) -> list[str]:
    kin = density.kinematics
    ext = density.extent
    vals = [weight, density.meas_rate.shape, density.meas_rate.rate]
    vals.extend(kin.mean.tolist())
    vals.extend(kin.cov.reshape(-1).tolist())
    vals.append(ext.dof)
    vals.extend(ext.scale.reshape(-1).tolist())
    return [repr(float(v)) for v in vals]


def serialize_state(state: PMBState) -> str:
    """Line-oriented text form of a PMB state.

    First line: ``dims <state_dim> <extent_dim>``.  Then one line per
    component: role tag (``bern`` or ``ppp``), existence/weight, Gamma shape
    and rate, kinematic mean entries, covariance entries (row-major), extent
    dof, extent scale entries (row-major).  Floats use shortest round-trip
    formatting, so parse(serialize(s)) is bit-identical.
    """
    ref = None
    if state.bernoullis:
        ref = state.bernoullis[0].density
    elif state.ppp.components:
        ref = state.ppp.components[0].density
    if ref is None:
        return "dims 0 0\n"
    lines = [f"dims {ref.state_dim} {ref.extent_dim}"]
    for bern in state.bernoullis:
        lines.append("bern " + " ".join(_component_fields(bern.existence, bern.density)))
    for comp in state.ppp.components:
        lines.append("ppp " + " ".join(_component_fields(comp.weight, comp.density)))
    return "\n".join(lines) + "\n"


def parse_state(text: str) -> PMBState:
    """Inverse of :func:`serialize_state` (track ids are not round-tripped)."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dims"):
        raise ValueError("serialized state must begin with a dims header")
    _, nx_s, d_s = lines[0].split()
    nx, d = int(nx_s), int(d_s)
    bernoullis = []
    comps = []
    expected = 1 + 2 + nx + nx * nx + 1 + d * d
    for ln in lines[1:]:
        tag, *rest = ln.split()
        vals = [float(tok) for tok in rest]
        if len(vals) != expected:
            raise ValueError(f"component line has {len(vals)} fields, expected {expected}")
        weight = vals[0]
        gamma = GammaParams(vals[1], vals[2])
        pos = 3
        mean = np.array(vals[pos:pos + nx])
        pos += nx
        cov = np.array(vals[pos:pos + nx * nx]).reshape(nx, nx)
        pos += nx * nx
        dof = vals[pos]
        pos += 1
        scale = np.array(vals[pos:pos + d * d]).reshape(d, d)
        density = GGIWDensity(gamma, GaussianKinematics(mean, cov),
                              InverseWishartExtent(dof, scale))
        if tag == "bern":
            bernoullis.append(BernoulliComponent(weight, density))
        elif tag == "ppp":
            comps.append(PoissonComponent(weight, density))
        else:
            raise ValueError(f"unknown component tag {tag!r}")
    return PMBState(PoissonIntensity(tuple(comps)), tuple(bernoullis))
