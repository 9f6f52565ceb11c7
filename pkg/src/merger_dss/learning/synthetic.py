"""Calibrated synthetic generator for the merger-intervention network.

The proprietary case data behind the original model is not available, so the
bundled ground truth is designed: CPTs over the published dependency
structure, solved so the exact marginals hit the published headline figures
(intervention 0.0189, post-share < 20% 0.7438, entry barriers absent 0.9793,
vertical effects absent 0.9268, supra-national geography 0.1538, and 0.8785
mass on the two lowest concentration-variation classes).

Conditional rows are convex mixtures  row = (1-λ)·base + λ·extreme  where the
extremes encode the directional effects (entry barriers push market share and
concentration up, buyer power pushes concentration down, ...) and the base is
solved in closed form against the exact parent joint so the target marginal
is met identically. The intervention node uses a logistic score whose
intercept is bisected to the published 0.0189.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import DatasetError
from ..factors import Factor, Variable, factor_marginalize, factor_multiply
from ..network import CHANCE, NetworkDoc, NodeSpec, TableSpec, node_cpt
from .dataset import CaseDataset
from .structure import ConstraintSet

YEARS_STATES = ("1991-1996", "1997-2000", "2001-2003")
ATECO_STATES = tuple(f"S{i:02d}" for i in range(1, 18))
GEO_STATES = ("sub-national", "national", "supra-national")
YESNO = ("No", "Yes")
HHI_STATES = ("0", "(0,100)", "[100,500)", "[500,1000)", ">=1000")
SHARE_STATES = ("<20%", "[20%,40%]", ">40%")
AA_STATES = ("0", "1")

AA_CALIBRATION_TARGETS = {
    ("AAIntervention", "1"): 0.0189,
    ("PostMarketShare", "<20%"): 0.7438,
    ("EntryBarriers", "No"): 0.9793,
    ("VerticalEffects", "No"): 0.9268,
    ("GeoSize", "supra-national"): 0.1538,
}
HHI_LOW_TWO_TARGET = 0.8785

_YEARS_PRIOR = (0.40, 0.34, 0.26)
_GEO_PRIOR = (0.5462, 0.30, 0.1538)
_BUYER_PRIOR = (0.742, 0.258)
_ENTRY_PRIOR = (0.9793, 0.0207)
_VERTICAL_PRIOR = (0.9268, 0.0732)

_SHARE_TARGET = np.array([0.7438, 0.1785, 0.0777])
_HHI_TARGET = np.array([0.6200, 0.2585, 0.0820, 0.0250, 0.0145])

_AA_BETA_ENTRY = 4.6
_AA_BETA_VERTICAL = 2.3
_AA_BETA_SHARE = (0.0, 1.1, 2.4)
_AA_BETA_HHI = (0.0, 0.8, 1.9, 2.7, 3.4)
_AA_BETA_GEO = (0.0, 0.45, 0.95)


def _ateco_rows() -> np.ndarray:
    rows = np.empty((3, 17))
    for t in range(3):
        w = 1.0 + ((7 * np.arange(17) + 3 * t) % 11) / 5.0
        rows[t] = w / w.sum()
    return rows


def _mixture_rows(
    parent_joint: np.ndarray,
    lambdas: np.ndarray,
    extremes: np.ndarray,
    target: np.ndarray,
) -> np.ndarray:
    """Solve  Σ_c p_c [(1-λ_c) base + λ_c e_c] = target  for base, then emit rows."""
    shrink = float((parent_joint * (1.0 - lambdas)).sum())
    pushed = (parent_joint * lambdas) @ extremes
    base = (target - pushed) / shrink
    if np.any(base < 0):
        raise DatasetError(
            "calibration infeasible: effect extremes push past the target marginal"
        )
    rows = (1.0 - lambdas)[:, None] * base[None, :] + lambdas[:, None] * extremes
    return rows


def _combine_effects(effects: list[tuple[np.ndarray, np.ndarray]], n_rows: int, k: int):
    """Per-row total λ and blended extreme from per-parent (λ, extreme) grids."""
    lam_total = np.zeros(n_rows)
    keep = np.ones(n_rows)
    weighted = np.zeros((n_rows, k))
    weight_sum = np.zeros(n_rows)
    for lam, extreme in effects:
        keep *= 1.0 - lam
        weighted += lam[:, None] * extreme
        weight_sum += lam
    lam_total = 1.0 - keep
    blend = np.divide(
        weighted,
        weight_sum[:, None],
        out=np.tile(np.full(k, 1.0 / k), (n_rows, 1)),
        where=weight_sum[:, None] > 0,
    )
    return lam_total, blend


def _grid(shape: tuple[int, ...], axis: int, per_state: np.ndarray) -> np.ndarray:
    """Broadcast a per-state vector of one parent across the row grid."""
    view = [1] * len(shape)
    view[axis] = shape[axis]
    return np.broadcast_to(per_state.reshape(view), shape).reshape(-1)


def _share_cpt(vars_: dict[str, Variable], ateco_marginal: np.ndarray) -> np.ndarray:
    # parents: EntryBarriers, GeoSize, ATECO
    shape = (2, 3, 17)
    n_rows = 2 * 3 * 17
    eb_lam = _grid(shape, 0, np.array([0.0, 0.85]))
    geo_lam = _grid(shape, 1, np.array([0.0, 0.22, 0.40]))
    ate_lam = _grid(shape, 2, 0.08 + 0.12 * ((np.arange(17) % 5) / 4.0))

    eb_ext = np.tile(np.array([0.05, 0.25, 0.70]), (n_rows, 1))
    geo_patterns = np.array([[1 / 3, 1 / 3, 1 / 3], [0.55, 0.30, 0.15], [0.40, 0.34, 0.26]])
    geo_ext = geo_patterns[
        np.broadcast_to(np.arange(3).reshape(1, 3, 1), shape).reshape(-1)
    ]
    ate_patterns = np.array(
        [
            [0.90, 0.08, 0.02],
            [0.75, 0.20, 0.05],
            [0.60, 0.30, 0.10],
            [0.85, 0.10, 0.05],
            [0.70, 0.20, 0.10],
        ]
    )
    ate_ext = ate_patterns[
        np.broadcast_to((np.arange(17) % 5).reshape(1, 1, 17), shape).reshape(-1)
    ]

    lam, blend = _combine_effects(
        [(eb_lam, eb_ext), (geo_lam, geo_ext), (ate_lam, ate_ext)], n_rows, 3
    )
    parent_joint = (
        np.array(_ENTRY_PRIOR)[:, None, None]
        * np.array(_GEO_PRIOR)[None, :, None]
        * ateco_marginal[None, None, :]
    ).reshape(-1)
    return _mixture_rows(parent_joint, lam, blend, _SHARE_TARGET)


def _hhi_cpt(parent_joint: np.ndarray) -> np.ndarray:
    # parents: ATECO, PostMarketShare, Years, GeoSize, EntryBarriers,
    #          BuyerPower, VerticalEffects  (published conditioning order)
    shape = (17, 3, 3, 3, 2, 2, 2)
    n_rows = int(np.prod(shape))
    ate_lam = _grid(shape, 0, 0.04 + 0.08 * ((np.arange(17) % 4) / 3.0))
    share_lam = _grid(shape, 1, np.array([0.0, 0.20, 0.40]))
    years_lam = _grid(shape, 2, np.array([0.0, 0.05, 0.10]))
    geo_lam = _grid(shape, 3, np.array([0.0, 0.10, 0.15]))
    eb_lam = _grid(shape, 4, np.array([0.0, 0.50]))
    bp_lam = _grid(shape, 5, np.array([0.0, 0.30]))
    ve_lam = _grid(shape, 6, np.array([0.0, 0.35]))

    def tiled(vec):
        return np.tile(np.asarray(vec, dtype=float), (n_rows, 1))

    ate_patterns = np.array(
        [
            [0.72, 0.20, 0.05, 0.020, 0.010],
            [0.56, 0.30, 0.10, 0.025, 0.015],
            [0.63, 0.25, 0.08, 0.025, 0.015],
            [0.50, 0.32, 0.13, 0.033, 0.017],
        ]
    )
    ate_ext = ate_patterns[
        np.broadcast_to((np.arange(17) % 4).reshape(17, 1, 1, 1, 1, 1, 1), shape).reshape(-1)
    ]
    share_patterns = np.array(
        [[0.62, 0.26, 0.08, 0.025, 0.015], [0.38, 0.31, 0.20, 0.08, 0.03], [0.24, 0.28, 0.27, 0.13, 0.08]]
    )
    share_ext = share_patterns[
        np.broadcast_to(np.arange(3).reshape(1, 3, 1, 1, 1, 1, 1), shape).reshape(-1)
    ]
    effects = [
        (ate_lam, ate_ext),
        (share_lam, share_ext),
        (years_lam, tiled([0.57, 0.30, 0.10, 0.020, 0.010])),
        (geo_lam, tiled([0.47, 0.30, 0.16, 0.045, 0.025])),
        (eb_lam, tiled([0.10, 0.15, 0.30, 0.20, 0.25])),
        (bp_lam, tiled([0.80, 0.15, 0.035, 0.010, 0.005])),
        (ve_lam, tiled([0.17, 0.24, 0.33, 0.18, 0.08])),
    ]
    lam, blend = _combine_effects(effects, n_rows, 5)
    return _mixture_rows(parent_joint, lam, blend, _HHI_TARGET)


def _aa_rows(parent_joint: np.ndarray, target: float) -> np.ndarray:
    # parents: HHIVariation, VerticalEffects, PostMarketShare, GeoSize, EntryBarriers
    shape = (5, 2, 3, 3, 2)
    score = (
        _grid(shape, 0, np.array(_AA_BETA_HHI))
        + _grid(shape, 1, np.array([0.0, _AA_BETA_VERTICAL]))
        + _grid(shape, 2, np.array(_AA_BETA_SHARE))
        + _grid(shape, 3, np.array(_AA_BETA_GEO))
        + _grid(shape, 4, np.array([0.0, _AA_BETA_ENTRY]))
    )

    def marginal(beta0: float) -> float:
        p1 = 1.0 / (1.0 + np.exp(-(score + beta0)))
        return float(parent_joint @ p1)

    lo, hi = -25.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if marginal(mid) < target:
            lo = mid
        else:
            hi = mid
    beta0 = 0.5 * (lo + hi)
    p1 = 1.0 / (1.0 + np.exp(-(score + beta0)))
    return np.stack([1.0 - p1, p1], axis=1)


@lru_cache(maxsize=1)
def aa_ground_truth() -> NetworkDoc:
    """The bundled, exactly calibrated intervention network."""
    years = Variable("Years", YEARS_STATES)
    ateco = Variable("ATECO", ATECO_STATES)
    geo = Variable("GeoSize", GEO_STATES)
    buyer = Variable("BuyerPower", YESNO)
    entry = Variable("EntryBarriers", YESNO)
    vertical = Variable("VerticalEffects", YESNO)
    share = Variable("PostMarketShare", SHARE_STATES)
    hhi = Variable("HHIVariation", HHI_STATES)

    vars_ = {v.name: v for v in (years, ateco, geo, buyer, entry, vertical, share, hhi)}
    ateco_rows = _ateco_rows()
    ateco_marginal = np.asarray(_YEARS_PRIOR) @ ateco_rows

    share_rows = _share_cpt(vars_, ateco_marginal)

    # Exact joint over the concentration node's seven parents.
    f_years = Factor((years,), _YEARS_PRIOR)
    f_ateco = Factor((years, ateco), ateco_rows)
    f_geo = Factor((geo,), _GEO_PRIOR)
    f_buyer = Factor((buyer,), _BUYER_PRIOR)
    f_entry = Factor((entry,), _ENTRY_PRIOR)
    f_vertical = Factor((vertical,), _VERTICAL_PRIOR)
    f_share = Factor((entry, geo, ateco, share), share_rows.reshape(2, 3, 17, 3))
    joint7 = Factor.unit()
    for f in (f_years, f_ateco, f_geo, f_buyer, f_entry, f_vertical, f_share):
        joint7 = factor_multiply(joint7, f)
    hhi_parents = (ateco, share, years, geo, entry, buyer, vertical)
    parent7 = joint7.reorder(hhi_parents).values.reshape(-1)
    hhi_rows = _hhi_cpt(parent7)

    f_hhi = Factor(
        hhi_parents + (hhi,), hhi_rows.reshape(tuple(v.cardinality for v in hhi_parents) + (5,))
    )
    joint8 = factor_multiply(joint7, f_hhi)
    aa_parents = (hhi, vertical, share, geo, entry)
    parent5 = factor_marginalize(
        joint8, [v for v in joint8.scope if v.name not in {p.name for p in aa_parents}]
    )
    aa_rows = _aa_rows(parent5.reorder(aa_parents).values.reshape(-1), 0.0189)

    def node(name, states, parents, rows):
        return NodeSpec(
            name,
            CHANCE,
            states=states,
            parents=parents,
            table=TableSpec("explicit", values=tuple(np.asarray(rows, dtype=float).reshape(-1))),
        )

    return NetworkDoc(
        "aa-intervention",
        (
            node("Years", YEARS_STATES, (), _YEARS_PRIOR),
            node("ATECO", ATECO_STATES, ("Years",), ateco_rows),
            node("GeoSize", GEO_STATES, (), _GEO_PRIOR),
            node("BuyerPower", YESNO, (), _BUYER_PRIOR),
            node("EntryBarriers", YESNO, (), _ENTRY_PRIOR),
            node("VerticalEffects", YESNO, (), _VERTICAL_PRIOR),
            node(
                "PostMarketShare",
                SHARE_STATES,
                ("EntryBarriers", "GeoSize", "ATECO"),
                share_rows,
            ),
            node(
                "HHIVariation",
                HHI_STATES,
                ("ATECO", "PostMarketShare", "Years", "GeoSize", "EntryBarriers", "BuyerPower", "VerticalEffects"),
                hhi_rows,
            ),
            node(
                "AAIntervention",
                AA_STATES,
                ("HHIVariation", "VerticalEffects", "PostMarketShare", "GeoSize", "EntryBarriers"),
                aa_rows,
            ),
        ),
    )


def aa_constraints() -> ConstraintSet:
    """The published logical constraints: the reference period precedes the
    market code, which precedes the market descriptors; intervention is last
    (arrows into it only). Within-box associations are free."""
    return ConstraintSet(
        tiers=(
            ("Years",),
            ("ATECO",),
            (
                "GeoSize",
                "BuyerPower",
                "EntryBarriers",
                "VerticalEffects",
                "PostMarketShare",
                "HHIVariation",
            ),
            ("AAIntervention",),
        ),
    )


def synth_aa_data(n: int, seed: int = 0) -> CaseDataset:
    """Ancestral samples from the bundled ground truth; deterministic per seed."""
    if n < 1:
        raise DatasetError("n must be >= 1")
    doc = aa_ground_truth()
    rng = np.random.default_rng(seed)
    order = [n_.name for n_ in doc.nodes]  # declaration order is topological
    samples: dict[str, np.ndarray] = {}
    for name in order:
        spec = doc.node(name)
        cpt = node_cpt(doc, spec)
        k = cpt.child.cardinality
        rows = cpt.factor.values.reshape(-1, k)
        if spec.parents:
            cards = tuple(len(doc.node(p).states or ()) for p in spec.parents)
            codes = np.ravel_multi_index(
                tuple(samples[p] for p in spec.parents), cards
            )
        else:
            codes = np.zeros(n, dtype=np.int64)
        cum = np.cumsum(rows, axis=1)
        draws = rng.random(n)
        samples[name] = (draws[:, None] > cum[codes]).sum(axis=1).astype(np.int16)

    schema_order = [
        "Years",
        "ATECO",
        "GeoSize",
        "BuyerPower",
        "EntryBarriers",
        "HHIVariation",
        "PostMarketShare",
        "VerticalEffects",
        "AAIntervention",
    ]
    schema = tuple(doc.variable(name) for name in schema_order)
    rows = np.stack([samples[name] for name in schema_order], axis=1)
    return CaseDataset(schema, rows)
