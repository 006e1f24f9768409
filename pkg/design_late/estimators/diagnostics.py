import logging

import numpy as np

from design_late.models.dataset import Dataset
from design_late.models.results import Diagnostics
from design_late.models.run_config import ClusterWeightScheme, Design

from .blocked import block_labels
from .clustered import aggregate, cluster_first_stage_f
from .core import WEAK_INSTRUMENT_F, first_stage_f


def diagnose(
    data: Dataset,
    design: Design = Design.SIMPLE,
    weight_scheme: ClusterWeightScheme = ClusterWeightScheme.SIZE,
) -> Diagnostics:
    """Arm sizes, receipt rates and the first-stage F test of a dataset.

    For clustered designs the weak-instrument verdict uses the cluster-level
    F statistic, otherwise the unit-level one.
    """
    design = Design(design)
    treated = data.t == 1
    rates = (float(data.d[treated].mean()), float(data.d[~treated].mean()))
    f = first_stage_f(data)

    h = None
    if design in (Design.BLOCKED, Design.BLOCKED_CLUSTERED):
        h = len(np.unique(block_labels(data)))
    m = None
    cluster_f = None
    if design in (Design.CLUSTERED, Design.BLOCKED_CLUSTERED):
        cd = aggregate(data, weight_scheme)
        m = cd.m
        cluster_f = cluster_first_stage_f(cd)

    verdict_f = f if cluster_f is None else cluster_f
    weak = verdict_f < WEAK_INSTRUMENT_F
    if weak:
        logging.warning(
            f"first-stage F is {verdict_f:.3g}, below {WEAK_INSTRUMENT_F:g}: "
            "assignment is a weak instrument"
        )
    return Diagnostics(
        design=design.value,
        n=data.n,
        arm_sizes=(data.n1, data.n - data.n1),
        receipt_rates=rates,
        compliance_effect=rates[0] - rates[1],
        first_stage_f=f,
        weak_instrument=weak,
        threshold=WEAK_INSTRUMENT_F,
        h=h,
        m=m,
        cluster_first_stage_f=cluster_f,
    )
