import numpy as np
import pytest

from design_late.errors import AllBlocksDropped, DegenerateArm, ZeroComplianceEffect
from design_late.models.dataset import Dataset
from design_late.models.results import BlockResult, VarianceMethod, WarningLabel
from design_late.models.run_config import BlockPolicy, BlockWeightScheme

from ..blocked import analyze_blocked, estimate_blocks, fixed_effects_iv, pool
from ..core import analyze, estimate_late, variance_iv

FOUR_Y = [4, 1, 2, 1]
FOUR_D = [1, 0, 0, 0]
FOUR_T = [1, 1, 0, 0]


def blocked_copies(*labels) -> Dataset:
    """The four-unit trial repeated once per label, as distinct blocks."""
    k = len(labels)
    return Dataset.create(
        y=FOUR_Y * k,
        d=FOUR_D * k,
        t=FOUR_T * k,
        block_id=np.repeat(labels, 4),
    )


@pytest.fixture
def random_blocked() -> Dataset:
    rng = np.random.default_rng(11)
    sizes = [12, 9, 15]
    labels = np.repeat(["a", "b", "c"], sizes)
    t = np.concatenate([rng.permutation(np.arange(s) < s // 2) for s in sizes])
    x = rng.normal(size=(len(t), 2))
    d = np.where(t, rng.random(len(t)) < 0.8, rng.random(len(t)) < 0.2)
    y = rng.normal(size=len(t)) + 1.5 * d + x @ [1.0, -0.5]
    return Dataset.create(y=y, d=d, t=t, x=x, block_id=labels)


def test_estimate_blocks_identical_blocks():
    estimates = estimate_blocks(blocked_copies("a", "b"))

    assert [block.label for block in estimates.blocks] == ["a", "b"]
    for block in estimates.blocks:
        assert block.tau_late_b == pytest.approx(2.0)
        assert block.var_qbar_b == pytest.approx(2.0)
        assert block.tau_late_b * block.pi_itt_b == pytest.approx(block.tau_itt_b)
    assert (estimates.n, estimates.h) == (8, 2)


def test_single_block_reduces_to_simple_design():
    rng = np.random.default_rng(5)
    t = np.arange(20) % 2
    x = rng.normal(size=(20, 2))
    d = np.where(t == 1, rng.random(20) < 0.7, rng.random(20) < 0.1)
    y = rng.normal(size=20) + d + x[:, 0]
    data = Dataset.create(y=y, d=d, t=t, x=x, block_id=["only"] * 20)

    simple = analyze(data, methods=[VarianceMethod.DB, VarianceMethod.DB_BOUNDED])
    (block,) = estimate_blocks(data).blocks

    assert block.tau_late_b == pytest.approx(simple.tau_late, abs=1e-10)
    assert block.var_qbar_b == pytest.approx(
        simple.variance[VarianceMethod.DB], abs=1e-10
    )
    assert block.variances[VarianceMethod.DB_BOUNDED] == pytest.approx(
        simple.variance[VarianceMethod.DB_BOUNDED], abs=1e-10
    )


def test_pool_identical_blocks():
    estimates = estimate_blocks(blocked_copies("a", "b"))

    result = pool(estimates.blocks, BlockWeightScheme.COMPLIER_SIZE, 8, 0, 2)

    assert result.tau_late_pooled == pytest.approx(2.0)
    assert result.var_pooled == pytest.approx(1.0)
    assert result.df == 4
    assert [block.weight_w_b for block in result.per_block] == [
        pytest.approx(2.0),
        pytest.approx(2.0),
    ]


@pytest.mark.parametrize("scheme", list(BlockWeightScheme))
def test_pool_schemes_agree_on_identical_blocks(scheme):
    estimates = estimate_blocks(blocked_copies("a", "b", "c"))

    result = pool(estimates.blocks, scheme, 12, 0, 3)

    assert result.tau_late_pooled == pytest.approx(2.0)
    assert result.var_pooled == pytest.approx(2 / 3)


def test_pool_single_block():
    estimates = estimate_blocks(blocked_copies("a"))

    result = pool(estimates.blocks, BlockWeightScheme.COMPLIER_SIZE, 4, 0, 1)

    assert result.tau_late_pooled == pytest.approx(2.0)
    assert result.var_pooled == pytest.approx(2.0)


def test_pool_complier_weights_reproduce_itt_ratio(random_blocked):
    result = analyze_blocked(random_blocked)

    assert result.tau_late_pooled == pytest.approx(
        result.tau_itt / result.pi_itt, rel=1e-12
    )


def test_pool_is_invariant_to_relabeling(random_blocked):
    relabeled = Dataset.create(
        y=random_blocked.y,
        d=random_blocked.d,
        t=random_blocked.t,
        x=random_blocked.x,
        block_id=np.array(["z", "y", "x"])[
            np.searchsorted(["a", "b", "c"], random_blocked.block_id)
        ],
    )

    original = analyze_blocked(random_blocked)
    renamed = analyze_blocked(relabeled)

    assert renamed.tau_late_pooled == pytest.approx(original.tau_late_pooled)
    assert renamed.var_pooled == pytest.approx(original.var_pooled)


def test_duplicating_blocks_halves_variance():
    single = analyze_blocked(blocked_copies("a"), reference="z")
    doubled = analyze_blocked(blocked_copies("a", "b"), reference="z")

    assert doubled.tau_late_pooled == pytest.approx(single.tau_late_pooled)
    assert doubled.var_pooled == pytest.approx(single.var_pooled / 2)


def test_pool_negative_weight():
    blocks = [
        BlockResult(
            label="a",
            n_b=10,
            arm_sizes=(5, 5),
            tau_itt_b=1.0,
            pi_itt_b=0.5,
            tau_late_b=2.0,
            var_qbar_b=1.0,
        ),
        BlockResult(
            label="b",
            n_b=10,
            arm_sizes=(5, 5),
            tau_itt_b=-0.2,
            pi_itt_b=-0.1,
            tau_late_b=2.0,
            var_qbar_b=5.0,
        ),
    ]

    result = pool(blocks, BlockWeightScheme.COMPLIER_SIZE, 20, 0, 2)

    assert result.warnings == [WarningLabel.NEGATIVE_WEIGHT]
    assert [block.weight_w_b for block in result.per_block] == [5.0, 0.0]
    assert result.var_pooled == pytest.approx(1.0)


def test_pool_without_blocks():
    with pytest.raises(AllBlocksDropped):
        pool([], BlockWeightScheme.UNIFORM, 10, 0, 0)


def single_arm_block_data() -> Dataset:
    return Dataset.create(
        y=FOUR_Y * 2 + [3, 5],
        d=FOUR_D * 2 + [1, 1],
        t=FOUR_T * 2 + [1, 1],
        block_id=["a"] * 4 + ["b"] * 4 + ["c"] * 2,
    )


def test_single_arm_block_error_policy():
    with pytest.raises(DegenerateArm, match="block 'c'"):
        estimate_blocks(single_arm_block_data())


def test_single_arm_block_drop_policy():
    result = analyze_blocked(single_arm_block_data(), policy=BlockPolicy.DROP)

    assert [block.label for block in result.per_block] == ["a", "b"]
    assert [block.label for block in result.dropped_blocks] == ["c"]
    assert result.n == 8
    assert result.h == 2
    assert WarningLabel.DROPPED_BLOCK in result.warnings
    assert result.tau_late_pooled == pytest.approx(2.0)


def zero_compliance_block_data() -> Dataset:
    return Dataset.create(
        y=FOUR_Y * 2 + [3, 1, 2, 2],
        d=FOUR_D * 2 + [0, 0, 0, 0],
        t=FOUR_T * 3,
        block_id=["a"] * 4 + ["b"] * 4 + ["c"] * 4,
    )


def test_zero_compliance_block_error_policy():
    with pytest.raises(ZeroComplianceEffect):
        estimate_blocks(zero_compliance_block_data())


def test_zero_compliance_block_drop_policy():
    estimates = estimate_blocks(
        zero_compliance_block_data(), policy=BlockPolicy.DROP
    )

    assert [block.label for block in estimates.blocks] == ["a", "b"]
    assert estimates.dropped[0].label == "c"
    assert "receipt effect" in estimates.dropped[0].reason
    assert (estimates.n, estimates.h) == (12, 3)


def test_all_blocks_dropped():
    data = Dataset.create(
        y=[1, 2, 3, 4], d=[1, 0, 1, 0], t=[1, 1, 0, 0], block_id=["a", "a", "b", "b"]
    )

    with pytest.raises(AllBlocksDropped):
        estimate_blocks(data, policy=BlockPolicy.DROP)


def test_blocks_share_covariate_coefficients(random_blocked):
    data = random_blocked
    cells = np.char.add(data.block_id, data.t.astype(int).astype(str))
    x_within, y_within = data.x.copy(), data.y.copy()
    for cell in np.unique(cells):
        mask = cells == cell
        x_within[mask] -= data.x[mask].mean(axis=0)
        y_within[mask] -= data.y[mask].mean()
    beta, *_ = np.linalg.lstsq(x_within, y_within, rcond=None)

    estimates = estimate_blocks(data)

    for block in estimates.blocks:
        mask = data.block_id == block.label
        treated = mask & (data.t == 1)
        control = mask & (data.t == 0)
        expected = (data.y[treated].mean() - data.y[control].mean()) - (
            data.x[treated].mean(axis=0) - data.x[control].mean(axis=0)
        ) @ beta
        assert block.tau_itt_b == pytest.approx(expected, abs=1e-10)
        assert block.arm_sizes == (int(treated.sum()), int(control.sum()))


def test_analyze_blocked(random_blocked):
    result = analyze_blocked(random_blocked)

    assert result.df == random_blocked.n - 2 - 2 * 3
    assert list(result.methods) == [VarianceMethod.DB, VarianceMethod.DB_BOUNDED]
    assert result.primary.variance == pytest.approx(result.var_pooled)
    assert result.methods[VarianceMethod.DB_BOUNDED].variance <= result.var_pooled
    assert result.first_stage_f > 0
    assert result.fixed_effects_iv is None


def test_fixed_effects_iv_single_block_matches_iv_variance():
    data = blocked_copies("a")
    estimate = estimate_late(data)

    result = fixed_effects_iv(data)

    assert result.tau_late == pytest.approx(2.0)
    assert result.df == 2
    assert result.methods[VarianceMethod.IV].variance == pytest.approx(
        variance_iv(estimate.fit_y, estimate.fit_d, estimate.tau_late, 0)
    )


def test_fixed_effects_iv_matches_two_stage_least_squares(random_blocked):
    dummies = np.column_stack(
        [random_blocked.block_id == label for label in ["a", "b", "c"]]
    ).astype(float)
    instruments = np.column_stack([dummies, random_blocked.t, random_blocked.x])
    first, *_ = np.linalg.lstsq(instruments, random_blocked.d, rcond=None)
    second, *_ = np.linalg.lstsq(
        np.column_stack([dummies, instruments @ first, random_blocked.x]),
        random_blocked.y,
        rcond=None,
    )

    result = analyze_blocked(random_blocked, with_fixed_effects_iv=True)

    comparison = result.fixed_effects_iv
    assert comparison.design == "fixed_effects_iv"
    assert comparison.tau_late == pytest.approx(second[3], rel=1e-9)
    assert comparison.df == random_blocked.n - 3 - 2 - 1
