"""Tests for the modality ablation and the generalization protocol."""

import numpy as np
import pytest

from pmgan.core.errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    VisibleDataAccessError,
)
from pmgan.models.fusion import ClipStack
from pmgan.models.network import PmGanParams, SingleHeadParams
from pmgan.schemas.configs import ModelSpec, NoiseSpec
from pmgan.schemas.modes import SINGLE_HEAD_MODES, TABLE_ORDER, ModalityMode
from pmgan.schemas.reports import EvalReport
from pmgan.services.evalharness import (
    AblationTable,
    WithheldSample,
    ablation_table,
    class_probabilities,
    evaluate,
    generalization_eval,
    orderings,
    wilson_interval,
    write_confusion_csv,
)
from pmgan.services.synthdata import PairedSample
from pmgan.services.trainer import ModelSuite, train_suite


def zero_suite(spec):
    heads = {mode.value: SingleHeadParams.zeros(spec) for mode in SINGLE_HEAD_MODES}
    return ModelSuite(PmGanParams.zeros(spec), heads)


@pytest.fixture
def sign_suite():
    """Two-class model whose fused and infrared predictions follow the sign of f_inf."""
    spec = ModelSpec(height=1, width=1, channels=1, class_count=2, clips=2)
    arrays = PmGanParams.zeros(spec).arrays()
    arrays["fuse.filter"] = np.array([[[[0.0], [1.0]]]])
    arrays["p.weights"] = np.array([[-1.0, 1.0]])
    heads = {mode.value: SingleHeadParams.zeros(spec) for mode in SINGLE_HEAD_MODES}
    heads[ModalityMode.INFRARED_ONLY.value] = SingleHeadParams(np.array([[-1.0, 1.0]]), np.zeros(2))
    return ModelSuite(PmGanParams.from_arrays(spec, arrays), heads)


@pytest.fixture
def sign_samples():
    """Samples whose infrared sign encodes the class."""
    samples = []
    for i, value in enumerate([-2.0, -1.0, -0.5, 0.5, 1.0, 3.0]):
        stack = ClipStack(np.full((2, 1, 1, 1), value))
        label = np.eye(2)[int(value > 0)]
        samples.append(PairedSample(i, stack, ClipStack(np.zeros((2, 1, 1, 1))), label))
    return samples


@pytest.fixture
def trained_suite(tiny_split, tiny_train_config):
    suite, _ = train_suite(tiny_split, tiny_train_config)
    return suite


def report_with(mode, correct, n=10):
    return EvalReport(
        mode=mode.value,
        accuracy=correct / n,
        confusion=[[correct, n - correct], [0, 0]],
        n_test=n,
        class_counts=[n, 0],
        seed=0,
        ci_lower=0.0,
        ci_upper=1.0,
    )


class TestEvaluate:
    """Single-mode evaluation."""

    def test_uniform_prediction_picks_lowest_index(self, tiny_spec, tiny_split):
        """All-zero models tie every class and predict class 0."""
        report = evaluate(zero_suite(tiny_spec), tiny_split.test, ModalityMode.FUSION_GENERATED_VISIBLE)
        confusion = np.array(report.confusion)
        np.testing.assert_array_equal(confusion[:, 0], [2, 2, 2])
        assert confusion[:, 1:].sum() == 0
        assert report.accuracy == pytest.approx(1 / 3)

    def test_oracle_model_is_perfect(self, sign_suite, sign_samples):
        """A model that reads the class off f_inf scores 100%."""
        for mode in (ModalityMode.FUSION_GENERATED_VISIBLE, ModalityMode.INFRARED_ONLY):
            report = evaluate(sign_suite, sign_samples, mode)
            assert report.accuracy == 1.0
            assert report.confusion == [[3, 0], [0, 3]]

    def test_confusion_rows_sum_to_class_counts(self, trained_suite, tiny_split):
        """Row sums equal the number of test samples per class."""
        for mode in TABLE_ORDER:
            report = evaluate(trained_suite, tiny_split.test, mode)
            assert [sum(row) for row in report.confusion] == [2, 2, 2]
            assert report.n_test == 6
            assert report.correct == round(report.accuracy * 6)

    def test_matches_per_sample_loop(self, trained_suite, tiny_split):
        """Batched probabilities equal evaluating one sample at a time."""
        mode = ModalityMode.FUSION_GENERATED_VISIBLE
        batched = class_probabilities(trained_suite, tiny_split.test, mode)
        for i, sample in enumerate(tiny_split.test):
            single = class_probabilities(trained_suite, [sample], mode)
            np.testing.assert_allclose(single[0], batched[i], atol=1e-12)

    def test_empty_test_set(self, trained_suite):
        """At least one sample is required."""
        with pytest.raises(ContractError):
            evaluate(trained_suite, [], ModalityMode.INFRARED_ONLY)

    def test_incompatible_samples(self, sign_suite, tiny_split):
        """Samples of another shape are rejected."""
        with pytest.raises(DimensionError):
            evaluate(sign_suite, tiny_split.test, ModalityMode.FUSION_GENERATED_VISIBLE)

    def test_missing_head(self, tiny_spec, tiny_split):
        """Single-head modes need their head in the suite."""
        suite = ModelSuite(PmGanParams.zeros(tiny_spec))
        with pytest.raises(ConfigurationError):
            evaluate(suite, tiny_split.test, ModalityMode.VISIBLE_ONLY)

    def test_test_noise_uses_seed(self, tiny_split, tiny_train_config):
        """With noise channels, test-time draws depend on the seed only."""
        config = tiny_train_config.model_copy(
            update={"noise": NoiseSpec(enabled=True), "train_single_heads": False}
        )
        suite, _ = train_suite(tiny_split, config)
        mode = ModalityMode.FUSION_GENERATED_VISIBLE
        a = class_probabilities(suite, tiny_split.test, mode, seed=5, test_noise=True)
        b = class_probabilities(suite, tiny_split.test, mode, seed=5, test_noise=True)
        quiet = class_probabilities(suite, tiny_split.test, mode)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, quiet)


class TestVisibleWithholding:
    """Generated-visible modes never read real visible data."""

    def test_withheld_visible_raises(self, tiny_split):
        """Touching .visible on a withheld sample fails loudly."""
        withheld = WithheldSample(tiny_split.test[0])
        assert withheld.sample_id == tiny_split.test[0].sample_id
        with pytest.raises(VisibleDataAccessError):
            withheld.visible

    def test_generated_modes_accept_withheld_samples(self, trained_suite, tiny_split):
        """Infrared-only inputs are enough for the generated modes."""
        withheld = [WithheldSample(s) for s in tiny_split.test]
        for mode in (
            ModalityMode.INFRARED_ONLY,
            ModalityMode.GENERATED_VISIBLE_ONLY,
            ModalityMode.FUSION_GENERATED_VISIBLE,
        ):
            expected = evaluate(trained_suite, tiny_split.test, mode)
            assert evaluate(trained_suite, withheld, mode).confusion == expected.confusion

    def test_real_visible_modes_refuse_withheld_samples(self, trained_suite, tiny_split):
        """Real-visible modes cannot run on withheld samples."""
        withheld = [WithheldSample(s) for s in tiny_split.test]
        with pytest.raises(VisibleDataAccessError):
            evaluate(trained_suite, withheld, ModalityMode.FUSION_REAL_VISIBLE)


class TestAblation:
    """Five-row tables."""

    def test_rows_match_single_evaluations(self, trained_suite, tiny_split):
        """Each row equals evaluating that mode alone."""
        table = ablation_table(trained_suite, tiny_split.test, seed=0)
        assert [r.mode for r in table.reports] == [m.value for m in TABLE_ORDER]
        for mode in TABLE_ORDER:
            assert table.accuracy(mode) == evaluate(trained_suite, tiny_split.test, mode).accuracy

    def test_missing_mode(self, trained_suite, tiny_split):
        """Every mode needs a model."""
        with pytest.raises(ConfigurationError):
            ablation_table({ModalityMode.INFRARED_ONLY: trained_suite}, tiny_split.test)

    def test_frame_and_render(self, trained_suite, tiny_split, tmp_path):
        """CSV columns and one console line per mode."""
        table = ablation_table(trained_suite, tiny_split.test)
        path = table.write_csv(tmp_path / "ablation.csv")
        assert path.read_text().splitlines()[0] == "mode,accuracy,n_test,seed"
        rendered = table.render().splitlines()
        assert len(rendered) == 6
        assert rendered[-1].startswith("Infrared + generated visible")

    def test_orderings(self):
        """Ordering flags compare the right rows."""
        table = AblationTable(
            (
                report_with(ModalityMode.INFRARED_ONLY, 5),
                report_with(ModalityMode.VISIBLE_ONLY, 9),
                report_with(ModalityMode.GENERATED_VISIBLE_ONLY, 6),
                report_with(ModalityMode.FUSION_REAL_VISIBLE, 9),
                report_with(ModalityMode.FUSION_GENERATED_VISIBLE, 7),
            )
        )
        assert orderings(table) == {
            "fusion_generated_beats_infrared": True,
            "fusion_real_at_least_fusion_generated": True,
            "generated_beats_infrared": True,
            "visible_beats_generated": True,
        }
        assert orderings(table, margin=0.5)["fusion_generated_beats_infrared"] is False


class TestReports:
    """Interval and file helpers."""

    def test_wilson_interval(self):
        """Symmetric around 1/2 for 50 of 100 and clamped at the ends."""
        lower, upper = wilson_interval(50, 100)
        assert lower == pytest.approx(0.4038, abs=1e-3)
        assert upper == pytest.approx(0.5962, abs=1e-3)
        assert wilson_interval(0, 0) == (0.0, 0.0)
        low, high = wilson_interval(10, 10)
        assert high == pytest.approx(1.0)
        assert 0.0 < low < 1.0

    def test_confusion_csv(self, sign_suite, sign_samples, tmp_path):
        """Header row names the predicted classes; index column is the true class."""
        report = evaluate(sign_suite, sign_samples, ModalityMode.FUSION_GENERATED_VISIBLE)
        lines = write_confusion_csv(report, tmp_path / "c.csv").read_text().splitlines()
        assert lines == ["class,0,1", "0,3,0", "1,0,3"]


class TestGeneralization:
    """Standard and shifted tables from one training run."""

    def test_shares_the_trained_suite(self, tiny_synth_config, tiny_train_config, trained_suite):
        """A supplied suite is evaluated on both test sets without retraining."""
        result = generalization_eval(tiny_synth_config, tiny_train_config, 0.5, suite=trained_suite)
        assert result.suite is trained_suite
        assert len(result.log) == 0
        assert set(result.degradation()) == {m.value for m in TABLE_ORDER}
        for table in (result.standard, result.shifted):
            assert all(r.n_test == 6 for r in table.reports)

    def test_trains_when_needed(self, tiny_synth_config, tiny_train_config):
        """Without a suite the protocol trains one for the configured epochs."""
        result = generalization_eval(tiny_synth_config, tiny_train_config, 0.5)
        assert len(result.log) == tiny_train_config.epochs
