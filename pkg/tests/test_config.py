"""
Unit Tests for Experiment Configuration
Tests TOML loading, overrides and the single-pass consistency checks.
"""

import numpy as np
import pytest

from src.backend.errors import ConfigValidationError, KernelDomainError
from src.config.experiment import baseline_experiment, load_experiment, validate_experiment
from src.config.settings import get_config


def issue_codes(excinfo):
    return {issue.code for issue in excinfo.value.issues}


class TestBaseline:
    """Test suite for the built-in baseline experiment."""

    def test_baseline_file_loads(self):
        """Test the shipped baseline TOML file."""
        cfg = load_experiment()
        assert cfg.mode == 'grid'
        assert cfg.steps == 100000
        assert cfg.master_seed == 42
        assert cfg.snapshots == [1000]
        assert cfg.build_graph().n_nodes == 10
        assert len(cfg.build_grid()) == 1001
        print("✅ Baseline file test passed")

    def test_file_matches_defaults(self):
        """Test that the TOML file and the model defaults describe the same experiment."""
        from_file = load_experiment()
        builtin = baseline_experiment()
        np.testing.assert_array_equal(from_file.build_graph().weights, builtin.build_graph().weights)
        assert from_file.build_schedule() == builtin.build_schedule()
        assert from_file.build_stream() == builtin.build_stream()
        assert from_file.build_kernel() == builtin.build_kernel()
        print("✅ File/defaults agreement test passed")

    def test_truth_is_kernel_section(self):
        """Test the default target K(., 1)."""
        cfg = baseline_experiment()
        truth = cfg.build_truth()
        assert truth.evaluate(1.0) == 1.0
        assert truth.evaluate(0.0) == pytest.approx(np.exp(-1.0))
        print("✅ Default truth test passed")

    def test_output_dir_default(self):
        """Test the output directory fallback."""
        assert baseline_experiment().resolved_output_dir() == get_config().OUTPUT_DIR
        assert str(baseline_experiment(output_dir='elsewhere').resolved_output_dir()) == 'elsewhere'
        print("✅ Output directory test passed")

    def test_kernel_strict_by_default(self):
        """Test that the built kernel rejects points outside the domain."""
        kernel = baseline_experiment().build_kernel()
        assert kernel.strict
        with pytest.raises(KernelDomainError, match="out of domain"):
            kernel.eval(5.0, 4.0)
        print("✅ Strict kernel test passed")

    def test_kernel_lenient_clamps(self):
        """Test that strict = false reaches the kernel and clamps into the domain."""
        kernel = validate_experiment({'kernel': {'strict': False}}).build_kernel()
        assert kernel.strict is False
        assert kernel.eval(5.0, 4.0) == 1.0
        assert kernel.eval(-3.0, 0.0) == pytest.approx(np.exp(-4.0))
        print("✅ Lenient kernel test passed")


class TestValidation:
    """Test suite for validate_experiment and load_experiment."""

    def test_reports_every_issue_at_once(self):
        """Test that consistency issues from several sections come back together."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({
                'snapshots': [-1],
                'graph': {'n_nodes': 3, 'edges': [[1, 2, 1.0]]},
                'gains': {'a_exp': 0.4},
            })
        assert {'disconnected', 'gain_conditions', 'out_of_range'} <= issue_codes(excinfo)
        print("✅ Combined issues test passed")

    def test_type_errors(self):
        """Test that pydantic errors are reported with their fields."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'steps': -5, 'bogus': 1})
        fields = {issue.field for issue in excinfo.value.issues}
        assert {'steps', 'bogus'} <= fields
        print("✅ Type errors test passed")

    def test_type_and_consistency_errors_together(self):
        """Test that a type error does not hide a disconnected graph."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'steps': -5, 'graph': {'n_nodes': 3, 'edges': [[1, 2, 1.0]]}})
        assert {'greater_than_equal', 'disconnected'} <= issue_codes(excinfo)
        print("✅ Type plus consistency test passed")

    def test_nested_type_error_keeps_other_checks(self):
        """Test a bad value inside a section next to an invalid stream."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'graph': {'n_nodes': 'three'}, 'stream': {'hi': 5.0}})
        codes = issue_codes(excinfo)
        assert 'int_parsing' in codes
        assert 'support_outside_domain' in codes
        print("✅ Nested type error test passed")

    def test_checks_on_invalid_field_are_skipped(self):
        """Test that snapshots are not range-checked against a step count that failed validation."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'steps': -5, 'snapshots': [200000]})
        assert issue_codes(excinfo) == {'greater_than_equal'}
        print("✅ Skipped dependent check test passed")

    def test_disconnected_graph_allowed_without_hypotheses(self):
        """Test that assert_hypotheses = false admits a disconnected graph."""
        cfg = validate_experiment({'assert_hypotheses': False, 'graph': {'n_nodes': 3, 'edges': [[1, 2, 1.0]]}})
        assert cfg.build_graph().n_nodes == 3
        print("✅ Hypotheses switch test passed")

    def test_literal_grid_misses_right_end(self):
        """Test that a grid without its right endpoint fails grid_hull."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'grid': {'include_right_endpoint': False}})
        assert issue_codes(excinfo) == {'grid_hull'}
        print("✅ Grid hull test passed")

    def test_stream_leaving_domain(self):
        """Test a stream support wider than the kernel domain."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'stream': {'hi': 5.0}})
        assert 'support_outside_domain' in issue_codes(excinfo)
        print("✅ Stream support test passed")

    def test_invalid_graph_edges(self):
        """Test an edge to a node that does not exist."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'graph': {'n_nodes': 2, 'edges': [[1, 3, 1.0]]}})
        assert 'invalid_graph' in issue_codes(excinfo)
        print("✅ Invalid edges test passed")

    def test_finite_dim_truth_length(self):
        """Test a finite-dimensional truth of the wrong length."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'mode': 'finite_dim', 'finite_dim': {'dim': 3, 'truth': [1.0, 2.0]}})
        assert issue_codes(excinfo) == {'length_mismatch'}
        print("✅ Truth length test passed")

    def test_error_report(self):
        """Test the dictionary form of a validation error."""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_experiment({'snapshots': [10 ** 7]})
        report = excinfo.value.to_dict()
        assert report['success'] is False
        assert report['issues'][0]['field'] == 'snapshots'
        print("✅ Error report test passed")


class TestLoading:
    """Test suite for TOML files and overrides."""

    def test_overrides_are_merged(self):
        """Test that nested overrides replace single keys only."""
        cfg = load_experiment(overrides={'steps': 50, 'stream': {'master_seed': 7}})
        assert cfg.steps == 50
        assert cfg.master_seed == 7
        assert cfg.stream.noise_variance == 0.1
        print("✅ Overrides test passed")

    def test_custom_file(self, tmp_path):
        """Test a partial TOML file filled in from defaults."""
        path = tmp_path / 'small.toml'
        path.write_text('mode = "expansion"\nsteps = 20\n\n[gains]\na_exp = 1.0\n')
        cfg = load_experiment(path)
        assert cfg.mode == 'expansion'
        assert cfg.gains.a_exp == 1.0
        assert cfg.gains.b_exp == 1.0
        print("✅ Custom file test passed")

    def test_missing_file(self, tmp_path):
        """Test a path that does not exist."""
        with pytest.raises(ConfigValidationError) as excinfo:
            load_experiment(tmp_path / 'missing.toml')
        assert issue_codes(excinfo) == {'not_found'}
        print("✅ Missing file test passed")

    def test_parse_error(self, tmp_path):
        """Test malformed TOML."""
        path = tmp_path / 'broken.toml'
        path.write_text('steps = = 3\n')
        with pytest.raises(ConfigValidationError) as excinfo:
            load_experiment(path)
        assert issue_codes(excinfo) == {'parse_error'}
        print("✅ Parse error test passed")
