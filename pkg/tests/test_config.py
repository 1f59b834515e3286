"""Run-configuration parsing, validation, presets, and the manifest."""
from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from mimfrac.config import (
    ConfigError,
    G_TRUE_PRESETS,
    INITIAL_PRESETS,
    REACTION_PRESETS,
    RHO_PRESETS,
    RunConfig,
    build_problem,
    canonical_manifest,
    inverse_config,
    load_config,
    parse_config,
)

MINIMAL = "T=1.5\nN=20\nnx=20\nny=20\nalpha=0.5\nq=1\n"


class TestParsing:
    def test_minimal_file_fills_defaults(self):
        cfg = parse_config(MINIMAL)
        assert (cfg.T, cfg.N, cfg.nx, cfg.ny) == (1.5, 20, 20, 20)
        assert (cfg.alpha, cfg.q) == (0.5, 1.0)
        assert cfg.rho == "example1" and cfg.g_true == "example1"
        assert cfg.frame is None and cfg.epsilon == 0.0
        assert cfg.direction_mode == "fletcher-reeves"
        assert cfg.domain == (0.0, 1.0, 0.0, 1.0)

    def test_comments_and_blank_lines_ignored(self):
        text = "# full line comment\n\n  \nT=1.5 # trailing\nN=4\nnx=4\nny=4\nalpha=0.5\nq=0\n"
        cfg = parse_config(text)
        assert cfg.T == 1.5 and cfg.q == 0.0

    def test_whitespace_around_separator(self):
        cfg = parse_config(MINIMAL + "  beta =  1e-6 \n")
        assert cfg.beta == 1e-6

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(MINIMAL + "bogus=1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(MINIMAL + "T=2.0\n")

    def test_missing_required_keys_listed(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config("T=1.0\nN=4\nnx=4\nny=4\nq=1\n")

    def test_line_without_separator_rejected(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("just words\n" + MINIMAL)

    def test_empty_value_rejected(self):
        with pytest.raises(ConfigError, match="empty value"):
            parse_config(MINIMAL + "beta=\n")

    @pytest.mark.parametrize(
        "line,pattern",
        [
            ("N=4.5", "N"),
            ("beta=abc", "beta"),
            ("domain=0,1,0", "domain"),
            ("frame=0.1", "frame"),
        ],
    )
    def test_bad_typed_values_name_the_key(self, line, pattern):
        with pytest.raises(ConfigError, match=pattern):
            parse_config(MINIMAL.replace("N=20\n", "") + line + "\nN=20\n")

    def test_infinite_grad_tol_parses(self):
        cfg = parse_config(MINIMAL + "grad_tol=inf\n")
        assert np.isinf(cfg.grad_tol)

    def test_none_spellings_for_optionals(self):
        cfg = parse_config(MINIMAL + "frame=none\ng_max=NONE\n")
        assert cfg.frame is None and cfg.g_max is None

    def test_load_config_reads_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(MINIMAL + "frame=0.1,0.9\n", encoding="ascii")
        cfg = load_config(path)
        assert cfg.frame == (0.1, 0.9)

    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)


class TestValidation:
    @pytest.mark.parametrize(
        "overrides,pattern",
        [
            ({"T": 0.0}, "T"),
            ({"N": 0}, "N"),
            ({"nx": 1}, "nx"),
            ({"alpha": 0.0}, "alpha"),
            ({"alpha": 1.0}, "alpha"),
            ({"q": -0.5}, "q"),
            ({"domain": (1.0, 0.0, 0.0, 1.0)}, "domain"),
            ({"rho": "quadratic"}, "rho"),
            ({"g_true": "mystery"}, "g_true"),
            ({"initial": "bump"}, "initial"),
            ({"diffusion": "tensor"}, "diffusion"),
            ({"reaction": "two"}, "reaction"),
            ({"frame": (0.9, 0.1)}, "frame"),
            ({"frame": (-0.1, 0.5)}, "frame"),
            ({"epsilon": -1.0}, "epsilon"),
            ({"seed": -1}, "seed"),
            ({"seed": 2**64}, "seed"),
            ({"refine": 0}, "refine"),
            ({"beta": -1e-8}, "beta"),
            ({"direction_mode": "newton"}, "direction"),
            ({"g_max": 0.0}, "g_max"),
        ],
    )
    def test_bad_values_rejected(self, overrides, pattern):
        base = parse_config(MINIMAL)
        with pytest.raises(ConfigError, match=pattern):
            dataclasses.replace(base, **overrides)

    def test_frame_must_fit_nonunit_domain(self):
        base = parse_config(MINIMAL)
        with pytest.raises(ConfigError):
            dataclasses.replace(base, domain=(0.0, 0.5, 0.0, 0.5), frame=(0.1, 0.9))
        ok = dataclasses.replace(base, domain=(0.0, 2.0, 0.0, 2.0), frame=(0.5, 1.5))
        assert ok.frame == (0.5, 1.5)


class TestManifest:
    def test_round_trip_defaults(self):
        cfg = parse_config(MINIMAL)
        assert parse_config(canonical_manifest(cfg)) == cfg

    def test_round_trip_every_optional_set(self):
        cfg = dataclasses.replace(
            parse_config(MINIMAL),
            domain=(0.0, 2.0, -1.0, 2.0),
            frame=(0.25, 1.75),
            epsilon=2.5,
            seed=123456789,
            refine=2,
            beta=3.1e-7,
            max_iters=17,
            grad_tol=float("inf"),
            armijo_step=0.125,
            direction_mode="steepest",
            g_max=1.75,
            g_true="example2b",
            initial="sine",
            reaction="one",
            rho="one",
            out="results/run1",
        )
        assert parse_config(canonical_manifest(cfg)) == cfg

    def test_manifest_lists_every_field_once(self):
        cfg = parse_config(MINIMAL)
        lines = canonical_manifest(cfg).splitlines()
        keys = [line.split("=", 1)[0] for line in lines]
        assert len(keys) == len(set(keys)) == len(dataclasses.fields(RunConfig))


class TestPresets:
    def test_rho_presets_at_sample_times(self):
        t = np.array([0.0, 0.5])
        np.testing.assert_allclose(RHO_PRESETS["example1"](t), [2.0, 2.0 + np.pi**2])
        np.testing.assert_array_equal(RHO_PRESETS["one"](t), [1.0, 1.0])
        np.testing.assert_array_equal(RHO_PRESETS["zero"](t), [0.0, 0.0])

    def test_g_true_presets_at_sample_points(self):
        x, y = 0.25, 0.5
        assert G_TRUE_PRESETS["example1"](x, y) == pytest.approx(1.0)
        assert G_TRUE_PRESETS["example2a"](x, y) == pytest.approx(3.0 - np.exp(0.625))
        assert G_TRUE_PRESETS["example2b"](x, y) == pytest.approx(
            0.5 * np.cos(np.pi / 4) * np.cos(np.pi) + 1.0
        )
        assert G_TRUE_PRESETS["example2c"](x, y) == pytest.approx(
            0.5 * np.sin(np.pi / 4) * np.cos(np.pi / 2) + 1.0
        )
        assert G_TRUE_PRESETS["zero"](x, y) == 0.0

    def test_initial_and_reaction_presets(self):
        assert INITIAL_PRESETS["zero"](0.3, 0.7) == 0.0
        assert INITIAL_PRESETS["sine"](0.5, 0.5) == pytest.approx(1.0)
        assert REACTION_PRESETS["zero"](0.1, 0.2) == 0.0
        assert REACTION_PRESETS["one"](0.1, 0.2) == 1.0


class TestBuildProblem:
    def test_example_problem_materializes(self):
        cfg = parse_config(MINIMAL + "frame=0.1,0.9\n")
        problem = build_problem(cfg)
        assert problem.mesh.nx == 20 and problem.grid.N == 20
        assert problem.alpha == 0.5 and problem.q == 1.0
        assert problem.system.mask is not None
        assert problem.system.M_omega is not None
        np.testing.assert_allclose(
            problem.rho.values, 2.0 + (2 * np.pi * problem.grid.nodes) ** 2
        )
        x, y = problem.mesh.nodes[:, 0], problem.mesh.nodes[:, 1]
        np.testing.assert_allclose(
            problem.g, 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y) + 1.0
        )
        np.testing.assert_array_equal(problem.a, 0.0)

    def test_no_frame_means_no_observation_operator(self):
        problem = build_problem(parse_config(MINIMAL))
        assert problem.system.mask is None
        assert problem.system.M_omega is None

    def test_sine_initial_clamped_on_rectangle(self):
        cfg = parse_config(
            "T=1.0\nN=4\nnx=6\nny=6\nalpha=0.5\nq=1\ninitial=sine\ndomain=0,2,0,1\n"
        )
        problem = build_problem(cfg)
        x, y = problem.mesh.nodes[:, 0], problem.mesh.nodes[:, 1]
        rim = (x == 0) | (x == 2) | (y == 0) | (y == 1)
        np.testing.assert_array_equal(problem.a[rim], 0.0)
        assert np.abs(problem.a).max() > 0.0

    def test_reaction_changes_stiffness(self):
        plain = build_problem(parse_config(MINIMAL))
        reactive = build_problem(parse_config(MINIMAL + "reaction=one\n"))
        diff = (reactive.system.K - plain.system.K).toarray()
        assert np.abs(diff).max() > 0.0
        np.testing.assert_allclose(diff, plain.system.M.toarray(), atol=1e-12)


class TestInverseConfigBridge:
    def test_fields_carried_over(self):
        cfg = parse_config(MINIMAL + "beta=1e-8\nmax_iters=7\ng_max=0.5\n")
        icfg = inverse_config(cfg)
        assert icfg.beta == 1e-8
        assert icfg.max_iters == 7
        assert icfg.g_max == 0.5
        assert icfg.direction_mode == "fletcher-reeves"
        assert icfg.initial_guess is None
