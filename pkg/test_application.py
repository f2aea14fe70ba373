"""
Smoke Test Suite for Energy-Inspired Models

Checks that every module imports, configuration resolves, and the package
keeps its conventions.
"""

import os
import re

MODULES = [
    ("config", "Configuration module"),
    ("models", "Data models"),
    ("autograd", "Differentiable engine"),
    ("stats", "Random streams and distributions"),
    ("targets", "Synthetic targets"),
    ("networks", "Networks"),
    ("eims", "Energy-inspired models"),
    ("eims.base", "Base model"),
    ("eims.trs", "Truncated rejection sampling"),
    ("eims.snis", "Self-normalized importance sampling"),
    ("eims.his", "Hamiltonian importance sampling"),
    ("checkpoint", "Checkpoint format"),
    ("trainer", "Training loop"),
    ("density_grid", "Density heatmaps"),
    ("avvi_bounds", "Bound zoo"),
    ("main", "Command-line interface"),
]


def record_result(test_name: str, passed: bool, message: str = ""):
    """Print a check result and fail the enclosing test if it did not pass."""
    status = "✓ PASS" if passed else "✗ FAIL"
    print(f"{status}: {test_name}")
    if message:
        print(f"  → {message}")
    assert passed, f"{test_name}: {message}"


def test_imports():
    """Test that all modules can be imported without errors."""
    print("\n=== Testing Module Imports ===")

    for module_name, description in MODULES:
        try:
            __import__(module_name)
            record_result(f"Import {module_name}", True, description)
        except ImportError as e:
            record_result(f"Import {module_name}", False, f"Error: {str(e)}")


def test_configuration():
    """Test configuration loading and validation."""
    print("\n=== Testing Configuration ===")

    from config import config

    record_result("Config loaded", True, f"Environment: {config.environment}")

    for attr in ["engine", "training", "evaluation", "grid", "monitoring"]:
        record_result(f"Config.{attr} exists", hasattr(config, attr))

    record_result("Config.is_ci()", isinstance(config.is_ci(), bool), f"Returns: {config.is_ci()}")
    record_result(
        "Step count defaults",
        config.default_steps("trs") == config.training.trs_t and config.default_steps("his") == config.training.his_t,
    )
    record_result("Grid bounds", len(config.grid.bounds) == 4, str(config.grid.bounds))


def test_models():
    """Test run configuration records."""
    print("\n=== Testing Data Models ===")

    from pydantic import ValidationError

    from config import config
    from models import MetricRecord, TrainConfig, TrainResult

    run = TrainConfig(model="his")
    record_result("TrainConfig fills T for HIS", run.t == config.training.his_t, f"T = {run.t}")
    record_result("TrainConfig keeps explicit T", TrainConfig(model="trs", t=7).t == 7)

    for bad in ({"k": 0}, {"model": "vae"}, {"proposal": {"std": 0.0}}, {"seed": -1}):
        try:
            TrainConfig(**bad)
            record_result(f"Reject {bad}", False, "accepted an invalid configuration")
        except ValidationError:
            record_result(f"Reject {bad}", True)

    record = MetricRecord(step=0, objective=-2.5, eval_bound=-2.4, eval_se=0.01, grad_norm=0.0, seconds=0.1)
    result = TrainResult(checkpoint="c", metrics="m", history=[record])
    record_result("TrainResult.final", result.final.step == 0)


def test_main_entry():
    """Test main entry point is importable and lists every command."""
    print("\n=== Testing Main Entry Point ===")

    import main as main_module

    record_result("main.main() exists", callable(getattr(main_module, "main", None)))
    commands = set(main_module.COMMANDS)
    record_result(
        "CLI commands",
        commands == {"train", "eval", "sample", "grid", "bounds", "sweep"},
        f"Commands: {sorted(commands)}",
    )


def test_import_structure():
    """Test that all imports are absolute (not relative)."""
    print("\n=== Testing Import Structure ===")

    here = os.path.dirname(os.path.abspath(__file__))
    files_to_check = [f"{name.replace('.', '/')}.py" for name, _ in MODULES if name != "eims"]
    files_to_check.append("eims/__init__.py")

    relative_imports = []
    for filepath in files_to_check:
        with open(os.path.join(here, filepath), "r") as f:
            for i, line in enumerate(f, 1):
                if re.match(r"^\s*from\s+\.", line):
                    relative_imports.append(f"{filepath}:{i}")

    record_result("Absolute imports only", len(relative_imports) == 0,
               "All imports are absolute" if not relative_imports else
               f"Relative imports found: {relative_imports}")
