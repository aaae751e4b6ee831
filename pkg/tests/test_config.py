import unittest
import sys
import os
import json
import tempfile
from unittest import mock

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import CompilerConfig, get_current_config, load_compiler_config, reset_config


class TestCompilerConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.addCleanup(reset_config)
        env = {k: v for k, v in os.environ.items() if k not in ("NCDC_COLOR", "NCDC_CONFIG_PATH")}
        patcher = mock.patch.dict(os.environ, env, clear=True)
        patcher.start()
        self.addCleanup(patcher.stop)

    def write(self, data):
        path = os.path.join(self.tmp.name, "ncdc_config.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f)
        return path

    def test_defaults(self):
        config = CompilerConfig()
        self.assertEqual(config.interp.materialize_limit, 10_000)
        self.assertEqual(config.rewrite.normalize_max_passes, 64)
        self.assertFalse(config.diagnostics.color)

    def test_partial_file_keeps_defaults(self):
        config = load_compiler_config(self.write({"interp": {"fd_step": 0.01}}))
        self.assertEqual(config.interp.fd_step, 0.01)
        self.assertEqual(config.interp.materialize_limit, 10_000)
        self.assertIs(get_current_config(), config)

    def test_unknown_keys_are_reported(self):
        with self.assertLogs("src.config.compiler_config", level="WARNING") as logs:
            config = load_compiler_config(self.write({"render": {"column_width": 120, "glow": True}}))
        self.assertEqual(config.render.column_width, 120)
        self.assertIn("glow", logs.output[0])

    def test_missing_explicit_file(self):
        with self.assertRaises(FileNotFoundError):
            CompilerConfig.load(os.path.join(self.tmp.name, "absent.json"))

    def test_environment_overrides(self):
        path = self.write({"diagnostics": {"color": False}})
        with mock.patch.dict(os.environ, {"NCDC_COLOR": "1", "NCDC_CONFIG_PATH": path}):
            config = load_compiler_config()
        self.assertTrue(config.diagnostics.color)

    def test_to_dict_round_trip(self):
        config = load_compiler_config(self.write(CompilerConfig().to_dict()))
        self.assertEqual(config.to_dict(), CompilerConfig().to_dict())


if __name__ == '__main__':
    unittest.main()
