#!/usr/bin/env python3
# End-to-end checks of the cntm command line tool.
# usage: cli_test.py <path to cntm binary>

import csv
import json
import os
import statistics
import subprocess
import sys
import tempfile
import unittest
import xml.etree.ElementTree as ET

CLI = None

SMALL = ["--controller-width", "8", "--head-width", "8", "--u-width", "8",
         "--memory-rows", "4", "--memory-width", "4", "--batch", "4", "--walk", "4",
         "--checkpoint-interval", "0", "--log-interval", "5"]


def run(*args, env=None):
    e = dict(os.environ)
    e.pop("CNTM_THREADS", None)
    if env:
        e.update(env)
    return subprocess.run([CLI, *args], capture_output=True, text=True, env=e)


def read(path, mode="r"):
    with open(path, mode) as f:
        return f.read()


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.d = cls.tmp.name
        cls.data = cls.p("train.txt")
        r = run("gen", "--nodes", "6", "--count", "4", "--seed", "3", "--out", cls.data)
        assert r.returncode == 0, r.stderr
        cls.cntm = cls.p("m.ckpt")
        cls.lstm = cls.p("l.ckpt")
        for model, out in (("cntm", cls.cntm), ("lstm", cls.lstm)):
            r = run("train", "--data", cls.data, "--model", model, "--steps", "10", "--seed", "5",
                    "--out", out, "--threads", "1", *SMALL)
            assert r.returncode == 0, r.stderr
        cls.metrics = cls.p("metrics.tsv")
        r = run("eval", "--data", cls.data, "--ckpt", cls.cntm, "--ckpt", cls.lstm, "--walk", "4",
                "--episodes", "3", "--seed", "7", "--out", cls.metrics)
        assert r.returncode == 0, r.stderr

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    @classmethod
    def p(cls, name):
        return os.path.join(cls.d, name)

    def manifest(self, out):
        m = json.loads(read(out + ".manifest.json"))
        for key in ("command", "config", "inputs", "output", "seed", "tool_version", "timestamps"):
            self.assertIn(key, m)
        self.assertEqual(m["output"]["path"], out)
        return m

    def test_gen_is_byte_identical_per_seed(self):
        a, b, c = self.p("a.txt"), self.p("b.txt"), self.p("c.txt")
        for out, seed in ((a, "9"), (b, "9"), (c, "10")):
            self.assertEqual(run("gen", "--count", "3", "--seed", seed, "--out", out).returncode, 0)
        self.assertEqual(read(a, "rb"), read(b, "rb"))
        self.assertNotEqual(read(a, "rb"), read(c, "rb"))
        m = self.manifest(a)
        self.assertEqual(m["command"], "gen")
        self.assertEqual(m["seed"], 9)

    def test_flags_beat_config_beat_defaults(self):
        cfg = self.p("gen.cfg")
        with open(cfg, "w") as f:
            f.write("# settings\ncount = 3\nnodes=7\n\n")
        out = self.p("cfg.txt")
        self.assertEqual(run("gen", "--config", cfg, "--count", "5", "--out", out).returncode, 0)
        c = self.manifest(out)["config"]
        self.assertEqual((c["count"], c["nodes"], c["seed"]), (5, 7, 1))
        self.assertEqual(run("gen", "--config", cfg, "--out", out).returncode, 0)
        self.assertEqual(self.manifest(out)["config"]["count"], 3)
        with open(cfg, "w") as f:
            f.write("bogus=1\n")
        self.assertEqual(run("gen", "--config", cfg, "--out", out).returncode, 2)
        tcfg = self.p("train.cfg")
        with open(tcfg, "w") as f:
            f.write("threads=0\n")
        args = ["train", "--data", self.data, "--out", self.p("c.ckpt"), "--steps", "1", "--config", tcfg, *SMALL]
        self.assertEqual(run(*args, env={"CNTM_THREADS": "2"}).returncode, 2)
        self.assertEqual(run(*args, "--threads", "2", env={"CNTM_THREADS": "0"}).returncode, 0)

    def test_usage_errors_exit_2(self):
        out = self.p("u.txt")
        self.assertEqual(run("gen", "--nodes", "1", "--out", out).returncode, 2)
        self.assertEqual(run("gen", "--count", "3").returncode, 2)
        self.assertEqual(run().returncode, 2)
        self.assertEqual(run("frobnicate").returncode, 2)
        self.assertEqual(run("train", "--data", self.data, "--out", self.p("x.ckpt"), "--steps", "1", *SMALL,
                             env={"CNTM_THREADS": "0"}).returncode, 2)
        self.assertEqual(run("train", "--data", self.data, "--out", self.p("x.ckpt"), "--steps", "1", *SMALL,
                             env={"CNTM_THREADS": "two"}).returncode, 2)
        self.assertEqual(run("train", "--data", self.data, "--out", self.p("x.ckpt"), "--steps", "1", *SMALL,
                             "--threads", "0").returncode, 2)
        r = run("plot", "--metrics", self.metrics, "--baseline", "nope", "--out", self.p("x.svg"))
        self.assertEqual(r.returncode, 2)

    def test_data_errors_exit_4(self):
        other = self.p("other.txt")
        self.assertEqual(run("gen", "--nodes", "6", "--count", "2", "--seed", "3", "--codebook-seed", "99",
                             "--out", other).returncode, 0)
        r = run("eval", "--data", other, "--ckpt", self.cntm, "--out", self.p("bad.tsv"))
        self.assertEqual(r.returncode, 4, r.stderr)
        junk = self.p("junk.txt")
        with open(junk, "w") as f:
            f.write("not a dataset\n")
        self.assertEqual(run("train", "--data", junk, "--out", self.p("j.ckpt"), "--steps", "1", *SMALL).returncode, 4)
        self.assertEqual(run("eval", "--data", self.data, "--ckpt", junk, "--out", self.p("j.tsv")).returncode, 4)

    def test_numerical_failure_exits_3(self):
        r = run("train", "--data", self.data, "--steps", "50", "--lr", "1e308", "--clip", "1e308",
                "--out", self.p("nan.ckpt"), *SMALL)
        self.assertEqual(r.returncode, 3, r.stderr)

    def test_training_is_thread_independent(self):
        for threads in ("1", "3"):
            out = self.p("t%s.ckpt" % threads)
            r = run("train", "--data", self.data, "--steps", "10", "--seed", "5", "--out", out, *SMALL,
                    env={"CNTM_THREADS": threads})
            self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(read(self.p("t1.ckpt"), "rb"), read(self.p("t3.ckpt"), "rb"))
        self.assertEqual(read(self.p("t1.ckpt"), "rb"), read(self.cntm, "rb"))

    def test_train_outputs_and_manifests(self):
        m = self.manifest(self.cntm)
        self.assertEqual(m["command"], "train")
        self.assertEqual(m["config"]["model"], "cntm")
        self.assertEqual(m["inputs"][0]["path"], self.data)
        self.assertNotIn("threads", m["config"])
        self.manifest(self.cntm + ".loss.tsv")
        rows = read(self.cntm + ".loss.tsv").splitlines()
        self.assertEqual(rows[0], "step\tloss")
        self.assertEqual(len(rows), 3)

    def test_lstm_checkpoint_has_no_memory(self):
        self.assertIn(b"memory.init", read(self.cntm, "rb"))
        lstm = read(self.lstm, "rb")
        for name in (b"memory.init", b"read.", b"write."):
            self.assertNotIn(name, lstm)
        self.assertLess(len(lstm), len(read(self.cntm, "rb")))

    def test_eval_table(self):
        self.manifest(self.metrics)
        self.manifest(self.metrics + ".summary.tsv")
        with open(self.metrics) as f:
            rows = list(csv.DictReader(f, delimiter="\t"))
        self.assertEqual(len(rows), 4 * 4)
        preds = [r["predictor"] for r in rows]
        self.assertEqual(sorted(set(preds)), ["cntm", "graph_distance", "lstm", "random"])
        for r in rows:
            self.assertEqual(int(r["episodes"]), 3)
            self.assertLessEqual(0.0, float(r["path_accuracy"]))
            self.assertLessEqual(float(r["path_accuracy"]), float(r["edge_accuracy"]) + 1e-12)
            self.assertLessEqual(float(r["edge_accuracy"]), 1.0)

    def test_plot_svg_and_csv(self):
        svg = self.p("box.svg")
        r = run("plot", "--metrics", self.metrics, "--baseline", "random", "--out", svg)
        self.assertEqual(r.returncode, 0, r.stderr)
        root = ET.fromstring(read(svg, "rb"))
        self.assertEqual(root.tag, "{http://www.w3.org/2000/svg}svg")
        out_csv = self.p("box.csv")
        self.manifest(svg)
        self.manifest(out_csv)

        with open(self.metrics) as f:
            rows = list(csv.DictReader(f, delimiter="\t"))
        by = {}
        for r in rows:
            by.setdefault(r["predictor"], {})[r["graph_id"]] = float(r["path_accuracy"])
        with open(out_csv) as f:
            stats = list(csv.DictReader(f))
        self.assertEqual(sorted(s["predictor"] for s in stats), ["cntm", "graph_distance", "lstm", "random"])
        for s in stats:
            diffs = sorted(by[s["predictor"]][g] - by["random"][g] for g in by["random"])
            q1, med, q3 = statistics.quantiles(diffs, n=4, method="inclusive")
            self.assertEqual(int(s["n"]), len(diffs))
            self.assertAlmostEqual(float(s["min"]), diffs[0], places=12)
            self.assertAlmostEqual(float(s["max"]), diffs[-1], places=12)
            self.assertAlmostEqual(float(s["q1"]), q1, places=12)
            self.assertAlmostEqual(float(s["median"]), med, places=12)
            self.assertAlmostEqual(float(s["q3"]), q3, places=12)


if __name__ == "__main__":
    CLI = os.path.abspath(sys.argv.pop(1))
    unittest.main(verbosity=2)
