"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see
them). Criteria cover the metrics oracle against published benchmark
confusion matrices, gradient exactness, pair-batch contracts, a synthetic
end-to-end one-shot run, voting behaviour, determinism, exclusion hygiene,
and argmin scale invariance.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from oneshot_ids import cli
from oneshot_ids.dataset import ExperimentSplit, prepare_experiment
from oneshot_ids.evaluator import ConfusionMatrix, VoteConfig, evaluate, vote_sweep
from oneshot_ids.network import CONTRASTIVE, REGULARIZED_LOG, LossConfig, batch_gradients, init_model
from oneshot_ids.pairgen import generate_training_batch, pair_counts
from oneshot_ids.seeding import EVAL_STREAM, stream_rng
from oneshot_ids.synthetic import make_raw, write_files
from oneshot_ids.trainer import TrainingConfig, run_training

from conftest import build_split
from published_cms import ALL_PUBLISHED
from test_network import fd_gradients, max_relative_error, random_batch

DATA_SEED = 7
RUN_SEED = 11
EXCLUDED = "attack2"


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@dataclass
class TrainedFixture:
    ds: object
    split: ExperimentSplit
    model: object
    trace: object
    batches: list = field(default_factory=list)
    train_seconds: float = 0.0
    sweep_rows: list = field(default_factory=list)
    eval_seconds: float = 0.0


@pytest.fixture(scope="module")
def trained(tmp_path_factory) -> TrainedFixture:
    """Criterion-4 configuration: 5 Gaussian clusters (1 benign + 4 attack),
    500 instances/class, 20 features, 4-sigma separation; one attack class
    withheld; 200 epochs with package defaults; fixed seeds."""
    raw = make_raw(n_classes=5, per_class=500, n_features=20, separation=4.0, seed=DATA_SEED)
    ds, split = prepare_experiment(raw, EXCLUDED, seed=RUN_SEED)
    fixture = TrainedFixture(ds=ds, split=split, model=None, trace=None)
    cfg = TrainingConfig(n_epochs=200, seed=RUN_SEED)
    started = time.perf_counter()
    model, split, trace = run_training(
        ds, split.excluded_class, cfg, split=split, on_batch=fixture.batches.append
    )
    fixture.train_seconds = time.perf_counter() - started
    started = time.perf_counter()
    fixture.sweep_rows = vote_sweep(model, split, 30000, (1, 5), seed=RUN_SEED)
    fixture.eval_seconds = time.perf_counter() - started
    fixture.model = model
    fixture.trace = trace
    return fixture


class TestCriterion1MetricsOracle:
    def test_published_cms_reproduced(self, tmp_path, capsys):
        started = time.perf_counter()
        worst = 0.0
        for fixture in ALL_PUBLISHED:
            cm = ConfusionMatrix(np.array(fixture["counts"]), fixture["class_names"])
            path = tmp_path / "cm.csv"
            cm.to_csv(path)
            code = cli.main(["metrics", str(path), "--exclude", fixture["excluded"]])
            out = capsys.readouterr().out
            assert code == 0
            values = dict(line.split(" ", 1) for line in out.strip().splitlines())
            got = {
                "overall": 100 * float(values["overall_accuracy"]),
                "new_tpr": 100 * float(values[f"tpr[{fixture['excluded']}]"]),
                "new_fnr": 100 * float(values[f"fnr[{fixture['excluded']}]"]),
                "tnr": 100 * float(values["normal_tnr"]),
                "fpr": 100 * float(values["normal_fpr"]),
            }
            for key, expected in fixture["expected"].items():
                worst = max(worst, abs(got[key] - expected))
        elapsed = time.perf_counter() - started
        report(
            1,
            worst <= 0.01 and elapsed < 1.0,
            f"published CM rates reproduced, max deviation {worst:.4f} pp "
            f"(tolerance 0.01), {elapsed:.2f}s (budget 1s)",
        )


class TestCriterion2Gradients:
    def test_finite_difference_agreement(self):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        activations = ("sigmoid", "relu", "tanh")
        worst = 0.0
        for trial in range(20):
            depth = int(rng.integers(1, 4))
            sizes = [int(rng.integers(2, 9)) for _ in range(depth + 1)]
            model = init_model(sizes, activation=activations[trial % 3], rng=rng)
            batch = random_batch(rng, sizes[0], 8)
            for kind in (CONTRASTIVE, REGULARIZED_LOG):
                cfg = LossConfig(kind=kind)
                grads, _ = batch_gradients(model, batch, cfg)
                fd_w, fd_b = fd_gradients(model, batch, cfg)
                worst = max(
                    worst,
                    max_relative_error(grads.d_weights, fd_w),
                    max_relative_error(grads.d_biases, fd_b),
                )
        elapsed = time.perf_counter() - started
        report(
            2,
            worst < 1e-4 and elapsed < 10.0,
            f"20 random models x both losses: max relative gradient error "
            f"{worst:.2e} (tolerance 1e-4), {elapsed:.1f}s (budget 10s)",
        )


class TestCriterion3PairBatches:
    def test_batch_contracts(self):
        started = time.perf_counter()
        rng = np.random.default_rng(303)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            class_ids = [c for c in range(k + 1) if c != 1][:k]
            sizes = {c: int(rng.integers(4, 60)) for c in class_ids}
            split = build_split(sizes, excluded_class=1, labelled=3, unlabelled=3)
            sim_cap = sum(n * (n - 1) // 2 for n in sizes.values())
            dis_cap = sum(
                sizes[a] * sizes[b] for a, b in itertools.combinations(class_ids, 2)
            )
            b = int(rng.integers(2 * k, max(2 * k + 1, min(2 * sim_cap, 2 * dis_cap, 1200))))
            batch = generate_training_batch(split, b, rng=int(rng.integers(2**31)))

            keys = [tuple(sorted(p)) for p in zip(batch.left_idx.tolist(), batch.right_idx.tolist())]
            assert len(set(keys)) == len(keys), "uniqueness"
            allowed = set(split.training_indices().tolist())
            assert set(batch.left_idx.tolist()) | set(batch.right_idx.tolist()) <= allowed
            counts = pair_counts(batch)
            assert counts.n_similar == b // 2 and counts.n_dissimilar == b - b // 2
            n_sim = b // 2
            quota = n_sim // k
            if n_sim % k == 0 and all(n * (n - 1) // 2 >= quota for n in sizes.values()):
                assert set(counts.similar_by_class.values()) == {quota}, "quota equality"

        # imbalance fixture: a 26-instance pool caps at C(26,2)=325 similar pairs
        split = build_split({0: 400, 1: 26, 3: 400, 4: 400}, excluded_class=2)
        batch = generate_training_batch(split, 30000, rng=7)
        counts = pair_counts(batch)
        elapsed = time.perf_counter() - started
        report(
            3,
            counts.similar_by_class[1] == 325
            and counts.n_similar == 15000
            and elapsed < 30.0,
            f"100 random batches hold balance/uniqueness/provenance/quota; "
            f"26-instance pool yielded {counts.similar_by_class[1]} similar pairs "
            f"(expected 325) with remainder redistributed, {elapsed:.1f}s (budget 30s)",
        )


class TestCriterion4SyntheticOneShot:
    def test_unseen_class_detection(self, trained):
        row = next(r for r in trained.sweep_rows if r.votes == 5)
        tpr = row.report.new_class_tpr
        overall = row.report.overall_accuracy
        elapsed = trained.train_seconds + trained.eval_seconds
        report(
            4,
            tpr >= 0.80 and overall >= 0.90 and elapsed < 180.0,
            f"excluded-class TPR {100*tpr:.2f}% (>=80), overall "
            f"{100*overall:.2f}% (>=90) at j=5, {elapsed:.0f}s (budget 180s)",
        )


class TestCriterion5VotingSweep:
    def test_j5_not_worse_than_j1(self, trained):
        by_j = {r.votes: r.report.overall_accuracy for r in trained.sweep_rows}
        report(
            5,
            by_j[5] >= by_j[1] - 0.01,
            f"overall accuracy j=5 {100*by_j[5]:.2f}% vs j=1 {100*by_j[1]:.2f}% "
            f"(allowed drop 1 pp)",
        )


class TestCriterion6Determinism:
    def test_byte_identical_runs(self, tmp_path):
        data_dir = tmp_path / "data"
        csv_path, schema_path = write_files(
            data_dir, n_classes=4, per_class=40, n_features=6, seed=3
        )
        outputs = []
        for name in ("first", "second"):
            out = tmp_path / name
            manifest = tmp_path / f"{name}.manifest"
            manifest.write_text(
                f"dataset = {csv_path}\nschema = {schema_path}\nout = {out}\n"
                "exclude = all-attacks\nepochs = 3\nbatch_size = 200\n"
                "minibatch = 64\nvotes = 1,5\nseed = 9\n",
                encoding="utf-8",
            )
            assert cli.main(["run", "--manifest", str(manifest)]) == 0
            outputs.append(out)
        identical = True
        for sub in sorted(p.name for p in outputs[0].iterdir() if p.is_dir()):
            for artifact in ("cm.csv", "metrics.json"):
                identical &= (
                    (outputs[0] / sub / artifact).read_bytes()
                    == (outputs[1] / sub / artifact).read_bytes()
                )
        report(6, identical, "two identical-manifest runs wrote byte-identical cm.csv and metrics.json")


class TestCriterion7ExclusionHygiene:
    def test_no_excluded_instances_in_any_batch(self, trained):
        excluded_rows = set(
            np.flatnonzero(trained.ds.labels == trained.split.excluded_class).tolist()
        )
        leaked = 0
        for batch in trained.batches:
            used = set(batch.left_idx.tolist()) | set(batch.right_idx.tolist())
            leaked += len(used & excluded_rows)
        report(
            7,
            len(trained.batches) >= 1 and leaked == 0,
            f"audited {len(trained.batches)} training batch(es), "
            f"{leaked} excluded-class instances found",
        )


class TestCriterion8ScaleInvariance:
    def test_scaled_final_layer_same_cm(self, trained):
        rng_seed = (RUN_SEED, EVAL_STREAM, 5)
        cm1 = evaluate(
            trained.model, trained.split, 30000, VoteConfig(5),
            rng=stream_rng(*rng_seed),
        )
        scaled = trained.model.copy()
        scaled.weights[-1] *= 3.7
        scaled.biases[-1] *= 3.7
        cm2 = evaluate(
            scaled, trained.split, 30000, VoteConfig(5),
            rng=stream_rng(*rng_seed),
        )
        report(
            8,
            bool(np.array_equal(cm1.counts, cm2.counts)),
            "scaling final-layer weights by 3.7 left the 30000-instance CM unchanged",
        )


class TestCriterion9ReferenceLabels:
    def test_published_reference_attached(self, tmp_path, capsys):
        """Informational (non-gating): when an NSL-KDD-style input is
        supplied, the summary shows the published overall accuracy next to
        ours, labelled non-reproducible-spec-exact."""
        rng = np.random.default_rng(0)
        csv_path = tmp_path / "flows.csv"
        with csv_path.open("w") as fh:
            for i in range(150):
                cls = ("Normal", "DoS", "Probe")[i % 3]
                fh.write(f"{rng.random():.4f},{rng.random():.4f},{cls}\n")
        schema_path = tmp_path / "nslkdd-flows.schema"
        schema_path.write_text(
            "column a numeric\ncolumn b numeric\ncolumn label label\nnormal Normal\n"
        )
        out = tmp_path / "out"
        code = cli.main([
            "run", "--dataset", str(csv_path), "--schema", str(schema_path),
            "--out", str(out), "--exclude", "DoS", "--epochs", "2",
            "--batch-size", "100", "--minibatch", "50", "--votes", "5", "--seed", "1",
        ])
        capsys.readouterr()
        summary = (out / "summary.csv").read_text()
        ok = code == 0 and "77.99" in summary and cli.REFERENCE_NOTE in summary
        report(
            9,
            ok,
            "informational: NSL-KDD summary row carries the published 77.99% "
            "overall next to ours, labelled non-reproducible-spec-exact",
        )
