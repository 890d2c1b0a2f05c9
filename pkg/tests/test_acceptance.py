"""Acceptance suite: one test per shipping criterion, at its stated tolerance.

Each test prints a [PASS] line when its criterion holds; run with
`pytest tests/test_acceptance.py -v -s` to see them stream.
"""

import math
import time

import numpy as np
import pytest

from pllkit import data as D
from pllkit import harness as H
from pllkit import kernel as K
from pllkit import labels as L
from pllkit import methods as M
from pllkit import reference_results as ref
from pllkit.backbone import Backbone, BackboneConfig
from pllkit.cli import main as cli_main


def _report(criterion, detail=""):
    print(f"[PASS] {criterion}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module")
def check_batch():
    rng = np.random.default_rng(42)
    x = rng.random((8, 310))
    truth = rng.integers(5, size=8)
    masks = L.gen_uniform_masks(truth, 0.6, 5, rng)
    onehot = np.zeros((8, 5))
    onehot[np.arange(8), truth] = 1.0
    return x, masks, onehot


@pytest.fixture(scope="module")
def confinement_dataset():
    cfg = D.SynthConfig(subjects=1, segments_per_trial=6, separation=1.0,
                        noise=0.3, seed=2, feature_len=60)
    return D.synth_generate(cfg)


@pytest.fixture(scope="module")
def desk_dataset():
    # criterion 6 scale: 1 subject, 30 segments/trial, 310 features
    cfg = D.SynthConfig(subjects=1, segments_per_trial=30, separation=1.0,
                        noise=1.0, seed=0, feature_len=310)
    return D.synth_generate(cfg)


def gradcheck_matrix():
    cases = [("supervised", M.MethodConfig("supervised"), 0),
             ("dnpl", M.MethodConfig("dnpl"), 0),
             ("proden+ld", M.MethodConfig("proden", ld=True), 0),
             ("cavl+ld", M.MethodConfig("cavl", ld=True), 0)]
    for variant in ("sigmoid", "ce"):
        for beta in (0, 1, 2):
            for ld in (False, True):
                tag = f"lw-{variant}-b{beta}{'+ld' if ld else ''}"
                cases.append((tag, M.MethodConfig("lw", ld=ld, lw_variant=variant,
                                                  beta=beta), 0))
    for t in (0, 15, 30):
        cases.append((f"cr+ld t={t}", M.MethodConfig("cr", ld=True), t))
    for cl in (False, True):
        for ld in (False, True):
            tag = f"pico cl={'on' if cl else 'off'} ld={'on' if ld else 'off'}"
            cases.append((tag, M.MethodConfig("pico", ld=ld, contrastive=cl), 0))
    return cases


class TestCriterion1GradientFidelity:
    def test_all_losses_match_finite_differences(self, check_batch):
        x, masks, onehot = check_batch
        started = time.perf_counter()
        worst_overall = 0.0
        for tag, cfg, t in gradcheck_matrix():
            loss_fn, params = M.make_gradcheck_loss(cfg, x, masks, onehot,
                                                    t=t, total_epochs=30)
            err = K.gradcheck(loss_fn, params, eps=1e-4, max_coords_per_param=16,
                              rng=np.random.default_rng(0))
            print(f"  gradcheck {tag:24s} max rel err {err:.3e}")
            assert err <= 1e-4, f"{tag}: {err:.3e} exceeds 1e-4"
            worst_overall = max(worst_overall, err)
        elapsed = time.perf_counter() - started
        assert elapsed <= 600.0, f"gradcheck matrix took {elapsed:.0f}s (> 10 min)"
        _report("criterion 1: gradient fidelity",
                f"worst {worst_overall:.3e} over {len(gradcheck_matrix())} configs, "
                f"{elapsed:.0f}s")


class TestCriterion2LabelGeneratorStatistics:
    def test_uniform_frequencies(self):
        for q in (0.2, 0.6, 0.95):
            for y in (0, 3):
                masks = L.gen_uniform_masks(np.full(100_000, y), q, 5,
                                            np.random.default_rng(hash((y, int(q * 100))) % 2**32))
                freq = masks.mean(axis=0)
                assert freq[y] == 1.0
                for s in range(5):
                    if s != y:
                        assert abs(freq[s] - q) <= 0.01, (q, y, s, freq[s])
        _report("criterion 2a: uniform generator frequencies within +-0.01")

    def test_similarity_frequencies(self):
        wheel = L.EmotionWheel.default()
        sim = L.build_similarity(wheel)
        for name in ("fear", "happy"):
            y = wheel.names.index(name)
            masks = L.gen_similarity_masks(np.full(100_000, y), sim,
                                           np.random.default_rng(y))
            freq = masks.mean(axis=0)
            assert freq[y] == 1.0
            for s in range(5):
                if s != y:
                    assert abs(freq[s] - sim[s, y]) <= 0.01, (name, s)
        _report("criterion 2b: similarity generator matches wheel column within +-0.01")


class TestCriterion3WheelGeometry:
    def test_geometry(self):
        wheel = L.EmotionWheel.default()
        sim = L.build_similarity(wheel)
        np.testing.assert_allclose(sim, sim.T, atol=0)
        np.testing.assert_allclose(np.diag(sim), 1.0, atol=0)
        assert sim.min() == 0.0
        for i in range(5):
            for j in range(5):
                ri, ai = wheel.radii[i], math.radians(wheel.angles_deg[i])
                rj, aj = wheel.radii[j], math.radians(wheel.angles_deg[j])
                cart = math.hypot(ri * math.cos(ai) - rj * math.cos(aj),
                                  ri * math.sin(ai) - rj * math.sin(aj))
                assert abs(L.emotion_distance(i, j, wheel) - cart) <= 1e-12
        _report("criterion 3: wheel geometry exact (sym, diag 1, min 0, dist vs Cartesian)")


class TestCriterion4ShapeContract:
    def test_table_chain(self):
        model = Backbone(BackboneConfig(), rng=np.random.default_rng(0)).eval()
        x = np.random.default_rng(1).random((1, 310))
        p = model.params
        h1 = K.conv1d(K.constant(x[None]), p["conv1.weight"], p["conv1.bias"])
        assert h1.shape == (1, 5, 308)
        h2 = K.conv1d(h1, p["conv2.weight"], p["conv2.bias"])
        assert h2.shape == (1, 10, 306)
        emb = model.encode(x)
        assert emb.shape == (3060,)
        assert model.classify(emb).shape == (5,)
        _report("criterion 4: shape chain (1,310)->(5,308)->(10,306)->3060->5")


class TestCriterion5Confinement:
    @pytest.mark.parametrize("method,kwargs", [
        ("proden", {}), ("cavl", {}), ("cr", {}), ("pico", {})])
    def test_thirty_epoch_run_confined(self, confinement_dataset, method, kwargs):
        cands = L.generate_for_labels(confinement_dataset.labels, "uniform",
                                      q=0.6, seed=11)
        spec = H.RunSpec(method=M.MethodConfig(method, ld=True, **kwargs),
                         epochs=30, q=0.6, seed=11, eval_each_epoch=False)
        result = H.train_run(spec, confinement_dataset, cands)
        assert result.counters["violations"] == 0
        _report(f"criterion 5: confinement over 30 epochs [{method}]",
                f"violations=0, fallbacks={result.counters['fallbacks']}")


class TestCriterion6EndToEndLearning:
    def test_desk_scale_learning(self, desk_dataset):
        budgets = {}
        start = time.perf_counter()
        sup = H.train_run(H.RunSpec(method=M.MethodConfig("supervised"), epochs=30,
                                    ambiguity="none", seed=0, eval_each_epoch=False),
                          desk_dataset)
        budgets["supervised"] = time.perf_counter() - start
        assert sup.accuracy >= 90.0, f"supervised {sup.accuracy:.1f}% < 90%"

        start = time.perf_counter()
        acc02, acc95 = [], []
        for seed in range(5):
            c02 = L.generate_for_labels(desk_dataset.labels, "uniform", q=0.2, seed=seed)
            acc02.append(H.train_run(
                H.RunSpec(method=M.MethodConfig("dnpl"), epochs=30, q=0.2, seed=seed,
                          eval_each_epoch=False), desk_dataset, c02).accuracy)
            c95 = L.generate_for_labels(desk_dataset.labels, "uniform", q=0.95, seed=seed)
            acc95.append(H.train_run(
                H.RunSpec(method=M.MethodConfig("dnpl"), epochs=30, q=0.95, seed=seed,
                          eval_each_epoch=False), desk_dataset, c95).accuracy)
        budgets["dnpl"] = time.perf_counter() - start

        assert abs(acc02[0] - sup.accuracy) <= 5.0, \
            f"dnpl q=0.2 {acc02[0]:.1f}% vs supervised {sup.accuracy:.1f}%"
        assert np.mean(acc02) > np.mean(acc95), (acc02, acc95)
        for method, seconds in budgets.items():
            assert seconds <= 900.0, f"{method} took {seconds:.0f}s (> 15 min)"
        _report("criterion 6: end-to-end learning",
                f"sup {sup.accuracy:.1f}%, dnpl q=0.2 {np.mean(acc02):.1f}%, "
                f"q=0.95 {np.mean(acc95):.1f}%; "
                f"{', '.join(f'{m} {s:.0f}s' for m, s in budgets.items())}")


class TestCriterion7Reductions:
    def test_q_zero_losses_equal_supervised_ce(self, desk_dataset):
        rng = np.random.default_rng(3)
        rows = rng.choice(desk_dataset.num_samples, size=8, replace=False)
        x = desk_dataset.features[rows]
        truth = desk_dataset.labels[rows]
        masks = L.gen_uniform_masks(truth, 0.0, 5, rng)  # q=0 -> singletons
        assert np.array_equal(masks.sum(axis=1), np.ones(8))
        onehot = masks.astype(np.float64)

        model = Backbone(BackboneConfig(), rng=np.random.default_rng(4)).eval()
        logits = model.classify(model.encode(x))
        supervised = M.supervised_ce_loss(logits, onehot).item()

        dnpl = M.dnpl_loss(logits, masks).item()
        proden_dist, _ = M.proden_disambiguate(logits.value, masks, ld=True)
        proden = M.cross_entropy_pll(logits, proden_dist).item()
        cavl_dist, _ = M.cavl_disambiguate(logits.value, masks, ld=True)
        cavl = M.cross_entropy_pll(logits, cavl_dist).item()
        pico_target = M.pico_prototype_label(
            model.project(model.encode(x)).value, np.zeros((5, 64)), masks)
        pico = M.cross_entropy_pll(logits, pico_target).item()
        pico_uniform = M.cross_entropy_pll(logits, L.uniformize_batch(masks)).item()

        for name, value in [("dnpl", dnpl), ("proden", proden), ("cavl", cavl),
                            ("pico ld", pico), ("pico no-ld", pico_uniform)]:
            assert abs(value - supervised) <= 1e-9, f"{name}: {value} vs {supervised}"
        _report("criterion 7: q=0 reductions to supervised CE within 1e-9")


class TestCriterion8CRWarmup:
    def test_epoch_zero_and_full_candidates(self):
        rng = np.random.default_rng(5)
        views = [K.Tensor(rng.normal(size=(4, 5))) for _ in range(3)]
        masks = (rng.random((4, 5)) < 0.5).astype(np.float64)
        masks[:, 0] = 1
        refined, _ = M.cr_refine([v.value for v in views], masks)
        total = M.cr_loss(views, masks, refined, 0, 30, ld=True).item()
        p0 = M.np_softmax(views[0].value)
        ls = -((1 - masks) * np.log(np.clip(1 - p0, 1e-7, 1))).sum(-1).mean()
        assert total == ls

        full = M.cr_loss(views, np.ones((4, 5)), None, 0, 30, ld=True).item()
        assert full == 0.0
        _report("criterion 8: CR warm-up exact at t=0; L_s exactly 0 on full sets")


class TestCriterion9PicoState:
    def test_prototypes_and_queue_after_every_step(self, confinement_dataset):
        cands = L.generate_for_labels(confinement_dataset.labels, "uniform",
                                      q=0.6, seed=13)
        masks_all = L.masks_matrix(cands)
        sub = confinement_dataset.subject_indices(0)
        folds = D.assign_folds(confinement_dataset)[sub]
        train_rows = sub[folds != 1]
        x = confinement_dataset.features[train_rows]
        masks = masks_all[train_rows]

        cfg = M.MethodConfig("pico", ld=True)  # N_q = 1000
        runtime = M.MethodRuntime(cfg, BackboneConfig(feature_len=60),
                                  np.random.default_rng(0),
                                  state_rng=np.random.default_rng(1))
        opt = K.OptimizerState(lr=0.01, schedule="cosine", total_epochs=2)
        shuffle = np.random.default_rng(2)
        dropout = np.random.default_rng(3)
        augment = np.random.default_rng(4)
        steps = 0
        for epoch in range(2):
            opt.set_epoch(epoch)
            for idx in H.make_batches(len(train_rows), 8, shuffle):
                runtime.model.train()
                loss, _ = runtime.step(x[idx], masks[idx], None, epoch=epoch,
                                       total_epochs=2, dropout_rng=dropout,
                                       augment_rng=augment)
                K.sgd_step(runtime.params, K.grads_of(loss, runtime.params), opt)
                steps += 1
                state = runtime.state
                assert state.queue.shape[0] == 1000
                updated = state.proto_updated
                assert updated.any()
                norms = np.linalg.norm(state.prototypes[updated], axis=-1)
                assert np.all(np.abs(norms - 1.0) <= 1e-6), norms
        _report("criterion 9: PiCO prototypes unit-norm and N_q=1000",
                f"checked after each of {steps} steps")


class TestCriterion10ReferenceNumbers:
    def test_reporter_renders_stored_reference(self, tmp_path):
        paths = H.write_report(H.AggregateTable(), tmp_path, with_reference=True)
        text = (tmp_path / "results.txt").read_text()
        assert ref.REFERENCE_NOTE in text
        assert "63.08(13.87)" in text    # fully supervised benchmark row
        assert "49.44(15.85)" in text    # naive method at q=0.95
        assert ref.REFERENCE_SOURCE.split(",")[0] in text
        rows = H.load_report_csv(paths["reference_csv"])
        assert {r["table"] for r in rows} == {"comparison", "lw-settings", "pico-settings"}
        _report("criterion 10a: reporter renders cited reference numbers")

    def test_readme_states_scope_and_loader(self):
        import pathlib
        readme = pathlib.Path(__file__).resolve().parents[1] / "README.md"
        text = readme.read_text().lower()
        assert "seed-v" in text
        assert "not reproducible" in text or "not-reproducible" in text
        assert "load" in text and "csv" in text
        _report("criterion 10b: README states non-reproducibility and loader path")


class TestCriterion11Determinism:
    def test_train_cli_byte_identical(self, tmp_path):
        data = tmp_path / "data.csv"
        assert cli_main(["gen-data", "--subjects", "1", "--segments", "2",
                         "--feature-len", "20", "--noise", "0.2", "--seed", "5",
                         "--out", str(data)]) == 0
        labels_path = tmp_path / "labels.csv"
        assert cli_main(["gen-labels", "--mode", "uniform", "--q", "0.6",
                         "--data", str(data), "--seed", "5",
                         "--out", str(labels_path)]) == 0
        args = ["train", "--method", "pico", "--ld", "--data", str(data),
                "--labels", str(labels_path), "--fold", "2", "--seed", "9",
                "--epochs", "2"]
        first, second = tmp_path / "r1", tmp_path / "r2"
        assert cli_main(args + ["--out", str(first)]) == 0
        assert cli_main(args + ["--out", str(second)]) == 0
        bytes_a = (first / "result.json").read_bytes()
        bytes_b = (second / "result.json").read_bytes()
        assert bytes_a == bytes_b
        _report("criterion 11: repeated train invocations byte-identical")
