"""Pointer-extractor tests: encoding shapes, masking, training, persistence."""

import logging

import numpy as np
import pytest

from narrsum import autodiff as ad
from narrsum.corpus import Document, ReportExample, Sentence, SummarySet, Vocab, RESERVED_TOKENS
from narrsum.extractor import (
    DEFAULT_MAX_STEPS,
    Extraction,
    ExtractorModel,
    load_extractions,
    prepare_extractor_examples,
    save_extractions,
    train_extractor,
)
from narrsum.oracle import OracleAlignment


def small_model(seed=0, vocab=30, e=8, h=6):
    return ExtractorModel(vocab, e, h, np.random.default_rng(seed))


def random_doc(rng, n_sentences, vocab=30, max_len=5):
    return [
        [int(rng.integers(4, vocab)) for _ in range(int(rng.integers(1, max_len + 1)))]
        for _ in range(n_sentences)
    ]


# ---------------------------------------------------------------- encoding


def test_encode_shapes():
    model = small_model()
    keys = model.encode([[4, 5, 6]])
    assert keys.shape == (2, 12)  # one sentence + stop sentinel
    keys = model.encode([[4], [5, 6], [7, 8, 9]])
    assert keys.shape == (4, 12)


def test_encode_rejects_empty():
    model = small_model()
    with pytest.raises(ValueError):
        model.encode([])
    with pytest.raises(ValueError):
        model.encode([[4], []])


def test_sentence_order_changes_representations():
    model = small_model(seed=3)
    a = model.encode([[4, 5], [6, 7]]).data
    b = model.encode([[6, 7], [4, 5]]).data
    # Same sentences, swapped order: the contextual pass must differ.
    assert not np.allclose(a[0], b[1])


# ---------------------------------------------------------------- extraction


def test_extract_single_sentence_doc():
    model = small_model(seed=1)
    ex = model.extract("r", [[4, 5, 6]])
    assert set(ex.indices) <= {0}
    assert len(ex.indices) <= 1


def test_extract_no_duplicates_over_random_models():
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        model = small_model(seed=seed, vocab=20, e=5, h=4)
        doc = random_doc(rng, int(rng.integers(1, 7)), vocab=20)
        mode = "greedy" if seed % 2 == 0 else "sample"
        ex = model.extract("r", doc, mode=mode, rng=rng)
        assert len(ex.indices) == len(set(ex.indices))
        assert all(0 <= i < len(doc) for i in ex.indices)
        assert all(np.isfinite(p) and p <= 0.0 for p in ex.step_log_probs)
        assert len(ex.step_log_probs) in (len(ex.indices), len(ex.indices) + 1)


def test_extract_respects_step_cap():
    model = small_model(seed=2, vocab=12, e=4, h=3)
    rng = np.random.default_rng(0)
    doc = random_doc(rng, 200, vocab=12, max_len=3)
    ex = model.extract("r", doc, max_steps=DEFAULT_MAX_STEPS)
    assert len(ex.indices) <= 80


def test_extract_modes_validate():
    model = small_model()
    with pytest.raises(ValueError):
        model.extract("r", [[4]], mode="beam")
    with pytest.raises(ValueError):
        model.extract("r", [[4]], mode="sample")  # rng required


def test_fallback_index_is_real_sentence():
    model = small_model(seed=5)
    doc = [[4, 5], [6], [7, 8]]
    idx = model.fallback_index(doc)
    assert 0 <= idx < len(doc)


# ---------------------------------------------------------------- training


def test_initial_loss_near_uniform():
    rng = np.random.default_rng(3)
    losses = []
    for seed in range(10):
        model = small_model(seed=seed, vocab=40, e=8, h=8)
        doc = random_doc(rng, 5, vocab=40)
        losses.append(float(model.teacher_forced_loss(doc, [0, 2]).data))
    # Masking shrinks the choice set by one per step: 6, then 5, then 4.
    expected = np.mean([np.log(6), np.log(5), np.log(4)])
    assert np.mean(losses) == pytest.approx(expected, rel=0.05)


def test_overfit_single_report():
    model = small_model(seed=11, vocab=20, e=8, h=6)
    doc = [[4, 5, 6], [7, 8], [9, 10, 11], [12]]
    data = [("r", doc, [0])]
    train_extractor(
        model, data, epochs=50, lr=0.01, batch_size=1, checkpoint_every=0,
        rng=np.random.default_rng(0),
    )
    ex = model.extract("r", doc)
    assert ex.indices == [0]


def test_training_loss_drops_sharply():
    rng = np.random.default_rng(21)
    docs = [random_doc(rng, 6, vocab=25) for _ in range(5)]
    data = [(f"r{k}", doc, sorted(rng.choice(6, size=2, replace=False).tolist())) for k, doc in enumerate(docs)]
    model = small_model(seed=13, vocab=25, e=10, h=8)
    train_log = train_extractor(
        model, data, epochs=60, lr=0.01, batch_size=3, checkpoint_every=0,
        rng=np.random.default_rng(1),
    )
    assert train_log.epoch_losses[-1] <= 0.10 * train_log.epoch_losses[0]


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(5)
        docs = [random_doc(rng, 4, vocab=20) for _ in range(3)]
        data = [(f"r{k}", d, [k % 4]) for k, d in enumerate(docs)]
        model = small_model(seed=17, vocab=20, e=6, h=5)
        train_log = train_extractor(
            model, data, epochs=3, lr=0.005, batch_size=2, checkpoint_every=0,
            rng=np.random.default_rng(2),
        )
        return train_log.epoch_losses

    assert run() == run()


def test_periodic_checkpoints_counted(tmp_path):
    rng = np.random.default_rng(31)
    docs = [random_doc(rng, 3, vocab=20) for _ in range(4)]
    data = [(f"r{k}", d, [0]) for k, d in enumerate(docs)]
    model = small_model(seed=19, vocab=20, e=5, h=4)
    saves = []
    train_log = train_extractor(
        model, data, epochs=1, batch_size=1, checkpoint_every=2,
        rng=np.random.default_rng(3),
        periodic_save=lambda: saves.append(model.save(tmp_path / "periodic.ckpt")),
    )
    assert train_log.periodic_saves == 2
    assert len(saves) == 2
    assert (tmp_path / "periodic.ckpt").exists()


def test_lr_halves_on_plateau():
    doc = [[4, 5], [6, 7]]
    # Conflicting targets on the same document put a floor under the loss,
    # so validation stops improving and the schedule must fire.
    data = [("a", doc, [0]), ("b", doc, [1])]
    model = small_model(seed=23, vocab=20, e=5, h=4)
    train_log = train_extractor(
        model, data, epochs=15, lr=0.05, batch_size=2, checkpoint_every=0,
        rng=np.random.default_rng(4), validation_data=data,
    )
    assert train_log.lr_history[-1] < 0.05


def test_halve_on_plateau_rule():
    from narrsum.training import HalveOnPlateau

    opt = ad.Adam({"x": ad.param(0.0)}, lr=1.0)
    schedule = HalveOnPlateau(opt, 0.5)
    assert not schedule.epoch_end(2.0)
    assert not schedule.epoch_end(1.5)
    assert schedule.epoch_end(1.5)  # equal is not an improvement
    assert opt.lr == 0.5
    assert not schedule.epoch_end(1.0)
    assert opt.lr == 0.5


def test_train_requires_data():
    model = small_model()
    with pytest.raises(ValueError):
        train_extractor(model, [], epochs=1, rng=np.random.default_rng(0))


# ---------------------------------------------------------------- data prep


def _vocab():
    return Vocab.from_list(list(RESERVED_TOKENS) + ["alpha", "beta", "gamma"])


def test_prepare_examples_joins_and_skips(caplog):
    sents = [Sentence(("alpha", "beta"), (0, 1)), Sentence(("gamma",), (0, 1))]
    doc1 = Document("r1", sents, "r1.txt")
    doc2 = Document("r2", sents[:1], "r2.txt")
    examples = [
        ReportExample(doc1, SummarySet("r1", [])),
        ReportExample(doc2, SummarySet("r2", [])),
    ]
    alignments = [
        OracleAlignment("r1", 0, [(0, 1, 1.0)], [1]),
        OracleAlignment("r2", 0, [], []),
        OracleAlignment("ghost", 0, [(0, 0, 1.0)], [0]),
    ]
    with caplog.at_level(logging.WARNING):
        prepared = prepare_extractor_examples(examples, alignments, _vocab())
    assert len(prepared) == 1
    rid, ids, targets = prepared[0]
    assert rid == "r1" and targets == [1]
    assert ids == [[4, 5], [6]]
    assert any("ghost" in r.message for r in caplog.records)
    assert any("empty extraction targets" in r.message for r in caplog.records)


# ---------------------------------------------------------------- persistence


def test_checkpoint_round_trip(tmp_path):
    model = small_model(seed=29)
    doc = [[4, 5, 6], [7, 8]]
    before = model.extract("r", doc)
    path = tmp_path / "extractor.ckpt"
    model.save(path, vocab=list(RESERVED_TOKENS))
    loaded, vocab = ExtractorModel.load(path)
    assert vocab == list(RESERVED_TOKENS)
    after = loaded.extract("r", doc)
    assert before == after
    for name, p in model.params.items():
        assert np.array_equal(p.data, loaded.params[name].data)


def test_checkpoint_kind_checked(tmp_path):
    path = tmp_path / "other.ckpt"
    ad.save_checkpoint(path, {"w": ad.param(np.ones(3))}, {"kind": "abstractor"})
    with pytest.raises(ValueError):
        ExtractorModel.load(path)


def test_extraction_jsonl_round_trip(tmp_path):
    items = [
        Extraction("r1", [0, 2], [-0.1, -0.5, -0.01]),
        Extraction("r2", [], [-0.7]),
    ]
    path = tmp_path / "extractions.jsonl"
    save_extractions(items, path)
    assert load_extractions(path) == items
    first = path.read_bytes()
    save_extractions(items, path)
    assert path.read_bytes() == first
