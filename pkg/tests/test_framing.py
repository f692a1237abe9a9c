import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caae_ids.can_core import CanMessage, MessageFlag
from caae_ids.corpus import synthetic_corpus
from caae_ids.errors import CheckpointError, ConfigError, InsufficientData, ShapeError
from caae_ids.framing import (
    ABNORMAL,
    NORMAL,
    Frame,
    SplitConfig,
    build_frames,
    crop_frame,
    group_by_class,
    leave_one_out,
    load_frames,
    pad_frame,
    save_frames,
    split_dataset,
    stack_padded,
)
from caae_ids.traffic_sim import simulate_capture


def messages(ids, injected=()):
    flagged = set(injected)
    return [
        CanMessage(0.001 * k, int(i), b"", MessageFlag.INJECTED if k in flagged else MessageFlag.NORMAL)
        for k, i in enumerate(ids)
    ]


def brute_force_labels(msgs, stride=29):
    # independent recount: scan each window message by message
    labels = []
    start = 0
    while start + 29 <= len(msgs):
        hit = False
        for m in msgs[start:start + 29]:
            if m.flag is MessageFlag.INJECTED:
                hit = True
        labels.append(1 if hit else 0)
        start += stride
    return labels


class TestBuildFrames:
    def test_two_normal_frames(self):
        frames = build_frames(messages(range(58)))
        assert len(frames) == 2 and all(f.label == NORMAL for f in frames)

    def test_one_injected_makes_abnormal(self):
        frames = build_frames(messages(range(29), injected=[17]), attack_kind="dos")
        assert len(frames) == 1
        assert frames[0].label == ABNORMAL and frames[0].attack_kind == "dos"

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            build_frames(messages(range(28)))

    def test_remainder_dropped(self):
        assert len(build_frames(messages(range(29 * 3 + 28)))) == 3

    def test_rows_are_id_bits(self, rng):
        ids = rng.integers(0, 2**29, size=29)
        frame = build_frames(messages(ids))[0]
        for row, value in zip(frame.bits, ids):
            assert int("".join(map(str, row)), 2) == value

    def test_stride(self):
        frames = build_frames(messages(range(40)), stride=5)
        assert len(frames) == 3
        assert frames[1].bits[0].tolist() == build_frames(messages(range(40)))[0].bits[5].tolist()

    def test_bad_stride(self):
        with pytest.raises(ConfigError):
            build_frames(messages(range(40)), stride=0)

    @settings(max_examples=60)
    @given(st.integers(29, 300), st.integers(1, 40), st.data())
    def test_label_conservation(self, n, stride, data):
        injected = data.draw(st.sets(st.integers(0, n - 1), max_size=n // 4))
        msgs = messages(range(n), injected)
        frames = build_frames(msgs, stride=stride)
        assert [f.label for f in frames] == brute_force_labels(msgs, stride)

    def test_label_conservation_on_simulated_capture(self):
        msgs = simulate_capture("dos", duration=20.0, seed=1)
        frames = build_frames(msgs, attack_kind="dos")
        assert [f.label for f in frames] == brute_force_labels(msgs)

    def test_frame_validation(self):
        with pytest.raises(ShapeError):
            Frame(np.zeros((28, 29), dtype=np.uint8), 0)
        with pytest.raises(ConfigError):
            Frame(np.zeros((29, 29), dtype=np.uint8), 2)


class TestPadding:
    def test_zero(self):
        assert not pad_frame(np.zeros((29, 29))).any()

    def test_ones(self):
        out = pad_frame(np.ones((29, 29)))
        assert out.shape == (32, 32)
        assert out[:29, :29].all() and out[29:].sum() == 0 and out[:, 29:].sum() == 0

    @given(st.integers(0, 2**32 - 1))
    def test_crop_inverts_pad(self, seed):
        bits = np.random.default_rng(seed).integers(0, 2, size=(29, 29))
        assert np.array_equal(crop_frame(pad_frame(bits)), bits)

    def test_stack_padded(self, rng):
        frames = [Frame(rng.integers(0, 2, size=(29, 29)).astype(np.uint8), 0) for _ in range(3)]
        batch = stack_padded(frames)
        assert batch.shape == (3, 1, 32, 32)
        for f, x in zip(frames, batch):
            assert np.array_equal(x[0], pad_frame(f))


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus(n_messages=30_000, seed=3)


def keys(frames):
    return [f.key for f in frames]


class TestSplit:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SplitConfig(0.7, 0.2, 0.2)
        with pytest.raises(ConfigError):
            SplitConfig(train_ratio=0.0)
        with pytest.raises(ConfigError):
            SplitConfig(label_ratio=1.5)
        SplitConfig(label_ratio=1.0, train_ratio=1.0)

    def test_disjoint_and_complete(self, corpus):
        b = split_dataset(corpus, SplitConfig(seed=2))
        train, val, test = set(keys(b.unlabeled)), set(keys(b.val)), set(keys(b.test))
        assert not (train & val) and not (train & test) and not (val & test)
        assert len(train) + len(val) + len(test) == sum(len(v) for v in corpus.values())
        assert set(keys(b.labeled)) <= train

    def test_normal_fractions(self, corpus):
        b = split_dataset(corpus, SplitConfig(seed=2))
        n = len(corpus["normal"])
        count = lambda frames: sum(f.attack_kind == "normal" for f in frames)
        assert count(b.unlabeled) == round(0.7 * n)
        assert count(b.val) == round(0.15 * n)
        assert count(b.test) == n - round(0.7 * n) - round(0.15 * n)

    def test_attack_ratios(self, corpus):
        cfg = SplitConfig(train_ratio=0.1, label_ratio=0.1, seed=2)
        b = split_dataset(corpus, cfg)
        for kind in ("dos", "fuzzy", "gear", "rpm"):
            n = len(corpus[kind])
            n_train = sum(f.attack_kind == kind for f in b.unlabeled)
            assert n_train == round(0.1 * n)
            assert sum(f.attack_kind == kind for f in b.labeled) == round(0.1 * n_train)

    def test_deterministic(self, corpus):
        a = split_dataset(corpus, SplitConfig(seed=4))
        b = split_dataset(corpus, SplitConfig(seed=4))
        for part in ("labeled", "unlabeled", "val", "test"):
            assert keys(getattr(a, part)) == keys(getattr(b, part))

    def test_full_label_ratio(self, corpus):
        b = split_dataset(corpus, SplitConfig(label_ratio=1.0, seed=1))
        assert sorted(keys(b.labeled)) == sorted(keys(b.unlabeled))

    @pytest.mark.parametrize("low,high", [(0.1, 0.4), (0.2, 0.5), (0.4, 1.0)])
    def test_label_monotonicity(self, corpus, low, high):
        a = split_dataset(corpus, SplitConfig(label_ratio=low, seed=8))
        b = split_dataset(corpus, SplitConfig(label_ratio=high, seed=8))
        assert set(keys(a.labeled)) <= set(keys(b.labeled))
        assert keys(a.test) == keys(b.test)

    def test_empty_class(self, corpus):
        with pytest.raises(ConfigError):
            split_dataset({**corpus, "dos": []}, SplitConfig())

    def test_class_without_labels(self, corpus):
        tiny = {**corpus, "dos": corpus["dos"][:3]}
        with pytest.raises(ConfigError):
            split_dataset(tiny, SplitConfig(train_ratio=0.1, label_ratio=0.1))

    def test_reference_training_settings(self):
        # Preprocessed HCRL frame counts and the resulting labeled counts
        # at train_ratio = label_ratio = 0.1 (published: 400 / 450 / 650 / 700).
        counts = {"dos": 37_451, "fuzzy": 44_486, "gear": 65_283, "rpm": 71_372}
        published = {"dos": 400, "fuzzy": 450, "gear": 650, "rpm": 700}
        for kind, n in counts.items():
            labeled = round(round(n * 0.1) * 0.1)
            assert labeled == pytest.approx(published[kind], rel=0.1)
        total = sum(round(round(n * 0.1) * 0.1) for n in counts.values())
        assert total == pytest.approx(2_200, rel=0.05)


@pytest.fixture(scope="module")
def bundle(corpus):
    return split_dataset(corpus, SplitConfig(train_ratio=0.3, label_ratio=0.1, seed=5))


class TestLeaveOneOut:
    def test_removes_kind_labels(self, bundle):
        loo = leave_one_out(bundle, "dos")
        assert loo.labeled_kinds() == {"normal", "fuzzy", "gear", "rpm"}
        assert keys(loo.unlabeled) == keys(bundle.unlabeled)

    def test_partitions(self, bundle):
        loo = leave_one_out(bundle, "dos")
        unknown, known = loo.unknown_test(), loo.known_test()
        assert {f.attack_kind for f in unknown} == {"normal", "dos"}
        assert "dos" not in {f.attack_kind for f in known}
        normal = [f.key for f in bundle.test if f.attack_kind == "normal"]
        attack = set(keys(unknown) + keys(known)) - set(normal)
        assert attack == {f.key for f in bundle.test if f.attack_kind != "normal"}
        assert not (set(keys(unknown)) - set(normal)) & (set(keys(known)) - set(normal))

    def test_inverse(self, bundle):
        loo = leave_one_out(bundle, "gear")
        restored = sorted(keys(loo.labeled) + keys(loo.withheld))
        assert restored == sorted(keys(bundle.labeled))

    @pytest.mark.parametrize("kind", ["normal", "replay"])
    def test_bad_kind(self, bundle, kind):
        with pytest.raises(ConfigError):
            leave_one_out(bundle, kind)

    def test_twice(self, bundle):
        with pytest.raises(ConfigError):
            leave_one_out(leave_one_out(bundle, "rpm"), "rpm")

    def test_no_held_out(self, bundle):
        with pytest.raises(ConfigError):
            bundle.unknown_test()


class TestFrameCache:
    def test_round_trip(self, tmp_path, corpus):
        frames = [f for group in corpus.values() for f in group[:50]]
        path = tmp_path / "x.frames"
        save_frames(frames, path)
        back = load_frames(path)
        assert len(back) == len(frames)
        for a, b in zip(frames, back):
            assert np.array_equal(a.bits, b.bits)
            assert (a.label, a.attack_kind) == (b.label, b.attack_kind)
        assert [f.window_index for f in back] == list(range(len(frames)))
        assert {f.source for f in back} == {"x"}
        assert path.stat().st_size == 12 + 108 * len(frames)

    def test_empty(self, tmp_path):
        save_frames([], tmp_path / "e.frames")
        assert load_frames(tmp_path / "e.frames") == []

    def test_corruption(self, tmp_path, corpus):
        path = tmp_path / "c.frames"
        save_frames(corpus["normal"][:3], path)
        raw = path.read_bytes()
        (tmp_path / "t.frames").write_bytes(raw[:-1])
        (tmp_path / "m.frames").write_bytes(b"XXXX" + raw[4:])
        for name in ("t.frames", "m.frames"):
            with pytest.raises(CheckpointError):
                load_frames(tmp_path / name)

    def test_unencodable_kind(self, tmp_path):
        f = Frame(np.zeros((29, 29), dtype=np.uint8), 1, "replay")
        with pytest.raises(ConfigError):
            save_frames([f], tmp_path / "k.frames")

    def test_group_by_class(self, corpus):
        flat = [f for g in corpus.values() for f in g]
        regrouped = group_by_class(flat)
        assert {k: len(v) for k, v in regrouped.items()} == {k: len(v) for k, v in corpus.items()}
