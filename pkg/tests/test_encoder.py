import math
from fractions import Fraction

import numpy as np
import pytest

from chordgen import cosine, encode
from chordgen.encoder import EMBEDDING_DIM, Embedding

from conftest import make_segment, random_segment


class TestEncode:
    def test_empty_segment_is_zero_flagged(self):
        e = encode(make_segment([], num_bars=4))
        assert e.is_zero
        assert e.norm == 0.0
        assert not e.values.any()

    def test_self_similarity(self):
        e = encode(make_segment([(60, 0, 1), (64, 1, 2)]))
        assert cosine(e, e) == pytest.approx(1.0, abs=1e-9)

    def test_single_note_feature_layout(self):
        # One beat of C4 in bar 0: weight lands in the bar-0 chroma, the
        # global chroma, and onset subdivision 0; intervals stay empty.
        e = encode(make_segment([(60, 0, 1)], num_bars=1))
        expected = np.zeros(EMBEDDING_DIM)
        expected[0] = expected[192] = expected[229] = 1.0 / math.sqrt(3.0)
        expected = expected.astype(np.float32).astype(np.float64)
        assert np.array_equal(e.values, expected)

    def test_unit_norm_after_quantization(self):
        e = encode(make_segment([(60, 0, 1), (62, 1, 1), (64, 2, 2)]))
        assert abs(e.norm - 1.0) < 1e-6  # float32 grid
        assert abs(float(np.linalg.norm(e.values)) - 1.0) < 1e-6

    def test_disjoint_support_gives_zero_cosine(self):
        a = encode(make_segment([(60, 0, 1)], num_bars=1))  # pc 0, subdivision 0
        b = encode(make_segment([(66, 1, 1)], num_bars=1))  # pc 6, subdivision 3
        assert cosine(a, b) == pytest.approx(0.0, abs=1e-9)

    def test_zero_flag_cosine_is_zero(self):
        z = encode(make_segment([], num_bars=1))
        e = encode(make_segment([(60, 0, 1)]))
        assert cosine(e, z) == 0.0
        assert cosine(z, z) == 0.0

    def test_determinism_bit_identical(self):
        segment = make_segment([(60, 0, 1), (67, Fraction(3, 2), Fraction(1, 2))])
        assert np.array_equal(encode(segment).values, encode(segment).values)

    def test_non_negative_features_and_cosine_range(self, rng):
        embeddings = []
        for _ in range(30):
            seg = random_segment(rng)
            e = encode(seg)
            assert (e.values >= 0).all()
            if not e.is_zero:
                embeddings.append(e)
        for i in range(0, len(embeddings) - 1, 2):
            c = cosine(embeddings[i], embeddings[i + 1])
            assert -1e-9 <= c <= 1.0 + 1e-9

    def test_locality_of_bar_edit(self):
        base_notes = [(60, 0, 1), (62, 4, 1), (64, 8, 1), (65, 12, 1)]
        changed_notes = [(60, 0, 1), (62, 4, 1), (71, 8, 1), (65, 12, 1)]  # bar 2 edited
        a = encode(make_segment(base_notes, num_bars=4)).values
        b = encode(make_segment(changed_notes, num_bars=4)).values
        # Renormalization rescales everything, so compare block supports.
        for bar in (0, 1, 3):
            block = slice(bar * 12, bar * 12 + 12)
            assert np.array_equal(a[block] != 0, b[block] != 0)
        assert not np.array_equal(a[24:36] != 0, b[24:36] != 0)  # bar 2 moved
        assert np.array_equal(a[229:241] != 0, b[229:241] != 0)  # onsets unchanged

    def test_long_segments_fold_into_global_blocks(self):
        # Bars beyond 15 have no per-bar slot but still shape the global chroma.
        notes = [(60, b * 4, 1) for b in range(16)] + [(66, 16 * 4, 1)]
        e = encode(make_segment(notes, num_bars=17))
        assert e.values[192 + 6] > 0  # pc 6 visible globally
        assert not e.values[:192].reshape(16, 12)[:, 6].any()

    def test_interval_bins_clamped(self):
        e = encode(make_segment([(40, 0, 1), (80, 1, 1), (40, 2, 1)], num_bars=1))
        vec = e.values[204:229]
        assert vec[24] > 0 and vec[0] > 0  # +40 and -40 clamp to the edges
        assert vec[1:24].sum() == 0


class TestEmbeddingType:
    def test_dimension_enforced(self):
        with pytest.raises(ValueError):
            Embedding(values=np.zeros(10), norm=0.0)

    def test_from_values_zero_vector(self):
        e = Embedding.from_values(np.zeros(EMBEDDING_DIM))
        assert e.is_zero
