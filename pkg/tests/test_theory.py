from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chordgen import (
    CHORD_VOCABULARY,
    ChordQuality,
    ChordSymbol,
    Key,
    Mode,
    chord_pitch_classes,
    roman_degree,
    roman_numeral,
    transpose_segment,
)

from conftest import make_segment


class TestChordSymbol:
    def test_pitch_class_sets(self):
        assert chord_pitch_classes(ChordSymbol.parse("C:maj")) == {0, 4, 7}
        assert chord_pitch_classes(ChordSymbol.parse("A:min")) == {9, 0, 4}
        assert chord_pitch_classes(ChordSymbol.parse("B:dim")) == {11, 2, 5}
        assert chord_pitch_classes(ChordSymbol.parse("C:aug")) == {0, 4, 8}

    def test_all_triads_have_three_distinct_classes(self):
        for chord in CHORD_VOCABULARY:
            assert len(chord_pitch_classes(chord)) == 3

    @given(st.integers(min_value=0, max_value=47))
    def test_index_round_trip(self, index):
        chord = ChordSymbol.from_index(index)
        assert chord.index == index
        assert ChordSymbol.parse(str(chord)) == chord

    def test_index_is_bijective(self):
        seen = {ChordSymbol.from_index(i) for i in range(48)}
        assert len(seen) == 48

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            ChordSymbol.parse("H:maj")
        with pytest.raises(ValueError):
            ChordSymbol.parse("C:maj7")
        with pytest.raises(ValueError):
            ChordSymbol.parse("Cmaj")

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            ChordSymbol.from_index(48)
        with pytest.raises(ValueError):
            ChordSymbol.from_index(-1)


class TestRomanDegree:
    def test_dominant_in_c_major(self):
        assert roman_degree(ChordSymbol.parse("G:maj"), Key(0, Mode.MAJOR)) == 5

    def test_tonic_in_c_major(self):
        assert roman_degree(ChordSymbol.parse("C:maj"), Key(0, Mode.MAJOR)) == 1

    def test_chromatic_chord_is_absent(self):
        assert roman_degree(ChordSymbol.parse("F#:maj"), Key(0, Mode.MAJOR)) is None

    def test_wrong_quality_is_absent(self):
        # G minor sits on a scale step of C major but is not the diatonic triad.
        assert roman_degree(ChordSymbol.parse("G:min"), Key(0, Mode.MAJOR)) is None

    def test_harmonic_minor_dominant(self):
        # In A minor both the natural v and the raised V count as degree 5.
        key = Key(9, Mode.MINOR)
        assert roman_degree(ChordSymbol.parse("E:min"), key) == 5
        assert roman_degree(ChordSymbol.parse("E:maj"), key) == 5
        assert roman_degree(ChordSymbol.parse("E:dim"), key) is None

    def test_key_relativity_exhaustive(self):
        # roman_degree commutes with transposition for every chord/key/shift.
        for index in range(48):
            chord = ChordSymbol.from_index(index)
            for tonic in range(0, 12, 5):
                for mode in Mode:
                    key = Key(tonic, mode)
                    base = roman_degree(chord, key)
                    for k in range(12):
                        assert roman_degree(chord.transpose(k), key.transpose(k)) == base

    def test_roman_numeral_formatting(self):
        key = Key(0, Mode.MAJOR)
        assert roman_numeral(ChordSymbol.parse("G:maj"), key) == "V"
        assert roman_numeral(ChordSymbol.parse("D:min"), key) == "ii"
        assert roman_numeral(ChordSymbol.parse("B:dim"), key) == "vii°"
        assert roman_numeral(ChordSymbol.parse("F#:maj"), key) is None


class TestTransposeSegment:
    def test_identity(self):
        segment = make_segment([(60, 0, 1), (64, 1, 1)])
        assert transpose_segment(segment, 0) == segment

    def test_octave_shift(self):
        segment = make_segment([(60, 0, 1)])
        shifted = transpose_segment(segment, 12)
        assert shifted.notes[0].pitch == 72
        assert shifted.notes[0].onset_beats == segment.notes[0].onset_beats
        assert shifted.key.tonic == segment.key.tonic

    def test_out_of_range(self):
        segment = make_segment([(120, 0, 1)])
        with pytest.raises(ValueError):
            transpose_segment(segment, 12)

    @given(st.integers(min_value=-24, max_value=24))
    def test_round_trip(self, k):
        segment = make_segment([(60, 0, 1), (67, 2, Fraction(1, 2))])
        if not all(0 <= n.pitch + k <= 127 for n in segment.notes):
            return
        assert transpose_segment(transpose_segment(segment, k), -k) == segment

    def test_key_tonic_shifts_mod_12(self):
        segment = make_segment([(60, 0, 1)], key=Key(11, Mode.MINOR))
        assert transpose_segment(segment, 3).key == Key(2, Mode.MINOR)


class TestSegmentInvariants:
    def test_notes_must_fit(self):
        with pytest.raises(ValueError):
            make_segment([(60, 15, 2)], num_bars=4)

    def test_phrase_boundaries_validated(self):
        with pytest.raises(ValueError):
            make_segment([(60, 0, 1)], num_bars=4, phrases=(0, 2, 2, 4))
        with pytest.raises(ValueError):
            make_segment([(60, 0, 1)], num_bars=4, phrases=(1, 4))

    def test_quality_enum_labels(self):
        assert [q.label for q in ChordQuality] == ["maj", "min", "dim", "aug"]
