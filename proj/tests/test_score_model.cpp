#include <doctest.h>

#include "ornatag/random.hpp"
#include "ornatag/score_model.hpp"

using namespace ornatag;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an ornatag::Error");
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("parse_note canonical tokens") {
    const Note c14 = parse_note("C1:4");
    CHECK(c14 == Note{'C', 0, 1, Rational(4)});

    const Note eighth = parse_note("A4:1/2");
    CHECK(eighth == Note{'A', 0, 4, Rational(1, 2)});

    const Note dotted = parse_note("C#4:3/2");
    CHECK(dotted == Note{'C', 1, 4, Rational(3, 2)});

    CHECK(parse_note("bb3:2") == Note{'B', -1, 3, Rational(2)});
    CHECK(parse_note("F##5:2/4").duration == Rational(1, 2));
}

TEST_CASE("parse_note errors carry kind, token and column") {
    CHECK(kind_of([] { parse_note("H2:1"); }) == ErrorKind::InvalidStep);
    CHECK(kind_of([] { parse_note("C12:1"); }) == ErrorKind::InvalidOctave);
    CHECK(kind_of([] { parse_note("C4:0"); }) == ErrorKind::InvalidDuration);
    CHECK(kind_of([] { parse_note("C4:-1"); }) == ErrorKind::InvalidDuration);
    CHECK(kind_of([] { parse_note("C4:1/0"); }) == ErrorKind::InvalidDuration);
    CHECK(kind_of([] { parse_note("C4"); }) == ErrorKind::MalformedToken);
    CHECK(kind_of([] { parse_note("C4:x"); }) == ErrorKind::MalformedToken);
    CHECK(kind_of([] { parse_note("4C:1"); }) == ErrorKind::MalformedToken);
    CHECK(kind_of([] { parse_note("Cb0:1"); }) == ErrorKind::PitchOutOfRange);

    try {
        parse_note("H2:1", 7, 12);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.token() == "H2:1");
        CHECK(e.line() == 7);
        CHECK(e.column() == 12);
    }
}

TEST_CASE("legacy compact tokens") {
    CHECK(parse_legacy_note("c24") == Note{'C', 0, 2, Rational(4)});
    CHECK(parse_legacy_note("C14") == Note{'C', 0, 1, Rational(4)});
    CHECK(parse_legacy_note("a12") == Note{'A', 0, 1, Rational(2)});
    CHECK(parse_legacy_note("e116") == Note{'E', 0, 1, Rational(16)});
    CHECK(kind_of([] { parse_legacy_note("a1"); }) == ErrorKind::MalformedToken);
    CHECK(kind_of([] { parse_legacy_note("a1x"); }) == ErrorKind::MalformedToken);
    CHECK(kind_of([] { parse_legacy_note("h12"); }) == ErrorKind::InvalidStep);
    CHECK(kind_of([] { parse_legacy_note("a10"); }) == ErrorKind::InvalidDuration);
}

TEST_CASE("legacy and canonical readers agree where both apply") {
    for (char step : std::string("CDEFGAB")) {
        for (int octave = 1; octave <= 8; ++octave) {
            for (int duration : {1, 2, 3, 4, 8}) {
                const std::string compact = std::string(1, static_cast<char>(std::tolower(step))) +
                                            std::to_string(octave) + std::to_string(duration);
                const std::string canonical =
                    std::string(1, step) + std::to_string(octave) + ":" + std::to_string(duration);
                CHECK(parse_legacy_note(compact) == parse_note(canonical));
            }
        }
    }
}

TEST_CASE("serialize_note renders accidentals and reduced durations") {
    CHECK(serialize_note(Note{'C', 0, 1, Rational(4)}) == "C1:4");
    CHECK(serialize_note(Note{'A', 0, 4, Rational(1, 2)}) == "A4:1/2");
    CHECK(serialize_note(Note{'B', -1, 3, Rational(2)}) == "Bb3:2");
    CHECK(serialize_note(Note{'F', 2, 5, Rational(6, 4)}) == "F##5:3/2");
}

TEST_CASE("note round trip over random valid notes") {
    Rng rng(2024);
    int checked = 0;
    while (checked < 2000) {
        Note note{"CDEFGAB"[rng.uniform_int(0, 6)], rng.uniform_int(-2, 2), rng.uniform_int(0, 9),
                  Rational(rng.uniform_int(1, 64), rng.uniform_int(1, 16))};
        const int midi = midi_number(note);
        if (midi < 12 || midi > 127) continue;
        const std::string text = serialize_note(note);
        CHECK(parse_note(text) == note);
        CHECK(serialize_note(parse_note(text)) == text);
        ++checked;
    }
}

TEST_CASE("midi numbers and sharp spelling") {
    CHECK(midi_number(parse_note("C4:1")) == 60);
    CHECK(midi_number(parse_note("A4:1")) == 69);
    CHECK(midi_number(parse_note("C0:1")) == 12);
    CHECK(midi_number(parse_note("G9:1")) == 127);
    for (int midi = 12; midi <= 127; ++midi) CHECK(midi_number(note_from_midi(midi, Rational(1))) == midi);
}

TEST_CASE("tag sets") {
    const TagSet tags = parse_tagset("# techniques\nnone\ntrills  # wavy\n\nmordent\n");
    CHECK(tags.size() == 3);
    CHECK(tags.index_of("trills") == 1);
    CHECK_FALSE(tags.index_of("vibrato").has_value());
    CHECK(serialize_tagset(tags) == "none\ntrills\nmordent\n");
    CHECK(kind_of([] { parse_tagset("none\nnone\n"); }) == ErrorKind::InvalidTagSet);
    CHECK(kind_of([] { parse_tagset("none\n"); }) == ErrorKind::InvalidTagSet);
    CHECK(kind_of([] { parse_tagset("none\nTrills\n"); }) == ErrorKind::InvalidTagSet);
}

TEST_CASE("melody files") {
    const Melody melody = parse_melody("# opening\nA1:2 B1:2\n  C2:4 # held\nA1:2 E1:2\n");
    CHECK(melody.size() == 5);
    CHECK(serialize_melody(melody) == "A1:2 B1:2 C2:4 A1:2 E1:2\n");
    CHECK(parse_melody(serialize_melody(melody)) == melody);
    CHECK(kind_of([] { parse_melody("# nothing\n"); }) == ErrorKind::EmptyCorpus);
    try {
        parse_melody("C4:1\nD4:1 H4:1\n");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidStep);
        CHECK(e.line() == 2);
        CHECK(e.column() == 6);
    }
}

TEST_CASE("corpus parsing") {
    const TagSet tags({"none", "trills", "mordent"});

    SUBCASE("one block") {
        const auto corpus = parse_corpus("C1:4\ttrills\nD1:2\tnone\n", tags);
        REQUIRE(corpus.entries.size() == 1);
        CHECK(corpus.entries[0].melody.size() == 2);
        CHECK(corpus.entries[0].tags == StateSequence{1, 0});
    }

    SUBCASE("unknown tag reports its line") {
        try {
            parse_corpus("C1:4\ttrills\nD1:2\tvibrato\n", tags);
            FAIL("no throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UnknownTag);
            CHECK(e.line() == 2);
        }
    }

    SUBCASE("two blocks, token count preserved") {
        const std::string text = "# corpus\nC4:1\tnone\nD4:1\ttrills\nE4:2\tnone\n\n\nF4:1\tmordent\nG4:4\ttrills\n";
        const auto corpus = parse_corpus(text, tags);
        CHECK(corpus.entries.size() == 2);
        CHECK(corpus.entries[0].melody.size() == 3);
        CHECK(corpus.entries[1].melody.size() == 2);
        CHECK(corpus.token_count() == 5);
        CHECK(serialize_corpus(corpus) == "C4:1\tnone\nD4:1\ttrills\nE4:2\tnone\n\nF4:1\tmordent\nG4:4\ttrills\n");
    }

    SUBCASE("errors") {
        CHECK(kind_of([&] { parse_corpus("C4:1\n", tags); }) == ErrorKind::LengthMismatch);
        CHECK(kind_of([&] { parse_corpus("\n# only comments\n", tags); }) == ErrorKind::EmptyCorpus);
        CHECK(kind_of([&] { parse_corpus("C4:1 none extra\n", tags); }) == ErrorKind::MalformedToken);
    }
}

TEST_CASE("corpus round trip preserves bytes and token counts") {
    const TagSet tags({"none", "trills", "mordent", "fermata"});
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        TaggedCorpus corpus{tags, {}};
        std::size_t data_lines = 0;
        const int entries = rng.uniform_int(1, 5);
        for (int e = 0; e < entries; ++e) {
            TaggedMelody entry;
            const int length = rng.uniform_int(1, 12);
            for (int t = 0; t < length; ++t) {
                entry.melody.notes.push_back(note_from_midi(rng.uniform_int(12, 127),
                                                            Rational(rng.uniform_int(1, 16), rng.uniform_int(1, 8))));
                entry.tags.push_back(rng.uniform_int(0, 3));
            }
            data_lines += static_cast<std::size_t>(length);
            corpus.entries.push_back(std::move(entry));
        }
        const std::string text = serialize_corpus(corpus);
        const auto parsed = parse_corpus(text, tags);
        CHECK(parsed.entries == corpus.entries);
        CHECK(parsed.token_count() == data_lines);
        CHECK(serialize_corpus(parsed) == text);
    }
}

TEST_CASE("rational parsing") {
    CHECK(Rational::parse("3") == Rational(3));
    CHECK(Rational::parse("6/4") == Rational(3, 2));
    CHECK(Rational::parse("0.125") == Rational(1, 8));
    CHECK(Rational::parse("-2.5") == Rational(-5, 2));
    CHECK_FALSE(Rational::parse("1/0").has_value());
    CHECK_FALSE(Rational::parse("1.").has_value());
    CHECK_FALSE(Rational::parse("abc").has_value());
    CHECK(Rational(1, 3) < Rational(1, 2));
    CHECK(Rational(4) > Rational(3));
}
