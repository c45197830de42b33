#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ornatag/error.hpp"
#include "ornatag/rational.hpp"

namespace ornatag {

// One observation symbol: spelled pitch plus a duration in quarter lengths
// (a quarter note is 1, a whole note 4, an eighth 1/2).
struct Note {
    char step = 'C';      // one of C D E F G A B
    int alteration = 0;   // semitones, -2..+2
    int octave = 4;       // scientific pitch notation, 0..9
    Rational duration{1};

    friend bool operator==(const Note&, const Note&) = default;
};

// MIDI key number of the spelled pitch (C4 = 60).
int midi_number(const Note& note);

// Sharp spelling of a MIDI key number, e.g. 61 -> C#4.
Note note_from_midi(int midi, Rational duration);

// Throws Error when a field is out of range or the pitch leaves [12, 127].
void validate(const Note& note);

struct Melody {
    std::vector<Note> notes;

    std::size_t size() const { return notes.size(); }
    const Note& operator[](std::size_t i) const { return notes[i]; }
    friend bool operator==(const Melody&, const Melody&) = default;
};

// Tag indices aligned with a melody; values index into a TagSet.
using StateSequence = std::vector<int>;

class TagSet {
public:
    TagSet() = default;
    // Throws InvalidTagSet on duplicates, bad identifiers, or fewer than two tags.
    explicit TagSet(std::vector<std::string> tags);

    int size() const { return static_cast<int>(tags_.size()); }
    const std::string& name(int index) const { return tags_.at(static_cast<std::size_t>(index)); }
    const std::vector<std::string>& names() const { return tags_; }
    std::optional<int> index_of(std::string_view tag) const;

    friend bool operator==(const TagSet& a, const TagSet& b) { return a.tags_ == b.tags_; }

private:
    std::vector<std::string> tags_;
    std::unordered_map<std::string, int> index_;
};

bool is_tag_identifier(std::string_view text);

struct TaggedMelody {
    Melody melody;
    StateSequence tags;

    friend bool operator==(const TaggedMelody&, const TaggedMelody&) = default;
};

struct TaggedCorpus {
    TagSet tagset;
    std::vector<TaggedMelody> entries;

    std::size_t token_count() const;
};

// Canonical note token `step [accidental] octave ':' duration`, e.g. `C#4:3/2`.
// `line` and `column` locate the token for error reporting.
Note parse_note(std::string_view token, int line = 0, int column = 1);

// Compact form `c24`: letter, one octave digit, integer duration digits.
Note parse_legacy_note(std::string_view token, int line = 0, int column = 1);

std::string serialize_note(const Note& note);

TagSet parse_tagset(std::string_view text);
std::string serialize_tagset(const TagSet& tagset);

Melody parse_melody(std::string_view text);
std::string serialize_melody(const Melody& melody);

// CoNLL-style `note<TAB>tag` lines, blank line between melodies.
TaggedCorpus parse_corpus(std::string_view text, const TagSet& tagset);
std::string serialize_corpus(const TaggedCorpus& corpus);

// Whole-file helpers; throw std::runtime_error when the file cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace ornatag
