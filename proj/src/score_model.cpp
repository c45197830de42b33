#include "ornatag/score_model.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace ornatag {

std::optional<Rational> Rational::parse(std::string_view text) {
    if (text.empty()) return std::nullopt;
    bool negative = false;
    if (text.front() == '-' || text.front() == '+') {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    if (text.empty()) return std::nullopt;

    auto parse_digits = [](std::string_view digits, std::int64_t& out) {
        if (digits.empty()) return false;
        for (char c : digits)
            if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
        return ec == std::errc{} && ptr == digits.data() + digits.size();
    };

    std::int64_t num = 0;
    std::int64_t den = 1;
    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
        if (!parse_digits(text.substr(0, slash), num) || !parse_digits(text.substr(slash + 1), den))
            return std::nullopt;
        if (den == 0) return std::nullopt;
    } else if (const auto dot = text.find('.'); dot != std::string_view::npos) {
        const auto whole = text.substr(0, dot);
        const auto frac = text.substr(dot + 1);
        if (frac.empty() || frac.size() > 18) return std::nullopt;
        std::int64_t whole_value = 0;
        std::int64_t frac_value = 0;
        if (!whole.empty() && !parse_digits(whole, whole_value)) return std::nullopt;
        if (!parse_digits(frac, frac_value)) return std::nullopt;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        if (whole_value > (std::numeric_limits<std::int64_t>::max() - frac_value) / den) return std::nullopt;
        num = whole_value * den + frac_value;
    } else if (!parse_digits(text, num)) {
        return std::nullopt;
    }
    return Rational(negative ? -num : num, den);
}

namespace {

constexpr std::array<int, 7> kStepSemitone = {9, 11, 0, 2, 4, 5, 7};  // A B C D E F G

int step_semitone(char step) { return kStepSemitone[static_cast<std::size_t>(step - 'A')]; }

bool is_step(char c) { return c >= 'A' && c <= 'G'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Splits into lines, dropping a trailing '\r' on each.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (end == text.size()) break;
        start = end + 1;
    }
    return lines;
}

// Whitespace-separated fields with their 1-based columns.
std::vector<std::pair<std::string_view, int>> fields(std::string_view line) {
    std::vector<std::pair<std::string_view, int>> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        out.emplace_back(line.substr(start, i - start), static_cast<int>(start) + 1);
    }
    return out;
}

[[noreturn]] void fail(ErrorKind kind, const std::string& why, std::string_view token, int line, int column) {
    throw Error(kind, why + " in '" + std::string(token) + "'", line, column, std::string(token));
}

void check_pitch(const Note& note, std::string_view token, int line, int column) {
    const int midi = midi_number(note);
    if (midi < 12 || midi > 127)
        fail(ErrorKind::PitchOutOfRange, "MIDI number " + std::to_string(midi) + " outside [12, 127]", token, line,
             column);
}

}  // namespace

int midi_number(const Note& note) { return 12 * (note.octave + 1) + step_semitone(note.step) + note.alteration; }

Note note_from_midi(int midi, Rational duration) {
    static constexpr std::array<std::pair<char, int>, 12> kSpelling = {
        {{'C', 0}, {'C', 1}, {'D', 0}, {'D', 1}, {'E', 0}, {'F', 0},
         {'F', 1}, {'G', 0}, {'G', 1}, {'A', 0}, {'A', 1}, {'B', 0}}};
    const auto [step, alt] = kSpelling[static_cast<std::size_t>(midi % 12)];
    return Note{step, alt, midi / 12 - 1, duration};
}

void validate(const Note& note) {
    const std::string token = serialize_note(note);
    if (!is_step(note.step)) fail(ErrorKind::InvalidStep, "step must be one of C D E F G A B", token, 0, 0);
    if (note.alteration < -2 || note.alteration > 2)
        fail(ErrorKind::MalformedToken, "alteration outside [-2, 2]", token, 0, 0);
    if (note.octave < 0 || note.octave > 9) fail(ErrorKind::InvalidOctave, "octave outside [0, 9]", token, 0, 0);
    if (note.duration <= Rational(0)) fail(ErrorKind::InvalidDuration, "duration must be positive", token, 0, 0);
    check_pitch(note, token, 0, 0);
}

Note parse_note(std::string_view token, int line, int column) {
    Note note;
    std::size_t i = 0;
    auto col = [&](std::size_t offset) { return column + static_cast<int>(offset); };

    if (token.empty()) fail(ErrorKind::MalformedToken, "empty token", token, line, column);
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(token[0])));
    if (!std::isalpha(static_cast<unsigned char>(letter)))
        fail(ErrorKind::MalformedToken, "expected a step letter", token, line, col(0));
    if (!is_step(letter)) fail(ErrorKind::InvalidStep, "step must be one of C D E F G A B", token, line, col(0));
    note.step = letter;
    i = 1;

    if (token.substr(i, 2) == "##") {
        note.alteration = 2;
        i += 2;
    } else if (token.substr(i, 2) == "bb") {
        note.alteration = -2;
        i += 2;
    } else if (i < token.size() && token[i] == '#') {
        note.alteration = 1;
        i += 1;
    } else if (i < token.size() && token[i] == 'b') {
        note.alteration = -1;
        i += 1;
    }

    const std::size_t octave_start = i;
    while (i < token.size() && std::isdigit(static_cast<unsigned char>(token[i]))) ++i;
    if (i == octave_start) fail(ErrorKind::MalformedToken, "expected an octave digit", token, line, col(i));
    const auto octave_text = token.substr(octave_start, i - octave_start);
    if (octave_text.size() > 1) fail(ErrorKind::InvalidOctave, "octave outside [0, 9]", token, line, col(octave_start));
    note.octave = octave_text[0] - '0';

    if (i >= token.size() || token[i] != ':')
        fail(ErrorKind::MalformedToken, "expected ':' before the duration", token, line, col(i));
    ++i;

    const auto duration_text = token.substr(i);
    const std::size_t duration_col = i;
    if (duration_text.empty()) fail(ErrorKind::MalformedToken, "missing duration", token, line, col(i));
    for (char c : duration_text) {
        if (!std::isdigit(static_cast<unsigned char>(c)) && c != '/' && c != '-')
            fail(ErrorKind::MalformedToken, "duration must be 'int' or 'int/int'", token, line, col(duration_col));
    }
    const auto duration = Rational::parse(duration_text);
    if (!duration) {
        // A zero denominator parses as nullopt too; report it as a duration problem.
        if (duration_text.find("/0") != std::string_view::npos &&
            duration_text.find_first_not_of('0', duration_text.find('/') + 1) == std::string_view::npos)
            fail(ErrorKind::InvalidDuration, "zero denominator", token, line, col(duration_col));
        fail(ErrorKind::MalformedToken, "duration must be 'int' or 'int/int'", token, line, col(duration_col));
    }
    if (*duration <= Rational(0))
        fail(ErrorKind::InvalidDuration, "duration must be positive", token, line, col(duration_col));
    note.duration = *duration;

    check_pitch(note, token, line, column);
    return note;
}

Note parse_legacy_note(std::string_view token, int line, int column) {
    if (token.size() < 3) fail(ErrorKind::MalformedToken, "compact token needs letter, octave and duration", token, line, column);
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(token[0])));
    if (!std::isalpha(static_cast<unsigned char>(letter)))
        fail(ErrorKind::MalformedToken, "expected a step letter", token, line, column);
    if (!is_step(letter)) fail(ErrorKind::InvalidStep, "step must be one of C D E F G A B", token, line, column);
    for (std::size_t i = 1; i < token.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(token[i])))
            fail(ErrorKind::MalformedToken, "expected digits after the step letter", token, line,
                 column + static_cast<int>(i));
    }
    std::int64_t duration = 0;
    const auto tail = token.substr(2);
    auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), duration);
    if (ec != std::errc{} || ptr != tail.data() + tail.size())
        fail(ErrorKind::MalformedToken, "duration out of range", token, line, column + 2);
    if (duration == 0) fail(ErrorKind::InvalidDuration, "duration must be positive", token, line, column + 2);

    Note note{letter, 0, token[1] - '0', Rational(duration)};
    check_pitch(note, token, line, column);
    return note;
}

std::string serialize_note(const Note& note) {
    std::string out(1, note.step);
    switch (note.alteration) {
        case 2: out += "##"; break;
        case 1: out += "#"; break;
        case -1: out += "b"; break;
        case -2: out += "bb"; break;
        default: break;
    }
    out += std::to_string(note.octave);
    out += ':';
    out += note.duration.to_string();
    return out;
}

bool is_tag_identifier(std::string_view text) {
    if (text.empty()) return false;
    for (char c : text) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

TagSet::TagSet(std::vector<std::string> tags) : tags_(std::move(tags)) {
    if (tags_.size() < 2) throw Error(ErrorKind::InvalidTagSet, "a tag set needs at least two tags");
    for (std::size_t i = 0; i < tags_.size(); ++i) {
        if (!is_tag_identifier(tags_[i]))
            throw Error(ErrorKind::InvalidTagSet, "invalid tag identifier '" + tags_[i] + "'", 0, 0, tags_[i]);
        if (!index_.emplace(tags_[i], static_cast<int>(i)).second)
            throw Error(ErrorKind::InvalidTagSet, "duplicate tag '" + tags_[i] + "'", 0, 0, tags_[i]);
    }
}

std::optional<int> TagSet::index_of(std::string_view tag) const {
    const auto it = index_.find(std::string(tag));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t TaggedCorpus::token_count() const {
    std::size_t total = 0;
    for (const auto& entry : entries) total += entry.melody.size();
    return total;
}

TagSet parse_tagset(std::string_view text) {
    std::vector<std::string> tags;
    const auto lines = split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        auto line = lines[n];
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (!is_tag_identifier(line))
            throw Error(ErrorKind::InvalidTagSet, "invalid tag identifier '" + std::string(line) + "'",
                        static_cast<int>(n) + 1, 1, std::string(line));
        tags.emplace_back(line);
    }
    return TagSet(std::move(tags));
}

std::string serialize_tagset(const TagSet& tagset) {
    std::string out;
    for (const auto& tag : tagset.names()) {
        out += tag;
        out += '\n';
    }
    return out;
}

Melody parse_melody(std::string_view text) {
    Melody melody;
    const auto lines = split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        for (const auto& [token, column] : fields(lines[n])) {
            if (token.front() == '#') break;
            melody.notes.push_back(parse_note(token, static_cast<int>(n) + 1, column));
        }
    }
    if (melody.notes.empty()) throw Error(ErrorKind::EmptyCorpus, "melody has no notes");
    return melody;
}

std::string serialize_melody(const Melody& melody) {
    std::string out;
    for (std::size_t i = 0; i < melody.size(); ++i) {
        if (i > 0) out += ' ';
        out += serialize_note(melody[i]);
    }
    out += '\n';
    return out;
}

TaggedCorpus parse_corpus(std::string_view text, const TagSet& tagset) {
    TaggedCorpus corpus{tagset, {}};
    TaggedMelody current;
    auto flush = [&] {
        if (!current.melody.notes.empty()) corpus.entries.push_back(std::move(current));
        current = {};
    };

    const auto lines = split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const int line_no = static_cast<int>(n) + 1;
        const auto stripped = trim(lines[n]);
        if (stripped.empty()) {
            flush();
            continue;
        }
        if (stripped.front() == '#') continue;

        const auto parts = fields(lines[n]);
        if (parts.size() == 1)
            throw Error(ErrorKind::LengthMismatch, "note without a tag", line_no, parts[0].second,
                        std::string(parts[0].first));
        if (parts.size() > 2)
            throw Error(ErrorKind::MalformedToken, "expected 'note<TAB>tag'", line_no, parts[2].second,
                        std::string(parts[2].first));
        const auto [note_token, note_col] = parts[0];
        const auto [tag_token, tag_col] = parts[1];
        const Note note = parse_note(note_token, line_no, note_col);
        const auto tag = tagset.index_of(tag_token);
        if (!tag)
            throw Error(ErrorKind::UnknownTag, "tag '" + std::string(tag_token) + "' is not in the tag set", line_no,
                        tag_col, std::string(tag_token));
        current.melody.notes.push_back(note);
        current.tags.push_back(*tag);
    }
    flush();
    if (corpus.entries.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus has no melodies");
    return corpus;
}

std::string serialize_corpus(const TaggedCorpus& corpus) {
    std::string out;
    for (std::size_t e = 0; e < corpus.entries.size(); ++e) {
        const auto& entry = corpus.entries[e];
        if (entry.tags.size() != entry.melody.size())
            throw Error(ErrorKind::LengthMismatch, "entry " + std::to_string(e) + " has mismatched tag count");
        if (e > 0) out += '\n';
        for (std::size_t i = 0; i < entry.melody.size(); ++i) {
            out += serialize_note(entry.melody[i]);
            out += '\t';
            out += corpus.tagset.name(entry.tags[i]);
            out += '\n';
        }
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace ornatag
