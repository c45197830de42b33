#include "ornatag/rules.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <tuple>

namespace ornatag {

RuleClass Rule::rule_class() const {
    for (const auto& clause : antecedent)
        if (std::holds_alternative<StateClause>(clause)) return RuleClass::Type2;
    return RuleClass::Type1;
}

double RuleSet::weight_of(const Rule& rule) const {
    if (rule.weight) return *rule.weight;
    return rule.rule_class() == RuleClass::Type1 ? h1 : h2;
}

// Fixed notation keeps the output inside the rule-file number grammar.
std::string format_weight(double weight) {
    char buffer[512];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, weight, std::chars_format::fixed);
    return std::string(buffer, ptr);
}

namespace {

enum class TokenType { Word, Number, Anchor, Symbol, End };

struct Token {
    TokenType type = TokenType::End;
    std::string text;
    int column = 0;
};

std::vector<Token> tokenize(std::string_view line, int line_no) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        const int column = static_cast<int>(i) + 1;
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '#') {
            break;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const auto start = i;
            while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) ++i;
            tokens.push_back({TokenType::Word, std::string(line.substr(start, i - start)), column});
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const auto start = i;
            while (i < line.size() &&
                   (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '.' || line[i] == '/'))
                ++i;
            tokens.push_back({TokenType::Number, std::string(line.substr(start, i - start)), column});
        } else if (c == '@') {
            if (i + 1 >= line.size() || line[i + 1] != 't')
                throw Error(ErrorKind::SyntaxError, "expected '@t'", line_no, column, "@");
            tokens.push_back({TokenType::Anchor, "@t", column});
            i += 2;
        } else if (line.substr(i, 2) == "==" || line.substr(i, 2) == "!=" || line.substr(i, 2) == ">=" ||
                   line.substr(i, 2) == "<=") {
            tokens.push_back({TokenType::Symbol, std::string(line.substr(i, 2)), column});
            i += 2;
        } else if (c == '(' || c == ')' || c == '+' || c == '-' || c == '=' || c == '<' || c == '>') {
            tokens.push_back({TokenType::Symbol, std::string(1, c), column});
            ++i;
        } else {
            throw Error(ErrorKind::SyntaxError, std::string("unexpected character '") + c + "'", line_no, column,
                        std::string(1, c));
        }
    }
    tokens.push_back({TokenType::End, "", static_cast<int>(line.size()) + 1});
    return tokens;
}

std::optional<ObsFeature> feature_from(std::string_view word) {
    if (word == "duration") return ObsFeature::Duration;
    if (word == "midi") return ObsFeature::Midi;
    if (word == "octave") return ObsFeature::Octave;
    if (word == "step") return ObsFeature::Step;
    if (word == "position") return ObsFeature::Position;
    return std::nullopt;
}

const char* feature_name(ObsFeature feature) {
    switch (feature) {
        case ObsFeature::Duration: return "duration";
        case ObsFeature::Midi: return "midi";
        case ObsFeature::Octave: return "octave";
        case ObsFeature::Step: return "step";
        case ObsFeature::Position: return "position";
    }
    return "?";
}

const char* comparator_text(Comparator cmp) {
    switch (cmp) {
        case Comparator::Less: return "<";
        case Comparator::LessEqual: return "<=";
        case Comparator::Greater: return ">";
        case Comparator::GreaterEqual: return ">=";
        case Comparator::Equal: return "==";
        case Comparator::NotEqual: return "!=";
    }
    return "?";
}

std::optional<Comparator> comparator_from(std::string_view text) {
    if (text == "<") return Comparator::Less;
    if (text == "<=") return Comparator::LessEqual;
    if (text == ">") return Comparator::Greater;
    if (text == ">=") return Comparator::GreaterEqual;
    if (text == "==") return Comparator::Equal;
    if (text == "!=") return Comparator::NotEqual;
    return std::nullopt;
}

template <typename T>
bool compare(const T& lhs, Comparator cmp, const T& rhs) {
    switch (cmp) {
        case Comparator::Less: return lhs < rhs;
        case Comparator::LessEqual: return lhs <= rhs;
        case Comparator::Greater: return lhs > rhs;
        case Comparator::GreaterEqual: return lhs >= rhs;
        case Comparator::Equal: return lhs == rhs;
        case Comparator::NotEqual: return lhs != rhs;
    }
    return false;
}

class LineParser {
public:
    LineParser(std::string_view line, int line_no, const TagSet& tagset)
        : tokens_(tokenize(line, line_no)), line_no_(line_no), tagset_(tagset) {}

    bool empty() const { return tokens_.front().type == TokenType::End; }

    const Token& peek() const { return tokens_[pos_]; }

    bool peek_word(std::string_view word) const {
        return peek().type == TokenType::Word && peek().text == word;
    }

    Token next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void expected(const std::string& what) const {
        const auto& tok = peek();
        const std::string found = tok.type == TokenType::End ? "end of line" : "'" + tok.text + "'";
        throw Error(ErrorKind::SyntaxError, "expected " + what + ", found " + found, line_no_, tok.column, tok.text);
    }

    void expect_word(std::string_view word) {
        if (!peek_word(word)) expected("'" + std::string(word) + "'");
        next();
    }

    void expect_symbol(std::string_view symbol) {
        if (peek().type != TokenType::Symbol || peek().text != symbol) expected("'" + std::string(symbol) + "'");
        next();
    }

    void expect_end() {
        if (peek().type != TokenType::End) expected("end of line");
    }

    int posref() {
        if (peek().type != TokenType::Anchor) expected("'@t'");
        next();
        if (peek().type == TokenType::Symbol && (peek().text == "+" || peek().text == "-")) {
            const bool negative = next().text == "-";
            if (peek().type != TokenType::Number) expected("an integer offset");
            const auto value = integer(next());
            return negative ? -value : value;
        }
        return 0;
    }

    int integer(const Token& tok) {
        int value = 0;
        const auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
        if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size())
            throw Error(ErrorKind::SyntaxError, "expected an integer, found '" + tok.text + "'", line_no_, tok.column,
                        tok.text);
        return value;
    }

    // Optionally signed number as an exact rational.
    Rational signed_rational() {
        bool negative = false;
        if (peek().type == TokenType::Symbol && peek().text == "-") {
            negative = true;
            next();
        }
        if (peek().type != TokenType::Number) expected("a number");
        const Token tok = next();
        const auto value = Rational::parse(tok.text);
        if (!value) throw Error(ErrorKind::SyntaxError, "malformed number '" + tok.text + "'", line_no_, tok.column, tok.text);
        return negative ? Rational(-value->num(), value->den()) : *value;
    }

    // Positive real for weights and confidences. `int/int` is divided exactly
    // first; decimals go straight through from_chars so that shortest
    // round-trip output parses back to the same double.
    double positive_number() {
        const int column = peek().column;
        bool negative = false;
        if (peek().type == TokenType::Symbol && peek().text == "-") {
            negative = true;
            next();
        }
        if (peek().type != TokenType::Number) expected("a positive number");
        const Token tok = next();
        double value = 0.0;
        if (tok.text.find('/') != std::string::npos) {
            const auto r = Rational::parse(tok.text);
            if (!r) throw Error(ErrorKind::SyntaxError, "malformed number '" + tok.text + "'", line_no_, tok.column, tok.text);
            value = r->to_double();
        } else {
            const auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
            if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size())
                throw Error(ErrorKind::SyntaxError, "malformed number '" + tok.text + "'", line_no_, tok.column, tok.text);
        }
        if (negative) value = -value;
        if (!(value > 0.0) || !std::isfinite(value))
            throw Error(ErrorKind::NonpositiveWeight, "weight must be a positive finite number", line_no_, column,
                        tok.text);
        return value;
    }

    int tag() {
        if (peek().type != TokenType::Word) expected("a tag");
        const Token tok = next();
        const auto index = tagset_.index_of(tok.text);
        if (!index)
            throw Error(ErrorKind::UnknownTag, "tag '" + tok.text + "' is not in the tag set", line_no_, tok.column,
                        tok.text);
        return *index;
    }

    Clause clause() {
        if (peek().type != TokenType::Word) expected("a clause");
        const Token head = next();
        if (head.text == "pred") {
            StateClause clause;
            expect_symbol("(");
            clause.offset = posref();
            expect_symbol(")");
            if (peek().type != TokenType::Symbol || (peek().text != "==" && peek().text != "!=")) expected("'==' or '!='");
            clause.equal = next().text == "==";
            clause.tag = tag();
            return clause;
        }
        const auto feature = feature_from(head.text);
        if (!feature)
            throw Error(ErrorKind::UnknownFeature, "unknown feature '" + head.text + "'", line_no_, head.column,
                        head.text);

        ObsClause clause;
        clause.feature = *feature;
        expect_symbol("(");
        clause.offset = posref();
        expect_symbol(")");
        const auto cmp = peek().type == TokenType::Symbol ? comparator_from(peek().text) : std::nullopt;
        if (!cmp) expected("a comparator");
        next();
        clause.comparator = *cmp;

        switch (clause.feature) {
            case ObsFeature::Duration:
                clause.literal = signed_rational();
                break;
            case ObsFeature::Step: {
                if (clause.comparator != Comparator::Equal && clause.comparator != Comparator::NotEqual)
                    throw Error(ErrorKind::SyntaxError, "step only supports '==' and '!='", line_no_, head.column,
                                head.text);
                if (peek().type != TokenType::Word || peek().text.size() != 1) expected("a step letter");
                const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(peek().text[0])));
                if (letter < 'A' || letter > 'G') expected("a step letter");
                next();
                clause.literal = letter;
                break;
            }
            default: {
                const int column = peek().column;
                const auto value = signed_rational();
                if (value.den() != 1)
                    throw Error(ErrorKind::SyntaxError, "expected an integer literal", line_no_, column);
                clause.literal = static_cast<long long>(value.num());
                break;
            }
        }
        return clause;
    }

    Rule rule() {
        Rule rule;
        rule.source_line = line_no_;
        expect_word("IF");
        rule.antecedent.push_back(clause());
        while (peek_word("AND")) {
            next();
            rule.antecedent.push_back(clause());
        }
        expect_word("THEN");
        expect_word("tag");
        expect_symbol("(");
        rule.consequent_offset = posref();
        expect_symbol(")");
        expect_symbol("=");
        rule.consequent_tag = tag();
        if (peek_word("WEIGHT")) {
            next();
            rule.weight = positive_number();
        }
        expect_end();
        return rule;
    }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    int line_no_;
    const TagSet& tagset_;
};

std::string posref_text(int offset) {
    if (offset == 0) return "@t";
    return offset > 0 ? "@t+" + std::to_string(offset) : "@t-" + std::to_string(-offset);
}

}  // namespace

RuleSet parse_rules(std::string_view text, const TagSet& tagset) {
    RuleSet set;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;

        LineParser parser(line, line_no, tagset);
        if (!parser.empty()) {
            if (parser.peek_word("H1") || parser.peek_word("H2")) {
                const bool first = parser.next().text == "H1";
                const double value = parser.positive_number();
                parser.expect_end();
                (first ? set.h1 : set.h2) = value;
                (first ? set.has_h1 : set.has_h2) = true;
            } else {
                set.rules.push_back(parser.rule());
            }
        }
        if (end == text.size()) break;
        start = end + 1;
    }
    return set;
}

std::string serialize_rule(const Rule& rule, const TagSet& tagset) {
    std::string out = "IF ";
    for (std::size_t i = 0; i < rule.antecedent.size(); ++i) {
        if (i > 0) out += " AND ";
        if (const auto* obs = std::get_if<ObsClause>(&rule.antecedent[i])) {
            out += feature_name(obs->feature);
            out += "(" + posref_text(obs->offset) + ") ";
            out += comparator_text(obs->comparator);
            out += ' ';
            if (const auto* r = std::get_if<Rational>(&obs->literal)) out += r->to_string();
            else if (const auto* n = std::get_if<long long>(&obs->literal)) out += std::to_string(*n);
            else out += std::get<char>(obs->literal);
        } else {
            const auto& state = std::get<StateClause>(rule.antecedent[i]);
            out += "pred(" + posref_text(state.offset) + ") ";
            out += state.equal ? "== " : "!= ";
            out += tagset.name(state.tag);
        }
    }
    out += " THEN tag(" + posref_text(rule.consequent_offset) + ") = " + tagset.name(rule.consequent_tag);
    if (rule.weight) out += " WEIGHT " + format_weight(*rule.weight);
    return out;
}

std::string serialize_rules(const RuleSet& rules, const TagSet& tagset) {
    std::string out;
    if (rules.has_h1) out += "H1 " + format_weight(rules.h1) + "\n";
    if (rules.has_h2) out += "H2 " + format_weight(rules.h2) + "\n";
    for (const auto& rule : rules.rules) out += serialize_rule(rule, tagset) + "\n";
    return out;
}

bool evaluate_antecedent(const Rule& rule, const Melody& melody, const StateSequence& base, std::size_t t) {
    const auto length = static_cast<long long>(melody.size());
    for (const auto& clause : rule.antecedent) {
        const int offset = std::visit([](const auto& c) { return c.offset; }, clause);
        const long long pos = static_cast<long long>(t) + offset;
        if (pos < 0 || pos >= length) return false;
        const auto index = static_cast<std::size_t>(pos);

        if (const auto* state = std::get_if<StateClause>(&clause)) {
            if (index >= base.size()) return false;
            if ((base[index] == state->tag) != state->equal) return false;
            continue;
        }

        const auto& obs = std::get<ObsClause>(clause);
        const Note& note = melody[index];
        bool holds = false;
        switch (obs.feature) {
            case ObsFeature::Duration:
                holds = compare(note.duration, obs.comparator, std::get<Rational>(obs.literal));
                break;
            case ObsFeature::Midi:
                holds = compare<long long>(midi_number(note), obs.comparator, std::get<long long>(obs.literal));
                break;
            case ObsFeature::Octave:
                holds = compare<long long>(note.octave, obs.comparator, std::get<long long>(obs.literal));
                break;
            case ObsFeature::Position:
                holds = compare<long long>(pos, obs.comparator, std::get<long long>(obs.literal));
                break;
            case ObsFeature::Step:
                holds = compare(note.step, obs.comparator, std::get<char>(obs.literal));
                break;
        }
        if (!holds) return false;
    }
    return true;
}

WeightResult build_weight_matrix_logged(const RuleSet& rules, const Melody& melody, const StateSequence& base,
                                        int num_tags) {
    if (base.size() != melody.size())
        throw Error(ErrorKind::LengthMismatch, "base prediction length differs from melody length");
    const auto length = static_cast<long long>(melody.size());

    WeightResult result{WeightMatrix::Ones(num_tags, static_cast<Eigen::Index>(length)), {}};
    for (const auto& rule : rules.rules) {
        if (rule.consequent_tag < 0 || rule.consequent_tag >= num_tags)
            throw Error(ErrorKind::UnknownTag, "rule tag index outside the tag set", rule.source_line);
        const double weight = rules.weight_of(rule);
        for (long long t = 0; t < length; ++t) {
            const long long target = t + rule.consequent_offset;
            if (target < 0 || target >= length) continue;
            if (!evaluate_antecedent(rule, melody, base, static_cast<std::size_t>(t))) continue;
            result.firings.push_back({rule.source_line, static_cast<int>(target), rule.consequent_tag, weight});
        }
    }

    // Each cell multiplies its factors in ascending order, so the matrix is
    // bit-identical under any permutation of the rules.
    std::vector<Firing> ordered = result.firings;
    std::sort(ordered.begin(), ordered.end(), [](const Firing& a, const Firing& b) {
        return std::tie(a.tag, a.position, a.weight) < std::tie(b.tag, b.position, b.weight);
    });
    for (const auto& firing : ordered) result.weights(firing.tag, firing.position) *= firing.weight;
    return result;
}

WeightMatrix build_weight_matrix(const RuleSet& rules, const Melody& melody, const StateSequence& base,
                                 int num_tags) {
    return build_weight_matrix_logged(rules, melody, base, num_tags).weights;
}

std::string describe_rule(const Rule& rule, const TagSet& tagset) {
    return "line " + std::to_string(rule.source_line) + ": Type" +
           (rule.rule_class() == RuleClass::Type1 ? "1" : "2") + " tag=" + tagset.name(rule.consequent_tag) +
           " weight=" + (rule.weight ? format_weight(*rule.weight) : std::string("default"));
}

}  // namespace ornatag
