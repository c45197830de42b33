#include "ornatag/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ornatag/random.hpp"

namespace ornatag {

int duration_bucket_index(const Rational& d) {
    if (d <= Rational(1, 4)) return 0;
    if (d <= Rational(1, 2)) return 1;
    if (d <= Rational(1)) return 2;
    if (d <= Rational(2)) return 3;
    if (d <= Rational(3)) return 4;
    return 5;
}

void SynthProfile::validate() const {
    const int tags = tagset.size();
    auto invalid = [](const std::string& why) { throw Error(ErrorKind::InvalidArgument, "synth profile: " + why); };
    if (pitch_low < 12 || pitch_high > 127 || pitch_low > pitch_high) invalid("pitch range must lie in [12, 127]");
    if (min_length < 1 || min_length > max_length) invalid("melody length range is empty");
    if (duration_pool.empty()) invalid("duration pool is empty");
    double pool_total = 0.0;
    for (const auto& choice : duration_pool) {
        if (choice.duration <= Rational(0)) invalid("durations must be positive");
        if (choice.probability < 0.0) invalid("negative duration probability");
        pool_total += choice.probability;
    }
    if (std::abs(pool_total - 1.0) > 1e-12) invalid("duration probabilities must sum to 1");
    if (tag_markov.rows() != tags || tag_markov.cols() != tags) invalid("tag_markov must be H x H");
    for (Eigen::Index r = 0; r < tag_markov.rows(); ++r) {
        if ((tag_markov.row(r).array() < 0.0).any()) invalid("negative transition probability");
        if (std::abs(tag_markov.row(r).sum() - 1.0) > 1e-12) invalid("tag_markov rows must sum to 1");
    }
    if (emission_bias.rows() != tags || emission_bias.cols() != kDurationBuckets)
        invalid("emission_bias must be H x 6");
    if ((emission_bias.array() <= 0.0).any()) invalid("emission_bias entries must be positive");
    for (const auto& rule : planted_rules.rules)
        if (rule.consequent_tag < 0 || rule.consequent_tag >= tags) invalid("planted rule tag outside tag set");
}

TagSet default_tagset() { return TagSet({"none", "trills", "mordent", "fermata", "appoggiatura", "tonguing"}); }

namespace {

Eigen::MatrixXd sticky_chain(int tags, double self) {
    Eigen::MatrixXd chain = Eigen::MatrixXd::Constant(tags, tags, (1.0 - self) / (tags - 1));
    chain.diagonal().setConstant(self);
    return chain;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

SynthProfile default_profile() {
    SynthProfile profile;
    profile.tagset = default_tagset();
    profile.duration_pool = {
        {Rational(1, 4), 0.2}, {Rational(1, 2), 0.3}, {Rational(1), 0.3}, {Rational(2), 0.15}, {Rational(4), 0.05}};
    profile.tag_markov = sticky_chain(profile.tagset.size(), 0.5);
    profile.emission_bias.resize(profile.tagset.size(), kDurationBuckets);
    // Half notes lean towards fermata and whole notes are rare, so a tagger
    // that cannot tell the two apart has no reason to call them trills.
    // clang-format off
    profile.emission_bias <<
        1.0, 1.0, 1.0, 1.0, 1.0, 0.5,   // none
        0.5, 0.5, 1.0, 0.5, 1.0, 2.0,   // trills
        2.0, 2.0, 1.0, 0.5, 0.5, 0.2,   // mordent
        0.2, 0.2, 0.5, 3.0, 2.0, 0.5,   // fermata
        1.0, 2.0, 2.0, 1.0, 0.5, 0.2,   // appoggiatura
        3.0, 2.0, 1.0, 0.5, 0.5, 0.2;   // tonguing
    // clang-format on
    profile.planted_rules = parse_rules("IF duration(@t) > 3 THEN tag(@t) = trills\n", profile.tagset);
    return profile;
}

SynthProfile parse_profile(std::string_view json_text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::SyntaxError, std::string("profile is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::SyntaxError, "profile must be a JSON object");

    SynthProfile profile = default_profile();
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key != "tags" && key != "pitch_range" && key != "duration_pool" && key != "tag_markov" &&
                key != "emission_bias" && key != "planted_rules" && key != "melody_length_range")
                throw Error(ErrorKind::InvalidArgument, "unknown profile key '" + key + "'");
        }
        if (doc.contains("tags")) {
            profile.tagset = TagSet(doc["tags"].get<std::vector<std::string>>());
            const int tags = profile.tagset.size();
            profile.tag_markov = sticky_chain(tags, 0.5);
            profile.emission_bias = Eigen::MatrixXd::Ones(tags, kDurationBuckets);
            profile.planted_rules = {};
        }
        if (doc.contains("pitch_range")) {
            const auto range = doc["pitch_range"].get<std::vector<int>>();
            if (range.size() != 2) throw Error(ErrorKind::InvalidArgument, "pitch_range needs two values");
            profile.pitch_low = range[0];
            profile.pitch_high = range[1];
        }
        if (doc.contains("melody_length_range")) {
            const auto range = doc["melody_length_range"].get<std::vector<int>>();
            if (range.size() != 2) throw Error(ErrorKind::InvalidArgument, "melody_length_range needs two values");
            profile.min_length = range[0];
            profile.max_length = range[1];
        }
        if (doc.contains("duration_pool")) {
            profile.duration_pool.clear();
            for (const auto& item : doc["duration_pool"]) {
                const auto text = item.at(0).get<std::string>();
                const auto duration = Rational::parse(text);
                if (!duration) throw Error(ErrorKind::InvalidArgument, "bad duration '" + text + "'");
                profile.duration_pool.push_back({*duration, item.at(1).get<double>()});
            }
        }
        auto read_matrix = [](const json& rows) {
            const auto values = rows.get<std::vector<std::vector<double>>>();
            const auto cols = values.empty() ? 0 : values.front().size();
            Eigen::MatrixXd out(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(cols));
            for (std::size_t r = 0; r < values.size(); ++r) {
                if (values[r].size() != cols) throw Error(ErrorKind::InvalidArgument, "ragged matrix in profile");
                for (std::size_t c = 0; c < cols; ++c)
                    out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
            }
            return out;
        };
        if (doc.contains("tag_markov")) profile.tag_markov = read_matrix(doc["tag_markov"]);
        if (doc.contains("emission_bias")) profile.emission_bias = read_matrix(doc["emission_bias"]);
        if (doc.contains("planted_rules")) {
            std::string text;
            for (const auto& line : doc["planted_rules"]) text += line.get<std::string>() + "\n";
            profile.planted_rules = parse_rules(text, profile.tagset);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed profile: ") + e.what());
    }
    profile.validate();
    return profile;
}

TaggedCorpus generate_synthetic(const SynthProfile& profile, std::size_t n_melodies, std::uint64_t seed) {
    profile.validate();
    const int tags = profile.tagset.size();
    TaggedCorpus corpus{profile.tagset, {}};
    corpus.entries.reserve(n_melodies);

    std::vector<double> uniform_start(static_cast<std::size_t>(tags), 1.0);
    std::vector<double> weights(profile.duration_pool.size());

    for (std::size_t m = 0; m < n_melodies; ++m) {
        Rng rng(splitmix64(seed ^ splitmix64(m + 1)));
        const int length = rng.uniform_int(profile.min_length, profile.max_length);

        TaggedMelody entry;
        entry.tags.reserve(static_cast<std::size_t>(length));
        entry.melody.notes.reserve(static_cast<std::size_t>(length));
        int pitch = rng.uniform_int(profile.pitch_low, profile.pitch_high);
        for (int t = 0; t < length; ++t) {
            int tag = 0;
            if (t == 0) {
                tag = static_cast<int>(rng.categorical(uniform_start));
            } else {
                const Eigen::VectorXd row = profile.tag_markov.row(entry.tags.back()).transpose();
                tag = static_cast<int>(rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))));
            }
            for (std::size_t i = 0; i < profile.duration_pool.size(); ++i) {
                const auto& choice = profile.duration_pool[i];
                weights[i] = choice.probability * profile.emission_bias(tag, duration_bucket_index(choice.duration));
            }
            const auto& duration = profile.duration_pool[rng.categorical(weights)].duration;
            if (t > 0) pitch = std::clamp(pitch + rng.uniform_int(-4, 4), profile.pitch_low, profile.pitch_high);
            entry.tags.push_back(tag);
            entry.melody.notes.push_back(note_from_midi(pitch, duration));
        }

        // Planted Type1 rules overwrite gold in source order.
        for (const auto& rule : profile.planted_rules.rules) {
            if (rule.rule_class() != RuleClass::Type1) continue;
            const StateSequence observed = entry.tags;
            for (int t = 0; t < length; ++t) {
                const int target = t + rule.consequent_offset;
                if (target < 0 || target >= length) continue;
                if (evaluate_antecedent(rule, entry.melody, observed, static_cast<std::size_t>(t)))
                    entry.tags[static_cast<std::size_t>(target)] = rule.consequent_tag;
            }
        }
        corpus.entries.push_back(std::move(entry));
    }
    return corpus;
}

Metrics evaluate(std::span<const StateSequence> predictions, const TaggedCorpus& gold) {
    if (predictions.size() != gold.entries.size())
        throw Error(ErrorKind::LengthMismatch, "prediction count differs from corpus size");
    const int tags = gold.tagset.size();
    Metrics metrics;
    metrics.confusion = Eigen::MatrixXi::Zero(tags, tags);
    for (std::size_t e = 0; e < predictions.size(); ++e) {
        const auto& pred = predictions[e];
        const auto& truth = gold.entries[e].tags;
        if (pred.size() != truth.size())
            throw Error(ErrorKind::LengthMismatch, "prediction length differs for melody " + std::to_string(e));
        for (std::size_t t = 0; t < pred.size(); ++t) {
            if (pred[t] < 0 || pred[t] >= tags || truth[t] < 0 || truth[t] >= tags)
                throw Error(ErrorKind::UnknownTag, "tag index outside the tag set");
            ++metrics.confusion(truth[t], pred[t]);
        }
    }
    metrics.total = static_cast<std::size_t>(metrics.confusion.sum());
    metrics.token_accuracy = metrics.total == 0 ? 0.0
                                                : static_cast<double>(metrics.confusion.trace()) /
                                                      static_cast<double>(metrics.total);

    double f1_sum = 0.0;
    int present = 0;
    metrics.per_tag.resize(static_cast<std::size_t>(tags));
    for (int k = 0; k < tags; ++k) {
        auto& m = metrics.per_tag[static_cast<std::size_t>(k)];
        const double hits = metrics.confusion(k, k);
        const double predicted = metrics.confusion.col(k).sum();
        const double actual = metrics.confusion.row(k).sum();
        m.support = static_cast<std::size_t>(actual);
        m.precision = predicted > 0 ? hits / predicted : 0.0;
        m.recall = actual > 0 ? hits / actual : 0.0;
        m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        if (actual > 0) {
            f1_sum += m.f1;
            ++present;
        }
    }
    metrics.macro_f1 = present > 0 ? f1_sum / present : 0.0;
    return metrics;
}

SatisfactionCount count_rule_satisfaction(const StateSequence& predicted, const Melody& melody, const RuleSet& rules,
                                          const StateSequence& base) {
    if (predicted.size() != melody.size() || base.size() != melody.size())
        throw Error(ErrorKind::LengthMismatch, "sequences must match the melody length");
    SatisfactionCount count;
    const auto length = static_cast<long long>(melody.size());
    for (const auto& rule : rules.rules) {
        for (long long t = 0; t < length; ++t) {
            const long long target = t + rule.consequent_offset;
            if (target < 0 || target >= length) continue;
            if (!evaluate_antecedent(rule, melody, base, static_cast<std::size_t>(t))) continue;
            ++count.firings;
            if (predicted[static_cast<std::size_t>(target)] == rule.consequent_tag) ++count.satisfied;
        }
    }
    return count;
}

double rule_satisfaction(const StateSequence& predicted, const Melody& melody, const RuleSet& rules,
                         const StateSequence& base) {
    return count_rule_satisfaction(predicted, melody, rules, base).rate();
}

std::pair<TaggedCorpus, TaggedCorpus> split(const TaggedCorpus& corpus, double train_fraction, std::uint64_t seed) {
    const std::size_t n = corpus.entries.size();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "splitting needs at least two melodies");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error(ErrorKind::InvalidArgument, "train fraction must lie in (0, 1)");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    const auto wanted = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    const std::size_t n_train = std::clamp<std::size_t>(wanted, 1, n - 1);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    TaggedCorpus train{corpus.tagset, {}};
    TaggedCorpus test{corpus.tagset, {}};
    for (auto i : train_idx) train.entries.push_back(corpus.entries[i]);
    for (auto i : test_idx) test.entries.push_back(corpus.entries[i]);
    return {std::move(train), std::move(test)};
}

namespace {

std::string fixed6(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.6f", value);
    return buffer;
}

}  // namespace

std::string metrics_to_json(const Metrics& metrics, const TagSet& tagset) {
    std::string out = "{";
    out += "\"token_accuracy\": " + fixed6(metrics.token_accuracy);
    out += ", \"macro_f1\": " + fixed6(metrics.macro_f1);
    out += ", \"rule_satisfaction\": " + fixed6(metrics.rule_satisfaction);
    out += ", \"tokens\": " + std::to_string(metrics.total);
    out += ", \"per_tag\": {";
    for (int k = 0; k < tagset.size(); ++k) {
        const auto& m = metrics.per_tag[static_cast<std::size_t>(k)];
        if (k > 0) out += ", ";
        out += "\"" + tagset.name(k) + "\": {\"precision\": " + fixed6(m.precision) + ", \"recall\": " +
               fixed6(m.recall) + ", \"f1\": " + fixed6(m.f1) + ", \"support\": " + std::to_string(m.support) + "}";
    }
    out += "}, \"confusion\": [";
    for (Eigen::Index r = 0; r < metrics.confusion.rows(); ++r) {
        if (r > 0) out += ", ";
        out += "[";
        for (Eigen::Index c = 0; c < metrics.confusion.cols(); ++c) {
            if (c > 0) out += ", ";
            out += std::to_string(metrics.confusion(r, c));
        }
        out += "]";
    }
    out += "]}\n";
    return out;
}

}  // namespace ornatag
