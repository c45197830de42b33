#include "ornatag/tagger.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "ornatag/crf_dp.hpp"
#include "ornatag/random.hpp"

namespace ornatag {

std::optional<int> FeatureVectorizer::index(const std::string& name) {
    if (const auto it = lookup_.find(name); it != lookup_.end()) return it->second;
    if (frozen_) return std::nullopt;
    const int next = size();
    lookup_.emplace(name, next);
    names_.push_back(name);
    return next;
}

std::optional<int> FeatureVectorizer::find(const std::string& name) const {
    if (const auto it = lookup_.find(name); it != lookup_.end()) return it->second;
    return std::nullopt;
}

void FeatureVectorizer::alias(const std::string& name, int target) {
    if (frozen_) throw Error(ErrorKind::InvalidArgument, "vectorizer is frozen");
    if (lookup_.contains(name)) throw Error(ErrorKind::InvalidArgument, "feature '" + name + "' already exists");
    if (target < 0 || target >= size()) throw Error(ErrorKind::InvalidArgument, "alias target out of range");
    lookup_.emplace(name, target);
    aliases_.emplace_back(name, target);
}

Eigen::VectorXd TaggerModel::parameters() const {
    Eigen::VectorXd flat(num_parameters());
    flat.head(emission_weights.size()) = Eigen::Map<const Eigen::VectorXd>(emission_weights.data(), emission_weights.size());
    flat.tail(transition_weights.size()) =
        Eigen::Map<const Eigen::VectorXd>(transition_weights.data(), transition_weights.size());
    return flat;
}

void TaggerModel::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != num_parameters())
        throw Error(ErrorKind::ShapeMismatch, "parameter vector has " + std::to_string(flat.size()) +
                                                  " entries, model expects " + std::to_string(num_parameters()));
    Eigen::Map<Eigen::VectorXd>(emission_weights.data(), emission_weights.size()) = flat.head(emission_weights.size());
    Eigen::Map<Eigen::VectorXd>(transition_weights.data(), transition_weights.size()) =
        flat.tail(transition_weights.size());
}

TaggerModel make_model(TagSet tagset, FeatureVectorizer vectorizer) {
    vectorizer.freeze();
    TaggerModel model{std::move(tagset), std::move(vectorizer), {}, {}, {}};
    model.emission_weights = EmissionWeights::Zero(model.num_features(), model.num_tags());
    model.transition_weights = TransitionWeights::Zero(model.num_tags(), model.num_tags());
    return model;
}

std::string duration_bucket(const Rational& d) {
    if (d <= Rational(1, 4)) return "(0,1/4]";
    if (d <= Rational(1, 2)) return "(1/4,1/2]";
    if (d <= Rational(1)) return "(1/2,1]";
    if (d <= Rational(2)) return "(1,2]";
    if (d <= Rational(3)) return "(2,3]";
    return "(3,inf)";
}

std::vector<std::string> extract_features(const Melody& melody, std::size_t t) {
    if (t >= melody.size())
        throw Error(ErrorKind::InvalidArgument,
                    "position " + std::to_string(t) + " outside melody of length " + std::to_string(melody.size()));
    const Note& note = melody[t];
    const int midi = midi_number(note);
    auto sign = [](int delta) { return delta > 0 ? "+" : (delta < 0 ? "-" : "0"); };

    std::vector<std::string> out;
    out.reserve(9);
    out.push_back(std::string("step=") + note.step);
    out.push_back("alt=" + std::to_string(note.alteration));
    out.push_back("octave=" + std::to_string(note.octave));
    out.push_back("durbucket=" + duration_bucket(note.duration));
    out.push_back(std::string("prev_interval_sign=") + (t == 0 ? "BOS" : sign(midi - midi_number(melody[t - 1]))));
    out.push_back(std::string("next_interval_sign=") +
                  (t + 1 == melody.size() ? "EOS" : sign(midi_number(melody[t + 1]) - midi)));
    if (t == 0) out.emplace_back("pos=BOS");
    if (t + 1 == melody.size()) out.emplace_back("pos=EOS");
    return out;
}

EncodedMelody encode(const FeatureVectorizer& vectorizer, const Melody& melody) {
    EncodedMelody encoded(melody.size());
    for (std::size_t t = 0; t < melody.size(); ++t) {
        for (const auto& name : extract_features(melody, t))
            if (const auto index = vectorizer.find(name)) encoded[t].push_back(*index);
    }
    return encoded;
}

Eigen::MatrixXd emission_scores(const TaggerModel& model, const EncodedMelody& encoded) {
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(model.num_tags(), static_cast<Eigen::Index>(encoded.size()));
    for (std::size_t t = 0; t < encoded.size(); ++t) {
        for (int f : encoded[t]) scores.col(static_cast<Eigen::Index>(t)) += model.emission_weights.row(f).transpose();
    }
    return scores;
}

Eigen::MatrixXd emission_scores(const TaggerModel& model, const Melody& melody) {
    return emission_scores(model, encode(model.vectorizer, melody));
}

PredictionMatrix posterior_marginals(const TaggerModel& model, const Melody& melody) {
    if (melody.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty melody");
    const auto fb = forward_backward(emission_scores(model, melody), model.transition_weights);
    return posterior_from(fb);
}

StateSequence viterbi_decode(const TaggerModel& model, const Melody& melody) {
    if (melody.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty melody");
    return viterbi_path(emission_scores(model, melody), model.transition_weights);
}

double sequence_score(const TaggerModel& model, const Melody& melody, std::span<const int> path) {
    if (path.size() != melody.size()) throw Error(ErrorKind::LengthMismatch, "path and melody lengths differ");
    return path_score(emission_scores(model, melody), model.transition_weights, path);
}

namespace {

struct Gradient {
    EmissionWeights emissions;
    TransitionWeights transitions;

    explicit Gradient(const TaggerModel& model)
        : emissions(EmissionWeights::Zero(model.num_features(), model.num_tags())),
          transitions(TransitionWeights::Zero(model.num_tags(), model.num_tags())) {}
};

// Adds one sequence's negative log-likelihood gradient into `grad`; returns
// its negative log-likelihood.
double accumulate(const TaggerModel& model, const EncodedMelody& encoded, const StateSequence& gold, Gradient& grad) {
    const Eigen::MatrixXd emissions = emission_scores(model, encoded);
    const auto& transitions = model.transition_weights;
    const auto fb = forward_backward(emissions, transitions);
    const double log_z = fb.log_partition;
    const Eigen::Index length = emissions.cols();

    const Eigen::MatrixXd marginals = ((fb.alpha + fb.beta).array() - log_z).exp().matrix();
    for (Eigen::Index t = 0; t < length; ++t) {
        const auto gold_t = gold[static_cast<std::size_t>(t)];
        for (int f : encoded[static_cast<std::size_t>(t)]) {
            grad.emissions.row(f) += marginals.col(t).transpose();
            grad.emissions(f, gold_t) -= 1.0;
        }
    }
    for (Eigen::Index t = 1; t < length; ++t) {
        // Pair marginal xi(j, k) = P(tag j at t-1, tag k at t).
        const Eigen::ArrayXXd pair =
            ((transitions.array().colwise() + fb.alpha.col(t - 1).array()).rowwise() +
             (emissions.col(t) + fb.beta.col(t)).transpose().array() - log_z)
                .exp();
        grad.transitions += pair.matrix();
        grad.transitions(gold[static_cast<std::size_t>(t - 1)], gold[static_cast<std::size_t>(t)]) -= 1.0;
    }
    return log_z - path_score(emissions, transitions, std::span<const int>(gold));
}

void check_entry(const TaggerModel& model, const TaggedMelody& entry) {
    if (entry.tags.size() != entry.melody.size() || entry.melody.size() == 0)
        throw Error(ErrorKind::LengthMismatch, "tag sequence does not match melody length");
    for (int tag : entry.tags)
        if (tag < 0 || tag >= model.num_tags())
            throw Error(ErrorKind::UnknownTag, "tag index " + std::to_string(tag) + " outside the tag set");
}

double squared_norm(const TaggerModel& model) {
    return model.emission_weights.squaredNorm() + model.transition_weights.squaredNorm();
}

Eigen::VectorXd flatten(const Gradient& grad) {
    Eigen::VectorXd flat(grad.emissions.size() + grad.transitions.size());
    flat.head(grad.emissions.size()) = Eigen::Map<const Eigen::VectorXd>(grad.emissions.data(), grad.emissions.size());
    flat.tail(grad.transitions.size()) =
        Eigen::Map<const Eigen::VectorXd>(grad.transitions.data(), grad.transitions.size());
    return flat;
}

}  // namespace

LossAndGradient nll_and_gradient(const TaggerModel& model, std::span<const TaggedMelody> batch, double l2) {
    if (batch.empty()) throw Error(ErrorKind::EmptyCorpus, "empty batch");
    Gradient grad(model);
    double loss = 0.0;
    for (const auto& entry : batch) {
        check_entry(model, entry);
        loss += accumulate(model, encode(model.vectorizer, entry.melody), entry.tags, grad);
    }
    loss += 0.5 * l2 * squared_norm(model);
    grad.emissions += l2 * model.emission_weights;
    grad.transitions += l2 * model.transition_weights;
    return {loss, flatten(grad)};
}

LossAndGradient nll_and_gradient(const TaggerModel& model, const TaggedCorpus& batch, double l2) {
    return nll_and_gradient(model, std::span<const TaggedMelody>(batch.entries), l2);
}

double training_objective(const TaggerModel& model, const TaggedCorpus& corpus, double l2) {
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& entry : corpus.entries) {
        const auto emissions = emission_scores(model, entry.melody);
        const auto fb = forward_backward(emissions, model.transition_weights);
        nll += fb.log_partition - path_score(emissions, model.transition_weights, std::span<const int>(entry.tags));
        tokens += entry.melody.size();
    }
    return nll / static_cast<double>(std::max<std::size_t>(tokens, 1)) + 0.5 * l2 * squared_norm(model);
}

namespace {

// Dropping a bucket name alone would leave its notes as the only ones with no
// duration feature, which the model can learn just as well.
void merge_withheld_buckets(FeatureVectorizer& vectorizer, const std::unordered_set<std::string>& withheld) {
    static const char* const buckets[] = {"(0,1/4]", "(1/4,1/2]", "(1/2,1]", "(1,2]", "(2,3]", "(3,inf)"};
    constexpr int n = 6;
    auto retained = [&](int b) { return vectorizer.find(std::string("durbucket=") + buckets[b]); };
    for (int b = 0; b < n; ++b) {
        const std::string name = std::string("durbucket=") + buckets[b];
        if (!withheld.contains(name)) continue;
        std::optional<int> target;
        for (int lower = b - 1; lower >= 0 && !target; --lower) target = retained(lower);
        for (int higher = b + 1; higher < n && !target; ++higher) target = retained(higher);
        if (target) vectorizer.alias(name, *target);
    }
}

}  // namespace

TaggerModel train(const TaggedCorpus& corpus, const TrainConfig& config) {
    if (corpus.entries.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot train on an empty corpus");
    if (config.epochs < 0 || config.batch < 1 || !(config.step_size > 0.0) || config.l2 < 0.0)
        throw Error(ErrorKind::InvalidArgument, "invalid training configuration");

    const std::unordered_set<std::string> withheld(config.withheld_features.begin(), config.withheld_features.end());
    FeatureVectorizer vectorizer;
    for (const auto& entry : corpus.entries) {
        for (std::size_t t = 0; t < entry.melody.size(); ++t)
            for (const auto& name : extract_features(entry.melody, t))
                if (!withheld.contains(name)) vectorizer.index(name);
    }
    merge_withheld_buckets(vectorizer, withheld);
    TaggerModel model = make_model(corpus.tagset, std::move(vectorizer));
    for (const auto& entry : corpus.entries) check_entry(model, entry);

    std::vector<EncodedMelody> encoded;
    encoded.reserve(corpus.entries.size());
    for (const auto& entry : corpus.entries) encoded.push_back(encode(model.vectorizer, entry.melody));

    std::vector<std::size_t> order(corpus.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(config.seed);

    double loss = training_objective(model, corpus, config.l2);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            Gradient grad(model);
            std::size_t tokens = 0;
            for (std::size_t i = start; i < stop; ++i) {
                accumulate(model, encoded[order[i]], corpus.entries[order[i]].tags, grad);
                tokens += encoded[order[i]].size();
            }
            const double scale = 1.0 / static_cast<double>(tokens);
            model.emission_weights -=
                config.step_size * (scale * grad.emissions + config.l2 * model.emission_weights);
            model.transition_weights -=
                config.step_size * (scale * grad.transitions + config.l2 * model.transition_weights);
        }
        loss = training_objective(model, corpus, config.l2);
        if (config.on_epoch) config.on_epoch(epoch, loss);
    }

    model.meta = TrainingMeta{config.epochs, loss, config.seed};
    return model;
}

// Model file layout:
//
//   ORNATAG-MODEL v1
//   tags <H>            followed by H tag lines
//   features <F>        followed by F feature-name lines
//   aliases <N>         followed by N `<name> <target feature index>` lines
//   emissions <F> <H>   followed by F rows of H numbers
//   transitions <H> <H> followed by H rows of H numbers
//   meta epochs <n> loss <x> seed <s>
//   crc32 <8 hex digits over every preceding byte>
//
// Reals use the shortest decimal that round-trips.

namespace {

std::string format_double(double value) {
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, ptr);
}

std::uint32_t checksum(std::string_view bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

template <typename Matrix>
void write_rows(std::string& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c))) throw Error(ErrorKind::InvalidArgument, "model has non-finite weights");
            if (c > 0) out += ' ';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
}

class ModelReader {
public:
    explicit ModelReader(std::string_view body) : body_(body) {}

    std::string_view line() {
        if (pos_ >= body_.size()) corrupt("unexpected end of file");
        auto end = body_.find('\n', pos_);
        if (end == std::string_view::npos) corrupt("unterminated line");
        const auto out = body_.substr(pos_, end - pos_);
        pos_ = end + 1;
        ++line_;
        return out;
    }

    // Reads `<keyword> <n>...` and returns the counts.
    std::vector<long long> header(std::string_view keyword, std::size_t count) {
        const auto text = line();
        if (text.substr(0, keyword.size()) != keyword) corrupt("expected '" + std::string(keyword) + "'");
        auto numbers = split(text.substr(keyword.size()));
        if (numbers.size() != count) corrupt("bad '" + std::string(keyword) + "' header");
        std::vector<long long> out;
        for (auto n : numbers) {
            long long v = 0;
            const auto [ptr, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
            if (ec != std::errc{} || ptr != n.data() + n.size() || v < 0) corrupt("bad count");
            out.push_back(v);
        }
        return out;
    }

    template <typename Matrix>
    void rows(Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const auto cells = split(line());
            if (static_cast<Eigen::Index>(cells.size()) != m.cols()) corrupt("wrong number of weights");
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = number(cells[static_cast<std::size_t>(c)]);
        }
    }

    double number(std::string_view text) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) corrupt("bad number");
        return v;
    }

    bool done() const { return pos_ == body_.size(); }

    [[noreturn]] void corrupt(const std::string& why) const {
        throw Error(ErrorKind::CorruptModel, why, line_ + 1);
    }

    static std::vector<std::string_view> split(std::string_view text) {
        std::vector<std::string_view> out;
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && text[i] == ' ') ++i;
            if (i >= text.size()) break;
            const auto start = i;
            while (i < text.size() && text[i] != ' ') ++i;
            out.push_back(text.substr(start, i - start));
        }
        return out;
    }

private:
    std::string_view body_;
    std::size_t pos_ = 0;
    int line_ = 0;
};

}  // namespace

std::string save_model(const TaggerModel& model) {
    std::string out;
    out += std::string(kModelMagic) + " v" + std::to_string(kModelFormatVersion) + "\n";
    out += "tags " + std::to_string(model.num_tags()) + "\n";
    out += serialize_tagset(model.tagset);
    out += "features " + std::to_string(model.num_features()) + "\n";
    for (const auto& name : model.vectorizer.names()) out += name + "\n";
    out += "aliases " + std::to_string(model.vectorizer.aliases().size()) + "\n";
    for (const auto& [name, target] : model.vectorizer.aliases()) out += name + " " + std::to_string(target) + "\n";
    out += "emissions " + std::to_string(model.emission_weights.rows()) + " " +
           std::to_string(model.emission_weights.cols()) + "\n";
    write_rows(out, model.emission_weights);
    out += "transitions " + std::to_string(model.transition_weights.rows()) + " " +
           std::to_string(model.transition_weights.cols()) + "\n";
    write_rows(out, model.transition_weights);
    out += "meta epochs " + std::to_string(model.meta.epochs) + " loss " + format_double(model.meta.final_loss) +
           " seed " + std::to_string(model.meta.seed) + "\n";

    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", checksum(out));
    out += "crc32 " + std::string(crc) + "\n";
    return out;
}

TaggerModel load_model(std::string_view contents) {
    const auto first_end = contents.find('\n');
    const auto first = contents.substr(0, first_end);
    const std::string expected_prefix = std::string(kModelMagic) + " v";
    if (first.substr(0, expected_prefix.size()) != expected_prefix)
        throw Error(ErrorKind::CorruptModel, "missing model header", 1);
    const auto version = first.substr(expected_prefix.size());
    if (version != std::to_string(kModelFormatVersion))
        throw Error(ErrorKind::VersionMismatch,
                    "model format v" + std::string(version) + ", expected v" + std::to_string(kModelFormatVersion), 1);

    // Checksum line is the last line of the file.
    if (contents.empty() || contents.back() != '\n') throw Error(ErrorKind::CorruptModel, "truncated model file");
    const auto last_start = contents.rfind('\n', contents.size() - 2);
    if (last_start == std::string_view::npos) throw Error(ErrorKind::CorruptModel, "truncated model file");
    const auto body = contents.substr(0, last_start + 1);
    const auto crc_line = contents.substr(last_start + 1, contents.size() - last_start - 2);
    if (crc_line.substr(0, 6) != "crc32 ") throw Error(ErrorKind::CorruptModel, "missing checksum line");
    char expected[16];
    std::snprintf(expected, sizeof expected, "%08x", checksum(body));
    if (crc_line.substr(6) != expected) throw Error(ErrorKind::CorruptModel, "checksum mismatch");

    ModelReader reader(body);
    reader.line();
    const auto tags = reader.header("tags", 1)[0];
    std::vector<std::string> names;
    for (long long i = 0; i < tags; ++i) names.emplace_back(reader.line());
    TagSet tagset;
    try {
        tagset = TagSet(std::move(names));
    } catch (const Error& e) {
        reader.corrupt(e.what());
    }

    const auto features = reader.header("features", 1)[0];
    FeatureVectorizer vectorizer;
    for (long long i = 0; i < features; ++i) {
        const std::string name(reader.line());
        if (name.empty() || name.find(' ') != std::string::npos || vectorizer.find(name))
            reader.corrupt("bad feature name");
        vectorizer.index(name);
    }
    const auto aliases = reader.header("aliases", 1)[0];
    for (long long i = 0; i < aliases; ++i) {
        const auto fields = ModelReader::split(reader.line());
        if (fields.size() != 2) reader.corrupt("bad alias line");
        const std::string name(fields[0]);
        int target = -1;
        const auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), target);
        if (ec != std::errc{} || ptr != fields[1].data() + fields[1].size() || target < 0 ||
            target >= vectorizer.size() || vectorizer.find(name))
            reader.corrupt("bad alias line");
        vectorizer.alias(name, target);
    }
    TaggerModel model = make_model(std::move(tagset), std::move(vectorizer));

    const auto e_shape = reader.header("emissions", 2);
    if (e_shape[0] != model.num_features() || e_shape[1] != model.num_tags()) reader.corrupt("emission shape");
    reader.rows(model.emission_weights);
    const auto a_shape = reader.header("transitions", 2);
    if (a_shape[0] != model.num_tags() || a_shape[1] != model.num_tags()) reader.corrupt("transition shape");
    reader.rows(model.transition_weights);

    const auto meta = ModelReader::split(reader.line());
    if (meta.size() != 7 || meta[0] != "meta" || meta[1] != "epochs" || meta[3] != "loss" || meta[5] != "seed")
        reader.corrupt("bad meta line");
    auto integer = [&](std::string_view text, auto& out) {
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        if (ec != std::errc{} || ptr != text.data() + text.size()) reader.corrupt("bad meta value");
    };
    integer(meta[2], model.meta.epochs);
    model.meta.final_loss = reader.number(meta[4]);
    integer(meta[6], model.meta.seed);
    if (!reader.done()) reader.corrupt("trailing data before checksum");
    return model;
}

}  // namespace ornatag
