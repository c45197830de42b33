#include "ornatag/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <thread>

#include "ornatag/combiner.hpp"
#include "ornatag/corpus.hpp"
#include "ornatag/rules.hpp"
#include "ornatag/score_model.hpp"
#include "ornatag/tagger.hpp"

namespace ornatag {

namespace {

constexpr std::string_view kConfigKeys[] = {"epochs", "step_size", "l2", "batch", "seed", "h1", "h2"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<double> CliConfig::real(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    double value = 0.0;
    const auto& text = it->second;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorKind::InvalidArgument, "config value for '" + key + "' is not a number");
    return value;
}

std::optional<long long> CliConfig::integer(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    long long value = 0;
    const auto& text = it->second;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorKind::InvalidArgument, "config value for '" + key + "' is not an integer");
    return value;
}

CliConfig parse_cli_config(std::string_view text) {
    CliConfig config;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw Error(ErrorKind::SyntaxError, "expected key=value", line_no, 1, std::string(line));
            const std::string key(trim(line.substr(0, eq)));
            const std::string value(trim(line.substr(eq + 1)));
            if (std::find(std::begin(kConfigKeys), std::end(kConfigKeys), key) == std::end(kConfigKeys))
                throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'", line_no, 1, key);
            config.values[key] = value;
        }
        if (end == text.size()) break;
        start = end + 1;
    }
    return config;
}

namespace {

// Unwinds a subcommand with a fixed exit code after the message is printed.
struct CliExit {
    int code;
};

class Session {
public:
    Session(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    std::ostream& out() { return out_; }
    std::ostream& err() { return err_; }

    // Runs `parse` on the contents of `path`; any parse error is an input
    // problem (exit 2) reported with a `path:line:column:` prefix.
    template <typename Fn>
    auto load(const std::string& path, Fn&& parse) {
        std::string contents;
        try {
            contents = read_file(path);
        } catch (const std::runtime_error& e) {
            err_ << "error: " << e.what() << "\n";
            throw CliExit{kExitInput};
        }
        try {
            return parse(contents);
        } catch (const Error& e) {
            err_ << path;
            if (e.line() > 0) err_ << ":" << e.line();
            if (e.column() > 0) err_ << ":" << e.column();
            err_ << ": " << e.what() << "\n";
            throw CliExit{kExitInput};
        }
    }

    void save(const std::string& path, std::string_view contents) {
        try {
            write_file(path, contents);
        } catch (const std::runtime_error& e) {
            err_ << "error: " << e.what() << "\n";
            throw CliExit{kExitRuntime};
        }
    }

private:
    std::ostream& out_;
    std::ostream& err_;
};

struct TrainArgs {
    std::string corpus, tagset, out, config;
    int epochs = 50;
    double step = 0.1;
    double l2 = 0.01;
    int batch = 32;
    std::uint64_t seed = 1;
    std::vector<std::string> withhold;
};

struct TagArgs {
    std::string model, rules, out, config, scores;
    std::vector<std::string> melodies;
    double h1 = kDefaultConfidence;
    double h2 = kDefaultConfidence;
    bool explain = false;
    bool normalize = false;
    int jobs = 1;
};

struct EvalArgs {
    std::string model, corpus, rules, config;
    double h1 = kDefaultConfidence;
    double h2 = kDefaultConfidence;
};

struct SynthArgs {
    std::string profile, out, tagset_out;
    bool use_default = false;
    long long melodies = 200;
    std::uint64_t seed = 7;
};

struct RulesCheckArgs {
    std::string rules, tagset;
};

CliConfig load_config(Session& session, const std::string& path) {
    if (path.empty()) return {};
    return session.load(path, [](const std::string& text) { return parse_cli_config(text); });
}

// Flag > config file > current value.
template <typename T>
void resolve(T& target, const CLI::Option* flag, const std::optional<T>& from_file) {
    if (flag->count() > 0) return;
    if (from_file) target = *from_file;
}

template <typename T>
std::optional<T> narrow(const std::optional<long long>& v) {
    if (!v) return std::nullopt;
    return static_cast<T>(*v);
}

int cmd_train(Session& session, TrainArgs args, const CLI::App& cmd) {
    const CliConfig config = load_config(session, args.config);
    try {
        resolve(args.epochs, cmd.get_option("--epochs"), narrow<int>(config.integer("epochs")));
        resolve(args.step, cmd.get_option("--step"), config.real("step_size"));
        resolve(args.l2, cmd.get_option("--l2"), config.real("l2"));
        resolve(args.batch, cmd.get_option("--batch"), narrow<int>(config.integer("batch")));
        resolve(args.seed, cmd.get_option("--seed"), narrow<std::uint64_t>(config.integer("seed")));
    } catch (const Error& e) {
        session.err() << args.config << ": " << e.what() << "\n";
        return kExitInput;
    }

    const TagSet tagset = session.load(args.tagset, [](const std::string& text) { return parse_tagset(text); });
    const TaggedCorpus corpus =
        session.load(args.corpus, [&](const std::string& text) { return parse_corpus(text, tagset); });

    TrainConfig train_config;
    train_config.epochs = args.epochs;
    train_config.step_size = args.step;
    train_config.l2 = args.l2;
    train_config.batch = args.batch;
    train_config.seed = args.seed;
    train_config.withheld_features = args.withhold;
    train_config.on_epoch = [&](int epoch, double loss) {
        char line[96];
        std::snprintf(line, sizeof line, "epoch %d loss %.6f\n", epoch, loss);
        session.err() << line;
    };
    const TaggerModel model = train(corpus, train_config);
    session.save(args.out, save_model(model));
    return kExitOk;
}

RuleSet load_rules(Session& session, const std::string& path, const TagSet& tagset) {
    if (path.empty()) return {};
    return session.load(path, [&](const std::string& text) { return parse_rules(text, tagset); });
}

// Directive defaults are replaced by config-file values and then by flags.
void apply_confidences(RuleSet& rules, double h1, const CLI::Option* h1_flag, double h2, const CLI::Option* h2_flag,
                       const CliConfig& config) {
    if (h1_flag->count() > 0) rules.h1 = h1;
    else if (const auto v = config.real("h1")) rules.h1 = *v;
    if (h2_flag->count() > 0) rules.h2 = h2;
    else if (const auto v = config.real("h2")) rules.h2 = *v;
    if (!(rules.h1 > 0.0) || !(rules.h2 > 0.0)) throw Error(ErrorKind::NonpositiveWeight, "h1 and h2 must be positive");
}

std::string format_scores(const Eigen::MatrixXd& scores) {
    std::string out;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
            if (c > 0) out += ' ';
            out += format_weight(scores(r, c));
        }
        out += '\n';
    }
    return out;
}

int cmd_tag(Session& session, TagArgs args, const CLI::App& cmd) {
    const CliConfig config = load_config(session, args.config);
    const TaggerModel model =
        session.load(args.model, [](const std::string& text) { return load_model(text); });
    RuleSet rules = load_rules(session, args.rules, model.tagset);
    try {
        apply_confidences(rules, args.h1, cmd.get_option("--h1"), args.h2, cmd.get_option("--h2"), config);
    } catch (const Error& e) {
        session.err() << "error: " << e.what() << "\n";
        return kExitInput;
    }

    std::vector<Melody> melodies;
    for (const auto& path : args.melodies)
        melodies.push_back(session.load(path, [](const std::string& text) { return parse_melody(text); }));

    std::vector<KnowledgeTagging> results(melodies.size());
    const auto workers = static_cast<std::size_t>(std::max(1, args.jobs));
    if (workers == 1 || melodies.size() < 2) {
        for (std::size_t i = 0; i < melodies.size(); ++i) results[i] = tag_with_knowledge(model, rules, melodies[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, melodies.size()); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < melodies.size(); i = next++)
                    results[i] = tag_with_knowledge(model, rules, melodies[i]);
            });
        }
    }

    TaggedCorpus tagged{model.tagset, {}};
    std::string explain;
    std::string scores;
    for (std::size_t i = 0; i < melodies.size(); ++i) {
        tagged.entries.push_back({melodies[i], results[i].final});
        if (i > 0) {
            explain += '\n';
            scores += '\n';
        }
        for (const auto& firing : results[i].firing_log) {
            explain += "line:" + std::to_string(firing.source_line) + " pos:" + std::to_string(firing.position) +
                       " tag:" + model.tagset.name(firing.tag) + " x" + format_weight(firing.weight) + "\n";
        }
        scores += format_scores(args.normalize ? normalize_columns(results[i].combined) : results[i].combined);
    }
    session.save(args.out, serialize_corpus(tagged));
    if (args.explain) session.save(args.out + ".explain", explain);
    if (!args.scores.empty()) session.save(args.scores, scores);
    return kExitOk;
}

int cmd_eval(Session& session, EvalArgs args, const CLI::App& cmd) {
    const CliConfig config = load_config(session, args.config);
    const TaggerModel model =
        session.load(args.model, [](const std::string& text) { return load_model(text); });
    const TaggedCorpus corpus =
        session.load(args.corpus, [&](const std::string& text) { return parse_corpus(text, model.tagset); });
    RuleSet rules = load_rules(session, args.rules, model.tagset);
    try {
        apply_confidences(rules, args.h1, cmd.get_option("--h1"), args.h2, cmd.get_option("--h2"), config);
    } catch (const Error& e) {
        session.err() << "error: " << e.what() << "\n";
        return kExitInput;
    }

    std::vector<StateSequence> predictions;
    SatisfactionCount satisfaction;
    for (const auto& entry : corpus.entries) {
        auto tagged = tag_with_knowledge(model, rules, entry.melody);
        satisfaction += count_rule_satisfaction(tagged.final, entry.melody, rules, tagged.base);
        predictions.push_back(std::move(tagged.final));
    }
    Metrics metrics = evaluate(predictions, corpus);
    metrics.rule_satisfaction = satisfaction.rate();
    session.out() << metrics_to_json(metrics, model.tagset);
    return kExitOk;
}

int cmd_synth(Session& session, const SynthArgs& args) {
    if (args.profile.empty() == !args.use_default) {
        session.err() << "error: pass exactly one of --profile or --default\n";
        return kExitUsage;
    }
    if (args.melodies < 0) {
        session.err() << "error: --melodies must be nonnegative\n";
        return kExitUsage;
    }
    const SynthProfile profile =
        args.use_default ? default_profile()
                         : session.load(args.profile, [](const std::string& text) { return parse_profile(text); });
    const TaggedCorpus corpus = generate_synthetic(profile, static_cast<std::size_t>(args.melodies), args.seed);
    if (corpus.entries.empty()) session.err() << "warning: --melodies 0 produced an empty corpus\n";
    session.save(args.out, serialize_corpus(corpus));
    if (!args.tagset_out.empty()) session.save(args.tagset_out, serialize_tagset(profile.tagset));
    return kExitOk;
}

int cmd_rules_check(Session& session, const RulesCheckArgs& args) {
    const TagSet tagset = session.load(args.tagset, [](const std::string& text) { return parse_tagset(text); });
    const RuleSet rules = session.load(args.rules, [&](const std::string& text) { return parse_rules(text, tagset); });
    for (const auto& rule : rules.rules) session.out() << describe_rule(rule, tagset) << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Playing-technique tagging for monophonic melodies with rule-based knowledge fusion", "ornatag"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("ornatag ") + std::string(kToolVersion) + " (model format " +
                                          std::string(kModelMagic) + " v" + std::to_string(kModelFormatVersion) + ")");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the base CRF tagger on a tagged corpus");
    train_cmd->add_option("--corpus", train_args.corpus, "Tagged corpus (note<TAB>tag)")->required();
    train_cmd->add_option("--tagset", train_args.tagset, "Tag set file")->required();
    train_cmd->add_option("--out", train_args.out, "Model output path")->required();
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--step", train_args.step, "Gradient step size")->capture_default_str();
    train_cmd->add_option("--l2", train_args.l2, "L2 regularization strength")->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch, "Melodies per mini-batch")->capture_default_str();
    train_cmd->add_option("--seed", train_args.seed, "Shuffle seed")->capture_default_str();
    train_cmd->add_option("--withhold", train_args.withhold, "Feature name to leave out of the model (repeatable)");
    train_cmd->add_option("--config", train_args.config, "key=value configuration file");

    TagArgs tag_args;
    auto* tag_cmd = app.add_subcommand("tag", "Tag melodies, optionally fusing rule knowledge");
    tag_cmd->add_option("--model", tag_args.model, "Model file")->required();
    tag_cmd->add_option("--melody", tag_args.melodies, "Melody file (repeatable)")->required();
    tag_cmd->add_option("--rules", tag_args.rules, "Rule file");
    tag_cmd->add_option("--h1", tag_args.h1, "Default confidence of observation rules");
    tag_cmd->add_option("--h2", tag_args.h2, "Default confidence of state rules");
    tag_cmd->add_flag("--explain", tag_args.explain, "Write the firing log to <out>.explain");
    tag_cmd->add_option("--scores", tag_args.scores, "Write the combined score matrices here");
    tag_cmd->add_flag("--normalize", tag_args.normalize, "Renormalize columns of --scores output");
    tag_cmd->add_option("--jobs", tag_args.jobs, "Worker threads")->capture_default_str();
    tag_cmd->add_option("--out", tag_args.out, "Tagged output (note<TAB>tag)")->required();
    tag_cmd->add_option("--config", tag_args.config, "key=value configuration file");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score tagging against a gold corpus; metrics JSON on stdout");
    eval_cmd->add_option("--model", eval_args.model, "Model file")->required();
    eval_cmd->add_option("--corpus", eval_args.corpus, "Gold corpus")->required();
    eval_cmd->add_option("--rules", eval_args.rules, "Rule file");
    eval_cmd->add_option("--h1", eval_args.h1, "Default confidence of observation rules");
    eval_cmd->add_option("--h2", eval_args.h2, "Default confidence of state rules");
    eval_cmd->add_option("--config", eval_args.config, "key=value configuration file");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic tagged corpus");
    synth_cmd->add_option("--profile", synth_args.profile, "JSON synthesis profile");
    synth_cmd->add_flag("--default", synth_args.use_default, "Use the built-in profile");
    synth_cmd->add_option("--melodies", synth_args.melodies, "Number of melodies")->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--out", synth_args.out, "Corpus output path")->required();
    synth_cmd->add_option("--tagset-out", synth_args.tagset_out, "Also write the profile's tag set here");

    RulesCheckArgs rules_args;
    auto* rules_cmd = app.add_subcommand("rules-check", "Parse a rule file and report each rule's class");
    rules_cmd->add_option("rules", rules_args.rules, "Rule file")->required();
    rules_cmd->add_option("--tagset", rules_args.tagset, "Tag set file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    Session session(out, err);
    try {
        if (*train_cmd) return cmd_train(session, train_args, *train_cmd);
        if (*tag_cmd) return cmd_tag(session, tag_args, *tag_cmd);
        if (*eval_cmd) return cmd_eval(session, eval_args, *eval_cmd);
        if (*synth_cmd) return cmd_synth(session, synth_args);
        if (*rules_cmd) return cmd_rules_check(session, rules_args);
    } catch (const CliExit& e) {
        return e.code;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.is_input_error() ? kExitInput : kExitRuntime;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace ornatag
