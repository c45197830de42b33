#include <doctest.h>

#include "cli_harness.hpp"
#include "ornatag/combiner.hpp"
#include "ornatag/corpus.hpp"
#include "ornatag/tagger.hpp"

using namespace ornatag;
using namespace ornatag::testing;

namespace {

// Small corpus + trained model shared by the subcommand tests.
struct Fixture {
    TempDir dir;
    std::string tagset, corpus, model, melody;

    Fixture() {
        const auto synth = run_tool({"synth", "--default", "--melodies", "20", "--seed", "5", "--out",
                                     dir.file("corpus.txt"), "--tagset-out", dir.file("tags.txt")});
        REQUIRE(synth.code == 0);
        tagset = dir.file("tags.txt");
        corpus = dir.file("corpus.txt");
        model = dir.file("model.txt");
        melody = dir.write("melody.txt", "E5:1 D5:1/2 C5:4 D5:1 E5:2\n");
        const auto trained =
            run_tool({"train", "--corpus", corpus, "--tagset", tagset, "--out", model, "--epochs", "3"});
        REQUIRE(trained.code == 0);
    }
};

}  // namespace

TEST_CASE("cli usage errors exit 1") {
    CHECK(run_tool({}).code == 1);
    CHECK(run_tool({"frobnicate"}).code == 1);
    CHECK(run_tool({"train", "--tagset", "x", "--out", "y"}).code == 1);
    CHECK(run_tool({"synth", "--out", "x"}).code == 1);
    CHECK(run_tool({"tag", "--model", "m", "--out", "o"}).code == 1);
}

TEST_CASE("cli --version") {
    const auto run = run_tool({"--version"});
    CHECK(run.code == 0);
    CHECK(run.out.find("0.1.0") != std::string::npos);
    CHECK(run.out.find("ORNATAG-MODEL v1") != std::string::npos);
}

TEST_CASE("cli train") {
    Fixture fx;
    SUBCASE("writes a loadable model and one loss line per epoch") {
        const auto run = run_tool({"train", "--corpus", fx.corpus, "--tagset", fx.tagset, "--out",
                                   fx.dir.file("m2.txt"), "--epochs", "4"});
        CHECK(run.code == 0);
        int lines = 0;
        std::istringstream err(run.err);
        for (std::string line; std::getline(err, line);) {
            CHECK(line.rfind("epoch ", 0) == 0);
            CHECK(line.find(" loss ") != std::string::npos);
            ++lines;
        }
        CHECK(lines == 4);
        const auto model = load_model(fx.dir.read("m2.txt"));
        CHECK(model.meta.epochs == 4);
    }
    SUBCASE("corrupt corpus reports the line and exits 2") {
        const auto bad = fx.dir.write("bad.txt", "C4:1\tnone\nC4:1\tnosuchtag\n");
        const auto run = run_tool({"train", "--corpus", bad, "--tagset", fx.tagset, "--out", fx.dir.file("m3.txt")});
        CHECK(run.code == 2);
        CHECK(run.err.find("bad.txt:2") != std::string::npos);
    }
    SUBCASE("missing input file exits 2") {
        const auto run = run_tool({"train", "--corpus", fx.dir.file("nope.txt"), "--tagset", fx.tagset, "--out",
                                   fx.dir.file("m3.txt")});
        CHECK(run.code == 2);
    }
    SUBCASE("config file values apply unless a flag overrides them") {
        const auto config = fx.dir.write("train.cfg", "# training\nepochs = 2\nseed=9\n");
        auto run = run_tool({"train", "--corpus", fx.corpus, "--tagset", fx.tagset, "--out", fx.dir.file("c1.txt"),
                             "--config", config});
        CHECK(run.code == 0);
        CHECK(load_model(fx.dir.read("c1.txt")).meta.epochs == 2);
        CHECK(load_model(fx.dir.read("c1.txt")).meta.seed == 9);
        run = run_tool({"train", "--corpus", fx.corpus, "--tagset", fx.tagset, "--out", fx.dir.file("c2.txt"),
                        "--config", config, "--epochs", "1"});
        CHECK(run.code == 0);
        CHECK(load_model(fx.dir.read("c2.txt")).meta.epochs == 1);
    }
    SUBCASE("unknown config key is rejected") {
        const auto config = fx.dir.write("bad.cfg", "epochs=2\nlearning_rate=3\n");
        const auto run = run_tool({"train", "--corpus", fx.corpus, "--tagset", fx.tagset, "--out",
                                   fx.dir.file("c3.txt"), "--config", config});
        CHECK(run.code == 2);
        CHECK(run.err.find("learning_rate") != std::string::npos);
    }
}

TEST_CASE("cli tag") {
    Fixture fx;
    const auto rules = fx.dir.write("rules.txt", "IF duration(@t) > 3 THEN tag(@t) = trills\n");
    const auto empty_rules = fx.dir.write("empty.txt", "# nothing\n");

    SUBCASE("no rules and an empty rule file give the same tagging") {
        CHECK(run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--out", fx.dir.file("a.txt")}).code == 0);
        CHECK(run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", empty_rules, "--out",
                        fx.dir.file("b.txt")})
                  .code == 0);
        CHECK(fx.dir.read("a.txt") == fx.dir.read("b.txt"));

        const auto model = load_model(read_file(fx.model));
        const auto melody = parse_melody(fx.dir.read("melody.txt"));
        const auto expected = decode(posterior_marginals(model, melody));
        const auto tagged = parse_corpus(fx.dir.read("a.txt"), model.tagset);
        REQUIRE(tagged.entries.size() == 1);
        CHECK(tagged.entries[0].tags == expected);
    }

    SUBCASE("a large weight forces the rule's tag and --explain logs it") {
        const auto run = run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", rules, "--h1",
                                   "1000", "--explain", "--out", fx.dir.file("t.txt")});
        CHECK(run.code == 0);
        const auto tagged = parse_corpus(fx.dir.read("t.txt"), parse_tagset(read_file(fx.tagset)));
        CHECK(tagged.entries[0].tags[2] == *tagged.tagset.index_of("trills"));
        CHECK(fx.dir.read("t.txt.explain") == "line:1 pos:2 tag:trills x1000\n");
    }

    SUBCASE("config h1 sits between the directive and the flag") {
        const auto directive = fx.dir.write("dir.txt", "H1 1000\nIF duration(@t) > 3 THEN tag(@t) = trills\n");
        const auto config = fx.dir.write("tag.cfg", "h1=3\n");
        run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", directive, "--explain", "--out",
                  fx.dir.file("d1.txt")});
        CHECK(fx.dir.read("d1.txt.explain") == "line:2 pos:2 tag:trills x1000\n");
        run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", directive, "--config", config,
                  "--explain", "--out", fx.dir.file("d2.txt")});
        CHECK(fx.dir.read("d2.txt.explain") == "line:2 pos:2 tag:trills x3\n");
        run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", directive, "--config", config,
                  "--h1", "5", "--explain", "--out", fx.dir.file("d3.txt")});
        CHECK(fx.dir.read("d3.txt.explain") == "line:2 pos:2 tag:trills x5\n");
    }

    SUBCASE("several melodies, threads and score dumps") {
        const auto second = fx.dir.write("m2.txt", "C4:1 D4:1 E4:4\n");
        CHECK(run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--melody", second, "--rules", rules,
                        "--out", fx.dir.file("s1.txt"), "--scores", fx.dir.file("s1.scores")})
                  .code == 0);
        CHECK(run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--melody", second, "--rules", rules,
                        "--jobs", "4", "--out", fx.dir.file("s2.txt"), "--scores", fx.dir.file("s2.scores")})
                  .code == 0);
        CHECK(fx.dir.read("s1.txt") == fx.dir.read("s2.txt"));
        CHECK(fx.dir.read("s1.scores") == fx.dir.read("s2.scores"));
        CHECK(parse_corpus(fx.dir.read("s1.txt"), parse_tagset(read_file(fx.tagset))).entries.size() == 2);
    }

    SUBCASE("bad rule file exits 2 with line and column") {
        const auto bad = fx.dir.write("bad.rules", "IF duration(@t) > 3 THEN tag(@t) = trills\nIF pitch(@t) > 3 THEN tag(@t) = trills\n");
        const auto run = run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", bad, "--out",
                                   fx.dir.file("x.txt")});
        CHECK(run.code == 2);
        CHECK(run.err.find("bad.rules:2:") != std::string::npos);
    }

    SUBCASE("rules naming a tag the model lacks exit 2") {
        const auto bad = fx.dir.write("alien.rules", "IF duration(@t) > 3 THEN tag(@t) = glissando\n");
        CHECK(run_tool({"tag", "--model", fx.model, "--melody", fx.melody, "--rules", bad, "--out",
                        fx.dir.file("x.txt")})
                  .code == 2);
    }

    SUBCASE("corrupt model exits 2") {
        auto text = read_file(fx.model);
        text[text.size() / 2] ^= 0x01;
        const auto bad = fx.dir.write("bad.model", text);
        CHECK(run_tool({"tag", "--model", bad, "--melody", fx.melody, "--out", fx.dir.file("x.txt")}).code == 2);
    }
}

TEST_CASE("cli eval") {
    Fixture fx;
    const auto plain = run_tool({"eval", "--model", fx.model, "--corpus", fx.corpus});
    CHECK(plain.code == 0);
    CHECK(plain.out.rfind("{\"token_accuracy\": ", 0) == 0);
    CHECK(plain.out.find("\"rule_satisfaction\": 1.000000") != std::string::npos);

    const auto rules = fx.dir.write("rules.txt", "IF duration(@t) > 3 THEN tag(@t) = trills WEIGHT 1000\n");
    const auto with_rules = run_tool({"eval", "--model", fx.model, "--corpus", fx.corpus, "--rules", rules});
    CHECK(with_rules.code == 0);
    CHECK(with_rules.out.find("\"rule_satisfaction\": 1.000000") != std::string::npos);

    const auto empty = fx.dir.write("empty.txt", "");
    CHECK(run_tool({"eval", "--model", fx.model, "--corpus", empty}).code == 2);
}

TEST_CASE("cli synth") {
    TempDir dir;
    CHECK(run_tool({"synth", "--default", "--melodies", "5", "--seed", "3", "--out", dir.file("a.txt")}).code == 0);
    CHECK(run_tool({"synth", "--default", "--melodies", "5", "--seed", "3", "--out", dir.file("b.txt")}).code == 0);
    CHECK(dir.read("a.txt") == dir.read("b.txt"));
    CHECK(parse_corpus(dir.read("a.txt"), default_tagset()).entries.size() == 5);

    const auto zero = run_tool({"synth", "--default", "--melodies", "0", "--out", dir.file("z.txt")});
    CHECK(zero.code == 0);
    CHECK(zero.err.find("warning") != std::string::npos);
    CHECK(dir.read("z.txt").empty());

    const auto profile = dir.write("p.json", R"({"tags": ["none", "slide"], "melody_length_range": [3, 3]})");
    CHECK(run_tool({"synth", "--profile", profile, "--melodies", "2", "--out", dir.file("p.txt")}).code == 0);
    CHECK(run_tool({"synth", "--profile", profile, "--default", "--out", dir.file("p.txt")}).code == 1);
    const auto broken = dir.write("broken.json", "{");
    CHECK(run_tool({"synth", "--profile", broken, "--out", dir.file("p.txt")}).code == 2);
}

TEST_CASE("cli rules-check") {
    TempDir dir;
    const auto tags = dir.write("tags.txt", "none\ntrills\nmordent\n");
    const auto rules = dir.write("r.txt",
                                 "# comment\n"
                                 "IF duration(@t) > 3 THEN tag(@t) = trills\n"
                                 "IF pred(@t-1) == trills THEN tag(@t) = mordent WEIGHT 1.5\n");
    const auto run = run_tool({"rules-check", rules, "--tagset", tags});
    CHECK(run.code == 0);
    CHECK(run.out ==
          "line 2: Type1 tag=trills weight=default\n"
          "line 3: Type2 tag=mordent weight=1.5\n");

    const auto bad = dir.write("bad.txt", "IF duration(@t) >> 3 THEN tag(@t) = trills\n");
    const auto failed = run_tool({"rules-check", bad, "--tagset", tags});
    CHECK(failed.code == 2);
    CHECK(failed.err.find("bad.txt:1:") != std::string::npos);
}
