#include "sslvqa/config.hpp"
#include "sslvqa/errors.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace sslvqa;

TEST_CASE("published profile carries the published hyperparameters") {
    const TrainConfig c = RunConfig::defaults(Profile::Published).train_config();
    CHECK(c.lr == 1e-4);
    CHECK(c.weight_decay == 0.05);
    CHECK(c.epochs == 30);
    CHECK(c.tau == 10.0);
    CHECK(c.lambda_c == 1.0);
    CHECK(c.lambda_u == 1.0);
    CHECK(c.encoder.fragment.grid_h == 7);
    CHECK(c.encoder.fragment.patch == 32);
    CHECK(c.encoder.fragment.n_frames == 32);
    CHECK_FALSE(c.ridge.has_value());
    CHECK(RunConfig::defaults(Profile::Published).get_int("n_labelled") == 500);
}

TEST_CASE("desk profile validates") {
    const TrainConfig c = RunConfig::defaults(Profile::Desk).train_config();
    CHECK(c.encoder.fragment.height() == 32);
    CHECK(c.lr > 1e-4);
}

TEST_CASE("schema keys are unique and all defaults parse") {
    std::set<std::string> names;
    for (const ConfigKey& k : config_schema()) {
        CHECK(names.insert(k.name).second);
        CHECK_FALSE(k.help.empty());
    }
    for (Profile p : {Profile::Published, Profile::Desk}) {
        const RunConfig rc = RunConfig::defaults(p);
        CHECK(rc.values().size() == names.size());
    }
}

TEST_CASE("merge_text, comments and errors") {
    RunConfig rc = RunConfig::defaults(Profile::Desk);
    rc.merge_text("# a comment\n\n  lr = 0.5   # trailing\nseed=7\nridge = 1e-3\n");
    const TrainConfig c = rc.train_config();
    CHECK(c.lr == 0.5);
    CHECK(c.seed == 7);
    CHECK(c.ridge.value() == 1e-3);
    CHECK_THROWS_WITH_AS(rc.merge_text("learning_rate = 1\n"), doctest::Contains("learning_rate"), ConfigError);
    CHECK_THROWS_AS(rc.merge_text("lr 1\n"), ConfigError);
    rc.set("epochs", "ten");
    CHECK_THROWS_WITH_AS(rc.train_config(), doctest::Contains("epochs"), ConfigError);
    rc.set("epochs", "3");
    rc.set("seed", "-1");
    CHECK_THROWS_AS(rc.train_config(), ConfigError);
    rc.set("seed", "1");
    rc.set("no_knowledge", "maybe");
    CHECK_THROWS_AS(rc.train_config(), ConfigError);
    rc.set("no_knowledge", "yes");
    CHECK(rc.train_config().no_knowledge);
    rc.set("lr", "0");
    CHECK_THROWS_AS(rc.train_config(), ConfigError);
    CHECK_THROWS_AS(rc.merge_file("/nonexistent/cfg.txt"), ConfigError);
}

TEST_CASE("to_text round trips through a file") {
    const auto dir = testutil::scratch_dir("config");
    RunConfig a = RunConfig::defaults(Profile::Desk);
    a.set("lambda_c", "0.25");
    std::ofstream(dir / "c.txt") << a.to_text();
    RunConfig b = RunConfig::defaults(Profile::Published);
    b.merge_file(dir / "c.txt");
    CHECK(b.values() == a.values());
}

TEST_CASE("TrainConfig text form is exact") {
    TrainConfig c = RunConfig::defaults(Profile::Desk).train_config();
    c.lr = 0.1 + 0.2; // not exactly representable in short decimal form
    c.ridge = 1.0 / 3.0;
    c.no_consistency = true;
    c.seed = 18446744073709551615ull;
    CHECK(train_config_from_text(to_text(c)) == c);
    CHECK_THROWS_AS(train_config_from_text("bogus = 1\n"), ConfigError);
}
