#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "toca/cli.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("toca_test_" + name + "_" +
                                                      std::to_string(::getpid()));
    fs::remove_all(dir);
    return dir;
}

const char* kToy = R"([model]
depth = 2
hidden = 8
heads = 2
grid_h = 4
grid_w = 4
num_classes = 4

[sampler]
steps = 6
seed = 3
)";

std::string message_of(std::string_view text) {
    try {
        toca::parse_config(text);
    } catch (const toca::ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(ParseConfig, EmptyTextGivesDitDefaults) {
    const auto c = toca::parse_config("");
    EXPECT_EQ(c.profile, toca::Profile::TocaDit);
    ASSERT_TRUE(c.cache.has_value());
    EXPECT_EQ(*c.cache, *toca::profile_schedule(toca::Profile::TocaDit));
    EXPECT_EQ(c.sampler.steps, 20u);

    const auto off = toca::parse_config("[cache]\nprofile = off\nratio = 0.5\n");
    EXPECT_FALSE(off.cache.has_value());
    EXPECT_EQ(toca::parse_config("", toca::Profile::NaiveFull).cache->ratio, 1.0);
}

TEST(ParseConfig, CacheKeysOverrideProfileDefaults) {
    const auto c = toca::parse_config("[cache]\nprofile = toca-pixart\nratio = 0.5\n# note\n");
    EXPECT_EQ(c.profile, toca::Profile::TocaPixart);
    EXPECT_EQ(c.cache->ratio, 0.5);
    EXPECT_EQ(c.cache->base_cycle, 2.0);
}

TEST(ParseConfig, ErrorsNameTheLine) {
    const auto bad_ratio = message_of("[cache]\n\nratio = 1.5\n");
    EXPECT_NE(bad_ratio.find("line 3"), std::string::npos) << bad_ratio;
    EXPECT_NE(bad_ratio.find("ratio"), std::string::npos) << bad_ratio;

    EXPECT_NE(message_of("[sampler]\nspeed = 2\n").find("line 2"), std::string::npos);
    EXPECT_NE(message_of("[weights]\n").find("unknown section"), std::string::npos);
    EXPECT_NE(message_of("[sampler]\nsteps = 2\nsteps = 3\n").find("duplicate"), std::string::npos);
    EXPECT_NE(message_of("steps = 2\n").find("line 1"), std::string::npos);
    EXPECT_FALSE(message_of("[sampler]\nsteps = two\n").empty());
    EXPECT_FALSE(message_of("[sampler]\nsteps = 0\n").empty());
    EXPECT_FALSE(message_of("[model]\nhidden = 10\nheads = 4\n").empty());
    EXPECT_FALSE(message_of("[output]\nformats = csv,svg\n").empty());
    EXPECT_THROW(toca::load_config("/nonexistent/toca.ini"), toca::ConfigError);
}

TEST(ParseConfig, RoundTrip) {
    auto c = toca::parse_config(std::string(kToy) +
                                "guidance = 4.1\nkind = ddim\ncfg = true\n"
                                "[cache]\nratio = 0.37\nfixed_window = 4,8,2\n"
                                "[output]\nformats = csv,pgm\n"
                                "[analysis]\nlayers = 0,1\nsite_type = mlp\nsigma = 0.125\n"
                                "noise_scale = relative\n");
    EXPECT_EQ(toca::parse_config(toca::serialize_config(c)), c);
    EXPECT_EQ(toca::config_hash(toca::parse_config(toca::serialize_config(c))), toca::config_hash(c));
    EXPECT_EQ(toca::config_hash(c).size(), 16u);
    auto other = c;
    other.sampler.seed += 1;
    EXPECT_NE(toca::config_hash(other), toca::config_hash(c));

    const auto off = toca::parse_config("[cache]\nprofile = off\n");
    EXPECT_EQ(toca::parse_config(toca::serialize_config(off)), off);
}

TEST(ParseConfig, SeedFromEnvironment) {
    auto c = toca::parse_config(kToy);
    ::setenv("TOCA_SEED", "42", 1);
    toca::apply_environment(c);
    EXPECT_EQ(c.sampler.seed, 42u);
    ::setenv("TOCA_SEED", "x", 1);
    EXPECT_THROW(toca::apply_environment(c), toca::ConfigError);
    ::unsetenv("TOCA_SEED");
    toca::apply_environment(c);
    EXPECT_EQ(c.sampler.seed, 42u);
}

TEST(Output, AtomicWriteAndHeaders) {
    const fs::path dir = scratch("atomic");
    toca::write_file_atomic(dir / "a" / "b.txt", "hello");
    EXPECT_EQ(slurp(dir / "a" / "b.txt"), "hello");
    toca::write_file_atomic(dir / "a" / "b.txt", "bye");
    EXPECT_EQ(slurp(dir / "a" / "b.txt"), "bye");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "a")) ++files;
    EXPECT_EQ(files, 1u);

    const auto c = toca::parse_config(kToy);
    EXPECT_EQ(toca::header_line(c), "# toca config_hash=" + toca::config_hash(c) + "\n");
    const auto j = nlohmann::ordered_json::parse(toca::with_hash(c, R"({"a":1})"));
    EXPECT_EQ(j.begin().key(), "config_hash");
    EXPECT_EQ(j["a"], 1);
    EXPECT_THROW(toca::verify_artifacts({{dir / "missing"}, ""}), std::runtime_error);
    fs::remove_all(dir);
}

TEST(Commands, SampleOffAndZeroRatioGiveIdenticalImages) {
    const fs::path dir = scratch("sample");
    auto off = toca::parse_config(std::string(kToy) + "samples = 2\n[cache]\nprofile = off\n");
    off.output.dir = (dir / "off").string();
    auto zero = toca::parse_config(std::string(kToy) + "samples = 2\n[cache]\nratio = 0\n");
    zero.output.dir = (dir / "zero").string();
    const auto a = toca::cmd_sample(off);
    const auto b = toca::cmd_sample(zero);
    for (const char* name : {"x0_3.f32", "x0_4.f32"}) {
        const std::string x = slurp(dir / "off" / name);
        EXPECT_EQ(x.size(), 16u * 8u * 4u);
        EXPECT_EQ(x, slurp(dir / "zero" / name)) << name;
    }
    EXPECT_TRUE(fs::exists(dir / "zero" / "frequency_3.pgm"));
    EXPECT_FALSE(fs::exists(dir / "off" / "frequency_3.pgm"));
    const std::string csv = slurp(dir / "zero" / "dispatches_3.csv");
    EXPECT_EQ(csv.rfind(toca::header_line(zero), 0), 0u);
    const auto stats = nlohmann::json::parse(slurp(dir / "zero" / "stats_3.json"));
    EXPECT_EQ(stats["config_hash"], toca::config_hash(zero));
    EXPECT_EQ(stats["cached_token_events"], 0);

    // Reruns are byte-identical.
    std::vector<std::string> first;
    for (const auto& p : b.artifacts) first.push_back(slurp(p));
    const auto again = toca::cmd_sample(zero);
    ASSERT_EQ(again.artifacts.size(), first.size());
    for (std::size_t k = 0; k < first.size(); ++k) EXPECT_EQ(slurp(again.artifacts[k]), first[k]);
    EXPECT_FALSE(a.artifacts.empty());
    fs::remove_all(dir);
}

TEST(Commands, AnalyzeWithZeroSigmaWritesZeroErrors) {
    const fs::path dir = scratch("analyze");
    auto c = toca::parse_config(std::string(kToy) + "[analysis]\nsigma = 0\nsite_layer = 1\n");
    c.output.dir = dir.string();
    toca::cmd_analyze(c, toca::Analysis::Propagation);
    std::istringstream csv(slurp(dir / "propagation.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("# toca", 0), 0u);
    std::getline(csv, line);
    EXPECT_EQ(line, "token,error,normalized_error");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        EXPECT_EQ(line, std::to_string(rows) + ",0,0");
        ++rows;
    }
    EXPECT_EQ(rows, 16u);

    toca::cmd_analyze(c, toca::Analysis::Redundancy);
    EXPECT_TRUE(fs::exists(dir / "redundancy.csv"));
    EXPECT_TRUE(fs::exists(dir / "redundancy.json"));
    fs::remove_all(dir);
}

TEST(Commands, BenchAtDitScale) {
    const fs::path dir = scratch("bench");
    auto c = toca::parse_config(
        "[model]\ndepth = 28\nhidden = 1152\nheads = 16\ngrid_h = 16\ngrid_w = 16\n"
        "num_classes = 1000\n[sampler]\nsteps = 50\nkind = ddim\ncfg = true\n");
    c.output.dir = dir.string();
    const auto r = toca::cmd_bench(c);
    const auto j = nlohmann::json::parse(slurp(dir / "flops.json"));
    const double speedup = j["speedup"].get<double>();
    EXPECT_GE(speedup, 2.32 * 0.85);
    EXPECT_LE(speedup, 2.32 * 1.15);
    EXPECT_LT(j["overhead_share"].get<double>(), 0.01);
    EXPECT_FALSE(r.summary.empty());

    toca::cmd_report(c);
    EXPECT_EQ(toca::load_config(dir / "config.ini"), c);
    fs::remove_all(dir);
}
