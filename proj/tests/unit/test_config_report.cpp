#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "lab/config.hpp"
#include "lab/error.hpp"
#include "lab/report.hpp"
#include "lab/svg.hpp"

using namespace lab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("lab_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

  private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
    return out;
}

bool mentions(const ConfigCheck& c, const std::string& needle) {
    for (const auto& e : c.errors) {
        if (e.find(needle) != std::string::npos) return true;
    }
    return false;
}

json normalized(const std::string& toml) {
    auto c = normalize_config(parse_toml(toml));
    if (!c.ok()) throw Error(c.errors.front());
    return *c.config;
}

}  // namespace

TEST(Toml, ParsesSubset) {
    const json j = parse_toml(R"(# comment
experiment = "tsne"   # trailing
seed = 7
ratio = 2.5e-1
flag = true
path = 'C:\raw'

[params]
list = [1, 2,
        3]
names = ["a", "b#c"]
empty = []
)");
    EXPECT_EQ(j["experiment"], "tsne");
    EXPECT_EQ(j["seed"], 7);
    EXPECT_DOUBLE_EQ(j["ratio"].get<double>(), 0.25);
    EXPECT_EQ(j["flag"], true);
    EXPECT_EQ(j["path"], "C:\\raw");
    EXPECT_EQ(j["params"]["list"], json::array({1, 2, 3}));
    EXPECT_EQ(j["params"]["names"], json::array({"a", "b#c"}));
    EXPECT_TRUE(j["params"]["empty"].empty());
}

TEST(Toml, ReportsLine) {
    try {
        parse_toml("seed = 1\nexperiment = \n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_toml("seed = 1\nseed = 2\n"), Error);
    EXPECT_THROW(parse_toml("[params\n"), Error);
}

TEST(Config, MinimalGetsDefaults) {
    const json c = normalized("experiment = \"tuned_lens\"\nseed = 4\n");
    EXPECT_EQ(c["backend"], "toy");
    EXPECT_EQ(c["output_dir"], "runs/tuned_lens");
    EXPECT_EQ(c["toy"]["layers"], 8);
    EXPECT_EQ(c["toy"]["weights_seed"], 4);
    EXPECT_EQ(c["planted"]["seed"], 4);
    EXPECT_EQ(c["params"]["iterations"], 1000);
    EXPECT_DOUBLE_EQ(c["params"]["learning_rate"].get<double>(), 1e-3);
}

TEST(Config, ErrorsNameTheKey) {
    const auto unknown = normalize_config(parse_toml("experiment = \"tsne\"\nseed = 1\nbogus = 2\n[params]\nperplex = 3\n"));
    EXPECT_FALSE(unknown.ok());
    EXPECT_TRUE(mentions(unknown, "bogus"));
    EXPECT_TRUE(mentions(unknown, "params.perplex"));

    const auto no_seed = normalize_config(parse_toml("experiment = \"tsne\"\n"));
    EXPECT_TRUE(mentions(no_seed, "seed"));

    const auto bad_id = normalize_config(parse_toml("experiment = \"figure_nine\"\nseed = 1\n"));
    EXPECT_TRUE(mentions(bad_id, "figure_nine"));

    const auto bad_type = normalize_config(parse_toml("experiment = \"tsne\"\nseed = \"one\"\n"));
    EXPECT_TRUE(mentions(bad_type, "seed"));

    const auto bad_backend = normalize_config(parse_toml("experiment = \"tsne\"\nseed = 1\nbackend = \"gpu\"\n"));
    EXPECT_TRUE(mentions(bad_backend, "backend"));

    const auto bad_space = normalize_config(parse_toml("experiment = \"tsne\"\nseed = 1\n[planted]\nspace = 11\n"));
    EXPECT_TRUE(mentions(bad_space, "planted.space"));
}

TEST(Config, BackendOverride) {
    const json raw = parse_toml("experiment = \"tsne\"\nseed = 1\n");
    EXPECT_EQ((*normalize_config(raw, std::string("http://127.0.0.1:9")).config)["backend"], "http://127.0.0.1:9");

    TempDir dir("env");
    const fs::path file = dir.path() / "c.toml";
    std::ofstream(file) << "experiment = \"tsne\"\nseed = 1\nbackend = \"planted\"\n";
    ::setenv(std::string(kBackendEnv).c_str(), "http://localhost:8000", 1);
    const auto c = validate_config(file);
    ::unsetenv(std::string(kBackendEnv).c_str());
    ASSERT_TRUE(c.ok());
    EXPECT_EQ((*c.config)["backend"], "http://localhost:8000");
    EXPECT_EQ((*validate_config(file).config)["backend"], "planted");
    EXPECT_TRUE(mentions(validate_config(dir.path() / "missing.toml"), "cannot read"));
}

TEST(Config, HashIgnoresKeyOrder) {
    const json a = normalized("seed = 1\nexperiment = \"tsne\"\n");
    const json b = normalized("experiment = \"tsne\"\nseed = 1\n");
    const json c = normalized("experiment = \"tsne\"\nseed = 2\n");
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(config_hash(a).size(), 64u);
}

class Rerun : public ::testing::TestWithParam<const char*> {};

TEST_P(Rerun, ByteIdenticalArtifacts) {
    TempDir one("rerun_a"), two("rerun_b");
    json config = normalized(GetParam());
    config["output_dir"] = (one.path() / "out").string();
    const auto first = run_experiment(config);
    config["output_dir"] = (two.path() / "nested" / "out").string();
    const auto second = run_experiment(config);

    EXPECT_FALSE(first.partial);
    const auto a = contents(one.path() / "out");
    const auto b = contents(two.path() / "nested" / "out");
    ASSERT_GE(a.size(), 2u);
    EXPECT_EQ(a.count(".lock"), 0u);
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [name, bytes] : a) {
        ASSERT_TRUE(b.count(name)) << name;
        EXPECT_EQ(bytes, b.at(name)) << name;
    }
    EXPECT_EQ(first.manifest["config_hash"], second.manifest["config_hash"]);
    for (const auto& art : first.manifest["artifacts"]) EXPECT_TRUE(a.count(art["path"].get<std::string>()));
}

INSTANTIATE_TEST_SUITE_P(
    Experiments, Rerun,
    ::testing::Values("experiment = \"pair_screen\"\nseed = 1\n",
                      "experiment = \"logit_lens\"\nseed = 1\n[params]\nelements = [1, 12, 26]\n",
                      "experiment = \"attention\"\nseed = 2\n[toy]\nlayers = 3\n",
                      "experiment = \"number_distance\"\nseed = 3\nbackend = \"planted\"\n",
                      "experiment = \"rep_map\"\nseed = 1\n[params]\npairs = [\"group:period\"]\n",
                      "experiment = \"intervention\"\nseed = 5\nbackend = \"planted\"\n[planted]\nhidden = 64\n"));

TEST(Report, ManifestRecordsRun) {
    TempDir dir("manifest");
    json config = normalized("experiment = \"number_distance\"\nseed = 3\n");
    config["output_dir"] = dir.path().string();
    const auto out = run_experiment(config);
    const json m = json::parse(slurp(dir.path() / "manifest.json"));
    EXPECT_EQ(m, out.manifest);
    EXPECT_EQ(m["software"]["version"], std::string(software_version()));
    EXPECT_EQ(m["model"]["name"], "toy");
    EXPECT_EQ(m["model"]["layer_count"], 8);
    EXPECT_FALSE(m["config"].contains("output_dir"));
    EXPECT_EQ(m["partial"], false);
    EXPECT_TRUE(m["error"].is_null());
}

TEST(Report, LockedDirectoryIsRefused) {
    TempDir dir("lock");
    std::ofstream(dir.path() / ".lock") << "busy";
    json config = normalized("experiment = \"pair_screen\"\nseed = 1\n");
    config["output_dir"] = dir.path().string();
    EXPECT_THROW(run_experiment(config), Error);
    EXPECT_FALSE(fs::exists(dir.path() / "manifest.json"));
}

TEST(Report, UnreachableBackendMarksPartial) {
    TempDir dir("partial");
    json config = normalized("experiment = \"logit_lens\"\nseed = 1\nbackend = \"http://127.0.0.1:1\"\n");
    config["output_dir"] = dir.path().string();
    EXPECT_THROW(run_experiment(config), Error);
    const json m = json::parse(slurp(dir.path() / "manifest.json"));
    EXPECT_EQ(m["partial"], true);
    EXPECT_TRUE(m["error"].is_string());
    EXPECT_FALSE(fs::exists(dir.path() / ".lock"));
}

TEST(Svg, DeterministicAndEscaped) {
    svg::Panel p;
    p.title = "R<2> & co";
    p.lines.push_back({.label = "a", .x = {0, 1, 2}, .y = {0.1, std::nan(""), 0.9}, .lo = {0, 0, 0.8}, .hi = {0.2, 0.5, 1}});
    p.points.push_back({.x = {1, 2}, .y = {3, 4}, .value = {0, std::nan("")}});
    p.band = {{-0.1, 0.1}};
    svg::Panel h;
    h.heatmap = num::Matrix::Identity(3, 3);
    h.heatmap_labels = {"1", "2", "3"};
    const std::string a = svg::render({p, h, p});
    EXPECT_EQ(a, svg::render({p, h, p}));
    EXPECT_EQ(a.rfind("<svg", 0), 0u);
    EXPECT_EQ(a.substr(a.size() - 7), "</svg>\n");
    EXPECT_NE(a.find("R&lt;2&gt; &amp; co"), std::string::npos);
    EXPECT_EQ(a.find("R<2>"), std::string::npos);
    EXPECT_NE(a.find("width=\"760\" height=\"580\""), std::string::npos);
    EXPECT_NE(a.find("#bbbbbb"), std::string::npos);
    EXPECT_EQ(a.find("nan"), std::string::npos);
    EXPECT_NE(svg::render({}).find("</svg>"), std::string::npos);
}
