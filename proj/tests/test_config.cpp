#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "doctest.h"
#include "nlr/config.hpp"
#include "nlr/errors.hpp"

using namespace nlr;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("nlr_cfg_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("presets") {
  const auto desk = RunConfig::from_preset("desk");
  const auto full = RunConfig::from_preset("full");
  CHECK(desk.train.batch_size == 2048);
  CHECK(desk.train.total_batches == 5000);
  CHECK(desk.train.lr == 1e-4);
  CHECK(desk.train.alpha_double_every == 1000);
  CHECK(full.train.batch_size == 50000);
  CHECK(full.train.total_batches == 150000);
  CHECK(full.train.lr == doctest::Approx(1e-4));
  CHECK(full.train.fields.sdf_width == 256);
  CHECK(full.train.weights.w_E == doctest::Approx(0.1));
  CHECK(full.train.weights.w_M == doctest::Approx(100));
  CHECK(full.train.weights.w_S == doctest::Approx(0.01));
  CHECK(full.train.weights.alpha == doctest::Approx(50));
  CHECK(full.mc.resolution == 512);
  CHECK(full.lumigraph.k == 5);
  CHECK_THROWS_AS(RunConfig::from_preset("huge"), InvalidArgument);
}

TEST_CASE("every key round-trips through to_json and set") {
  const RunConfig c = RunConfig::from_preset("full");
  const auto j = c.to_json();
  CHECK(j.size() == RunConfig::keys().size());
  RunConfig d = RunConfig::from_preset("desk");
  for (const auto& [k, v] : j.items()) {
    if (k == "preset") continue;
    d.set(k, v.is_string() ? v.get<std::string>() : v.dump());
  }
  d.preset = "full";
  CHECK(d.to_json() == j);
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("learning_rate", "1"), InvalidArgument);
  CHECK_THROWS_AS(c.set("lr", "fast"), InvalidArgument);
  CHECK_THROWS_AS(c.set("batch_size", "1.5"), InvalidArgument);
  CHECK_THROWS_AS(c.set("use_smoothness", "maybe"), InvalidArgument);
  CHECK_THROWS_AS(c.set("activation", "tanh"), InvalidArgument);
  CHECK_THROWS_AS(c.set("seed", "-3"), InvalidArgument);
  CHECK_THROWS_AS(resolve_config(nullptr, {"bogus=1"}), InvalidArgument);
  CHECK_THROWS_AS(resolve_config(nullptr, {"lr"}), ParseError);
  CHECK_THROWS_AS(resolve_config(nullptr, {"batch_size=0"}), InvalidArgument);
  CHECK_THROWS_AS(resolve_config(nullptr, {"mc_resolution=4"}), InvalidArgument);
}

TEST_CASE("layering: preset, then file, then overrides") {
  const auto kv = write_file("layer.cfg", "# comment\npreset = full\nlr = 2e-4  # trailing\n\nbatch_size=4096\n");
  auto c = resolve_config(&kv, {"batch_size=128", "use_smoothness=false"});
  CHECK(c.preset == "full");
  CHECK(c.train.fields.sdf_width == 256);
  CHECK(c.train.lr == doctest::Approx(2e-4));
  CHECK(c.train.batch_size == 128);
  CHECK_FALSE(c.train.use_smoothness);

  // A preset given on the command line still sits below the file values.
  c = resolve_config(&kv, {"preset=desk"});
  CHECK(c.preset == "desk");
  CHECK(c.train.fields.sdf_width == 64);
  CHECK(c.train.batch_size == 4096);

  const auto js = write_file("layer.json", R"({"preset": "desk", "lr": 0.001, "use_smoothness": false, "seed": 9})");
  c = resolve_config(&js, {});
  CHECK(c.train.lr == doctest::Approx(1e-3));
  CHECK(c.train.seed == 9);
  CHECK_FALSE(c.train.use_smoothness);

  CHECK(resolve_config(nullptr, {}).to_json() == RunConfig::from_preset("desk").to_json());
}

TEST_CASE("config file errors") {
  const fs::path missing = "/nonexistent/run.cfg";
  CHECK_THROWS_AS(resolve_config(&missing, {}), MissingFile);
  const auto bad = write_file("bad.cfg", "lr 1e-4\n");
  CHECK_THROWS_AS(resolve_config(&bad, {}), ParseError);
  const auto badjson = write_file("bad.json", "{\"lr\": [1, 2]}");
  CHECK_THROWS_AS(resolve_config(&badjson, {}), ParseError);
  const auto trunc = write_file("trunc.json", "{\"lr\": ");
  CHECK_THROWS_AS(resolve_config(&trunc, {}), ParseError);
}

TEST_CASE("manifest records command, build and resolved config") {
  const auto dir = fs::temp_directory_path() / "nlr_cfg_manifest";
  fs::remove_all(dir);
  const auto c = resolve_config(nullptr, {"seed=4"});
  write_manifest(dir, c, {"nlr", "train", "--seed", "4"}, {{"scene", "s"}});
  std::ifstream in(dir / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["command"].size() == 4);
  CHECK(j["git_hash"].get<std::string>() == build_git_hash());
  CHECK(j["config"]["seed"] == 4);
  CHECK(j["settings"]["scene"] == "s");
  CHECK(j["build"].contains("compiler"));
}
