#include "nlr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "nlr/errors.hpp"

#ifndef NLR_GIT_HASH
#define NLR_GIT_HASH "unknown"
#endif

namespace nlr {
namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw InvalidArgument("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InvalidArgument("config: " + key + " expects true or false, got '" + v + "'");
}

// Registry entry: how to read a key from the config and write it back.
struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<ordered_json(const RunConfig&)> get;
};

template <typename M>
Key int_key(const char* name, M member) {
  return {name, [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<int>(parse_int(k, v));
          },
          [member](const RunConfig& c) { return ordered_json(c.*member); }};
}

// Keys reaching into nested structs go through accessor lambdas.
#define NLR_KEY(NAME, EXPR, PARSE)                                                                 \
  Key {                                                                                            \
    NAME, [](RunConfig& c, const std::string& k, const std::string& v) { EXPR = PARSE(k, v); }, \
        [](const RunConfig& c) { return ordered_json(EXPR); }                                     \
  }

int parse_int32(const std::string& k, const std::string& v) { return static_cast<int>(parse_int(k, v)); }
std::uint64_t parse_u64(const std::string& k, const std::string& v) {
  const long long x = parse_int(k, v);
  if (x < 0) throw InvalidArgument("config: " + k + " must be non-negative");
  return static_cast<std::uint64_t>(x);
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      {"preset",
       // Resets every other key; resolve_config applies it first.
       [](RunConfig& c, const std::string&, const std::string& v) { c = RunConfig::from_preset(v); },
       [](const RunConfig& c) { return ordered_json(c.preset); }},
      NLR_KEY("seed", c.train.seed, parse_u64),
      int_key("threads", &RunConfig::threads),
      NLR_KEY("sdf_width", c.train.fields.sdf_width, parse_int32),
      NLR_KEY("sdf_layers", c.train.fields.sdf_hidden_layers, parse_int32),
      NLR_KEY("radiance_width", c.train.fields.radiance_width, parse_int32),
      NLR_KEY("radiance_layers", c.train.fields.radiance_hidden_layers, parse_int32),
      {"activation",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "sine") {
           c.train.fields.activation = Activation::Sine;
         } else if (v == "relu") {
           c.train.fields.activation = Activation::Relu;
         } else {
           throw InvalidArgument("config: " + k + " expects sine or relu, got '" + v + "'");
         }
       },
       [](const RunConfig& c) {
         return ordered_json(c.train.fields.activation == Activation::Sine ? "sine" : "relu");
       }},
      NLR_KEY("omega0", c.train.fields.omega0, parse_double),
      NLR_KEY("fourier_k_max", c.train.fields.fourier_k_max, parse_int32),
      NLR_KEY("pretrain_steps", c.train.pretrain.steps, parse_int32),
      NLR_KEY("pretrain_batch", c.train.pretrain.batch, parse_int32),
      NLR_KEY("pretrain_lr", c.train.pretrain.lr, parse_double),
      NLR_KEY("pretrain_radius", c.train.pretrain.radius, parse_double),
      NLR_KEY("batch_size", c.train.batch_size, parse_int32),
      NLR_KEY("total_batches", c.train.total_batches, parse_int32),
      NLR_KEY("lr", c.train.lr, parse_double),
      NLR_KEY("lr_decay_every", c.train.lr_decay_every, parse_int32),
      NLR_KEY("lr_decay_factor", c.train.lr_decay_factor, parse_double),
      NLR_KEY("eikonal_samples", c.train.eikonal_samples, parse_int32),
      NLR_KEY("use_smoothness", c.train.use_smoothness, parse_bool),
      NLR_KEY("checkpoint_every", c.train.checkpoint_every, parse_int32),
      NLR_KEY("alpha_double_every", c.train.alpha_double_every, parse_int32),
      NLR_KEY("w_E", c.train.weights.w_E, parse_double),
      NLR_KEY("w_M", c.train.weights.w_M, parse_double),
      NLR_KEY("w_S", c.train.weights.w_S, parse_double),
      NLR_KEY("alpha", c.train.weights.alpha, parse_double),
      NLR_KEY("trace_steps", c.train.trace.n_steps, parse_int32),
      NLR_KEY("converge_eps", c.train.trace.converge_eps, parse_double),
      NLR_KEY("accept_eps", c.train.trace.accept_eps, parse_double),
      NLR_KEY("scan_samples", c.train.trace.scan_samples, parse_int32),
      NLR_KEY("section_steps", c.train.trace.section_steps, parse_int32),
      NLR_KEY("denom_clamp", c.train.trace.denom_clamp, parse_double),
      NLR_KEY("mc_resolution", c.mc.resolution, parse_int32),
      NLR_KEY("iso", c.mc.iso, parse_double),
      NLR_KEY("band_factor", c.mc.band_factor, parse_double),
      NLR_KEY("texture_level", c.texture_level, parse_int32),
      NLR_KEY("blend_k", c.lumigraph.k, parse_int32),
      NLR_KEY("depth_bias", c.lumigraph.bias, parse_double),
  };
  return keys;
}

#undef NLR_KEY

const Key& find_key(const std::string& key) {
  for (const auto& k : registry())
    if (key == k.name) return k;
  throw InvalidArgument("config: unknown key '" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const std::string& where) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ParseError("config: expected key=value " + where + ", got '" + s + "'");
  return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, key, value); }

ordered_json RunConfig::to_json() const {
  ordered_json j;
  for (const auto& k : registry()) j[k.name] = k.get(*this);
  return j;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.emplace_back(k.name);
  return out;
}

RunConfig RunConfig::from_preset(const std::string& preset) {
  RunConfig c;
  if (preset == "desk") {
    c.train = TrainConfig::desk();
  } else if (preset == "full") {
    c.train = TrainConfig{};
  } else {
    throw InvalidArgument("config: unknown preset '" + preset + "' (expected desk or full)");
  }
  c.preset = preset;
  return c;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("config: missing " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<std::pair<std::string, std::string>> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config: " + path.string() + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) {
        out.emplace_back(k, v.get<std::string>());
      } else if (v.is_number_integer()) {
        out.emplace_back(k, std::to_string(v.get<long long>()));
      } else if (v.is_number() || v.is_boolean()) {
        out.emplace_back(k, v.dump());
      } else {
        throw ParseError("config: " + path.string() + ": value of '" + k + "' must be a scalar");
      }
    }
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    out.push_back(split_assignment(line, "on line " + std::to_string(n) + " of " + path.string()));
  }
  return out;
}

RunConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> layers;
  if (file != nullptr) layers = read_config_file(*file);
  for (const auto& o : overrides) layers.push_back(split_assignment(o, "in --set"));
  std::string preset = "desk";
  for (const auto& [k, v] : layers)
    if (k == "preset") preset = v;
  RunConfig cfg = RunConfig::from_preset(preset);
  for (const auto& [k, v] : layers) {
    if (k == "preset") continue;
    cfg.set(k, v);
  }
  cfg.train.validate();
  if (cfg.mc.resolution < 8) throw InvalidArgument("config: mc_resolution must be >= 8");
  if (cfg.texture_level < 1) throw InvalidArgument("config: texture_level must be >= 1");
  if (cfg.lumigraph.k < 2) throw InvalidArgument("config: blend_k must be >= 2");
  if (cfg.threads < 0) throw InvalidArgument("config: threads must be >= 0");
  return cfg;
}

std::string build_git_hash() { return NLR_GIT_HASH; }

void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<std::string>& argv,
                    const nlohmann::ordered_json& extra) {
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["command"] = argv;
  j["git_hash"] = build_git_hash();
  j["build"] = {{"compiler", __VERSION__}, {"cplusplus", __cplusplus},
#ifdef NDEBUG
                {"assertions", false}
#else
                {"assertions", true}
#endif
  };
  j["config"] = cfg.to_json();
  if (!extra.empty()) j["settings"] = extra;
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("config: cannot write " + (dir / "manifest.json").string());
}

}  // namespace nlr
