#include "viapt/harness/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace viapt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  const auto x = to_u64(key, v);
  if (x > 0xffffffffu) throw ConfigError("key '" + key + "' is out of range");
  return static_cast<std::uint32_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename U>
std::string join(const std::vector<U>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<std::uint64_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_u64(key, item));
  }
  return out;
}

}  // namespace

Precision parse_precision(std::string_view text) {
  if (text == "f32" || text == "float32") return Precision::f32;
  if (text == "f64" || text == "float64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(text) + "'");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "vit.image_side") vit.image_side = to_u64(key, v), data.side = to_u32(key, v);
  else if (key == "vit.patch") vit.patch = to_u64(key, v);
  else if (key == "vit.channels") vit.channels = to_u64(key, v), data.channels = to_u32(key, v);
  else if (key == "vit.dim") vit.dim = to_u64(key, v);
  else if (key == "vit.layers") vit.layers = to_u64(key, v);
  else if (key == "vit.heads") vit.heads = to_u64(key, v);
  else if (key == "vit.mlp_ratio") vit.mlp_ratio = to_u64(key, v);
  else if (key == "prompt.p") prompt.p = to_u64(key, v);
  else if (key == "prompt.lambda") prompt.lambda = to_u64(key, v);
  else if (key == "prompt.m") prompt.m = to_u64(key, v);
  else if (key == "prompt.beta") prompt.beta = to_double(key, v);
  else if (key == "prompt.mode") prompt.mode = parse_prompt_mode(v);
  else if (key == "train.lr") train.lr = to_double(key, v);
  else if (key == "train.weight_decay") train.weight_decay = to_double(key, v);
  else if (key == "train.batch") train.batch = to_u64(key, v);
  else if (key == "train.epochs") train.epochs = to_u64(key, v);
  else if (key == "train.warmup_epochs") train.warmup_epochs = to_u64(key, v);
  else if (key == "train.seed") train.seed = to_u64(key, v);
  else if (key == "train.clip_norm") train.clip_norm = to_double(key, v);
  else if (key == "train.timing") train.timing = to_bool(key, v);
  else if (key == "precision") precision = parse_precision(v);
  else if (key == "infer.strategy") infer.strategy = parse_strategy(v);
  else if (key == "infer.rounds") infer.rounds = to_u64(key, v);
  else if (key == "infer.seed") infer.seed = to_u64(key, v);
  else if (key == "data.variant") data.variant = parse_dataset_variant(v);
  else if (key == "data.classes") data.classes = to_u32(key, v);
  else if (key == "data.samples") data.samples = to_u32(key, v);
  else if (key == "data.noise") data.noise = to_double(key, v);
  else if (key == "data.seed") data.seed = to_u64(key, v);
  else if (key == "data.dir") data_dir = v;
  else if (key == "backbone.path") backbone.path = v;
  else if (key == "backbone.epochs") backbone.epochs = to_u64(key, v);
  else if (key == "backbone.samples") backbone.samples = to_u32(key, v);
  else if (key == "backbone.lr") backbone.lr = to_double(key, v);
  else if (key == "backbone.seed") backbone.seed = to_u64(key, v);
  else if (key == "out") out = v;
  else if (key == "sweep.m_list") {
    m_list.clear();
    for (auto x : to_list(key, v)) m_list.push_back(static_cast<std::size_t>(x));
  } else if (key == "sweep.seeds") seeds = to_list(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + line);
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str());
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  return {
      {"vit.image_side", std::to_string(vit.image_side)},
      {"vit.patch", std::to_string(vit.patch)},
      {"vit.channels", std::to_string(vit.channels)},
      {"vit.dim", std::to_string(vit.dim)},
      {"vit.layers", std::to_string(vit.layers)},
      {"vit.heads", std::to_string(vit.heads)},
      {"vit.mlp_ratio", std::to_string(vit.mlp_ratio)},
      {"prompt.p", std::to_string(prompt.p)},
      {"prompt.lambda", std::to_string(prompt.lambda)},
      {"prompt.m", std::to_string(prompt.m)},
      {"prompt.beta", fmt(prompt.beta)},
      {"prompt.mode", to_string(prompt.mode)},
      {"train.lr", fmt(train.lr)},
      {"train.weight_decay", fmt(train.weight_decay)},
      {"train.batch", std::to_string(train.batch)},
      {"train.epochs", std::to_string(train.epochs)},
      {"train.warmup_epochs", std::to_string(train.warmup_epochs)},
      {"train.seed", std::to_string(train.seed)},
      {"train.clip_norm", fmt(train.clip_norm)},
      {"train.timing", train.timing ? "true" : "false"},
      {"precision", to_string(precision)},
      {"infer.strategy", to_string(infer.strategy)},
      {"infer.rounds", std::to_string(infer.rounds)},
      {"infer.seed", std::to_string(infer.seed)},
      {"data.variant", to_string(data.variant)},
      {"data.classes", std::to_string(data.classes)},
      {"data.samples", std::to_string(data.samples)},
      {"data.noise", fmt(data.noise)},
      {"data.seed", std::to_string(data.seed)},
      {"data.dir", data_dir},
      {"backbone.path", backbone.path},
      {"backbone.epochs", std::to_string(backbone.epochs)},
      {"backbone.samples", std::to_string(backbone.samples)},
      {"backbone.lr", fmt(backbone.lr)},
      {"backbone.seed", std::to_string(backbone.seed)},
      {"out", out},
      {"sweep.m_list", join(m_list)},
      {"sweep.seeds", join(seeds)},
  };
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_kv()) s += k + " = " + v + "\n";
  return s;
}

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_kv()) j[k] = v;
  return j;
}

std::vector<std::size_t> RunConfig::effective_m_list() const {
  if (!m_list.empty()) return m_list;
  const std::size_t d = vit.dim;
  return {0, d / 4, d / 2, 3 * d / 4, d};
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& [key, v] : RunConfig{}.to_kv()) k.push_back(key);
  return k;
}

}  // namespace viapt
