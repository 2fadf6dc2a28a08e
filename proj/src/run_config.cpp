#include "expadv/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace expadv::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<KeySpec>& RunConfig::keys() {
  static const std::vector<KeySpec> specs = {
      {"data_dir", "", "directory holding the MNIST IDX files (falls back to EXPADV_DATA_DIR)", {"data"}},
      {"output_dir", "out", "directory for every file a run writes", {"out"}},
      {"arch", "mlp", "mlp or convnet", {}},
      {"objective", "exp_integral", "natural, madry or exp_integral", {}},
      {"epsilon", "0.3", "l-inf budget for training, attacks and sampler fitting", {}},
      {"lambda", "1", "exponential-integral temperature", {}},
      {"samples_per_image", "100", "perturbed copies per image (k)", {"k"}},
      {"sampler", "uniform", "'uniform' or the path of a .sampler file", {}},
      {"stabilization", "softmax_weighted", "softmax_weighted or raw_exp", {}},
      {"learning_rate", "auto", "SGD step size; auto is 0.01 for mlp and 0.001 for convnet", {"lr"}},
      {"momentum", "0.9", "SGD momentum", {}},
      {"epochs", "1", "training epochs", {}},
      {"batch_size", "50", "images per training step", {}},
      {"seed", "0", "seed for initialization, shuffling, sampling and attacks", {}},
      {"train_limit", "0", "use only the first N training images (0 = all)", {}},
      {"test_limit", "0", "use only the first N test images (0 = all)", {"limit"}},
      {"epoch_eval_limit", "1000", "test images for the per-epoch PGD check (negative skips it)", {}},
      {"attack", "pgd", "fgsm, pgd or cw_margin_pgd", {}},
      {"attack_steps", "40", "iterations for pgd and cw_margin_pgd", {}},
      {"attack_step_size", "auto", "per-step size; auto is epsilon/30", {}},
      {"random_start", "true", "start iterative attacks from a uniform point in the ball", {}},
      {"eps_grid", "0:1:0.05", "sweep grid as start:stop:step or a comma list", {"eps"}},
      {"checkpoint", "", "model checkpoint to evaluate or attack", {"model"}},
      {"resume", "", "checkpoint to continue training from", {}},
      {"model_id", "", "label for report rows (defaults to the checkpoint file stem)", {}},
      {"sampler_kind", "empirical_pixel", "kind fitted by fit-sampler", {"kind"}},
      {"fit_limit", "1000", "training images attacked to fit a sampler", {}},
      {"bins", "256", "histogram bins for empirical samplers", {}},
      {"project_linf", "false", "clamp DCT-domain draws to the epsilon box as well", {}},
      {"record_wall_time", "false", "write real step times into metrics.csv (breaks byte reproducibility)", {}},
  };
  return specs;
}

bool RunConfig::known(std::string_view key) {
  for (const auto& k : keys()) {
    if (k.name == key) return true;
  }
  return false;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

void RunConfig::set(std::string_view key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
  it->second = std::move(value);
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(std::string(origin) + ":" + std::to_string(number) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (!known(key)) {
      throw UsageError(std::string(origin) + ":" + std::to_string(number) + ": unknown config key '" + key + "'");
    }
    set(key, trim(t.substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

double RunConfig::number(std::string_view key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError("config key '" + std::string(key) + "': not a number '" + v + "'");
  return out;
}

long long RunConfig::integer(std::string_view key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError("config key '" + std::string(key) + "': not an integer '" + v + "'");
  return out;
}

std::uint64_t RunConfig::unsigned_integer(std::string_view key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v.front() != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw UsageError("config key '" + std::string(key) + "': not a non-negative integer '" + v + "'");
  }
  return out;
}

bool RunConfig::flag(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true or false, got '" + v + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, get(k.name));
  return out;
}

std::string RunConfig::format() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : format()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::resolve() {
  if (get("data_dir").empty()) {
    if (const char* env = std::getenv("EXPADV_DATA_DIR"); env && *env) set("data_dir", env);
  }
  for (const char* key : {"data_dir", "output_dir", "checkpoint", "resume"}) {
    if (!get(key).empty()) set(key, std::filesystem::absolute(get(key)).lexically_normal().string());
  }
  const std::string& sampler = get("sampler");
  if (sampler != "uniform" && !sampler.empty()) {
    set("sampler", std::filesystem::absolute(sampler).lexically_normal().string());
  }
}

attacks::AttackConfig attack_config(const RunConfig& config, double epsilon) {
  attacks::AttackConfig attack = attacks::AttackConfig::standard(attacks::parse_family(config.get("attack")), epsilon,
                                                                 config.unsigned_integer("seed"));
  attack.steps = static_cast<int>(config.integer("attack_steps"));
  if (config.get("attack_step_size") != "auto") attack.step_size = config.number("attack_step_size");
  attack.random_start = config.flag("random_start");
  return attack;
}

training::TrainConfig train_config(const RunConfig& config) {
  training::TrainConfig t;
  try {
    t.arch = model::parse_architecture(config.get("arch"));
    t.objective = training::parse_objective(config.get("objective"));
    t.stabilization = training::parse_stabilization(config.get("stabilization"));
    t.attack = attack_config(config, config.number("epsilon"));
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  t.epsilon = config.number("epsilon");
  t.lambda = config.number("lambda");
  t.samples_per_image = static_cast<int>(config.integer("samples_per_image"));
  t.optimizer.learning_rate = config.get("learning_rate") == "auto"
                                  ? (t.arch == model::Architecture::convnet ? 0.001 : 0.01)
                                  : config.number("learning_rate");
  t.optimizer.momentum = config.number("momentum");
  t.epochs = static_cast<int>(config.integer("epochs"));
  t.batch_size = static_cast<int>(config.integer("batch_size"));
  t.seed = config.unsigned_integer("seed");
  t.eval_limit = static_cast<Index>(config.integer("epoch_eval_limit"));
  t.record_wall_time = config.flag("record_wall_time");

  const std::string& sampler = config.get("sampler");
  if (sampler == "uniform") {
    t.sampler.kind = samplers::SamplerKind::uniform;
    t.sampler.epsilon = t.epsilon;
  } else {
    if (!std::filesystem::exists(sampler)) throw UsageError("sampler file not found: " + sampler);
    t.sampler = samplers::load(sampler);
  }
  t.sampler.seed = t.seed;
  if (config.flag("project_linf")) t.sampler.project_linf = true;
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

}  // namespace expadv::cli
