#include "expadv/cli.hpp"

#include "expadv/checkpoint.hpp"
#include "expadv/eval.hpp"
#include "expadv/laplace.hpp"
#include "expadv/run_config.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>

namespace expadv::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path prepare_output(const RunConfig& config) {
  const fs::path dir = config.get("output_dir");
  fs::create_directories(dir);
  write_text(dir / "resolved.cfg", config.format());
  return dir;
}

fs::path require_data_dir(const RunConfig& config) {
  const std::string& dir = config.get("data_dir");
  if (dir.empty()) throw UsageError("missing required key data_dir (set --data_dir or EXPADV_DATA_DIR)");
  if (!fs::is_directory(dir)) throw UsageError("data_dir does not exist: " + dir);
  return dir;
}

fs::path require_checkpoint(const RunConfig& config) {
  const std::string& path = config.get("checkpoint");
  if (path.empty()) throw UsageError("missing required key checkpoint");
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return path;
}

mnist::Dataset test_split(const RunConfig& config) {
  return mnist::load_split(require_data_dir(config), false).head(static_cast<Index>(config.integer("test_limit")));
}

std::string model_id(const RunConfig& config) {
  if (!config.get("model_id").empty()) return config.get("model_id");
  return fs::path(config.get("checkpoint")).stem().string();
}

eval::EvalReport stamped(eval::EvalReport report, const RunConfig& config) {
  report.config_hash = config.hash();
  report.timestamp = utc_timestamp();
  return report;
}

int cmd_show_config(const RunConfig& config, std::ostream& out) {
  out << config.format();
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const training::TrainConfig tc = train_config(config);
  const fs::path data = require_data_dir(config);
  std::optional<training::TrainState> resume;
  if (!config.get("resume").empty()) {
    if (!fs::exists(config.get("resume"))) throw UsageError("resume checkpoint not found: " + config.get("resume"));
    resume = checkpoint::restore(checkpoint::load(config.get("resume")));
  }
  const mnist::Dataset train_set =
      mnist::load_split(data, true).head(static_cast<Index>(config.integer("train_limit")));
  const mnist::Dataset test_set = mnist::load_split(data, false);
  const fs::path dir = prepare_output(config);

  std::string metrics = "iteration,epoch,objective,weight_entropy,wall_time_ms\n";
  std::string epochs = "epoch,clean_accuracy,pgd_accuracy,n\n";
  training::TrainCallbacks callbacks;
  callbacks.on_iteration = [&](const training::IterationMetrics& m) {
    metrics += std::to_string(m.iteration) + ',' + std::to_string(m.epoch) + ',' + fmt("%.6f", m.objective) + ',' +
               fmt("%.6f", m.weight_entropy) + ',' + fmt("%.3f", m.wall_time_ms) + '\n';
  };
  callbacks.on_epoch = [&](const training::EpochMetrics& m) {
    epochs += std::to_string(m.epoch) + ',' + fmt("%.6f", m.clean_accuracy) + ',' + fmt("%.6f", m.pgd_accuracy) +
              ',' + std::to_string(m.evaluated) + '\n';
    out << "epoch " << m.epoch << ": clean " << fmt("%.4f", m.clean_accuracy) << ", pgd "
        << fmt("%.4f", m.pgd_accuracy) << " on " << m.evaluated << " test images\n";
  };
  const training::TrainState state = training::train(tc, train_set, &test_set, callbacks, std::move(resume));
  write_text(dir / "metrics.csv", metrics);
  write_text(dir / "epochs.csv", epochs);
  checkpoint::save(checkpoint::capture(state, config.entries()), dir / "model.ckpt");
  out << "wrote " << (dir / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  const auto params = checkpoint::load_params(require_checkpoint(config));
  const mnist::Dataset test_set = test_split(config);
  const fs::path dir = prepare_output(config);
  const double eps = config.number("epsilon");
  const auto attack = attack_config(config, eps);
  eval::EvalReport report;
  const std::string id = model_id(config);
  const std::uint64_t seed = config.unsigned_integer("seed");
  report.rows.push_back({0.0, "none", eval::accuracy(params, test_set), test_set.size(), id, seed});
  report.rows.push_back({eps, std::string(attacks::to_string(attack.family)), eval::accuracy(params, test_set, attack),
                         test_set.size(), id, seed});
  eval::emit_report(stamped(report, config), dir / "eval.csv");
  out << eval::format_report(report);
  return 0;
}

int cmd_attack(const RunConfig& config, std::ostream& out) {
  const auto params = checkpoint::load_params(require_checkpoint(config));
  const mnist::Dataset test_set = test_split(config);
  const fs::path dir = prepare_output(config);
  const auto attack = attack_config(config, config.number("epsilon"));
  const mnist::Batch batch = test_set.all();
  const Tensor attacked = attacks::run(params, batch, attack);
  const auto field = attacks::extract_perturbations(batch, attacked, attack.epsilon);
  const auto predicted = model::predict(params, attacked);
  Index correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
  eval::EvalReport report;
  report.rows.push_back({attack.epsilon, std::string(attacks::to_string(attack.family)),
                         static_cast<double>(correct) / static_cast<double>(batch.size()), batch.size(),
                         model_id(config), attack.seed});
  eval::emit_report(stamped(report, config), dir / "attack.csv");
  out << eval::format_report(report);
  out << "mean |delta| " << fmt("%.6f", field.delta.data().cwiseAbs().mean()) << ", max |delta| "
      << fmt("%.6f", field.delta.data().cwiseAbs().maxCoeff()) << '\n';
  return 0;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  std::vector<double> grid;
  attacks::AttackFamily family;
  try {
    grid = eval::parse_eps_grid(config.get("eps_grid"));
    family = attacks::parse_family(config.get("attack"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto params = checkpoint::load_params(require_checkpoint(config));
  const mnist::Dataset test_set = test_split(config);
  const fs::path dir = prepare_output(config);
  const auto report = eval::sweep(params, test_set, grid, family, config.unsigned_integer("seed"), model_id(config));
  eval::emit_report(stamped(report, config), dir / "sweep.csv");
  out << eval::format_report(report);
  return 0;
}

int cmd_fit_sampler(const RunConfig& config, std::ostream& out) {
  samplers::SamplerSpec spec;
  try {
    spec.kind = samplers::parse_kind(config.get("sampler_kind"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  spec.epsilon = config.number("epsilon");
  spec.seed = config.unsigned_integer("seed");
  spec.project_linf = config.flag("project_linf");
  const auto bins = static_cast<std::size_t>(config.integer("bins"));

  if (spec.kind != samplers::SamplerKind::uniform) {
    const auto params = checkpoint::load_params(require_checkpoint(config));
    const mnist::Batch batch =
        mnist::load_split(require_data_dir(config), true).head(static_cast<Index>(config.integer("fit_limit"))).all();
    const Tensor attacked = attacks::run(params, batch, attack_config(config, spec.epsilon));
    if (spec.kind == samplers::SamplerKind::empirical_pixel) {
      const auto field = attacks::extract_perturbations(batch, attacked, spec.epsilon);
      spec.histogram = samplers::fit_empirical(std::span(&field, 1), bins);
    } else {
      const Tensor coefficients = samplers::dct_perturbations(batch.images, attacked);
      if (spec.kind == samplers::SamplerKind::dct_laplacian) {
        spec.laplacian = samplers::fit_laplacian(std::span(&coefficients, 1));
      } else {
        spec.histogram = samplers::fit_empirical(std::span(&coefficients, 1), bins);
      }
    }
  }
  const fs::path dir = prepare_output(config);
  const fs::path path = dir / (std::string(samplers::to_string(spec.kind)) + ".sampler");
  samplers::save(spec, path);
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_validate_laplace(const RunConfig& config, std::ostream& out) {
  using laplace::ToyLandscape;
  const fs::path dir = prepare_output(config);
  struct Item {
    std::string id;
    ToyLandscape landscape;
    laplace::Case kind;
    std::vector<double> lambdas;
  };
  Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  Eigen::MatrixXd diag14 = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  const std::vector<Item> items = {
      {"quadratic_1d", ToyLandscape::quadratic(one), laplace::Case::interior, {10, 25, 50, 100, 200}},
      {"quadratic_2d_diag_1_4", ToyLandscape::quadratic(diag14), laplace::Case::interior, {50, 200}},
      {"quartic_1d_beta_1", ToyLandscape::quartic(one, 1.0), laplace::Case::interior, {25, 50, 100, 200}},
      {"linear_slope_1", ToyLandscape::linear(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Ones(1)),
       laplace::Case::boundary, {10, 50}},
      {"linear_slope_2", ToyLandscape::linear(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Ones(1)),
       laplace::Case::boundary, {50}},
      {"double_bump_1d", ToyLandscape::double_bump(1, 1.0, 0.5), laplace::Case::multi, {50, 200}},
  };
  std::string csv = "landscape,case,lambda,quadrature,estimate,ratio\n";
  for (const Item& item : items) {
    for (double lambda : item.lambdas) {
      laplace::LaplaceEstimate e;
      switch (item.kind) {
        case laplace::Case::interior: e = laplace::laplace_interior(item.landscape, lambda); break;
        case laplace::Case::boundary: e = laplace::laplace_boundary(item.landscape, lambda); break;
        case laplace::Case::multi: e = laplace::laplace_multi(item.landscape, lambda); break;
      }
      csv += item.id + ',' + std::string(laplace::to_string(item.kind)) + ',' + fmt("%g", lambda) + ',' +
             fmt("%.10e", e.quadrature) + ',' + fmt("%.10e", e.estimate) + ',' + fmt("%.10f", e.ratio) + '\n';
    }
  }
  write_text(dir / "laplace.csv", csv);
  out << csv;
  return 0;
}

using Command = int (*)(const RunConfig&, std::ostream&);

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exponential-integral adversarial training toolkit", "expadv"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"train", {"train a classifier", cmd_train}},
      {"eval", {"clean and attacked accuracy of a checkpoint", cmd_eval}},
      {"attack", {"attack test images and report accuracy", cmd_attack}},
      {"sweep", {"accuracy over an epsilon grid", cmd_sweep}},
      {"fit-sampler", {"fit a perturbation sampler from attacks on a checkpoint", cmd_fit_sampler}},
      {"validate-laplace", {"check Laplace estimates against quadrature on toy landscapes", cmd_validate_laplace}},
      {"show-config", {"print the resolved configuration", cmd_show_config}},
  };

  std::string config_file;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flags;
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config,-c", config_file, "key=value configuration file");
    sub->add_option("--set", assignments, "override one key, as key=value (repeatable)");
    for (const KeySpec& key : RunConfig::keys()) {
      std::string names = "--" + key.name;
      std::string dashed = key.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key.name) names += ",--" + dashed;
      for (const auto& alias : key.aliases) names += ",--" + alias;
      sub->add_option_function<std::string>(
          names, [&flags, k = key.name](const std::string& v) { flags[k] = v; }, key.help);
    }
    handlers[sub] = entry.second;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    RunConfig config;
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw UsageError("config file not found: " + config_file);
      config.merge_file(config_file);
    }
    for (const auto& a : assignments) config.merge_text(a, "--set");
    for (const auto& [k, v] : flags) config.set(k, v);
    config.resolve();
    return handlers.at(chosen)(config, out);
  } catch (const UsageError& e) {
    err << "expadv " << chosen->get_name() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "expadv " << chosen->get_name() << ": error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace expadv::cli
