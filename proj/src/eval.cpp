#include "expadv/eval.hpp"

#include "expadv/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace expadv::eval {

namespace {

constexpr std::size_t kEvalBatch = 500;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& s, std::string_view what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument(std::string(what) + ": not a number '" + s + "'");
  return v;
}

}  // namespace

double accuracy(const model::ModelParams& params, const mnist::Dataset& dataset,
                const std::optional<attacks::AttackConfig>& attack) {
  if (dataset.empty()) throw std::invalid_argument("accuracy: empty dataset");
  Index correct = 0;
  std::uint64_t b = 0;
  for (const auto& indices : mnist::batches(static_cast<std::size_t>(dataset.size()), kEvalBatch)) {
    const mnist::Batch batch = dataset.gather(indices);
    std::vector<int> predicted;
    if (attack && attack->epsilon > 0.0) {
      attacks::AttackConfig local = *attack;
      local.seed = samplers::stream_seed(attack->seed, b);
      predicted = model::predict(params, attacks::run(params, batch, local));
    } else {
      predicted = model::predict(params, batch.images);
    }
    for (std::size_t i = 0; i < indices.size(); ++i) correct += predicted[i] == batch.labels[i];
    ++b;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void EvalReport::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].accuracy >= 0.0 && rows[i].accuracy <= 1.0)) {
      throw std::invalid_argument("report: accuracy outside [0,1] in row " + std::to_string(i));
    }
    if (i > 0 && rows[i].epsilon < rows[i - 1].epsilon) {
      throw std::invalid_argument("report: rows not sorted by epsilon");
    }
  }
}

EvalReport sweep(const model::ModelParams& params, const mnist::Dataset& dataset, std::span<const double> epsilons,
                 attacks::AttackFamily family, std::uint64_t seed, std::string model_id) {
  if (epsilons.empty()) throw std::invalid_argument("sweep: empty epsilon list");
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) throw std::invalid_argument("sweep: epsilons must ascend");
  EvalReport report;
  for (double eps : epsilons) {
    const auto attack = attacks::AttackConfig::standard(family, eps, seed);
    report.rows.push_back({eps, std::string(attacks::to_string(family)), accuracy(params, dataset, attack),
                           dataset.size(), model_id, seed});
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  report.validate();
  std::string out(kReportHeader);
  out += '\n';
  for (const ReportRow& r : report.rows) {
    out += fixed6(r.epsilon) + ',' + r.attack + ',' + fixed6(r.accuracy) + ',' + std::to_string(r.n) + ',' +
           r.model_id + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

EvalReport parse_report(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw std::invalid_argument("report: missing header");
  EvalReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw std::invalid_argument("report: expected 6 fields in '" + line + "'");
    report.rows.push_back({to_double(f[0], "epsilon"), f[1], to_double(f[2], "accuracy"),
                           static_cast<Index>(std::stoll(f[3])), f[4], std::stoull(f[5])});
  }
  report.validate();
  return report;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  const std::string text = format_report(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
  if (!report.config_hash.empty() || !report.timestamp.empty()) {
    std::ofstream meta(path.string() + ".meta", std::ios::binary | std::ios::trunc);
    meta << "config_hash=" << report.config_hash << '\n' << "timestamp=" << report.timestamp << '\n';
  }
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str());
}

std::vector<double> parse_eps_grid(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const auto f = split(text, ':');
    if (f.size() != 3) throw std::invalid_argument("eps grid: expected start:stop:step, got '" + std::string(text) + "'");
    const double start = to_double(f[0], "eps grid"), stop = to_double(f[1], "eps grid"),
                 step = to_double(f[2], "eps grid");
    if (!(step > 0.0)) throw std::invalid_argument("eps grid: step must be > 0");
    if (stop < start) throw std::invalid_argument("eps grid: stop below start");
    const long count = std::lround(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) out.push_back(start + step * static_cast<double>(i));
  } else {
    for (const auto& part : split(text, ',')) out.push_back(to_double(part, "eps grid"));
  }
  if (out.empty()) throw std::invalid_argument("eps grid: empty");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) throw std::invalid_argument("eps grid: negative epsilon");
    if (i > 0 && out[i] <= out[i - 1]) throw std::invalid_argument("eps grid: values must strictly ascend");
  }
  return out;
}

}  // namespace expadv::eval
