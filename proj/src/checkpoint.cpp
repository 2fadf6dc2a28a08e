#include "expadv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace expadv::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

using Kind = CheckpointError::Kind;

std::string shape_text(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, 'x')) {
    try {
      shape.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw CheckpointError(Kind::corrupt, "checkpoint: bad shape '" + text + "'");
    }
  }
  return shape;
}

void append_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t read_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + at, 8);
  return v;
}

}  // namespace

Checkpoint capture(const training::TrainState& state, std::vector<std::pair<std::string, std::string>> config) {
  std::ostringstream rng;
  rng << state.rng;
  return {state.params, state.optimizer.velocity(), state.epoch, state.iteration, rng.str(), std::move(config)};
}

training::TrainState restore(const Checkpoint& checkpoint) {
  training::TrainState state;
  state.params = checkpoint.params;
  state.optimizer = training::SgdMomentum(state.params);
  if (!checkpoint.velocity.empty()) {
    if (checkpoint.velocity.size() != state.params.count()) {
      throw CheckpointError(Kind::corrupt, "checkpoint: velocity count does not match parameters");
    }
    state.optimizer.velocity() = checkpoint.velocity;
  }
  state.epoch = checkpoint.epoch;
  state.iteration = checkpoint.iteration;
  if (!checkpoint.rng_state.empty()) {
    std::istringstream in(checkpoint.rng_state);
    in >> state.rng;
    if (!in) throw CheckpointError(Kind::corrupt, "checkpoint: unreadable rng state");
  }
  return state;
}

std::string encode(const Checkpoint& c) {
  std::ostringstream header;
  header << "version=" << kVersion << '\n'
         << "arch=" << model::to_string(c.params.arch()) << '\n'
         << "epoch=" << c.epoch << '\n'
         << "iteration=" << c.iteration << '\n'
         << "rng=" << c.rng_state << '\n';
  for (const auto& [key, value] : c.config) header << "config." << key << '=' << value << '\n';
  for (std::size_t i = 0; i < c.params.count(); ++i) {
    header << "param=" << c.params.name(i) << ':' << shape_text(c.params[i].shape()) << '\n';
  }
  for (std::size_t i = 0; i < c.velocity.size(); ++i) {
    header << "velocity=" << c.params.name(i) << ':' << shape_text(c.velocity[i].shape()) << '\n';
  }
  const std::string text = header.str();

  std::string out(kMagic, sizeof kMagic);
  append_u64(out, text.size());
  out += text;
  auto dump = [&](const Tensor& t) {
    out.append(reinterpret_cast<const char*>(t.raw()), static_cast<std::size_t>(t.size()) * sizeof(double));
  };
  for (const Tensor& t : c.params.tensors()) dump(t);
  for (const Tensor& t : c.velocity) dump(t);
  return out;
}

Checkpoint decode(std::string_view bytes) {
  if (bytes.size() < 16) throw CheckpointError(Kind::corrupt, "checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, 6) != 0) throw CheckpointError(Kind::bad_magic, "checkpoint: bad magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(Kind::version, "checkpoint: unsupported format " + std::string(bytes.substr(0, 8)));
  }
  const std::uint64_t header_len = read_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw CheckpointError(Kind::corrupt, "checkpoint: truncated header");

  Checkpoint c;
  std::string arch_name;
  std::vector<std::pair<std::string, Shape>> params, velocity;
  std::istringstream header{std::string(bytes.substr(16, header_len))};
  std::string line;
  while (std::getline(header, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(Kind::corrupt, "checkpoint: bad header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto entry = [&]() {
      const auto colon = value.rfind(':');
      if (colon == std::string::npos) throw CheckpointError(Kind::corrupt, "checkpoint: bad tensor entry '" + value + "'");
      return std::pair{value.substr(0, colon), parse_shape(value.substr(colon + 1))};
    };
    try {
      if (key == "version") {
        if (std::stoi(value) != kVersion) throw CheckpointError(Kind::version, "checkpoint: unsupported version " + value);
      } else if (key == "arch") {
        arch_name = value;
      } else if (key == "epoch") {
        c.epoch = std::stoi(value);
      } else if (key == "iteration") {
        c.iteration = std::stoull(value);
      } else if (key == "rng") {
        c.rng_state = value;
      } else if (key.starts_with("config.")) {
        c.config.emplace_back(key.substr(7), value);
      } else if (key == "param") {
        params.push_back(entry());
      } else if (key == "velocity") {
        velocity.push_back(entry());
      } else {
        throw CheckpointError(Kind::corrupt, "checkpoint: unknown header key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw CheckpointError(Kind::corrupt, "checkpoint: bad value for '" + key + "'");
    }
  }

  std::size_t expected = 16 + header_len;
  for (const auto* list : {&params, &velocity}) {
    for (const auto& [name, shape] : *list) expected += static_cast<std::size_t>(numel(shape)) * sizeof(double);
  }
  if (bytes.size() != expected) {
    throw CheckpointError(Kind::corrupt, "checkpoint: expected " + std::to_string(expected) + " bytes, found " +
                                             std::to_string(bytes.size()));
  }

  std::size_t at = 16 + header_len;
  auto take = [&](const Shape& shape) {
    Tensor t(shape);
    const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(double);
    std::memcpy(t.raw(), bytes.data() + at, n);
    at += n;
    if (!t.all_finite()) throw CheckpointError(Kind::corrupt, "checkpoint: non-finite tensor data");
    return t;
  };
  std::vector<Tensor> tensors;
  for (const auto& [name, shape] : params) tensors.push_back(take(shape));
  for (const auto& [name, shape] : velocity) c.velocity.push_back(take(shape));
  try {
    c.params = model::ModelParams(model::parse_architecture(arch_name), std::move(tensors));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::corrupt, std::string("checkpoint: ") + e.what());
  }
  for (std::size_t i = 0; i < c.velocity.size(); ++i) {
    if (i >= c.params.count() || c.velocity[i].shape() != c.params[i].shape()) {
      throw CheckpointError(Kind::corrupt, "checkpoint: velocity does not match parameters");
    }
  }
  return c;
}

void save(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = encode(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::io, "checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::io, "checkpoint: write failed for " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode(buf.str());
}

model::ModelParams load_params(const std::filesystem::path& path) { return load(path).params; }

}  // namespace expadv::checkpoint
