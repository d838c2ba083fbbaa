// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "HYPERKA\0"
//   u32       format version (1)
//   u32 + N   model config as "key = value" lines
//   u32       block count
//   per block: u32 + N name, u64 rows, u64 cols, rows*cols IEEE-754 doubles
//              in column-major order

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "hyperka/model.hpp"

namespace hyperka {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'P', 'E', 'R', 'K', 'A', '\0'};
constexpr std::uint32_t kVersion = 1;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string config_text(const ModelConfig &c) {
  std::ostringstream out;
  out << "dim_kg1 = " << c.dim_kg1 << '\n'
      << "dim_kg2 = " << c.dim_kg2 << '\n'
      << "num_layers = " << c.num_layers << '\n'
      << "activation = " << to_string(c.activation) << '\n'
      << "combine_final = " << to_string(c.combine_final) << '\n'
      << "pooling = " << to_string(c.pooling) << '\n'
      << "max_neighbors = " << c.max_neighbors << '\n'
      << "ball_eps = " << format_double(c.geometry.ball_eps) << '\n'
      << "acosh_eps = " << format_double(c.geometry.acosh_eps) << '\n';
  return out.str();
}

ModelConfig parse_config_text(const std::string &text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "dim_kg1") c.dim_kg1 = std::stoll(value);
    else if (key == "dim_kg2") c.dim_kg2 = std::stoll(value);
    else if (key == "num_layers") c.num_layers = std::stoi(value);
    else if (key == "activation") c.activation = activation_from_string(value);
    else if (key == "combine_final") c.combine_final = combine_final_from_string(value);
    else if (key == "pooling") c.pooling = pooling_from_string(value);
    else if (key == "max_neighbors") c.max_neighbors = std::stoll(value);
    else if (key == "ball_eps") c.geometry.ball_eps = std::stod(value);
    else if (key == "acosh_eps") c.geometry.acosh_eps = std::stod(value);
    else throw std::runtime_error("checkpoint: unknown config key '" + key + "'");
  }
  return c;
}

template <typename T>
void put(std::ostream &out, T v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <typename T>
T get(std::istream &in) {
  T v{};
  in.read(reinterpret_cast<char *>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream &out, const std::string &s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream &in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const ModelParams &params,
                     const ModelConfig &config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put_string(out, config_text(config));
  std::uint32_t blocks = 0;
  for_each_block(params, [&](const std::string &, const auto &, bool) { ++blocks; });
  put<std::uint32_t>(out, blocks);
  for_each_block(params, [&](const std::string &name, const auto &block, bool) {
    put_string(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(block.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(block.cols()));
    out.write(reinterpret_cast<const char *>(block.data()),
              static_cast<std::streamsize>(sizeof(double) * block.size()));
  });
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = parse_config_text(get_string(in));

  std::map<std::string, MatrixXd> blocks;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name = get_string(in);
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char *>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated block " + name);
    blocks.emplace(std::move(name), std::move(m));
  }

  for (auto &g : ck.params.graphs) g.layers.resize(std::size_t(ck.config.num_layers));
  for_each_block(ck.params, [&](const std::string &name, auto &block, bool) {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw std::runtime_error("checkpoint: missing block " + name);
    if constexpr (std::is_same_v<std::decay_t<decltype(block)>, VectorXd>) {
      if (it->second.cols() != 1) {
        throw std::runtime_error("checkpoint: block " + name + " is not a vector");
      }
      block = it->second.col(0);
    } else {
      block = it->second;
    }
  });
  return ck;
}

}  // namespace hyperka
