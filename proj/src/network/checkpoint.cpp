#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "dpinn/error.hpp"
#include "dpinn/network/expert.hpp"

namespace dpinn::net {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'P', 'I', 'N', 'N', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw RuntimeFailure("checkpoint truncated");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ExpertParams& params) {
  params.validate();
  const ExpertConfig& c = params.config;
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.activation));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.output_dim));
  put<double>(out, c.first_layer_scale);
  put<std::uint64_t>(out, params.seed);
  for (int i = 0; i < c.input_dim; ++i) put<double>(out, params.scaling.center.size() ? params.scaling.center(i) : 0.0);
  for (int i = 0; i < c.input_dim; ++i) {
    put<double>(out, params.scaling.half_range.size() ? params.scaling.half_range(i) : 1.0);
  }
  for (int l = 0; l < params.layer_count(); ++l) {
    const Matrix& w = params.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index k = 0; k < w.cols(); ++k) put<double>(out, w(r, k));
    }
    const Matrix& b = params.bias(l);
    for (Eigen::Index r = 0; r < b.rows(); ++r) put<double>(out, b(r, 0));
  }
  if (!out) throw RuntimeFailure("checkpoint write failed");
}

ExpertParams read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw RuntimeFailure("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version));
  ExpertConfig c;
  c.input_dim = static_cast<int>(get<std::uint32_t>(in));
  c.hidden_layers = static_cast<int>(get<std::uint32_t>(in));
  c.width = static_cast<int>(get<std::uint32_t>(in));
  const auto act = get<std::uint32_t>(in);
  if (act > 2) throw RuntimeFailure("checkpoint has unknown activation code");
  c.activation = static_cast<ad::Activation>(act);
  c.output_dim = static_cast<int>(get<std::uint32_t>(in));
  c.first_layer_scale = get<double>(in);
  c.validate();
  ExpertParams p;
  p.config = c;
  p.seed = get<std::uint64_t>(in);
  p.scaling.center.resize(c.input_dim);
  p.scaling.half_range.resize(c.input_dim);
  for (int i = 0; i < c.input_dim; ++i) p.scaling.center(i) = get<double>(in);
  for (int i = 0; i < c.input_dim; ++i) p.scaling.half_range(i) = get<double>(in);
  const auto arch = c.architecture();
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int fi = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fo = arch.layer_sizes[static_cast<std::size_t>(l + 1)];
    Matrix w(fo, fi);
    for (int r = 0; r < fo; ++r) {
      for (int k = 0; k < fi; ++k) w(r, k) = get<double>(in);
    }
    Matrix b(fo, 1);
    for (int r = 0; r < fo; ++r) b(r, 0) = get<double>(in);
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(std::move(b));
  }
  p.validate();
  return p;
}

void save_checkpoint(const std::string& path, const ExpertParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  write_checkpoint(out, params);
}

ExpertParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace dpinn::net
