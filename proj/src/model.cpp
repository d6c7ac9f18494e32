#include "pikirec/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <random>
#include <tuple>

#include <fmt/format.h>

namespace pikirec {

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

bool operator==(const FactorModel& a, const FactorModel& b) {
  return a.user_factors.rows() == b.user_factors.rows() &&
         a.user_factors.cols() == b.user_factors.cols() &&
         a.item_factors.rows() == b.item_factors.rows() &&
         a.item_factors.cols() == b.item_factors.cols() &&
         std::memcmp(a.user_factors.data(), b.user_factors.data(),
                     sizeof(double) * static_cast<std::size_t>(a.user_factors.size())) == 0 &&
         std::memcmp(a.item_factors.data(), b.item_factors.data(),
                     sizeof(double) * static_cast<std::size_t>(a.item_factors.size())) == 0;
}

FactorModel init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                       std::uint64_t seed) {
  if (num_users == 0 || num_items == 0 || dim == 0) {
    throw ValueError(
        fmt::format("model dimensions must be positive: {} x {} x {}", num_users, num_items, dim));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(dim)));
  FactorModel m;
  m.user_factors.resize(static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(dim));
  m.item_factors.resize(static_cast<Eigen::Index>(num_items), static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < m.user_factors.size(); ++k) m.user_factors.data()[k] = normal(rng);
  for (Eigen::Index k = 0; k < m.item_factors.size(); ++k) m.item_factors.data()[k] = normal(rng);
  return m;
}

double predict(const FactorModel& model, UserIndex u, ItemIndex i) {
  if (u >= model.num_users() || i >= model.num_items()) {
    throw IndexError(fmt::format("index ({}, {}) outside model of {} users x {} items", u, i,
                                 model.num_users(), model.num_items()));
  }
  return model.user_factors.row(u).dot(model.item_factors.row(i));
}

std::vector<double> predict_batch(const FactorModel& model, std::span<const UserItem> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(predict(model, p.user, p.item));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::size_t kHeaderBytes = sizeof(kModelMagic) + 1 + 3 * sizeof(std::uint64_t);

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void write_model(std::ostream& out, const FactorModel& model) {
  out.write(kModelMagic, sizeof(kModelMagic));
  put(out, kModelVersion);
  put(out, static_cast<std::uint64_t>(model.num_users()));
  put(out, static_cast<std::uint64_t>(model.num_items()));
  put(out, static_cast<std::uint64_t>(model.dim()));
  out.write(reinterpret_cast<const char*>(model.user_factors.data()),
            static_cast<std::streamsize>(sizeof(double) * model.user_factors.size()));
  out.write(reinterpret_cast<const char*>(model.item_factors.data()),
            static_cast<std::streamsize>(sizeof(double) * model.item_factors.size()));
}

FactorModel read_model(std::istream& in) {
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kModelMagic) ||
      std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw HeaderError("not a model file: bad magic bytes");
  }
  if (bytes.size() < kHeaderBytes) {
    throw TruncationError(fmt::format("model header truncated: expected {} bytes, found {}",
                                      kHeaderBytes, bytes.size()),
                          kHeaderBytes, bytes.size());
  }
  const auto version = static_cast<std::uint8_t>(bytes[sizeof(kModelMagic)]);
  if (version != kModelVersion) {
    throw HeaderError(fmt::format("unsupported model version {}", version));
  }
  std::uint64_t dims[3];
  std::memcpy(dims, bytes.data() + sizeof(kModelMagic) + 1, sizeof(dims));
  const auto [num_users, num_items, dim] = std::tie(dims[0], dims[1], dims[2]);
  constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 40;
  if (num_users == 0 || num_items == 0 || dim == 0 || dim > kMaxEntries ||
      num_users > kMaxEntries / dim || num_items > kMaxEntries / dim) {
    throw DimensionError(
        fmt::format("implausible model dimensions {} x {} x {}", num_users, num_items, dim));
  }
  const std::size_t expected = kHeaderBytes + sizeof(double) * (num_users + num_items) * dim;
  if (bytes.size() < expected) {
    throw TruncationError(fmt::format("model payload truncated: expected {} bytes, found {}",
                                      expected, bytes.size()),
                          expected, bytes.size());
  }
  if (bytes.size() > expected) {
    throw DimensionError(fmt::format(
        "model payload has {} trailing bytes beyond the declared {} x {} x {} dimensions",
        bytes.size() - expected, num_users, num_items, dim));
  }
  FactorModel m;
  m.user_factors.resize(static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(dim));
  m.item_factors.resize(static_cast<Eigen::Index>(num_items), static_cast<Eigen::Index>(dim));
  const char* p = bytes.data() + kHeaderBytes;
  std::memcpy(m.user_factors.data(), p, sizeof(double) * num_users * dim);
  std::memcpy(m.item_factors.data(), p + sizeof(double) * num_users * dim,
              sizeof(double) * num_items * dim);
  return m;
}

void save_model(const std::filesystem::path& path, const FactorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_model(out, model);
  if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
}

FactorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return read_model(in);
}

}  // namespace pikirec
