#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pikirec/dataset.hpp"

namespace pikirec {

inline constexpr std::size_t kDefaultDim = 20;

// User and item latent factors; the score of (u, i) is <x_u, y_i>.
struct FactorModel {
  RowMatrix user_factors;  // |U| x d
  RowMatrix item_factors;  // |I| x d

  std::size_t num_users() const { return static_cast<std::size_t>(user_factors.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(item_factors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(user_factors.cols()); }

  bool all_finite() const { return user_factors.allFinite() && item_factors.allFinite(); }

  friend bool operator==(const FactorModel& a, const FactorModel& b);
};

// Entries ~ N(0, (0.1 / sqrt(d))^2).
FactorModel init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                       std::uint64_t seed);

double predict(const FactorModel& model, UserIndex u, ItemIndex i);
std::vector<double> predict_batch(const FactorModel& model, std::span<const UserItem> pairs);

// Little-endian binary: "PIKIMF01" magic, version byte, then |U|, |I|, d as
// uint64 and both matrices row-major as float64.
inline constexpr char kModelMagic[8] = {'P', 'I', 'K', 'I', 'M', 'F', '0', '1'};
inline constexpr std::uint8_t kModelVersion = 1;

void write_model(std::ostream& out, const FactorModel& model);
FactorModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const FactorModel& model);
FactorModel load_model(const std::filesystem::path& path);

}  // namespace pikirec
