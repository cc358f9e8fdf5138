#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "interfere_ci/distance.hpp"
#include "interfere_ci/error.hpp"

namespace interfere {

struct KernelEntry {
  std::size_t row = 0;
  double value = 0.0;
};

// Column-stochastic smoothing matrix
//   K_ij = exp(-d_ij^2 / sigma^2) / Z_j  for d_ij <= cutoff, else 0,
// stored by column. A kernel may hold only a subset of its columns; the
// estimators only ever touch columns j with theta_j possibly nonzero.
class SmoothingKernel {
 public:
  std::size_t n_units() const { return columns_.size(); }
  double bandwidth() const { return bandwidth_; }
  double cutoff() const { return cutoff_; }

  bool has_column(std::size_t j) const { return built_[j] != 0; }
  const std::vector<KernelEntry>& column(std::size_t j) const {
    require(has_column(j), "kernel column " + std::to_string(j) + " was not built");
    return columns_[j];
  }
  double normalizer(std::size_t j) const { return normalizers_[j]; }

  double column_sum(std::size_t j) const {
    double s = 0.0;
    for (const auto& e : column(j)) s += e.value;
    return s;
  }

  // Row-major dense copy; requires every column.
  std::vector<double> dense() const {
    const std::size_t n = n_units();
    std::vector<double> out(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (const auto& e : column(j)) out[e.row * n + j] = e.value;
    return out;
  }

  // x^T K restricted to column j: sum_i x_i K_ij.
  template <typename Vec>
  double weighted_column_sum(const Vec& x, std::size_t j) const {
    double s = 0.0;
    for (const auto& e : column(j)) s += static_cast<double>(x[e.row]) * e.value;
    return s;
  }

 private:
  friend SmoothingKernel build_kernel_columns(const DistanceProvider&, double, double,
                                              std::span<const std::size_t>);

  double bandwidth_ = 1.0;
  double cutoff_ = 0.0;
  std::vector<std::vector<KernelEntry>> columns_;
  std::vector<double> normalizers_;
  std::vector<unsigned char> built_;
};

inline SmoothingKernel build_kernel_columns(const DistanceProvider& distances, double sigma_k,
                                            double d_max_k, std::span<const std::size_t> which) {
  require(std::isfinite(sigma_k) && sigma_k > 0.0, "kernel bandwidth sigma_K must be positive");
  require(!std::isnan(d_max_k) && d_max_k >= 0.0, "kernel cutoff d_max_K must be nonnegative");
  const std::size_t n = distances.size();
  SmoothingKernel k;
  k.bandwidth_ = sigma_k;
  k.cutoff_ = d_max_k;
  k.columns_.resize(n);
  k.normalizers_.assign(n, 0.0);
  k.built_.assign(n, 0);
  const double inv_s2 = 1.0 / (sigma_k * sigma_k);
  for (std::size_t j : which) {
    require(j < n, "kernel column index out of range");
    if (k.built_[j]) continue;
    auto& col = k.columns_[j];
    double z = 0.0;
    for (const Neighbor& nb : distances.within(j, d_max_k)) {
      const double w = std::exp(-nb.distance * nb.distance * inv_s2);
      col.push_back({nb.unit, w});
      z += w;
    }
    // d_jj = 0 always survives the cutoff, so z >= 1.
    if (!(z > 0.0)) throw std::logic_error("kernel normalizer vanished for column " + std::to_string(j));
    for (auto& e : col) e.value /= z;
    k.normalizers_[j] = z;
    k.built_[j] = 1;
  }
  return k;
}

inline SmoothingKernel build_kernel(const DistanceProvider& distances, double sigma_k, double d_max_k) {
  std::vector<std::size_t> all(distances.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return build_kernel_columns(distances, sigma_k, d_max_k, all);
}

}  // namespace interfere
