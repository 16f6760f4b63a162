#pragma once

#include <array>
#include <string_view>

namespace uspil {

/// Indices of the six hierarchical loss components.
enum class LossComponent { kData = 0, kPde, kIc, kBc, kCons, kReg };
inline constexpr int kNumLossComponents = 6;
inline constexpr std::array<std::string_view, kNumLossComponents>
    kLossComponentNames = {"data", "pde", "ic", "bc", "cons", "reg"};

/// Multipliers of the composite loss plus the adaptation-rate exponent.
struct LossWeights {
  double data = 1.0;
  double pde = 1.0;
  double ic = 1.0;
  double bc = 0.0;
  double cons = 0.0;
  double reg = 0.0;
  double adapt_exponent = 0.5;  // in [0,1]; 0 freezes the weights

  double operator[](int k) const { return as_array()[static_cast<std::size_t>(k)]; }
  std::array<double, kNumLossComponents> as_array() const {
    return {data, pde, ic, bc, cons, reg};
  }
  void set(int k, double v) {
    switch (k) {
      case 0: data = v; break;
      case 1: pde = v; break;
      case 2: ic = v; break;
      case 3: bc = v; break;
      case 4: cons = v; break;
      case 5: reg = v; break;
    }
  }
};

/// Raw component values, the weights they were combined with, and the
/// weighted total at one training step. total == sum(w_k * L_k).
struct LossBreakdown {
  std::array<double, kNumLossComponents> raw{};  // L_data .. L_reg
  LossWeights weights;
  double total = 0.0;
  long epoch = 0;

  double raw_of(int k) const { return raw[static_cast<std::size_t>(k)]; }
};

}  // namespace uspil
