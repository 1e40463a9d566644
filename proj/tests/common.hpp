#pragma once

#include "mcrd/expansion.hpp"

namespace mcrd::testing {

inline const EquilibriumStructure& cubic() {
  static const EquilibriumStructure eq = find_vstar(BistableReaction::cubic_linear());
  return eq;
}

inline const EquilibriumStructure& mori() {
  static const EquilibriumStructure eq = find_vstar(BistableReaction::mori(9.0, 1.0));
  return eq;
}

inline const WaveProfile& cubic_wave() {
  static const WaveProfile p = [] {
    WaveOptions o;
    o.Z = 20.0;
    o.n_z = 4096;
    return solve_profile(cubic(), cubic().v_star, o);
  }();
  return p;
}

inline const WaveProfile& mori_wave() {
  static const WaveProfile p = solve_profile(mori(), mori().v_star);
  return p;
}

inline ExpansionData cubic_exp(double M, double D, int N, int k, bool mirrored = false) {
  ExpansionOptions o;
  o.mirrored = mirrored;
  return build_expansion(cubic(), cubic_wave(), M, D, N, k, o);
}

inline const std::vector<double>& benchmark_eps() {
  static const std::vector<double> e{0.04, 0.02, 0.01};
  return e;
}

}  // namespace mcrd::testing
