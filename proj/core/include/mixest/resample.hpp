#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mixest/estimators.hpp"

namespace mixest {

// One draw of the mixing resampler: every treated row is kept with
// probability 1-delta and replaced by a control row drawn with replacement
// otherwise. Control rows are never touched.
struct MixedReplicate {
  AugmentedSample dataset;
  std::vector<int> kept_treated_ids;
  std::vector<int> injected_control_draws;  // with multiplicity
};

MixedReplicate mix_once(const ObservedSample& sample, double delta,
                        std::mt19937_64& rng);

struct MipwMOptions {
  // Fraction of replicate fit failures tolerated before the run errors out.
  double max_failure_fraction = 0.10;
};

// MIPW.M: average the adjusted synthetic-odds weights over M mixing
// replicates, then take a single Hajek contrast with the averaged weights.
EstimateReport mipw_m(const ObservedSample& sample, double delta, int M,
                      std::uint64_t seed, const MipwMOptions& options = {});

// Averaged per-control-unit weights behind mipw_m (exposed for diagnostics
// and for the mixed-EB path which shares the averaging machinery).
WeightSet mipw_m_weights(const ObservedSample& sample, double delta, int M,
                         std::uint64_t seed, const MipwMOptions& options = {});

}  // namespace mixest
