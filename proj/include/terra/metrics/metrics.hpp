#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "terra/core/rng.hpp"
#include "terra/latent/vae.hpp"
#include "terra/raster/heightmap.hpp"

namespace terra::metrics {

using raster::Heightmap;
using raster::TerrainPair;
using raster::Texture;

/// Pearson correlation at 64-bit. Throws NumericError when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// Mean over the three texture channels of corr(heightmap, channel).
double pearson_corr_pair(const Heightmap& hm, const Texture& tex);

struct CorrelationStats {
  double mean = 0, std = 0, q25 = 0, q50 = 0, q75 = 0, iqr = 0;
};

/// Sample std (n - 1); type-7 quartiles. Needs at least two values.
CorrelationStats corr_stats(const std::vector<double>& r);
nlohmann::json to_json(const CorrelationStats& s);
CorrelationStats corr_stats_from_json(const nlohmann::json& j);

struct FeatureExtractor {
  std::string name;
  std::function<std::vector<double>(const Texture&)> extract;
};

/// Texture-VAE posterior means, average-pooled to a 4x4 grid per channel
/// (64 features for 4 latent channels).
FeatureExtractor vae_feature_extractor(const latent::VaeModel& texture_vae);

/// Frechet distance between Gaussian fits of two feature sets (rows are samples).
/// Covariances get +1e-6 I when a set has no more samples than dimensions.
double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);
double frechet_feature_distance(const std::vector<Texture>& a, const std::vector<Texture>& b,
                                const FeatureExtractor& fx);

struct PairingTest {
  double aligned_mean = 0;
  double shuffled_mean = 0;  // mean over all permutations drawn
  double p_value = 1;        // one-sided: shuffled mean >= aligned mean
};

/// Compares the mean correlation of aligned pairs against random re-pairings
/// (derangements are not enforced). p = (1 + #{shuffled >= aligned}) / (1 + permutations).
PairingTest pairing_permutation_test(const std::vector<TerrainPair>& pairs, int permutations, Rng& rng);

struct EvaluationReport {
  std::string extractor;
  CorrelationStats samples;
  CorrelationStats reference;
  CorrelationStats abs_diff;
  double frechet = 0;
  std::vector<double> sample_correlations;
  std::vector<double> reference_correlations;
};

EvaluationReport evaluate_model(const std::vector<TerrainPair>& samples, const std::vector<TerrainPair>& reference,
                                const FeatureExtractor& fx);
nlohmann::json to_json(const EvaluationReport& r);
EvaluationReport evaluation_report_from_json(const nlohmann::json& j);
/// Writes report.json and correlations.csv (set,index,correlation) into dir.
void write_report(const EvaluationReport& r, const std::filesystem::path& dir);

}  // namespace terra::metrics
