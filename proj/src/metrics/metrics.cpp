#include "terra/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "terra/autodiff/batch.hpp"
#include "terra/core/stats.hpp"
#include "terra/raster/io.hpp"

namespace terra::metrics {

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
  if (a.size() < 2) throw InvalidArgument("pearson needs at least two values");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericError("correlation is undefined for a constant input");
  return sab / std::sqrt(saa * sbb);
}

double pearson_corr_pair(const Heightmap& hm, const Texture& tex) {
  if (hm.width != tex.width || hm.height != tex.height) throw InvalidArgument("heightmap and texture sizes differ");
  const std::vector<double> h(hm.elevations.begin(), hm.elevations.end());
  std::vector<double> ch(h.size());
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < ch.size(); ++i) ch[i] = tex.rgb[i * 3 + static_cast<size_t>(c)];
    sum += pearson(h, ch);
  }
  return sum / 3.0;
}

CorrelationStats corr_stats(const std::vector<double>& r) {
  if (r.size() < 2) throw InvalidArgument("corr_stats needs at least two correlations for a sample std");
  CorrelationStats s;
  for (double v : r) s.mean += v;
  s.mean /= static_cast<double>(r.size());
  for (double v : r) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(r.size() - 1));
  s.q25 = percentile(r, 25);
  s.q50 = percentile(r, 50);
  s.q75 = percentile(r, 75);
  s.iqr = s.q75 - s.q25;
  return s;
}

nlohmann::json to_json(const CorrelationStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"q25", s.q25}, {"q50", s.q50}, {"q75", s.q75}, {"iqr", s.iqr}};
}

CorrelationStats corr_stats_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("q25").get<double>(),
          j.at("q50").get<double>(),  j.at("q75").get<double>(), j.at("iqr").get<double>()};
}

FeatureExtractor vae_feature_extractor(const latent::VaeModel& texture_vae) {
  if (texture_vae.config.modality != latent::Modality::kTexture)
    throw InvalidArgument("the feature extractor needs a texture VAE");
  return {"texture_vae_mu_pool4", [m = texture_vae](const Texture& t) {
            const ad::Tensor<float> mu = latent::vae_posterior(m, latent::texture_tensor(t)).mean;
            const int64_t c = mu.dim(0), h = mu.dim(1), w = mu.dim(2);
            if (h < 4 || w < 4) throw InvalidArgument("texture too small for 4x4 feature pooling");
            std::vector<double> f;
            for (int64_t ch = 0; ch < c; ++ch)
              for (int by = 0; by < 4; ++by)
                for (int bx = 0; bx < 4; ++bx) {
                  const int64_t ya = by * h / 4, yb = (by + 1) * h / 4, xa = bx * w / 4, xb = (bx + 1) * w / 4;
                  double s = 0;
                  for (int64_t y = ya; y < yb; ++y)
                    for (int64_t x = xa; x < xb; ++x) s += mu[(ch * h + y) * w + x];
                  f.push_back(s / static_cast<double>((yb - ya) * (xb - xa)));
                }
            return f;
          }};
}

namespace {

struct Gaussian {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
};

Gaussian fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidArgument("Frechet distance of an empty set");
  const size_t d = rows[0].size();
  if (d == 0) throw InvalidArgument("empty feature vectors");
  Eigen::MatrixXd X(rows.size(), d);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw InvalidArgument("feature vectors differ in length");
    for (size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  Gaussian g;
  g.mu = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - g.mu.transpose();
  g.cov = rows.size() > 1 ? Eigen::MatrixXd(C.transpose() * C / static_cast<double>(rows.size() - 1))
                          : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  if (rows.size() <= d) g.cov += 1e-6 * Eigen::MatrixXd::Identity(g.cov.rows(), g.cov.cols());
  return g;
}

}  // namespace

double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const Gaussian ga = fit(a), gb = fit(b);
  if (ga.mu.size() != gb.mu.size()) throw InvalidArgument("feature dimensions differ");
  // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2); the inner matrix is symmetric PSD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ga.cov);
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd ra = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = ra * gb.cov * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (ga.mu - gb.mu).squaredNorm() + ga.cov.trace() + gb.cov.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

double frechet_feature_distance(const std::vector<Texture>& a, const std::vector<Texture>& b,
                                const FeatureExtractor& fx) {
  if (a.empty() || b.empty()) throw InvalidArgument("Frechet distance of an empty set");
  std::vector<std::vector<double>> fa, fb;
  for (const auto& t : a) fa.push_back(fx.extract(t));
  for (const auto& t : b) fb.push_back(fx.extract(t));
  return frechet_distance(fa, fb);
}

PairingTest pairing_permutation_test(const std::vector<TerrainPair>& pairs, int permutations, Rng& rng) {
  if (pairs.size() < 2) throw InvalidArgument("pairing test needs at least two pairs");
  if (permutations < 1) throw InvalidArgument("pairing test needs at least one permutation");
  const size_t n = pairs.size();
  // Per-channel z-scores make each correlation a dot product.
  auto zscore = [](std::vector<double> v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    if (s == 0.0) throw NumericError("correlation is undefined for a constant input");
    s = std::sqrt(s);
    for (double& x : v) x = (x - m) / s;
    return v;
  };
  std::vector<std::vector<double>> hz(n);
  std::vector<std::array<std::vector<double>, 3>> tz(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& p = pairs[i];
    if (p.height.size() != pairs[0].height.size() || p.texture.pixel_count() != p.height.size())
      throw InvalidArgument("pairing test needs equally sized pairs");
    hz[i] = zscore(std::vector<double>(p.height.elevations.begin(), p.height.elevations.end()));
    for (int c = 0; c < 3; ++c) {
      std::vector<double> ch(p.height.size());
      for (size_t k = 0; k < ch.size(); ++k) ch[k] = p.texture.rgb[k * 3 + static_cast<size_t>(c)];
      tz[i][static_cast<size_t>(c)] = zscore(std::move(ch));
    }
  }
  // corr[i][j]: heightmap i against texture j.
  std::vector<double> corr(n * n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      double s = 0;
      for (int c = 0; c < 3; ++c) {
        const auto& t = tz[j][static_cast<size_t>(c)];
        double dot = 0;
        for (size_t k = 0; k < t.size(); ++k) dot += hz[i][k] * t[k];
        s += dot;
      }
      corr[i * n + j] = s / 3.0;
    }
  PairingTest res;
  for (size_t i = 0; i < n; ++i) res.aligned_mean += corr[i * n + i];
  res.aligned_mean /= static_cast<double>(n);
  int at_least = 0;
  for (int k = 0; k < permutations; ++k) {
    const auto perm = ad::permutation(n, rng);
    double m = 0;
    for (size_t i = 0; i < n; ++i) m += corr[i * n + perm[i]];
    m /= static_cast<double>(n);
    res.shuffled_mean += m;
    at_least += m >= res.aligned_mean;
  }
  res.shuffled_mean /= permutations;
  res.p_value = (1.0 + at_least) / (1.0 + permutations);
  return res;
}

EvaluationReport evaluate_model(const std::vector<TerrainPair>& samples, const std::vector<TerrainPair>& reference,
                                const FeatureExtractor& fx) {
  EvaluationReport r;
  r.extractor = fx.name;
  std::vector<Texture> ts, tr;
  for (const auto& p : samples) {
    r.sample_correlations.push_back(pearson_corr_pair(p.height, p.texture));
    ts.push_back(p.texture);
  }
  for (const auto& p : reference) {
    r.reference_correlations.push_back(pearson_corr_pair(p.height, p.texture));
    tr.push_back(p.texture);
  }
  r.samples = corr_stats(r.sample_correlations);
  r.reference = corr_stats(r.reference_correlations);
  r.abs_diff = {std::abs(r.samples.mean - r.reference.mean), std::abs(r.samples.std - r.reference.std),
                std::abs(r.samples.q25 - r.reference.q25),   std::abs(r.samples.q50 - r.reference.q50),
                std::abs(r.samples.q75 - r.reference.q75),   std::abs(r.samples.iqr - r.reference.iqr)};
  r.frechet = frechet_feature_distance(ts, tr, fx);
  return r;
}

nlohmann::json to_json(const EvaluationReport& r) {
  return {{"extractor", r.extractor},
          {"samples", to_json(r.samples)},
          {"reference", to_json(r.reference)},
          {"abs_diff", to_json(r.abs_diff)},
          {"frechet", r.frechet},
          {"sample_correlations", r.sample_correlations},
          {"reference_correlations", r.reference_correlations}};
}

EvaluationReport evaluation_report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  r.extractor = j.at("extractor").get<std::string>();
  r.samples = corr_stats_from_json(j.at("samples"));
  r.reference = corr_stats_from_json(j.at("reference"));
  r.abs_diff = corr_stats_from_json(j.at("abs_diff"));
  r.frechet = j.at("frechet").get<double>();
  r.sample_correlations = j.at("sample_correlations").get<std::vector<double>>();
  r.reference_correlations = j.at("reference_correlations").get<std::vector<double>>();
  return r;
}

void write_report(const EvaluationReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  raster::write_file_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
  std::ostringstream csv;
  csv.precision(17);
  csv << "set,index,correlation\n";
  for (size_t i = 0; i < r.sample_correlations.size(); ++i) csv << "samples," << i << ',' << r.sample_correlations[i] << '\n';
  for (size_t i = 0; i < r.reference_correlations.size(); ++i)
    csv << "reference," << i << ',' << r.reference_correlations[i] << '\n';
  raster::write_file_atomic(dir / "correlations.csv", csv.str());
}

}  // namespace terra::metrics
