#pragma once

#include <vector>

#include <json.hpp>

#include "poe/common.hpp"

namespace poe {

// Class-conditional Gaussian statistics over encoder features: per-class
// means, one covariance shared across classes, its shrinkage-regularized
// precision, and per-class train-score boundaries used as the surrogate
// stopping thresholds.
//
// Scores follow the convention M(x) = max_k -(x-mu_k)' P (x-mu_k) <= 0,
// higher = more ID-like. class_thresholds[k] is the lowest score any train
// sample of class k attains, i.e. the score of the class's farthest train
// sample; a query scoring below it sits outside the class's train cloud.
struct GaussianStats {
  std::vector<Vector> class_means;   // K vectors of dim d
  Matrix covariance;                 // shared, normalized by N (before shrinkage)
  Matrix precision;                  // (covariance + shrinkage*I)^-1
  double shrinkage = 0.0;            // epsilon actually applied
  std::vector<double> class_thresholds;  // tau_k = min over class-k train of M(x)
  std::vector<int> class_counts;     // N_k
  std::string feature_checksum;      // checksum of the checkpoint features came from

  int num_classes() const { return static_cast<int>(class_means.size()); }
  int dim() const { return class_means.empty() ? 0 : static_cast<int>(class_means[0].size()); }
};

// M(x) for a fitted stats object; <= 0, equals 0 iff the feature sits on a
// class mean.
inline double mahalanobis_score(const GaussianStats& stats, const Vector& feature) {
  require(stats.num_classes() > 0, "mahalanobis_score: stats not fitted");
  require(feature.size() == stats.dim(),
          "mahalanobis_score: feature dim " + std::to_string(feature.size()) +
              " != fitted dim " + std::to_string(stats.dim()));
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& mu : stats.class_means) {
    const Vector diff = feature - mu;
    const double q = diff.dot(stats.precision * diff);
    best = std::max(best, -q);
  }
  return best;
}

inline int mahalanobis_argmax_class(const GaussianStats& stats, const Vector& feature) {
  int best_k = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < stats.num_classes(); ++k) {
    const Vector diff = feature - stats.class_means[static_cast<std::size_t>(k)];
    const double q = -diff.dot(stats.precision * diff);
    if (q > best) {
      best = q;
      best_k = k;
    }
  }
  return best_k;
}

// Empirical class means and shared covariance (normalized by N), regularized
// with epsilon = shrinkage_scale * trace(cov)/d floored at 1e-8. Thresholds
// are computed on the same features.
inline GaussianStats fit_gaussian(const Matrix& features, const std::vector<int>& labels, int K,
                                  double shrinkage_scale) {
  const auto n = features.rows();
  const auto d = features.cols();
  require(n >= 1 && d >= 1, "fit_gaussian: empty feature matrix");
  require(static_cast<std::size_t>(n) == labels.size(), "fit_gaussian: labels/features size mismatch");
  require(K >= 1, "fit_gaussian: K must be >= 1");
  require(features.allFinite(), "fit_gaussian: non-finite features");

  GaussianStats stats;
  stats.class_counts.assign(static_cast<std::size_t>(K), 0);
  stats.class_means.assign(static_cast<std::size_t>(K), Vector::Zero(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < K, "fit_gaussian: label out of range: " + std::to_string(y));
    stats.class_counts[static_cast<std::size_t>(y)] += 1;
    stats.class_means[static_cast<std::size_t>(y)] += features.row(i).transpose();
  }
  for (int k = 0; k < K; ++k) {
    if (stats.class_counts[static_cast<std::size_t>(k)] == 0)
      fail("fit_gaussian: class " + std::to_string(k) + " has no samples");
    stats.class_means[static_cast<std::size_t>(k)] /= stats.class_counts[static_cast<std::size_t>(k)];
  }

  stats.covariance = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff =
        features.row(i).transpose() - stats.class_means[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    stats.covariance.noalias() += diff * diff.transpose();
  }
  stats.covariance /= static_cast<double>(n);

  stats.shrinkage = std::max(1e-8, shrinkage_scale * stats.covariance.trace() / static_cast<double>(d));
  const Matrix regularized = stats.covariance + stats.shrinkage * Matrix::Identity(d, d);
  stats.precision = regularized.ldlt().solve(Matrix::Identity(d, d));

  const double inv_err = (stats.precision * regularized - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  require(inv_err < 1e-8, "fit_gaussian: covariance inversion failed (residual " +
                              std::to_string(inv_err) + ")");

  stats.class_thresholds.assign(static_cast<std::size_t>(K),
                                std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double m = mahalanobis_score(stats, features.row(i).transpose());
    auto& tau = stats.class_thresholds[static_cast<std::size_t>(y)];
    tau = std::min(tau, m);
  }
  return stats;
}

inline Json to_json(const GaussianStats& s) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [&](const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
    return rows;
  };
  Json means = Json::array();
  for (const auto& mu : s.class_means) means.push_back(vec(mu));
  return Json{{"class_means", means},
              {"covariance", mat(s.covariance)},
              {"precision", mat(s.precision)},
              {"shrinkage", s.shrinkage},
              {"class_thresholds", s.class_thresholds},
              {"class_counts", s.class_counts},
              {"feature_checksum", s.feature_checksum}};
}

inline GaussianStats gaussian_from_json(const Json& j) {
  GaussianStats s;
  auto vec = [](const Json& a) {
    Vector v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
  };
  auto mat = [&](const Json& a) {
    const auto rows = a.size();
    require(rows > 0, "gaussian_from_json: empty matrix");
    Matrix m(rows, a[0].size());
    for (std::size_t r = 0; r < rows; ++r) m.row(static_cast<Eigen::Index>(r)) = vec(a[r]).transpose();
    return m;
  };
  for (const auto& mu : j.at("class_means")) s.class_means.push_back(vec(mu));
  s.covariance = mat(j.at("covariance"));
  s.precision = mat(j.at("precision"));
  s.shrinkage = j.at("shrinkage").get<double>();
  s.class_thresholds = j.at("class_thresholds").get<std::vector<double>>();
  s.class_counts = j.at("class_counts").get<std::vector<int>>();
  s.feature_checksum = j.at("feature_checksum").get<std::string>();
  return s;
}

}  // namespace poe
