#include "reloop/remnant_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "reloop/errors.hpp"

namespace reloop {

namespace {

constexpr const char* kFormat = "reloop-remnant-model";
constexpr int kVersion = 1;

}  // namespace

RemnantModel train_remnant(const Eigen::MatrixXd& features,
                           const Eigen::VectorXd& outcomes, double lambda,
                           std::vector<std::string> feature_names) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k = features.cols();
  if (outcomes.size() != n) {
    throw DataError("train_remnant: feature rows and outcomes differ in length");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw PreconditionError("train_remnant: lambda must be finite and >= 0");
  }
  if (n == 0) throw PreconditionError("train_remnant: no training rows");
  if (lambda == 0.0 && n < k + 2) {
    throw PreconditionError("train_remnant: need at least k + 2 rows without a penalty");
  }
  if (!features.allFinite() || !outcomes.allFinite()) {
    throw DataError("train_remnant: non-finite training data");
  }
  if (feature_names.empty()) {
    for (Eigen::Index j = 0; j < k; ++j) feature_names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != k) {
    throw DataError("train_remnant: feature name count does not match feature width");
  }

  // Canonical row order: lexicographic on (features, outcome).
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (features(a, j) != features(b, j)) return features(a, j) < features(b, j);
    }
    return outcomes(a) < outcomes(b);
  });
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    X.row(r) = features.row(order[static_cast<std::size_t>(r)]);
    y(r) = outcomes(order[static_cast<std::size_t>(r)]);
  }

  RemnantModel model;
  model.lambda = lambda;
  model.feature_names = std::move(feature_names);
  model.means.resize(static_cast<std::size_t>(k));
  model.scales.resize(static_cast<std::size_t>(k));
  Eigen::MatrixXd Z(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mean = X.col(j).mean();
    const double ss = (X.col(j).array() - mean).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    const double scale = sd > 0.0 ? sd : 1.0;
    model.means[static_cast<std::size_t>(j)] = mean;
    model.scales[static_cast<std::size_t>(j)] = scale;
    Z.col(j) = (X.col(j).array() - mean) / scale;
  }
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::VectorXd beta(k);
  if (k > 0) {
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
      qr.setThreshold(1e-12);
      if (qr.rank() < k) {
        throw PreconditionError("train_remnant: singular design with lambda = 0");
      }
      beta = qr.solve(yc);
    } else {
      Eigen::MatrixXd A = Z.transpose() * Z;
      A.diagonal().array() += lambda;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) {
        throw PreconditionError("train_remnant: penalized system is not positive definite");
      }
      beta = llt.solve(Z.transpose() * yc);
    }
  }
  model.coefficients.resize(static_cast<std::size_t>(k) + 1);
  model.coefficients[0] = y_mean;
  for (Eigen::Index j = 0; j < k; ++j) {
    model.coefficients[static_cast<std::size_t>(j) + 1] = beta(j);
  }
  return model;
}

Eigen::VectorXd predict_remnant(const RemnantModel& model, const Eigen::MatrixXd& features) {
  const std::size_t k = model.feature_count();
  if (static_cast<std::size_t>(features.cols()) != k) {
    throw DataError("predict_remnant: model expects " + std::to_string(k) +
                    " features, got " + std::to_string(features.cols()));
  }
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double v = model.coefficients[0];
    for (std::size_t j = 0; j < k; ++j) {
      v += model.coefficients[j + 1] *
           (features(i, static_cast<Eigen::Index>(j)) - model.means[j]) / model.scales[j];
    }
    out(i) = v;
  }
  return out;
}

nlohmann::ordered_json to_json(const RemnantModel& model) {
  nlohmann::ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["lambda"] = model.lambda;
  doc["feature_names"] = model.feature_names;
  doc["means"] = model.means;
  doc["scales"] = model.scales;
  doc["coefficients"] = model.coefficients;
  return doc;
}

RemnantModel remnant_model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw DataError("remnant model: unexpected format tag");
    }
    if (doc.at("version").get<int>() != kVersion) {
      throw DataError("remnant model: unsupported version " + doc.at("version").dump());
    }
    RemnantModel m;
    m.lambda = doc.at("lambda").get<double>();
    m.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    m.means = doc.at("means").get<std::vector<double>>();
    m.scales = doc.at("scales").get<std::vector<double>>();
    m.coefficients = doc.at("coefficients").get<std::vector<double>>();
    const std::size_t k = m.means.size();
    if (m.scales.size() != k || m.feature_names.size() != k || m.coefficients.size() != k + 1) {
      throw DataError("remnant model: inconsistent array lengths");
    }
    for (double s : m.scales) {
      if (!(s > 0.0)) throw DataError("remnant model: scales must be positive");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("remnant model: ") + e.what());
  }
}

void save_remnant_model(const RemnantModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << to_json(model).dump(2) << '\n';
}

RemnantModel load_remnant_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("remnant model: ") + e.what(), 0, 0);
  }
  return remnant_model_from_json(doc);
}

}  // namespace reloop
