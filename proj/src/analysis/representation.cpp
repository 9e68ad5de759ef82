#include "stconv/representation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "stconv/errors.hpp"

namespace stconv {

void ActivationSet::validate() const {
  if (activations.rank() != 3) {
    throw DimensionError("activation set '" + model_id + "': expected [N,K,P], got " + shape_str(activations.shape()));
  }
  for (double v : activations.data()) {
    if (!std::isfinite(v)) throw DataError("activation set '" + model_id + "' holds non-finite values");
  }
}

ActivationSet collect_activations(const Model<float>& model, const Scaler& scaler, const TrialSet& trials,
                                  std::string model_id) {
  const auto& mc = model.config();
  if (trials.n_channels() != mc.n_channels || trials.n_times() != mc.n_times) {
    throw DimensionError("model '" + model_id + "' expects " + std::to_string(mc.n_channels) + "x" +
                         std::to_string(mc.n_times) + " trials, data has " + std::to_string(trials.n_channels()) +
                         "x" + std::to_string(trials.n_times()));
  }
  const TrialSet scaled = scaler.apply(trials);
  const auto src = scaled.data.data();
  NdArray<float> x({scaled.n_trials(), 1, scaled.n_channels(), scaled.n_times()}, {src.begin(), src.end()});
  const NdArray<float> z = model.encode(x);
  ActivationSet out;
  out.model_id = std::move(model_id);
  out.activations = NdArray<double>(z.shape(), std::vector<double>(z.data().begin(), z.data().end()));
  out.validate();
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

using Mat = Eigen::MatrixXd;
using RowMajorConst = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Column means and population stds over the given rows; tiny stds become 1.
void column_stats(const Mat& m, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& sd) {
  mean = m.colwise().mean();
  sd = ((m.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(m.rows())).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd[j] < 1e-12) sd[j] = 1.0;
  }
}

Mat take_rows(const Mat& m, const std::vector<Eigen::Index>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

std::vector<double> cross_validated_r2(const NdArray<double>& predictors, const NdArray<double>& targets,
                                       const RidgeConfig& config) {
  if (predictors.rank() != 2 || targets.rank() != 2) throw DimensionError("ridge: predictors and targets must be 2-D");
  const std::size_t n = predictors.dim(0);
  if (targets.dim(0) != n) {
    throw DimensionError("ridge: " + std::to_string(n) + " predictor rows but " + std::to_string(targets.dim(0)) +
                         " target rows");
  }
  if (n < 25) throw DataError("ridge: need at least 25 samples to cross-validate, got " + std::to_string(n));
  if (config.n_folds < 2 || config.n_folds > n) throw ConfigError("ridge: n_folds must lie in [2, N]");
  if (!(config.lambda > 0.0)) throw ConfigError("ridge: lambda must be positive");

  const auto N = static_cast<Eigen::Index>(n);
  const Mat X = RowMajorConst(predictors.ptr(), N, static_cast<Eigen::Index>(predictors.dim(1)));
  const Mat Y = RowMajorConst(targets.ptr(), N, static_cast<Eigen::Index>(targets.dim(1)));
  const Eigen::Index W = X.cols(), Q = Y.cols();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);

  Eigen::RowVectorXd ss_res = Eigen::RowVectorXd::Zero(Q);
  for (std::size_t f = 0; f < config.n_folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < n; ++i) (i % config.n_folds == f ? te : tr).push_back(static_cast<Eigen::Index>(order[i]));
    Mat xtr = take_rows(X, tr), xte = take_rows(X, te), ytr = take_rows(Y, tr), yte = take_rows(Y, te);
    Eigen::RowVectorXd xm, xs, ym, ys;
    column_stats(xtr, xm, xs);
    column_stats(ytr, ym, ys);
    xtr = (xtr.rowwise() - xm).array().rowwise() / xs.array();
    xte = (xte.rowwise() - xm).array().rowwise() / xs.array();
    const Mat yz = (ytr.rowwise() - ym).array().rowwise() / ys.array();

    Mat beta;
    if (W <= xtr.rows()) {
      Mat a = xtr.transpose() * xtr;
      a.diagonal().array() += config.lambda;
      beta = a.llt().solve(xtr.transpose() * yz);
    } else {
      Mat g = xtr * xtr.transpose();
      g.diagonal().array() += config.lambda;
      beta = xtr.transpose() * g.llt().solve(yz);
    }
    const Mat pred = ((xte * beta).array().rowwise() * ys.array()).rowwise() + ym.array();
    ss_res += (yte - pred).array().square().colwise().sum().matrix();
  }
  const Eigen::RowVectorXd ss_tot = (Y.rowwise() - Y.colwise().mean()).array().square().colwise().sum();
  std::vector<double> r2(static_cast<std::size_t>(Q));
  for (Eigen::Index q = 0; q < Q; ++q) r2[q] = ss_tot[q] > 0.0 ? 1.0 - ss_res[q] / ss_tot[q] : 0.0;
  return r2;
}

NdArray<double> reconstruct_band_power(const ActivationSet& acts, const BandPowerTable& bands,
                                       const RidgeConfig& config) {
  if (acts.n_samples() != bands.n_trials()) {
    throw DimensionError("band-power reconstruction: " + std::to_string(acts.n_samples()) + " activation samples but " +
                         std::to_string(bands.n_trials()) + " band-power trials");
  }
  const std::size_t n = acts.n_samples(), q = bands.n_channels() * bands.n_bands();
  NdArray<double> x({n, acts.width()}, std::vector<double>(acts.activations.data().begin(), acts.activations.data().end()));
  NdArray<double> y({n, q}, std::vector<double>(bands.powers.data().begin(), bands.powers.data().end()));
  const auto r2 = cross_validated_r2(x, y, config);
  return NdArray<double>({bands.n_channels(), bands.n_bands()}, r2);
}

KernelCorrelations kernel_feature_correlations(const ActivationSet& acts, const BandPowerTable& bands) {
  if (acts.n_samples() != bands.n_trials()) {
    throw DimensionError("kernel correlations: " + std::to_string(acts.n_samples()) + " activation samples but " +
                         std::to_string(bands.n_trials()) + " band-power trials");
  }
  const std::size_t n = acts.n_samples(), K = acts.n_kernels(), P = acts.n_steps();
  const std::size_t C = bands.n_channels(), B = bands.n_bands();

  std::vector<std::vector<double>> kernel(K, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* row = acts.activations.ptr() + (i * K + k) * P;
      kernel[k][i] = std::accumulate(row, row + P, 0.0) / static_cast<double>(P);
    }
  }
  std::vector<std::vector<double>> feature(C * B, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < C * B; ++f) feature[f][i] = bands.powers[i * C * B + f];
  }

  KernelCorrelations out;
  out.r = NdArray<double>({K, C, B});
  for (std::size_t k = 0; k < K; ++k) {
    const auto [lo, hi] = std::minmax_element(kernel[k].begin(), kernel[k].end());
    if (*lo == *hi) out.zero_variance_kernels.push_back(k);
    for (std::size_t f = 0; f < C * B; ++f) out.r[k * C * B + f] = pearson(kernel[k], feature[f]);
  }
  const auto r = out.r.data();
  out.mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(r.size()));
  return out;
}

}  // namespace stconv
