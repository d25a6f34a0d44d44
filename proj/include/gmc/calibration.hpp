#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/matrix.hpp"
#include "gmc/model.hpp"

namespace gmc {

inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  detail::require(predicted.size() == truth.size(), "accuracy: length mismatch");
  detail::require(!truth.empty(), "accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Per-class F1 scores; a class with no true and no predicted samples gets 0.
inline std::vector<double> per_class_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                                        std::size_t classes) {
  detail::require(predicted.size() == truth.size(), "macro_f1: length mismatch");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    detail::require(predicted[i] < classes && truth[i] < classes, "macro_f1: label out of range");
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  std::vector<double> f1(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    f1[c] = denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return f1;
}

inline double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t classes) {
  const auto f1 = per_class_f1(predicted, truth, classes);
  double total = 0.0;
  for (double v : f1) total += v;
  return total / static_cast<double>(classes);
}

inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = argmax(m.row(r));
  return out;
}

// ---------------------------------------------------------------------------
// ECE and reliability data
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultEceBins = 15;

struct ReliabilityBin {
  double low = 0.0;
  double high = 0.0;
  double mean_confidence = 0.0;  // 0 for empty bins
  double accuracy = 0.0;         // 0 for empty bins
  std::size_t count = 0;
};

struct EceReport {
  std::vector<ReliabilityBin> bins;
  std::size_t sample_count = 0;
  double ece = 0.0;
};

/// Equal-width confidence bins over [0, 1]; confidence 1 falls in the top bin.
inline std::vector<ReliabilityBin> reliability_data(const Matrix& probs, std::span<const std::size_t> truth,
                                                    std::size_t bin_count = kDefaultEceBins) {
  detail::require(probs.rows() == truth.size(), "reliability_data: row count differs from label count");
  detail::require(bin_count >= 1, "reliability_data: need at least one bin");
  std::vector<ReliabilityBin> bins(bin_count);
  std::vector<double> conf_sum(bin_count, 0.0), hit_sum(bin_count, 0.0);
  for (std::size_t b = 0; b < bin_count; ++b) {
    bins[b].low = static_cast<double>(b) / static_cast<double>(bin_count);
    bins[b].high = static_cast<double>(b + 1) / static_cast<double>(bin_count);
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    double total = 0.0;
    for (double v : row) {
      detail::require(std::isfinite(v) && v >= 0.0 && v <= 1.0 + 1e-12, "reliability_data: invalid probability");
      total += v;
    }
    detail::require(std::abs(total - 1.0) <= 1e-6, "reliability_data: row does not sum to 1");
    const std::size_t pred = argmax(row);
    const double conf = std::min(row[pred], 1.0);
    const std::size_t b = std::min(static_cast<std::size_t>(conf * static_cast<double>(bin_count)), bin_count - 1);
    ++bins[b].count;
    conf_sum[b] += conf;
    hit_sum[b] += pred == truth[i] ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < bin_count; ++b)
    if (bins[b].count > 0) {
      bins[b].mean_confidence = conf_sum[b] / static_cast<double>(bins[b].count);
      bins[b].accuracy = hit_sum[b] / static_cast<double>(bins[b].count);
    }
  return bins;
}

/// Weighted gap sum over reliability bins.
inline double ece_from_bins(std::span<const ReliabilityBin> bins) {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& b : bins)
    total += static_cast<double>(b.count) / static_cast<double>(n) * std::abs(b.accuracy - b.mean_confidence);
  return total;
}

inline EceReport ece(const Matrix& probs, std::span<const std::size_t> truth, std::size_t bin_count = kDefaultEceBins) {
  EceReport r;
  r.bins = reliability_data(probs, truth, bin_count);
  r.sample_count = truth.size();
  r.ece = ece_from_bins(r.bins);
  return r;
}

inline void write_reliability_csv(std::ostream& out, std::span<const ReliabilityBin> bins) {
  out.precision(17);
  out << "bin_low,bin_high,mean_conf,accuracy,count\n";
  for (const auto& b : bins)
    out << b.low << ',' << b.high << ',' << b.mean_confidence << ',' << b.accuracy << ',' << b.count << '\n';
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

/// softmax(s / T) row-wise.
inline Matrix apply_temperature(const Matrix& scores, double temperature) {
  detail::require(temperature > 0.0 && std::isfinite(temperature), "apply_temperature: T must be positive");
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) softmax_into(scores.row(r), 1.0 / temperature, out.row(r));
  return out;
}

/// Mean NLL of softmax(s / T).
inline double temperature_nll(const Matrix& scores, std::span<const std::size_t> truth, double temperature) {
  std::vector<double> scaled(scores.cols()), log_p(scores.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) scaled[c] = row[c] / temperature;
    log_softmax_into(scaled, log_p);
    total -= log_p[truth[r]];
  }
  return total / static_cast<double>(scores.rows());
}

struct TemperatureFit {
  double temperature = 1.0;
  double val_nll_before = 0.0;
  double val_nll_after = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  bool degenerate = false;  // scores carried no ranking information
};

inline constexpr double kTemperatureMin = 0.05;
inline constexpr double kTemperatureMax = 20.0;
inline constexpr double kTemperatureTolerance = 1e-4;

/// Golden-section search for the NLL-minimizing T on log T in
/// [log 0.05, log 20]. Never returns a T worse than T = 1.
inline TemperatureFit fit_temperature(const Matrix& scores, std::span<const std::size_t> truth,
                                      std::size_t bin_count = kDefaultEceBins) {
  detail::require(scores.rows() >= 1 && scores.rows() == truth.size(), "fit_temperature: need matching non-empty input");
  detail::require(all_finite(scores.values()), "fit_temperature: non-finite scores");
  TemperatureFit fit;
  fit.val_nll_before = temperature_nll(scores, truth, 1.0);
  fit.ece_before = ece(apply_temperature(scores, 1.0), truth, bin_count).ece;

  bool informative = false;
  for (std::size_t r = 0; r < scores.rows() && !informative; ++r) {
    const auto row = scores.row(r);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    informative = *hi - *lo > 1e-12;
  }
  if (!informative) {
    fit.degenerate = true;
    fit.val_nll_after = fit.val_nll_before;
    fit.ece_after = fit.ece_before;
    return fit;
  }

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kTemperatureMin);
  double b = std::log(kTemperatureMax);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = temperature_nll(scores, truth, std::exp(c));
  double fd = temperature_nll(scores, truth, std::exp(d));
  while (b - a > kTemperatureTolerance) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = temperature_nll(scores, truth, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = temperature_nll(scores, truth, std::exp(d));
    }
  }
  double t = std::exp(0.5 * (a + b));
  double nll = temperature_nll(scores, truth, t);
  if (!(nll <= fit.val_nll_before)) {
    t = 1.0;
    nll = fit.val_nll_before;
  }
  fit.temperature = t;
  fit.val_nll_after = nll;
  fit.ece_after = ece(apply_temperature(scores, t), truth, bin_count).ece;
  return fit;
}

}  // namespace gmc
