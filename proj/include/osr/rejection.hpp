#pragma once

#include "osr/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>
#include <string>
#include <vector>

namespace osr {

enum class RejectionStrategy { kMsp, kMls, kOpenMax };

std::string strategy_name(RejectionStrategy s);
RejectionStrategy strategy_from_name(const std::string& name);

/// Final open-set verdict. label is in [0, N) when accepted and exactly N
/// (the synthetic "unknown" class) when rejected.
struct OpenSetDecision {
  int label;
  double score;
  RejectionStrategy strategy;
  double threshold_used;

  bool rejected(int num_classes) const { return label == num_classes; }
};

/// max_i p_i of a probability vector.
double msp_score(std::span<const double> probabilities);
/// max_i h_i of a logit vector (pre-softmax).
double mls_score(std::span<const double> logits);

/// Acceptance test for MSP/MLS: keep y_hat iff score > th (strict),
/// otherwise assign the rejection class N (num_classes).
OpenSetDecision decide(double score, double threshold, int y_hat, int num_classes,
                       RejectionStrategy strategy);

struct WeibullParams {
  double shape = 0.0;  // kappa
  double scale = 0.0;  // lambda
};

/// CDF(x) = 1 - exp(-(x/scale)^shape), zero for x <= 0.
double weibull_cdf(const WeibullParams& w, double x);

/// Two-parameter Weibull maximum-likelihood fit. Requires at least two
/// distinct positive samples; throws NumericError on degenerate input.
WeibullParams fit_weibull(std::span<const double> samples);

/// One activation-log row: the penultimate activations (logits) of a
/// sample together with its true and predicted label.
struct ActivationRecord {
  std::string sample_id;
  int true_label;
  int pred_label;
  std::vector<double> logits;
};

/// CSV with header sample_id,true_label,pred_label,logit_0..logit_{N-1}.
std::vector<ActivationRecord> read_activation_csv(const std::string& path);
void write_activation_csv(const std::vector<ActivationRecord>& records, const std::string& path);

struct ClassTailModel {
  int class_id;
  std::vector<double> mean_activation;  // mu_c
  WeibullParams weibull;
};

struct OpenMaxModel {
  std::vector<ClassTailModel> classes;  // one per in-set class, ascending id
  int tail_size = 20;                   // eta
  int alpha = 3;

  int num_classes() const { return static_cast<int>(classes.size()); }
  nlohmann::json to_json() const;
  static OpenMaxModel from_json(const nlohmann::json& j);
};

void save_openmax(const OpenMaxModel& model, const std::string& path);
OpenMaxModel load_openmax(const std::string& path);

/// Fits per-class mean activation vectors and Weibull tails on the
/// `tail_size` largest distances, using only correctly classified records.
/// Every class in [0, num_classes) must contribute at least tail_size
/// correct samples.
OpenMaxModel fit_openmax(const std::vector<ActivationRecord>& records, int num_classes,
                         int tail_size, int alpha);

struct OpenMaxScore {
  std::vector<double> revised;  // length N+1; index 0 is the unknown logit
  double outlier_probability;   // p_o
};

/// Recalibrates a logit vector: the top `alpha` ranked classes are damped
/// by their Weibull tail CDF (strongest damping at rank 1) and the removed
/// mass becomes the unknown logit. p_o is the softmax mass of the unknown
/// entry over the N+1 revised values.
OpenMaxScore openmax_recalibrate(std::span<const double> logits, const OpenMaxModel& model);

/// Acceptance test for OpenMax: keep y_hat iff p_o < th' (strict).
OpenSetDecision openmax_decide(double outlier_probability, double threshold, int y_hat,
                               int num_classes);

}  // namespace osr
