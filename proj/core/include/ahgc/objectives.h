#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ahgc/dataset.h"

namespace ahgc {

// Floor applied to every probability inside a log.
inline constexpr double kProbFloor = 1e-12;

// Projection MLP layer (tanh) producing b_i, then a linear head to R logits.
struct ClassifierParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd proj_w;  // d x h
  Eigen::MatrixXd proj_b;  // 1 x h
  Eigen::MatrixXd head_w;  // h x R
  Eigen::MatrixXd head_b;  // 1 x R

  template <class F>
  void for_each_tensor(F&& f) {
    f(std::string("proj.w"), proj_w);
    f(std::string("proj.b"), proj_b);
    f(std::string("head.w"), head_w);
    f(std::string("head.b"), head_b);
  }

  ClassifierParams zeros_like() const;
};

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                                 std::uint64_t seed);

void save_classifier(const std::filesystem::path& path, const ClassifierParams& params);
ClassifierParams load_classifier(const std::filesystem::path& path);

struct ClassifierOutput {
  FeatureMatrix projected;  // b_i
  FeatureMatrix logits;     // l(y | x_i)
  FeatureMatrix probs;      // softmax of logits
};

FeatureMatrix project(const ClassifierParams& params, const FeatureMatrix& features);
ClassifierOutput classify(const ClassifierParams& params, const FeatureMatrix& features);

// Mean of -log(max(p_true, floor)). Rows of `probs` align with `labels`.
double classification_loss(const FeatureMatrix& probs, std::span<const int> labels);

// Mean cross-entropy to the uniform distribution over R classes; 0 for no rows.
double equalization_loss(const FeatureMatrix& probs, std::size_t num_classes);

struct AugmentedPair {
  std::vector<double> view0;
  std::vector<double> view1;
};

// Feature-space stand-in for image augmentation: Gaussian noise followed by
// independent coordinate dropout, drawn from `seed`.
AugmentedPair augment_pair(std::span<const double> feature, std::uint64_t seed, double noise_sigma,
                           double drop_prob);

// Seed for the augmentation of one record in one epoch.
std::uint64_t augmentation_seed(std::uint64_t master_seed, std::int64_t record_id, int epoch);

enum class InfoNceForm {
  kPrinted,  // -log(A_i + B_i): both fractions summed inside one log
  kSplit,    // -log A_i - log B_i
};

InfoNceForm parse_infonce_form(std::string_view text);
std::string_view to_string(InfoNceForm form);

// Summed over the batch. A_i is the softmax of cos(b0_i, b1_j) over j at j = i,
// B_i the softmax of cos(b1_i, b0_g) over g at g = i. The printed form can be
// negative.
double infonce_loss(const FeatureMatrix& views0, const FeatureMatrix& views1,
                    InfoNceForm form = InfoNceForm::kPrinted);

// Same value, plus gradients with respect to both view batches.
double infonce_loss_grad(const FeatureMatrix& views0, const FeatureMatrix& views1, InfoNceForm form,
                         FeatureMatrix* d_views0, FeatureMatrix* d_views1);

struct LossWeights {
  double alpha = 0.15;  // InfoNCE
  double beta = 0.5;    // equalization
  double gamma = 1e-4;  // original labeled cross-entropy
};

void validate(const LossWeights& weights);

// L0 + beta L1 + alpha L2 + gamma L0^L.
double total_loss(double l0, double l1, double l2, double l0_labeled, const LossWeights& weights);

// Sample sets for one evaluation of the combined objective. Indices refer to
// rows of `features`; views are the two augmented copies of every row.
struct ObjectiveInputs {
  const FeatureMatrix* features = nullptr;
  std::vector<std::size_t> labeled;  // current labeled set, ground truth plus pseudo-labels
  std::vector<int> labeled_targets;
  std::vector<std::size_t> original_labeled;  // ground-truth labeled set only
  std::vector<int> original_targets;
  std::vector<std::size_t> unlabeled;  // remaining unlabeled
  FeatureMatrix views0;                // empty: contrastive term skipped
  FeatureMatrix views1;
};

struct LossBreakdown {
  double l0 = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;  // InfoNCE per sample (batch sum / N)
  double l0_labeled = 0.0;
  double total = 0.0;
};

// Evaluates the weighted objective; when `gradient` is non-null it receives the
// exact gradient of `total` with respect to every classifier tensor.
LossBreakdown evaluate_objective(const ClassifierParams& params, const ObjectiveInputs& inputs,
                                 const LossWeights& weights, InfoNceForm form, ClassifierParams* gradient);

}  // namespace ahgc
