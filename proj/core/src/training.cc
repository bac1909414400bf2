#include "ahgc/training.h"

#include <cmath>
#include <string>

#include "ahgc/error.h"
#include "ahgc/rng.h"
#include "ahgc/tensor_io.h"

namespace ahgc {
namespace {

void check_finite(const LossBreakdown& lb, const std::string& where) {
  if (!std::isfinite(lb.total)) throw NumericalError("run_training: non-finite loss " + where);
}

ObjectiveInputs build_inputs(const Dataset& ds, const FeatureMatrix& features,
                             const std::vector<std::size_t>& original, const std::vector<int>& original_targets) {
  ObjectiveInputs in;
  in.features = &features;
  in.original_labeled = original;
  in.original_targets = original_targets;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    if (r.split == Split::kLabeled) {
      in.labeled.push_back(i);
      in.labeled_targets.push_back(*r.label);
    } else {
      in.unlabeled.push_back(i);
    }
  }
  return in;
}

}  // namespace

void validate(const TrainingConfig& c) {
  validate(c.hierarchy);
  validate(c.weights);
  if (!(c.rho > 0.0 && c.rho < 1.0)) throw ValidationError("rho", "must lie strictly between 0 and 1");
  if (c.max_epochs < 1) throw ValidationError("max_epochs", "must be >= 1");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw ValidationError("lr", "must be a positive finite number");
  if (!(c.scorer.lr > 0.0) || !std::isfinite(c.scorer.lr)) {
    throw ValidationError("scorer_lr", "must be a positive finite number");
  }
  if (c.scorer.hidden_dim < 1) throw ValidationError("hidden_dim", "must be >= 1");
  if (!(c.scorer.virtual_ratio >= 0.0) || !std::isfinite(c.scorer.virtual_ratio)) {
    throw ValidationError("virtual_ratio", "must be a non-negative finite number");
  }
  if (c.classifier_hidden < 1) throw ValidationError("classifier_hidden", "must be >= 1");
  if (!(c.noise_sigma >= 0.0)) throw ValidationError("noise_sigma", "must be >= 0");
  if (!(c.drop_prob >= 0.0 && c.drop_prob < 1.0)) throw ValidationError("drop_prob", "must lie in [0, 1)");
  if (!(c.tol >= 0.0)) throw ValidationError("tol", "must be >= 0");
}

nlohmann::json EpochReport::to_json() const {
  return {
      {"epoch", epoch},         {"L0", losses.l0},          {"L1", losses.l1},
      {"L2", losses.l2},        {"L0L", losses.l0_labeled}, {"total", losses.total},
      {"newly_labeled", newly_labeled}, {"subgraphs", subgraphs},
  };
}

TrainingResult run_training(const Dataset& input, const TrainingConfig& config) {
  validate(config);
  validate(input);
  const auto num_classes = static_cast<std::size_t>(input.num_classes);
  if (num_classes < 1) throw ValidationError("num_classes", "dataset declares no classes");

  std::vector<std::size_t> original;
  std::vector<int> original_targets;
  std::vector<std::size_t> per_class(num_classes, 0);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto& r = input.records[i];
    if (r.split != Split::kLabeled) continue;
    original.push_back(i);
    original_targets.push_back(*r.label);
    ++per_class[static_cast<std::size_t>(*r.label)];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (per_class[c] == 0) throw ValidationError("dataset", "class " + std::to_string(c) + " has no labeled sample");
  }

  const FeatureMatrix features = feature_matrix(input);
  TrainingResult result;
  result.dataset = input;
  Dataset& ds = result.dataset;
  ClassifierParams params =
      init_classifier(input.dim(), config.classifier_hidden, num_classes, substream_seed(config.seed, "classifier"));

  // Supervised warm-up on the original labeled set only.
  {
    ObjectiveInputs pre;
    pre.features = &features;
    pre.labeled = original;
    pre.labeled_targets = original_targets;
    pre.original_labeled = original;
    pre.original_targets = original_targets;
    const LossWeights ce_only{0.0, 0.0, 0.0};
    ClassifierParams grad;
    for (std::size_t s = 0; s < config.pretrain_steps; ++s) {
      const auto lb = evaluate_objective(params, pre, ce_only, config.infonce_form, &grad);
      check_finite(lb, "during pretraining step " + std::to_string(s));
      add_scaled(params, -config.lr, grad);
    }
  }

  ScorerBank::Options scorer_opts = config.scorer;
  scorer_opts.seed = substream_seed(config.seed, "scorer-init");
  ScorerBank bank(input.dim(), scorer_opts);

  double previous_total = 0.0;
  std::size_t stale = 0;
  for (std::size_t t = 1; t <= config.max_epochs; ++t) {
    const int epoch = static_cast<int>(t);
    // The hierarchy depends only on the fixed features and the current labels,
    // so an epoch that assigned nothing leaves it unchanged for the next one.
    HierarchyResult hierarchy;
    if (t > 1 && result.epochs.back().newly_labeled == 0) {
      hierarchy = result.last_hierarchy;
    } else {
      bank.begin_round();
      hierarchy = run_hierarchy(features, training_labels(ds), config.hierarchy, bank.linkage_fn());
    }

    auto [updated, report] = assign_labels(hierarchy.final_assignment, ds, config.rho, epoch);
    ds = std::move(updated);
    result.pseudo_labels.insert(result.pseudo_labels.end(), report.newly_labeled.begin(),
                                report.newly_labeled.end());

    // Projected features are recomputed from the current parameters on every
    // evaluation below, so the new splits see refreshed b_i immediately.
    ObjectiveInputs in = build_inputs(ds, features, original, original_targets);
    const Eigen::Index d = features.cols();
    in.views0.resize(features.rows(), d);
    in.views1.resize(features.rows(), d);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds.records[i];
      const auto pair =
          augment_pair(r.feature, augmentation_seed(config.seed, r.id, epoch), config.noise_sigma, config.drop_prob);
      const auto row = static_cast<Eigen::Index>(i);
      in.views0.row(row) = Eigen::Map<const Eigen::RowVectorXd>(pair.view0.data(), d);
      in.views1.row(row) = Eigen::Map<const Eigen::RowVectorXd>(pair.view1.data(), d);
    }

    EpochReport er;
    er.epoch = epoch;
    er.newly_labeled = report.newly_labeled.size();
    er.labeled_total = in.labeled.size();
    er.subgraphs = hierarchy.num_subgraphs;
    er.hierarchy_trace = hierarchy.trace();
    ClassifierParams grad;
    for (std::size_t s = 0; s < std::max<std::size_t>(config.steps_per_epoch, 1); ++s) {
      const auto lb = evaluate_objective(params, in, config.weights, config.infonce_form, &grad);
      check_finite(lb, "at epoch " + std::to_string(epoch));
      if (s == 0) er.losses = lb;
      if (config.steps_per_epoch == 0) break;
      add_scaled(params, -config.lr, grad);
    }
    result.epochs.push_back(er);
    result.last_hierarchy = std::move(hierarchy);

    if (t > 1) {
      const double rel = std::abs(previous_total - er.losses.total) / std::max(std::abs(previous_total), 1e-12);
      stale = rel < config.tol ? stale + 1 : 0;
      if (config.patience > 0 && stale >= config.patience) {
        result.converged = true;
        break;
      }
    }
    previous_total = er.losses.total;
  }

  result.classifier = std::move(params);
  result.base_scorer = bank.base();
  result.aggregated_scorer = bank.aggregated();
  return result;
}

}  // namespace ahgc
