#include "ahgc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ahgc/error.h"
#include "ahgc/io.h"

namespace ahgc {

void validate(const PipelineConfig& c) {
  validate(training_config(c));
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) {
    throw ValidationError("temperature", "must be a positive finite number");
  }
  if (!std::isfinite(c.delta)) throw ValidationError("delta", "must be finite");
  if (c.synthetic) {
    validate(*c.synthetic);
  } else if (c.data.empty()) {
    throw ValidationError("data", "either a dataset path or a synthetic spec is required");
  }
}

TrainingConfig training_config(const PipelineConfig& c) {
  TrainingConfig t;
  t.hierarchy = {c.k, c.p_tau, c.max_levels, c.k_target};
  t.scorer.hidden_dim = c.hidden_dim;
  t.scorer.lr = c.scorer_lr;
  t.scorer.steps = c.scorer_steps;
  t.scorer.virtual_ratio = c.virtual_ratio;
  t.weights = c.weights;
  t.rho = c.rho;
  t.max_epochs = c.max_epochs;
  t.lr = c.lr;
  t.classifier_hidden = c.classifier_hidden;
  t.pretrain_steps = c.pretrain_steps;
  t.steps_per_epoch = c.steps_per_epoch;
  t.noise_sigma = c.noise_sigma;
  t.drop_prob = c.drop_prob;
  t.infonce_form = c.infonce_form;
  t.tol = c.tol;
  t.patience = c.patience;
  t.seed = c.seed;
  return t;
}

Dataset prepare_dataset(const PipelineConfig& c) {
  if (c.synthetic) return gen_synthetic(*c.synthetic);
  Dataset ds = load_dataset(c.data);
  if (!c.origin.empty()) attach_origins(ds, load_origins(c.origin));
  if (!c.truth.empty()) attach_truth(ds, load_truth(c.truth));
  return ds;
}

std::vector<ScoredSample> score_dataset(const ClassifierParams& classifier, const Dataset& dataset,
                                        double temperature, double delta, bool delta_from_tpr) {
  const auto out = classify(classifier, feature_matrix(dataset));
  std::vector<std::int64_t> ids;
  ids.reserve(dataset.size());
  for (const auto& r : dataset.records) ids.push_back(r.id);
  auto all = score_samples(ids, out.logits, temperature, delta);

  if (delta_from_tpr) {
    std::vector<double> labeled;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.records[i].split == Split::kLabeled) labeled.push_back(all[i].score);
    }
    if (labeled.empty()) throw ValidationError("delta", "tpr95 needs labeled records");
    delta = threshold_at_tpr(labeled, 0.95);
  }
  std::vector<ScoredSample> scored;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.split != Split::kUnlabeled) continue;
    auto s = std::move(all[i]);
    s.decision = detect(s.score, delta);
    s.origin = r.origin;
    s.true_label = r.true_label;
    scored.push_back(std::move(s));
  }
  return scored;
}

void write_training_artifacts(const std::filesystem::path& out_dir, const Dataset& dataset,
                              const TrainingResult& result) {
  std::filesystem::create_directories(out_dir);
  std::ostringstream epochs;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : result.epochs) {
    epochs << e.to_json().dump() << '\n';
    trace.push_back({{"epoch", e.epoch}, {"levels", e.hierarchy_trace}});
  }
  write_text(out_dir / "epochs.jsonl", epochs.str());
  save_pseudo_labels(out_dir / "pseudo_labels.csv", result.pseudo_labels);

  const auto& h = result.last_hierarchy;
  nlohmann::json hierarchy = {
      {"epochs", trace},
      {"final",
       {{"levels", h.trace()},
        {"subgraphs", h.num_subgraphs},
        {"converged", h.converged},
        {"stopped_at_target", h.stopped_at_target},
        {"hit_max_levels", h.hit_max_levels}}},
  };
  write_text(out_dir / "hierarchy.json", hierarchy.dump(2) + "\n");

  std::vector<std::int64_t> ids;
  for (const auto& r : dataset.records) ids.push_back(r.id);
  save_assignment(out_dir / "partition.csv", h.final_assignment, h.final_peaks, ids);
  save_classifier(out_dir / "classifier.ckpt", result.classifier);
  save_scorer(out_dir / "scorer_base.ckpt", result.base_scorer);
  save_scorer(out_dir / "scorer_aggregated.ckpt", result.aggregated_scorer);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  validate(config);
  PipelineResult out;
  Dataset raw = prepare_dataset(config);
  if (config.synthetic) {
    save_dataset(config.out_dir / "dataset.csv", raw);
    save_origins(config.out_dir / "origin.csv", raw);
    save_truth(config.out_dir / "truth.csv", raw);
  }
  out.dataset = normalize_features(std::move(raw));
  out.training = run_training(out.dataset, training_config(config));
  write_training_artifacts(config.out_dir, out.dataset, out.training);

  out.scores = score_dataset(out.training.classifier, out.dataset, config.temperature, config.delta,
                             config.delta_from_tpr);
  save_scores(config.out_dir / "scores.csv", out.scores);
  const bool has_origin = !out.scores.empty() &&
                          std::all_of(out.scores.begin(), out.scores.end(), [](const auto& s) { return s.origin.has_value(); });
  if (has_origin) {
    out.metrics = compute_metrics(out.scores);
    write_text(config.out_dir / "metrics.json", out.metrics->to_json().dump(2) + "\n");
  }
  return out;
}

}  // namespace ahgc
