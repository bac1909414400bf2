#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "ahgc/dataset.h"
#include "ahgc/decode.h"
#include "ahgc/error.h"
#include "ahgc/hierarchy.h"
#include "ahgc/io.h"
#include "ahgc/knn_graph.h"
#include "ahgc/labeling.h"
#include "ahgc/metrics.h"
#include "ahgc/objectives.h"
#include "ahgc/pipeline.h"
#include "ahgc/rng.h"
#include "ahgc/scorer.h"
#include "ahgc/training.h"

namespace fs = std::filesystem;
using namespace ahgc;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Common {
  PipelineConfig cfg;
  std::string delta = "0.7";
  std::string infonce_form = "printed";
  std::string gen_synth;
};

void add_data_options(CLI::App* app, Common& c) {
  app->add_option("--data", c.cfg.data, "Embedding CSV");
  app->add_option("--origin", c.cfg.origin, "Origin sidecar CSV (evaluation only)");
  app->add_option("--truth", c.cfg.truth, "True-label sidecar CSV (evaluation only)");
  app->add_option("--gen-synth", c.gen_synth, "Generate the input instead of loading it")->check(CLI::IsMember({"default"}));
}

void add_pipeline_options(CLI::App* app, Common& c) {
  auto& cfg = c.cfg;
  app->add_option("--k", cfg.k, "Neighbors per node")->capture_default_str();
  app->add_option("--k-target", cfg.k_target, "Stop before the subgraph count drops below this (0: off)")
      ->capture_default_str();
  app->add_option("--p-tau", cfg.p_tau, "Linkage threshold")->capture_default_str();
  app->add_option("--rho", cfg.rho, "Pseudo-labeling ratio threshold")->capture_default_str();
  app->add_option("--temperature", cfg.temperature, "Energy temperature T")->capture_default_str();
  app->add_option("--delta", c.delta, "Detection threshold, or 'tpr95'")->capture_default_str();
  app->add_option("--alpha", cfg.weights.alpha, "InfoNCE weight")->capture_default_str();
  app->add_option("--beta", cfg.weights.beta, "Equalization weight")->capture_default_str();
  app->add_option("--gamma", cfg.weights.gamma, "Original labeled loss weight")->capture_default_str();
  app->add_option("--max-levels", cfg.max_levels, "Hierarchy level cap")->capture_default_str();
  app->add_option("--max-epochs", cfg.max_epochs, "Training epochs")->capture_default_str();
  app->add_option("--lr", cfg.lr, "Classifier learning rate")->capture_default_str();
  app->add_option("--hidden-dim", cfg.hidden_dim, "Scorer hidden width")->capture_default_str();
  app->add_option("--classifier-hidden", cfg.classifier_hidden, "Classifier projection width")->capture_default_str();
  app->add_option("--scorer-lr", cfg.scorer_lr, "Scorer learning rate")->capture_default_str();
  app->add_option("--scorer-steps", cfg.scorer_steps, "Scorer steps per epoch")->capture_default_str();
  app->add_option("--virtual-ratio", cfg.virtual_ratio, "Virtual outliers per labeled node for the aggregated scorer")
      ->capture_default_str();
  app->add_option("--pretrain-steps", cfg.pretrain_steps, "Supervised warm-up steps")->capture_default_str();
  app->add_option("--steps-per-epoch", cfg.steps_per_epoch, "Classifier steps per epoch")->capture_default_str();
  app->add_option("--noise-sigma", cfg.noise_sigma, "Augmentation noise")->capture_default_str();
  app->add_option("--drop-prob", cfg.drop_prob, "Augmentation dropout rate")->capture_default_str();
  app->add_option("--infonce-form", c.infonce_form, "printed or split")
      ->check(CLI::IsMember({"printed", "split"}))
      ->capture_default_str();
  app->add_option("--tol", cfg.tol, "Relative loss-change tolerance")->capture_default_str();
  app->add_option("--patience", cfg.patience, "Epochs below tolerance before stopping")->capture_default_str();
}

void add_seed(CLI::App* app, Common& c) { app->add_option("--seed", c.cfg.seed, "Master seed")->capture_default_str(); }

void add_out_dir(CLI::App* app, Common& c) {
  app->add_option("--out-dir", c.cfg.out_dir, "Output directory")->envname("AHGC_OUT_DIR")->capture_default_str();
}

double parse_delta(const std::string& text, bool& from_tpr) {
  from_tpr = text == "tpr95";
  if (from_tpr) return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("delta", "expected a number or 'tpr95', got '" + text + "'");
}

void finish(Common& c) {
  c.cfg.delta = parse_delta(c.delta, c.cfg.delta_from_tpr);
  c.cfg.infonce_form = parse_infonce_form(c.infonce_form);
  if (!c.gen_synth.empty()) c.cfg.synthetic = default_benchmark(c.cfg.seed);
}

Dataset load_normalized(const Common& c) {
  if (c.cfg.data.empty() && !c.cfg.synthetic) throw ValidationError("data", "--data is required");
  return normalize_features(prepare_dataset(c.cfg));
}

std::vector<std::int64_t> ids_of(const Dataset& ds) {
  std::vector<std::int64_t> ids;
  for (const auto& r : ds.records) ids.push_back(r.id);
  return ids;
}

// Same initial scorers as the training loop for this seed.
ScorerBank make_bank(const PipelineConfig& cfg, std::size_t dim, std::size_t steps) {
  return ScorerBank(dim, {cfg.hidden_dim, cfg.scorer_lr, steps, substream_seed(cfg.seed, "scorer-init"), cfg.virtual_ratio});
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hierarchical graph cut for out-of-distribution detection on embeddings", "ahgc"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags win)");
  app.require_subcommand(1);
  std::string stage;
  Common c;

  // gen-synth
  SyntheticSpec spec = default_benchmark(0);
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic multi-granularity benchmark");
  gen->add_option("--coarse-classes", spec.coarse_id_classes, "Coarse ID classes R")->capture_default_str();
  gen->add_option("--fine-per-class", spec.fine_per_class, "Fine subclusters per class")->capture_default_str();
  gen->add_option("--ood-clusters", spec.ood_clusters, "OOD clusters")->capture_default_str();
  gen->add_option("--points-per-cluster", spec.points_per_cluster, "Points per cluster")->capture_default_str();
  gen->add_option("--dim", spec.dim, "Embedding dimension")->capture_default_str();
  gen->add_option("--cluster-sep", spec.cluster_sep, "Minimum center distance in sigma")->capture_default_str();
  gen->add_option("--labeled-fraction", spec.labeled_fraction, "Fraction of ID points labeled")
      ->capture_default_str();
  gen->add_option("--seed", spec.seed, "Seed")->capture_default_str();
  add_out_dir(gen, c);

  // build-graph
  fs::path graph_out;
  auto* build = app.add_subcommand("build-graph", "Build the cosine k-NN graph");
  add_data_options(build, c);
  build->add_option("--k", c.cfg.k, "Neighbors per node")->capture_default_str();
  build->add_option("--out", graph_out, "Graph CSV")->required();

  // train-scorer
  fs::path ckpt_out;
  fs::path init_ckpt;
  auto* tscorer = app.add_subcommand("train-scorer", "Train the level-0 linkage scorer on labeled edges");
  add_data_options(tscorer, c);
  add_seed(tscorer, c);
  tscorer->add_option("--k", c.cfg.k, "Neighbors per node")->capture_default_str();
  tscorer->add_option("--hidden-dim", c.cfg.hidden_dim, "Scorer hidden width")->capture_default_str();
  tscorer->add_option("--scorer-lr", c.cfg.scorer_lr, "Learning rate")->capture_default_str();
  tscorer->add_option("--scorer-steps", c.cfg.scorer_steps, "Gradient steps")->capture_default_str();
  tscorer->add_option("--init", init_ckpt, "Start from this checkpoint");
  tscorer->add_option("--out", ckpt_out, "Checkpoint path")->required();
  tscorer->add_option("--graph-out", graph_out, "Also write the graph with linkage probabilities");

  // cut
  fs::path graph_in;
  fs::path scorer_base;
  fs::path scorer_agg;
  fs::path partition_out;
  fs::path trace_out;
  auto* cut = app.add_subcommand("cut", "Cut a scored graph, or run the full hierarchy on a dataset");
  cut->add_option("--graph", graph_in, "Graph CSV with a linkage column (single level)");
  add_data_options(cut, c);
  cut->add_option("--scorer", scorer_base, "Level-0 scorer checkpoint (hierarchy mode)");
  cut->add_option("--scorer-aggregated", scorer_agg, "Level >= 1 scorer checkpoint (hierarchy mode)");
  add_seed(cut, c);
  cut->add_option("--hidden-dim", c.cfg.hidden_dim, "Width of freshly initialized scorers")->capture_default_str();
  cut->add_option("--p-tau", c.cfg.p_tau, "Linkage threshold")->capture_default_str();
  cut->add_option("--k", c.cfg.k, "Neighbors per node")->capture_default_str();
  cut->add_option("--k-target", c.cfg.k_target, "Subgraph budget (0: off)")->capture_default_str();
  cut->add_option("--max-levels", c.cfg.max_levels, "Level cap")->capture_default_str();
  cut->add_option("--out", partition_out, "Partition CSV")->required();
  cut->add_option("--trace-out", trace_out, "Hierarchy trace JSON (hierarchy mode)");

  // assign-labels
  fs::path partition_in;
  fs::path pseudo_in;
  fs::path pseudo_out;
  int epoch = 1;
  auto* assign = app.add_subcommand("assign-labels", "Pseudo-label unlabeled members of confident subgraphs");
  add_data_options(assign, c);
  assign->add_option("--partition", partition_in, "Partition CSV (node_id,subgraph,is_peak)")->required();
  assign->add_option("--pseudo-labels", pseudo_in, "Previously assigned pseudo-labels");
  assign->add_option("--rho", c.cfg.rho, "Ratio threshold")->capture_default_str();
  assign->add_option("--epoch", epoch, "Epoch recorded with new labels")->capture_default_str();
  assign->add_option("--out", pseudo_out, "Pseudo-label CSV (previous plus new)")->required();

  // train
  auto* train = app.add_subcommand("train", "Run the training loop and write its artifacts");
  add_data_options(train, c);
  add_pipeline_options(train, c);
  add_seed(train, c);
  add_out_dir(train, c);

  // score
  fs::path classifier_in;
  fs::path scores_out;
  auto* score = app.add_subcommand("score", "Energy-score the unlabeled records");
  add_data_options(score, c);
  score->add_option("--classifier", classifier_in, "Classifier checkpoint")->required();
  score->add_option("--temperature", c.cfg.temperature, "Energy temperature T")->capture_default_str();
  score->add_option("--delta", c.delta, "Detection threshold, or 'tpr95'")->capture_default_str();
  score->add_option("--out", scores_out, "Score CSV")->required();

  // evaluate
  fs::path scores_in;
  auto* evaluate = app.add_subcommand("evaluate", "Compute the metric suite; JSON on standard output");
  evaluate->add_option("--scores", scores_in, "Score CSV")->required();
  evaluate->add_option("--origin", c.cfg.origin, "Origin sidecar CSV")->required();
  evaluate->add_option("--truth", c.cfg.truth, "True-label sidecar CSV (enables CCR and ID accuracy)");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline: data, training, scoring, evaluation");
  add_data_options(run, c);
  add_pipeline_options(run, c);
  add_seed(run, c);
  add_out_dir(run, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    stage = app.get_subcommands().front()->get_name();
    finish(c);

    if (*gen) {
      const Dataset ds = gen_synthetic(spec);
      save_dataset(c.cfg.out_dir / "dataset.csv", ds);
      save_origins(c.cfg.out_dir / "origin.csv", ds);
      save_truth(c.cfg.out_dir / "truth.csv", ds);
    } else if (*build) {
      const Dataset ds = load_normalized(c);
      const auto graph = build_knn_graph(feature_matrix(ds), c.cfg.k);
      save_graph(graph_out, graph, ids_of(ds));
    } else if (*tscorer) {
      const Dataset ds = load_normalized(c);
      const FeatureMatrix f = feature_matrix(ds);
      const auto graph = build_knn_graph(f, std::min(c.cfg.k, ds.size() - 1));
      ScorerParams params = init_ckpt.empty() ? make_bank(c.cfg, ds.dim(), 0).base() : load_scorer(init_ckpt);
      auto fit = train_scorer(std::move(params), graph, f, training_labels(ds), c.cfg.scorer_lr, c.cfg.scorer_steps);
      save_scorer(ckpt_out, fit.params);
      if (!graph_out.empty()) {
        const auto ld = forward(fit.params, graph, f);
        save_graph(graph_out, graph, ids_of(ds), &ld);
      }
      std::cerr << "train-scorer: loss " << fit.loss_trace.front() << " -> " << fit.loss_trace.back() << '\n';
    } else if (*cut) {
      if (!graph_in.empty()) {
        const GraphFile g = load_graph(graph_in);
        if (!g.p) throw ValidationError("graph", "the graph file has no linkage column");
        const auto ld = linkage_from_probabilities(g.graph, *g.p);
        const auto part = decode_graph(g.graph, ld, c.cfg.p_tau);
        save_partition(partition_out, part, g.ids);
        std::cerr << "cut: " << part.num_subgraphs << " subgraphs\n";
      } else {
        const Dataset ds = load_normalized(c);
        ScorerBank bank = make_bank(c.cfg, ds.dim(), 0);
        if (!scorer_base.empty()) bank.set_base(load_scorer(scorer_base));
        if (!scorer_agg.empty()) bank.set_aggregated(load_scorer(scorer_agg));
        const HierarchyConfig hc{c.cfg.k, c.cfg.p_tau, c.cfg.max_levels, c.cfg.k_target};
        const auto h = run_hierarchy(feature_matrix(ds), training_labels(ds), hc, bank.linkage_fn());
        save_assignment(partition_out, h.final_assignment, h.final_peaks, ids_of(ds));
        if (!trace_out.empty()) write_text(trace_out, h.trace().dump(2) + "\n");
        std::cerr << "cut: " << h.num_subgraphs << " subgraphs over " << h.depth() << " levels\n";
      }
    } else if (*assign) {
      Dataset ds = load_normalized(c);
      std::vector<PseudoLabel> labels;
      if (!pseudo_in.empty()) {
        labels = load_pseudo_labels(pseudo_in);
        ds = apply_pseudo_labels(std::move(ds), labels);
      }
      const PartitionFile part = load_partition(partition_in);
      if (part.ids != ids_of(ds)) throw ValidationError("partition", "node ids do not match the dataset order");
      auto [updated, report] = assign_labels(part.assignment, ds, c.cfg.rho, epoch);
      labels.insert(labels.end(), report.newly_labeled.begin(), report.newly_labeled.end());
      save_pseudo_labels(pseudo_out, labels);
      std::cerr << "assign-labels: " << report.newly_labeled.size() << " new\n";
    } else if (*train) {
      validate(c.cfg);
      const Dataset ds = load_normalized(c);
      const auto result = run_training(ds, training_config(c.cfg));
      write_training_artifacts(c.cfg.out_dir, ds, result);
    } else if (*score) {
      const Dataset ds = load_normalized(c);
      const auto scored = score_dataset(load_classifier(classifier_in), ds, c.cfg.temperature, c.cfg.delta,
                                        c.cfg.delta_from_tpr);
      save_scores(scores_out, scored);
    } else if (*evaluate) {
      auto samples = load_scores(scores_in);
      const auto origins = load_origins(c.cfg.origin);
      std::map<std::int64_t, std::optional<int>> truth;
      if (!c.cfg.truth.empty()) truth = load_truth(c.cfg.truth);
      for (auto& s : samples) {
        const auto it = origins.find(s.id);
        if (it == origins.end()) throw ValidationError("origin", "no origin for id " + std::to_string(s.id));
        s.origin = it->second;
        if (const auto t = truth.find(s.id); t != truth.end()) s.true_label = t->second;
      }
      print_json(compute_metrics(samples).to_json());
    } else if (*run) {
      const auto result = run_pipeline(c.cfg);
      if (result.metrics) print_json(result.metrics->to_json());
    }
  } catch (const ValidationError& e) {
    std::cerr << "ahgc " << stage << ": validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "ahgc " << stage << ": parse error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "ahgc " << stage << ": error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return EXIT_SUCCESS;
}
