#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ahgc/dataset.h"
#include "ahgc/knn_graph.h"

namespace ahgc {

inline constexpr std::size_t kGatLayers = 4;
inline constexpr double kLeakySlope = 0.2;
// Linkage probabilities are kept inside [floor, 1 - floor] so e_ij stays in (-1, 1).
inline constexpr double kLinkageFloor = 1e-12;

// Single-head graph attention layer: z = h W, logits LeakyReLU(a_src.z_i + a_dst.z_j)
// softmaxed over {i} and i's neighbor list, m_i = sum_j alpha_ij z_j. The output
// is (m_i - mean over nodes of m) + z_i + bias, followed by ELU except on the
// last layer. The centered message plus self term keeps node identity alive on
// small, nearly complete graphs where plain averaging makes every row equal.
struct GatLayer {
  Eigen::MatrixXd weight;     // d_in x d_hidden
  Eigen::MatrixXd attention;  // 1 x (2 d_hidden): [source half, destination half]
  Eigen::MatrixXd bias;       // 1 x d_hidden
};

// Attention encoder plus a two-layer MLP with a 2-way softmax {same label,
// different label}. The MLP sees [f'_i * f'_j, (f'_i - f'_j)^2, a_ij], which is
// symmetric in the two endpoints.
struct ScorerParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::uint64_t seed = 0;
  std::array<GatLayer, kGatLayers> gat;
  Eigen::MatrixXd mlp_w1;  // (2h + 1) x h
  Eigen::MatrixXd mlp_b1;  // 1 x h
  Eigen::MatrixXd mlp_w2;  // h x 2
  Eigen::MatrixXd mlp_b2;  // 1 x 2

  // Visits every tensor in a fixed order with a stable name.
  template <class F>
  void for_each_tensor(F&& f) {
    for (std::size_t l = 0; l < kGatLayers; ++l) {
      const std::string p = "gat" + std::to_string(l) + ".";
      f(p + "weight", gat[l].weight);
      f(p + "attention", gat[l].attention);
      f(p + "bias", gat[l].bias);
    }
    f(std::string("mlp.w1"), mlp_w1);
    f(std::string("mlp.b1"), mlp_b1);
    f(std::string("mlp.w2"), mlp_w2);
    f(std::string("mlp.b2"), mlp_b2);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<ScorerParams*>(this)->for_each_tensor(
        [&f](const std::string& name, Eigen::MatrixXd& t) { f(name, static_cast<const Eigen::MatrixXd&>(t)); });
  }

  std::size_t parameter_count() const;
  // Same shapes, all zeros (gradient accumulator).
  ScorerParams zeros_like() const;
};

// Per-edge linkage arrays are laid out node-major, aligned with the graph's
// neighbor lists: entry i * k + s belongs to edge (i, neighbors[i][s]).
struct LinkageDensity {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> p;  // P(y_i == y_j)
  std::vector<double> e;  // 2 p - 1
  std::vector<double> d;  // per-node density

  double linkage(std::size_t i, std::size_t slot) const { return p[i * k + slot]; }
  double coefficient(std::size_t i, std::size_t slot) const { return e[i * k + slot]; }
};

ScorerParams init_scorer(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

// d_i = (1/k) sum_j e_ij a_ij over i's neighbor list.
std::vector<double> density_from_coefficients(const AffinityGraph& graph, std::span<const double> e);

// Builds a LinkageDensity from raw linkage probabilities (clamped to the floor).
LinkageDensity linkage_from_probabilities(const AffinityGraph& graph, std::vector<double> p);

LinkageDensity forward(const ScorerParams& params, const AffinityGraph& graph,
                       const FeatureMatrix& features);

// Density with e_ij = +1 for same-label neighbors and -1 otherwise.
double ground_truth_density(const AffinityGraph& graph, std::span<const std::optional<int>> labels,
                            std::size_t node);

struct ScorerLoss {
  double loss = 0.0;
  ScorerParams gradient;
  std::size_t labeled_edges = 0;
};

// Mean binary cross-entropy of p_ij against 1(y_i == y_j) over edges whose two
// endpoints are labeled, with exact analytic gradients. source_weights, when
// non-empty, weights every edge by its source node and turns the mean into a
// weighted mean.
ScorerLoss scorer_loss(const ScorerParams& params, const AffinityGraph& graph,
                       const FeatureMatrix& features, std::span<const std::optional<int>> labels,
                       std::span<const double> source_weights = {});

std::size_t count_labeled_edges(const AffinityGraph& graph, std::span<const std::optional<int>> labels);

struct ScorerTrainResult {
  ScorerParams params;
  std::vector<double> loss_trace;
};

// Full-batch gradient descent.
ScorerTrainResult train_scorer(ScorerParams params, const AffinityGraph& graph,
                               const FeatureMatrix& features,
                               std::span<const std::optional<int>> labels, double lr,
                               std::size_t steps, std::span<const double> source_weights = {});

// Checkpoints use the tensor format from tensor_io.h plus a "meta" tensor
// holding [input_dim, hidden_dim, seed_hi32, seed_lo32].
void save_scorer(const std::filesystem::path& path, const ScorerParams& params);
ScorerParams load_scorer(const std::filesystem::path& path);

}  // namespace ahgc
