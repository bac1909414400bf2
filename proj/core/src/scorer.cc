#include "ahgc/scorer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ahgc/error.h"
#include "ahgc/rng.h"
#include "ahgc/tensor_io.h"

namespace ahgc {
namespace {

using Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double z = std::exp(s);
  return z / (1.0 + z);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

bool is_output_layer(std::size_t l) { return l + 1 == kGatLayers; }

struct LayerCache {
  RowMatrix z;      // n x h
  RowMatrix pre;    // n x h, before activation
  RowMatrix out;    // n x h
  RowMatrix raw;    // n x (k+1), attention logits before LeakyReLU
  RowMatrix alpha;  // n x (k+1)
};

struct EncoderCache {
  std::vector<LayerCache> layers;
  const RowMatrix* embedding = nullptr;  // f' (output of the last layer)
};

// Neighborhood slot 0 is the node itself; slots 1..k follow the neighbor list.
std::size_t slot_node(const AffinityGraph& g, std::size_t i, std::size_t s) {
  return s == 0 ? i : g.neighbors[i][s - 1].index;
}

void check_inputs(const ScorerParams& params, const AffinityGraph& graph, const FeatureMatrix& features) {
  if (static_cast<std::size_t>(features.cols()) != params.input_dim) {
    throw ValidationError("features", "dimension " + std::to_string(features.cols()) +
                                          " does not match scorer input_dim " +
                                          std::to_string(params.input_dim));
  }
  if (static_cast<std::size_t>(features.rows()) != graph.n || graph.neighbors.size() != graph.n) {
    throw ValidationError("graph", "node count does not match feature rows");
  }
  for (const auto& list : graph.neighbors) {
    if (list.size() != graph.k) throw ValidationError("graph", "neighbor lists must all have k entries");
  }
}

EncoderCache encode(const ScorerParams& params, const AffinityGraph& g, const FeatureMatrix& features) {
  const std::size_t n = g.n;
  const std::size_t width = g.k + 1;
  const auto h = static_cast<Eigen::Index>(params.hidden_dim);
  EncoderCache cache;
  cache.layers.resize(kGatLayers);
  const RowMatrix* input = &features;
  for (std::size_t l = 0; l < kGatLayers; ++l) {
    const GatLayer& layer = params.gat[l];
    LayerCache& c = cache.layers[l];
    c.z = (*input) * layer.weight;
    const Eigen::VectorXd src = c.z * layer.attention.leftCols(h).transpose();
    const Eigen::VectorXd dst = c.z * layer.attention.rightCols(h).transpose();
    c.raw.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    c.alpha.resizeLike(c.raw);
    c.pre.resize(static_cast<Eigen::Index>(n), h);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < width; ++s) {
        const double r = src(ii) + dst(static_cast<Eigen::Index>(slot_node(g, i, s)));
        c.raw(ii, static_cast<Eigen::Index>(s)) = r;
        mx = std::max(mx, r > 0.0 ? r : kLeakySlope * r);
      }
      double total = 0.0;
      for (std::size_t s = 0; s < width; ++s) {
        const double r = c.raw(ii, static_cast<Eigen::Index>(s));
        const double w = std::exp((r > 0.0 ? r : kLeakySlope * r) - mx);
        c.alpha(ii, static_cast<Eigen::Index>(s)) = w;
        total += w;
      }
      c.pre.row(ii).setZero();
      for (std::size_t s = 0; s < width; ++s) {
        double& a = c.alpha(ii, static_cast<Eigen::Index>(s));
        a /= total;
        c.pre.row(ii) += a * c.z.row(static_cast<Eigen::Index>(slot_node(g, i, s)));
      }
    }
    // The attention message is centered across nodes and added to the node's
    // own transform, so dense neighborhoods cannot wash out node identity.
    const Eigen::RowVectorXd mean = c.pre.colwise().mean();
    c.pre.rowwise() -= mean;
    c.pre += c.z;
    c.pre.rowwise() += layer.bias.row(0);
    c.out = is_output_layer(l) ? c.pre : RowMatrix(c.pre.unaryExpr(&elu));
    if (!c.out.allFinite()) {
      throw NumericalError("scorer: non-finite activations in gat layer " + std::to_string(l));
    }
    input = &c.out;
  }
  cache.embedding = input;
  return cache;
}

// Rows of the edge batch for the listed (i, slot) pairs: [f'_i * f'_j, (f'_i - f'_j)^2],
// elementwise.
RowMatrix edge_inputs(const AffinityGraph& g, const RowMatrix& emb,
                      const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const Eigen::Index h = emb.cols();
  RowMatrix x(static_cast<Eigen::Index>(edges.size()), 2 * h + 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, s] = edges[e];
    const auto a = emb.row(static_cast<Eigen::Index>(i)).array();
    const auto b = emb.row(static_cast<Eigen::Index>(g.neighbors[i][s].index)).array();
    x.row(static_cast<Eigen::Index>(e)).head(h) = (a * b).matrix();
    x.row(static_cast<Eigen::Index>(e)).segment(h, h) = (a - b).square().matrix();
    x(static_cast<Eigen::Index>(e), 2 * h) = g.neighbors[i][s].affinity;
  }
  return x;
}

struct MlpCache {
  RowMatrix x;
  RowMatrix u;              // tanh hidden
  Eigen::VectorXd margin;   // o_same - o_diff
};

MlpCache mlp_forward(const ScorerParams& params, RowMatrix x) {
  MlpCache c;
  c.x = std::move(x);
  RowMatrix pre = c.x * params.mlp_w1;
  pre.rowwise() += params.mlp_b1.row(0);
  c.u = pre.array().tanh().matrix();
  RowMatrix o = c.u * params.mlp_w2;
  o.rowwise() += params.mlp_b2.row(0);
  c.margin = o.col(0) - o.col(1);
  if (!c.margin.allFinite()) throw NumericalError("scorer: non-finite activations in mlp head");
  return c;
}

}  // namespace

std::size_t ScorerParams::parameter_count() const {
  std::size_t count = 0;
  for_each_tensor([&count](const std::string&, const Eigen::MatrixXd& t) {
    count += static_cast<std::size_t>(t.size());
  });
  return count;
}

ScorerParams ScorerParams::zeros_like() const {
  ScorerParams z = *this;
  z.for_each_tensor([](const std::string&, Eigen::MatrixXd& t) { t.setZero(); });
  return z;
}

ScorerParams init_scorer(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  if (input_dim < 1) throw ValidationError("input_dim", "must be >= 1");
  if (hidden_dim < 1) throw ValidationError("hidden_dim", "must be >= 1");
  const auto d = static_cast<Eigen::Index>(input_dim);
  const auto h = static_cast<Eigen::Index>(hidden_dim);

  ScorerParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.seed = seed;
  Rng rng(substream_seed(seed, "scorer-init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
    }
    return m;
  };
  for (std::size_t l = 0; l < kGatLayers; ++l) {
    p.gat[l].weight = fill(l == 0 ? d : h, h);
    p.gat[l].attention = MatrixXd::Zero(1, 2 * h);
    p.gat[l].bias = MatrixXd::Zero(1, h);
  }
  p.mlp_w1 = fill(2 * h + 1, h);
  p.mlp_b1 = MatrixXd::Zero(1, h);
  p.mlp_w2 = fill(h, 2);
  p.mlp_b2 = MatrixXd::Zero(1, 2);
  return p;
}

std::vector<double> density_from_coefficients(const AffinityGraph& graph, std::span<const double> e) {
  std::vector<double> d(graph.n, 0.0);
  if (graph.k == 0) return d;
  for (std::size_t i = 0; i < graph.n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < graph.k; ++t) s += e[i * graph.k + t] * graph.neighbors[i][t].affinity;
    d[i] = s / static_cast<double>(graph.k);
  }
  return d;
}

LinkageDensity linkage_from_probabilities(const AffinityGraph& graph, std::vector<double> p) {
  if (p.size() != graph.n * graph.k) throw ValidationError("p", "one probability per edge required");
  LinkageDensity ld;
  ld.n = graph.n;
  ld.k = graph.k;
  ld.p = std::move(p);
  ld.e.resize(ld.p.size());
  for (std::size_t t = 0; t < ld.p.size(); ++t) {
    if (!std::isfinite(ld.p[t])) throw NumericalError("linkage probability is not finite");
    ld.p[t] = std::clamp(ld.p[t], kLinkageFloor, 1.0 - kLinkageFloor);
    ld.e[t] = 2.0 * ld.p[t] - 1.0;
  }
  ld.d = density_from_coefficients(graph, ld.e);
  return ld;
}

LinkageDensity forward(const ScorerParams& params, const AffinityGraph& graph, const FeatureMatrix& features) {
  check_inputs(params, graph, features);
  const EncoderCache enc = encode(params, graph, features);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(graph.num_edges());
  for (std::size_t i = 0; i < graph.n; ++i) {
    for (std::size_t s = 0; s < graph.k; ++s) edges.emplace_back(i, s);
  }
  const MlpCache mlp = mlp_forward(params, edge_inputs(graph, *enc.embedding, edges));
  std::vector<double> p(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) p[e] = sigmoid(mlp.margin(static_cast<Eigen::Index>(e)));
  return linkage_from_probabilities(graph, std::move(p));
}

double ground_truth_density(const AffinityGraph& graph, std::span<const std::optional<int>> labels,
                            std::size_t node) {
  if (node >= graph.n) throw ValidationError("node", "index out of range");
  if (labels.size() != graph.n) throw ValidationError("labels", "one entry per node required");
  if (!labels[node]) throw ValidationError("labels", "node " + std::to_string(node) + " is unlabeled");
  double s = 0.0;
  for (const auto& nb : graph.neighbors[node]) {
    if (!labels[nb.index]) {
      throw ValidationError("labels", "neighbor " + std::to_string(nb.index) + " is unlabeled");
    }
    s += (*labels[nb.index] == *labels[node] ? 1.0 : -1.0) * nb.affinity;
  }
  return s / static_cast<double>(graph.k);
}

std::size_t count_labeled_edges(const AffinityGraph& graph, std::span<const std::optional<int>> labels) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < graph.n; ++i) {
    if (!labels[i]) continue;
    for (const auto& nb : graph.neighbors[i]) count += labels[nb.index] ? 1 : 0;
  }
  return count;
}

ScorerLoss scorer_loss(const ScorerParams& params, const AffinityGraph& graph, const FeatureMatrix& features,
                       std::span<const std::optional<int>> labels, std::span<const double> source_weights) {
  check_inputs(params, graph, features);
  if (labels.size() != graph.n) throw ValidationError("labels", "one entry per node required");
  if (!source_weights.empty() && source_weights.size() != graph.n) {
    throw ValidationError("source_weights", "one entry per node required");
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> targets;
  std::vector<double> weights;
  double total_weight = 0.0;
  for (std::size_t i = 0; i < graph.n; ++i) {
    if (!labels[i]) continue;
    const double w = source_weights.empty() ? 1.0 : source_weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("source_weights", "must be non-negative and finite");
    for (std::size_t s = 0; s < graph.k; ++s) {
      const auto& y = labels[graph.neighbors[i][s].index];
      if (!y) continue;
      edges.emplace_back(i, s);
      targets.push_back(*y == *labels[i] ? 1.0 : 0.0);
      weights.push_back(w);
      total_weight += w;
    }
  }
  if (edges.empty()) throw ValidationError("labels", "no edge has two labeled endpoints");
  if (!(total_weight > 0.0)) throw ValidationError("source_weights", "labeled edges carry zero total weight");

  const EncoderCache enc = encode(params, graph, features);
  const MlpCache mlp = mlp_forward(params, edge_inputs(graph, *enc.embedding, edges));

  const double m = total_weight;
  const auto h = static_cast<Eigen::Index>(params.hidden_dim);
  ScorerLoss result;
  result.labeled_edges = edges.size();
  result.gradient = params.zeros_like();
  ScorerParams& grad = result.gradient;

  // Head: L = mean softplus(-s) for positives, softplus(s) for negatives.
  RowMatrix d_out(static_cast<Eigen::Index>(edges.size()), 2);
  double loss = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto ee = static_cast<Eigen::Index>(e);
    const double s = mlp.margin(ee);
    loss += weights[e] * (targets[e] > 0.5 ? softplus(-s) : softplus(s));
    const double ds = weights[e] * (sigmoid(s) - targets[e]) / m;
    d_out(ee, 0) = ds;
    d_out(ee, 1) = -ds;
  }
  result.loss = loss / m;

  grad.mlp_w2 = mlp.u.transpose() * d_out;
  grad.mlp_b2 = d_out.colwise().sum();
  const RowMatrix d_pre = ((d_out * params.mlp_w2.transpose()).array() * (1.0 - mlp.u.array().square())).matrix();
  grad.mlp_w1 = mlp.x.transpose() * d_pre;
  grad.mlp_b1 = d_pre.colwise().sum();
  const RowMatrix d_x = d_pre * params.mlp_w1.transpose();

  RowMatrix d_emb = RowMatrix::Zero(static_cast<Eigen::Index>(graph.n), h);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, s] = edges[e];
    const auto ee = static_cast<Eigen::Index>(e);
    const auto j = static_cast<Eigen::Index>(graph.neighbors[i][s].index);
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd diff = enc.embedding->row(ii) - enc.embedding->row(j);
    const Eigen::RowVectorXd d_sq = 2.0 * d_x.row(ee).segment(h, h).cwiseProduct(diff);
    d_emb.row(ii) += d_x.row(ee).head(h).cwiseProduct(enc.embedding->row(j)) + d_sq;
    d_emb.row(j) += d_x.row(ee).head(h).cwiseProduct(enc.embedding->row(ii)) - d_sq;
  }

  // Encoder, last layer first.
  const std::size_t width = graph.k + 1;
  RowMatrix d_layer_out = std::move(d_emb);
  for (std::size_t l = kGatLayers; l-- > 0;) {
    const GatLayer& layer = params.gat[l];
    const LayerCache& c = enc.layers[l];
    RowMatrix d_pre_act = d_layer_out;
    if (!is_output_layer(l)) {
      for (Eigen::Index r = 0; r < d_pre_act.rows(); ++r) {
        for (Eigen::Index q = 0; q < h; ++q) {
          if (c.pre(r, q) <= 0.0) d_pre_act(r, q) *= c.out(r, q) + 1.0;
        }
      }
    }
    grad.gat[l].bias = d_pre_act.colwise().sum();
    RowMatrix d_z = d_pre_act;  // self term
    const Eigen::RowVectorXd d_mean = d_pre_act.colwise().mean();
    d_pre_act.rowwise() -= d_mean;

    Eigen::RowVectorXd d_src = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd d_dst = Eigen::RowVectorXd::Zero(h);
    const Eigen::RowVectorXd a_src = layer.attention.leftCols(h);
    const Eigen::RowVectorXd a_dst = layer.attention.rightCols(h);
    std::vector<double> d_alpha(width);
    for (std::size_t i = 0; i < graph.n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double weighted = 0.0;
      for (std::size_t s = 0; s < width; ++s) {
        const auto j = static_cast<Eigen::Index>(slot_node(graph, i, s));
        const double a = c.alpha(ii, static_cast<Eigen::Index>(s));
        d_z.row(j) += a * d_pre_act.row(ii);
        d_alpha[s] = d_pre_act.row(ii).dot(c.z.row(j));
        weighted += a * d_alpha[s];
      }
      for (std::size_t s = 0; s < width; ++s) {
        const auto j = static_cast<Eigen::Index>(slot_node(graph, i, s));
        const double a = c.alpha(ii, static_cast<Eigen::Index>(s));
        const double raw = c.raw(ii, static_cast<Eigen::Index>(s));
        const double d_raw = a * (d_alpha[s] - weighted) * (raw > 0.0 ? 1.0 : kLeakySlope);
        d_src += d_raw * c.z.row(ii);
        d_dst += d_raw * c.z.row(j);
        d_z.row(ii) += d_raw * a_src;
        d_z.row(j) += d_raw * a_dst;
      }
    }
    grad.gat[l].attention.leftCols(h) = d_src;
    grad.gat[l].attention.rightCols(h) = d_dst;

    const RowMatrix& input = l == 0 ? features : enc.layers[l - 1].out;
    grad.gat[l].weight = input.transpose() * d_z;
    if (l > 0) d_layer_out = d_z * layer.weight.transpose();
  }
  return result;
}

ScorerTrainResult train_scorer(ScorerParams params, const AffinityGraph& graph, const FeatureMatrix& features,
                               std::span<const std::optional<int>> labels, double lr, std::size_t steps,
                               std::span<const double> source_weights) {
  if (steps < 1) throw ValidationError("steps", "must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr", "must be a positive finite number");
  ScorerTrainResult result;
  result.loss_trace.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    ScorerLoss l = scorer_loss(params, graph, features, labels, source_weights);
    if (!std::isfinite(l.loss)) {
      throw NumericalError("train_scorer: non-finite loss at step " + std::to_string(step));
    }
    result.loss_trace.push_back(l.loss);
    add_scaled(params, -lr, l.gradient);
  }
  result.params = std::move(params);
  return result;
}

void save_scorer(const std::filesystem::path& path, const ScorerParams& params) {
  auto tensors = named_tensors(params);
  Eigen::MatrixXd meta(1, 4);
  meta << static_cast<double>(params.input_dim), static_cast<double>(params.hidden_dim),
      static_cast<double>(params.seed >> 32), static_cast<double>(params.seed & 0xffffffffULL);
  tensors.insert(tensors.begin(), {"meta", meta});
  save_tensors(path, tensors);
}

ScorerParams load_scorer(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  if (tensors.empty() || tensors.front().name != "meta" || tensors.front().value.size() != 4) {
    throw ParseError(path.string(), 0, "scorer checkpoint lacks a meta tensor");
  }
  const auto& meta = tensors.front().value;
  const auto seed = (static_cast<std::uint64_t>(meta(0, 2)) << 32) | static_cast<std::uint64_t>(meta(0, 3));
  ScorerParams params = init_scorer(static_cast<std::size_t>(meta(0, 0)), static_cast<std::size_t>(meta(0, 1)), seed);
  std::size_t next = 1;
  params.for_each_tensor([&](const std::string& name, Eigen::MatrixXd& t) {
    if (next >= tensors.size() || tensors[next].name != name) {
      throw ParseError(path.string(), 0, "expected tensor '" + name + "'");
    }
    if (tensors[next].value.rows() != t.rows() || tensors[next].value.cols() != t.cols()) {
      throw ParseError(path.string(), 0, "tensor '" + name + "' has the wrong shape");
    }
    t = tensors[next++].value;
  });
  if (next != tensors.size()) throw ParseError(path.string(), 0, "unexpected trailing tensors");
  return params;
}

}  // namespace ahgc
